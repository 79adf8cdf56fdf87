"""Exact machinery for linear backward equations.

A linear problem is described by per-node coefficient paths: a y-coefficient
(entering the time integral), a z-coefficient (entering the forward
stochastic integral), a backward-noise coefficient (entering the backward
integral), a deterministic forcing and a deterministic finite-variation
path.  The pathwise exponential factor turns such a problem into explicit
conditional expectations, estimated here by freezing each backward path and
averaging over the forward ones — the faithful discrete analogue of
conditioning on the forward past joined with the backward future.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import AssumptionCard, NoiseLoadingSpec
from .drivers import DriverPaths
from .errors import ConfigurationError, SimulationAbort


@dataclass
class LinearProblem:
    """Per-node data of a linear backward equation.

    All coefficient arrays hold one value per grid node.  Forward-integral
    coefficients are read at left endpoints, backward ones at right
    endpoints.  ``drift_path`` is the deterministic finite-variation term
    (piecewise linear between nodes); ``terminal`` is a scalar or one value
    per forward path.
    """

    y_coeff: np.ndarray
    z_coeff: np.ndarray
    loading_coeff: np.ndarray
    forcing: np.ndarray
    drift_path: np.ndarray
    terminal: float | np.ndarray
    y_bound: float = np.inf       # declared bound on |y_coeff| and |z_coeff|
    loading_bound: float = np.inf  # declared bound on |loading_coeff|

    @classmethod
    def from_constants(cls, grid, y_coeff=0.0, z_coeff=0.0, loading_coeff=0.0,
                       forcing=0.0, terminal=0.0, y_bound=None,
                       loading_bound=None):
        n = grid.step_count + 1
        return cls(
            y_coeff=np.full(n, float(y_coeff)),
            z_coeff=np.full(n, float(z_coeff)),
            loading_coeff=np.full(n, float(loading_coeff)),
            forcing=np.full(n, float(forcing)),
            drift_path=np.zeros(n),
            terminal=terminal,
            y_bound=abs(y_coeff) if y_bound is None else y_bound,
            loading_bound=abs(loading_coeff) if loading_bound is None
            else loading_bound,
        )

    def validate(self, grid) -> None:
        n = grid.step_count + 1
        for label, arr in (("y_coeff", self.y_coeff), ("z_coeff", self.z_coeff),
                           ("loading_coeff", self.loading_coeff),
                           ("forcing", self.forcing),
                           ("drift_path", self.drift_path)):
            if np.asarray(arr).shape != (n,):
                raise ConfigurationError(f"{label} must hold one value per node")
        if np.max(np.abs(self.y_coeff)) > self.y_bound + 1e-12:
            raise ConfigurationError("y_coeff exceeds its declared bound")
        if np.max(np.abs(self.z_coeff)) > self.y_bound + 1e-12:
            raise ConfigurationError("z_coeff exceeds its declared bound")
        if np.max(np.abs(self.loading_coeff)) > self.loading_bound + 1e-12:
            raise ConfigurationError("loading_coeff exceeds its declared bound")

    def terminal_per_path(self, w_count: int) -> np.ndarray:
        values = np.asarray(self.terminal, dtype=float)
        if values.ndim == 0:
            values = np.full(w_count, float(values))
        if values.shape != (w_count,):
            raise ConfigurationError("terminal must be scalar or one value per "
                                     "forward path")
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise SimulationAbort(f"non-finite terminal value on forward path "
                                  f"{bad[0]}", w_index=int(bad[0]))
        return values


def _exponent_parts(problem: LinearProblem, paths: DriverPaths):
    """Cumulative exponent contributions from node 0.

    Returns (w_part [M_W, N+1], b_part [M_B, N+1], time_part [N+1]) whose
    differences between two node indices give the exponent of the factor
    over that window.  Using cumulative sums makes the factor exactly
    multiplicative over adjacent windows (exponents add).
    """
    grid = paths.grid
    deltas = grid.deltas
    z_left = problem.z_coeff[:-1]
    load_right = problem.loading_coeff[1:]
    y_left = problem.y_coeff[:-1]

    w_steps = z_left * paths.dw - 0.5 * z_left ** 2 * deltas
    b_steps = load_right * paths.db - 0.5 * load_right ** 2 * deltas
    t_steps = y_left * deltas

    w_part = np.zeros((paths.w_count, grid.step_count + 1))
    np.cumsum(w_steps, axis=1, out=w_part[:, 1:])
    b_part = np.zeros((paths.b_count, grid.step_count + 1))
    np.cumsum(b_steps, axis=1, out=b_part[:, 1:])
    t_part = np.zeros(grid.step_count + 1)
    np.cumsum(t_steps, out=t_part[1:])
    return w_part, b_part, t_part


@dataclass
class QFactor:
    """Pathwise exponential factor over one node window, per (B, W) path."""

    values: np.ndarray  # (b_count, w_count)
    t_index: int
    s_index: int


def q_factor(problem: LinearProblem, paths: DriverPaths, t_index: int,
             s_index: int) -> QFactor:
    """Exponential factor between two nodes, per (backward, forward) path."""
    if not (0 <= t_index <= s_index <= paths.grid.step_count):
        raise ConfigurationError(f"need 0 <= t <= s <= N, got ({t_index}, {s_index})")
    problem.validate(paths.grid)
    w_part, b_part, t_part = _exponent_parts(problem, paths)
    exponent = (b_part[:, s_index] - b_part[:, t_index])[:, None] \
        + (w_part[:, s_index] - w_part[:, t_index])[None, :] \
        + (t_part[s_index] - t_part[t_index])
    return QFactor(values=np.exp(exponent), t_index=t_index, s_index=s_index)


@dataclass
class QBoundReport:
    """Frozen-backward-path conditional means against the declared band."""

    t_index: int
    s_index: int
    lower: float
    upper: float
    per_b_mean: np.ndarray
    per_b_se: np.ndarray
    inside_fraction: float
    pooled_mean: float
    pooled_se: float
    seed: int = 0

    def passed(self, fraction_threshold: float = 0.99) -> bool:
        return self.inside_fraction >= fraction_threshold


def q_conditional_bounds_check(problem: LinearProblem, paths: DriverPaths,
                               t_index: int, s_index: int,
                               card: AssumptionCard) -> QBoundReport:
    """Estimate the conditional mean of the factor per frozen backward path
    and report how many estimates sit inside the declared exponential band
    (widened by three standard errors on each side)."""
    q = q_factor(problem, paths, t_index, s_index)
    span = paths.grid.nodes[s_index] - paths.grid.nodes[t_index]
    rate = card.driver_lip + card.loading_y_coeff
    lower, upper = np.exp(-rate * span), np.exp(rate * span)
    per_b = q.values.mean(axis=1)
    per_b_se = q.values.std(axis=1, ddof=1) / np.sqrt(paths.w_count) \
        if paths.w_count > 1 else np.zeros_like(per_b)
    inside = (per_b >= lower - 3.0 * per_b_se) & (per_b <= upper + 3.0 * per_b_se)
    col_mean = q.values.mean(axis=0)
    w_se = col_mean.std(ddof=1) / np.sqrt(paths.w_count) if paths.w_count > 1 else 0.0
    b_se = per_b.std(ddof=1) / np.sqrt(paths.b_count) if paths.b_count > 1 else 0.0
    return QBoundReport(
        t_index=t_index, s_index=s_index, lower=float(lower), upper=float(upper),
        per_b_mean=per_b, per_b_se=per_b_se,
        inside_fraction=float(np.mean(inside)),
        pooled_mean=float(per_b.mean()),
        pooled_se=float(np.hypot(b_se, w_se)),
        seed=paths.rng.master_seed)


@dataclass
class LinearSolution:
    """Per-backward-path solution estimates at one node."""

    t_index: int
    per_b: np.ndarray
    per_b_se: np.ndarray
    pooled_mean: float
    pooled_se: float
    seed: int = 0


def explicit_linear_solution(problem: LinearProblem, paths: DriverPaths,
                             t_index: int = 0) -> LinearSolution:
    """Solution of the linear equation via the exponential-factor formula.

    For each frozen backward path the estimate averages, over forward paths,
    the factor-weighted terminal minus the factor-weighted finite-variation
    increments plus the factor-weighted forcing integral.
    """
    grid = paths.grid
    n = grid.step_count
    if not (0 <= t_index <= n):
        raise ConfigurationError(f"t_index {t_index} out of range")
    problem.validate(grid)
    terminal = problem.terminal_per_path(paths.w_count)
    w_part, b_part, t_part = _exponent_parts(problem, paths)

    # Per-forward-path rollup weights: one column per node s >= t_index,
    # combining terminal, forcing (left rule) and drift-path increments.
    w_fac = np.exp(w_part - w_part[:, t_index][:, None])      # (M_W, N+1)
    t_fac = np.exp(t_part - t_part[t_index])                  # (N+1,)
    weights = np.zeros((paths.w_count, n + 1))
    weights[:, n] = w_fac[:, n] * t_fac[n] * terminal
    deltas = grid.deltas
    dv = np.diff(problem.drift_path)
    for i in range(t_index, n):
        weights[:, i] += w_fac[:, i] * t_fac[i] * (
            problem.forcing[i] * deltas[i] - dv[i])

    b_fac = np.exp(b_part - b_part[:, t_index][:, None])      # (M_B, N+1)
    samples = b_fac @ weights.T                               # (M_B, M_W)
    per_b = samples.mean(axis=1)
    per_b_se = samples.std(axis=1, ddof=1) / np.sqrt(paths.w_count) \
        if paths.w_count > 1 else np.zeros_like(per_b)
    col_mean = samples.mean(axis=0)
    w_se = col_mean.std(ddof=1) / np.sqrt(paths.w_count) if paths.w_count > 1 else 0.0
    b_se = per_b.std(ddof=1) / np.sqrt(paths.b_count) if paths.b_count > 1 else 0.0
    return LinearSolution(t_index=t_index, per_b=per_b, per_b_se=per_b_se,
                          pooled_mean=float(per_b.mean()),
                          pooled_se=float(np.hypot(b_se, w_se)),
                          seed=paths.rng.master_seed)


def bounding_envelope(x: float, sign: int, loading: NoiseLoadingSpec,
                      card: AssumptionCard, paths: DriverPaths, growth,
                      start_index: int = 0, eps0: float | None = None) -> np.ndarray:
    """Deterministic-times-exponential envelope per backward path.

    Returns growth(x) * eps0 * exp(sign * L * (T - t) + backward noise
    integral - half its quadratic compensator), with L the declared driver
    Lipschitz bound.  Requires a spatially constant loading; eps0 defaults
    to half the declared tail ratio and must stay below it.
    """
    if sign not in (+1, -1):
        raise ConfigurationError("sign must be +1 or -1")
    if not loading.spatially_constant:
        raise ConfigurationError("envelope requires a spatially constant loading")
    if card.tail_ratio is None or card.tail_ratio <= 0:
        raise ConfigurationError("card must declare a positive tail_ratio")
    eps0 = card.tail_ratio / 2.0 if eps0 is None else eps0
    if not (0.0 < eps0 < card.tail_ratio):
        raise ConfigurationError("eps0 must lie strictly between 0 and the "
                                 "declared tail_ratio")
    grid = paths.grid
    nodes = grid.nodes
    a_nodes = np.asarray([float(loading(t, None)) for t in nodes])
    deltas = grid.deltas[start_index:]
    a_right = a_nodes[start_index + 1:]
    noise = paths.db[:, start_index:] @ a_right
    compensator = 0.5 * float(np.sum(a_right ** 2 * deltas))
    span = grid.horizon - nodes[start_index]
    exponent = sign * card.driver_lip * span + noise - compensator
    return growth(x) * eps0 * np.exp(exponent)
