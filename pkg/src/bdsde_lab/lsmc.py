"""Backward induction with regression-estimated conditional expectations.

Each backward-driver path is frozen and treated as data: conditional
expectations given the forward past joined with the backward future reduce,
in the Markovian case, to cross-sectional regressions on the forward state,
run separately per frozen backward path.  The same backward sweep serves
plain backward equations, the coupled forward-backward system, and the
space-time field assembly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .coefficients import (
    DriverSpec, ForwardSpec, NoiseLoadingSpec, TerminalFamily,
    TERMINAL_DETERMINISTIC, TERMINAL_DRIVER_COMPOSITE, TERMINAL_FORWARD_COMPOSITE,
)
from .drivers import DriverPaths, TimeGrid
from .errors import ConfigurationError, SimulationAbort, StabilityWarning
from .parallel import thread_map


@dataclass
class ForwardPaths:
    """Simulated forward state; frozen at the start value before start_index."""

    start_index: int
    start_value: float
    values: np.ndarray  # (w_count, N+1)


def euler_forward(grid: TimeGrid, paths: DriverPaths, forward: ForwardSpec,
                  t_index: int, x: float) -> ForwardPaths:
    """Euler scheme for the forward state from node t_index onwards."""
    if not (0 <= t_index <= grid.step_count):
        raise ConfigurationError(f"t_index {t_index} out of range")
    values = np.empty((paths.w_count, grid.step_count + 1))
    values[:, :t_index + 1] = x
    deltas = grid.deltas
    for i in range(t_index, grid.step_count):
        state = values[:, i]
        nxt = state + np.asarray(forward.drift(state), dtype=float) * deltas[i] \
            + np.asarray(forward.diffusion(state), dtype=float) * paths.dw[:, i]
        if not np.all(np.isfinite(nxt)):
            w_bad = int(np.flatnonzero(~np.isfinite(nxt))[0])
            raise SimulationAbort(
                f"forward state non-finite at path {w_bad}, node {i + 1}",
                w_index=w_bad, node=i + 1)
        values[:, i + 1] = nxt
    return ForwardPaths(start_index=t_index, start_value=float(x), values=values)


@dataclass(frozen=True)
class RegressionBasis:
    """Polynomial basis in the standardized, quantile-clipped state."""

    degree: int = 3
    clip_lo: float = 0.01
    clip_hi: float = 0.99

    def __post_init__(self):
        if self.degree < 0:
            raise ConfigurationError("degree must be >= 0")
        if not (0.0 <= self.clip_lo < self.clip_hi <= 1.0):
            raise ConfigurationError("clip quantiles must satisfy 0 <= lo < hi <= 1")


@dataclass
class RegressionFit:
    """Fitted conditional-expectation function; callable on new states."""

    coeffs: np.ndarray
    center: float
    scale: float
    lo: float
    hi: float
    degree_used: int

    def __call__(self, states):
        z = (np.clip(np.asarray(states, dtype=float), self.lo, self.hi)
             - self.center) / self.scale
        return np.polynomial.polynomial.polyval(z, self.coeffs)


class _NodeRegressor:
    """Orthonormalized design at one node, reused across backward paths."""

    def __init__(self, states: np.ndarray, basis: RegressionBasis):
        states = np.asarray(states, dtype=float)
        self.lo = float(np.quantile(states, basis.clip_lo))
        self.hi = float(np.quantile(states, basis.clip_hi))
        clipped = np.clip(states, self.lo, self.hi)
        self.center = float(clipped.mean())
        scale = float(clipped.std())
        self.scale = scale if scale > 0.0 else 1.0
        z = (clipped - self.center) / self.scale
        degree = basis.degree
        while degree > 0:
            design = np.polynomial.polynomial.polyvander(z, degree)
            q, r = np.linalg.qr(design)
            diag = np.abs(np.diag(r))
            if np.min(diag) > 1e-10 * max(np.max(diag), 1e-300):
                break
            degree -= 1
        if degree == 0:
            design = np.ones((states.size, 1))
            q, r = np.linalg.qr(design)
        self.q = q
        self.r = r
        self.degree_used = degree

    def fit_rows(self, targets: np.ndarray) -> np.ndarray:
        """Least-squares fitted values for each row of targets (rows are
        independent regressions sharing this design)."""
        return (targets @ self.q) @ self.q.T

    def fit(self, targets: np.ndarray) -> RegressionFit:
        beta = np.linalg.solve(self.r, self.q.T @ targets)
        return RegressionFit(coeffs=beta, center=self.center, scale=self.scale,
                             lo=self.lo, hi=self.hi, degree_used=self.degree_used)


def regress_conditional(targets, states, basis: RegressionBasis | None = None):
    """Project targets on the polynomial basis in the state.

    Returns (fit, fitted_values).  Rank deficiency reduces the degree and is
    recorded on the fit; it never fails.  Outside the clip quantiles the
    fitted function is frozen at the boundary value.
    """
    basis = basis or RegressionBasis()
    targets = np.asarray(targets, dtype=float)
    states = np.asarray(states, dtype=float)
    if targets.shape != states.shape or targets.ndim != 1:
        raise ConfigurationError("targets and states must be equal-length vectors")
    if states.size < 1:
        raise ConfigurationError("need at least one sample")
    reg = _NodeRegressor(states, basis)
    fit = reg.fit(targets)
    return fit, reg.fit_rows(targets[None, :])[0]


@dataclass(frozen=True)
class SchemeConfig:
    """Explicit one-step scheme with increment-projection z estimates."""

    basis: RegressionBasis = field(default_factory=RegressionBasis)
    store_paths: bool = True


@dataclass
class BackwardSolution:
    """Per-node, per-path estimates of the solution pair.

    ``y`` has shape (b_count, w_eff, N+1) where w_eff is 1 when the problem
    carries no forward randomness (deterministic terminal, no forward leg)
    and the sweep collapses to per-backward-path recursions.  Pathwise
    standard errors come from a non-projected rollup of the same sweep.
    """

    grid: TimeGrid
    start_index: int
    w_degenerate: bool
    y: np.ndarray
    z: np.ndarray | None
    per_b_mean: np.ndarray   # (b_count, N+1)
    per_b_se: np.ndarray     # (b_count, N+1)
    w_side_se: np.ndarray    # (N+1,) cross-b-averaged forward-side error
    z_per_b_mean: np.ndarray  # (b_count, N)
    degree_used: np.ndarray  # (N,) polynomial degree retained per node
    seed: int = 0

    @property
    def b_count(self) -> int:
        return self.per_b_mean.shape[0]

    def terminal_values(self) -> np.ndarray:
        return self.y[0, :, -1]

    def pooled_mean(self, node: int) -> float:
        return float(self.per_b_mean[:, node].mean())

    def pooled_se(self, node: int) -> float:
        b_se = self.per_b_mean[:, node].std(ddof=1) / np.sqrt(self.b_count) \
            if self.b_count > 1 else 0.0
        return float(np.hypot(b_se, self.w_side_se[node]))


def _terminal_values(terminal, x, paths: DriverPaths,
                     forward_paths: ForwardPaths | None):
    """Terminal samples per forward path plus a degeneracy flag."""
    if isinstance(terminal, TerminalFamily):
        if terminal.kind == TERMINAL_DETERMINISTIC:
            return float(terminal.psi(x)), True
        if terminal.kind == TERMINAL_DRIVER_COMPOSITE:
            w_terminal = paths.w_values()[:, -1]
            return np.asarray(terminal.psi(x, w_terminal), dtype=float), False
        if forward_paths is None:
            raise ConfigurationError("forward-composite terminal needs forward paths")
        return np.asarray(terminal.psi(forward_paths.values[:, -1]),
                          dtype=float), False
    values = np.asarray(terminal, dtype=float)
    if values.ndim == 0:
        return float(values), True
    return values, False


def solve_bdsde_lsmc(grid: TimeGrid, paths: DriverPaths, driver: DriverSpec,
                     loading: NoiseLoadingSpec, terminal, x: float = 0.0,
                     forward: ForwardSpec | None = None,
                     scheme: SchemeConfig | None = None,
                     start_index: int = 0) -> BackwardSolution:
    """Backward sweep per frozen backward path.

    At each step the backward-noise contribution is applied at the right
    endpoint, the conditional expectation is a regression on the forward
    state, and the driver is added explicitly.  The z estimate projects the
    centered increment product (centering subtracts the fitted conditional
    mean, which changes nothing in expectation but removes the dominant
    noise term, making degenerate problems exact).
    """
    scheme = scheme or SchemeConfig()
    n = grid.step_count
    if not (0 <= start_index <= n):
        raise ConfigurationError(f"start_index {start_index} out of range")
    if driver.card.driver_lip > 0 and grid.dt >= 1.0 / driver.card.driver_lip:
        warnings.warn(
            f"time step {grid.dt:g} is not below 1/driver_lip "
            f"= {1.0 / driver.card.driver_lip:g}; the explicit sweep may be "
            f"unstable", StabilityWarning, stacklevel=2)

    forward_paths = None
    if forward is not None:
        forward_paths = euler_forward(grid, paths, forward, start_index, x)
    xi, deterministic_terminal = _terminal_values(terminal, x, paths, forward_paths)
    degenerate = deterministic_terminal and forward_paths is None

    if degenerate:
        return _solve_degenerate(grid, paths, driver, loading, float(xi),
                                 start_index)

    if forward_paths is not None:
        states = forward_paths.values
    else:
        # Driver-composite terminal without a forward leg: the forward
        # driver itself is the Markov state.
        states = paths.w_values() + x

    xi = np.broadcast_to(np.asarray(xi, dtype=float), (paths.w_count,))
    bad = np.flatnonzero(~np.isfinite(xi))
    if bad.size:
        raise SimulationAbort(f"non-finite terminal value on forward path "
                              f"{bad[0]}", w_index=int(bad[0]), node=n)

    m_b, m_w = paths.b_count, paths.w_count
    y = np.empty((m_b, m_w, n + 1))
    y[:, :, start_index:] = 0.0
    y[:, :, n] = xi[None, :]
    z = np.zeros((m_b, m_w, n)) if scheme.store_paths else None
    per_b_mean = np.zeros((m_b, n + 1))
    per_b_se = np.zeros((m_b, n + 1))
    w_side_se = np.zeros(n + 1)
    z_per_b_mean = np.zeros((m_b, n))
    degree_used = np.zeros(n, dtype=int)

    per_b_mean[:, n] = xi.mean()
    rollup = np.broadcast_to(xi, (m_b, m_w)).copy()
    per_b_se[:, n] = rollup.std(axis=1, ddof=1) / np.sqrt(m_w) if m_w > 1 else 0.0
    w_side_se[n] = rollup.mean(axis=0).std(ddof=1) / np.sqrt(m_w) if m_w > 1 else 0.0

    deltas = grid.deltas
    nodes = grid.nodes
    y_next = np.broadcast_to(xi, (m_b, m_w)).copy()
    for i in range(n - 1, start_index - 1, -1):
        state_right = states[:, i + 1]
        a_right = np.broadcast_to(
            np.asarray(loading(nodes[i + 1], state_right), dtype=float), (m_w,))
        gain = a_right[None, :] * y_next * paths.db[:, i][:, None]
        targets = y_next + gain
        reg = _NodeRegressor(states[:, i], scheme.basis)
        degree_used[i] = reg.degree_used
        y_tilde = reg.fit_rows(targets)
        z_now = reg.fit_rows((targets - y_tilde) * paths.dw[:, i][None, :]) / deltas[i]
        f_vals = np.asarray(
            driver(nodes[i], states[:, i][None, :], y_tilde, z_now), dtype=float)
        y_now = y_tilde + f_vals * deltas[i]
        if not np.all(np.isfinite(y_now)):
            b_bad, w_bad = np.argwhere(~np.isfinite(y_now))[0]
            raise SimulationAbort(
                f"non-finite estimate at backward path {b_bad}, node {i}",
                b_index=int(b_bad), w_index=int(w_bad), node=i)
        y[:, :, i] = y_now
        if z is not None:
            z[:, :, i] = z_now
        z_per_b_mean[:, i] = z_now.mean(axis=1)
        # Non-projected rollup: same dynamics, driver read at fitted values.
        rollup = rollup * (1.0 + a_right[None, :] * paths.db[:, i][:, None]) \
            + f_vals * deltas[i]
        per_b_mean[:, i] = y_now.mean(axis=1)
        per_b_se[:, i] = rollup.std(axis=1, ddof=1) / np.sqrt(m_w) if m_w > 1 else 0.0
        w_side_se[i] = rollup.mean(axis=0).std(ddof=1) / np.sqrt(m_w) \
            if m_w > 1 else 0.0
        y_next = y_now

    y[:, :, :start_index] = y[:, :, start_index][:, :, None]
    per_b_mean[:, :start_index] = per_b_mean[:, start_index][:, None]
    per_b_se[:, :start_index] = per_b_se[:, start_index][:, None]
    w_side_se[:start_index] = w_side_se[start_index]
    if not scheme.store_paths:
        y = y[:, :, start_index][:, :, None]
    return BackwardSolution(grid=grid, start_index=start_index, w_degenerate=False,
                            y=y, z=z, per_b_mean=per_b_mean, per_b_se=per_b_se,
                            w_side_se=w_side_se, z_per_b_mean=z_per_b_mean,
                            degree_used=degree_used, seed=paths.rng.master_seed)


def _solve_degenerate(grid: TimeGrid, paths: DriverPaths, driver: DriverSpec,
                      loading: NoiseLoadingSpec, xi: float,
                      start_index: int) -> BackwardSolution:
    """Collapsed sweep when the problem carries no forward randomness.

    The regression basis degenerates to constants over identical samples,
    and the centered z estimate is exactly zero, so the per-backward-path
    recursion below is the exact value of the full sweep with one forward
    path's worth of storage.
    """
    if not np.isfinite(xi):
        raise SimulationAbort("non-finite terminal value", node=grid.step_count)
    n = grid.step_count
    m_b = paths.b_count
    y = np.zeros((m_b, 1, n + 1))
    y[:, 0, n] = xi
    nodes = grid.nodes
    deltas = grid.deltas
    zeros = np.zeros(m_b)
    for i in range(n - 1, start_index - 1, -1):
        a_right = float(loading(nodes[i + 1], None))
        y_tilde = y[:, 0, i + 1] * (1.0 + a_right * paths.db[:, i])
        f_vals = np.asarray(driver(nodes[i], None, y_tilde, zeros), dtype=float)
        y_now = y_tilde + f_vals * deltas[i]
        if not np.all(np.isfinite(y_now)):
            b_bad = int(np.flatnonzero(~np.isfinite(y_now))[0])
            raise SimulationAbort(
                f"non-finite estimate at backward path {b_bad}, node {i}",
                b_index=b_bad, node=i)
        y[:, 0, i] = y_now
    y[:, 0, :start_index] = y[:, 0, start_index][:, None]
    per_b_mean = y[:, 0, :].copy()
    return BackwardSolution(grid=grid, start_index=start_index, w_degenerate=True,
                            y=y, z=np.zeros((m_b, 1, n)),
                            per_b_mean=per_b_mean,
                            per_b_se=np.zeros((m_b, n + 1)),
                            w_side_se=np.zeros(n + 1),
                            z_per_b_mean=np.zeros((m_b, n)),
                            degree_used=np.zeros(n, dtype=int),
                            seed=paths.rng.master_seed)


@dataclass
class FieldReport:
    """Estimated space-time field with per-backward-path sections."""

    t_indices: np.ndarray
    t_nodes: np.ndarray
    x_lattice: np.ndarray
    per_b: np.ndarray      # (n_t, n_x, b_count)
    per_b_se: np.ndarray   # (n_t, n_x, b_count)
    pooled: np.ndarray     # (n_t, n_x)
    pooled_se: np.ndarray  # (n_t, n_x)
    seed: int = 0
    config_hash: str = ""


def spde_field(t_indices, x_lattice, driver: DriverSpec,
               loading: NoiseLoadingSpec, forward: ForwardSpec,
               grid: TimeGrid, paths: DriverPaths,
               scheme: SchemeConfig | None = None, threads: int = 1) -> FieldReport:
    """Field values as start-node solutions of the coupled system.

    One shared set of driver paths serves every lattice point (common
    random numbers across space), and each row reuses the same paths
    restricted to [t, T].
    """
    if forward is None:
        raise ConfigurationError("field assembly requires a forward spec")
    scheme = scheme or SchemeConfig(store_paths=False)
    t_indices = np.asarray(t_indices, dtype=int)
    x_lattice = np.asarray(x_lattice, dtype=float)
    terminal = TerminalFamily("field_terminal", TERMINAL_FORWARD_COMPOSITE,
                              psi=forward.terminal_map,
                              monotone=forward.terminal_monotone)
    n_t, n_x = t_indices.size, x_lattice.size
    m_b = paths.b_count
    per_b = np.zeros((n_t, n_x, m_b))
    per_b_se = np.zeros((n_t, n_x, m_b))
    pooled = np.zeros((n_t, n_x))
    pooled_se = np.zeros((n_t, n_x))

    jobs = [(row, col) for row in range(n_t) for col in range(n_x)]

    def solve_point(job):
        row, col = job
        t_idx = int(t_indices[row])
        sol = solve_bdsde_lsmc(grid, paths, driver, loading, terminal,
                               x=float(x_lattice[col]), forward=forward,
                               scheme=scheme, start_index=t_idx)
        return (row, col, sol.per_b_mean[:, t_idx].copy(),
                sol.per_b_se[:, t_idx].copy(), sol.pooled_mean(t_idx),
                sol.pooled_se(t_idx))

    for row, col, b_means, b_ses, mean, se in thread_map(solve_point, jobs, threads):
        per_b[row, col] = b_means
        per_b_se[row, col] = b_ses
        pooled[row, col] = mean
        pooled_se[row, col] = se

    return FieldReport(t_indices=t_indices, t_nodes=grid.nodes[t_indices],
                       x_lattice=x_lattice, per_b=per_b, per_b_se=per_b_se,
                       pooled=pooled, pooled_se=pooled_se,
                       seed=paths.rng.master_seed)
