"""Time grids, paired Brownian driver paths and the discrete integral rules.

Two independent Brownian drivers live here: W drives the forward/martingale
side (integrands evaluated at left endpoints) and B drives the backward side
(integrands evaluated at right endpoints).  Everything downstream consumes
the increment matrices built by :func:`sample_driver_paths`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import counterstream
from .errors import ConfigurationError, ResourceError
from .parallel import thread_map


@dataclass(frozen=True)
class TimeGrid:
    """Discretization nodes of [0, T]."""

    horizon: float
    step_count: int
    nodes: np.ndarray

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def dt(self) -> float:
        """Uniform spacing; only meaningful for uniform grids."""
        return self.horizon / self.step_count


def make_grid(horizon: float, step_count: int, nodes=None) -> TimeGrid:
    """Uniform grid by default; explicit nodes accepted if strictly increasing."""
    if not np.isfinite(horizon) or horizon <= 0.0:
        raise ConfigurationError(f"horizon must be a positive real, got {horizon}")
    if int(step_count) != step_count or step_count < 1:
        raise ConfigurationError(f"step_count must be >= 1, got {step_count}")
    step_count = int(step_count)
    if nodes is None:
        nodes = np.linspace(0.0, horizon, step_count + 1)
    else:
        nodes = np.asarray(nodes, dtype=float)
        if nodes.shape != (step_count + 1,):
            raise ConfigurationError("nodes must have step_count + 1 entries")
        if nodes[0] != 0.0 or not np.isclose(nodes[-1], horizon):
            raise ConfigurationError("nodes must start at 0 and end at the horizon")
        if np.any(np.diff(nodes) <= 0.0):
            raise ConfigurationError("nodes must be strictly increasing")
    nodes.setflags(write=False)
    return TimeGrid(horizon=float(horizon), step_count=step_count, nodes=nodes)


@dataclass(frozen=True)
class RngSpec:
    """Master seed plus the substream layout rule.

    Substream addressing: one counter-based stream per (driver, path, step);
    driver W uses stream tag 0 and driver B tag 1.  Identical seeds
    reproduce identical increments regardless of generation order or the
    number of workers filling the matrices.
    """

    master_seed: int

    def __post_init__(self):
        if not (0 <= self.master_seed < 2 ** 64):
            raise ConfigurationError("master_seed must fit in 64 unsigned bits")

    def normal_block(self, stream: int, path_lo: int, path_hi: int, step_count: int) -> np.ndarray:
        """Standard normals for paths [path_lo, path_hi), all steps."""
        rows = np.arange(path_lo, path_hi, dtype=np.uint64)[:, None]
        cols = np.arange(step_count, dtype=np.uint64)[None, :]
        return counterstream.standard_normals(self.master_seed, stream, rows, cols)


@dataclass
class DriverPaths:
    """Paired increment matrices of the two independent drivers."""

    grid: TimeGrid
    rng: RngSpec
    dw: np.ndarray  # (w_count, N) forward-driver increments
    db: np.ndarray  # (b_count, N) backward-driver increments

    _w_values: np.ndarray | None = field(default=None, repr=False)
    _b_values: np.ndarray | None = field(default=None, repr=False)

    @property
    def w_count(self) -> int:
        return self.dw.shape[0]

    @property
    def b_count(self) -> int:
        return self.db.shape[0]

    def w_values(self) -> np.ndarray:
        """Cumulative W paths, (w_count, N+1), starting at 0."""
        if self._w_values is None:
            self._w_values = _cumulative(self.dw)
        return self._w_values

    def b_values(self) -> np.ndarray:
        """Cumulative B paths, (b_count, N+1), starting at 0."""
        if self._b_values is None:
            self._b_values = _cumulative(self.db)
        return self._b_values


def _cumulative(increments: np.ndarray) -> np.ndarray:
    out = np.zeros((increments.shape[0], increments.shape[1] + 1))
    np.cumsum(increments, axis=1, out=out[:, 1:])
    return out


def sample_driver_paths(grid: TimeGrid, w_count: int, b_count: int, rng: RngSpec,
                        threads: int = 1) -> DriverPaths:
    """Draw the paired W/B increment matrices.

    Output is a pure function of (grid, counts, rng); the worker partition
    only decides which block each thread fills.
    """
    if w_count < 1 or b_count < 1:
        raise ConfigurationError("path counts must be >= 1")
    scale = np.sqrt(grid.deltas)

    def fill(matrix: np.ndarray, stream: int, count: int) -> None:
        block = max(256, -(-count // max(threads, 1)))
        starts = range(0, count, block)

        def one(lo):
            hi = min(lo + block, count)
            return lo, hi, rng.normal_block(stream, lo, hi, grid.step_count)

        for lo, hi, chunk in thread_map(one, starts, threads):
            matrix[lo:hi] = chunk * scale

    try:
        dw = np.empty((w_count, grid.step_count))
        db = np.empty((b_count, grid.step_count))
    except MemoryError as exc:  # pragma: no cover - depends on host limits
        raise ResourceError(f"cannot allocate {w_count}+{b_count} paths of "
                            f"{grid.step_count} steps") from exc
    fill(dw, counterstream.STREAM_W, w_count)
    fill(db, counterstream.STREAM_B, b_count)
    return DriverPaths(grid=grid, rng=rng, dw=dw, db=db)


def coarsen_paths(paths: DriverPaths, factor: int) -> DriverPaths:
    """Aggregate increments onto a grid with factor-fewer steps.

    Used for refinement studies with common random numbers: the coarse
    increments are the exact block sums of the fine ones.
    """
    n = paths.grid.step_count
    if factor < 1 or n % factor != 0:
        raise ConfigurationError(f"factor {factor} must divide step_count {n}")
    coarse = make_grid(paths.grid.horizon, n // factor,
                       nodes=paths.grid.nodes[::factor])
    dw = paths.dw.reshape(paths.w_count, n // factor, factor).sum(axis=2)
    db = paths.db.reshape(paths.b_count, n // factor, factor).sum(axis=2)
    return DriverPaths(grid=coarse, rng=paths.rng, dw=dw, db=db)


def forward_ito_sum(path_values: np.ndarray, integrand: np.ndarray):
    """Left-endpoint Itô sum:  sum_i integrand[i] * (path[i+1] - path[i]).

    ``integrand`` holds one value per step, evaluated at the left node.
    Works on single paths (1-d) or stacked paths (2-d, paths along axis 0).
    """
    path_values = np.asarray(path_values, dtype=float)
    integrand = np.asarray(integrand, dtype=float)
    steps = path_values.shape[-1] - 1
    if integrand.shape[-1] != steps:
        raise ConfigurationError(
            f"integrand has {integrand.shape[-1]} values for {steps} steps")
    increments = np.diff(path_values, axis=-1)
    return np.sum(integrand * increments, axis=-1)


def backward_ito_sum(path_values: np.ndarray, integrand: np.ndarray):
    """Right-endpoint (backward Itô) sum over the same increments.

    ``integrand`` holds one value per step, understood as the integrand
    evaluated at the right node of each step — the mirror of the forward
    rule, matching integrands adapted to the driver's future.
    """
    path_values = np.asarray(path_values, dtype=float)
    integrand = np.asarray(integrand, dtype=float)
    steps = path_values.shape[-1] - 1
    if integrand.shape[-1] != steps:
        raise ConfigurationError(
            f"integrand has {integrand.shape[-1]} values for {steps} steps")
    increments = np.diff(path_values, axis=-1)
    return np.sum(integrand * increments, axis=-1)


def time_quadrature(grid: TimeGrid, integrand: np.ndarray, start: int = 0,
                    stop: int | None = None):
    """Left-Riemann time integral of per-node values over [start, stop]."""
    integrand = np.asarray(integrand, dtype=float)
    stop = grid.step_count if stop is None else stop
    if not (0 <= start <= stop <= grid.step_count):
        raise ConfigurationError(f"bad index range [{start}, {stop}] for "
                                 f"{grid.step_count} steps")
    if integrand.shape[-1] != grid.step_count + 1:
        raise ConfigurationError("integrand must hold one value per node")
    if start == stop:
        return np.zeros(integrand.shape[:-1]) if integrand.ndim > 1 else 0.0
    deltas = grid.deltas[start:stop]
    return np.sum(integrand[..., start:stop] * deltas, axis=-1)
