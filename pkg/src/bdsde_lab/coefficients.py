"""Problem data: drivers, backward-noise loadings, terminal families, forward
coefficients, and the constant cards describing what each instance claims.

Constants are declared by the user, never inferred: the audit samples random
probes and can only falsify a declared card.  Terminal families may read the
forward driver (directly or through a forward state) but never the backward
driver, because at the horizon the backward side carries no information.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import counterstream
from .drivers import TimeGrid
from .errors import ConfigurationError

# Claim tags a card can carry; each tag names the inequality the audit probes.
CLAIM_DRIVER_LIPSCHITZ = "driver_lipschitz"
CLAIM_LOADING_LINEAR = "loading_linear"
CLAIM_ORIGIN_BOUNDED = "origin_bounded"
CLAIM_DRIVER_SIGN = "driver_sign"
CLAIM_TERMINAL_MONOTONE = "terminal_monotone"
CLAIM_TERMINAL_TAIL = "terminal_tail"
CLAIM_MOMENT_EXPONENT = "moment_exponent"
CLAIM_FORWARD_GROWTH = "forward_growth"
CLAIM_TERMINAL_FLOOR = "terminal_floor"

ALL_CLAIMS = frozenset({
    CLAIM_DRIVER_LIPSCHITZ, CLAIM_LOADING_LINEAR, CLAIM_ORIGIN_BOUNDED,
    CLAIM_DRIVER_SIGN, CLAIM_TERMINAL_MONOTONE, CLAIM_TERMINAL_TAIL,
    CLAIM_MOMENT_EXPONENT, CLAIM_FORWARD_GROWTH, CLAIM_TERMINAL_FLOOR,
})


@dataclass(frozen=True)
class AssumptionCard:
    """Declared constants for the assumption set an instance claims.

    driver_lip        Lipschitz bound of the driver in (y, z).
    loading_y_coeff   y-coefficient bound for the backward loading; the
                      loading magnitude must stay below half of it.
    loading_z_coeff   z-coefficient of the loading's mean-square bound
                      (zero here: loadings are z-independent).
    origin_bound      bound on the time integral of |f(t, 0, 0)|.
    neg_quad_coeff    coefficient in the local sign condition
                      y*f(t,x,y,z) >= -coeff*z^2.
    neg_quad_radius   |y|-radius on which the sign condition is claimed.
    holder_coeff/_excess   terminal mean-square continuity constants.
    tail_radius/_ratio     radius and floor of the terminal/growth ratio.
    moment_exponent   negative exponent used by the decay checks.
    growth_coeff      linear-growth bound of the forward coefficients.
    floor_coeff/_power     lower growth bound of the terminal map.
    """

    driver_lip: float = 0.0
    loading_y_coeff: float = 0.0
    loading_z_coeff: float = 0.0
    origin_bound: float | None = None
    neg_quad_coeff: float | None = None
    neg_quad_radius: float = 1.0
    holder_coeff: float | None = None
    holder_excess: float | None = None
    tail_radius: float = 1.0
    tail_ratio: float | None = None
    moment_exponent: float | None = None
    growth_coeff: float | None = None
    floor_coeff: float | None = None
    floor_power: float | None = None
    claims: frozenset = frozenset()

    def __post_init__(self):
        unknown = set(self.claims) - ALL_CLAIMS
        if unknown:
            raise ConfigurationError(f"unknown claims: {sorted(unknown)}")
        if self.driver_lip < 0:
            raise ConfigurationError("driver_lip must be >= 0")
        if CLAIM_LOADING_LINEAR in self.claims:
            if self.loading_y_coeff <= 0:
                raise ConfigurationError("loading_y_coeff must be > 0 when the "
                                         "linear-loading bound is claimed")
            if not (0.0 <= self.loading_z_coeff < 1.0):
                raise ConfigurationError("loading_z_coeff must lie in [0, 1)")
        if CLAIM_DRIVER_SIGN in self.claims:
            if self.neg_quad_coeff is None or self.neg_quad_coeff < 0:
                raise ConfigurationError("neg_quad_coeff must be >= 0 when the "
                                         "sign condition is claimed")
            if self.neg_quad_radius <= 0:
                raise ConfigurationError("neg_quad_radius must be > 0")
        if CLAIM_MOMENT_EXPONENT in self.claims:
            if self.moment_exponent is None:
                raise ConfigurationError("moment_exponent missing")
            ceiling = min(0.5 * (1.0 - 2.0 * (self.neg_quad_coeff or 0.0)), 0.0)
            if not self.moment_exponent < ceiling:
                raise ConfigurationError(
                    f"moment_exponent {self.moment_exponent} must be < {ceiling}")
        if CLAIM_TERMINAL_TAIL in self.claims:
            if self.tail_ratio is None or self.tail_ratio <= 0:
                raise ConfigurationError("tail_ratio must be > 0 when claimed")
            if self.tail_radius <= 0:
                raise ConfigurationError("tail_radius must be > 0")
        if CLAIM_FORWARD_GROWTH in self.claims and (
                self.growth_coeff is None or self.growth_coeff <= 0):
            raise ConfigurationError("growth_coeff must be > 0 when claimed")
        if CLAIM_TERMINAL_FLOOR in self.claims and (
                self.floor_coeff is None or self.floor_coeff <= 0
                or self.floor_power is None or self.floor_power <= 0):
            raise ConfigurationError("floor_coeff and floor_power must be > 0")


@dataclass(frozen=True)
class DriverSpec:
    """Driver f(t, x, y, z); x is ignored unless depends_on_state is set."""

    name: str
    fn: Callable
    card: AssumptionCard
    depends_on_state: bool = False

    def __call__(self, t, x, y, z):
        return self.fn(t, x, y, z)


@dataclass(frozen=True)
class NoiseLoadingSpec:
    """Backward-noise loading a(t) or a(t, x); g(t, x, y) = a(t, x) * y."""

    name: str
    fn: Callable
    spatially_constant: bool = True

    def __call__(self, t, x=None):
        return self.fn(t, x)


TERMINAL_DETERMINISTIC = "deterministic"
TERMINAL_DRIVER_COMPOSITE = "driver_composite"
TERMINAL_FORWARD_COMPOSITE = "forward_composite"


@dataclass(frozen=True)
class TerminalFamily:
    """Terminal data as a function of the real parameter x.

    kind selects the sample dependence: "deterministic" maps x to a number,
    "driver_composite" maps (x, W_T) path by path, "forward_composite"
    applies the forward spec's terminal map to the simulated state at the
    horizon.  None of the forms may read the backward driver.
    """

    name: str
    kind: str
    psi: Callable | None = None
    monotone: int = 0  # +1 increasing, -1 decreasing, 0 unflagged
    growth: Callable | None = None  # comparison scale h(x) for tail checks

    def __post_init__(self):
        if self.kind not in (TERMINAL_DETERMINISTIC, TERMINAL_DRIVER_COMPOSITE,
                             TERMINAL_FORWARD_COMPOSITE):
            raise ConfigurationError(f"unknown terminal kind {self.kind!r}")

    def deterministic_value(self, x):
        if self.kind != TERMINAL_DETERMINISTIC:
            raise ConfigurationError(f"terminal {self.name!r} is not deterministic")
        return float(self.psi(x))

    def growth_scale(self, x):
        if self.growth is None:
            raise ConfigurationError(f"terminal {self.name!r} declares no growth scale")
        return self.growth(x)


def shifted_terminal(family: TerminalFamily, offset: float) -> TerminalFamily:
    """The same family with a constant added to every terminal value."""
    if family.kind == TERMINAL_DETERMINISTIC:
        base = family.psi
        return replace(family, name=f"{family.name}+{offset:g}",
                       psi=lambda x, _b=base, _c=offset: _b(x) + _c)
    if family.kind == TERMINAL_DRIVER_COMPOSITE:
        base = family.psi
        return replace(family, name=f"{family.name}+{offset:g}",
                       psi=lambda x, w, _b=base, _c=offset: _b(x, w) + _c)
    raise ConfigurationError("cannot shift a forward-composite terminal; "
                             "shift the forward terminal map instead")


@dataclass(frozen=True)
class ForwardSpec:
    """Forward coefficients: state drift, state diffusion and terminal map."""

    name: str
    drift: Callable
    diffusion: Callable
    terminal_map: Callable
    card: AssumptionCard
    terminal_monotone: int = 0


# --------------------------------------------------------------------------
# Built-in catalog
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CatalogPreset:
    """A named bundle; unset components fall back to CLI defaults."""

    driver: DriverSpec | None = None
    loading: NoiseLoadingSpec | None = None
    terminal: TerminalFamily | None = None
    forward: ForwardSpec | None = None


def zero_driver(card: AssumptionCard | None = None) -> DriverSpec:
    card = card or AssumptionCard(driver_lip=0.0, origin_bound=0.0,
                                  claims=frozenset({CLAIM_DRIVER_LIPSCHITZ,
                                                    CLAIM_ORIGIN_BOUNDED}))
    return DriverSpec("zero", lambda t, x, y, z: np.zeros_like(np.asarray(y, dtype=float)),
                      card)


def arctan_driver() -> DriverSpec:
    """f(y, z) = y + arctan(y) * (1 + sin z); Lipschitz bound 3, f(0, 0) = 0."""
    card = AssumptionCard(
        driver_lip=3.0, origin_bound=0.0, neg_quad_coeff=0.25,
        neg_quad_radius=1.0, moment_exponent=-0.25,
        tail_radius=1.0, tail_ratio=0.5, loading_y_coeff=0.8,
        claims=frozenset({CLAIM_DRIVER_LIPSCHITZ, CLAIM_ORIGIN_BOUNDED,
                          CLAIM_DRIVER_SIGN, CLAIM_MOMENT_EXPONENT,
                          CLAIM_LOADING_LINEAR, CLAIM_TERMINAL_MONOTONE,
                          CLAIM_TERMINAL_TAIL}))
    return DriverSpec(
        "arctan",
        lambda t, x, y, z: y + np.arctan(y) * (1.0 + np.sin(z)),
        card)


def linear_driver(y_coeff: float, z_coeff: float = 0.0,
                  name: str | None = None) -> DriverSpec:
    lip = max(abs(y_coeff), abs(z_coeff))
    card = AssumptionCard(driver_lip=lip, origin_bound=0.0, loading_y_coeff=0.8,
                          claims=frozenset({CLAIM_DRIVER_LIPSCHITZ,
                                            CLAIM_ORIGIN_BOUNDED,
                                            CLAIM_LOADING_LINEAR}))
    name = name or f"linear({y_coeff:g}y{z_coeff:+g}z)"
    return DriverSpec(name,
                      lambda t, x, y, z, _a=y_coeff, _b=z_coeff: _a * y + _b * z,
                      card)


def zero_loading() -> NoiseLoadingSpec:
    return NoiseLoadingSpec("zero_loading", lambda t, x: 0.0)


def constant_loading(value: float) -> NoiseLoadingSpec:
    return NoiseLoadingSpec(f"const_loading({value:g})",
                            lambda t, x, _v=value: _v)


def identity_terminal() -> TerminalFamily:
    return TerminalFamily("identity", TERMINAL_DETERMINISTIC, psi=lambda x: x,
                          monotone=+1, growth=lambda x: x)


def cubic_terminal() -> TerminalFamily:
    return TerminalFamily("cubic", TERMINAL_DETERMINISTIC, psi=lambda x: x ** 3,
                          monotone=+1, growth=lambda x: x ** 3)


def shift_terminal(offset: float = 1.0) -> TerminalFamily:
    return TerminalFamily(f"shift({offset:g})", TERMINAL_DETERMINISTIC,
                          psi=lambda x, _c=offset: x + _c,
                          monotone=+1, growth=lambda x: x)


def brownian_shift_terminal() -> TerminalFamily:
    """psi(x, W_T) = x + W_T: the simplest forward-driver-measurable family."""
    return TerminalFamily("brownian_shift", TERMINAL_DRIVER_COMPOSITE,
                          psi=lambda x, w: x + w, monotone=+1,
                          growth=lambda x: x)


def geometric_forward(drift_rate: float = 0.05, vol: float = 0.2) -> ForwardSpec:
    card = AssumptionCard(growth_coeff=abs(drift_rate) + abs(vol),
                          floor_coeff=1.0, floor_power=1.0,
                          claims=frozenset({CLAIM_FORWARD_GROWTH,
                                            CLAIM_TERMINAL_FLOOR}))
    return ForwardSpec(f"geometric({drift_rate:g},{vol:g})",
                       drift=lambda x, _m=drift_rate: _m * x,
                       diffusion=lambda x, _s=vol: _s * x,
                       terminal_map=lambda x: x,
                       card=card, terminal_monotone=+1)


def additive_forward(diffusion: float = 1.0, terminal_map=None,
                     terminal_monotone: int = +1,
                     name: str | None = None) -> ForwardSpec:
    """Driftless constant-diffusion state; no linear-growth claim (fails at 0)."""
    card = AssumptionCard(floor_coeff=1.0, floor_power=1.0,
                          claims=frozenset({CLAIM_TERMINAL_FLOOR})
                          if terminal_map is None else frozenset())
    return ForwardSpec(name or f"additive({diffusion:g})",
                       drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                       diffusion=lambda x, _s=diffusion: np.full_like(
                           np.asarray(x, dtype=float), _s),
                       terminal_map=terminal_map or (lambda x: x),
                       card=card, terminal_monotone=terminal_monotone)


def heat_forward() -> ForwardSpec:
    """Diffusion sqrt(2) with squared terminal map: the heat-kernel test case."""
    return additive_forward(diffusion=np.sqrt(2.0), terminal_map=lambda x: x ** 2,
                            terminal_monotone=0, name="heat")


def builtin_catalog() -> dict[str, CatalogPreset]:
    """Named presets addressable from experiment configs."""
    return {
        "zero": CatalogPreset(driver=zero_driver(), loading=zero_loading(),
                              terminal=identity_terminal()),
        "arctan": CatalogPreset(driver=arctan_driver(),
                                loading=constant_loading(0.3),
                                terminal=identity_terminal()),
        "linear_decay": CatalogPreset(driver=linear_driver(-0.5, name="linear_decay"),
                                      loading=constant_loading(0.3),
                                      terminal=identity_terminal()),
        "linear_mixed": CatalogPreset(driver=linear_driver(-0.5, 0.25,
                                                           name="linear_mixed"),
                                      loading=constant_loading(0.3),
                                      terminal=identity_terminal()),
        "identity_terminal": CatalogPreset(terminal=identity_terminal()),
        "cubic_terminal": CatalogPreset(terminal=cubic_terminal()),
        "shift_terminal": CatalogPreset(terminal=shift_terminal(1.0)),
        "brownian_shift_terminal": CatalogPreset(terminal=brownian_shift_terminal()),
        "heat_field": CatalogPreset(driver=zero_driver(), loading=zero_loading(),
                                    forward=heat_forward()),
        "gbm_field": CatalogPreset(driver=zero_driver(), loading=zero_loading(),
                                   forward=geometric_forward()),
        "loading_field": CatalogPreset(driver=zero_driver(),
                                       loading=constant_loading(0.3),
                                       forward=additive_forward()),
    }


# --------------------------------------------------------------------------
# Assumption audit
# --------------------------------------------------------------------------

@dataclass
class AuditEntry:
    claim: str
    declared: float
    observed: float
    passed: bool
    note: str = ""


@dataclass
class AuditReport:
    entries: list
    probe_count: int
    nonfinite_evals: int = 0

    @property
    def passed(self) -> bool:
        return self.nonfinite_evals == 0 and all(e.passed for e in self.entries)

    def entry(self, claim: str) -> AuditEntry:
        for e in self.entries:
            if e.claim == claim:
                return e
        raise KeyError(claim)


def _audit_uniforms(seed: int, probe_count: int, columns: int) -> np.ndarray:
    rows = np.arange(probe_count, dtype=np.uint64)[:, None]
    cols = np.arange(columns, dtype=np.uint64)[None, :]
    return counterstream.uniforms(seed, counterstream.STREAM_AUDIT, rows, cols)


def audit_assumptions(card: AssumptionCard, driver: DriverSpec | None = None,
                      loading: NoiseLoadingSpec | None = None,
                      terminal: TerminalFamily | None = None,
                      forward: ForwardSpec | None = None,
                      grid: TimeGrid | None = None,
                      probe_count: int = 10_000, seed: int = 0,
                      x_range=(-5.0, 5.0), yz_range=(-5.0, 5.0)) -> AuditReport:
    """Probe every claimed inequality on random points; falsify, never prove.

    Reports, per claim, the worst observed ratio against the declared
    constant.  Evaluator failures (non-finite outputs) are counted and fail
    the audit as a whole.
    """
    if probe_count < 1:
        raise ConfigurationError("probe_count must be >= 1")
    horizon = grid.horizon if grid is not None else 1.0
    u = _audit_uniforms(seed, probe_count, 8)
    lo, hi = yz_range
    y1 = lo + (hi - lo) * u[:, 0]
    z1 = lo + (hi - lo) * u[:, 1]
    t = horizon * u[:, 2]
    xs = x_range[0] + (x_range[1] - x_range[0]) * u[:, 3]
    # Perturbations alternate between range-scale and local scale so both
    # global slopes and local difference quotients get probed.
    width = np.where(np.arange(probe_count) % 2 == 0, hi - lo, 1e-3 * (hi - lo))
    dy = (u[:, 4] - 0.5) * width
    dz = (u[:, 5] - 0.5) * width
    group = np.arange(probe_count) % 3
    dy = np.where(group == 1, 0.0, dy)
    dz = np.where(group == 0, 0.0, dz)

    entries: list[AuditEntry] = []
    nonfinite = 0

    def check_finite(values) -> int:
        return int(np.sum(~np.isfinite(np.asarray(values, dtype=float))))

    if driver is not None and CLAIM_DRIVER_LIPSCHITZ in card.claims:
        f1 = np.asarray(driver(t, xs, y1, z1), dtype=float)
        f2 = np.asarray(driver(t, xs, y1 + dy, z1 + dz), dtype=float)
        nonfinite += check_finite(f1) + check_finite(f2)
        denom = np.abs(dy) + np.abs(dz)
        keep = denom > 1e-12
        ratio = np.abs(f1[keep] - f2[keep]) / denom[keep]
        observed = float(np.max(ratio)) if ratio.size else 0.0
        entries.append(AuditEntry(CLAIM_DRIVER_LIPSCHITZ, card.driver_lip, observed,
                                  observed <= card.driver_lip,
                                  "max |df| / (|dy| + |dz|)"))

    if driver is not None and CLAIM_ORIGIN_BOUNDED in card.claims:
        times = grid.nodes if grid is not None else np.linspace(0.0, horizon, 129)
        vals = np.abs(np.asarray(driver(times, np.zeros_like(times),
                                        np.zeros_like(times), np.zeros_like(times)),
                                 dtype=float))
        nonfinite += check_finite(vals)
        integral = float(np.sum(vals[:-1] * np.diff(times)))
        declared = card.origin_bound if card.origin_bound is not None else np.inf
        entries.append(AuditEntry(CLAIM_ORIGIN_BOUNDED, declared, integral,
                                  integral <= declared + 1e-12,
                                  "left-Riemann integral of |f(t,0,0)|"))

    if driver is not None and CLAIM_DRIVER_SIGN in card.claims:
        y_loc = (2.0 * u[:, 6] - 1.0) * card.neg_quad_radius
        z_loc = np.where(group == 2, 0.0, lo + (hi - lo) * u[:, 7])
        fv = np.asarray(driver(t, xs, y_loc, z_loc), dtype=float)
        nonfinite += check_finite(fv)
        product = y_loc * fv
        with_z = np.abs(z_loc) > 1e-12
        ratio = -product[with_z] / z_loc[with_z] ** 2
        observed = float(np.max(ratio)) if ratio.size else 0.0
        zero_z_ok = bool(np.all(product[~with_z] >= -1e-12))
        passed = observed <= card.neg_quad_coeff + 1e-12 and zero_z_ok
        entries.append(AuditEntry(CLAIM_DRIVER_SIGN, card.neg_quad_coeff, observed,
                                  passed, "max (-y*f)/z^2 on the local strip"))

    if loading is not None and CLAIM_LOADING_LINEAR in card.claims:
        a_vals = np.asarray(loading(t, xs), dtype=float)
        a_vals = np.broadcast_to(a_vals, t.shape)
        nonfinite += check_finite(a_vals)
        observed = float(np.max(np.abs(a_vals)))
        entries.append(AuditEntry(CLAIM_LOADING_LINEAR, card.loading_y_coeff / 2.0,
                                  observed, observed < card.loading_y_coeff / 2.0,
                                  "max |a| against half the y-coefficient"))

    if terminal is not None and CLAIM_TERMINAL_MONOTONE in card.claims \
            and terminal.monotone != 0 and terminal.kind != TERMINAL_FORWARD_COMPOSITE:
        x_sorted = np.sort(xs)
        if terminal.kind == TERMINAL_DETERMINISTIC:
            values = np.asarray(terminal.psi(x_sorted), dtype=float)[None, :]
        else:
            w_probes = np.sqrt(horizon) * _gauss_probes(seed, 8)
            values = np.stack([np.asarray(terminal.psi(x_sorted, w), dtype=float)
                               for w in w_probes])
        nonfinite += check_finite(values)
        diffs = np.diff(values, axis=1) * terminal.monotone
        violations = int(np.sum(diffs <= 0.0))
        entries.append(AuditEntry(CLAIM_TERMINAL_MONOTONE, 0.0, float(violations),
                                  violations == 0, "strict order violations"))

    if terminal is not None and CLAIM_TERMINAL_TAIL in card.claims \
            and terminal.growth is not None:
        radius = card.tail_radius
        mag = radius * (1.0 + 9.0 * u[:, 6])
        x_tail = np.where(u[:, 7] < 0.5, -mag, mag)
        if terminal.kind == TERMINAL_DETERMINISTIC:
            xi_vals = np.asarray(terminal.psi(x_tail), dtype=float)
        elif terminal.kind == TERMINAL_DRIVER_COMPOSITE:
            w_tail = np.sqrt(horizon) * _gauss_probes(seed + 1, probe_count)
            xi_vals = np.asarray(terminal.psi(x_tail, w_tail), dtype=float)
        else:
            xi_vals = None
        if xi_vals is not None:
            h_vals = np.asarray(terminal.growth(x_tail), dtype=float)
            nonfinite += check_finite(xi_vals) + check_finite(h_vals)
            ratio = xi_vals / h_vals
            observed = float(np.min(ratio))
            entries.append(AuditEntry(CLAIM_TERMINAL_TAIL, card.tail_ratio, observed,
                                      observed > card.tail_ratio,
                                      "min terminal/growth ratio beyond the radius"))

    if forward is not None and CLAIM_FORWARD_GROWTH in card.claims:
        x_nz = xs[np.abs(xs) > 1e-6]
        b_vals = np.abs(np.asarray(forward.drift(x_nz), dtype=float))
        s_vals = np.abs(np.asarray(forward.diffusion(x_nz), dtype=float))
        nonfinite += check_finite(b_vals) + check_finite(s_vals)
        observed = float(np.max((b_vals + s_vals) / np.abs(x_nz)))
        entries.append(AuditEntry(CLAIM_FORWARD_GROWTH, card.growth_coeff, observed,
                                  observed <= card.growth_coeff + 1e-12,
                                  "max (|b| + |sigma|)/|x|"))

    if forward is not None and CLAIM_TERMINAL_FLOOR in card.claims:
        x_nz = xs[np.abs(xs) > 1e-6]
        h_vals = np.abs(np.asarray(forward.terminal_map(x_nz), dtype=float))
        nonfinite += check_finite(h_vals)
        observed = float(np.min(h_vals / np.abs(x_nz) ** card.floor_power))
        entries.append(AuditEntry(CLAIM_TERMINAL_FLOOR, card.floor_coeff, observed,
                                  observed >= card.floor_coeff - 1e-12,
                                  "min |h(x)| / |x|^power"))

    if CLAIM_MOMENT_EXPONENT in card.claims:
        ceiling = min(0.5 * (1.0 - 2.0 * (card.neg_quad_coeff or 0.0)), 0.0)
        entries.append(AuditEntry(CLAIM_MOMENT_EXPONENT, ceiling,
                                  card.moment_exponent,
                                  card.moment_exponent < ceiling,
                                  "exponent below its admissible ceiling"))

    return AuditReport(entries=entries, probe_count=probe_count,
                       nonfinite_evals=nonfinite)


def _gauss_probes(seed: int, count: int) -> np.ndarray:
    rows = np.arange(count, dtype=np.uint64)
    return counterstream.standard_normals(seed, counterstream.STREAM_AUDIT + 1,
                                          rows, np.uint64(0))
