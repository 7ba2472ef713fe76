"""Limit measures of eigenfunction densities and their numerical probes.

Predicted weak-* limits of |psi|^2 dx come in three regimes: an atom at the
well bottom (E* = E0), an arcsine-type density C (E*-V)^{-1/2} on the
allowed region (E0 < E* < inf), and the uniform density dx/L (E* = inf),
with matching limits for the squared Neumann traces |eps psi'(0)|^2.
Empirical moments along an eps-schedule are compared against these, and a
Husimi transform probes the phase-space concentration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agmon import _panel_integrals
from .eigensolve import (
    Eigenpair,
    Grid,
    TridiagonalOperator,
    assemble,
    eigenpair,
    eigenvalues_in_window,
    sturm_count,
)
from .errors import (
    EnergyBelowGround,
    GroundRegimeHasNoTraceLimit,
    PhaseWindowTooSmall,
)
from .potential import Perturbation, Potential, TurningPoints, turning_points

TOL_SING = 1e-9
DEFAULT_HIGH_ENERGY_FACTOR = 50.0
HUSIMI_TUBE_CALIBRATION = 5.0


# ---------------------------------------------------------------------------
# predicted limit measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureSpec:
    """Predicted limit measure for a target energy E*."""

    regime: str                      # "ground" | "interior" | "highenergy"
    e_star: float                    # +inf in the high-energy regime
    c_star: float | None             # normalization, interior regime only
    potential: Potential
    turning: TurningPoints | None

    def density(self, x: np.ndarray) -> np.ndarray:
        """Interior-regime density C (E*-V)^{-1/2} on (x_-, x_+), else 0."""
        if self.regime != "interior":
            raise ValueError("density is defined for the interior regime only")
        x = np.asarray(x, dtype=float)
        gap = np.maximum(self.e_star - self.potential.v(x), 0.0)
        out = np.zeros_like(x)
        inside = (x > self.turning.x_minus) & (x < self.turning.x_plus) & (gap > 0)
        out[inside] = self.c_star / np.sqrt(gap[inside])
        return out


def _adaptive_gl(f, a: float, b: float, tol: float,
                 order: int = 16, n0: int = 8, max_doublings: int = 9) -> float:
    """Composite Gauss-Legendre with panel doubling until |change| <= tol."""
    if b <= a:
        return 0.0
    prev = None
    n = n0
    val = 0.0
    for _ in range(max_doublings + 1):
        bp = np.linspace(a, b, n + 1)
        val = float(np.sum(_panel_integrals(f, bp, order)))
        if prev is not None and abs(val - prev) <= tol:
            return val
        prev = val
        n *= 2
    return val


def _interior_integral(potential: Potential, e_star: float,
                       tp: TurningPoints, g) -> float:
    """Integral of g(s) / sqrt(E* - V(s)) over (x_-, x_+).

    The substitution s = x_pm -/+ t^2 removes the inverse-square-root blowup
    at the turning points exactly when V'(x_pm) != 0, which the single-well
    assumption guarantees away from E0.  The substitution is harmless when
    an endpoint is clamped (no singularity), so it is applied on both halves
    unconditionally.
    """
    mid = potential.x0

    def left(t):
        s = tp.x_minus + t * t
        gap = e_star - potential.v(s)
        good = gap > 0.0
        out = np.zeros_like(t)
        out[good] = 2.0 * t[good] * g(s[good]) / np.sqrt(gap[good])
        return out

    def right(t):
        s = tp.x_plus - t * t
        gap = e_star - potential.v(s)
        good = gap > 0.0
        out = np.zeros_like(t)
        out[good] = 2.0 * t[good] * g(s[good]) / np.sqrt(gap[good])
        return out

    total = _adaptive_gl(left, 0.0, math.sqrt(max(mid - tp.x_minus, 0.0)),
                         TOL_SING / 4.0)
    total += _adaptive_gl(right, 0.0, math.sqrt(max(tp.x_plus - mid, 0.0)),
                          TOL_SING / 4.0)
    return total


def limit_measure(potential: Potential, e_star: float) -> MeasureSpec:
    """Predicted limit measure for E* (math.inf selects the high-energy one)."""
    if math.isinf(e_star):
        return MeasureSpec("highenergy", math.inf, None, potential, None)
    tol = 4e-12 * max(1.0, abs(e_star))
    if e_star < potential.E0 - tol:
        raise EnergyBelowGround(
            f"E*={e_star!r} below ground energy {potential.E0!r}"
        )
    if e_star <= potential.E0 + tol:
        return MeasureSpec("ground", potential.E0, None, potential, None)
    tp = turning_points(potential, e_star)
    total = _interior_integral(potential, e_star, tp, lambda s: np.ones_like(s))
    return MeasureSpec("interior", e_star, 1.0 / total, potential, tp)


def predicted_moment(spec: MeasureSpec, phi) -> float:
    """Pairing of the predicted measure with a continuous test function."""
    if spec.regime == "ground":
        return float(phi(np.asarray([spec.potential.x0]))[0])
    if spec.regime == "highenergy":
        L = spec.potential.L
        return _adaptive_gl(phi, 0.0, L, TOL_SING / 4.0) / L
    val = _interior_integral(spec.potential, spec.e_star, spec.turning, phi)
    return spec.c_star * val


def predicted_boundary_traces(spec: MeasureSpec,
                              potential: Potential) -> tuple[float, float]:
    """Limits of |eps psi'(0)|^2 and |eps psi'(L)|^2 (E^{-1}-scaled when
    E* = inf)."""
    if spec.regime == "ground":
        raise GroundRegimeHasNoTraceLimit(
            "both boundary points are elliptic at E* = E0; the trace limits "
            "are 0"
        )
    if spec.regime == "highenergy":
        return 2.0 / potential.L, 2.0 / potential.L
    v0 = potential.v_scalar(0.0)
    vL = potential.v_scalar(potential.L)
    t0 = 2.0 * spec.c_star * math.sqrt(spec.e_star - v0) if v0 < spec.e_star else 0.0
    tL = 2.0 * spec.c_star * math.sqrt(spec.e_star - vL) if vL < spec.e_star else 0.0
    return t0, tL


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------

def smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def smoothed_indicator(a: float, b: float, width: float = 0.02):
    """C^1 indicator of [a, b], ramping over width centered on each edge."""

    def phi(x):
        x = np.asarray(x, dtype=float)
        return smoothstep((x - (a - width / 2.0)) / width) * \
            smoothstep(((b + width / 2.0) - x) / width)

    return phi


def default_basket(L: float) -> dict:
    """The fixed test-function dictionary used for weak-* comparisons."""
    return {
        "one": lambda x: np.ones_like(np.asarray(x, dtype=float)),
        "x": lambda x: np.asarray(x, dtype=float),
        "x^2": lambda x: np.asarray(x, dtype=float) ** 2,
        "ind[0.9,1.1]": smoothed_indicator(0.9, 1.1),
        "sin(pi x/L)": lambda x: np.sin(np.pi * np.asarray(x, dtype=float) / L),
    }


# ---------------------------------------------------------------------------
# schedule runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegimeTarget:
    """How E(eps) is chosen along a schedule."""

    kind: str                      # "ground" | "interior" | "highenergy"
    e_star: float = math.inf       # finite target for the interior regime
    e_target: float | None = None  # fixed large energy for the high regime

    @classmethod
    def ground(cls) -> "RegimeTarget":
        return cls("ground", e_star=-math.inf)

    @classmethod
    def interior(cls, e_star: float) -> "RegimeTarget":
        return cls("interior", e_star=e_star)

    @classmethod
    def highenergy(cls, e_target: float) -> "RegimeTarget":
        return cls("highenergy", e_star=math.inf, e_target=e_target)


def auto_grid_n(potential: Potential, eps: float, e_max: float,
                cap: int = 2_000_000) -> int:
    """Auto grid rule n = ceil(20 L sqrt(E_max - E0 + 1) / eps).

    Applied per schedule point; the binding (largest) n is the one at the
    smallest eps.  Keeping eps/h fixed also keeps the tridiagonal stiffness
    4 eps^2/h^2 bounded, so the residual acceptance gate stays reachable.
    """
    n = int(math.ceil(
        20.0 * potential.L * math.sqrt(max(e_max - potential.E0, 0.0) + 1.0)
        / eps
    ))
    n = max(n, 32)
    if n > cap:
        raise ValueError(
            f"auto grid rule asks for n={n} interior points (cap {cap})"
        )
    return n


def select_energy(op: TridiagonalOperator, target: RegimeTarget) -> float:
    """Pick the eigenvalue the regime tracks: k=0 (ground), nearest E*
    (interior), or nearest the fixed large target (high energy)."""
    if target.kind == "ground":
        return float(eigenvalues_in_window(op, count=1)[0])
    if target.kind == "interior":
        width = max(5.0 * op.eps, 1e-3)
        for _ in range(20):
            lo, hi = target.e_star - width, target.e_star + width
            try:
                vals = eigenvalues_in_window(op, window=(lo, hi))
            except Exception:
                width *= 2.0
                continue
            return float(vals[np.argmin(np.abs(vals - target.e_star))])
        raise RuntimeError(f"no eigenvalue found near E*={target.e_star!r}")
    if target.kind == "highenergy":
        e_t = target.e_target
        k = sturm_count(op, e_t)
        lo_i = max(k - 1, 0)
        vals = eigenvalues_in_window(op, count=k + 1)[lo_i:k + 1]
        return float(vals[np.argmin(np.abs(vals - e_t))])
    raise ValueError(f"unknown regime {target.kind!r}")


def spec_for_target(potential: Potential, target: RegimeTarget) -> MeasureSpec:
    if target.kind == "ground":
        return limit_measure(potential, potential.E0)
    if target.kind == "interior":
        return limit_measure(potential, target.e_star)
    return limit_measure(potential, math.inf)


@dataclass(frozen=True)
class MeasureRow:
    eps: float
    E: float
    phi_name: str
    empirical: float
    predicted: float
    abs_err: float


@dataclass(frozen=True)
class TraceRow:
    eps: float
    E: float
    trace0_emp: float
    trace0_pred: float
    traceL_emp: float
    traceL_pred: float


@dataclass
class MeasureReport:
    """Empirical-vs-predicted moments and traces along an eps-schedule."""

    target: RegimeTarget
    schedule: list
    rows: list = field(default_factory=list)
    trace_rows: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def errors_for(self, metric: str) -> list:
        if metric.startswith("trace"):
            out = []
            for tr in self.trace_rows:
                if metric == "trace0":
                    out.append(abs(tr.trace0_emp - tr.trace0_pred))
                else:
                    out.append(abs(tr.traceL_emp - tr.traceL_pred))
            return out
        return [r.abs_err for r in self.rows if r.phi_name == metric]


def trend_ok(errors, floor: float, slack: float = 1.5, window: int = 3) -> bool:
    """No error growth beyond ``slack`` over the last ``window`` points.

    Errors below ``floor`` count as converged: at machine-noise level
    (symmetric cases pin moments exactly) ratios between successive errors
    are meaningless.
    """
    tail = errors[-window:]
    for a, b in zip(tail[:-1], tail[1:]):
        if max(b, floor) > slack * max(a, floor):
            return False
    return True


def default_tolerance(predicted: float, rel: float = 0.05,
                      abs_floor: float = 1e-4) -> float:
    """Absolute tolerance: rel * |predicted|, or abs_floor for zero limits."""
    return rel * abs(predicted) if abs(predicted) > 1e-12 else abs_floor


def measure_convergence_report(
    potential: Potential,
    perturbation: Perturbation | None,
    target: RegimeTarget,
    schedule,
    phis: dict | None = None,
    grid_n: int | None = None,
    tolerances: dict | None = None,
    verdict_metrics=None,
) -> MeasureReport:
    """Run the schedule, compare moments and traces against the limit.

    Verdict per metric: final error below tolerance AND no error increase by
    more than x1.5 along the last three schedule points.  ``verdict_metrics``
    restricts which metrics are judged (None judges all); every metric is
    still reported as data.
    """
    schedule = [float(e) for e in schedule]
    if any(b >= a for a, b in zip(schedule[:-1], schedule[1:])):
        raise ValueError("schedule must be strictly decreasing")
    if phis is None:
        phis = default_basket(potential.L)

    spec = spec_for_target(potential, target)
    if target.kind == "highenergy":
        e_max = target.e_target
    elif target.kind == "interior":
        e_max = target.e_star
    else:
        e_max = potential.E0
    def grid_for(eps: float) -> Grid:
        n = grid_n if grid_n is not None else auto_grid_n(potential, eps, e_max)
        return Grid(n, potential.L)

    predicted = {name: predicted_moment(spec, phi) for name, phi in phis.items()}
    try:
        t0_pred, tL_pred = predicted_boundary_traces(spec, potential)
    except GroundRegimeHasNoTraceLimit as exc:
        t0_pred, tL_pred = 0.0, 0.0
        report_note = f"ground-regime traces: {exc}"
    else:
        report_note = None

    report = MeasureReport(target=target, schedule=schedule)
    if report_note:
        report.notes.append(report_note)

    for eps in schedule:
        op = assemble(potential, perturbation, eps, grid_for(eps))
        E = select_energy(op, target)
        pair = eigenpair(op, E)
        h = pair.h
        x_int = pair.x[1:-1]
        dens = pair.psi_interior**2
        for name, phi in phis.items():
            emp = float(h * np.sum(phi(x_int) * dens))
            report.rows.append(MeasureRow(
                eps=eps, E=pair.E, phi_name=name, empirical=emp,
                predicted=predicted[name],
                abs_err=abs(emp - predicted[name]),
            ))
        t0 = (eps * pair.dpsi0) ** 2
        tL = (eps * pair.dpsiL) ** 2
        if target.kind == "highenergy":
            t0, tL = t0 / pair.E, tL / pair.E
            report.notes.append(
                f"eps={eps:g}: residual gap to the fixed high-energy target "
                f"E={target.e_target:g} is {pair.E - target.e_target:+.4g}"
            )
        report.trace_rows.append(TraceRow(
            eps=eps, E=pair.E, trace0_emp=t0, trace0_pred=t0_pred,
            traceL_emp=tL, traceL_pred=tL_pred,
        ))

    tolerances = dict(tolerances or {})
    if verdict_metrics is None:
        verdict_metrics = set(phis) | {"trace0", "traceL"}
    else:
        verdict_metrics = set(verdict_metrics)
    for name in phis:
        if name not in verdict_metrics:
            continue
        tol = tolerances.get(name, default_tolerance(predicted[name]))
        errs = report.errors_for(name)
        floor = max(1e-12, 1e-3 * tol)
        report.verdicts[name] = errs[-1] <= tol and trend_ok(errs, floor)
    for metric, pred in (("trace0", t0_pred), ("traceL", tL_pred)):
        if metric not in verdict_metrics:
            continue
        tol = tolerances.get(metric, default_tolerance(pred))
        errs = report.errors_for(metric)
        floor = max(1e-12, 1e-3 * tol)
        report.verdicts[metric] = errs[-1] <= tol and trend_ok(errs, floor)
    return report


# ---------------------------------------------------------------------------
# Husimi transform
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HusimiField:
    """Coherent-state (Husimi) density of an eigenfunction on a phase grid."""

    eps: float
    E: float
    x: np.ndarray
    xi: np.ndarray
    H: np.ndarray          # normalized so that sum * cell area = 1
    raw_mass: float
    sigma: float           # coherent-state width sqrt(eps)

    @property
    def cell_area(self) -> float:
        return float((self.x[1] - self.x[0]) * (self.xi[1] - self.xi[0]))


def husimi(pair: Eigenpair, potential: Potential,
           nx: int | None = None, nxi: int | None = None,
           xi_max: float | None = None) -> HusimiField:
    """Husimi density H(x, xi) = |<psi, g_{x,xi}>|^2 / (2 pi eps).

    Gaussian coherent states of width sqrt(eps); psi extends by zero outside
    [0, L].  The phase window must satisfy xi_max^2 >= E - E0 + 4 eps.
    """
    eps = pair.eps
    E = pair.E
    sigma = math.sqrt(eps)
    xi_need = math.sqrt(max(E - potential.E0, 0.0) + 4.0 * eps)
    if xi_max is None:
        xi_max = math.sqrt(max(E - potential.E0, 0.0)) + 6.0 * sigma
    if xi_max < xi_need:
        raise PhaseWindowTooSmall(
            f"xi_max={xi_max:.4g} below required {xi_need:.4g}"
        )
    if nx is None:
        nx = max(64, int(math.ceil(8.0 * potential.L / sigma)))
    if nxi is None:
        nxi = max(64, int(math.ceil(16.0 * xi_max / sigma)))
    if nxi % 2 == 1:
        nxi += 1  # even count keeps the xi grid symmetric with no xi = 0 row

    xg = np.linspace(0.0, potential.L, nx)
    xig = np.linspace(-xi_max, xi_max, nxi)
    xs = pair.x
    h = pair.h

    pref = (math.pi * eps) ** (-0.25)
    gauss = np.exp(-((xs[None, :] - xg[:, None]) ** 2) / (2.0 * eps))
    amps = (pref * h) * (gauss * pair.psi[None, :])
    waves = np.exp(-1j * np.outer(xig, xs) / eps)
    overlaps = amps @ waves.T
    H = np.abs(overlaps) ** 2 / (2.0 * math.pi * eps)

    cell = (xg[1] - xg[0]) * (xig[1] - xig[0])
    raw_mass = float(np.sum(H) * cell)
    return HusimiField(eps=eps, E=E, x=xg, xi=xig, H=H / raw_mass,
                       raw_mass=raw_mass, sigma=sigma)


def tube_mass_fraction(field: HusimiField, potential: Potential,
                       eta: float | None = None) -> float:
    """Mass fraction inside the energy tube |xi^2 + V(x) - E| <= eta."""
    if eta is None:
        eta = HUSIMI_TUBE_CALIBRATION * field.sigma * (1.0 + abs(field.E))
    symbol = field.xi[None, :] ** 2 + potential.v(field.x)[:, None] - field.E
    inside = np.abs(symbol) <= eta
    return float(np.sum(field.H[inside]) / np.sum(field.H))


def branch_balance(field: HusimiField) -> float:
    """Mass fraction on the xi > 0 branch."""
    pos = field.xi > 0.0
    return float(np.sum(field.H[:, pos]) / np.sum(field.H))


def x_marginal(field: HusimiField, raw: bool = True) -> np.ndarray:
    """Integrate H over xi; ``raw`` undoes the discrete renormalization."""
    dxi = field.xi[1] - field.xi[0]
    marg = np.sum(field.H, axis=1) * dxi
    return marg * field.raw_mass if raw else marg


def marginal_l1_distance(field: HusimiField, pair: Eigenpair) -> float:
    """L1 distance between the x-marginal of H and |psi|^2 smoothed.

    The exact marginal is |psi|^2 convolved with a Gaussian of variance
    eps/2, so this measures discretization consistency of the phase-space
    representation against the position density.
    """
    eps = pair.eps
    var = eps / 2.0
    diff = field.x[:, None] - pair.x[None, :]
    kernel = np.exp(-(diff**2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    smoothed = pair.h * (kernel @ (pair.psi**2))
    marg = x_marginal(field, raw=True)
    dx = field.x[1] - field.x[0]
    return float(np.sum(np.abs(marg - smoothed)) * dx)
