"""Decay-envelope and energy-density inequality checks on computed eigenpairs.

Effective exponents measure how sharply an eigenfunction follows the
e^{-d_{A,E}/eps} envelope from both sides (upper: weighted norms stay
subexponential; lower: observed mass is never beaten by the envelope), and
two Gronwall-type inequalities on the semiclassical energy densities are
checked literally, pair by pair, on a thinned grid.  All exponent
arithmetic runs in log space so nothing overflows for eps >= 1e-3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .agmon import AgmonProfile, agmon_distance, agmon_profile
from .eigensolve import Eigenpair, Grid, assemble, eigenpair
from .errors import (
    EmptyForbiddenRegion,
    EmptyObservationWindow,
    WindowNotControlled,
)
from .measure import RegimeTarget, auto_grid_n, select_energy
from .potential import Perturbation, Potential

TOL_EXP = 1e-6
SCAN_SIZE = 4096
THIN_STRIDE = 8
LOG_FLOOR = 1e-290  # below this, tail values carry no usable information
GEOMETRIC_CONTROL_FLOOR = 1e-3


@dataclass(frozen=True)
class EnergyDensities:
    """Semiclassical energy densities of an eigenfunction.

    script_e = eps^2 |psi'|^2 + |psi|^2 is positive everywhere;
    script_e_plus = eps^2 |psi'|^2 + (V - E) |psi|^2 is nonnegative on
    {V >= E} (both terms are).
    """

    x: np.ndarray
    script_e: np.ndarray
    script_e_plus: np.ndarray
    eps: float
    E: float


def energy_densities(pair: Eigenpair, potential: Potential,
                     perturbation: Perturbation | None = None) -> EnergyDensities:
    """Densities on the eigen-grid; psi' by centered differences, one-sided
    second-order stencils at the Dirichlet boundaries."""
    psi = pair.psi
    h = pair.h
    dpsi = np.empty_like(psi)
    dpsi[1:-1] = (psi[2:] - psi[:-2]) / (2.0 * h)
    dpsi[0] = pair.dpsi0
    dpsi[-1] = pair.dpsiL
    v = potential.v(pair.x)
    e2 = pair.eps**2 * dpsi**2
    return EnergyDensities(
        x=pair.x,
        script_e=e2 + psi**2,
        script_e_plus=e2 + (v - pair.E) * psi**2,
        eps=pair.eps,
        E=pair.E,
    )


# ---------------------------------------------------------------------------
# effective exponents (upper / lower envelope checks)
# ---------------------------------------------------------------------------

def _log_weighted_norm(values: np.ndarray, d_over_eps: np.ndarray,
                       h: float) -> float:
    """log of the trapezoid L2 norm of e^{d/eps} * values, in log space."""
    w = np.full(values.size, h)
    w[0] = w[-1] = h / 2.0
    mask = values != 0.0
    if not np.any(mask):
        return -math.inf
    terms = (2.0 * d_over_eps[mask] + np.log(w[mask])
             + 2.0 * np.log(np.abs(values[mask])))
    return 0.5 * float(logsumexp(terms))


def _log_boundary_trace(pair: Eigenpair, which: str) -> float:
    """log( eps |psi'(end)| / sqrt(|E|+1) ), -inf for a vanished trace."""
    d = pair.dpsi0 if which == "0" else pair.dpsiL
    if d == 0.0:
        return -math.inf
    return (math.log(pair.eps) + math.log(abs(d))
            - 0.5 * math.log(abs(pair.E) + 1.0))


@dataclass(frozen=True)
class SandwichExponents:
    """Effective exponents for one eigenpair at one eps."""

    eps: float
    E: float
    delta_upper: float       # eps log(||e^{d/eps} psi|| + scaled ||e^{d/eps} psi'||)
    delta_lower_U: float     # -eps log ||psi||_{L2(U)} - d_{A,E}(U)
    delta_lower_0: float     # -eps log(eps|psi'(0)|/sqrt(|E|+1)) - d_{A,E}(0)
    delta_lower_L: float
    d_U: float
    d_0: float
    d_L: float


def agmon_upper_report(pair: Eigenpair, profile: AgmonProfile) -> dict:
    """Upper-envelope exponents from Theorem-style weighted norms.

    delta_upper = eps log(||e^{d/eps} psi|| + (eps/sqrt(|E|+1)) ||e^{d/eps} psi'||)
    plus boundary analogues eps log(eps|psi'(end)|/sqrt(|E|+1)) + d(end).
    """
    eps = pair.eps
    h = pair.h
    if profile.grid.size != pair.x.size or abs(profile.grid[1] - pair.x[1]) > 1e-12:
        raise ValueError("profile grid must match the eigenpair grid")
    d_over_eps = profile.values / eps

    dpsi = np.empty_like(pair.psi)
    dpsi[1:-1] = (pair.psi[2:] - pair.psi[:-2]) / (2.0 * h)
    dpsi[0] = pair.dpsi0
    dpsi[-1] = pair.dpsiL

    log_npsi = _log_weighted_norm(pair.psi, d_over_eps, h)
    log_ndpsi = _log_weighted_norm(dpsi, d_over_eps, h)
    scaled = math.log(eps) - 0.5 * math.log(abs(pair.E) + 1.0) + log_ndpsi
    delta_upper = eps * float(np.logaddexp(log_npsi, scaled))

    d0 = float(profile.values[0])
    dL = float(profile.values[-1])
    delta_upper_0 = eps * _log_boundary_trace(pair, "0") + d0
    delta_upper_L = eps * _log_boundary_trace(pair, "L") + dL
    return {
        "delta_upper": delta_upper,
        "delta_upper_0": delta_upper_0,
        "delta_upper_L": delta_upper_L,
    }


def lower_bound_report(pair: Eigenpair, profile: AgmonProfile,
                       U: tuple[float, float]) -> dict:
    """Lower-envelope exponents over a window U and at both boundaries."""
    a, b = U
    if not (b > a):
        raise EmptyObservationWindow(f"window [{a}, {b}] has empty interior")
    eps = pair.eps
    h = pair.h
    sel = (pair.x >= a) & (pair.x <= b)
    if not np.any(sel):
        raise EmptyObservationWindow(
            f"window [{a}, {b}] contains no grid point"
        )
    d_U = profile.infimum_over(a, b)
    vals = pair.psi[sel]
    mask = vals != 0.0
    if np.any(mask):
        w = np.full(vals.size, h)
        log_norm = 0.5 * float(logsumexp(
            np.log(w[mask]) + 2.0 * np.log(np.abs(vals[mask]))
        ))
    else:
        log_norm = -math.inf
    delta_lower_U = -eps * log_norm - d_U

    d0 = float(profile.values[0])
    dL = float(profile.values[-1])
    delta_lower_0 = -eps * _log_boundary_trace(pair, "0") - d0
    delta_lower_L = -eps * _log_boundary_trace(pair, "L") - dL
    return {
        "delta_lower_U": delta_lower_U,
        "delta_lower_0": delta_lower_0,
        "delta_lower_L": delta_lower_L,
        "d_U": d_U,
        "d_0": d0,
        "d_L": dL,
    }


# ---------------------------------------------------------------------------
# literal inequality checks (energy densities)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InequalityCheck:
    """Outcome of an exhaustive thinned-grid pair scan."""

    ok: bool
    worst_margin: float      # min over pairs of (rhs - lhs); >= -TOL_EXP passes
    n_pairs: int
    n_skipped: int           # pairs dropped because a density underflowed
    note: str = ""


def _sup_dv(potential: Potential) -> float:
    xs = np.linspace(0.0, potential.L, SCAN_SIZE)
    return float(np.max(np.abs(potential.dv(xs))))


def tunneling_check(pair: Eigenpair, potential: Potential,
                    perturbation: Perturbation | None,
                    alpha: float, thin: int = THIN_STRIDE) -> InequalityCheck:
    """Tunneling inequality on each component of {V - E >= alpha^2}:

    log E+(x) - log E+(y) <= (2/eps)|int_x^y sqrt(V-E)|
        + ||V'||oo L / alpha^2 + ||q_eps||oo L / (alpha eps)   (+ TOL_EXP).

    Threshold ties are excluded (strict inequality).
    """
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    dens = energy_densities(pair, potential, perturbation)
    v = potential.v(pair.x)
    inside = (v - pair.E) > alpha**2
    if not np.any(inside):
        raise EmptyForbiddenRegion(
            f"{{V - E >= alpha^2}} is empty for alpha={alpha}, E={pair.E:.4g}"
        )
    q_inf = perturbation.sup_norm_bound(pair.eps) if perturbation else 0.0
    const = (_sup_dv(potential) * potential.L / alpha**2
             + q_inf * potential.L / (alpha * pair.eps))

    h = pair.h
    worst = math.inf
    n_pairs = 0
    n_skipped = 0
    # connected components = runs of consecutive True
    idx = np.flatnonzero(inside)
    splits = np.flatnonzero(np.diff(idx) > 1)
    for comp in np.split(idx, splits + 1):
        f = np.sqrt(np.maximum(v[comp] - pair.E, 0.0))
        w_cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * h)]
        )
        sub = np.arange(0, comp.size, thin)
        if sub[-1] != comp.size - 1:
            sub = np.append(sub, comp.size - 1)
        ep = dens.script_e_plus[comp[sub]]
        usable = ep > LOG_FLOOR
        n_skipped += int(np.sum(~usable))
        ep = ep[usable]
        wc = w_cum[sub][usable]
        if ep.size < 2:
            continue
        lg = np.log(ep)
        dw = np.abs(wc[:, None] - wc[None, :])
        dl = np.abs(lg[:, None] - lg[None, :])
        margins = (2.0 / pair.eps) * dw + const - dl
        n_pairs += ep.size * (ep.size - 1)
        worst = min(worst, float(np.min(margins + np.where(
            np.eye(ep.size, dtype=bool), math.inf, 0.0))))
    if n_pairs == 0:
        return InequalityCheck(True, math.inf, 0, n_skipped,
                               "no usable pair (tails underflowed)")
    return InequalityCheck(worst >= -TOL_EXP, worst, n_pairs, n_skipped)


def _segment_interval_max(f_scan: np.ndarray, x_scan: np.ndarray,
                          pts: np.ndarray) -> np.ndarray:
    """Max of f over [pts[t], pts[t+1]], from a dense scan plus endpoints."""
    inside = (x_scan >= pts[0]) & (x_scan <= pts[-1])
    seg = np.searchsorted(pts, x_scan[inside], side="right") - 1
    seg = np.clip(seg, 0, pts.size - 2)
    out = np.full(pts.size - 1, -np.inf)
    np.maximum.at(out, seg, f_scan[inside])
    f_at = np.interp(pts, x_scan, f_scan)
    out = np.maximum(out, np.maximum(f_at[:-1], f_at[1:]))
    return out


def rough_gronwall_check(pair: Eigenpair, potential: Potential,
                         perturbation: Perturbation | None,
                         thin: int = THIN_STRIDE) -> InequalityCheck:
    """Rough Gronwall inequality for all thinned grid pairs (x, y):

    log E(x) - log E(y) <= (1/eps)|x-y| (||V-E+1||_{Loo(I_xy)} + ||q||oo)
        (+ TOL_EXP),

    with the sup taken over the interval between x and y only, on a dense
    scan of the domain.
    """
    dens = energy_densities(pair, potential, perturbation)
    q_inf = perturbation.sup_norm_bound(pair.eps) if perturbation else 0.0

    sub = np.arange(0, pair.x.size, thin)
    if sub[-1] != pair.x.size - 1:
        sub = np.append(sub, pair.x.size - 1)
    pts = pair.x[sub]
    ener = dens.script_e[sub]
    usable = ener > LOG_FLOOR
    n_skipped = int(np.sum(~usable))
    pts_u = pts[usable]
    lg = np.log(ener[usable])
    m = pts_u.size
    if m < 2:
        return InequalityCheck(True, math.inf, 0, n_skipped,
                               "no usable pair (tails underflowed)")

    x_scan = np.linspace(0.0, potential.L, SCAN_SIZE)
    f_scan = np.abs(potential.v(x_scan) - pair.E + 1.0)
    seg_max = _segment_interval_max(f_scan, x_scan, pts_u)

    worst = math.inf
    n_pairs = 0
    for i in range(m - 1):
        run_max = np.maximum.accumulate(seg_max[i:])
        rhs = (pts_u[i + 1:] - pts_u[i]) / pair.eps * (run_max + q_inf)
        lhs = np.abs(lg[i + 1:] - lg[i])
        worst = min(worst, float(np.min(rhs - lhs)))
        n_pairs += 2 * (m - 1 - i)
    return InequalityCheck(worst >= -TOL_EXP, worst, n_pairs, n_skipped)


# ---------------------------------------------------------------------------
# geometric control
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometricControlResult:
    values: tuple            # per-eps observed quantity
    infimum: float
    passed: bool
    floor: float


def geometric_control_check(potential: Potential,
                            perturbation: Perturbation | None,
                            schedule, target: RegimeTarget,
                            U: tuple[float, float] | None = None,
                            boundary: float | None = None,
                            nu: float = 0.1,
                            c_floor: float = GEOMETRIC_CONTROL_FLOOR,
                            grid_n: int | None = None) -> GeometricControlResult:
    """Observed-mass floor over a schedule under the geometric control rule.

    Window form: requires E(eps) >= V(center of U) - lambda_eps with
    lambda_eps = ||q_eps||oo + eps -> 0; reports inf_eps ||psi||_{L2(U)}.
    Boundary form (U None, boundary 0 or L): requires E >= V(end) + nu and
    reports inf_eps eps|psi'(end)|/sqrt(|E|+1).
    """
    if (U is None) == (boundary is None):
        raise ValueError("give exactly one of U= or boundary=")
    schedule = [float(e) for e in schedule]
    e_max = target.e_target if target.kind == "highenergy" else (
        target.e_star if target.kind == "interior" else potential.E0)
    values = []
    for eps in schedule:
        n = grid_n if grid_n is not None else auto_grid_n(potential, eps, e_max)
        op = assemble(potential, perturbation, eps, Grid(n, potential.L))
        E = select_energy(op, target)
        lam = (perturbation.sup_norm_bound(eps) if perturbation else 0.0) + eps
        if U is not None:
            center = 0.5 * (U[0] + U[1])
            if E < potential.v_scalar(center) - lam:
                raise WindowNotControlled(
                    f"E={E:.6g} < V(center)={potential.v_scalar(center):.6g} "
                    f"- lambda_eps at eps={eps}; window {U} is not "
                    "geometrically controlled at this energy"
                )
        else:
            if E < potential.v_scalar(boundary) + nu:
                raise WindowNotControlled(
                    f"E={E:.6g} < V({boundary}) + nu={nu}; boundary "
                    "observation is not controlled at this energy"
                )
        pair = eigenpair(op, E)
        if U is not None:
            sel = (pair.x >= U[0]) & (pair.x <= U[1])
            values.append(float(np.sqrt(pair.h * np.sum(pair.psi[sel] ** 2))))
        else:
            d = pair.dpsi0 if boundary == 0.0 else pair.dpsiL
            values.append(float(eps * abs(d) / math.sqrt(abs(pair.E) + 1.0)))
    inf_val = min(values)
    return GeometricControlResult(tuple(values), inf_val,
                                  inf_val >= c_floor, c_floor)


# ---------------------------------------------------------------------------
# schedule-level report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundsRow:
    eps: float
    E: float
    delta_upper: float
    delta_lower_U: float
    delta_lower_0: float
    delta_lower_L: float
    tunneling_margin: float
    gronwall_margin: float
    tunneling_ok: bool
    gronwall_ok: bool


@dataclass
class BoundsReport:
    """Per-eps sandwich exponents and literal lemma checks for one mode."""

    schedule: list
    U: tuple
    alpha: float
    rows: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _trend_down(values, slack: float = 1.5, window: int = 3,
                floor: float = 1e-9) -> bool:
    tail = values[-window:]
    return all(max(b, floor) <= slack * max(a, floor)
               for a, b in zip(tail[:-1], tail[1:]))


def bounds_report(potential: Potential, perturbation: Perturbation | None,
                  schedule, U: tuple[float, float], alpha: float,
                  k: int = 0, grid_n: int | None = None,
                  target: RegimeTarget | None = None) -> BoundsReport:
    """Sandwich exponents plus tunneling/Gronwall checks along a schedule.

    Tracks the k-th eigenvalue by index (spectrum is simple) unless an
    explicit regime target is given.  Verdicts: every exponent >= -TOL_EXP
    and trending down (x1.5 slack over the last three points); both lemma
    checks PASS at every eps.
    """
    schedule = [float(e) for e in schedule]
    report = BoundsReport(schedule=schedule, U=tuple(U), alpha=alpha)
    e_max = potential.E0 if target is None else (
        target.e_target if target.kind == "highenergy"
        else (target.e_star if target.kind == "interior" else potential.E0))

    for eps in schedule:
        n = grid_n if grid_n is not None else auto_grid_n(potential, eps, e_max)
        op = assemble(potential, perturbation, eps, Grid(n, potential.L))
        if target is None:
            from .eigensolve import eigenvalues_in_window
            E = float(eigenvalues_in_window(op, count=k + 1)[k])
        else:
            E = select_energy(op, target)
        pair = eigenpair(op, E)
        profile = agmon_profile(potential, pair.E, n + 2)
        up = agmon_upper_report(pair, profile)
        lo = lower_bound_report(pair, profile, U)
        tun = tunneling_check(pair, potential, perturbation, alpha)
        gro = rough_gronwall_check(pair, potential, perturbation)
        report.rows.append(BoundsRow(
            eps=eps, E=pair.E,
            delta_upper=up["delta_upper"],
            delta_lower_U=lo["delta_lower_U"],
            delta_lower_0=lo["delta_lower_0"],
            delta_lower_L=lo["delta_lower_L"],
            tunneling_margin=tun.worst_margin,
            gronwall_margin=gro.worst_margin,
            tunneling_ok=tun.ok,
            gronwall_ok=gro.ok,
        ))

    for name in ("delta_upper", "delta_lower_U", "delta_lower_0"):
        vals = [getattr(r, name) for r in report.rows]
        report.verdicts[f"{name}_sign"] = all(v >= -TOL_EXP for v in vals)
        report.verdicts[f"{name}_trend"] = _trend_down(vals)
    report.verdicts["tunneling"] = all(r.tunneling_ok for r in report.rows)
    report.verdicts["gronwall"] = all(r.gronwall_ok for r in report.rows)
    return report


def pointwise_decay_errors(pair: Eigenpair, potential: Potential,
                           xs) -> np.ndarray:
    """|(-eps/2) log script_E(x) - d_{A,E0}(x)| at the given sample points.

    Samples snap to the nearest grid node; d_{A,E0} is evaluated pointwise.
    """
    dens = energy_densities(pair, potential)
    xs = np.asarray(xs, dtype=float)
    idx = np.clip(np.round(xs / pair.h).astype(int), 0, pair.x.size - 1)
    with np.errstate(divide="ignore"):
        exponent = -0.5 * pair.eps * np.log(dens.script_e[idx])
    d_vals = np.asarray([
        agmon_distance(potential, potential.E0, float(x)) for x in pair.x[idx]
    ])
    return np.abs(exponent - d_vals)
