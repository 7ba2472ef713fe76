"""Dirichlet eigenpairs of P_eps = -eps^2 d^2/dx^2 + V + q_eps.

Finite-difference discretization on a uniform grid gives a symmetric
tridiagonal operator; eigenvalues come from LAPACK's Sturm-sequence
bisection, eigenvectors from shifted inverse iteration with a stable
tail-refinement pass so exponentially small components keep relative
accuracy.  An independent Prüfer-shooting solver cross-validates the
eigenvalues.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from ._prufer import phase_at_end
from .errors import (
    DegenerateCluster,
    GridTooCoarse,
    NoConvergence,
    PhaseOverflow,
    WindowEmpty,
)
from .potential import Perturbation, Potential

INVERSE_ITERATION_CAP = 100
INVERSE_ITERATION_SEED = 987654321
TAIL_MATCH_FRACTION = 1e-6
SHOOTING_STEPS_PER_WAVELENGTH = 40.0
SHOOTING_MAX_STEPS = 50_000_000


@dataclass(frozen=True)
class Grid:
    """Uniform interior grid: nodes x_i = i * h, i = 1..n_interior."""

    n_interior: int
    L: float

    def __post_init__(self):
        if self.n_interior < 32:
            raise ValueError(f"n_interior must be >= 32, got {self.n_interior}")
        if not (self.L > 0.0):
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n_interior + 1)

    @property
    def nodes_full(self) -> np.ndarray:
        return self.h * np.arange(0, self.n_interior + 2)


@dataclass(frozen=True)
class TridiagonalOperator:
    """Symmetric tridiagonal discretization of P_eps with Dirichlet rows
    eliminated."""

    diagonal: np.ndarray
    off_diagonal: float
    eps: float
    grid: Grid
    potential: Potential
    perturbation: Perturbation | None = None

    @property
    def gershgorin(self) -> tuple[float, float]:
        h = self.grid.h
        stiff = 4.0 * self.eps**2 / h**2
        v_eff = self.diagonal - 2.0 * self.eps**2 / h**2
        return float(np.min(v_eff)), float(np.max(v_eff) + stiff)

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diagonal * v
        out[:-1] += self.off_diagonal * v[1:]
        out[1:] += self.off_diagonal * v[:-1]
        return out

    def tol_eig(self, E: float) -> float:
        h = self.grid.h
        return 1e-12 * (abs(E) + 4.0 * self.eps**2 / h**2)


@dataclass(frozen=True)
class Eigenpair:
    """One Dirichlet eigenpair: samples on the full grid (psi(0)=psi(L)=0),
    second-order one-sided boundary derivatives, and the discrete residual."""

    eps: float
    E: float
    x: np.ndarray
    psi: np.ndarray
    dpsi0: float
    dpsiL: float
    residual_norm: float
    l2_norm: float
    n_nodes: int
    index: int

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def psi_interior(self) -> np.ndarray:
        return self.psi[1:-1]


def resolution_limit(potential: Potential, eps: float) -> float:
    """Recommended grid spacing: h <= eps / (10 sqrt(max V - E0 + 1))."""
    return eps / (10.0 * math.sqrt(potential.v_max - potential.E0 + 1.0))


def assemble(potential: Potential, perturbation: Perturbation | None,
             eps: float, grid: Grid) -> TridiagonalOperator:
    """Assemble the 3-point finite-difference operator for P_eps.

    Warns when h exceeds the de Broglie resolution rule, raises
    GridTooCoarse at the hard limit h > eps / 2.
    """
    if not (eps > 0.0):
        raise ValueError(f"eps must be positive, got {eps}")
    h = grid.h
    if h > eps / 2.0:
        raise GridTooCoarse(
            f"h={h:.3g} exceeds eps/2={eps / 2:.3g}; refusing to assemble"
        )
    if h > resolution_limit(potential, eps):
        warnings.warn(
            f"grid spacing h={h:.3g} is above the resolution rule "
            f"eps/(10 sqrt(max V - E0 + 1))={resolution_limit(potential, eps):.3g}",
            stacklevel=2,
        )
    x = grid.nodes
    diag = 2.0 * eps**2 / h**2 + potential.v(x)
    if perturbation is not None:
        diag = diag + perturbation.q(eps, x)
    return TridiagonalOperator(
        diagonal=diag,
        off_diagonal=-(eps**2) / h**2,
        eps=eps,
        grid=grid,
        potential=potential,
        perturbation=perturbation,
    )


def sturm_count(op: TridiagonalOperator, sigma: float) -> int:
    """Number of eigenvalues of the operator strictly below sigma."""
    e2 = op.off_diagonal**2
    tiny = 1e-300
    count = 0
    q = 1.0
    first = True
    for d in op.diagonal.tolist():
        if first:
            q = d - sigma
            first = False
        else:
            if q == 0.0:
                q = -tiny
            q = (d - sigma) - e2 / q
        if q < 0.0:
            count += 1
    return count


def _off_array(op: TridiagonalOperator) -> np.ndarray:
    return np.full(op.diagonal.size - 1, op.off_diagonal)


def eigenvalues_in_window(op: TridiagonalOperator,
                          window: tuple[float, float] | None = None,
                          count: int | None = None) -> np.ndarray:
    """All eigenvalues in (lo, hi], or the lowest ``count``, by bisection.

    Completeness and simplicity are certified with Sturm counts: every
    eigenvalue in the window is found exactly once.
    """
    if (window is None) == (count is None):
        raise ValueError("give exactly one of window= or count=")
    if count is not None:
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        vals = eigh_tridiagonal(
            op.diagonal, _off_array(op), select="i",
            select_range=(0, count - 1), eigvals_only=True,
        )
    else:
        lo, hi = window
        if not (hi > lo):
            raise WindowEmpty(f"window [{lo}, {hi}] is empty")
        vals = eigh_tridiagonal(
            op.diagonal, _off_array(op), select="v",
            select_range=(lo, hi), eigvals_only=True,
        )
        if vals.size == 0:
            raise WindowEmpty(f"no eigenvalue in [{lo}, {hi}]")
        n_in = sturm_count(op, hi + op.tol_eig(hi)) - sturm_count(op, lo + op.tol_eig(lo))
        if n_in != vals.size:
            raise RuntimeError(
                f"Sturm certificate failed: window holds {n_in} eigenvalues, "
                f"bisection returned {vals.size}"
            )
    for v in vals:
        r = 10.0 * op.tol_eig(v)
        if sturm_count(op, v + r) - sturm_count(op, v - r) != 1:
            raise RuntimeError(
                f"Sturm certificate failed: eigenvalue {v!r} is not simple "
                "at resolution 10*tol_eig"
            )
    return np.sort(vals)


def _refine_tail(v: np.ndarray, coeff: np.ndarray, from_left: bool,
                 theta: float = TAIL_MATCH_FRACTION) -> None:
    """Rebuild exponentially small tail components of an eigenvector.

    Integrates psi_{i+1} = c_i psi_i - psi_{i-1} from the Dirichlet boundary
    inward (the stable, growing direction) and scale-matches at the first
    index where the inverse-iteration vector is reliable.  Overflow-safe via
    a running rescale.
    """
    n = v.size
    vmax = float(np.max(np.abs(v)))
    idx = np.flatnonzero(np.abs(v) >= theta * vmax)
    if idx.size == 0:
        return
    m = int(idx[0]) if from_left else int(idx[-1])
    span = m if from_left else (n - 1 - m)
    if span < 2:
        return

    u_prev = 0.0   # boundary value psi(0) or psi(L)
    u_cur = 1.0
    slog = 0.0
    us = np.empty(span + 1)
    logs = np.empty(span + 1)
    us[0] = u_cur
    logs[0] = slog
    for j in range(1, span + 1):
        i = j - 1 if from_left else n - j
        u_next = coeff[i] * u_cur - u_prev
        u_prev, u_cur = u_cur, u_next
        if abs(u_cur) > 1e200:
            u_cur *= 1e-200
            u_prev *= 1e-200
            slog += 200.0 * math.log(10.0)
        us[j] = u_cur
        logs[j] = slog
    if us[span] == 0.0:
        return
    anchor = v[m]
    factor = anchor / us[span]
    for j in range(span):
        i = j if from_left else n - 1 - j
        scale = math.exp(logs[j] - logs[span]) if logs[j] != logs[span] else 1.0
        v[i] = us[j] * factor * scale


def eigenpair(op: TridiagonalOperator, E_approx: float) -> Eigenpair:
    """Eigenpair nearest E_approx by shifted inverse iteration.

    Normalized to trapezoid L2 norm 1, sign fixed so psi'(0) > 0, boundary
    derivatives from second-order one-sided stencils.
    """
    n = op.diagonal.size
    h = op.grid.h
    r = 10.0 * op.tol_eig(E_approx)
    n_ball = sturm_count(op, E_approx + r) - sturm_count(op, E_approx - r)
    if n_ball > 1:
        raise DegenerateCluster(
            f"{n_ball} eigenvalues within 10*tol_eig of shift {E_approx!r}"
        )

    shift = E_approx
    ab = np.zeros((3, n))
    ab[0, 1:] = op.off_diagonal
    ab[2, :-1] = op.off_diagonal
    ab[1, :] = op.diagonal - shift
    rng = np.random.default_rng(INVERSE_ITERATION_SEED)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)

    lam = shift
    scale_floor = abs(shift) + 4.0 * op.eps**2 / h**2
    converged = False
    best_res = math.inf
    best_v = v
    stalled = 0
    for _ in range(INVERSE_ITERATION_CAP):
        try:
            w = solve_banded((1, 1), ab, v)
        except np.linalg.LinAlgError:
            ab[1, :] += op.tol_eig(shift)
            w = solve_banded((1, 1), ab, v)
        if not np.all(np.isfinite(w)):
            ab[1, :] += op.tol_eig(shift)
            continue
        v = w / np.linalg.norm(w)
        tv = op.apply(v)
        lam = float(v @ tv)
        res = float(np.linalg.norm(tv - lam * v))
        if res < best_res:
            best_res, best_v = res, v
            stalled = 0
        else:
            stalled += 1
        # relative eigen-residual plus the L2 acceptance gate (for a unit
        # 2-norm vector the L2 residual of the normalized eigenfunction
        # equals the plain 2-norm residual)
        if (res <= 1e-12 * (abs(lam) + scale_floor)
                and res <= 0.25e-10 * (abs(lam) + 1.0)):
            converged = True
            break
        if stalled >= 3:  # at the floating-point floor
            break
    v = best_v
    tv = op.apply(v)
    lam = float(v @ tv)
    res = float(np.linalg.norm(tv - lam * v))
    if not converged and res > 1e-10 * (abs(lam) + 1.0):
        raise NoConvergence(
            f"inverse iteration did not converge within {INVERSE_ITERATION_CAP} "
            f"steps at shift {E_approx!r} (residual {res:.3g})"
        )

    # psi_{i+1} = c_i psi_i - psi_{i-1} with c_i = 2 + h^2 (V_i + q_i - E)/eps^2
    coeff = 2.0 + (op.diagonal - 2.0 * op.eps**2 / h**2 - lam) * (h**2 / op.eps**2)
    _refine_tail(v, coeff, from_left=True)
    _refine_tail(v, coeff, from_left=False)

    # trapezoid normalization (boundary values vanish)
    l2 = math.sqrt(h * float(v @ v))
    v = v / l2
    dpsi0 = (4.0 * v[0] - v[1]) / (2.0 * h)
    if dpsi0 < 0.0 or (dpsi0 == 0.0 and v[int(np.argmax(np.abs(v)))] < 0.0):
        v = -v
        dpsi0 = -dpsi0
    dpsiL = (v[-2] - 4.0 * v[-1]) / (2.0 * h)

    tv = op.apply(v)
    residual_l2 = math.sqrt(h) * float(np.linalg.norm(tv - lam * v))
    nz = v[v != 0.0]
    n_nodes = int(np.sum(nz[1:] * nz[:-1] < 0.0))
    index = sturm_count(op, lam - 100.0 * op.tol_eig(lam))

    psi_full = np.zeros(n + 2)
    psi_full[1:-1] = v
    return Eigenpair(
        eps=op.eps,
        E=lam,
        x=op.grid.nodes_full,
        psi=psi_full,
        dpsi0=float(dpsi0),
        dpsiL=float(dpsiL),
        residual_norm=residual_l2,
        l2_norm=math.sqrt(h * float(v @ v)),
        n_nodes=n_nodes,
        index=index,
    )


def residual(pair: Eigenpair, op: TridiagonalOperator) -> float:
    """Discrete L2 norm of (P_eps - E) psi for a computed pair."""
    v = pair.psi_interior
    r = op.apply(v) - pair.E * v
    return math.sqrt(op.grid.h) * float(np.linalg.norm(r))


def _effective_v(potential: Potential, perturbation: Perturbation | None,
                 eps: float, x: np.ndarray) -> np.ndarray:
    v = potential.v(x)
    if perturbation is not None:
        v = v + perturbation.q(eps, x)
    return v


def shooting_eigenvalue(potential: Potential,
                        perturbation: Perturbation | None,
                        eps: float, k: int,
                        rel_tol: float = 1e-10) -> float:
    """k-th Dirichlet eigenvalue from Prüfer shooting (independent oracle).

    The Prüfer phase theta' = (cos^2 + (E - V_eps) sin^2)/eps is integrated
    by RK4 on a fixed fine grid; E is bisected until theta(L) = (k+1) pi, to
    relative tolerance ``rel_tol``.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if not (eps > 0.0):
        raise ValueError(f"eps must be positive, got {eps}")
    L = potential.L
    scan = np.linspace(0.0, L, 4096)
    v_eff = _effective_v(potential, perturbation, eps, scan)
    v_lo = float(np.min(v_eff))
    v_hi = float(np.max(v_eff))
    target = (k + 1) * math.pi

    E_hi = v_hi + ((k + 1) * math.pi * eps / L + 1.0) ** 2 + 1.0
    for _ in range(80):
        n_steps = _shooting_steps(L, eps, E_hi - v_lo)
        x_half = np.linspace(0.0, L, 2 * n_steps + 1)
        vhalf = _effective_v(potential, perturbation, eps, x_half)
        hstep = L / n_steps
        if phase_at_end(vhalf, hstep, eps, E_hi) > target:
            break
        E_hi = v_hi + 2.0 * (E_hi - v_hi)
    else:
        raise PhaseOverflow("could not bracket the requested mode from above")

    lo = v_lo - 1e-9 * max(1.0, abs(v_lo))
    hi = E_hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phase_at_end(vhalf, hstep, eps, mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * max(abs(lo), abs(hi), eps):
            break
    return 0.5 * (lo + hi)


def _shooting_steps(L: float, eps: float, energy_span: float) -> int:
    n = int(math.ceil(
        SHOOTING_STEPS_PER_WAVELENGTH * L * math.sqrt(1.0 + max(energy_span, 1.0))
        / eps
    ))
    n = max(n, 1000)
    if n > SHOOTING_MAX_STEPS:
        raise PhaseOverflow(
            f"required step size {L / n:.3g} below the step-control floor"
        )
    return n
