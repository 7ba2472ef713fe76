"""Single-well potentials on [0, L]: parsing, validation, turning points.

Potentials are supplied as closed-form expressions in a small grammar
(+, -, *, /, pow, exp, sin, cos, constants, x), so the derivative V' is
obtained by exact symbolic differentiation rather than finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

from .errors import DegenerateDomain, EnergyBelowGround, NotSingleWell

TOL_MIN = 1e-10
TOL_SIGN = 1e-10
VALIDATION_GRID_SIZE = 4096

_X = sp.Symbol("x", real=True)
_EPS = sp.Symbol("eps", real=True)

_ALLOWED_FUNCS = (sp.exp, sp.sin, sp.cos)
_PARSE_LOCALS = {
    "x": _X,
    "eps": _EPS,
    "pi": sp.pi,
    "exp": sp.exp,
    "sin": sp.sin,
    "cos": sp.cos,
}
_TRANSFORMS = standard_transformations + (convert_xor,)


def tol_root(E: float) -> float:
    """Root tolerance for turning-point bisection: 1e-12 * max(1, |E|)."""
    return 1e-12 * max(1.0, abs(E))


def parse_grammar(text: str, allow_eps: bool = False) -> sp.Expr:
    """Parse an expression restricted to the supported grammar.

    Accepts +, -, *, /, ^ (power), exp, sin, cos, numeric constants, pi,
    the variable x, and (for perturbations) eps.  Anything else is rejected.
    """
    try:
        expr = parse_expr(
            text, transformations=_TRANSFORMS, local_dict=_PARSE_LOCALS
        )
    except Exception as exc:  # sympy raises a zoo of parse errors
        raise ValueError(f"cannot parse expression {text!r}: {exc}") from exc

    for fn in expr.atoms(sp.Function):
        if not isinstance(fn, _ALLOWED_FUNCS):
            raise ValueError(
                f"function {fn.func.__name__!r} not in the supported grammar "
                "(exp, sin, cos)"
            )
    allowed_symbols = {_X, _EPS} if allow_eps else {_X}
    extra = expr.free_symbols - allowed_symbols
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise ValueError(f"unknown symbol(s) in expression: {names}")
    return expr


def _lambdify(expr: sp.Expr, args) -> Callable:
    """Vectorized numpy evaluator; constants broadcast to the input shape."""
    raw = sp.lambdify(args, expr, modules="numpy")

    def evaluate(*vals):
        out = raw(*vals)
        ref = vals[-1]
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(ref)).copy() \
            if np.shape(out) != np.shape(ref) else np.asarray(out, dtype=float)

    return evaluate


@dataclass(frozen=True)
class WellCertificate:
    """Outcome of single-well validation."""

    x0: float
    E0: float
    v_max: float
    v_left: float          # V(0)
    v_right: float         # V(L)
    sign_violations_left: int
    sign_violations_right: int
    grid_size: int

    @property
    def monotone_ok(self) -> bool:
        return self.sign_violations_left == 0 and self.sign_violations_right == 0


@dataclass(frozen=True)
class TurningPoints:
    """Boundary of the classically allowed region K_E = [x_minus, x_plus]."""

    x_minus: float
    x_plus: float
    energy: float


@dataclass(frozen=True)
class Potential:
    """A validated single-well potential V on [0, L].

    ``v`` and ``dv`` are vectorized evaluators for V and V'.  ``x0`` is the
    well bottom, ``E0 = V(x0)`` the ground energy, ``v_max`` the maximum of V
    over the validation grid.
    """

    L: float
    v: Callable[[np.ndarray], np.ndarray]
    dv: Callable[[np.ndarray], np.ndarray]
    x0: float
    E0: float
    v_max: float
    expression: str = ""

    @classmethod
    def from_expression(
        cls,
        text: str,
        L: float,
        grid_size: int = VALIDATION_GRID_SIZE,
        require_single_well: bool = True,
    ) -> "Potential":
        """Build a potential from a grammar expression and validate it.

        With ``require_single_well=False`` the sign-pattern check is skipped
        and x0/E0 are taken from the raw grid minimum (for solver unit tests
        with e.g. V = 0, which is not a single well).
        """
        if not (L > 0.0) or not math.isfinite(L):
            raise DegenerateDomain(f"domain length must be positive, got {L}")
        expr = parse_grammar(text)
        v = _lambdify(expr, (_X,))
        dv = _lambdify(sp.diff(expr, _X), (_X,))

        if require_single_well:
            cert = _validate(v, dv, L, grid_size)
            x0, e0, v_max = cert.x0, cert.E0, cert.v_max
        else:
            grid = np.linspace(0.0, L, grid_size)
            vals = v(grid)
            i = int(np.argmin(vals))
            x0, e0, v_max = float(grid[i]), float(vals[i]), float(np.max(vals))
        return cls(L=float(L), v=v, dv=dv, x0=x0, E0=e0, v_max=v_max,
                   expression=text)

    def v_scalar(self, x: float) -> float:
        return float(self.v(np.asarray([x]))[0])

    def dv_scalar(self, x: float) -> float:
        return float(self.dv(np.asarray([x]))[0])


@dataclass(frozen=True)
class Perturbation:
    """A perturbation family q(eps, x) with sup/C1 norm bounds on [0, L]."""

    q: Callable[[float, np.ndarray], np.ndarray]
    dq: Callable[[float, np.ndarray], np.ndarray]
    L: float
    expression: str = ""
    scan_size: int = VALIDATION_GRID_SIZE

    @classmethod
    def from_expression(cls, text: str, L: float) -> "Perturbation":
        if not (L > 0.0):
            raise DegenerateDomain(f"domain length must be positive, got {L}")
        expr = parse_grammar(text, allow_eps=True)
        q = _lambdify(expr, (_EPS, _X))
        dq = _lambdify(sp.diff(expr, _X), (_EPS, _X))
        return cls(q=q, dq=dq, L=float(L), expression=text)

    def _scan(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.scan_size)

    def sup_norm_bound(self, eps: float) -> float:
        """sup |q(eps, .)| over the scan grid."""
        return float(np.max(np.abs(self.q(eps, self._scan()))))

    def c1_norm_bound(self, eps: float) -> float:
        """sup |q| + sup |dq/dx| over the scan grid."""
        xs = self._scan()
        return float(np.max(np.abs(self.q(eps, xs)))
                     + np.max(np.abs(self.dq(eps, xs))))


def _golden_minimize(f: Callable[[float], float], a: float, b: float,
                     xtol: float) -> float:
    """Golden-section minimum of a unimodal f on [a, b] to absolute xtol."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _bisect_sign_change(dv, a: float, b: float, fallback: float) -> float:
    """Root of dv on [a, b] when dv(a) < 0 < dv(b); fallback otherwise."""
    fa = float(dv(np.asarray([a]))[0])
    fb = float(dv(np.asarray([b]))[0])
    if not (fa < 0.0 < fb):
        return fallback
    for _ in range(100):
        mid = 0.5 * (a + b)
        fm = float(dv(np.asarray([mid]))[0])
        if fm < 0.0:
            a = mid
        else:
            b = mid
        if b - a <= 1e-15 * max(1.0, abs(b)):
            break
    return 0.5 * (a + b)


def _validate(v, dv, L: float, grid_size: int) -> WellCertificate:
    if grid_size < 16:
        raise ValueError(f"grid_size must be >= 16, got {grid_size}")
    grid = np.linspace(0.0, L, grid_size)
    vals = v(grid)
    if not np.all(np.isfinite(vals)):
        raise NotSingleWell("potential is not finite on the validation grid")
    i_min = int(np.argmin(vals))
    if i_min == 0 or i_min == grid_size - 1:
        raise NotSingleWell(
            "minimum sits on the boundary; well bottom must lie in (0, L)"
        )
    x0 = _golden_minimize(lambda x: v(np.asarray([x]))[0],
                          grid[i_min - 1], grid[i_min + 1], TOL_MIN)
    # value comparisons cannot localize a smooth minimum below
    # sqrt(machine eps); polish with the sign change of the exact V'
    x0 = _bisect_sign_change(dv, grid[i_min - 1], grid[i_min + 1], x0)
    e0 = float(v(np.asarray([x0]))[0])
    if e0 > float(np.min(vals)) + TOL_MIN:
        raise NotSingleWell("refined minimum disagrees with the grid minimum")

    slopes = dv(grid)
    left = grid < x0
    right = grid > x0
    n_left = int(np.sum(slopes[left] > TOL_SIGN))
    n_right = int(np.sum(slopes[right] < -TOL_SIGN))
    cert = WellCertificate(
        x0=float(x0),
        E0=e0,
        v_max=float(np.max(vals)),
        v_left=float(vals[0]),
        v_right=float(vals[-1]),
        sign_violations_left=n_left,
        sign_violations_right=n_right,
        grid_size=grid_size,
    )
    if not cert.monotone_ok:
        raise NotSingleWell(
            f"V' sign pattern violated at {n_left} point(s) left and "
            f"{n_right} point(s) right of x0={x0:.6g}"
        )
    return cert


def validate_single_well(potential: Potential,
                         grid_size: int = VALIDATION_GRID_SIZE) -> WellCertificate:
    """Re-validate the single-well structure and return the certificate.

    Raises NotSingleWell when the V' sign pattern is violated beyond
    TOL_SIGN, DegenerateDomain when L <= 0.
    """
    if not (potential.L > 0.0):
        raise DegenerateDomain(f"domain length must be positive, got {potential.L}")
    return _validate(potential.v, potential.dv, potential.L, grid_size)


def _bisect_branch(v, dv, E: float, lo: float, hi: float, increasing: bool,
                   tol: float) -> float:
    """Root of V(x) = E on a monotone branch [lo, hi].

    Bisection to tol, then Newton polishing: downstream quadratures of
    (E - V)^{-1/2} are O(sqrt(delta))-sensitive to the root position, so the
    residual is driven to the floating-point floor.
    """
    a, b = lo, hi
    mid = 0.5 * (a + b)
    for _ in range(200):
        mid = 0.5 * (a + b)
        r = float(v(np.asarray([mid]))[0]) - E
        if abs(r) <= tol or (b - a) <= 1e-16 * max(1.0, hi):
            break
        if (r > 0.0) == increasing:
            b = mid
        else:
            a = mid
    x = mid
    for _ in range(4):
        slope = float(dv(np.asarray([x]))[0])
        if slope == 0.0:
            break
        step = (float(v(np.asarray([x]))[0]) - E) / slope
        x_new = min(max(x - step, lo), hi)
        if x_new == x:
            break
        x = x_new
    return x


def turning_points(potential: Potential, E: float) -> TurningPoints:
    """Turning points x_-(E) <= x0 <= x_+(E), clamped to 0 / L.

    x_-(E) = 0 for E >= V(0) and x_+(E) = L for E >= V(L); both collapse to
    x0 at E = E0.  E below E0 (beyond tolerance) is rejected; callers that
    need the E <= E0 convention substitute E0 themselves.
    """
    tol = tol_root(E)
    if E < potential.E0 - tol:
        raise EnergyBelowGround(
            f"E={E!r} lies below the ground energy E0={potential.E0!r}"
        )
    if E <= potential.E0 + tol:
        return TurningPoints(potential.x0, potential.x0, E)

    v0 = potential.v_scalar(0.0)
    vL = potential.v_scalar(potential.L)
    if E >= v0:
        x_minus = 0.0
    else:
        x_minus = _bisect_branch(potential.v, potential.dv, E, 0.0,
                                 potential.x0, increasing=False, tol=tol)
    if E >= vL:
        x_plus = potential.L
    else:
        x_plus = _bisect_branch(potential.v, potential.dv, E, potential.x0,
                                potential.L, increasing=True, tol=tol)
    return TurningPoints(float(x_minus), float(x_plus), float(E))
