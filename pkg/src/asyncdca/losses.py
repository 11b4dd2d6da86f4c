"""Classification losses, their conjugates, and the 1-D dual coordinate step.

Everything here works in the standard L2-regularized empirical-risk setup

    P(w) = (1/n) sum_i loss(x_i . w; y_i) + (lam/2) ||w||^2

whose dual over per-example variables alpha is

    D(alpha) = -(1/n) sum_i conj_i(-alpha_i) - (lam/2) ||(1/(lam n)) X alpha||^2

with the primal-dual map w = (1/(lam n)) X alpha. The regularizer is fixed
to g(w) = ||w||^2 / 2, so g*(v) = ||v||^2 / 2 and grad g* is the identity.

The coordinate step maximizes, over the step eps for one example i,

    -cw * conj(-(a + eps)) - (v . x_i) eps - (sigma ||x_i||^2 / (2 lam n)) eps^2

(the 1-D restriction of the local perturbed subproblem, scaled by n), where
a is the current dual value for i and cw is a conjugate weight that is 1.0
under the whole-n scaling convention and n/n_k under per-block scaling.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .data import SparsePoint

# Dual values produced by clipping land on the feasible boundary up to
# floating-point accumulation error; values within this slack of the domain
# are clamped rather than treated as infeasible.
FEASIBILITY_SLACK = 1e-9

_NEWTON_MAX_ITER = 100
_NEWTON_TOL = 1e-12
_LOGISTIC_CLAMP = 1e-12


class StepError(RuntimeError):
    """Raised when a coordinate step encounters corrupted (non-finite) state."""


class LossKind(enum.Enum):
    HINGE = "hinge"
    SQUARED_HINGE = "squared-hinge"
    LOGISTIC = "logistic"

    @property
    def is_smooth(self) -> bool:
        return self in (LossKind.SQUARED_HINGE, LossKind.LOGISTIC)

    @property
    def smoothness_mu(self) -> float | None:
        """mu such that the loss is (1/mu)-smooth in its margin argument."""
        return {LossKind.SQUARED_HINGE: 0.5, LossKind.LOGISTIC: 4.0}.get(self)

    @property
    def lipschitz(self) -> float | None:
        """Bound on |d loss / d z| where it exists uniformly."""
        return {LossKind.HINGE: 1.0, LossKind.LOGISTIC: 1.0}.get(self)


def loss_kind(name: str) -> LossKind:
    try:
        return LossKind(name)
    except ValueError:
        raise ValueError(
            f"unknown loss {name!r}; expected one of "
            f"{[k.value for k in LossKind]}"
        ) from None


def primal_loss(kind: LossKind, z: float, y: float) -> float:
    """loss(z; y) for a single margin z = x . w and label y in {-1, +1}."""
    m = y * z
    if kind is LossKind.HINGE:
        return max(0.0, 1.0 - m)
    if kind is LossKind.SQUARED_HINGE:
        return max(0.0, 1.0 - m) ** 2
    return float(np.logaddexp(0.0, -m))


def primal_loss_array(kind: LossKind, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    m = y * z
    if kind is LossKind.HINGE:
        return np.maximum(0.0, 1.0 - m)
    if kind is LossKind.SQUARED_HINGE:
        return np.maximum(0.0, 1.0 - m) ** 2
    return np.logaddexp(0.0, -m)


def conjugate(kind: LossKind, a: float, y: float) -> float:
    """conj(-a) for dual value a: the conjugate of the loss at -a.

    In terms of u = a*y the feasible domains and values are
      hinge:          u in [0, 1],  value -u
      squared hinge:  u >= 0,       value -u + u^2/4
      logistic:       u in [0, 1],  value u log u + (1-u) log(1-u)
    Outside the domain (beyond a small clamping slack) the value is +inf.
    """
    u = a * y
    if kind is LossKind.HINGE:
        if u < -FEASIBILITY_SLACK or u > 1.0 + FEASIBILITY_SLACK:
            return math.inf
        u = min(max(u, 0.0), 1.0)
        return -u
    if kind is LossKind.SQUARED_HINGE:
        if u < -FEASIBILITY_SLACK:
            return math.inf
        u = max(u, 0.0)
        return -u + 0.25 * u * u
    if u < -FEASIBILITY_SLACK or u > 1.0 + FEASIBILITY_SLACK:
        return math.inf
    u = min(max(u, 0.0), 1.0)
    return float(xlogy(u, u) + xlogy(1.0 - u, 1.0 - u))


def conjugate_array(
    kind: LossKind, alpha: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized conjugate evaluation: (values, feasible_mask).

    Values are only meaningful where the mask is True.
    """
    u = alpha * y
    if kind is LossKind.HINGE:
        ok = (u >= -FEASIBILITY_SLACK) & (u <= 1.0 + FEASIBILITY_SLACK)
        uc = np.clip(u, 0.0, 1.0)
        return -uc, ok
    if kind is LossKind.SQUARED_HINGE:
        ok = u >= -FEASIBILITY_SLACK
        uc = np.maximum(u, 0.0)
        return -uc + 0.25 * uc * uc, ok
    ok = (u >= -FEASIBILITY_SLACK) & (u <= 1.0 + FEASIBILITY_SLACK)
    uc = np.clip(u, 0.0, 1.0)
    return xlogy(uc, uc) + xlogy(1.0 - uc, 1.0 - uc), ok


def grad_gstar(v: np.ndarray) -> np.ndarray:
    """Gradient of g*(v) = ||v||^2 / 2: the identity map."""
    return np.asarray(v, dtype=np.float64)


@dataclass
class StepContext:
    """Inputs for one coordinate step.

    v_dot_x is the current (possibly stale) shared-vector dot product with
    the example; alpha_i is the example's dual value including any step
    accumulation from the in-progress round. conj_weight rescales the
    conjugate term (1.0 for whole-n scaling, n/n_k for per-block scaling).
    """

    lam: float
    n: int
    sigma: float
    point: SparsePoint
    v_dot_x: float
    alpha_i: float
    conj_weight: float = 1.0


def coordinate_step(kind: LossKind, ctx: StepContext) -> float:
    """Maximizing step eps for one dual coordinate. New value is alpha_i + eps.

    The objective is strictly concave in eps, so the maximizer is unique;
    the hinge case is solved in closed form and the smooth cases by a
    bracketed Newton iteration on the derivative.
    """
    sqn = ctx.point.squared_norm
    if sqn <= 0.0:
        raise ValueError("coordinate step requires a nonzero example")
    if ctx.sigma <= 0.0 or ctx.lam <= 0.0 or ctx.n <= 0:
        raise ValueError("sigma, lam and n must be positive")
    curvature = ctx.sigma * sqn / (ctx.lam * ctx.n)
    fn = _STEP_FUNCTIONS[kind]
    return fn(ctx.alpha_i, ctx.point.label, ctx.v_dot_x, curvature, ctx.conj_weight)


def step_function(kind: LossKind):
    """Scalar stepper `f(a, y, v_dot_x, curvature, conj_weight) -> eps` where
    curvature = sigma * ||x_i||^2 / (lam * n). Hot-loop entry point."""
    return _STEP_FUNCTIONS[kind]


def _step_hinge(a: float, y: float, vdx: float, A: float, cw: float) -> float:
    # In u = (a + eps) * y the objective is a concave parabola maximized at
    # u = a*y + (cw - y*vdx)/A, and the feasible set is [0, 1].
    u = a * y + (cw - y * vdx) / A
    if u < 0.0:
        u = 0.0
    elif u > 1.0:
        u = 1.0
    return y * u - a


def _step_squared_hinge(a: float, y: float, vdx: float, A: float, cw: float) -> float:
    # Derivative in u: cw*(1 - u/2) - y*vdx - A*(u - a*y), domain u >= 0.
    ay = a * y

    def deriv(u: float) -> float:
        return cw * (1.0 - 0.5 * u) - y * vdx - A * (u - ay)

    def deriv2(_u: float) -> float:
        return -0.5 * cw - A

    hi = max(1.0, ay + 1.0)
    for _ in range(200):
        if deriv(hi) < 0.0:
            break
        hi *= 2.0
    u = _newton_bracketed(deriv, deriv2, 0.0, hi, max(ay, 0.0))
    return y * u - a


def _step_logistic(a: float, y: float, vdx: float, A: float, cw: float) -> float:
    # Derivative in u: -cw*log(u/(1-u)) - y*vdx - A*(u - a*y), domain (0, 1);
    # the search interval is clamped away from the endpoints where the
    # conjugate's derivative diverges.
    ay = a * y
    lo = _LOGISTIC_CLAMP
    hi = 1.0 - _LOGISTIC_CLAMP

    def deriv(u: float) -> float:
        return -cw * math.log(u / (1.0 - u)) - y * vdx - A * (u - ay)

    def deriv2(u: float) -> float:
        return -cw * (1.0 / u + 1.0 / (1.0 - u)) - A

    start = min(max(ay, lo), hi)
    u = _newton_bracketed(deriv, deriv2, lo, hi, start)
    return y * u - a


def _newton_bracketed(deriv, deriv2, lo: float, hi: float, start: float) -> float:
    """Root of a strictly decreasing derivative on [lo, hi].

    Newton steps are kept inside a shrinking sign-change bracket, falling
    back to bisection whenever a step leaves it; if the derivative does not
    change sign the maximum sits on the boundary.
    """
    dlo = deriv(lo)
    if not math.isfinite(dlo):
        raise StepError("non-finite derivative at bracket endpoint")
    if dlo <= 0.0:
        return lo
    dhi = deriv(hi)
    if not math.isfinite(dhi):
        raise StepError("non-finite derivative at bracket endpoint")
    if dhi >= 0.0:
        return hi
    b = min(max(start, lo), hi)
    blo, bhi = lo, hi
    for _ in range(_NEWTON_MAX_ITER):
        g = deriv(b)
        if not math.isfinite(g):
            raise StepError("non-finite derivative during Newton iteration")
        if g > 0.0:
            blo = b
        elif g < 0.0:
            bhi = b
        else:
            return b
        nxt = b - g / deriv2(b)
        if not math.isfinite(nxt) or nxt <= blo or nxt >= bhi:
            nxt = 0.5 * (blo + bhi)
        if abs(nxt - b) <= _NEWTON_TOL * (1.0 + abs(nxt)):
            return nxt
        b = nxt
    for _ in range(200):
        mid = 0.5 * (blo + bhi)
        g = deriv(mid)
        if not math.isfinite(g):
            raise StepError("non-finite derivative during bisection")
        if g > 0.0:
            blo = mid
        else:
            bhi = mid
        if bhi - blo <= _NEWTON_TOL * (1.0 + abs(bhi)):
            break
    return 0.5 * (blo + bhi)


_STEP_FUNCTIONS = {
    LossKind.HINGE: _step_hinge,
    LossKind.SQUARED_HINGE: _step_squared_hinge,
    LossKind.LOGISTIC: _step_logistic,
}
