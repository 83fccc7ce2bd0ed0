"""
The two-sided exponential kernel of z^2 - c z - 1 and the operators built on it:

    (A phi)(t) = [I_L(t) + I_R(t)] / (xi2 - xi1),
    I_L(t) = int_{-inf}^t exp(xi1 (t - s)) F(s) ds,   I_R(t) = int_t^{inf} exp(xi2 (t - s)) F(s) ds,

with F(s) = g(phi(s - c h)). Both half-line integrals are accumulated cell by cell with an
exponentially fitted Simpson rule (the quadratic through the two cell ends and the midpoint is
integrated exactly against the exponential weight), closed analytically beyond the grid.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.signal import lfilter
from scipy.special import factorial

from ..engine.errors import DomainError, NumericError
from .charspec import KernelRoots, xi_roots
from .nonlinearity import NonlinearitySpec
from .profile import Profile, eval_profile, make_profile


logger = logging.getLogger(__name__)

SERIES_CUTOFF = 0.5
SERIES_TERMS = 24



class JumpData(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_j: float
    alpha_j: float = 0.0
    beta_j: float = 0.0


class TailClosure(BaseModel):
    """
    Integrand model beyond a grid end, v the outward distance:
    level + (F_end - level) (1 + v / d)^degree exp(-rate v).
    """
    model_config = ConfigDict(frozen=True)

    level: float = 0.0
    rate: float = 0.0
    degree: int = Field(default=0, ge=0, le=1)
    d: float = 1.0



def _moments(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """m_n = int_0^1 v^n exp(x v) dv for n = 0, 1, 2."""
    x = np.asarray(x, dtype=float)
    m0 = np.empty_like(x)
    m1 = np.empty_like(x)
    m2 = np.empty_like(x)

    small = np.abs(x) < SERIES_CUTOFF
    if small.any():
        xs = x[small][:, None]
        k = np.arange(SERIES_TERMS)[None, :]
        terms = xs ** k / factorial(k)
        m0[small] = np.sum(terms / (k + 1), axis=1)
        m1[small] = np.sum(terms / (k + 2), axis=1)
        m2[small] = np.sum(terms / (k + 3), axis=1)

    big = ~small
    if big.any():
        xb = x[big]
        ex = np.exp(xb)
        m0[big] = np.expm1(xb) / xb
        m1[big] = (ex - m0[big]) / xb
        m2[big] = (ex - 2.0 * m1[big]) / xb
    return m0, m1, m2


def simpson_weights(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Weights (w0, wm, w1) of the samples at v = 0, 1/2, 1 for int_0^1 exp(x v) q(v) dv, exact for
    quadratics q. They are positive for |x| up to about 2.5.
    """
    m0, m1, m2 = _moments(x)
    return m0 - 3.0 * m1 + 2.0 * m2, 4.0 * m1 - 4.0 * m2, 2.0 * m2 - m1


def _closure_integral(q: float, closure: TailClosure, side: str) -> float:
    if q <= 0:
        raise NumericError(
            f"{side} tail closure needs a positive decay rate, got {q:.6g} "
            f"(the profile tail rate must stay below the kernel root on that side)"
        )
    value = 1.0 / q
    if closure.degree == 1:
        if closure.d <= 0:
            raise NumericError(f"{side} tail closure has a nonpositive polynomial scale d = {closure.d:.6g}")
        value += 1.0 / (closure.d * q * q)
    return value


def _recurrence(r: np.ndarray, local: np.ndarray, start: float) -> np.ndarray:
    """y[0] = start, y[k + 1] = r[k] y[k] + local[k]."""
    out = np.empty(local.size + 1)
    out[0] = start
    # linspace steps differ in the last bits; treat those grids as uniform
    if np.ptp(r) <= 1e-12 * abs(r[0]):
        ratio = float(np.mean(r))
        out[1:], _ = lfilter([1.0], [1.0, -ratio], local, zi=[ratio * start])
        return out
    for k in range(local.size):
        out[k + 1] = r[k] * out[k] + local[k]
    return out


def kernel_integrals(
    grid: np.ndarray, f_left: np.ndarray, f_mid: np.ndarray, f_right: np.ndarray, c: float,
    left: TailClosure, right: TailClosure
) -> Tuple[np.ndarray, np.ndarray, KernelRoots]:
    """
    I_L and I_R on the grid nodes. Cell k = [t_k, t_{k+1}] is sampled by f_left[k] (at t_k+),
    f_mid[k] and f_right[k] (at t_{k+1}-).
    """
    xi = xi_roots(c)
    steps = np.diff(grid)

    x_left = xi.xi1 * steps
    x_right = -xi.xi2 * steps
    wl0, wlm, wl1 = simpson_weights(x_left)
    wr0, wrm, wr1 = simpson_weights(x_right)
    if min(wl1.min(), wr1.min(), wl0.min(), wr0.min()) < 0:
        raise NumericError(
            f"grid too coarse for the kernel: xi2 * step = {xi.xi2 * steps.max():.3g} gives negative quadrature weights"
        )

    # left sweep: v = 0 sits at the right end of the cell
    local_left = steps * (wl0 * f_right + wlm * f_mid + wl1 * f_left)
    start_left = left.level / (-xi.xi1) + (f_left[0] - left.level) * _closure_integral(left.rate - xi.xi1, left, "left")
    I_L = _recurrence(np.exp(x_left), local_left, start_left)

    # right sweep runs backwards; v = 0 sits at the left end of the cell
    local_right = steps * (wr0 * f_left + wrm * f_mid + wr1 * f_right)
    start_right = right.level / xi.xi2 + (f_right[-1] - right.level) * _closure_integral(right.rate + xi.xi2, right, "right")
    I_R = _recurrence(np.exp(x_right)[::-1], local_right[::-1], start_right)[::-1]
    return I_L, I_R, xi


def apply_operator(
    grid: np.ndarray, f_left: np.ndarray, f_mid: np.ndarray, f_right: np.ndarray, c: float,
    left: TailClosure, right: TailClosure
) -> np.ndarray:
    I_L, I_R, xi = kernel_integrals(grid, f_left, f_mid, f_right, c, left, right)
    return (I_L + I_R) / (xi.xi2 - xi.xi1)


def quadrature_bound(grid: np.ndarray, f_nodes: np.ndarray, f_mid: np.ndarray) -> float:
    """Simpson error estimate step^4 max|F''''| / 2880 from fourth differences at half-step spacing."""
    seq = np.empty(f_nodes.size + f_mid.size)
    seq[0::2] = f_nodes
    seq[1::2] = f_mid
    half = 0.5 * float(np.diff(grid).max())
    if seq.size < 5:
        return float("nan")
    d4 = np.abs(np.diff(seq, 4)).max() / half ** 4
    return float((2.0 * half) ** 4 * d4 / 2880.0)



def _closures(phi: Profile, spec: NonlinearitySpec, c: float, h: float) -> Tuple[TailClosure, TailClosure]:
    lt = phi.left_tail
    d = lt.anchor - phi.grid[0] + c * h
    left = TailClosure(level=0.0, rate=lt.rate, degree=lt.poly_degree if d > 0 else 0, d=d if d > 0 else 1.0)
    rt = phi.right_tail
    right = TailClosure(level=float(spec.g(max(rt.offset, 0.0))), rate=rt.rate)
    return left, right


def operator_samples(phi: Profile, spec: NonlinearitySpec, c: float, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """F = g(phi(. - c h)) at the grid nodes and at the cell midpoints."""
    grid = phi.grid
    mid = 0.5 * (grid[:-1] + grid[1:])
    delay = c * h
    return spec.g(eval_profile(phi, grid - delay)), spec.g(eval_profile(phi, mid - delay))


def apply_A(phi: Profile, spec: NonlinearitySpec, c: Optional[float] = None, h: Optional[float] = None) -> Profile:
    """
    The profile of (A phi) on phi's grid, for the operator at speed c and delay h (defaulting to the
    profile's own). The Simpson error estimate is stored in meta["quadrature_bound"].
    """
    c = phi.c if c is None else float(c)
    h = phi.h if h is None else float(h)
    if c <= 0:
        raise DomainError(f"apply_A needs c > 0, got {c}")

    f_nodes, f_mid = operator_samples(phi, spec, c, h)
    left, right = _closures(phi, spec, c, h)
    values = apply_operator(phi.grid, f_nodes[:-1], f_mid, f_nodes[1:], c, left, right)
    bound = quadrature_bound(phi.grid, f_nodes, f_mid)

    hints = {"left_rate": phi.left_tail.rate, "left_degree": phi.left_tail.poly_degree, "right_rate": phi.right_tail.rate}
    return make_profile(
        phi.grid, values, c, h, phi.kappa, tail_hints=hints, strict=False, bounded=phi.bounded,
        meta={"quadrature_bound": bound}
    )



def _check_jumps(jumps: Sequence[JumpData]) -> None:
    locations = np.array([j.t_j for j in jumps])
    if locations.size > 1 and np.any(np.diff(locations) <= 0):
        raise DomainError(f"jump locations must be strictly increasing, got {locations.tolist()}")


def jump_terms(t: np.ndarray, jumps: Sequence[JumpData], xi: KernelRoots) -> np.ndarray:
    """homogeneous part of the impulsive formula, right-continuous at every t_j."""
    out = np.zeros_like(t)
    span = xi.xi2 - xi.xi1
    for jump in jumps:
        before = t < jump.t_j
        dt = t - jump.t_j
        out += np.where(
            before,
            np.exp(xi.xi2 * np.minimum(dt, 0.0)) * (xi.xi1 * jump.alpha_j - jump.beta_j),
            np.exp(xi.xi1 * np.maximum(dt, 0.0)) * (xi.xi2 * jump.alpha_j - jump.beta_j),
        ) / span
    return out


def impulsive_solve(
    f: Callable[[np.ndarray], np.ndarray], jumps: List[JumpData], c: float, grid: np.ndarray
) -> np.ndarray:
    """
    The bounded solution of psi'' - c psi' - psi = f with jumps psi(t_j+) - psi(t_j-) = alpha_j and
    psi'(t_j+) - psi'(t_j-) = beta_j, evaluated on the grid. f is sampled one-sided at the cell
    ends and taken constant beyond the grid.
    """
    grid = np.asarray(grid, dtype=float)
    _check_jumps(jumps)
    if c <= 0:
        raise DomainError(f"impulsive_solve needs c > 0, got {c}")

    f_left = np.asarray(f(np.nextafter(grid[:-1], np.inf)), dtype=float)
    f_right = np.asarray(f(np.nextafter(grid[1:], -np.inf)), dtype=float)
    f_mid = np.asarray(f(0.5 * (grid[:-1] + grid[1:])), dtype=float)

    left = TailClosure(level=float(f_left[0]))
    right = TailClosure(level=float(f_right[-1]))
    I_L, I_R, xi = kernel_integrals(grid, f_left, f_mid, f_right, c, left, right)
    return -(I_L + I_R) / (xi.xi2 - xi.xi1) + jump_terms(grid, jumps, xi)
