"""
Characteristic analysis of the nonlocal lattice model

    u_n' = D (u_{n+1} + u_{n-1} - 2 u_n) - u_n + sum_k beta(n - k) g(u_k(t - h)),

through B(z) = sum_k beta(k) exp(-z k), its abscissa of convergence gamma^# and

    chi~(z, c) = 1 + 2D + c z - D (e^z + e^-z) - g'(0) exp(-c h z) B(z).
"""
import logging
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import bisect

from ..engine.constants import KernelKind
from ..engine.errors import DivergenceError, DomainError, NumericError
from .nonlinearity import NonlinearitySpec
from .profile import DecayFit, Profile, decay_rate_fit, default_decay_window, eval_profile, level_crossing, make_profile

if TYPE_CHECKING:
    from .dns import Trajectory


logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-12
TAIL_MASS = 1e-12
SERIES_RTOL = 1e-14
MULTIPLICITY_TOL = 1e-8
# tabulated kernels without a declared gamma^# refuse z beyond this fraction of the estimate
APPROXIMATE_GAMMA_FRACTION = 0.95
ROOT_XTOL = 1e-15
ROOT_RTOL = 1e-13



class KernelSpec(BaseModel):
    """
    finite: explicit weights {k: beta(k)};  geometric: beta(k) = (1 - q) / (1 + q) q^|k|;
    table: weights with an optional declared gamma_sharp.
    """
    model_config = ConfigDict(frozen=True)

    kind: KernelKind = KernelKind.FINITE
    weights: Optional[Dict[int, float]] = None
    q: Optional[float] = Field(default=None, gt=0, lt=1)
    gamma_sharp: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_weights(self) -> "KernelSpec":
        if self.kind == KernelKind.GEOMETRIC:
            if self.q is None:
                raise ValueError("a geometric kernel needs q")
            return self
        if not self.weights:
            raise ValueError(f"a {self.kind.value} kernel needs weights")
        values = np.array(list(self.weights.values()), dtype=float)
        if np.any(values < 0):
            raise ValueError("kernel weights must be nonnegative")
        if abs(values.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"kernel weights must sum to 1, got {values.sum():.15g}")
        return self

    @property
    def approximate(self) -> bool:
        return self.kind == KernelKind.TABLE and self.gamma_sharp is None and np.isfinite(gamma_sharp(self))

    def support(self, tail_mass: float = TAIL_MASS) -> Tuple[np.ndarray, np.ndarray]:
        """offsets and weights, truncated where the remaining mass is below tail_mass."""
        if self.kind == KernelKind.GEOMETRIC:
            q = self.q
            norm = (1.0 - q) / (1.0 + q)
            # two-sided tail mass beyond |k| = K is 2 norm q^(K+1) / (1 - q)
            K = max(int(np.ceil(np.log(tail_mass * (1.0 - q) / (2.0 * norm)) / np.log(q))), 0)
            offsets = np.arange(-K, K + 1)
            return offsets, norm * q ** np.abs(offsets)
        offsets = np.array(sorted(self.weights), dtype=int)
        return offsets, np.array([self.weights[k] for k in offsets], dtype=float)


def delta_kernel() -> KernelSpec:
    return KernelSpec(kind=KernelKind.FINITE, weights={0: 1.0})


def geometric_kernel(q: float) -> KernelSpec:
    return KernelSpec(kind=KernelKind.GEOMETRIC, q=q)


class LatticeModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    D: float = Field(default=1.0, ge=0)
    kernel: KernelSpec = Field(default_factory=delta_kernel)
    h: float = Field(default=0.0, ge=0)
    spec: NonlinearitySpec
    c: float = 1.0


class LatticeCharReport(BaseModel):
    gamma_sharp: float
    gamma_approximate: bool = False
    found: bool
    lambda_: Optional[float] = Field(default=None, serialization_alias="lambda")
    multiplicity_j: Optional[int] = None
    root_residual: Optional[float] = None
    derivative: Optional[float] = None
    note: Optional[str] = None


class ShiftMatch(BaseModel):
    s0: float
    sup_error: float


class LatticeDecayReport(BaseModel):
    fit: Optional[DecayFit] = None
    monotonicity_violations: int
    max_violation: float
    speed: float



def gamma_sharp(kernel: KernelSpec) -> float:
    """
    -limsup_{k -> inf} ln beta(-k) / k; +inf for finite support. For tables without a declared
    value the limsup is estimated from the outer third of the negative support.
    """
    if kernel.kind == KernelKind.GEOMETRIC:
        return float(np.log(1.0 / kernel.q))
    if kernel.kind == KernelKind.TABLE and kernel.gamma_sharp is not None:
        return float(kernel.gamma_sharp)
    if kernel.kind == KernelKind.FINITE:
        return float("inf")

    k = np.array([-j for j, w in kernel.weights.items() if j < 0 and w > 0], dtype=float)
    if k.size < 3:
        return float("inf")
    w = np.array([kernel.weights[int(-j)] for j in k])
    order = np.argsort(k)
    k, w = k[order], w[order]
    outer = slice(2 * k.size // 3, None)
    estimate = -float(np.max(np.log(w[outer]) / k[outer]))
    if estimate <= 0:
        return float("inf")
    logger.info(f"estimated gamma^# = {estimate:.6g} from {k.size} tabulated weights (approximate)")
    return estimate


def _admissible_limit(kernel: KernelSpec) -> float:
    gamma = gamma_sharp(kernel)
    if kernel.kind == KernelKind.TABLE and kernel.gamma_sharp is None and np.isfinite(gamma):
        return APPROXIMATE_GAMMA_FRACTION * gamma
    return gamma


def _check_z(kernel: KernelSpec, z: float) -> None:
    if z < 0:
        raise DomainError(f"B(z) is evaluated for z >= 0, got {z}")
    limit = _admissible_limit(kernel)
    if z >= limit:
        raise DivergenceError(f"B(z) diverges or is uncertified at z = {z:.6g} (admissible z < {limit:.6g})")


def b_transform(kernel: KernelSpec, z: float) -> float:
    _check_z(kernel, z)
    if kernel.kind == KernelKind.GEOMETRIC:
        q = kernel.q
        em, ep = q * np.exp(-z), q * np.exp(z)
        return float((1.0 - q) / (1.0 + q) * (1.0 + em / (1.0 - em) + ep / (1.0 - ep)))

    offsets, weights = kernel.support()
    terms = weights * np.exp(-z * offsets)
    # largest terms first, stop once the remainder is negligible
    terms = np.sort(terms)[::-1]
    partial = np.cumsum(terms)
    remainder = partial[-1] - partial
    cut = int(np.argmax(remainder <= SERIES_RTOL * partial)) + 1
    return float(partial[cut - 1])


def b_transform_derivative(kernel: KernelSpec, z: float) -> float:
    _check_z(kernel, z)
    if kernel.kind == KernelKind.GEOMETRIC:
        q = kernel.q
        em, ep = q * np.exp(-z), q * np.exp(z)
        return float((1.0 - q) / (1.0 + q) * (-em / (1.0 - em) ** 2 + ep / (1.0 - ep) ** 2))
    offsets, weights = kernel.support()
    return float(-np.sum(offsets * weights * np.exp(-z * offsets)))


def lattice_chi(z: float, model: LatticeModel) -> float:
    D, c, h = model.D, model.c, model.h
    B = b_transform(model.kernel, z)
    return float(1.0 + 2.0 * D + c * z - D * (np.exp(z) + np.exp(-z)) - model.spec.gp0 * np.exp(-c * h * z) * B)


def lattice_chi_dz(z: float, model: LatticeModel) -> float:
    D, c, h = model.D, model.c, model.h
    B = b_transform(model.kernel, z)
    dB = b_transform_derivative(model.kernel, z)
    return float(c - D * (np.exp(z) - np.exp(-z)) - model.spec.gp0 * np.exp(-c * h * z) * (dB - c * h * B))


def _scale(model: LatticeModel) -> float:
    return max(1.0, abs(model.c), model.D, model.spec.gp0)


def _chi_maximum(model: LatticeModel, limit: float) -> Tuple[float, float]:
    """(z_max, chi~(z_max)) on [0, limit); chi~ is concave in z."""
    dchi = lambda z: lattice_chi_dz(z, model)
    if dchi(0.0) <= 0:
        return 0.0, lattice_chi(0.0, model)

    top = limit * (1.0 - 1e-9) if np.isfinite(limit) else None
    hi = 1.0
    while True:
        if top is not None and hi >= top:
            hi = top
            break
        if dchi(hi) < 0:
            break
        hi *= 2.0
        if hi > 1e6:
            raise NumericError("chi~ keeps increasing; no maximum found below z = 1e6")
    if dchi(hi) >= 0:
        return hi, lattice_chi(hi, model)
    z_max = bisect(dchi, 0.0, hi, xtol=ROOT_XTOL, rtol=ROOT_RTOL, maxiter=400)
    return z_max, lattice_chi(z_max, model)


def _rising_bracket(model: LatticeModel, limit: float, floor: float) -> Optional[float]:
    """hi with chi~(hi) > floor reached while chi~ still rises, or None."""
    top = limit * (1.0 - 1e-9) if np.isfinite(limit) else None
    hi = 1.0
    while hi <= 1e6:
        if top is not None and hi >= top:
            hi = top
        if lattice_chi(hi, model) > floor:
            return hi
        if hi == top or lattice_chi_dz(hi, model) <= 0:
            return None
        hi *= 2.0
    return None


def lattice_lambda(model: LatticeModel) -> LatticeCharReport:
    """
    Smallest positive root of chi~(., c) on (0, gamma^#) and its multiplicity (j = 1 when
    |d chi~/dz| falls below 1e-8 times the model scale). A missing root is reported, not raised.
    """
    if model.c == 0:
        raise DomainError("lattice_lambda needs c != 0")
    gamma = gamma_sharp(model.kernel)
    limit = _admissible_limit(model.kernel)
    approximate = model.kernel.approximate
    scale = _scale(model)
    chi = lambda z: lattice_chi(z, model)

    # chi~(0) = 1 - g'(0) < 0 and chi~ is concave: one crossing on the rising branch
    hi = _rising_bracket(model, limit, MULTIPLICITY_TOL * scale)
    if hi is not None:
        lam = bisect(chi, 0.0, hi, xtol=ROOT_XTOL, rtol=ROOT_RTOL, maxiter=400)
    else:
        z_max, m = _chi_maximum(model, limit)
        if m < -MULTIPLICITY_TOL * scale:
            note = f"chi~ stays negative on (0, {limit:.6g}); max {m:.3e} at z = {z_max:.6g}"
            logger.info(note)
            return LatticeCharReport(gamma_sharp=gamma, gamma_approximate=approximate, found=False, note=note)
        if m <= MULTIPLICITY_TOL * scale:
            lam = z_max
        else:
            lam = bisect(chi, 0.0, z_max, xtol=ROOT_XTOL, rtol=ROOT_RTOL, maxiter=400)

    derivative = lattice_chi_dz(lam, model)
    j = 1 if abs(derivative) <= MULTIPLICITY_TOL * scale else 0
    return LatticeCharReport(
        gamma_sharp=gamma, gamma_approximate=approximate, found=True, lambda_=float(lam), multiplicity_j=j,
        root_residual=abs(lattice_chi(lam, model)), derivative=derivative
    )


def lattice_double_root_speed(model: LatticeModel, c_max: float = 1e4) -> Tuple[float, float]:
    """
    The speed c > 0 where max_z chi~(z, c) = 0, and the double root there. The maximum is
    increasing in c: d chi~ / dc = z (1 + g'(0) h exp(-c h z) B(z)) > 0 for z > 0.
    """
    limit = _admissible_limit(model.kernel)

    def max_value(c: float) -> float:
        return _chi_maximum(model.model_copy(update={"c": c}), limit)[1]

    c_lo = 1e-6
    if max_value(c_lo) >= 0:
        raise NumericError("chi~ already has a root at c = 1e-6; no positive double-root speed")
    c_hi = 1.0
    while max_value(c_hi) < 0:
        c_hi *= 2.0
        if c_hi > c_max:
            raise NumericError(f"no double-root speed below c = {c_max:g}")
    c = bisect(max_value, c_lo, c_hi, xtol=1e-12, rtol=ROOT_RTOL, maxiter=400)
    z, _ = _chi_maximum(model.model_copy(update={"c": c}), limit)
    return float(c), float(z)



def shift_match(a: Profile, b: Profile) -> ShiftMatch:
    """
    s0 with b(t) = a(t + s0) at the gauge level kappa / 2, and the sup over a's grid of
    |a(t) - b(t - s0)|.
    """
    if abs(a.kappa - b.kappa) > 1e-9:
        raise DomainError(f"shift_match needs profiles with the same kappa, got {a.kappa} and {b.kappa}")
    level = 0.5 * a.kappa
    t_a = level_crossing(a, level)
    t_b = level_crossing(b, level)
    s0 = t_a - t_b
    sup_error = float(np.max(np.abs(a.values - eval_profile(b, a.grid - s0))))
    return ShiftMatch(s0=float(s0), sup_error=sup_error)



def lattice_front_decay(
    trajectory: "Trajectory", speed: float, window: Tuple[float, float] = (1e-10, 1e-3)
) -> LatticeDecayReport:
    """
    Settled lattice front from the final snapshot, as a function of s = c T - n, with its decay fit.
    Decreases in s are counted rather than assumed away; the fit uses the monotone envelope.
    """
    kappa = trajectory.config.spec.kappa
    T = float(trajectory.times[-1])
    state = np.asarray(trajectory.states[-1], dtype=float)
    s = (speed * T - trajectory.x)[::-1]
    values = state[::-1]

    drops = -np.diff(values)
    violations = int(np.sum(drops > 1e-10 * kappa))
    max_violation = float(max(drops.max(), 0.0))
    if violations:
        logger.warning(f"settled lattice front decreases at {violations} sites (max drop {max_violation:.3e})")

    envelope = np.clip(np.maximum.accumulate(values), 0.0, kappa)
    profile = make_profile(s, envelope, speed, trajectory.config.h, kappa, strict=False, tail_hints={"left_rate": 1.0, "right_rate": 1.0})
    fit = None
    try:
        fit = decay_rate_fit(profile, default_decay_window(profile, *window))
    except DomainError as e:
        logger.warning(f"no decay fit for the settled lattice front: {e}")
    return LatticeDecayReport(fit=fit, monotonicity_violations=violations, max_violation=max_violation, speed=speed)
