"""
Reaction functions g of the delayed equation u_t = u_xx - u + g(u(t-h, x)).

A NonlinearitySpec is the serializable description of g (family, parameters, kappa and an optional
Hoelder triple). Derived constants g'(0), g'(kappa) and g'_+ = sup g(u)/u are always recomputed
from the family; a file that carries them is rejected.
"""
import logging
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr
from scipy.interpolate import PchipInterpolator
from scipy.stats import linregress

from ..engine.constants import Family
from ..engine.errors import DomainError, NumericError


logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps

# lower bound on fitted Hoelder constants; an exactly linear start gives a sampled maximum of 0
HOELDER_FLOOR = 1e-6
# deviations below this (relative to g'(0)) are rounding, not curvature
HOELDER_RESOLUTION = 1e-10
HOELDER_MIN_THETA = 0.05



class HoelderTriple(BaseModel):
    model_config = ConfigDict(frozen=True)

    C: float = Field(gt=0)
    theta: float = Field(gt=0, le=1)
    delta: float = Field(gt=0)


class CheckResult(BaseModel):
    name: str
    passed: bool
    worst_point: Optional[float] = None
    margin: float

    def __repr__(self) -> str:
        flag = "ok" if self.passed else "FAILED"
        return f"Check({self.name}: {flag}, worst_point={self.worst_point}, margin={self.margin:.3e})"


class ValidationReport(BaseModel):
    passed: bool
    checks: List[CheckResult]
    relaxed: bool = False
    sub_tangential: bool = False
    gcos_verified: bool = False
    lipschitz_gp0: bool = False

    def failed(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]



class _RationalKPP:
    def __init__(self, params: Dict[str, Any], kappa: float) -> None:
        self.p = float(params["p"])
        self.kappa = kappa
        self.a = (self.p - 1.0) / kappa
        self.top = 1.5 * kappa
        self.increasing_limit = self.top

    def g(self, u: np.ndarray) -> np.ndarray:
        u = np.minimum(u, self.top)
        return self.p * u / (1.0 + self.a * u)

    def dg(self, u: np.ndarray) -> np.ndarray:
        inside = u < self.top
        u = np.minimum(u, self.top)
        return np.where(inside, self.p / (1.0 + self.a * u) ** 2, 0.0)

    def gp0(self) -> float:
        return self.p

    def gp_kappa(self) -> float:
        return self.p / (1.0 + self.a * self.kappa) ** 2

    def exact_gp_plus(self) -> Optional[float]:
        # concave for p >= 1, so the ratio peaks at 0+
        return self.p if self.p >= 1.0 else None

    def default_hoelder(self) -> HoelderTriple:
        C = max(2.0 * self.p * abs(self.p - 1.0) / self.kappa, HOELDER_FLOOR)
        return HoelderTriple(C=C, theta=1.0, delta=self.kappa)


class _MonotoneSpline:
    def __init__(self, params: Dict[str, Any], kappa: float) -> None:
        self.u = np.asarray(params["u"], dtype=float)
        self.values = np.asarray(params["g"], dtype=float)
        if self.u.shape != self.values.shape or self.u.size < 3:
            raise DomainError("spline control points need matching 'u' and 'g' lists of length >= 3")
        if np.any(np.diff(self.u) <= 0):
            raise DomainError("spline control abscissae must be strictly increasing")
        if self.u[0] != 0.0:
            raise DomainError("spline control points must start at u = 0")
        self.kappa = kappa
        self.interp = PchipInterpolator(self.u, self.values, extrapolate=False)
        self.dinterp = self.interp.derivative()
        self.top = float(self.u[-1])
        self.increasing_limit = self.top

    def g(self, u: np.ndarray) -> np.ndarray:
        inside = np.clip(u, 0.0, self.top)
        return np.where(u >= self.top, self.values[-1], self.interp(inside))

    def dg(self, u: np.ndarray) -> np.ndarray:
        inside = np.clip(u, 0.0, self.top)
        return np.where(u > self.top, 0.0, self.dinterp(inside))

    def gp0(self) -> float:
        return float(self.dinterp(0.0))

    def gp_kappa(self) -> float:
        return float(self.dinterp(min(self.kappa, self.top)))

    def exact_gp_plus(self) -> Optional[float]:
        return None

    def default_hoelder(self) -> HoelderTriple:
        return _fitted_hoelder(self.g, self.gp0(), float(self.u[1]))


class _UserTable(_MonotoneSpline):
    """piecewise-linear table; no derivative is exposed, so the derivative Hoelder bound stays unverified."""

    def __init__(self, params: Dict[str, Any], kappa: float) -> None:
        self.u = np.asarray(params["u"], dtype=float)
        self.values = np.asarray(params["g"], dtype=float)
        if self.u.shape != self.values.shape or self.u.size < 2:
            raise DomainError("table needs matching 'u' and 'g' lists of length >= 2")
        if np.any(np.diff(self.u) <= 0):
            raise DomainError("table abscissae must be strictly increasing")
        if self.u[0] != 0.0:
            raise DomainError("table must start at u = 0")
        self.kappa = kappa
        self.top = float(self.u[-1])
        self.increasing_limit = self.top
        self.dinterp = None

    def g(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.u, self.values)

    def dg(self, u: np.ndarray) -> None:
        return None

    def gp0(self) -> float:
        return float((self.values[1] - self.values[0]) / (self.u[1] - self.u[0]))

    def gp_kappa(self) -> float:
        # left secant of the segment ending at (or containing) kappa
        k = int(np.searchsorted(self.u, self.kappa, side="left"))
        k = min(max(k, 1), self.u.size - 1)
        return float((self.values[k] - self.values[k - 1]) / (self.u[k] - self.u[k - 1]))


class _Linear:
    def __init__(self, params: Dict[str, Any], kappa: float) -> None:
        self.p = float(params["p"])
        self.kappa = kappa
        self.top = np.inf
        self.increasing_limit = 1.5 * kappa

    def g(self, u: np.ndarray) -> np.ndarray:
        return self.p * u

    def dg(self, u: np.ndarray) -> np.ndarray:
        return np.full_like(u, self.p, dtype=float)

    def gp0(self) -> float:
        return self.p

    def gp_kappa(self) -> float:
        return self.p

    def exact_gp_plus(self) -> Optional[float]:
        return self.p

    def default_hoelder(self) -> HoelderTriple:
        return HoelderTriple(C=HOELDER_FLOOR, theta=1.0, delta=self.kappa)


class _Minorant:
    """g_-(x) = min{g(x), p(x)} with p(x) = g'(0) x / (1 + A x) and A = 2 (g'(0) - 1) / kappa."""

    def __init__(self, base: "NonlinearitySpec", kappa: float) -> None:
        self.base = base
        self.kappa = kappa
        self.slope = base.gp0
        self.A = 2.0 * (self.slope - 1.0) / base.kappa
        self.top = 1.5 * kappa
        self.increasing_limit = self.top

    def p(self, u: np.ndarray) -> np.ndarray:
        return self.slope * u / (1.0 + self.A * u)

    def g(self, u: np.ndarray) -> np.ndarray:
        u = np.minimum(u, self.top)
        return np.minimum(self.base.g(u), self.p(u))

    def dg(self, u: np.ndarray) -> Optional[np.ndarray]:
        base_dg = self.base.dg(u)
        if base_dg is None:
            return None
        inside = u < self.top
        u = np.minimum(u, self.top)
        dp = self.slope / (1.0 + self.A * u) ** 2
        active_base = self.base.g(u) < self.p(u)
        return np.where(inside, np.where(active_base, base_dg, dp), 0.0)

    def gp0(self) -> float:
        return self.slope

    def gp_kappa(self) -> float:
        # g > x on (0, kappa) forces the rational branch to be active at kappa/2
        return self.slope / (1.0 + self.A * self.kappa) ** 2

    def exact_gp_plus(self) -> Optional[float]:
        return self.slope

    def default_hoelder(self) -> HoelderTriple:
        base = self.base.hoelder_triple
        C = max(base.C, 2.0 * self.slope * self.A * base.delta ** (1.0 - base.theta))
        return HoelderTriple(C=C, theta=base.theta, delta=base.delta)


def _fitted_hoelder(g, gp0: float, delta: float, n: int = 2000) -> HoelderTriple:
    """
    Hoelder triple for |g(u)/u - g'(0)| <= C u^theta on (0, delta]. theta is the log-log slope of the
    sampled deviation, clipped to (0, 1]; C is the sampled maximum of deviation / u^theta with a 5% margin.
    """
    u = np.geomspace(delta * 1e-3, delta, n)
    deviation = np.abs(g(u) / u - gp0)
    resolved = deviation > HOELDER_RESOLUTION * max(abs(gp0), 1.0)
    if np.count_nonzero(resolved) < 10:
        # g is linear up to rounding on (0, delta]
        return HoelderTriple(C=HOELDER_FLOOR, theta=1.0, delta=delta)

    fit = linregress(np.log(u[resolved]), np.log(deviation[resolved]))
    theta = float(np.clip(fit.slope, HOELDER_MIN_THETA, 1.0))
    C = max(1.05 * float(np.max(deviation / u ** theta)), HOELDER_FLOOR)
    return HoelderTriple(C=C, theta=theta, delta=delta)


_FAMILIES = {
    Family.RATIONAL_KPP: _RationalKPP,
    Family.MONOTONE_SPLINE: _MonotoneSpline,
    Family.USER_TABLE: _UserTable,
    Family.LINEAR: _Linear,
}



class NonlinearitySpec(BaseModel):
    """
    Serializable reaction function. Construct it directly from JSON
    ({family, params, kappa, hoelder}; other keys are rejected) or with the factory helpers below.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    family: Family
    params: Dict[str, Any] = Field(default_factory=dict)
    kappa: float = Field(gt=0)
    hoelder: Optional[HoelderTriple] = None
    base: Optional["NonlinearitySpec"] = None

    _impl: Any = PrivateAttr(default=None)
    _gp0: float = PrivateAttr(default=float("nan"))
    _gp_kappa: float = PrivateAttr(default=float("nan"))
    _gp_plus: float = PrivateAttr(default=float("nan"))
    _hoelder: Optional[HoelderTriple] = PrivateAttr(default=None)

    def model_post_init(self, __context: Any) -> None:
        if self.family == Family.MINORANT:
            if self.base is None:
                raise DomainError("a Minorant spec needs its base spec")
            self._impl = _Minorant(self.base, self.kappa)
        else:
            try:
                self._impl = _FAMILIES[self.family](self.params, self.kappa)
            except KeyError as e:
                raise DomainError(f"missing parameter {e} for family {self.family.value}") from e

        self._gp0 = float(self._impl.gp0())
        self._gp_kappa = float(self._impl.gp_kappa())
        self._hoelder = self.hoelder if self.hoelder is not None else self._impl.default_hoelder()

        exact = self._impl.exact_gp_plus()
        if exact is not None:
            self._gp_plus = float(exact)
        else:
            try:
                self._gp_plus = _refined_sup_ratio(self)
            except NumericError as e:
                logger.warning(f"g'_+ unavailable for {self.family.value}: {e}")

    def __repr__(self) -> str:
        return f"NonlinearitySpec(family={self.family.value}, kappa={self.kappa}, gp0={self._gp0:.6g}, gp_plus={self._gp_plus:.6g})"

    @property
    def gp0(self) -> float:
        return self._gp0

    @property
    def gp_kappa(self) -> float:
        return self._gp_kappa

    @property
    def gp_plus(self) -> float:
        return self._gp_plus

    @property
    def hoelder_triple(self) -> HoelderTriple:
        return self._hoelder

    @property
    def has_derivative(self) -> bool:
        return self.family != Family.USER_TABLE and not (
            self.family == Family.MINORANT and not self.base.has_derivative
        )

    @property
    def increasing_limit(self) -> float:
        return float(self._impl.increasing_limit)

    def g(self, u: Union[float, np.ndarray]) -> np.ndarray:
        """unchecked vectorized evaluation for internal hot loops."""
        return self._impl.g(np.asarray(u, dtype=float))

    def dg(self, u: Union[float, np.ndarray]) -> Optional[np.ndarray]:
        return self._impl.dg(np.asarray(u, dtype=float))

    def to_json_dict(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json", exclude_none=True)
        data["hoelder"] = self.hoelder_triple.model_dump()
        return data


NonlinearitySpec.model_rebuild()



def rational_kpp(p: float = 2.0, kappa: float = 1.0) -> NonlinearitySpec:
    return NonlinearitySpec(family=Family.RATIONAL_KPP, params={"p": p}, kappa=kappa)


def linear(p: float, kappa: float = 1.0) -> NonlinearitySpec:
    return NonlinearitySpec(family=Family.LINEAR, params={"p": p}, kappa=kappa)


def monotone_spline(u: List[float], g: List[float], kappa: float = 1.0) -> NonlinearitySpec:
    return NonlinearitySpec(family=Family.MONOTONE_SPLINE, params={"u": list(u), "g": list(g)}, kappa=kappa)


PUSHED_CANDIDATE_U = [0.0, 0.02, 0.05, 0.2, 0.4, 0.6, 0.8, 1.0]
PUSHED_CANDIDATE_G = [0.0, 0.03, 0.075, 0.5, 0.8, 0.92, 0.97, 1.0]


def pushed_candidate() -> NonlinearitySpec:
    """spline with g'(0) = 1.5 whose ratio g(u)/u climbs to about 2.5 near u = 0.2."""
    return monotone_spline(PUSHED_CANDIDATE_U, PUSHED_CANDIDATE_G, kappa=1.0)



def eval_g(spec: NonlinearitySpec, u: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"g is defined for u >= 0 only, got min(u) = {np.nanmin(arr) if arr.size else arr}")
    out = spec.g(arr)
    if np.ndim(u) == 0:
        return float(out)
    return out


def _refined_sup_ratio(spec: NonlinearitySpec, rtol: float = 1e-10, max_rounds: int = 80) -> float:
    top = 1.5 * spec.kappa
    u = np.linspace(top / 2000.0, top, 2000)
    ratio = spec.g(u) / u
    k = int(np.argmax(ratio))
    best = float(ratio[k])
    if spec.gp0 >= best:
        return spec.gp0

    lo, hi = u[max(k - 1, 0)], u[min(k + 1, u.size - 1)]
    for _ in range(max_rounds):
        u = np.linspace(lo, hi, 201)
        ratio = spec.g(u) / u
        k = int(np.argmax(ratio))
        candidate = float(ratio[k])
        lo, hi = u[max(k - 1, 0)], u[min(k + 1, u.size - 1)]
        if abs(candidate - best) <= rtol * abs(best) and hi - lo <= 1e-9 * top:
            return max(candidate, best)
        best = max(candidate, best)

    raise NumericError(
        f"sup g(u)/u refinement did not settle after {max_rounds} rounds: "
        f"last estimate {best:.12g} on [{lo:.6g}, {hi:.6g}]"
    )


def sup_ratio(spec: NonlinearitySpec) -> float:
    if spec.family in (Family.RATIONAL_KPP, Family.LINEAR, Family.MINORANT) and np.isfinite(spec.gp_plus):
        return spec.gp_plus
    return _refined_sup_ratio(spec)


def lower_minorant(spec: NonlinearitySpec) -> NonlinearitySpec:
    A = 2.0 * (spec.gp0 - 1.0) / spec.kappa
    return NonlinearitySpec(
        family=Family.MINORANT, params={"A": A}, kappa=spec.kappa / 2.0, base=spec
    )



def _check(name: str, margins: np.ndarray, points: np.ndarray) -> CheckResult:
    k = int(np.argmin(margins))
    margin = float(margins[k])
    return CheckResult(name=name, passed=bool(margin > 0), worst_point=float(points[k]), margin=margin)


def validate_H(spec: NonlinearitySpec, n_samples: int = 10000, relaxed: bool = False) -> ValidationReport:
    """
    Runs the hypothesis checks on sampled grids. Failures are reported, never raised.
    In relaxed mode nondecreasing g is accepted (lattice-only runs).
    """
    if n_samples < 100:
        raise DomainError(f"validate_H needs n_samples >= 100, got {n_samples}")

    kappa = spec.kappa
    checks: List[CheckResult] = []
    scale = max(1.0, kappa)

    g0 = float(spec.g(0.0))
    checks.append(CheckResult(name="g(0) = 0", passed=abs(g0) <= 1e-12 * scale, worst_point=0.0, margin=1e-12 * scale - abs(g0)))

    gk = float(spec.g(kappa))
    tol_k = 1e-9 * scale
    checks.append(CheckResult(name="g(kappa) = kappa", passed=abs(gk - kappa) <= tol_k, worst_point=kappa, margin=tol_k - abs(gk - kappa)))

    checks.append(CheckResult(name="g'(0) > 1", passed=spec.gp0 > 1.0, worst_point=0.0, margin=spec.gp0 - 1.0))
    checks.append(CheckResult(name="g'(kappa) < 1", passed=spec.gp_kappa < 1.0, worst_point=kappa, margin=1.0 - spec.gp_kappa))

    top = min(1.5 * kappa, spec.increasing_limit)
    u = np.linspace(0.0, top, n_samples)
    steps = np.diff(spec.g(u))
    if relaxed:
        monotone = _check("nondecreasing", steps + 16 * _EPS * scale, u[1:])
    else:
        monotone = _check("strictly increasing", steps, u[1:])
    checks.append(monotone)

    inner = np.linspace(0.0, kappa, n_samples + 2)[1:-1]
    above = np.linspace(kappa, 1.5 * kappa, n_samples + 1)[1:]
    fixed = np.concatenate([spec.g(inner) - inner, above - spec.g(above)])
    checks.append(_check("g(x) = x only at 0 and kappa", fixed, np.concatenate([inner, above])))

    gp_plus = spec.gp_plus
    if np.isfinite(gp_plus):
        checks.append(CheckResult(name="g'_+ >= g'(0)", passed=gp_plus >= spec.gp0 - 1e-9, worst_point=None, margin=gp_plus - spec.gp0 + 1e-9))
    else:
        checks.append(CheckResult(name="g'_+ >= g'(0)", passed=False, worst_point=None, margin=float("-inf")))

    triple = spec.hoelder_triple
    h = np.linspace(triple.delta / n_samples, triple.delta, n_samples)
    slack = 64 * _EPS * max(spec.gp0, 1.0)
    gco = triple.C * h ** triple.theta + slack - np.abs(spec.g(h) / h - spec.gp0)
    checks.append(_check("hoelder secant", gco, h))

    gcos_verified = False
    if spec.has_derivative:
        gcos = triple.C * h ** triple.theta + slack - np.abs(spec.dg(h) - spec.gp0)
        result = _check("hoelder derivative", gcos, h)
        checks.append(result)
        gcos_verified = result.passed

    wide = np.linspace(0.0, 1.5 * kappa, n_samples)
    sub_tangential = bool(np.all(spec.g(wide) <= spec.gp0 * wide + 16 * _EPS * scale))
    lipschitz = bool(np.all(np.abs(np.diff(spec.g(wide))) <= spec.gp0 * np.diff(wide) * (1 + 1e-9) + 16 * _EPS * scale))

    report = ValidationReport(
        passed=all(check.passed for check in checks),
        checks=checks,
        relaxed=relaxed,
        sub_tangential=sub_tangential,
        gcos_verified=gcos_verified,
        lipschitz_gp0=lipschitz,
    )
    if not report.passed:
        logger.info(f"{spec!r} failed checks: {', '.join(report.failed())}")
    return report
