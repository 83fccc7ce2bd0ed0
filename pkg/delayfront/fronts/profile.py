"""
Monotone wave profiles on a truncated grid with explicit tails:

    left   (t < t_0):  A (anchor - t)^j exp(lambda t)
    right  (t > t_N):  offset - B exp(-mu t)

Inside the grid the profile is the shape-preserving PCHIP interpolant of the node values, so
pointwise order between two profiles on a common grid survives evaluation.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.stats import linregress

from ..engine.constants import Side
from ..engine.errors import ConstructionError, DomainError, NumericError
from .charspec import kappa_rate, lambda2
from .nonlinearity import NonlinearitySpec


logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny

MIN_POINTS = 16
TAIL_FRACTION = 0.1
DEGREE_RATIO = 10.0
CONTINUITY_RTOL = 1e-8
MAX_STEP_RATIO = 10.0
MIN_FIT_POINTS = 8
R2_ACCEPT = 0.999



class TailModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    side: Side
    rate: float
    coeff: float
    poly_degree: int = Field(default=0, ge=0, le=1)
    offset: float = 0.0
    anchor: float = 0.0

    def value(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.side == Side.LEFT:
            poly = (self.anchor - t) ** self.poly_degree if self.poly_degree else 1.0
            return self.coeff * poly * np.exp(self.rate * t)
        return self.offset - self.coeff * np.exp(-self.rate * t)

    def derivative(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.side == Side.LEFT:
            e = np.exp(self.rate * t)
            if self.poly_degree == 0:
                return self.coeff * self.rate * e
            return self.coeff * e * (self.rate * (self.anchor - t) - 1.0)
        return self.rate * self.coeff * np.exp(-self.rate * t)

    def shifted(self, s: float) -> "TailModel":
        """tail of t -> value(t + s)"""
        if self.side == Side.LEFT:
            return self.model_copy(update={"coeff": self.coeff * np.exp(self.rate * s), "anchor": self.anchor - s})
        return self.model_copy(update={"coeff": self.coeff * np.exp(-self.rate * s)})


class DecayFit(BaseModel):
    rate: float
    poly_degree: int
    r_squared: float
    window: Tuple[float, float]
    n_points: int
    reliable: bool


class ProfileModel(BaseModel):
    '''
    JSON sidecar of a profile CSV
    '''
    c: float
    h: float
    kappa: float
    strict: bool
    bounded: bool
    left_tail: TailModel
    right_tail: TailModel
    meta: Dict[str, Any] = Field(default_factory=dict)



class Profile:
    """
    Immutable monotone profile. Use make_profile() to fit tails from data; the constructor
    takes ready tail models and only validates.
    """
    def __init__(
        self, grid: np.ndarray, values: np.ndarray, c: float, h: float, kappa: float,
        left_tail: TailModel, right_tail: TailModel, strict: bool = True, bounded: bool = True,
        meta: Optional[Dict[str, Any]] = None
    ) -> None:
        self.grid = np.array(grid, dtype=float)
        self.values = np.array(values, dtype=float)
        self.grid.setflags(write=False)
        self.values.setflags(write=False)
        self.c = float(c)
        self.h = float(h)
        self.kappa = float(kappa)
        self.left_tail = left_tail
        self.right_tail = right_tail
        self.strict = strict
        self.bounded = bounded
        self.meta: Dict[str, Any] = dict(meta) if meta is not None else dict()
        self._validate()
        self._interp = PchipInterpolator(self.grid, self.values, extrapolate=False)
        self._dinterp = self._interp.derivative()

    def __repr__(self) -> str:
        return (
            f"Profile(c={self.c:.6f}, h={self.h}, kappa={self.kappa}, n={self.grid.size}, "
            f"t=[{self.grid[0]:.3f}, {self.grid[-1]:.3f}], strict={self.strict})"
        )

    def _validate(self) -> None:
        if self.grid.shape != self.values.shape or self.grid.ndim != 1 or self.grid.size < 4:
            raise DomainError("profile grid and values must be 1-d arrays of the same length >= 4")
        steps = np.diff(self.grid)
        if np.any(steps <= 0):
            raise DomainError("profile grid must be strictly increasing")
        if steps.max() > MAX_STEP_RATIO * steps.min() * (1 + 1e-9):
            raise DomainError(f"profile grid spacing ratio {steps.max() / steps.min():.3g} exceeds {MAX_STEP_RATIO}")
        if not np.all(np.isfinite(self.values)):
            raise ConstructionError("profile values must be finite")

        jumps = np.diff(self.values)
        if self.strict:
            bad = np.flatnonzero(jumps <= 0)
            if bad.size:
                k = int(bad[0])
                raise ConstructionError(
                    f"profile values not strictly increasing between t = {self.grid[k]:.6g} and {self.grid[k + 1]:.6g}",
                    t=float(self.grid[k]), margin=float(jumps[k])
                )
            if self.values[0] <= 0 or self.values[-1] >= self.kappa:
                raise ConstructionError(
                    f"profile values must lie in (0, kappa), got [{self.values[0]:.6g}, {self.values[-1]:.6g}]"
                )
        else:
            slack = 1e-12 * max(self.kappa, 1.0)
            bad = np.flatnonzero(jumps < -slack)
            if bad.size:
                k = int(bad[0])
                raise ConstructionError(
                    f"profile values decrease between t = {self.grid[k]:.6g} and {self.grid[k + 1]:.6g}",
                    t=float(self.grid[k]), margin=float(jumps[k])
                )
            if self.bounded and (self.values[0] < 0 or self.values[-1] > self.kappa * (1 + 1e-12)):
                raise ConstructionError(f"profile values must lie in [0, kappa]")

        for tail, t_end, v_end in (
            (self.left_tail, self.grid[0], self.values[0]),
            (self.right_tail, self.grid[-1], self.values[-1]),
        ):
            v_tail = float(tail.value(t_end))
            if abs(v_tail - v_end) > CONTINUITY_RTOL * max(abs(v_end), _TINY):
                raise ConstructionError(
                    f"{tail.side.value} tail does not match the endpoint value ({v_tail:.12g} vs {v_end:.12g})",
                    t=float(t_end), margin=abs(v_tail - v_end)
                )

    @property
    def step(self) -> float:
        return float(np.diff(self.grid).max())

    @property
    def uniform(self) -> bool:
        steps = np.diff(self.grid)
        return bool(steps.max() - steps.min() <= 1e-9 * steps.mean())

    def __call__(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return eval_profile(self, t)

    def derivative(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        arr = np.asarray(t, dtype=float)
        flat = np.atleast_1d(arr)
        out = np.empty_like(flat)
        left = flat < self.grid[0]
        right = flat > self.grid[-1]
        inside = ~(left | right)
        with np.errstate(over="ignore", under="ignore"):
            out[left] = self.left_tail.derivative(flat[left])
            out[right] = self.right_tail.derivative(flat[right])
        out[inside] = self._dinterp(flat[inside])
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def with_values(self, values: np.ndarray, strict: Optional[bool] = None, meta: Optional[Dict[str, Any]] = None) -> "Profile":
        """same grid and tail rates, new node values; tail coefficients are re-pinned to the endpoints."""
        hints = {
            "left_rate": self.left_tail.rate, "left_degree": self.left_tail.poly_degree,
            "right_rate": self.right_tail.rate,
        }
        return make_profile(
            self.grid, values, self.c, self.h, self.kappa, tail_hints=hints,
            strict=self.strict if strict is None else strict, bounded=self.bounded,
            meta=self.meta if meta is None else meta
        )

    def model(self) -> ProfileModel:
        return ProfileModel(
            c = self.c,
            h = self.h,
            kappa = self.kappa,
            strict = self.strict,
            bounded = self.bounded,
            left_tail = self.left_tail,
            right_tail = self.right_tail,
            meta = self.meta
        )



def _fit_left_tail(grid: np.ndarray, values: np.ndarray, hints: Dict[str, Any]) -> TailModel:
    n_tail = max(int(TAIL_FRACTION * grid.size), 4)
    t, v = grid[:n_tail], values[:n_tail]
    t0, v0 = grid[0], values[0]

    rate = hints.get("left_rate")
    degree = hints.get("left_degree", 0) if rate is not None else 0
    positive = v > 0

    if rate is None:
        if positive.sum() < 4 or v0 <= 0:
            rate = 1.0
        else:
            t, y = t[positive], np.log(v[positive])
            slope0, icpt0 = np.polyfit(t, y, 1)
            ssr0 = float(np.sum((y - (slope0 * t + icpt0)) ** 2))
            rate, degree = float(slope0), 0
            if np.all(t < 0):
                y1 = y - np.log(-t)
                slope1, icpt1 = np.polyfit(t, y1, 1)
                ssr1 = float(np.sum((y1 - (slope1 * t + icpt1)) ** 2))
                if ssr0 > 0 and DEGREE_RATIO * ssr1 <= ssr0 and slope1 > 0:
                    rate, degree = float(slope1), 1
            if rate <= 0:
                raise ConstructionError("left tail of the profile does not decay", t=float(t0), margin=rate)

    # (anchor - t) e^{rate t} is increasing only for anchor - t >= 1/rate
    if degree == 1 and -t0 < 1.0 / rate:
        degree = 0
    if v0 <= 0:
        return TailModel(side=Side.LEFT, rate=rate, coeff=0.0, poly_degree=degree)
    poly = (-t0) ** degree if degree else 1.0
    coeff = v0 / (poly * np.exp(rate * t0))
    return TailModel(side=Side.LEFT, rate=rate, coeff=coeff, poly_degree=degree)


def _fit_right_tail(grid: np.ndarray, values: np.ndarray, kappa: float, bounded: bool, hints: Dict[str, Any]) -> TailModel:
    n_tail = max(int(TAIL_FRACTION * grid.size), 4)
    t, v = grid[-n_tail:], values[-n_tail:]
    tN, vN = grid[-1], values[-1]
    rate = hints.get("right_rate")

    if not bounded and (rate is None or rate < 0):
        # growing exponential on the right, offset 0
        if rate is None:
            slope, _ = np.polyfit(t, np.log(v), 1)
            rate = -float(slope)
        return TailModel(side=Side.RIGHT, rate=rate, coeff=-vN * np.exp(rate * tN), offset=0.0)

    deficit = kappa - v
    if kappa - vN <= 0:
        return TailModel(side=Side.RIGHT, rate=rate if rate is not None else 1.0, coeff=0.0, offset=kappa)
    if rate is None:
        positive = deficit > 0
        if positive.sum() < 4:
            rate = 1.0
        else:
            slope, _ = np.polyfit(t[positive], np.log(deficit[positive]), 1)
            rate = -float(slope)
        if rate <= 0:
            raise ConstructionError("right tail of the profile does not approach kappa", t=float(tN), margin=rate)
    coeff = (kappa - vN) * np.exp(rate * tN)
    return TailModel(side=Side.RIGHT, rate=rate, coeff=coeff, offset=kappa)


def make_profile(
    grid: np.ndarray, values: np.ndarray, c: float, h: float, kappa: float,
    tail_hints: Optional[Dict[str, Any]] = None, strict: bool = True, bounded: bool = True,
    meta: Optional[Dict[str, Any]] = None
) -> Profile:
    """
    Fits the tail models on the outer 10% of the points (log-linear least squares, degree 1 when it
    improves the residual tenfold) and validates the profile. tail_hints may pin left_rate,
    left_degree and right_rate; coefficients always match the endpoint values.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.shape != values.shape or grid.size < MIN_POINTS:
        raise DomainError(f"make_profile needs grid and values of equal length >= {MIN_POINTS}")
    hints = dict(tail_hints) if tail_hints is not None else dict()

    if strict:
        jumps = np.diff(values)
        bad = np.flatnonzero(jumps <= 0)
        if bad.size:
            k = int(bad[0])
            raise ConstructionError(
                f"profile values not strictly increasing at index {k}", t=float(grid[k]), margin=float(jumps[k])
            )

    left = _fit_left_tail(grid, values, hints)
    right = _fit_right_tail(grid, values, kappa, bounded, hints)
    return Profile(grid, values, c, h, kappa, left, right, strict=strict, bounded=bounded, meta=meta)


def tail_only_profile(
    grid: np.ndarray, rate: float, c: float, h: float, kappa: float = 1.0, coeff: float = 1.0
) -> Profile:
    """the unbounded profile coeff * exp(rate t) on the whole line, for operator oracles."""
    grid = np.asarray(grid, dtype=float)
    values = coeff * np.exp(rate * grid)
    left = TailModel(side=Side.LEFT, rate=rate, coeff=coeff)
    right = TailModel(side=Side.RIGHT, rate=-rate, coeff=-coeff, offset=0.0)
    return Profile(grid, values, c, h, kappa, left, right, strict=False, bounded=False)


def constant_profile(grid: np.ndarray, value: float, c: float, h: float, kappa: float) -> Profile:
    grid = np.asarray(grid, dtype=float)
    left = TailModel(side=Side.LEFT, rate=0.0, coeff=value)
    right = TailModel(side=Side.RIGHT, rate=1.0, coeff=0.0, offset=value)
    return Profile(grid, np.full(grid.size, value), c, h, kappa, left, right, strict=False, bounded=value <= kappa)



def eval_profile(profile: Profile, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    arr = np.asarray(t, dtype=float)
    flat = np.atleast_1d(arr)
    out = np.empty_like(flat)
    left = flat < profile.grid[0]
    right = flat > profile.grid[-1]
    inside = ~(left | right)
    with np.errstate(over="ignore", under="ignore"):
        out[left] = profile.left_tail.value(flat[left])
        out[right] = profile.right_tail.value(flat[right])
    out[inside] = profile._interp(flat[inside])
    if profile.bounded:
        top = np.nextafter(profile.kappa, 0.0) if profile.strict else profile.kappa
        np.clip(out, _TINY if profile.strict else 0.0, top, out=out)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def shift(profile: Profile, s0: float) -> Profile:
    """profile of t -> eval(profile, t + s0), on the grid moved by -s0 (exact regrid)."""
    meta = dict(profile.meta)
    meta["shift"] = meta.get("shift", 0.0) + s0
    return Profile(
        profile.grid - s0, profile.values, profile.c, profile.h, profile.kappa,
        profile.left_tail.shifted(s0), profile.right_tail.shifted(s0),
        strict=profile.strict, bounded=profile.bounded, meta=meta
    )


def level_crossing(profile: Profile, level: float) -> float:
    """the t with eval(profile, t) = level, searched on the grid."""
    above = np.flatnonzero(profile.values >= level)
    if above.size == 0 or above[0] == 0:
        raise DomainError(f"level {level:.6g} is not attained inside the profile grid")
    k = int(above[0])
    if profile.values[k] == level:
        return float(profile.grid[k])
    return float(brentq(lambda t: eval_profile(profile, t) - level, profile.grid[k - 1], profile.grid[k], xtol=1e-14, rtol=4 * np.finfo(float).eps))


def normalize_gauge(profile: Profile) -> Profile:
    """translate so that phi(0) = kappa / 2."""
    return shift(profile, level_crossing(profile, 0.5 * profile.kappa))



def _uniform_samples(profile: Profile) -> Tuple[np.ndarray, float]:
    n = profile.grid.size
    if profile.uniform:
        return profile.grid, float(profile.grid[1] - profile.grid[0])
    grid = np.linspace(profile.grid[0], profile.grid[-1], n)
    return grid, float(grid[1] - grid[0])


def residual_field(profile: Profile, spec: NonlinearitySpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    E(t) = phi'' - c phi' - phi + g(phi(t - c h)) on the (uniformized) grid, with 4th-order
    five-point differences; stencils at the ends reach into the tail models.
    """
    t, dt = _uniform_samples(profile)
    rate = max(abs(profile.left_tail.rate), abs(profile.right_tail.rate), 1.0)
    if t.size < 9 or dt * rate > 0.5:
        raise NumericError(f"grid too coarse for the 4th-order stencil (n = {t.size}, step * rate = {dt * rate:.3g})")

    ext = np.concatenate([t[0] - dt * np.array([2.0, 1.0]), t, t[-1] + dt * np.array([1.0, 2.0])])
    f = eval_profile(profile, ext)
    d1 = (-f[4:] + 8.0 * f[3:-1] - 8.0 * f[1:-3] + f[:-4]) / (12.0 * dt)
    d2 = (-f[4:] + 16.0 * f[3:-1] - 30.0 * f[2:-2] + 16.0 * f[1:-3] - f[:-4]) / (12.0 * dt * dt)
    delayed = eval_profile(profile, t - profile.c * profile.h)
    E = d2 - profile.c * d1 - f[2:-2] + spec.g(delayed)
    return t, E


def residual(profile: Profile, spec: NonlinearitySpec) -> float:
    _, E = residual_field(profile, spec)
    return float(np.max(np.abs(E)))



def default_decay_window(profile: Profile, lo: float = 1e-9, hi: float = 1e-4) -> Tuple[float, float]:
    """grid window where lo * kappa <= phi <= hi * kappa."""
    mask = (profile.values >= lo * profile.kappa) & (profile.values <= hi * profile.kappa)
    if not mask.any():
        raise DomainError(f"profile never enters [{lo:g}, {hi:g}] * kappa on its grid")
    idx = np.flatnonzero(mask)
    return float(profile.grid[idx[0]]), float(profile.grid[idx[-1]])


def decay_rate_fit(profile: Profile, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    if window is None:
        window = default_decay_window(profile)
    t_lo, t_hi = window
    mask = (profile.grid >= t_lo) & (profile.grid <= t_hi)
    t = profile.grid[mask]
    v = profile.values[mask]
    if t.size < MIN_FIT_POINTS:
        raise DomainError(f"decay window [{t_lo:.6g}, {t_hi:.6g}] holds {t.size} grid points, need >= {MIN_FIT_POINTS}")
    if np.any(v <= 0) or v.max() >= profile.kappa / 20.0:
        raise DomainError("decay window must lie where 0 < phi < kappa / 20")

    y = np.log(v)
    fit0 = linregress(t, y)
    ssr0 = float(np.sum((y - (fit0.slope * t + fit0.intercept)) ** 2))
    rate, degree, r2 = float(fit0.slope), 0, float(fit0.rvalue ** 2)

    if np.all(t < 0):
        y1 = y - np.log(-t)
        fit1 = linregress(t, y1)
        ssr1 = float(np.sum((y1 - (fit1.slope * t + fit1.intercept)) ** 2))
        if ssr0 > 0 and DEGREE_RATIO * ssr1 <= ssr0:
            rate, degree, r2 = float(fit1.slope), 1, float(fit1.rvalue ** 2)

    fit = DecayFit(
        rate=rate, poly_degree=degree, r_squared=r2, window=(float(t[0]), float(t[-1])),
        n_points=int(t.size), reliable=r2 >= R2_ACCEPT
    )
    if not fit.reliable:
        logger.warning(f"unreliable decay fit: r^2 = {r2:.6f} on [{t[0]:.3f}, {t[-1]:.3f}]")
    return fit



def front_grid(c: float, h: float, spec: NonlinearitySpec, rate: Optional[float] = None, n: int = 4001) -> np.ndarray:
    """
    Default truncated domain: exp(lambda t_L) <= 1e-10 on the left and a kappa-deficit of
    about 1e-10 on the right, plus a margin of 5 on both ends.
    """
    if rate is None:
        rate = lambda2(c, h, spec.gp0)
        if rate is None:
            raise DomainError(f"no real characteristic root at c = {c} below the double-root speed; pass the tail rate")
    mu = kappa_rate(c, h, spec.gp_kappa)
    t_left = np.log(1e-10) / rate - 5.0
    t_right = 23.0 / mu + 5.0
    return np.linspace(t_left, t_right, n)



def write_profile(profile: Profile, csv_path: Union[str, Path]) -> Path:
    """CSV with header t,phi plus a JSON sidecar next to it; returns the sidecar path."""
    csv_path = Path(csv_path)
    np.savetxt(
        csv_path, np.column_stack([profile.grid, profile.values]),
        delimiter=",", header="t,phi", comments="", fmt="%.17g"
    )
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps(profile.model().model_dump(mode="json"), sort_keys=True, indent=2))
    return sidecar


def read_profile(csv_path: Union[str, Path]) -> Profile:
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise DomainError(f"profile file {csv_path} does not exist")
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    sidecar = csv_path.with_suffix(".json")
    if not sidecar.exists():
        raise DomainError(f"profile sidecar {sidecar} does not exist")
    model = ProfileModel.model_validate_json(sidecar.read_text())
    return Profile(
        data[:, 0], data[:, 1], model.c, model.h, model.kappa, model.left_tail, model.right_tail,
        strict=model.strict, bounded=model.bounded, meta=model.meta
    )


def resample(profile: Profile, grid: np.ndarray, kappa: Optional[float] = None, strict: bool = False) -> Profile:
    """
    The profile evaluated on a new grid, keeping tail rates, degrees and offsets; tail coefficients
    are re-pinned to the new endpoint values. kappa may be raised (a kappa/2 front inside [0, kappa]).
    """
    grid = np.asarray(grid, dtype=float)
    values = eval_profile(profile, grid)
    lt, rt = profile.left_tail, profile.right_tail

    left_shape = float(lt.model_copy(update={"coeff": 1.0}).value(grid[0]))
    left = lt.model_copy(update={"coeff": values[0] / left_shape if left_shape > 0 else 0.0})
    if rt.offset - values[-1] == 0:
        right = rt.model_copy(update={"coeff": 0.0})
    else:
        right = rt.model_copy(update={"coeff": (rt.offset - values[-1]) * np.exp(rt.rate * grid[-1])})
    return Profile(
        grid, values, profile.c, profile.h, profile.kappa if kappa is None else kappa, left, right,
        strict=strict, bounded=profile.bounded, meta=profile.meta
    )
