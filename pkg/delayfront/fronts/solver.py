"""
Existence machinery: upper and lower solutions of the profile equation

    phi'' - c phi' - phi + g(phi(t - c h)) = 0,

and the monotone squeeze phi_- <= A phi_- <= ... <= A phi_+ <= phi_+ that produces fronts.
"""
import logging
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import brentq

from ..engine.constants import Outcome, Strategy
from ..engine.errors import ConstructionError, DomainError, NumericError, OrderingViolationError, PreconditionError
from .charspec import CharParams, chi_minimizer, double_root_speed, kappa_rate, lambda2, speed_bounds, xi_roots
from .greens import JumpData, TailClosure, apply_A, apply_operator, impulsive_solve
from .nonlinearity import NonlinearitySpec, lower_minorant
from .profile import (
    DecayFit, Profile, constant_profile, decay_rate_fit, eval_profile, front_grid, level_crossing,
    make_profile, normalize_gauge, resample, residual, residual_field, shift
)


logger = logging.getLogger(__name__)

MAX_ALIGN_STEPS = 60
MAX_CONTINUATION_DEPTH = 4



class SolverSettings(BaseModel):
    grid_size: int = Field(default=4001, ge=64)
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=500, ge=1)
    residual_tol: float = Field(default=1e-6, gt=0)
    collapse_fraction: float = Field(default=0.01, gt=0, lt=1)
    escape_fraction: float = Field(default=0.01, gt=0, lt=1)
    stagnation_window: int = Field(default=50, ge=2)
    stagnation_ratio: float = Field(default=0.9, gt=0, le=1)
    ordering_atol: float = Field(default=1e-9, ge=0)
    ordering_rtol: float = Field(default=1e-6, ge=0)
    sigma_minus_one: float = Field(default=1e-2, gt=0)
    b: float = Field(default=1e-2, gt=0, le=1)
    eps: float = Field(default=1e-3, gt=0)
    max_retries: int = Field(default=20, ge=1)


class BoundPair(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    upper: Profile
    lower: Optional[Profile] = None
    strategy: Strategy = Strategy.KPP_UPPER
    # the upper bound stays fixed; only the lower sequence moves
    frozen_upper: bool = False


class IterationReport(BaseModel):
    iterations: int
    delta_history: List[float]
    lower_delta_history: List[float] = Field(default_factory=list)
    final_residual: float
    converged: bool
    outcome: Outcome
    gap: Optional[float] = None
    quadrature_bound: float = 0.0


class FrontResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    profile: Profile
    report: IterationReport
    decay: Optional[DecayFit] = None
    strategy: Strategy
    exists: bool
    c: float
    h: float
    lower_limit: Optional[Profile] = None

    @property
    def outcome(self) -> Outcome:
        return self.report.outcome

    def summary(self) -> Dict[str, Any]:
        decay = None
        if self.decay is not None:
            decay = {"rate": self.decay.rate, "degree": self.decay.poly_degree, "r_squared": self.decay.r_squared}
        return {
            "c": self.c,
            "h": self.h,
            "strategy": self.strategy.value,
            "exists": self.exists,
            "converged": self.report.converged,
            "outcome": self.report.outcome.value,
            "iterations": self.report.iterations,
            "residual": self.report.final_residual,
            "gap": self.report.gap,
            "quadrature_bound": self.report.quadrature_bound,
            "decay": decay,
        }



def _bound_profile(grid: np.ndarray, values: np.ndarray, c: float, h: float, spec: NonlinearitySpec, left_rate: float, meta: Dict[str, Any]) -> Profile:
    hints = {"left_rate": left_rate, "left_degree": 0, "right_rate": kappa_rate(c, h, spec.gp_kappa)}
    return make_profile(grid, values, c, h, spec.kappa, tail_hints=hints, strict=False, meta=meta)


def kpp_upper(c: float, h: float, spec: NonlinearitySpec, grid_size: int = 4001) -> Profile:
    """
    min{kappa, kappa exp(lambda t)} with lambda the smaller root of chi(., c) at p = g'_+.
    Since g(u) <= g'_+ u this is an upper solution away from its corner at t = 0.
    """
    if not np.isfinite(spec.gp_plus):
        raise PreconditionError("kpp_upper needs a finite g'_+")
    lam = lambda2(c, h, spec.gp_plus)
    if lam is None:
        raise PreconditionError(f"kpp_upper needs c >= c^*(g'_+); chi has no real root at c = {c}")

    kappa = spec.kappa
    grid = front_grid(c, h, spec, rate=lam, n=grid_size)
    values = np.minimum(kappa, kappa * np.exp(lam * grid))

    delayed = np.minimum(kappa, kappa * np.exp(lam * (grid - c * h)))
    linear_part = np.where(grid < 0, kappa * np.exp(lam * np.minimum(grid, 0.0)) * (lam * lam - c * lam - 1.0), -kappa)
    E = linear_part + spec.g(delayed)
    off_corner = np.abs(grid) > 0.5 * (grid[1] - grid[0])
    k = int(np.argmax(np.where(off_corner, E, -np.inf)))
    if E[k] > 1e-9:
        raise ConstructionError("kpp_upper violates the upper-solution inequality", t=float(grid[k]), margin=float(E[k]))

    return _bound_profile(grid, values, c, h, spec, lam, meta={"corner": 0.0, "lambda": lam, "upper_margin": float(E[k])})


def continuation_upper(
    base: FrontResult, c_prime: float, sigma: float, b: float, spec: NonlinearitySpec,
    grid_size: int = 4001
) -> Profile:
    """
    phi_+ = min{kappa, sigma psi + b^2 exp(lambda2' t) + b exp(lambda2 t)} over the front psi at the lower
    speed c0, with lambda2' = lambda2(c') and lambda2 = lambda2(c0) at p = g'(0).
    """
    c0, h = base.c, base.h
    if c_prime <= c0:
        raise PreconditionError(f"continuation needs c' > c0, got c' = {c_prime}, c0 = {c0}")
    if sigma <= 1.0 or not 0.0 < b <= 1.0:
        raise PreconditionError(f"continuation needs sigma > 1 and b in (0, 1], got sigma = {sigma}, b = {b}")

    p = spec.gp0
    lam_prime = lambda2(c_prime, h, p)
    lam = lambda2(c0, h, p)
    if lam is None or lam_prime is None:
        raise PreconditionError(f"continuation needs both speeds above c_#: c0 = {c0}, c' = {c_prime}")
    theta = spec.hoelder_triple.theta
    if (1.0 + theta) * lam_prime <= lam:
        raise PreconditionError(
            f"speed step too large: (1 + theta) lambda2(c') = {(1 + theta) * lam_prime:.6g} <= lambda2(c0) = {lam:.6g}"
        )

    psi = base.profile
    kappa = spec.kappa

    def phi_b(t):
        return sigma * eval_profile(psi, t) + b * b * np.exp(lam_prime * t) + b * np.exp(lam * t)

    lo, hi = psi.grid[0], psi.grid[-1]
    while phi_b(hi) < kappa:
        hi += psi.grid[-1] - psi.grid[0]
    while phi_b(lo) > kappa:
        lo -= psi.grid[-1] - psi.grid[0]
    corner = brentq(lambda t: phi_b(t) - kappa, lo, hi, xtol=1e-13)

    grid = front_grid(c_prime, h, spec, rate=lam_prime, n=grid_size)
    phi_plus = lambda t: np.minimum(kappa, phi_b(t))

    # E_+ on the smooth branch, using psi'' - c0 psi' - psi = -g(psi(t - c0 h))
    t = grid[grid < corner]
    E = (
        sigma * (c0 - c_prime) * psi.derivative(t)
        - sigma * spec.g(eval_profile(psi, t - c0 * h))
        + b * b * (lam_prime ** 2 - c_prime * lam_prime - 1.0) * np.exp(lam_prime * t)
        + b * (lam ** 2 - c_prime * lam - 1.0) * np.exp(lam * t)
        + spec.g(phi_plus(t - c_prime * h))
    )
    slack = 1e-12 * kappa
    if E.size:
        k = int(np.argmax(E))
        if E[k] > slack:
            raise ConstructionError(
                f"continuation upper solution from c0 = {c0:.6f} to c' = {c_prime:.6f} has E_+ > 0 "
                f"(sigma = {sigma:.6g}, b = {b:.3g})", t=float(t[k]), margin=float(E[k])
            )
        margin = float(E[k])
    else:
        margin = float("-inf")

    meta = {
        "corner": float(corner), "c0": c0, "sigma": sigma, "b": b, "upper_margin": margin,
        "corner_jump": -float(np.atleast_1d(psi.derivative(corner))[0] * sigma + b * b * lam_prime * np.exp(lam_prime * corner) + b * lam * np.exp(lam * corner)),
    }
    return _bound_profile(grid, phi_plus(grid), c_prime, h, spec, lam_prime, meta)



def _ordering_tol(values: np.ndarray, kappa: float, settings: SolverSettings) -> np.ndarray:
    return settings.ordering_atol * kappa + settings.ordering_rtol * np.abs(values)


def align_lower(lower: Profile, upper: Profile, settings: SolverSettings) -> Profile:
    """
    Shifts the lower profile to the right until it lies below the upper one, then resamples it on
    the upper grid. The first shift comes from the left-tail coefficients.
    """
    l_tail, u_tail = lower.left_tail, upper.left_tail
    if l_tail.rate < u_tail.rate * (1.0 - 1e-9):
        raise ConstructionError(
            f"lower bound decays at {l_tail.rate:.6g}, slower than the upper bound ({u_tail.rate:.6g}); no shift orders them"
        )

    s = 0.0
    if abs(l_tail.rate - u_tail.rate) <= 1e-9 * u_tail.rate and l_tail.coeff > 0 and u_tail.coeff > 0:
        s = max(0.0, np.log(2.0 * l_tail.coeff / u_tail.coeff) / u_tail.rate)

    for _ in range(MAX_ALIGN_STEPS):
        candidate = resample(shift(lower, -s), upper.grid, kappa=upper.kappa)
        if np.all(candidate.values <= upper.values):
            meta = dict(candidate.meta)
            meta["alignment_shift"] = s
            return Profile(
                candidate.grid, candidate.values, candidate.c, candidate.h, candidate.kappa,
                candidate.left_tail, candidate.right_tail, strict=False, meta=meta
            )
        s = s + max(1.0, s)
    raise ConstructionError(f"could not shift the lower bound below the upper bound (last shift {s:.6g})")


def _finalize(values_profile: Profile, spec: NonlinearitySpec) -> Profile:
    hints = {
        "left_rate": values_profile.left_tail.rate, "left_degree": values_profile.left_tail.poly_degree,
        "right_rate": values_profile.right_tail.rate,
    }
    try:
        profile = make_profile(
            values_profile.grid, values_profile.values, values_profile.c, values_profile.h, spec.kappa,
            tail_hints=hints, strict=True
        )
    except ConstructionError as e:
        logger.debug(f"limit is not strictly increasing on the grid ({e}); keeping a nondecreasing profile")
        profile = values_profile
    try:
        return normalize_gauge(profile)
    except DomainError:
        return profile


def iterate(
    bounds: BoundPair, spec: NonlinearitySpec, c: float, h: float, tol: Optional[float] = None,
    max_iter: Optional[int] = None, settings: Optional[SolverSettings] = None, monotone: bool = True
) -> FrontResult:
    """
    Iterates phi_{n+1} = A phi_n downward from the upper bound and upward from the lower bound,
    asserting lower_n <= lower_{n+1} <= upper_{n+1} <= upper_n (up to the ordering tolerance) and
    clamping each new iterate to that chain. monotone=False runs a bare probe without the assertions.
    """
    settings = settings if settings is not None else SolverSettings()
    tol = settings.tol if tol is None else tol
    max_iter = settings.max_iter if max_iter is None else max_iter
    kappa = spec.kappa

    upper = bounds.upper
    frozen = bounds.frozen_upper
    lower = align_lower(bounds.lower, upper, settings) if bounds.lower is not None else None
    if frozen and lower is None:
        raise DomainError("a frozen upper bound needs a lower bound")

    deltas: List[float] = []
    lower_deltas: List[float] = []
    outcome = Outcome.MAX_ITER
    qbound = 0.0
    n = 0
    logger.debug(f"--------------------------- started iteration at c = {c:.6f}, h = {h} ({bounds.strategy.value}) at {datetime.now()}")

    for n in range(1, max_iter + 1):
        if not frozen:
            nxt = apply_A(upper, spec, c, h)
            qbound = max(qbound, nxt.meta.get("quadrature_bound", 0.0))
            new = nxt.values
            if monotone:
                excess = new - upper.values - _ordering_tol(upper.values, kappa, settings)
                k = int(np.argmax(excess))
                if excess[k] > 0:
                    raise OrderingViolationError(
                        f"upper iterate rose above its predecessor by {excess[k]:.3e} at t = {upper.grid[k]:.6g}", n
                    )
                new = np.minimum(new, upper.values)
            deltas.append(float(np.max(np.abs(new - upper.values))))
            upper = upper.with_values(new, strict=False)

        if lower is not None:
            nxt = apply_A(lower, spec, c, h)
            qbound = max(qbound, nxt.meta.get("quadrature_bound", 0.0))
            new = nxt.values
            if monotone:
                deficit = lower.values - new - _ordering_tol(lower.values, kappa, settings)
                k = int(np.argmax(deficit))
                if deficit[k] > 0:
                    raise OrderingViolationError(
                        f"lower iterate fell below its predecessor by {deficit[k]:.3e} at t = {lower.grid[k]:.6g}", n
                    )
                new = np.maximum(new, lower.values)
            lower_deltas.append(float(np.max(np.abs(new - lower.values))))
            lower = lower.with_values(new, strict=False)

            if monotone and not frozen:
                cross = lower.values - upper.values - _ordering_tol(upper.values, kappa, settings)
                k = int(np.argmax(cross))
                if cross[k] > 0:
                    raise OrderingViolationError(
                        f"lower iterate crossed the upper iterate by {cross[k]:.3e} at t = {upper.grid[k]:.6g}", n
                    )

        history = lower_deltas if frozen else deltas
        delta = history[-1]
        main = lower if frozen else upper

        if delta <= tol:
            outcome = Outcome.CONVERGED
            break
        if float(eval_profile(main, 0.0)) < settings.collapse_fraction * kappa and (frozen or lower is None):
            outcome = Outcome.COLLAPSED
            break
        if lower is not None and lower.values[0] > settings.escape_fraction * kappa:
            outcome = Outcome.ESCAPED
            break
        w = settings.stagnation_window
        if len(history) > w and delta > settings.stagnation_ratio * history[-1 - w]:
            outcome = Outcome.STAGNATED
            break

    main = lower if frozen else upper
    profile = _finalize(main, spec)
    try:
        final_residual = residual(profile, spec)
    except NumericError as e:
        logger.warning(f"residual unavailable: {e}")
        final_residual = float("inf")

    converged = outcome == Outcome.CONVERGED and final_residual <= settings.residual_tol
    if outcome == Outcome.CONVERGED and not converged:
        logger.warning(f"iteration settled at c = {c:.6f} with residual {final_residual:.3e} above {settings.residual_tol:.1e}")
        outcome = Outcome.STAGNATED

    gap = None
    if lower is not None and not frozen:
        gap = float(np.max(np.abs(upper.values - lower.values)))

    decay = None
    try:
        decay = decay_rate_fit(profile)
    except DomainError as e:
        logger.debug(f"no decay fit at c = {c:.6f}: {e}")

    # above c^*(g'_+) a front exists whatever the iteration does, as long as it stays nontrivial;
    # a continuation bound needs the lower solution under it
    paired = lower is not None and not frozen
    certified = (
        monotone and outcome not in (Outcome.COLLAPSED, Outcome.ESCAPED)
        and (bounds.strategy == Strategy.KPP_UPPER or (bounds.strategy == Strategy.CONTINUATION_UPPER and paired))
    )
    report = IterationReport(
        iterations=n, delta_history=deltas, lower_delta_history=lower_deltas, final_residual=final_residual,
        converged=converged, outcome=outcome, gap=gap, quadrature_bound=qbound
    )
    logger.debug(f"--------------------------- finished iteration at c = {c:.6f} with {outcome.value} after {n} steps at {datetime.now()}")

    lower_limit = None
    if lower is not None and not frozen:
        lower_limit = lower
    return FrontResult(
        profile=profile, report=report, decay=decay, strategy=bounds.strategy,
        exists=bool(converged or certified), c=c, h=h, lower_limit=lower_limit
    )



def lower_front(c: float, h: float, spec: NonlinearitySpec, settings: Optional[SolverSettings] = None) -> Profile:
    """
    Front of the minorant problem g_- = min{g, g'(0) x / (1 + A x)}, limits 0 and kappa/2. Since
    g >= g_-, it is a lower solution for g.
    """
    settings = settings if settings is not None else SolverSettings()
    c_sharp, _ = double_root_speed(h, spec.gp0)
    if c <= c_sharp:
        raise PreconditionError(f"lower_front needs c > c_# = {c_sharp:.6f}, got {c}")

    minus = lower_minorant(spec)
    try:
        inner = iterate(BoundPair(upper=kpp_upper(c, h, minus, settings.grid_size)), minus, c, h, settings=settings)
    except (ConstructionError, OrderingViolationError) as e:
        raise ConstructionError(f"minorant front at c = {c:.6f} failed: {e}") from e
    if not inner.report.converged:
        raise ConstructionError(
            f"minorant front at c = {c:.6f} did not converge ({inner.outcome.value}, residual {inner.report.final_residual:.3e})"
        )

    profile = inner.profile
    _, E_minus = residual_field(profile, minus)
    t, E = residual_field(profile, spec)
    margin = E + 1e-9 + np.abs(E_minus)
    k = int(np.argmin(margin))
    if margin[k] < 0:
        raise ConstructionError("minorant front is not a lower solution for g", t=float(t[k]), margin=float(margin[k]))

    meta = dict(profile.meta)
    meta.update({"lower_margin": float(np.min(E)), "minorant_residual": inner.report.final_residual})
    return Profile(
        profile.grid, profile.values, profile.c, profile.h, profile.kappa, profile.left_tail, profile.right_tail,
        strict=profile.strict, meta=meta
    )


def collapse_probe(c: float, h: float, spec: NonlinearitySpec, settings: Optional[SolverSettings] = None) -> FrontResult:
    """
    For c <= c_# there is no bound pair: iterate A from min{kappa, kappa exp(z t)}, z the minimizer of
    chi, and report how the iteration ends (collapse, stagnation or escape).
    """
    settings = settings if settings is not None else SolverSettings()
    z, _ = chi_minimizer(CharParams(c=c, h=h, p=spec.gp0))
    z = max(z, 1e-3)
    grid = front_grid(c, h, spec, rate=z, n=settings.grid_size)
    values = np.minimum(spec.kappa, spec.kappa * np.exp(z * grid))
    start = _bound_profile(grid, values, c, h, spec, z, meta={"probe_rate": z})
    result = iterate(BoundPair(upper=start, strategy=Strategy.COLLAPSE_PROBE), spec, c, h, settings=settings, monotone=False)
    if result.report.converged:
        logger.warning(f"collapse probe at c = {c:.6f} <= c_# settled on a profile; reported as non-existence")
    return result.model_copy(update={"exists": False})



def continuation_bounds(
    seed: FrontResult, c: float, spec: NonlinearitySpec, lower: Optional[Profile], settings: SolverSettings
) -> Profile:
    """continuation upper bound with geometric backtracking on sigma - 1 and b."""
    sigma_m, b = settings.sigma_minus_one, settings.b
    last: Optional[Exception] = None
    for attempt in range(settings.max_retries):
        try:
            upper = continuation_upper(seed, c, 1.0 + sigma_m, b, spec, settings.grid_size)
            if lower is not None:
                align_lower(lower, upper, settings)
            return upper
        except ConstructionError as e:
            last = e
            logger.debug(f"continuation attempt {attempt + 1} from c0 = {seed.c:.6f} to c = {c:.6f} failed: {e}")
            sigma_m *= 0.5
            b *= 0.5
    raise ConstructionError(f"continuation from c0 = {seed.c:.6f} to c = {c:.6f} failed after {settings.max_retries} attempts: {last}")


def _usable_seeds(seeds: Optional[List[FrontResult]], c: float) -> List[FrontResult]:
    if not seeds:
        return []
    usable = [
        s for s in seeds
        if s is not None and s.c < c and s.report.converged and s.strategy != Strategy.COLLAPSE_PROBE
    ]
    return sorted(usable, key=lambda s: s.c, reverse=True)


def _continuation(
    spec: NonlinearitySpec, c: float, h: float, seed: FrontResult, lower: Optional[Profile],
    settings: SolverSettings, depth: int
) -> Profile:
    try:
        return continuation_bounds(seed, c, spec, lower, settings)
    except (ConstructionError, PreconditionError) as e:
        if depth >= MAX_CONTINUATION_DEPTH:
            raise
        c_mid = 0.5 * (seed.c + c)
        logger.info(f"continuation {seed.c:.6f} -> {c:.6f} failed ({e}); inserting an intermediate front at {c_mid:.6f}")
        mid = solve_front(spec, c_mid, h, settings, seeds=[seed], _depth=depth + 1)
        if not mid.report.converged:
            raise ConstructionError(f"intermediate front at c = {c_mid:.6f} did not converge") from e
        return _continuation(spec, c, h, mid, lower, settings, depth + 1)


def solve_front(
    spec: NonlinearitySpec, c: float, h: float, settings: Optional[SolverSettings] = None,
    seeds: Optional[List[FrontResult]] = None, _depth: int = 0
) -> FrontResult:
    """
    Picks a strategy and runs the squeeze:
    KppUpper for sub-tangential g and c >= c^*, ContinuationUpper from the nearest converged front at a
    lower speed, KappaUpper otherwise; CollapseProbe for c <= c_#.
    """
    settings = settings if settings is not None else SolverSettings()
    bounds = speed_bounds(spec, h)
    if c <= bounds.c_sharp:
        return collapse_probe(c, h, spec, settings)

    try:
        lower = lower_front(c, h, spec, settings)
    except ConstructionError as e:
        logger.warning(f"no lower solution at c = {c:.6f}: {e}")
        lower = None

    sub_tangential = spec.gp_plus <= spec.gp0 * (1.0 + 1e-12)
    if sub_tangential and c >= bounds.c_star_upper:
        pair = BoundPair(upper=kpp_upper(c, h, spec, settings.grid_size), lower=lower, strategy=Strategy.KPP_UPPER)
        return iterate(pair, spec, c, h, settings=settings)

    for seed in _usable_seeds(seeds, c)[:1]:
        try:
            upper = _continuation(spec, c, h, seed, lower, settings, _depth)
            result = iterate(BoundPair(upper=upper, lower=lower, strategy=Strategy.CONTINUATION_UPPER), spec, c, h, settings=settings)
            return result
        except (ConstructionError, PreconditionError, OrderingViolationError) as e:
            logger.warning(f"continuation to c = {c:.6f} failed, falling back to the kappa upper bound: {e}")

    if lower is None:
        raise ConstructionError(f"no bound pair at c = {c:.6f}: the minorant front is unavailable and no seed applies")
    upper = constant_profile(lower.grid, spec.kappa, c, h, spec.kappa)
    pair = BoundPair(upper=upper, lower=lower, strategy=Strategy.KAPPA_UPPER, frozen_upper=True)
    return iterate(pair, spec, c, h, settings=settings)



class PerturbationReport(BaseModel):
    c_star: float
    c_prime: float
    rho: float
    lambda2: float
    lambda2_prime: float
    M: float
    a: float
    eps: float
    T1: float
    T1_plus: float
    T2: float
    sigma: float
    jumps: List[JumpData]
    corner_ok: bool
    corner_margins: Tuple[float, float]
    region_max: Dict[str, float]
    sign_ok: bool
    zero_after_T2: float
    integral_margin: float
    reconstruction_error: float
    valid: bool


class PerturbationResult(BaseModel):
    """
    The three-piece function sampled on a grid. Its left piece changes sign when a < 0, so it is
    kept as arrays rather than a monotone Profile.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: np.ndarray
    values: np.ndarray
    report: PerturbationReport


def _g_extended(spec: NonlinearitySpec, u: np.ndarray) -> np.ndarray:
    """g on [0, inf), continued linearly with slope g'(0) below 0."""
    u = np.asarray(u, dtype=float)
    return spec.g(np.maximum(u, 0.0)) + spec.gp0 * np.minimum(u, 0.0)


def _safety_gap(spec: NonlinearitySpec) -> float:
    """largest sigma (halving from kappa/2) with max g' < 1 on [kappa - sigma, kappa]."""
    kappa = spec.kappa
    sigma = 0.5 * kappa
    for _ in range(40):
        u = np.linspace(kappa - sigma, kappa, 401)
        slopes = spec.dg(u) if spec.has_derivative else np.diff(spec.g(u)) / np.diff(u)
        if np.max(slopes) < 1.0:
            return sigma
        sigma *= 0.5
    raise ConstructionError("no interval below kappa where g' < 1")


def pushed_perturbation_upper(
    critical: FrontResult, c_prime: float, eps: float, M: float, a: float, theta: float,
    spec: NonlinearitySpec
) -> PerturbationResult:
    """
    Piecewise function  M exp(rho t) + a exp(lambda2' t)  |  phi + eps  |  kappa  glued at T1 and T2,
    with rho = lambda2 (1 + theta), over a critical front phi at c_star assumed to decay at
    lambda2(c_star). Reports the sign of E_+ per region, the corner jumps and the integral margin
    min(phi_+ - A phi_+).
    """
    c_star, h = critical.c, critical.h
    if c_prime >= c_star:
        raise PreconditionError(f"pushed_perturbation_upper needs c' < c_star, got c' = {c_prime}, c_star = {c_star}")
    p, kappa = spec.gp0, spec.kappa
    lam = lambda2(c_star, h, p)
    lam_prime = lambda2(c_prime, h, p)
    if lam is None or lam_prime is None:
        raise PreconditionError(f"both c_star = {c_star} and c' = {c_prime} must exceed c_#")
    rho = lam * (1.0 + theta)
    if rho <= lam_prime:
        raise PreconditionError(f"rho = {rho:.6g} must exceed lambda2' = {lam_prime:.6g}")

    phi = critical.profile
    grid = phi.grid

    def left_piece(t):
        return M * np.exp(rho * t) + a * np.exp(lam_prime * t)

    def left_piece_dt(t):
        return M * rho * np.exp(rho * t) + a * lam_prime * np.exp(lam_prime * t)

    D = left_piece(grid) - phi.values
    sign_change = np.flatnonzero((D[:-1] < 0) & (D[1:] >= 0))
    if sign_change.size == 0:
        raise ConstructionError("glue point T1 not found: M exp(rho t) + a exp(lambda2' t) never meets phi from below")
    k = int(sign_change[0])
    T1 = float(brentq(lambda t: left_piece(t) - eval_profile(phi, t), grid[k], grid[k + 1], xtol=1e-13))
    try:
        T2 = level_crossing(phi, kappa - eps)
    except DomainError as e:
        raise ConstructionError(f"glue point T2 not found: {e}") from e
    if T2 <= T1:
        raise ConstructionError(f"glue points out of order: T1 = {T1:.6g} >= T2 = {T2:.6g}")

    sigma = _safety_gap(spec)
    T1_plus = level_crossing(phi, kappa - sigma) + 2.0 * c_star * h

    def phi_plus(t):
        t = np.asarray(t, dtype=float)
        return np.where(t < T1, left_piece(t), np.where(t < T2, eval_profile(phi, t) + eps, kappa))

    def E_plus(t):
        t = np.asarray(t, dtype=float)
        delayed = _g_extended(spec, phi_plus(t - c_prime * h))
        left = (
            M * (rho ** 2 - c_prime * rho - 1.0) * np.exp(rho * t)
            + a * (lam_prime ** 2 - c_prime * lam_prime - 1.0) * np.exp(lam_prime * t)
            + delayed
        )
        middle = (c_star - c_prime) * phi.derivative(t) - eps + delayed - spec.g(eval_profile(phi, t - c_star * h))
        right = -kappa + delayed
        return np.where(t < T1, left, np.where(t < T2, middle, right))

    E = E_plus(grid)
    slack = 1e-12 * kappa
    regions = {
        "left": grid < T1,
        "middle": (grid >= T1) & (grid < T2),
        "right": grid >= T2,
    }
    region_max = {name: float(E[mask].max()) if mask.any() else float("-inf") for name, mask in regions.items()}
    outside = (grid < T1) | (grid > T1_plus)
    sign_ok = bool(np.all(E[outside] <= slack))
    after = grid >= T2 + c_prime * h
    zero_after = float(np.max(np.abs(E[after]))) if after.any() else 0.0

    beta1 = float(phi.derivative(T1) - left_piece_dt(T1))
    beta2 = -float(phi.derivative(T2))
    jumps = [JumpData(t_j=T1, alpha_j=eps, beta_j=beta1), JumpData(t_j=T2, alpha_j=0.0, beta_j=beta2)]
    corner_ok = bool(left_piece_dt(T1) > phi.derivative(T1))
    xi_prime = xi_roots(c_prime)
    corner_margins = (xi_prime.xi1 * eps - beta1, xi_prime.xi2 * eps - beta1)

    values = phi_plus(grid)
    mid = 0.5 * (grid[:-1] + grid[1:])
    f = lambda t: _g_extended(spec, phi_plus(t - c_prime * h))
    closure_left = TailClosure(level=0.0, rate=lam_prime)
    closure_right = TailClosure(level=float(spec.g(kappa)), rate=1.0)
    A_values = apply_operator(grid, f(grid[:-1]), f(mid), f(grid[1:]), c_prime, closure_left, closure_right)
    integral_margin = float(np.min(values - A_values))

    forcing = lambda t: E_plus(t) - f(t)
    rebuilt = impulsive_solve(forcing, jumps, c_prime, grid)
    reconstruction_error = float(np.max(np.abs(rebuilt - values)))

    report = PerturbationReport(
        c_star=c_star, c_prime=c_prime, rho=rho, lambda2=lam, lambda2_prime=lam_prime, M=M, a=a, eps=eps,
        T1=T1, T1_plus=T1_plus, T2=T2, sigma=sigma, jumps=jumps, corner_ok=corner_ok,
        corner_margins=corner_margins, region_max=region_max, sign_ok=sign_ok, zero_after_T2=zero_after,
        integral_margin=integral_margin, reconstruction_error=reconstruction_error,
        valid=bool(sign_ok and corner_ok and min(corner_margins) > 0),
    )
    logger.info(
        f"perturbation upper at c' = {c_prime:.6f} over c_star = {c_star:.6f}: sign_ok={sign_ok}, "
        f"corner_ok={corner_ok}, integral margin {integral_margin:.3e}"
    )
    return PerturbationResult(grid=grid, values=values, report=report)
