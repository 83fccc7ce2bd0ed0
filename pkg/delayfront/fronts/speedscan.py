"""
Minimal speed c_* by bisection on the existence predicate of the solver, cross-checked by a DNS
spreading-speed run, and the pulled/pushed classification from decay rates at and above c_*.
"""
import logging
from datetime import datetime
from logging import Logger
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from ..engine.base import BaseTask
from ..engine.constants import Classification, Outcome, Strategy
from ..engine.errors import DelayFrontError, DomainError
from ..engine.pipeline import ProbePipeline, ProbeTask
from .charspec import lambda1, lambda2, speed_bounds
from .dns import FrontSpeedEstimate, SimConfig, default_sim_config, measure_speed, simulate
from .nonlinearity import NonlinearitySpec, validate_H
from .profile import DecayFit, Profile, decay_rate_fit, default_decay_window, level_crossing, residual
from .solver import FrontResult, IterationReport, SolverSettings, pushed_perturbation_upper, solve_front


logger = logging.getLogger(__name__)

LADDER_POINTS = 8
CLASSIFY_OFFSETS = (0.05, 0.2, 0.5)
GATE_RTOL = 0.02
MATCH_RTOL = 0.05
SEPARATION_RTOL = 0.2
DNS_RTOL = 0.05
PERTURBATION_STEP = 0.05
CRITICAL_WINDOW = (1e-5, 1e-2)



class SpeedEvidence(BaseModel):
    c_sharp: float
    c_star_upper: float
    decay_at_cstar: Optional[DecayFit] = None
    lambda1_at_cstar: Optional[float] = None
    lambda2_at_cstar: Optional[float] = None
    decay_above: List[Tuple[float, Optional[DecayFit]]] = Field(default_factory=list)
    gate_passed: Optional[bool] = None


class SpeedScanReport(BaseModel):
    c_star: float
    bracket: Tuple[float, float]
    h: float
    tol: float
    classification: Classification
    evidence: SpeedEvidence
    dns_speed: Optional[float] = None
    dns_stderr: Optional[float] = None
    dns_gap: Optional[float] = None
    gap: Optional[float] = None
    gco_only: bool = False
    perturbation: Optional[Dict] = None
    probes: List[Dict] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
    timestamp: datetime = Field(default_factory=datetime.now)



class FrontProbeTask(ProbeTask):
    """Solves the front at one speed; succeeds when the existence predicate holds."""
    def __init__(
        self, name: str, c: float, spec: NonlinearitySpec, h: float, settings: SolverSettings,
        predecessors: List[ProbeTask] = None, extra_seeds: List[FrontResult] = None,
        loggers: Union[Logger, List[Logger]] = None
    ) -> None:
        super().__init__(name, c, predecessors=predecessors, loggers=loggers)
        self.spec = spec
        self.h = h
        self.settings = settings
        self.extra_seeds = list(extra_seeds) if extra_seeds is not None else list()

    def execute(self) -> bool:
        self.output = solve_front(self.spec, self.c, self.h, self.settings, seeds=self.seeds() + self.extra_seeds)
        return self.output.exists

    def on_success(self) -> None:
        self.log(f"front exists at c = {self.c:.6f}: {self.output.summary()}", level="INFO")

    def on_failure(self) -> None:
        self.log(f"no front at c = {self.c:.6f}: {self.output.summary()}", level="INFO")


class DnsSpeedTask(BaseTask):
    """Step-data spreading speed, run alongside the bisection."""
    def __init__(self, name: str, config: SimConfig, loggers: Union[Logger, List[Logger]] = None) -> None:
        super().__init__(name, loggers=loggers)
        self.config = config
        self.output: Optional[FrontSpeedEstimate] = None

    def execute(self) -> bool:
        trajectory = simulate(self.config)
        self.output = measure_speed(trajectory)
        return True

    def on_success(self) -> None:
        self.log(f"DNS spreading speed {self.output.speed:.6f} +- {self.output.stderr:.2e}", level="INFO")

    def on_error(self, e: Exception) -> None:
        self.log(f"DNS spreading run gave no speed: {e}", level="WARNING")



def _probe_record(result: FrontResult) -> Dict:
    return {
        "c": result.c, "exists": result.exists, "strategy": result.strategy.value,
        "outcome": result.outcome.value, "iterations": result.report.iterations,
    }


def _seeds_below(results: Dict[float, FrontResult], c: float) -> List[FrontResult]:
    return [r for cc, r in results.items() if cc < c and r.report.converged]


def _ladder(
    spec: NonlinearitySpec, h: float, c_fail: float, c_ok: float, settings: SolverSettings,
    jobs: Optional[int], loggers
) -> Dict[float, FrontResult]:
    speeds = np.linspace(c_fail, c_ok, LADDER_POINTS)
    tasks = [FrontProbeTask(f"ladder_{k}", c, spec, h, settings, loggers=loggers) for k, c in enumerate(speeds)]
    pipeline = ProbePipeline(tasks, jobs=jobs, loggers=loggers)
    pipeline.run()

    results = dict()
    for task in tasks:
        if task.output is None:
            logger.warning(f"ladder probe at c = {task.c:.6f} raised: {task.exception}")
            continue
        results[task.c] = task.output
    return results


def estimate_cstar(
    spec: NonlinearitySpec, h: float, tol: float = 1e-3, settings: Optional[SolverSettings] = None,
    jobs: Optional[int] = None, dns: bool = True, sim_config: Optional[SimConfig] = None,
    loggers: Union[Logger, List[Logger]] = None
) -> Tuple[SpeedScanReport, Dict[float, FrontResult]]:
    """
    Bisects FrontExists(c) between c_fail = max(c_# - 0.1, 0.01) and c_ok = c^*(g'_+) + 0.1 after a
    parallel ladder of probes, then classifies. Returns the report and every front solved on the way.
    """
    if tol < 1e-4:
        raise DomainError(f"estimate_cstar needs tol >= 1e-4, got {tol}")
    settings = settings if settings is not None else SolverSettings()
    bounds = speed_bounds(spec, h)
    notes: List[str] = []

    dns_task = None
    if dns:
        config = sim_config if sim_config is not None else default_sim_config(spec, h)
        dns_task = DnsSpeedTask("dns_spreading", config, loggers=loggers)
        dns_task.start()

    c_fail = max(bounds.c_sharp - 0.1, 0.01)
    c_ok = bounds.c_star_upper + 0.1
    logger.info(f"--------------------------- started speed scan on [{c_fail:.6f}, {c_ok:.6f}] at {datetime.now()}")
    results = _ladder(spec, h, c_fail, c_ok, settings, jobs, loggers)

    exists = {c: r.exists for c, r in sorted(results.items())}
    consistent = True
    if not exists.get(c_ok, False):
        notes.append(f"existence predicate is false at c_ok = {c_ok:.6f}")
        consistent = False
    if exists.get(c_fail, False):
        notes.append(f"existence predicate is true at c_fail = {c_fail:.6f}")
        consistent = False

    lo, hi = c_fail, c_ok
    if consistent:
        hi = min(c for c, ok in exists.items() if ok)
        lo = max((c for c, ok in exists.items() if not ok and c < hi), default=c_fail)
        late = [c for c, ok in exists.items() if not ok and c > hi]
        if late:
            notes.append(f"existence predicate is not monotone: false at c = {', '.join(f'{c:.6f}' for c in late)} above {hi:.6f}")
            consistent = False

    while consistent and hi - lo > tol:
        mid = 0.5 * (lo + hi)
        try:
            result = solve_front(spec, mid, h, settings, seeds=_seeds_below(results, mid))
        except DelayFrontError as e:
            notes.append(f"probe at c = {mid:.6f} raised: {e}")
            consistent = False
            break
        results[mid] = result
        if result.exists:
            hi = mid
        else:
            lo = mid
        logger.debug(f"bisection bracket [{lo:.6f}, {hi:.6f}]")
    logger.info(f"--------------------------- finished speed scan with bracket [{lo:.6f}, {hi:.6f}] at {datetime.now()}")

    c_star = hi
    report = SpeedScanReport(
        c_star=c_star, bracket=(lo, hi), h=h, tol=tol, classification=Classification.INCONCLUSIVE,
        evidence=SpeedEvidence(c_sharp=bounds.c_sharp, c_star_upper=bounds.c_star_upper),
        probes=[_probe_record(r) for _, r in sorted(results.items())], notes=notes,
    )
    if hi in results:
        report.gap = results[hi].report.gap

    validation = validate_H(spec)
    gco = next((check for check in validation.checks if check.name == "hoelder secant"), None)
    if gco is not None and gco.passed and not validation.gcos_verified:
        report.gco_only = True
        notes.append("only the secant Hoelder bound |g(u)/u - g'(0)| <= C u^theta was verified; the minimal speed estimate assumes the derivative bound")

    if dns_task is not None:
        dns_task.join()
        notes.append("DNS spreading speed is an empirical estimator of c_*, not a proven one")
        if dns_task.output is not None:
            report.dns_speed = dns_task.output.speed
            report.dns_stderr = dns_task.output.stderr
            report.dns_gap = abs(dns_task.output.speed - c_star)
        else:
            notes.append(f"DNS run failed: {dns_task.exception}")

    if consistent:
        fronts = {c: r for c, r in results.items()}
        classification, evidence, extra, solved = classify(spec, h, report, settings, fronts=fronts, jobs=jobs, loggers=loggers)
        report.classification = classification
        report.evidence = evidence
        notes.extend(extra)
        results.update(solved)
    return report, results


def _front_from_profile(profile: Profile, spec: NonlinearitySpec, settings: SolverSettings) -> FrontResult:
    res = residual(profile, spec)
    converged = res <= settings.residual_tol
    report = IterationReport(
        iterations=0, delta_history=[], final_residual=res, converged=converged,
        outcome=Outcome.CONVERGED if converged else Outcome.STAGNATED
    )
    return FrontResult(
        profile=profile, report=report, strategy=Strategy(profile.meta.get("strategy", Strategy.KPP_UPPER.value)),
        exists=converged, c=profile.c, h=profile.h
    )


def _critical_fit(front: FrontResult) -> Optional[DecayFit]:
    try:
        return decay_rate_fit(front.profile, default_decay_window(front.profile, *CRITICAL_WINDOW))
    except DomainError as e:
        logger.warning(f"no decay fit at c = {front.c:.6f}: {e}")
        return None


def classify(
    spec: NonlinearitySpec, h: float, report: SpeedScanReport, settings: Optional[SolverSettings] = None,
    fronts: Optional[Dict[float, Union[FrontResult, Profile]]] = None, jobs: Optional[int] = None,
    loggers: Union[Logger, List[Logger]] = None
) -> Tuple[Classification, SpeedEvidence, List[str], Dict[float, FrontResult]]:
    """
    Fits decay rates at c_star and at c_star + {0.05, 0.2, 0.5}, gates on the lambda2 law above c_star
    and classifies at c_star. Cached fronts (results or bare profiles) are reused by speed.
    """
    settings = settings if settings is not None else SolverSettings()
    c_star, tol = report.c_star, report.tol
    notes: List[str] = []
    cache: Dict[float, FrontResult] = dict()
    for c, item in (fronts or dict()).items():
        cache[c] = _front_from_profile(item, spec, settings) if isinstance(item, Profile) else item

    evidence = SpeedEvidence(
        c_sharp=report.evidence.c_sharp, c_star_upper=report.evidence.c_star_upper,
        lambda1_at_cstar=lambda1(c_star, h, spec.gp0), lambda2_at_cstar=lambda2(c_star, h, spec.gp0),
    )

    critical = cache.get(c_star)
    if critical is None:
        critical = solve_front(spec, c_star, h, settings, seeds=_seeds_below(cache, c_star))
        cache[c_star] = critical

    # continuation edges chain the classification speeds upward from the critical front
    tasks: List[FrontProbeTask] = []
    for k, offset in enumerate(CLASSIFY_OFFSETS):
        c = c_star + offset
        if c in cache:
            continue
        predecessors = tasks[-1:] if tasks else []
        tasks.append(FrontProbeTask(f"above_{k}", c, spec, h, settings, predecessors=predecessors, extra_seeds=[critical], loggers=loggers))
    if tasks:
        ProbePipeline(tasks, jobs=jobs, loggers=loggers).run()
        for task in tasks:
            if task.output is not None:
                cache[task.c] = task.output

    gate = True
    for offset in CLASSIFY_OFFSETS:
        c = c_star + offset
        front = cache.get(c)
        fit = None
        if front is not None and front.report.converged:
            try:
                fit = decay_rate_fit(front.profile)
            except DomainError as e:
                logger.warning(f"no decay fit at c = {c:.6f}: {e}")
        evidence.decay_above.append((c, fit))
        expected = lambda2(c, h, spec.gp0)
        if fit is None or not fit.reliable or expected is None or abs(fit.rate - expected) > GATE_RTOL * expected:
            gate = False
            notes.append(f"decay above c_star failed the lambda2 gate at c = {c:.6f}")
    evidence.gate_passed = gate

    fit = _critical_fit(critical)
    evidence.decay_at_cstar = fit
    lam1, lam2 = evidence.lambda1_at_cstar, evidence.lambda2_at_cstar

    classification = Classification.INCONCLUSIVE
    if not gate:
        pass
    elif fit is None or not fit.reliable:
        notes.append("decay fit at c_star is unreliable (r^2 < 0.999)")
    elif abs(c_star - evidence.c_sharp) <= tol:
        classification = Classification.PULLED
        if fit.poly_degree == 1:
            notes.append("critical front decays like (-t) exp(lambda t)")
    elif c_star > evidence.c_sharp + tol and lam1 is not None and lam2 is not None:
        near_lam1 = abs(fit.rate - lam1) <= MATCH_RTOL * lam1
        far_lam2 = abs(fit.rate - lam2) > SEPARATION_RTOL * lam2
        if near_lam1 and far_lam2:
            classification = Classification.PUSHED
        else:
            notes.append(f"critical decay {fit.rate:.6g} does not single out lambda1 = {lam1:.6g} (lambda2 = {lam2:.6g})")

    if report.dns_speed is not None and abs(report.dns_speed - c_star) > DNS_RTOL * c_star:
        notes.append(f"DNS speed {report.dns_speed:.6f} disagrees with c_star by more than {DNS_RTOL:.0%}")
        classification = Classification.INCONCLUSIVE

    if c_star > evidence.c_sharp + tol and critical.report.converged:
        report.perturbation = _perturbation_summary(critical, spec, settings, notes)

    logger.info(f"classification at c_star = {c_star:.6f}: {classification.value}")
    return classification, evidence, notes, cache


def _perturbation_summary(critical: FrontResult, spec: NonlinearitySpec, settings: SolverSettings, notes: List[str]) -> Optional[Dict]:
    c_prime = critical.c - PERTURBATION_STEP
    p, h = spec.gp0, critical.h
    lam = lambda2(critical.c, h, p)
    if lambda2(c_prime, h, p) is None or lam is None:
        notes.append(f"perturbation check skipped: c' = {c_prime:.6f} is below c_#")
        return None
    theta = spec.hoelder_triple.theta
    rho = lam * (1.0 + theta)
    try:
        t_m = level_crossing(critical.profile, 1e-3 * spec.kappa)
        M = 2.0 * float(critical.profile(t_m)) * np.exp(-rho * t_m)
        result = pushed_perturbation_upper(critical, c_prime, settings.eps, M, -settings.eps, theta, spec)
    except DelayFrontError as e:
        notes.append(f"perturbation check failed: {e}")
        return None
    return result.report.model_dump(mode="json")
