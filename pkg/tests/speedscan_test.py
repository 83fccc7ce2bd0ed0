import unittest
from typing import Callable, List, Tuple

import numpy as np

from delayfront.engine.constants import Classification, Outcome, Strategy
from delayfront.engine.errors import DomainError
from delayfront.fronts.charspec import double_root_speed, lambda1, lambda2, speed_bounds
from delayfront.fronts.nonlinearity import pushed_candidate, rational_kpp
from delayfront.fronts.profile import make_profile
from delayfront.fronts.solver import FrontResult, IterationReport
from delayfront.fronts.speedscan import CLASSIFY_OFFSETS, SpeedEvidence, SpeedScanReport, classify, estimate_cstar

from utils import *


speedscan_tests_path = artifacts_dir("speedscan_tests")
logger = file_logger(speedscan_tests_path, __name__)

SPEC = rational_kpp(2.0)



class ScanArgumentTests(unittest.TestCase):
    def test_tolerance_floor(self):
        with self.assertRaises(DomainError):
            estimate_cstar(SPEC, 0.0, tol=1e-5, dns=False)

    def test_report_reloads(self):
        evidence = SpeedEvidence(c_sharp=2.0, c_star_upper=2.0, lambda1_at_cstar=1.0, lambda2_at_cstar=1.0)
        report = SpeedScanReport(
            c_star=2.0005, bracket=(1.9995, 2.0005), h=0.0, tol=1e-3, classification=Classification.PULLED,
            evidence=evidence, notes=["DNS spreading speed is an empirical estimator of c_*, not a proven one"]
        )
        reloaded = SpeedScanReport.model_validate(report.model_dump(mode="json"))
        self.assertEqual(reloaded.classification, Classification.PULLED)
        self.assertEqual(reloaded.bracket, (1.9995, 2.0005))
        self.assertEqual(reloaded.evidence, evidence)



class DecisionTests(unittest.TestCase):
    """classify on fronts with known tails, so only the lambda1 / lambda2 decision is exercised."""
    spec = pushed_candidate()
    h = 0.5

    def front(self, c: float, rate: float) -> FrontResult:
        grid = np.linspace(-30.0 / rate, 30.0 / rate, 4001)
        profile = make_profile(grid, self.spec.kappa / (1.0 + np.exp(-rate * grid)), c, self.h, self.spec.kappa)
        report = IterationReport(iterations=0, delta_history=[], final_residual=0.0, converged=True, outcome=Outcome.CONVERGED)
        return FrontResult(profile=profile, report=report, strategy=Strategy.CONTINUATION_UPPER, exists=True, c=c, h=self.h)

    def decide(self, critical_rate: Callable[[float, float, float], float]) -> Tuple[Classification, SpeedEvidence, List[str]]:
        bounds = speed_bounds(self.spec, self.h)
        c_star = bounds.c_sharp + 0.5
        fronts = {c_star: self.front(c_star, critical_rate(c_star, self.h, self.spec.gp0))}
        for offset in CLASSIFY_OFFSETS:
            c = c_star + offset
            fronts[c] = self.front(c, lambda2(c, self.h, self.spec.gp0))
        report = SpeedScanReport(
            c_star=c_star, bracket=(c_star - 1e-3, c_star), h=self.h, tol=1e-3, classification=Classification.INCONCLUSIVE,
            evidence=SpeedEvidence(c_sharp=bounds.c_sharp, c_star_upper=bounds.c_star_upper)
        )
        classification, evidence, notes, _ = classify(self.spec, self.h, report, fronts=fronts, loggers=logger)
        logger.info(f"decision at c_star = {c_star:.6f}: {classification.value}, notes {notes}")
        return classification, evidence, notes

    def test_fast_decay_is_pushed(self):
        classification, evidence, _ = self.decide(lambda1)
        self.assertTrue(evidence.gate_passed)
        self.assertEqual(classification, Classification.PUSHED)
        self.assertLess(abs(evidence.decay_at_cstar.rate - evidence.lambda1_at_cstar), 0.05 * evidence.lambda1_at_cstar)

    def test_slow_decay_is_not_pushed(self):
        classification, evidence, notes = self.decide(lambda2)
        self.assertTrue(evidence.gate_passed)
        self.assertEqual(classification, Classification.INCONCLUSIVE)
        self.assertTrue(any("does not single out" in note for note in notes))



@unittest.skipUnless(SLOW, "set DELAYFRONT_SLOW=1 for desk-scale runs")
class PulledRegimeTests(unittest.TestCase):
    def check_pulled(self, h: float) -> None:
        c_sharp = double_root_speed(h, SPEC.gp0)[0]
        report, fronts = estimate_cstar(SPEC, h, tol=1e-3, loggers=logger)
        logger.info(f"pulled scan h={h}: c_star {report.c_star:.6f} (c_# {c_sharp:.6f}), bracket {report.bracket}, notes {report.notes}")

        self.assertLessEqual(abs(report.c_star - c_sharp), 2e-3)
        self.assertGreaterEqual(report.bracket[0], c_sharp - 2e-3)
        self.assertEqual(report.classification, Classification.PULLED)
        self.assertTrue(report.evidence.gate_passed)
        self.assertIsNotNone(report.dns_speed)
        self.assertLess(abs(report.dns_speed - report.c_star), 0.05 * report.c_star)
        self.assertTrue(all(r.exists for c, r in fronts.items() if c >= report.c_star))

    def test_without_delay(self):
        self.check_pulled(0.0)

    def test_with_delay(self):
        self.check_pulled(1.0)

    def test_decay_follows_lambda2_above_the_minimal_speed(self):
        c_sharp = double_root_speed(0.0, SPEC.gp0)[0]
        evidence = SpeedEvidence(c_sharp=c_sharp, c_star_upper=speed_bounds(SPEC, 0.0).c_star_upper)
        report = SpeedScanReport(
            c_star=c_sharp + 0.5, bracket=(c_sharp + 0.499, c_sharp + 0.5), h=0.0, tol=1e-3,
            classification=Classification.INCONCLUSIVE, evidence=evidence
        )
        classification, evidence, notes, _ = classify(SPEC, 0.0, report, loggers=logger)
        self.assertTrue(evidence.gate_passed)
        self.assertEqual(classification, Classification.INCONCLUSIVE)
        self.assertLess(abs(evidence.decay_at_cstar.rate - lambda2(c_sharp + 0.5, 0.0, SPEC.gp0)), 0.02 * evidence.lambda2_at_cstar)



@unittest.skipUnless(SLOW, "set DELAYFRONT_SLOW=1 for desk-scale runs")
class PushedRegimeTests(unittest.TestCase):
    def test_spline_candidate(self):
        spec = pushed_candidate()
        h = 0.5
        c_sharp = double_root_speed(h, spec.gp0)[0]
        report, _ = estimate_cstar(spec, h, tol=1e-3, loggers=logger)
        logger.info(f"pushed scan: c_star {report.c_star:.6f} (c_# {c_sharp:.6f}), evidence {report.evidence}, notes {report.notes}")

        self.assertGreater(report.c_star, c_sharp + 0.05)
        self.assertEqual(report.classification, Classification.PUSHED)
        rate = report.evidence.decay_at_cstar.rate
        lam1 = lambda1(report.c_star, h, spec.gp0)
        lam2 = lambda2(report.c_star, h, spec.gp0)
        self.assertLess(abs(rate - lam1), 0.05 * lam1)
        self.assertGreater(abs(rate - lam2), 0.2 * lam2)
        self.assertGreater(rate, lam2)



if __name__ == "__main__":
    unittest.main()
