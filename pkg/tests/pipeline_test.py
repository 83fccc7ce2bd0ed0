import io
import time
import unittest
from contextlib import redirect_stdout
from threading import Lock
from typing import List

from delayfront.engine.constants import Result, Status
from delayfront.engine.errors import InvalidProbeDependencyError
from delayfront.engine.pipeline import ProbePipeline, ProbeTask

from utils import *


pipeline_tests_path = artifacts_dir("pipeline_tests")
logger = file_logger(pipeline_tests_path, __name__)



class ThresholdProbe(ProbeTask):
    """succeeds above a threshold speed and hands its speed on as the seed."""
    finished: List[str] = []
    finished_lock = Lock()

    def __init__(self, name: str, c: float, threshold: float = 1.0, delay: float = 0.0, **kwargs) -> None:
        super().__init__(name, c, **kwargs)
        self.threshold = threshold
        self.delay = delay
        self.received: List[float] = []

    def execute(self) -> bool:
        self.received = list(self.seeds())
        time.sleep(self.delay)
        with ThresholdProbe.finished_lock:
            ThresholdProbe.finished.append(self.name)
        if self.c > self.threshold:
            self.output = self.c
            return True
        return False


class RaisingProbe(ProbeTask):
    def execute(self) -> bool:
        raise RuntimeError("probe blew up")



class ValidationTests(unittest.TestCase):
    def test_duplicate_names(self):
        with self.assertRaises(InvalidProbeDependencyError):
            ProbePipeline([ThresholdProbe("a", 1.0), ThresholdProbe("a", 2.0)], loggers=logger)

    def test_predecessor_outside_pipeline(self):
        outside = ThresholdProbe("outside", 1.0)
        with self.assertRaises(InvalidProbeDependencyError):
            ProbePipeline([ThresholdProbe("inside", 2.0, predecessors=[outside])], loggers=logger)

    def test_shared_speed(self):
        with self.assertRaises(InvalidProbeDependencyError):
            ProbePipeline([ThresholdProbe("a", 1.5), ThresholdProbe("b", 1.5)], loggers=logger)

    def test_edges_must_increase_speed(self):
        high = ThresholdProbe("high", 2.0)
        low = ThresholdProbe("low", 1.0, predecessors=[high])
        with self.assertRaises(InvalidProbeDependencyError):
            ProbePipeline([high, low], loggers=logger)

    def test_cycle(self):
        a = ThresholdProbe("a", 1.0)
        b = ThresholdProbe("b", 2.0, predecessors=[a])
        a.predecessors = [b]
        with self.assertRaises(InvalidProbeDependencyError):
            ProbePipeline([a, b], loggers=logger)

    def test_jobs(self):
        with self.assertRaises(ValueError):
            ProbePipeline([ThresholdProbe("a", 1.0)], jobs=0, loggers=logger)



class RunTests(unittest.TestCase):
    def setUp(self) -> None:
        ThresholdProbe.finished = []

    def test_results_for_every_probe(self):
        probes = [ThresholdProbe(f"p{k}", 0.5 * k, delay=0.01 * (5 - k)) for k in range(5)]
        pipeline = ProbePipeline(probes, jobs=2, loggers=logger)
        results = pipeline.run()

        self.assertEqual(sorted(results.keys()), [f"p{k}" for k in range(5)])
        for probe in probes:
            expected = Result.SUCCESS if probe.c > 1.0 else Result.FAILURE
            self.assertEqual(probe.result, expected)
            self.assertEqual(probe.status, Status.EXITED)
            self.assertEqual(results[probe.name].c, probe.c)

    def test_continuation_chain_runs_upward(self):
        first = ThresholdProbe("first", 1.5, delay=0.05)
        second = ThresholdProbe("second", 2.0, predecessors=[first])
        third = ThresholdProbe("third", 2.5, predecessors=[second])
        ProbePipeline([third, second, first], jobs=3, loggers=logger).run()

        self.assertEqual(ThresholdProbe.finished, ["first", "second", "third"])
        self.assertEqual(second.received, [1.5])
        self.assertEqual(third.received, [2.0])
        self.assertEqual(first.successors, [second])

    def test_failed_predecessor_gives_no_seed(self):
        first = ThresholdProbe("first", 0.5)
        second = ThresholdProbe("second", 2.0, predecessors=[first])
        needy = ThresholdProbe("needy", 2.5, predecessors=[first], requires_seed=True)
        results = ProbePipeline([first, second, needy], loggers=logger).run()

        self.assertEqual(second.received, [])
        self.assertEqual(second.result, Result.SUCCESS)
        self.assertEqual(needy.status, Status.SKIPPED)
        self.assertEqual(results["needy"].result, Result.FAILURE)
        self.assertNotIn("needy", ThresholdProbe.finished)

    def test_errors_are_captured(self):
        bad = RaisingProbe("bad", 1.0)
        after = ThresholdProbe("after", 2.0, predecessors=[bad])
        results = ProbePipeline([bad, after], loggers=logger).run()

        self.assertEqual(bad.result, Result.ERROR)
        self.assertIsInstance(bad.exception, RuntimeError)
        self.assertFalse(results["bad"].exists)
        self.assertEqual(after.result, Result.SUCCESS)

    def test_model(self):
        first = ThresholdProbe("first", 1.0)
        second = ThresholdProbe("second", 2.0, predecessors=[first])
        model = ProbePipeline([first, second], jobs=4, loggers=logger).model()
        self.assertEqual(model.jobs, 4)
        self.assertEqual([t.name for t in model.tasks], ["first", "second"])
        self.assertEqual(model.tasks[1].predecessors, ["first"])



class HookTests(unittest.TestCase):
    def test_outcomes_are_logged(self):
        low = ThresholdProbe("low", 0.5)
        high = ThresholdProbe("high", 2.0)
        bad = RaisingProbe("bad", 3.0)
        with self.assertLogs(logger, level="INFO") as captured:
            ProbePipeline([low, high, bad], loggers=logger).run()
        output = "\n".join(captured.output)
        self.assertIn("speed task 'high' succeeded at c = 2.000000", output)
        self.assertIn("speed task 'low' failed at c = 0.500000", output)
        self.assertIn("speed task 'bad' raised RuntimeError at c = 3.000000", output)

    def test_unattached_task_logs_to_module_logger(self):
        probe = ThresholdProbe("alone", 2.0)
        stdout = io.StringIO()
        with redirect_stdout(stdout), self.assertLogs("delayfront.engine.base", level="INFO") as captured:
            probe.run()
        self.assertEqual(stdout.getvalue(), "")
        self.assertTrue(any("speed task 'alone' succeeded" in line for line in captured.output))
        self.assertEqual(probe.status, Status.EXITED)

    def test_invalid_level(self):
        with self.assertRaises(ValueError):
            ThresholdProbe("alone", 2.0).log("message", level="VERBOSE")



if __name__ == "__main__":
    unittest.main()
