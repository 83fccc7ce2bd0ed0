import io
import json
import os
import unittest
from contextlib import redirect_stderr, redirect_stdout
from typing import Any, Dict, List, Tuple

from delayfront.cli import main
from delayfront.engine.errors import EXIT_DOMAIN, EXIT_SUCCESS, EXIT_USAGE
from delayfront.fronts.profile import shift, write_profile
from delayfront.metadata.sql_metadata_store import SqliteMetadataStore

from utils import *


cli_tests_path = artifacts_dir("cli_tests")
logger = file_logger(cli_tests_path, __name__)



def run(argv: List[str]) -> Tuple[int, Dict[str, Any]]:
    stdout, stderr = io.StringIO(), io.StringIO()
    with redirect_stdout(stdout), redirect_stderr(stderr):
        code = main(argv)
    logger.info(f"delayfront {' '.join(argv)} -> {code}\n{stderr.getvalue()}")
    output = stdout.getvalue()
    return code, (json.loads(output) if output.startswith("{") else {"raw": output})



class UsageTests(unittest.TestCase):
    def test_unknown_subcommand(self):
        code, _ = run(["frobnicate"])
        self.assertEqual(code, EXIT_USAGE)

    def test_no_subcommand(self):
        code, _ = run([])
        self.assertEqual(code, EXIT_USAGE)

    def test_missing_argument(self):
        code, _ = run(["char-roots", "--c", "2.0"])
        self.assertEqual(code, EXIT_USAGE)

    def test_version(self):
        code, output = run(["--version"])
        self.assertEqual(code, EXIT_SUCCESS)
        self.assertIn("delayfront", output["raw"])

    def test_missing_config(self):
        code, _ = run(["speed-bounds", "--config", os.path.join(cli_tests_path, "missing.json")])
        self.assertEqual(code, EXIT_DOMAIN)



class CommandTests(unittest.TestCase):
    def test_char_roots_double_root(self):
        code, report = run(["char-roots", "--c", "2", "--h", "0", "--p", "2"])
        self.assertEqual(code, EXIT_SUCCESS)
        self.assertTrue(report["real"])
        self.assertTrue(report["degenerate"])
        self.assertIn("timestamp", report)
        self.assertEqual(list(report), sorted(report))

    def test_char_roots_none(self):
        code, report = run(["char-roots", "--c", "1", "--h", "0", "--p", "2"])
        self.assertEqual(code, EXIT_SUCCESS)
        self.assertFalse(report["real"])
        self.assertIsNone(report["lambda2"])

    def test_validate_g(self):
        path = write_config(os.path.join(cli_tests_path, "kpp.json"), {"problem": {"spec": KPP_SPEC}})
        code, report = run(["validate-g", "--config", path])
        self.assertEqual(code, EXIT_SUCCESS)
        self.assertTrue(report["passed"])

    def test_validate_g_fails(self):
        spec = {"family": "RationalKPP", "params": {"p": 0.8}, "kappa": 1.0}
        path = write_config(os.path.join(cli_tests_path, "subcritical.json"), {"problem": {"spec": spec}})
        code, _ = run(["validate-g", "--config", path])
        self.assertEqual(code, EXIT_DOMAIN)

    def test_speed_bounds(self):
        path = write_config(os.path.join(cli_tests_path, "bounds.json"), {"problem": {"spec": KPP_SPEC}})
        code, report = run(["speed-bounds", "--config", path])
        self.assertEqual(code, EXIT_SUCCESS)
        self.assertAlmostEqual(report["c_sharp"], 2.0, places=8)

    def test_lattice_char(self):
        content = {"problem": {"spec": KPP_SPEC, "relaxed": True}, "lattice": {"D": 0.0, "kernel": {"kind": "finite", "weights": {"0": 1.0}}, "c": 1.0}}
        path = write_config(os.path.join(cli_tests_path, "lattice.json"), content)
        code, report = run(["lattice-char", "--config", path])
        self.assertEqual(code, EXIT_SUCCESS)
        self.assertAlmostEqual(report["lambda"], 1.0, places=9)
        self.assertEqual(report["multiplicity_j"], 0)

    def test_shift_match(self):
        profile = logistic_profile()
        a = os.path.join(cli_tests_path, "a.csv")
        b = os.path.join(cli_tests_path, "b.csv")
        write_profile(profile, a)
        write_profile(shift(profile, 0.75), b)
        code, report = run(["shift-match", "--a", a, "--b", b])
        self.assertEqual(code, EXIT_SUCCESS)
        self.assertAlmostEqual(report["s0"], 0.75, places=8)

    def test_solve_front_into_run_directory(self):
        run_dir = os.path.join(cli_tests_path, "front_run")
        content = {"problem": {"spec": KPP_SPEC}, "numerics": {"grid_size": 2001, "c": 2.5, "dns": False}}
        path = write_config(os.path.join(cli_tests_path, "front.json"), content)
        code, report = run(["solve-front", "--config", path, "--run-dir", run_dir])
        self.assertEqual(code, EXIT_SUCCESS)
        self.assertTrue(report["exists"])
        self.assertTrue(os.path.exists(os.path.join(run_dir, "front_c=2.500000.csv")))
        self.assertTrue(os.path.exists(os.path.join(run_dir, "config.json")))

        code, _ = run(["solve-front", "--config", path, "--run-dir", run_dir, "--c", "3.0"])
        self.assertEqual(code, EXIT_SUCCESS)

        store = SqliteMetadataStore("check", f"sqlite:///{os.path.abspath(run_dir)}/metadata.db")
        store.setup()
        runs = store.get_runs()
        self.assertEqual([r["exit_code"] for r in runs], [0, 0])
        self.assertEqual({r["command"] for r in runs}, {"solve-front"})
        self.assertTrue(any(m["key"] == "residual" for m in store.get_metrics(runs[0]["id"])))



if __name__ == "__main__":
    unittest.main()
