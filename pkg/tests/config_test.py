import os
import unittest

from delayfront.config import load_config, parse_config
from delayfront.engine.constants import Family, KernelKind, Model
from delayfront.engine.errors import ConfigError

from utils import *


config_tests_path = artifacts_dir("config_tests")
logger = file_logger(config_tests_path, __name__)

configs_path = os.path.join(os.path.dirname(tests_path), "configs")



class ShippedConfigTests(unittest.TestCase):
    def test_all_shipped_configs_load(self):
        names = sorted(f for f in os.listdir(configs_path) if f.endswith(".json"))
        self.assertGreater(len(names), 0)
        for name in names:
            config = load_config(os.path.join(configs_path, name))
            logger.info(f"{name}: {config.problem.spec!r}")

    def test_kpp(self):
        config = load_config(os.path.join(configs_path, "kpp.json"))
        self.assertEqual(config.problem.spec.family, Family.RATIONAL_KPP)
        self.assertEqual(config.problem.h, 1.0)
        self.assertEqual(config.numerics.c, 2.0)
        self.assertFalse(config.numerics.dns)
        self.assertEqual(config.numerics.solver_settings().grid_size, 4001)
        self.assertIsNone(config.simulation)

    def test_lattice(self):
        config = load_config(os.path.join(configs_path, "lattice_geometric.json"))
        model = config.lattice_model()
        self.assertEqual(model.kernel.kind, KernelKind.GEOMETRIC)
        self.assertEqual(model.h, 1.0)
        sim = config.sim_config()
        self.assertEqual(sim.model, Model.LATTICE)
        self.assertEqual(sim.snapshot_every, 200)



class InvalidConfigTests(unittest.TestCase):
    def check_invalid(self, data):
        with self.assertRaises(ConfigError):
            parse_config(data)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(os.path.join(config_tests_path, "missing.json"))

    def test_bad_json(self):
        path = os.path.join(config_tests_path, "bad.json")
        with open(path, 'w') as f:
            f.write("{\"problem\": ")
        with self.assertRaises(ConfigError):
            load_config(path)

    def test_unknown_key(self):
        self.check_invalid({"problem": {"spec": KPP_SPEC}, "numerics": {"gridsize": 100}})

    def test_unknown_spec_key(self):
        self.check_invalid({"problem": {"spec": dict(KPP_SPEC, gp_plus=3.0)}})

    def test_unknown_family(self):
        self.check_invalid({"problem": {"spec": {"family": "Cubic", "kappa": 1.0}}})

    def test_missing_parameter(self):
        self.check_invalid({"problem": {"spec": {"family": "RationalKPP", "params": {}, "kappa": 1.0}}})

    def test_negative_delay(self):
        self.check_invalid({"problem": {"spec": KPP_SPEC, "h": -1.0}})

    def test_scan_tolerance(self):
        self.check_invalid({"problem": {"spec": KPP_SPEC}, "numerics": {"scan_tol": 1e-5}})

    def test_unstable_simulation(self):
        self.check_invalid({"problem": {"spec": KPP_SPEC}, "simulation": {"dt": 0.05, "T_final": 10.0}})

    def test_delay_not_resolved(self):
        self.check_invalid({"problem": {"spec": KPP_SPEC, "h": 1.0}, "simulation": {"dt": 0.015, "T_final": 10.0}})

    def test_missing_profile(self):
        simulation = {"dt": 0.01, "T_final": 10.0, "init": "ProfileImport", "profile_path": os.path.join(config_tests_path, "nope.csv")}
        self.check_invalid({"problem": {"spec": KPP_SPEC}, "simulation": simulation})

    def test_absent_sections(self):
        config = parse_config({"problem": {"spec": KPP_SPEC}})
        with self.assertRaises(ConfigError):
            config.sim_config()
        with self.assertRaises(ConfigError):
            config.lattice_model()



class FileRoundTripTests(unittest.TestCase):
    def test_written_config_loads(self):
        path = write_config(os.path.join(config_tests_path, "written.json"), {"problem": {"spec": KPP_SPEC, "h": 0.5}})
        config = load_config(path)
        self.assertEqual(config.problem.h, 0.5)
        self.assertEqual(config.problem.spec.gp0, 2.0)
        self.assertIsNone(config.outputs.run_dir)



if __name__ == "__main__":
    unittest.main()
