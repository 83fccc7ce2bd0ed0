import unittest

import numpy as np
from pydantic import ValidationError
from scipy.optimize import fsolve

from delayfront.engine.errors import NumericError
from delayfront.fronts.charspec import (
    CharParams, chi, chi_dz, double_root_speed, kappa_rate, lambda1, lambda2, real_roots, speed_bounds, xi_roots
)
from delayfront.fronts.nonlinearity import pushed_candidate, rational_kpp

from utils import *


charspec_tests_path = artifacts_dir("charspec_tests")
logger = file_logger(charspec_tests_path, __name__)



class ChiTests(unittest.TestCase):
    def test_value_at_zero(self):
        for p in (1.5, 2.0, 5.0):
            self.assertAlmostEqual(chi(0.0, CharParams(c=1.3, h=0.7, p=p)), p - 1.0, places=14)

    def test_zero_delay_is_quadratic(self):
        params = CharParams(c=2.5, h=0.0, p=2.0)
        for z in (0.1, 0.7, 3.0):
            self.assertAlmostEqual(chi(z, params), z * z - 2.5 * z + 1.0, places=13)

    def test_invalid_params(self):
        with self.assertRaises(ValidationError):
            CharParams(c=1.0, h=0.0, p=0.5)
        with self.assertRaises(ValidationError):
            CharParams(c=-1.0, h=0.0, p=2.0)



class RealRootsTests(unittest.TestCase):
    def test_quadratic_roots(self):
        roots = real_roots(CharParams(c=3.0, h=0.0, p=2.0))
        self.assertFalse(roots.degenerate)
        self.assertAlmostEqual(roots.lambda2, (3.0 - np.sqrt(5.0)) / 2.0, places=12)
        self.assertAlmostEqual(roots.lambda1, (3.0 + np.sqrt(5.0)) / 2.0, places=12)

    def test_double_root(self):
        roots = real_roots(CharParams(c=2.0, h=0.0, p=2.0))
        self.assertTrue(roots.degenerate)
        self.assertAlmostEqual(roots.lambda1, 1.0, places=5)
        self.assertEqual(roots.lambda1, roots.lambda2)

    def test_no_roots_below_double_root_speed(self):
        self.assertIsNone(real_roots(CharParams(c=1.9, h=0.0, p=2.0)))
        self.assertIsNone(lambda2(1.9, 0.0, 2.0))

    def test_roots_are_zeros(self):
        for c, h, p in ((2.0, 1.0, 2.0), (3.0, 0.5, 4.0), (1.5, 2.0, 1.5)):
            params = CharParams(c=c, h=h, p=p)
            roots = real_roots(params)
            self.assertIsNotNone(roots)
            self.assertLess(abs(chi(roots.lambda2, params)), 1e-10)
            self.assertLess(abs(chi(roots.lambda1, params)), 1e-10)
            self.assertLess(roots.lambda2, roots.lambda1)
            self.assertEqual(lambda1(c, h, p), roots.lambda1)



class DoubleRootSpeedTests(unittest.TestCase):
    def test_zero_delay_closed_form(self):
        for p in (1.5, 2.0, 5.0):
            c, lam = double_root_speed(0.0, p)
            self.assertLess(abs(c - 2.0 * np.sqrt(p - 1.0)), 1e-9)
            self.assertLess(abs(lam - np.sqrt(p - 1.0)), 1e-6)

    def test_delay_against_two_equation_solve(self):
        c, lam = double_root_speed(1.0, 2.0)
        oracle = lambda v: [chi(v[0], CharParams(c=v[1], h=1.0, p=2.0)), chi_dz(v[0], CharParams(c=v[1], h=1.0, p=2.0))]
        z_ref, c_ref = fsolve(oracle, [0.8, 0.85], xtol=1e-14)
        logger.info(f"c_#(h=1, p=2) = {c:.12f} (two-equation solve {c_ref:.12f}), lambda = {lam:.12f}")
        self.assertAlmostEqual(c, c_ref, places=8)
        self.assertAlmostEqual(lam, z_ref, places=4)

    def test_delay_against_grid_scan(self):
        c, _ = double_root_speed(1.0, 2.0)
        z = np.linspace(0.01, 3.0, 600)
        speeds = np.linspace(0.5, 2.0, 1501)
        Z, C = np.meshgrid(z, speeds)
        mins = (Z * Z - C * Z - 1.0 + 2.0 * np.exp(-Z * C)).min(axis=1)
        c_scan = speeds[int(np.argmax(mins <= 0.0))]
        self.assertLess(abs(c - c_scan), 2e-3)

    def test_decreasing_in_delay(self):
        speeds = [double_root_speed(h, 2.0)[0] for h in (0.0, 0.5, 1.0, 2.0, 4.0)]
        self.assertTrue(all(a > b for a, b in zip(speeds, speeds[1:])))

    def test_invalid_slope(self):
        with self.assertRaises(NumericError):
            double_root_speed(1.0, 1.0)



class KernelRootsTests(unittest.TestCase):
    def test_closed_form(self):
        xi = xi_roots(1.5)
        self.assertAlmostEqual(xi.xi1, -0.5, places=14)
        self.assertAlmostEqual(xi.xi2, 2.0, places=14)

    def test_vieta(self):
        for c in (1e-4, 0.3, 1.5, 10.0):
            xi = xi_roots(c)
            self.assertLess(abs(xi.xi1 * xi.xi2 + 1.0), 1e-14)
            self.assertLess(abs(xi.xi1 + xi.xi2 - c), 1e-14 * max(1.0, c))

    def test_nonpositive_speed(self):
        with self.assertRaises(NumericError):
            xi_roots(0.0)



class SpeedBoundsTests(unittest.TestCase):
    def test_sub_tangential(self):
        bounds = speed_bounds(rational_kpp(2.0), 0.0)
        self.assertAlmostEqual(bounds.c_sharp, 2.0, places=9)
        self.assertAlmostEqual(bounds.c_star_upper, 2.0, places=9)
        bounds = speed_bounds(rational_kpp(5.0), 0.0)
        self.assertAlmostEqual(bounds.c_sharp, 4.0, places=9)
        self.assertAlmostEqual(bounds.c_star_upper, 4.0, places=9)

    def test_pushed_candidate_gap(self):
        bounds = speed_bounds(pushed_candidate(), 0.5)
        self.assertGreater(bounds.c_star_upper, bounds.c_sharp)

    def test_kappa_rate_is_root(self):
        mu = kappa_rate(2.0, 1.0, 0.5)
        self.assertGreater(mu, 0.0)
        self.assertLess(abs(mu * mu + 2.0 * mu - 1.0 + 0.5 * np.exp(2.0 * mu)), 1e-12)



if __name__ == "__main__":
    unittest.main()
