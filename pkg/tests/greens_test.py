import unittest

import numpy as np

from delayfront.engine.errors import DomainError
from delayfront.fronts.charspec import double_root_speed, lambda2, xi_roots
from delayfront.fronts.greens import JumpData, apply_A, impulsive_solve, simpson_weights
from delayfront.fronts.nonlinearity import linear, rational_kpp
from delayfront.fronts.profile import constant_profile, resample, shift, tail_only_profile

from utils import *


greens_tests_path = artifacts_dir("greens_tests")
logger = file_logger(greens_tests_path, __name__)

GRID = np.linspace(-20.0, 20.0, 4001)
INTERIOR = slice(200, -200)



class SimpsonWeightTests(unittest.TestCase):
    def test_plain_simpson_at_zero_rate(self):
        w0, wm, w1 = simpson_weights(np.array([0.0]))
        self.assertAlmostEqual(float(w0[0]), 1.0 / 6.0, places=14)
        self.assertAlmostEqual(float(wm[0]), 4.0 / 6.0, places=14)
        self.assertAlmostEqual(float(w1[0]), 1.0 / 6.0, places=14)

    def test_exact_for_quadratics(self):
        for x in (-2.0, -0.3, 0.1, 1.5):
            w0, wm, w1 = simpson_weights(np.array([x]))
            # int_0^1 v^2 exp(x v) dv
            exact = (np.exp(x) * (x * x - 2.0 * x + 2.0) - 2.0) / x ** 3
            self.assertAlmostEqual(float(wm[0] * 0.25 + w1[0]), exact, places=12)

    def test_series_and_closed_form_agree(self):
        below = simpson_weights(np.array([0.5 - 1e-9]))
        above = simpson_weights(np.array([0.5 + 1e-9]))
        for a, b in zip(below, above):
            self.assertAlmostEqual(float(a[0]), float(b[0]), places=8)



class LinearOracleTests(unittest.TestCase):
    def test_eigenrelation_at_characteristic_roots(self):
        generator = rng()
        for _ in range(10):
            p = float(generator.uniform(1.5, 4.0))
            h = float(generator.uniform(0.0, 2.0))
            c = double_root_speed(h, p)[0] + float(generator.uniform(0.1, 1.0))
            lam = lambda2(c, h, p)
            phi = tail_only_profile(GRID, lam, c, h)
            out = apply_A(phi, linear(p), c, h)
            error = float(np.max(np.abs(out.values[INTERIOR] / phi.values[INTERIOR] - 1.0)))
            logger.info(f"eigenrelation c={c:.4f} h={h:.4f} p={p:.4f} lambda={lam:.6f}: relative error {error:.3e}")
            self.assertLess(error, 1e-8)

    def test_closed_form_factor(self):
        c, h, p, lam = 1.7, 0.6, 2.5, 0.3
        phi = tail_only_profile(GRID, lam, c, h)
        out = apply_A(phi, linear(p), c, h)
        factor = p * np.exp(-lam * c * h) / (1.0 + c * lam - lam * lam)
        np.testing.assert_allclose(out.values[INTERIOR], factor * phi.values[INTERIOR], rtol=1e-8)

    def test_kernel_mass(self):
        phi = constant_profile(GRID, 1.0, 1.3, 0.0, 1.0)
        out = apply_A(phi, linear(1.0))
        self.assertLess(float(np.max(np.abs(out.values - 1.0))), 1e-10)

    def test_constant_kappa_is_fixed(self):
        spec = rational_kpp(2.0)
        phi = constant_profile(GRID, spec.kappa, 2.0, 1.0, spec.kappa)
        out = apply_A(phi, spec)
        self.assertLess(float(np.max(np.abs(out.values - spec.kappa))), 1e-10)

    def test_nonpositive_speed(self):
        with self.assertRaises(DomainError):
            apply_A(logistic_profile(), rational_kpp(2.0), c=0.0)



class OrderingTests(unittest.TestCase):
    def test_operator_is_monotone(self):
        spec = rational_kpp(2.0)
        low = logistic_profile(c=2.5, h=0.5)
        generator = rng()
        for s in generator.uniform(0.1, 3.0, size=5):
            high = resample(shift(low, float(s)), low.grid)
            self.assertTrue(np.all(high.values >= low.values))
            a_low = apply_A(low, spec)
            a_high = apply_A(high, spec)
            self.assertTrue(np.all(a_high.values >= a_low.values - 1e-14))

    def test_quadrature_bound_reported(self):
        out = apply_A(logistic_profile(c=2.5, h=0.5), rational_kpp(2.0))
        self.assertIn("quadrature_bound", out.meta)
        self.assertLess(out.meta["quadrature_bound"], 1e-6)



class ImpulsiveTests(unittest.TestCase):
    def test_constant_forcing(self):
        psi = impulsive_solve(lambda t: -np.ones_like(t), [], 1.3, GRID)
        self.assertLess(float(np.max(np.abs(psi - 1.0))), 1e-10)

    def test_single_jump(self):
        c = 1.5
        xi = xi_roots(c)
        psi = impulsive_solve(lambda t: np.zeros_like(t), [JumpData(t_j=0.0, alpha_j=1.0, beta_j=0.0)], c, GRID)
        span = xi.xi2 - xi.xi1
        expected = np.where(GRID < 0, np.exp(xi.xi2 * GRID) * xi.xi1 / span, np.exp(xi.xi1 * GRID) * xi.xi2 / span)
        np.testing.assert_allclose(psi, expected, atol=1e-14)

        # right-continuous at the jump
        grid = np.arange(-100, 101) * 0.01
        psi = impulsive_solve(lambda t: np.zeros_like(t), [JumpData(t_j=0.0, alpha_j=1.0)], c, grid)
        self.assertAlmostEqual(psi[100], xi.xi2 / span, places=14)
        self.assertAlmostEqual(psi[100] - np.exp(-0.01 * xi.xi2) * xi.xi1 / span, 1.0, delta=0.01)

    def test_slope_jump(self):
        c = 0.8
        grid = np.linspace(-10.0, 10.0, 20001)
        psi = impulsive_solve(lambda t: np.zeros_like(t), [JumpData(t_j=0.0, beta_j=1.0)], c, grid)
        step = grid[1] - grid[0]
        k = int(np.argmin(np.abs(grid)))
        left_slope = (psi[k - 1] - psi[k - 2]) / step
        right_slope = (psi[k + 2] - psi[k + 1]) / step
        self.assertAlmostEqual(right_slope - left_slope, 1.0, delta=1e-2)
        self.assertLess(abs(psi[k + 1] - psi[k - 1]), 1e-2)

    def test_indicator_forcing_solves_the_ode(self):
        c = 1.0
        step = 5e-4
        grid = np.arange(-20000, 20001) * step
        f = lambda t: np.where((t >= 0.0) & (t < 1.0), 1.0, 0.0)
        psi = impulsive_solve(f, [], c, grid)

        d1 = (psi[2:] - psi[:-2]) / (2.0 * step)
        d2 = (psi[2:] - 2.0 * psi[1:-1] + psi[:-2]) / step ** 2
        t = grid[1:-1]
        E = d2 - c * d1 - psi[1:-1] - f(t)
        away = (np.abs(t) > 3 * step) & (np.abs(t - 1.0) > 3 * step)
        self.assertLess(float(np.max(np.abs(E[away]))), 1e-6)
        self.assertLess(float(np.max(np.abs(np.diff(psi)))), 1e-3)
        self.assertLess(float(np.max(np.abs(np.diff(d1)))), 1e-2)

    def test_unordered_jumps(self):
        jumps = [JumpData(t_j=1.0, alpha_j=1.0), JumpData(t_j=0.0, alpha_j=1.0)]
        with self.assertRaises(DomainError):
            impulsive_solve(lambda t: np.zeros_like(t), jumps, 1.0, GRID)



if __name__ == "__main__":
    unittest.main()
