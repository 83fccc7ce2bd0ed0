"""
Characteristic equation of the continuum profile equation,

    chi(z, c) = z^2 - c z - 1 + p exp(-z c h),

its real roots lambda2 <= lambda1, the double-root speeds c_# (p = g'(0)) and c^* (p = g'_+),
and the roots xi1 < 0 < xi2 of the kernel polynomial z^2 - c z - 1.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import bisect

from ..engine.errors import NumericError
from .nonlinearity import NonlinearitySpec


logger = logging.getLogger(__name__)

ROOT_RTOL = 1e-13
ROOT_XTOL = 1e-15
SPEED_XTOL = 1e-12
DOUBLE_ROOT_TOL = 1e-12
MAXIT = 400
MAX_EXPANSIONS = 60



class CharParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float = Field(gt=0)
    h: float = Field(ge=0)
    p: float = Field(gt=1)


class CharRoots(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda2: float
    lambda1: float
    degenerate: bool


class SpeedBounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    c_sharp: float
    c_star_upper: float
    lambda_sharp: float
    lambda_star_upper: float


class KernelRoots(BaseModel):
    model_config = ConfigDict(frozen=True)

    xi1: float
    xi2: float



def _chi(z, c: float, h: float, p: float):
    return z * z - c * z - 1.0 + p * np.exp(-z * c * h)


def _dchi(z, c: float, h: float, p: float):
    return 2.0 * z - c - p * c * h * np.exp(-z * c * h)


def _d2chi(z, c: float, h: float, p: float):
    return 2.0 + p * (c * h) ** 2 * np.exp(-z * c * h)


def chi(z: float, params: CharParams) -> float:
    return float(_chi(z, params.c, params.h, params.p))


def chi_dz(z: float, params: CharParams) -> float:
    return float(_dchi(z, params.c, params.h, params.p))


def _expand_upper(f, start: float) -> float:
    """smallest start * 2^k with f > 0"""
    hi = max(start, 1e-3)
    for _ in range(MAX_EXPANSIONS):
        if f(hi) > 0:
            return hi
        hi *= 2.0
    raise NumericError(f"bracket expansion failed: f stayed <= 0 up to {hi:.6g}")


def _minimizer(c: float, h: float, p: float) -> Tuple[float, float]:
    """(z_min, chi(z_min)) for the convex function z -> chi(z, c) on [0, inf)."""
    if _dchi(0.0, c, h, p) >= 0:
        return 0.0, float(_chi(0.0, c, h, p))
    hi = _expand_upper(lambda z: _dchi(z, c, h, p), 0.5 * c + 1.0)
    z_min = bisect(_dchi, 0.0, hi, args=(c, h, p), xtol=ROOT_XTOL, rtol=ROOT_RTOL, maxiter=MAXIT)
    return z_min, float(_chi(z_min, c, h, p))


def chi_minimizer(params: CharParams) -> Tuple[float, float]:
    return _minimizer(params.c, params.h, params.p)


def real_roots(params: CharParams) -> Optional[CharRoots]:
    """
    Real positive roots of chi(., c). Returns None when chi stays positive (c < c_#).
    """
    c, h, p = params.c, params.h, params.p
    z_min, m = _minimizer(c, h, p)
    scale = max(1.0, p)

    if m > DOUBLE_ROOT_TOL * scale:
        return None
    if abs(m) <= DOUBLE_ROOT_TOL * scale:
        return CharRoots(lambda2=z_min, lambda1=z_min, degenerate=True)

    lambda2 = bisect(_chi, 0.0, z_min, args=(c, h, p), xtol=ROOT_XTOL, rtol=ROOT_RTOL, maxiter=MAXIT)
    hi = _expand_upper(lambda z: _chi(z, c, h, p), 2.0 * z_min + 1.0)
    lambda1 = bisect(_chi, z_min, hi, args=(c, h, p), xtol=ROOT_XTOL, rtol=ROOT_RTOL, maxiter=MAXIT)
    return CharRoots(lambda2=lambda2, lambda1=lambda1, degenerate=False)


def lambda2(c: float, h: float, p: float) -> Optional[float]:
    roots = real_roots(CharParams(c=c, h=h, p=p))
    return None if roots is None else roots.lambda2


def lambda1(c: float, h: float, p: float) -> Optional[float]:
    roots = real_roots(CharParams(c=c, h=h, p=p))
    return None if roots is None else roots.lambda1


def double_root_speed(h: float, p: float) -> Tuple[float, float]:
    """
    The speed c where min_z chi(z, c) = 0, and the double root there.
    The minimum is strictly decreasing in c, so plain bisection on c is safe.
    """
    if h < 0 or p <= 1:
        raise NumericError(f"double_root_speed needs h >= 0 and p > 1, got h = {h}, p = {p}")

    def min_value(c: float) -> float:
        return _minimizer(c, h, p)[1]

    c_hi = 2.0 * np.sqrt(p - 1.0) + 1.0
    for _ in range(MAX_EXPANSIONS):
        if min_value(c_hi) < 0:
            break
        c_hi *= 2.0
    else:
        raise NumericError(f"no negative minimum of chi found up to c = {c_hi:.6g} (h = {h}, p = {p})")

    c_sharp = bisect(min_value, 0.0, c_hi, xtol=SPEED_XTOL, rtol=ROOT_RTOL, maxiter=MAXIT)
    lambda_sharp, _ = _minimizer(c_sharp, h, p)
    logger.debug(f"double root speed h={h}, p={p}: c = {c_sharp:.12f}, lambda = {lambda_sharp:.12f}")
    return float(c_sharp), float(lambda_sharp)


def xi_roots(c: float) -> KernelRoots:
    if c <= 0:
        raise NumericError(f"xi_roots needs c > 0, got {c}")
    xi2 = 0.5 * (c + np.sqrt(c * c + 4.0))
    return KernelRoots(xi1=-1.0 / xi2, xi2=xi2)


def speed_bounds(spec: NonlinearitySpec, h: float) -> SpeedBounds:
    c_sharp, lambda_sharp = double_root_speed(h, spec.gp0)
    if spec.gp_plus <= spec.gp0:
        return SpeedBounds(c_sharp=c_sharp, c_star_upper=c_sharp, lambda_sharp=lambda_sharp, lambda_star_upper=lambda_sharp)
    c_star_upper, lambda_star_upper = double_root_speed(h, spec.gp_plus)
    return SpeedBounds(
        c_sharp=c_sharp, c_star_upper=c_star_upper,
        lambda_sharp=lambda_sharp, lambda_star_upper=lambda_star_upper
    )


def kappa_rate(c: float, h: float, gp_kappa: float) -> float:
    """
    Rate mu > 0 of the approach to kappa, kappa - phi ~ exp(-mu t): the positive root of
    z^2 + c z - 1 + g'(kappa) exp(z c h) = 0.
    """
    q = max(gp_kappa, 0.0)
    if q >= 1.0:
        raise NumericError(f"kappa_rate needs g'(kappa) < 1, got {gp_kappa}")

    def f(z):
        return z * z + c * z - 1.0 + q * np.exp(z * c * h)

    hi = _expand_upper(f, 1.0)
    return float(bisect(f, 0.0, hi, xtol=ROOT_XTOL, rtol=ROOT_RTOL, maxiter=MAXIT))
