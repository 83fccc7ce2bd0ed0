"""
Explicit simulation of the time-dependent problems

    continuum:  u_t = u_xx - u + g(u(t - h, x))
    lattice:    u_n' = D (u_{n+1} + u_{n-1} - 2 u_n) - u_n + sum_k beta(k - n) g(u_k(t - h))

with kappa entering from the left, so fronts move to the right. The lattice is indexed mirrored
with respect to the profile equation (n -> -n), hence beta(k - n).
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import linregress

from ..engine.constants import Init, Model
from ..engine.errors import ConfigError, DomainError
from .charspec import speed_bounds
from .lattice import KernelSpec, delta_kernel
from .nonlinearity import NonlinearitySpec
from .profile import Profile, eval_profile


logger = logging.getLogger(__name__)

MAX_DELAY_SLICES = 10_000
CONTINUUM_CFL = 0.4
# default step for speed runs; forward Euler lowers the pulled speed by O(dt)
DEFAULT_DT_FACTOR = 0.1
DEFAULT_WIDTH = 400.0
DEFAULT_MARGIN = 50.0



class SimConfig(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: Model = Model.CONTINUUM
    spec: NonlinearitySpec
    h: float = Field(default=0.0, ge=0)
    D: float = Field(default=1.0, ge=0)
    kernel: KernelSpec = Field(default_factory=delta_kernel)
    dx: float = Field(default=0.2, gt=0)
    dt: float = Field(gt=0)
    domain: Tuple[float, float] = (0.0, DEFAULT_WIDTH)
    T_final: float = Field(gt=0)
    init: Init = Init.STEP
    init_position: float = 60.0
    bump_width: float = Field(default=5.0, gt=0)
    bump_height: float = Field(default=0.5, gt=0)
    profile: Optional[Profile] = None
    # clamped boundary values; kappa on the left and 0 on the right unless given
    left_value: Optional[float] = None
    right_value: Optional[float] = None
    snapshot_every: int = Field(default=100, ge=1)

    @property
    def delay_steps(self) -> int:
        return int(round(self.h / self.dt))

    @property
    def spacing(self) -> float:
        return 1.0 if self.model == Model.LATTICE else self.dx


class Trajectory(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    times: np.ndarray
    states: np.ndarray
    config: SimConfig


class FrontSpeedEstimate(BaseModel):
    level: float
    samples: List[Tuple[float, float]]
    speed: float
    stderr: float
    window: Tuple[float, float]
    empirical: bool = True



def check_sim_config(config: SimConfig) -> None:
    """stability and delay-grid conditions; raises ConfigError before anything is stepped."""
    dt, h = config.dt, config.h
    if config.domain[1] <= config.domain[0]:
        raise ConfigError(f"empty simulation domain {config.domain}")
    n = config.delay_steps
    if abs(n * dt - h) > 1e-9 * max(h, dt):
        raise ConfigError(f"dt = {dt} must divide h = {h} exactly")
    if n > MAX_DELAY_SLICES:
        raise ConfigError(f"h / dt = {n} exceeds the ring buffer bound {MAX_DELAY_SLICES}")

    if config.model == Model.CONTINUUM:
        if dt > CONTINUUM_CFL * config.dx ** 2 * (1 + 1e-12):
            raise ConfigError(f"explicit diffusion needs dt <= {CONTINUUM_CFL} dx^2 = {CONTINUUM_CFL * config.dx ** 2:.6g}, got dt = {dt}")
    else:
        if dt * (2.0 * config.D + 1.0) > 1.0 + 1e-12:
            raise ConfigError(f"lattice stepping needs dt (2D + 1) <= 1, got {dt * (2.0 * config.D + 1.0):.6g}")
        lo, hi = config.domain
        if lo != int(lo) or hi != int(hi):
            raise ConfigError(f"lattice domain must have integer ends, got {config.domain}")

    if config.init == Init.PROFILE_IMPORT and config.profile is None:
        raise ConfigError("ProfileImport needs a profile")


def _nodes(config: SimConfig) -> np.ndarray:
    lo, hi = config.domain
    if config.model == Model.LATTICE:
        return np.arange(int(lo), int(hi) + 1, dtype=float)
    n = int(round((hi - lo) / config.dx)) + 1
    return np.linspace(lo, hi, n)


def _initial(config: SimConfig, x: np.ndarray, theta: float) -> np.ndarray:
    kappa = config.spec.kappa
    if config.init == Init.STEP:
        return np.where(x < config.init_position, kappa, 0.0)
    if config.init == Init.SEED_BUMP:
        return config.bump_height * kappa * np.exp(-((x - config.init_position) / config.bump_width) ** 2)
    phi = config.profile
    return eval_profile(phi, phi.c * theta - x + config.init_position)


def _boundary_values(config: SimConfig) -> Tuple[float, float]:
    left = config.spec.kappa if config.left_value is None else config.left_value
    right = 0.0 if config.right_value is None else config.right_value
    return left, right


def _nonlocal(gu: np.ndarray, offsets: np.ndarray, weights: np.ndarray, left: float, right: float) -> np.ndarray:
    """out[n] = sum_j beta(j) gu[n + j], padded with the boundary levels."""
    K = int(np.max(np.abs(offsets))) if offsets.size else 0
    if K == 0:
        return weights.sum() * gu
    stencil = np.zeros(2 * K + 1)
    stencil[offsets + K] = weights
    padded = np.concatenate([np.full(K, left), gu, np.full(K, right)])
    return np.correlate(padded, stencil, mode="valid")


def simulate(config: SimConfig) -> Trajectory:
    """
    Forward Euler in time; the delayed state is read from a ring buffer of h / dt slices.
    States are clamped to [0, kappa] after every step.
    """
    check_sim_config(config)
    spec = config.spec
    kappa = spec.kappa
    dt = config.dt
    x = _nodes(config)
    left, right = _boundary_values(config)
    n_delay = config.delay_steps
    n_steps = int(np.ceil(config.T_final / dt - 1e-9))

    u = _initial(config, x, 0.0)
    u[0], u[-1] = left, right
    ring = None
    if n_delay > 0:
        ring = np.empty((n_delay, x.size))
        for k in range(n_delay):
            ring[k] = _initial(config, x, -config.h + k * dt)
            ring[k, 0], ring[k, -1] = left, right
    pointer = 0

    lattice = config.model == Model.LATTICE
    if lattice:
        offsets, weights = config.kernel.support()
        g_left, g_right = float(spec.g(left)), float(spec.g(right))
        coupling = config.D
    else:
        coupling = 1.0 / config.dx ** 2

    times, states = [0.0], [u.copy()]
    logger.debug(f"--------------------------- started simulation ({config.model.value}, {x.size} nodes, {n_steps} steps)")

    for step in range(1, n_steps + 1):
        delayed = ring[pointer] if ring is not None else u
        gu = spec.g(delayed)
        if lattice:
            gu = _nonlocal(gu, offsets, weights, g_left, g_right)

        du = np.zeros_like(u)
        du[1:-1] = coupling * (u[2:] - 2.0 * u[1:-1] + u[:-2]) - u[1:-1] + gu[1:-1]
        new = np.clip(u + dt * du, 0.0, kappa)
        new[0], new[-1] = left, right

        if ring is not None:
            ring[pointer] = u
            pointer = (pointer + 1) % n_delay
        u = new

        if step % config.snapshot_every == 0 or step == n_steps:
            times.append(step * dt)
            states.append(u.copy())

    logger.debug(f"--------------------------- finished simulation at t = {n_steps * dt:.6g} with {len(times)} snapshots")
    return Trajectory(x=x, times=np.array(times), states=np.array(states), config=config)


def _crossing(x: np.ndarray, u: np.ndarray, level: float) -> Optional[float]:
    """leftmost x where u drops below level, by linear inverse interpolation."""
    below = np.flatnonzero(u < level)
    if below.size == 0 or below[0] == 0:
        return None
    k = int(below[0])
    return float(x[k - 1] + (u[k - 1] - level) / (u[k - 1] - u[k]) * (x[k] - x[k - 1]))


def measure_speed(
    trajectory: Trajectory, level: Optional[float] = None, burn_in: float = 0.2,
    boundary_margin: float = DEFAULT_MARGIN, min_samples: int = 50
) -> FrontSpeedEstimate:
    """least-squares slope of the level-crossing position over the snapshots after burn-in."""
    kappa = trajectory.config.spec.kappa
    level = 0.5 * kappa if level is None else level
    times = trajectory.times
    t_start = times[0] + burn_in * (times[-1] - times[0])

    crossings = [_crossing(trajectory.x, state, level) for state in trajectory.states]
    if all(pos is None for pos in crossings):
        raise DomainError(f"level {level:.6g} never crossed in the trajectory")
    samples = [(float(t), pos) for t, pos in zip(times, crossings) if pos is not None and t >= t_start]
    if len(samples) < min_samples:
        raise DomainError(f"fit window holds {len(samples)} samples, need >= {min_samples}; lengthen T_final or snapshot more often")

    t, pos = np.array(samples).T
    lo, hi = trajectory.x[0] + boundary_margin, trajectory.x[-1] - boundary_margin
    if pos.min() < lo or pos.max() > hi:
        raise DomainError(
            f"front left [{lo:.6g}, {hi:.6g}] during the fit window (positions {pos.min():.6g} to {pos.max():.6g}); widen the domain"
        )

    fit = linregress(t, pos)
    return FrontSpeedEstimate(
        level=level, samples=samples, speed=float(fit.slope), stderr=float(fit.stderr),
        window=(float(t[0]), float(t[-1]))
    )


def default_sim_config(spec: NonlinearitySpec, h: float, model: Model = Model.CONTINUUM, D: float = 1.0, **overrides) -> SimConfig:
    """
    Width-400 speed run from step data: the front starts 60 units in and T_final is sized from
    c^*(g'_+) so it stops 60 units before the right end; dt divides h.
    """
    c_guess = speed_bounds(spec, h).c_star_upper
    if model == Model.LATTICE:
        dt_max = 0.5 / (2.0 * D + 1.0)
        dx = 1.0
    else:
        dx = 0.2
        dt_max = DEFAULT_DT_FACTOR * dx ** 2
    dt = h / np.ceil(h / dt_max) if h > 0 else dt_max
    T_final = (DEFAULT_WIDTH - 120.0) / max(c_guess, 1e-3)
    n_steps = int(np.ceil(T_final / dt))

    options = dict(
        model=model, spec=spec, h=h, D=D, dx=dx, dt=float(dt), domain=(0.0, DEFAULT_WIDTH), T_final=T_final,
        init=Init.STEP, init_position=60.0, snapshot_every=max(1, n_steps // 200)
    )
    options.update(overrides)
    return SimConfig(**options)
