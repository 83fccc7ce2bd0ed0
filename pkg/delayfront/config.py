"""
Run configuration: one JSON file parsed into RunConfig. Validation runs before any computation
and any failure surfaces as ConfigError.
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .engine.constants import Init, Model
from .engine.errors import ConfigError, DelayFrontError
from .fronts.dns import SimConfig, check_sim_config
from .fronts.lattice import KernelSpec, LatticeModel, delta_kernel
from .fronts.nonlinearity import NonlinearitySpec
from .fronts.profile import read_profile
from .fronts.solver import SolverSettings



def _existing(path: Optional[str]) -> Optional[str]:
    if path is not None and not os.path.exists(path):
        raise ValueError(f"file {path} does not exist")
    return path


class ProblemConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    spec: NonlinearitySpec
    h: float = Field(default=0.0, ge=0)
    relaxed: bool = False


class NumericsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid_size: int = Field(default=4001, ge=64)
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=500, ge=1)
    residual_tol: float = Field(default=1e-6, gt=0)
    scan_tol: float = Field(default=1e-3, ge=1e-4)
    sigma_minus_one: float = Field(default=1e-2, gt=0)
    b: float = Field(default=1e-2, gt=0, le=1)
    eps: float = Field(default=1e-3, gt=0)
    max_retries: int = Field(default=20, ge=1)
    c: Optional[float] = Field(default=None, gt=0)
    dns: bool = True

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(
            grid_size=self.grid_size, tol=self.tol, max_iter=self.max_iter, residual_tol=self.residual_tol,
            sigma_minus_one=self.sigma_minus_one, b=self.b, eps=self.eps, max_retries=self.max_retries,
        )


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    run_dir: Optional[str] = None
    snapshot_every: int = Field(default=100, ge=1)


class SimulationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: Model = Model.CONTINUUM
    D: float = Field(default=1.0, ge=0)
    kernel: KernelSpec = Field(default_factory=delta_kernel)
    dx: float = Field(default=0.2, gt=0)
    dt: float = Field(gt=0)
    domain: Tuple[float, float] = (0.0, 400.0)
    T_final: float = Field(gt=0)
    init: Init = Init.STEP
    init_position: float = 60.0
    bump_width: float = Field(default=5.0, gt=0)
    bump_height: float = Field(default=0.5, gt=0)
    profile_path: Optional[str] = None
    left_value: Optional[float] = None
    right_value: Optional[float] = None

    @field_validator("profile_path")
    @classmethod
    def _profile_exists(cls, value: Optional[str]) -> Optional[str]:
        return _existing(value)

    def to_sim_config(self, problem: ProblemConfig, snapshot_every: int) -> SimConfig:
        profile = read_profile(self.profile_path) if self.profile_path is not None else None
        data = self.model_dump(exclude={"profile_path"})
        return SimConfig(spec=problem.spec, h=problem.h, profile=profile, snapshot_every=snapshot_every, **data)


class LatticeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    D: float = Field(default=1.0, ge=0)
    kernel: KernelSpec = Field(default_factory=delta_kernel)
    c: float = 1.0

    def to_model(self, problem: ProblemConfig) -> LatticeModel:
        return LatticeModel(D=self.D, kernel=self.kernel, h=problem.h, spec=problem.spec, c=self.c)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemConfig
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    outputs: OutputConfig = Field(default_factory=OutputConfig)
    simulation: Optional[SimulationConfig] = None
    lattice: Optional[LatticeConfig] = None

    def sim_config(self) -> SimConfig:
        if self.simulation is None:
            raise ConfigError("the config has no 'simulation' section")
        config = self.simulation.to_sim_config(self.problem, self.outputs.snapshot_every)
        check_sim_config(config)
        return config

    def lattice_model(self) -> LatticeModel:
        if self.lattice is None:
            raise ConfigError("the config has no 'lattice' section")
        return self.lattice.to_model(self.problem)



def _describe(error: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in error.errors())


def parse_config(data: Dict[str, Any]) -> RunConfig:
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config: {_describe(e)}") from e
    except DelayFrontError as e:
        raise ConfigError(f"invalid config: {e}") from e
    if config.simulation is not None:
        config.sim_config()
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    return parse_config(data)
