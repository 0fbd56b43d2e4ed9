"""Experiment configuration: a strict, versioned JSON document."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .arithmetic import IrrationalSpec
from .circle_maps import CircleMap, Conjugacy
from .errors import ConfigError, LabError
from .potentials import Potential

SCHEMA = "cslab-experiment/1"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class MapConfig(_Strict):
    kind: Literal["rotation", "sinusoidal", "piecewise-linear"] = "rotation"
    eps: float = 0.0
    breakpoints: tuple[float, ...] = ()
    slopes: tuple[float, ...] = ()

    def build(self, alpha: IrrationalSpec) -> CircleMap:
        if self.kind == "rotation":
            return CircleMap.rotation(alpha)
        if self.kind == "sinusoidal":
            return CircleMap.sinusoidal(self.eps, alpha)
        return CircleMap(alpha, Conjugacy.piecewise_linear(self.breakpoints, self.slopes))


class Tolerances(_Strict):
    slack: float = 1e-8            # geometric bounds on eigenvalue curves
    gap_slack: float = 1e-10       # nu-mass bounds of the gap statistics
    oracle_rtol: float = 1e-9      # scaled determinants and Green entries vs dense
    poisson: float = 1e-7
    deviation_slack: float = 1e-6
    fit_quality: float = 0.95
    thouless: float = 0.05


class EigfuncConfig(_Strict):
    pairs: int = 50
    floor: float = 1e-12
    k: int = 8                     # scale of the regularity checks (q_k = 34 for the golden mean)


class ExperimentConfig(_Strict):
    schema_: Literal["cslab-experiment/1"] = Field(SCHEMA, alias="schema")
    seed: int = 0
    alpha: dict = Field(default_factory=lambda: IrrationalSpec.golden().to_json())
    maps: tuple[MapConfig, ...] = (MapConfig(), MapConfig(kind="sinusoidal", eps=0.3))
    potential: dict = Field(default_factory=lambda: Potential.sawtooth().to_json())
    lam: float = Field(10.0, alias="lambda")
    scales: tuple[int, ...] = (8, 9, 10)
    sizes: tuple[int, ...] = (4096,)
    energies: tuple[float, ...] = (0.5, 2.5, 5.0, 7.5, 9.5)
    samples: int = 32
    phase_grid: int = 1024
    depth: int = 20
    eigfunc: EigfuncConfig = EigfuncConfig()
    tolerances: Tolerances = Tolerances()
    output_dir: str | None = None

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, v):
        try:
            IrrationalSpec.from_json(v)
        except LabError as e:
            raise ValueError(str(e)) from None
        return v

    @field_validator("potential")
    @classmethod
    def _potential(cls, v):
        try:
            Potential.from_json(v)
        except LabError as e:
            raise ValueError(str(e)) from None
        return v

    @field_validator("maps")
    @classmethod
    def _maps(cls, v):
        if not v:
            raise ValueError("at least one map is required")
        return v

    @field_validator("samples", "phase_grid", "depth")
    @classmethod
    def _positive(cls, v):
        if v < 1:
            raise ValueError("must be positive")
        return v

    # domain objects

    def alpha_spec(self) -> IrrationalSpec:
        return IrrationalSpec.from_json(self.alpha)

    def circle_maps(self) -> list[CircleMap]:
        a = self.alpha_spec()
        return [m.build(a) for m in self.maps]

    def potential_fn(self) -> Potential:
        return Potential.from_json(self.potential)

    def to_json(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def parse_config(data: dict) -> ExperimentConfig:
    if "schema" not in data:
        raise ConfigError("config lacks a schema field")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{where}: {first['msg']}") from None


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(data)
