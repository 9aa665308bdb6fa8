"""
Run configuration for the laboratory.

A run file (YAML or JSON) is merged over DEFAULT_CONFIG key by key, then validated.
Example:
  P: 10
  M_list: [100, 200, 400]
  kernels:
    Q: {atoms: []}
    K: {atoms: [[0.0, 1.0]]}
  initial: {preset: modulated, amplitude: 1.0, modulation: 0.2}
  T_star: 1.0
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from shlab.errors import ConfigError, KernelError
from shlab.kernel import KernelMeasure

logger = logging.getLogger(__name__)

DEFAULT_CONFIG: Dict[str, Any] = {
    "P": 10,
    "M_list": [100, 200, 400],
    "kernels": {
        "Q": {"atoms": [], "smooth": None},
        "K": {"atoms": [[0.0, 1.0]], "smooth": None},   # K = delta_0
    },
    "T_star": 1.0,
    "initial": {
        "preset": "modulated",
        "amplitude": 1.0,
        "width": 0.5,
        "modulation": 0.2,
        "band": None,       # None -> largest band keeping A, A^2, |A|^2 E_0-transparent
    },
    "d": 0.0,
    "seed": 0,
    "dt": 0.1,
    "points_per_period": 8,
    "N_override": None,
    "slow_points": 256,
    "snapshots": 100,
    "gl_substeps": 20,
    "threads": 1,
}


# ======== Schema ========

class SmoothSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: Literal["gaussian", "laplace", "uniform"]
    mass: float = 1.0
    width: Optional[float] = None
    rate: Optional[float] = None
    half_width: Optional[float] = None


class KernelSpec(BaseModel):
    """Half-line atoms [x >= 0, weight] (mirrored on build) plus an optional smooth part."""

    model_config = ConfigDict(extra="forbid")

    atoms: List[Tuple[float, float]] = Field(default_factory=list)
    smooth: Optional[SmoothSpec] = None

    def build(self) -> KernelMeasure:
        data = self.model_dump()
        if data["smooth"] is not None:
            data["smooth"] = {k: v for k, v in data["smooth"].items() if v is not None}
        return KernelMeasure.from_config(data)

    @model_validator(mode="after")
    def _buildable(self) -> "KernelSpec":
        try:
            self.build()
        except KernelError as e:
            raise ValueError(str(e)) from e
        return self


class KernelsSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    Q: KernelSpec = Field(default_factory=KernelSpec)
    K: KernelSpec = Field(default_factory=KernelSpec)


class InitialSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: Literal["zero", "roll", "sech", "modulated"] = "modulated"
    amplitude: float = 1.0
    width: float = Field(0.5, gt=0)
    modulation: float = 0.2
    band: Optional[int] = Field(None, ge=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    P: int = Field(10, gt=0)
    M_list: List[int] = Field(default_factory=lambda: [100, 200, 400], min_length=1)
    kernels: KernelsSpec = Field(default_factory=KernelsSpec)
    T_star: float = Field(1.0, gt=0)
    initial: InitialSpec = Field(default_factory=InitialSpec)
    d: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0)
    dt: float = Field(0.1, gt=0)
    points_per_period: int = Field(8, ge=4)
    N_override: Optional[int] = None
    slow_points: int = Field(256, ge=8)
    snapshots: int = Field(100, ge=2)
    gl_substeps: int = Field(20, ge=1)
    threads: int = Field(1, ge=1)

    @field_validator("M_list")
    @classmethod
    def _increasing(cls, v: List[int]) -> List[int]:
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"M_list must be strictly increasing, got {v}")
        return v

    @field_validator("slow_points", "N_override")
    @classmethod
    def _power_of_two(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and (v <= 0 or v & (v - 1)):
            raise ValueError(f"{v} is not a power of two")
        return v

    @model_validator(mode="after")
    def _eps_below_one(self) -> "RunConfig":
        bad = [M for M in self.M_list if M <= self.P]
        if bad:
            raise ValueError(f"eps = P/M must be < 1; M={bad} not above P={self.P}")
        return self

    # --- derived ---
    @property
    def eps_list(self) -> List[float]:
        return [self.P / M for M in self.M_list]

    @property
    def eps_max(self) -> float:
        return max(self.eps_list)

    def kernel_Q(self) -> KernelMeasure:
        return self.kernels.Q.build()

    def kernel_K(self) -> KernelMeasure:
        return self.kernels.K.build()

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


# ======== Loading ========

def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Values from `update` win; nested dicts are merged key by key."""
    out = copy.deepcopy(base)
    for key, value in (update or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: Optional[str | Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    data: Dict[str, Any] = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        path = Path(path)
        if not path.exists():
            logger.warning("Файл конфигурации %s не найден, используются значения по умолчанию", path)
        else:
            try:
                loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
            except (OSError, yaml.YAMLError) as e:
                raise ConfigError(f"cannot read {path}: {e}") from e
            if not isinstance(loaded, dict):
                raise ConfigError(f"{path}: top level must be a mapping, got {type(loaded).__name__}")
            data = deep_merge(data, loaded)
            # a kernel given in the file replaces the default kernel entirely
            for name, spec in (loaded.get("kernels") or {}).items():
                data["kernels"][name] = copy.deepcopy(spec)
    if overrides:
        data = deep_merge(data, {k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
