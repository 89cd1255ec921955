"""Single JSON configuration document for the whole pipeline.

Sections: ``plant``, ``weights``, ``synthesis``, ``pr``, ``simulation``. Every
key is optional; missing keys take the inline defaults below.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .baseline_pr import PRParams
from .plant import PlantParams
from .simulator import PllConfig, SimOptions
from .uncertainty import DEFAULT_CHANNEL_SCALING
from .weights import WeightConstants


class ConfigError(ValueError):
    pass


def _strict(cls, doc: dict, section: str) -> dict:
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return doc


@dataclass(frozen=True)
class SynthesisConfig:
    scaling: tuple = DEFAULT_CHANNEL_SCALING
    backoff: float = 1.05
    gamma_hint: float = 10.0
    rel_tol: float = 1e-3
    max_cl_degradation: float = 0.05  # allowed closed-loop norm growth from reduction
    grid_density: int = 3
    n_random: int = 8
    seed: int = 0

    def __post_init__(self):
        if len(self.scaling) != 2 or min(self.scaling) <= 0:
            raise ConfigError("scaling must be two positive numbers")
        if self.backoff < 1.0:
            raise ConfigError("backoff must be >= 1")
        if self.grid_density < 2:
            raise ConfigError("grid_density must be >= 2")
        object.__setattr__(self, "scaling", tuple(float(v) for v in self.scaling))


@dataclass(frozen=True)
class PRConfig:
    """``params`` set: use those gains; otherwise tune them with ``design_pr``."""

    params: Optional[PRParams] = None
    omega_c: float = 2 * np.pi * 2.0
    fallback_gm_db: float = 6.0

    def to_dict(self) -> dict:
        return {"params": None if self.params is None else self.params.to_dict(),
                "omega_c": self.omega_c, "fallback_gm_db": self.fallback_gm_db}


@dataclass(frozen=True)
class SimulationConfig:
    dt_plant: float = 1e-6
    delay: bool = True
    k_sogi: float = PllConfig.k_sogi
    pll_kp: float = PllConfig.kp
    pll_ki: float = PllConfig.ki
    settle_cycles: float = 3.0

    def options(self, feedforward_pcc: bool = False) -> SimOptions:
        return SimOptions(dt_plant=self.dt_plant, delay=self.delay, feedforward_pcc=feedforward_pcc,
                          pll=PllConfig(self.k_sogi, self.pll_kp, self.pll_ki))


@dataclass(frozen=True)
class Config:
    plant: PlantParams = field(default_factory=PlantParams)
    weights: WeightConstants = field(default_factory=WeightConstants)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    pr: PRConfig = field(default_factory=PRConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    @classmethod
    def from_dict(cls, doc: dict) -> "Config":
        unknown = set(doc) - {"plant", "weights", "synthesis", "pr", "simulation"}
        if unknown:
            raise ConfigError(f"unknown sections: {sorted(unknown)}")
        try:
            plant = PlantParams.from_dict(doc.get("plant", {}))
            weights = WeightConstants.from_dict(doc.get("weights", {}))
            syn = dict(_strict(SynthesisConfig, doc.get("synthesis", {}), "synthesis"))
            pr = dict(_strict(PRConfig, doc.get("pr", {}), "pr"))
            if pr.get("params") is not None:
                pr["params"] = PRParams.from_dict(pr["params"])
            sim = _strict(SimulationConfig, doc.get("simulation", {}), "simulation")
            return cls(plant, weights, SynthesisConfig(**syn), PRConfig(**pr), SimulationConfig(**sim))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        syn = asdict(self.synthesis)
        syn["scaling"] = list(syn["scaling"])
        return {
            "plant": self.plant.to_dict(),
            "weights": self.weights.to_dict(),
            "synthesis": syn,
            "pr": self.pr.to_dict(),
            "simulation": asdict(self.simulation),
        }


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return Config.from_dict(doc)


def save_config(cfg: Config, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    return path
