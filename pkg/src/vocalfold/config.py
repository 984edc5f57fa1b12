"""Pipeline configuration: one JSON document holding every module's settings."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .adles import OptimizerConfig
from .glottal import InverseFilterConfig
from .vfmodel import BoundaryConditions, ModelParams, PhysicalConstants


@dataclass(frozen=True)
class SegmentationConfig:
    sample_rate: float = 8000.0
    win_s: float = 0.05
    hop_s: float = 0.025
    energy_floor: float = 0.1
    zcr_ceiling: float = 0.3

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not self.win_s > self.hop_s > 0:
            raise ValueError("need win_s > hop_s > 0")
        if self.energy_floor < 0 or not 0 <= self.zcr_ceiling <= 1:
            raise ValueError("energy_floor must be >= 0 and zcr_ceiling in [0, 1]")


@dataclass(frozen=True)
class ClassifierConfig:
    l2: float = 0.01
    epochs: int = 2000
    lr: float = 0.5
    k: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.l2 < 0 or not self.lr > 0 or self.epochs < 1:
            raise ValueError("need l2 >= 0, lr > 0, epochs >= 1")
        if self.lr * self.l2 >= 2:
            raise ValueError("lr * l2 must be below 2")
        if self.k < 2:
            raise ValueError("k must be >= 2")


@dataclass(frozen=True)
class PipelineConfig:
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    inverse_filter: InverseFilterConfig = field(default_factory=InverseFilterConfig)
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    boundary: BoundaryConditions = field(default_factory=BoundaryConditions)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)

    def __post_init__(self):
        n = int(round(self.segmentation.win_s * self.segmentation.sample_rate))
        self.inverse_filter.check_length(n)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(doc) - set(known)
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        for name, sub in doc.items():
            section_type = type(getattr(cls(), name))
            sub = dict(sub)
            if section_type is OptimizerConfig and "init" in sub:
                init = sub["init"]
                sub["init"] = ModelParams(**init) if isinstance(init, dict) else ModelParams.from_array(init)
            allowed = {f.name for f in fields(section_type)}
            bad = set(sub) - allowed
            if bad:
                raise ValueError(f"unknown keys in [{name}]: {sorted(bad)}")
            kw[name] = section_type(**sub)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        if path is None:
            return cls()
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
