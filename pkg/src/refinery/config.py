"""Run configuration: one JSON document validated strictly on load.

Unknown keys are rejected with their full path so a typo in an experiment
file fails loudly instead of silently running defaults.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .benchmark import DEFAULT_GROUP_SIZES, BenchmarkConfig
from .depth import BlobConfig
from .engine import EngineConfig
from .evaluate import EvalConfig
from .inference import InferenceConfig
from .kernels import KernelConfig
from .policy import SelectionThresholds
from .tracking import TrackerConfig
from .training import MiningConfig

__all__ = ["ConfigError", "AnnotatorConfig", "ServiceConfig", "RunConfig", "load_config"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotatorConfig:
    mode: str = "oracle"
    oracle_noise: float = 0.0
    timeout_oracle: float = 5.0
    timeout_human: float = 600.0

    def __post_init__(self):
        if self.mode not in ("oracle", "human"):
            raise ConfigError(f"annotator mode must be oracle or human: {self.mode!r}")


@dataclass(frozen=True)
class ServiceConfig:
    bind: str = "127.0.0.1:8750"


@dataclass(frozen=True)
class WorldSection:
    frame_w: int = 320
    frame_h: int = 240
    feature_dim: int = 64
    noise_sigma: float = 0.05
    jitter_sigma: float = 2.0
    proposals_per_frame: int = 60


@dataclass(frozen=True)
class BenchmarkSection:
    group_sizes: tuple[int, ...] = DEFAULT_GROUP_SIZES
    supervised_frames: int = 150
    refinement_frames: int = 200
    domain_shift_magnitude: float = 4.5


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    world: WorldSection = WorldSection()
    kernel: KernelConfig = KernelConfig()
    mining: MiningConfig = MiningConfig(n_batches=5, batch_size=2200)
    thresholds: SelectionThresholds = SelectionThresholds()
    tracker: TrackerConfig = TrackerConfig()
    inference: InferenceConfig = InferenceConfig()
    eval: EvalConfig = EvalConfig()
    blob: BlobConfig = BlobConfig()
    annotator: AnnotatorConfig = AnnotatorConfig()
    service: ServiceConfig = ServiceConfig()
    benchmark: BenchmarkSection = BenchmarkSection()

    def benchmark_config(self) -> BenchmarkConfig:
        return BenchmarkConfig(
            seed=self.seed,
            group_sizes=tuple(self.benchmark.group_sizes),
            supervised_frames=self.benchmark.supervised_frames,
            refinement_frames=self.benchmark.refinement_frames,
            domain_shift_magnitude=self.benchmark.domain_shift_magnitude,
            oracle_noise=self.annotator.oracle_noise,
            feature_dim=self.world.feature_dim,
            frame_w=self.world.frame_w,
            frame_h=self.world.frame_h,
            noise_sigma=self.world.noise_sigma,
            jitter_sigma=self.world.jitter_sigma,
            proposals_per_frame=self.world.proposals_per_frame,
            thresholds=self.thresholds,
            kernel=self.kernel,
            mining=self.mining,
        )

    def engine_config(self, class_names: tuple[str, ...] = ()) -> EngineConfig:
        return EngineConfig(
            thresholds=self.thresholds,
            tracker=self.tracker,
            inference=self.inference,
            kernel=self.kernel,
            mining=self.mining,
            blob=self.blob,
            eval=self.eval,
            frame_w=self.world.frame_w,
            frame_h=self.world.frame_h,
            class_names=class_names,
        )


_SECTION_TYPES = {
    "world": WorldSection,
    "kernel": KernelConfig,
    "mining": MiningConfig,
    "thresholds": SelectionThresholds,
    "tracker": TrackerConfig,
    "inference": InferenceConfig,
    "eval": EvalConfig,
    "blob": BlobConfig,
    "annotator": AnnotatorConfig,
    "service": ServiceConfig,
    "benchmark": BenchmarkSection,
}


def _build_section(name: str, cls, doc: dict):
    if not isinstance(doc, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    fixed = dict(doc)
    if "group_sizes" in fixed:
        fixed["group_sizes"] = tuple(fixed["group_sizes"])
    try:
        return cls(**fixed)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid section {name!r}: {err}") from err


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> RunConfig:
    """Load and validate a config file; overrides win over file values."""
    doc: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ConfigError("config root must be an object")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(
                f"config schema_version must be {SCHEMA_VERSION}, got {doc.get('schema_version')!r}"
            )
    doc = dict(doc)
    doc.pop("schema_version", None)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            section, leaf = key.split(".", 1)
            doc.setdefault(section, {})
            if not isinstance(doc[section], dict):
                raise ConfigError(f"cannot override non-object section {section!r}")
            doc[section][leaf] = value
        else:
            doc[key] = value

    unknown = set(doc) - set(_SECTION_TYPES) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {}
    if "seed" in doc:
        if not isinstance(doc["seed"], int):
            raise ConfigError("seed must be an integer")
        kwargs["seed"] = doc["seed"]
    for name, cls in _SECTION_TYPES.items():
        if name in doc:
            kwargs[name] = _build_section(name, cls, doc[name])
    return RunConfig(**kwargs)
