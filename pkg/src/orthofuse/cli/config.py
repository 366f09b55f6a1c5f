"""JSON run configuration.

Every nested block maps one-to-one onto a dataclass; unknown keys are
rejected so typos surface instead of silently falling back to defaults.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from ..fusion import SolverConfig
from ..nuisance import NuisanceLearnerSpec
from ..pipeline import PipelineConfig, parse_method
from ..sim.dgp import DgpConfig
from ..weights import FusionHyperparams

__all__ = ["ConfigError", "DataSource", "RunConfig", "config_hash", "dump_config", "load_config"]

MODES = ("simulate", "fit", "infer-report")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSource:
    """CSV location and column mapping; ``covariate_cols=()`` means every other column."""

    path: str = ""
    task_col: str = "task"
    outcome_cols: tuple = ("y",)
    treatment_col: str = "t"
    covariate_cols: tuple = ()
    min_rows: int = 20

    def __post_init__(self):
        object.__setattr__(self, "outcome_cols", tuple(self.outcome_cols))
        object.__setattr__(self, "covariate_cols", tuple(self.covariate_cols))
        if not 1 <= len(self.outcome_cols) <= 2:
            raise ConfigError("outcome_cols takes one column, or two (pre, post) for DID")
        if self.min_rows < 1:
            raise ConfigError("min_rows must be positive")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "simulate"
    model: str = "plm"
    dgp: DgpConfig = field(default_factory=DgpConfig)
    data: DataSource = field(default_factory=DataSource)
    learner: NuisanceLearnerSpec = field(default_factory=NuisanceLearnerSpec)
    fusion: FusionHyperparams = field(default_factory=FusionHyperparams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    methods: tuple = ("adaptive", "personalized")
    crossfit_R: int = 2
    cross_fit: bool = False
    did_normalizer: str = "loss"
    level: float = 0.95
    reps: int = 100
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        object.__setattr__(self, "methods", tuple(self.methods))
        for m in self.methods:
            parse_method(m)
        if self.mode == "simulate" and self.dgp.model != self.model:
            raise ConfigError(f"dgp.model {self.dgp.model!r} differs from model {self.model!r}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.model == "did" and self.mode == "fit" and len(self.data.outcome_cols) != 2:
            raise ConfigError("DID needs two outcome columns (pre, post)")
        self.pipeline()  # validates the remaining fields

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            model=self.model,
            learner=self.learner,
            fusion=self.fusion,
            solver=self.solver,
            crossfit_R=self.crossfit_R,
            cross_fit=self.cross_fit,
            level=self.level,
            did_normalizer=self.did_normalizer,
        )

    def to_dict(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        return _build(cls, raw, "config")


_NESTED = {
    "dgp": DgpConfig,
    "data": DataSource,
    "learner": NuisanceLearnerSpec,
    "fusion": FusionHyperparams,
    "solver": SolverConfig,
}


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


def _build(cls, raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in raw.items():
        sub = _NESTED.get(name) if cls is RunConfig else None
        if sub is not None:
            value = _build(sub, value, f"{where}.{name}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    if cls is RunConfig and "dgp" not in raw and "model" in raw:
        kwargs["dgp"] = DgpConfig(model=raw["model"])
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(raw)


def config_hash(cfg: RunConfig) -> str:
    """Digest of every setting that can change results (the output location is excluded)."""
    raw = cfg.to_dict()
    raw.pop("output_dir")
    text = json.dumps(raw, indent=2, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
