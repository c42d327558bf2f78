"""Engine configuration: one JSON file, per-task-mode defaults, environment
overrides for endpoint values, and a content hash for reproducibility.

Task modes ship the hyperparameters each benchmark ran with, so a bare
config reproduces the intended setup shape.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .graph import EpisodeConfig

TASK_MODES = ("boolq", "emrqa", "simulated")
SCORER_KINDS = ("oracle", "self_critic", "estimation")

ENV_ENDPOINT = "THOUGHTSEARCH_ENDPOINT"
ENV_API_KEY = "THOUGHTSEARCH_API_KEY"


@dataclass
class GeneratorConfig:
    backend: str = "simulated"  # "simulated" | "http"
    endpoint: str = ""
    timeout_s: float = 30.0
    retries: int = 2
    max_concurrency: int = 4
    max_tokens: int = 256
    temperature: float = 0.0
    template_file: str = ""  # empty -> builtin templates for the task mode


@dataclass
class RetrievalConfig:
    chunk_words: int = 500
    embed_dim: int = 256
    query_mode: str = "formulated"  # "formulated" | "raw"


@dataclass
class ScoringConfig:
    embed_dim: int = 256
    regressor: str = "gbrt"  # "gbrt" | "ridge"
    gbrt_rounds: int = 100
    gbrt_depth: int = 3
    gbrt_learning_rate: float = 0.1
    ridge_alpha: float = 1.0
    holdout_fraction: float = 0.2
    oracle_metric: str = "exact"  # "exact" | "token_f1"

    def regressor_config(self) -> dict:
        if self.regressor == "gbrt":
            return {
                "regressor": "gbrt",
                "rounds": self.gbrt_rounds,
                "depth": self.gbrt_depth,
                "learning_rate": self.gbrt_learning_rate,
            }
        if self.regressor == "ridge":
            return {"regressor": "ridge", "alpha": self.ridge_alpha}
        raise ConfigError(f"unknown regressor {self.regressor!r}")


@dataclass
class EngineConfig:
    task_mode: str = "simulated"
    max_steps: int = 10
    gamma: float = 1.0
    exploration_c: float = math.sqrt(2.0)
    p_doc: float = 0.5
    doc_batch_size: int = 2
    thought_sample_size: int = 5
    stop_thresholds: dict = field(
        default_factory=lambda: {"oracle": 0.5, "self_critic": 0.49, "estimation": 0.21}
    )
    accuracy_thresholds: dict = field(
        default_factory=lambda: {"self_critic": 0.9, "estimation": 0.21}
    )
    scorer: str = "self_critic"
    seed: int = 0
    workers: int = 1
    index_file: str = ""
    model_file: str = ""
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)

    def __post_init__(self):
        if self.task_mode not in TASK_MODES:
            raise ConfigError(f"task_mode must be one of {TASK_MODES}, got {self.task_mode!r}")
        if self.scorer not in SCORER_KINDS:
            raise ConfigError(f"scorer must be one of {SCORER_KINDS}, got {self.scorer!r}")
        for kind in SCORER_KINDS:
            if kind not in self.stop_thresholds:
                raise ConfigError(f"stop_thresholds missing entry for {kind!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        # Bounds shared with the per-episode view.
        self.episode()

    def episode(self, stop_threshold: float | None = None) -> EpisodeConfig:
        """Per-search view; the stop threshold defaults to the active scorer's."""
        if stop_threshold is None:
            stop_threshold = self.stop_thresholds[self.scorer]
        return EpisodeConfig(
            max_steps=self.max_steps,
            gamma=self.gamma,
            stop_threshold=stop_threshold,
            exploration_c=self.exploration_c,
            p_doc=self.p_doc,
            doc_batch_size=self.doc_batch_size,
            thought_sample_size=self.thought_sample_size,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_MODE_DEFAULTS: dict[str, dict] = {
    "boolq": {
        "p_doc": 0.5,
        "doc_batch_size": 2,
        "stop_thresholds": {"oracle": 0.5, "self_critic": 0.49, "estimation": 0.21},
        "retrieval": {"chunk_words": 500, "query_mode": "formulated"},
        "scoring": {"oracle_metric": "exact"},
    },
    "emrqa": {
        "p_doc": 1.0,
        "doc_batch_size": 10,
        "stop_thresholds": {"oracle": 0.5, "self_critic": 0.49, "estimation": 0.22},
        "retrieval": {"chunk_words": 100, "query_mode": "raw"},
        "scoring": {"oracle_metric": "exact"},
    },
    "simulated": {
        "p_doc": 0.5,
        "doc_batch_size": 2,
        "stop_thresholds": {"oracle": 0.75, "self_critic": 0.8, "estimation": 0.8},
        "retrieval": {"chunk_words": 100, "query_mode": "raw"},
        "scoring": {"oracle_metric": "token_f1", "embed_dim": 64},
    },
}


def default_config(task_mode: str) -> EngineConfig:
    if task_mode not in _MODE_DEFAULTS:
        raise ConfigError(f"unknown task mode {task_mode!r}")
    return _apply_overrides(
        EngineConfig(task_mode=task_mode), _MODE_DEFAULTS[task_mode]
    )


def _apply_overrides(config: EngineConfig, overrides: dict) -> EngineConfig:
    data = config.to_dict()
    for key, value in overrides.items():
        if key not in data:
            raise ConfigError(f"unknown config field {key!r}")
        if isinstance(value, dict) and isinstance(data[key], dict) and key in (
            "generator",
            "retrieval",
            "scoring",
        ):
            for sub_key, sub_value in value.items():
                if sub_key not in data[key]:
                    raise ConfigError(f"unknown config field {key}.{sub_key!r}")
                data[key][sub_key] = sub_value
        else:
            data[key] = value
    return config_from_dict(data)


def config_from_dict(data: dict) -> EngineConfig:
    data = dict(data)
    known = {f.name for f in fields(EngineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")

    def sub(cls, key):
        raw = data.get(key, {})
        names = {f.name for f in fields(cls)}
        bad = set(raw) - names
        if bad:
            raise ConfigError(f"unknown config fields in {key}: {sorted(bad)}")
        return cls(**raw)

    data["generator"] = sub(GeneratorConfig, "generator")
    data["retrieval"] = sub(RetrievalConfig, "retrieval")
    data["scoring"] = sub(ScoringConfig, "scoring")
    return EngineConfig(**data)


def load_config(
    path: str | Path | None = None,
    task_mode: str | None = None,
    overrides: dict | None = None,
) -> EngineConfig:
    """Resolve a config: file values over mode defaults, then explicit
    overrides, then environment variables for endpoint values."""
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        mode = task_mode or data.get("task_mode", "simulated")
        config = _apply_overrides(default_config(mode), data)
        if task_mode is not None:
            config = _apply_overrides(config, {"task_mode": task_mode})
    else:
        config = default_config(task_mode or "simulated")
    if overrides:
        config = _apply_overrides(config, overrides)
    endpoint = os.environ.get(ENV_ENDPOINT)
    if endpoint:
        config.generator.endpoint = endpoint
    return config


def config_hash(config: EngineConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(blob.encode("utf-8"), digest_size=6).hexdigest()
