"""Run configuration: ``key = value`` files merged with command-line overrides.

Dotted keys address nested sections (``synth.num_users = 17``,
``grid.svm_C = 0.1, 1, 10``); comma-separated values become lists and
``#`` starts a comment. Files ending in ``.json`` are read as one JSON
object with the same keys nested.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .featurizer import Modality
from .models import MODEL_KINDS, HyperGrid
from .synthgen import SynthConfig

MODALITY_CHOICES = ("text", "apps", "both", "all")
MODEL_CHOICES = MODEL_KINDS + ("all",)
SPLIT_CHOICES = ("nested", "user")
METHOD_CHOICES = ("tsne", "pca", "none")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int | None = None
    out: str | None = None
    events: str | None = None        # dataset paths; synthetic data when both are unset
    labels: str | None = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    modality: str = "all"
    model: str = "all"
    split: str = "nested"
    folds: int = 10
    user_groups: tuple = (10, 3, 4)
    grid: HyperGrid = field(default_factory=HyperGrid)
    top_k: int = 1000
    min_user_frac: float = 0.10
    norm: str = "l1"
    vocab_scope: str = "fold"
    min_reports: int = 50
    tz_offset_minutes: int = 0
    drop_empty_days: bool = False
    probe_folds: int = 5
    method: str = "tsne"
    perplexity: float = 30.0
    jobs: int = 1

    def validate(self) -> "RunConfig":
        if self.seed is None:
            raise ConfigError("a root seed is required (--seed N or \"seed\" in the config)")
        if (self.events is None) != (self.labels is None):
            raise ConfigError("events and labels must be given together")
        _choice("modality", self.modality, MODALITY_CHOICES)
        _choice("model", self.model, MODEL_CHOICES)
        _choice("split", self.split, SPLIT_CHOICES)
        _choice("method", self.method, METHOD_CHOICES)
        _choice("vocab_scope", self.vocab_scope, ("fold", "global"))
        _choice("norm", self.norm, ("l1", "l2", "max"))
        if self.folds < 3:
            raise ConfigError("folds must be at least 3")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if len(self.user_groups) != 3 or min(self.user_groups) < 1:
            raise ConfigError("user_groups needs three positive sizes")
        try:
            replace(self.synth, seed=self.seed).validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    @property
    def modalities(self) -> list[str]:
        return ["both", "text", "apps"] if self.modality == "all" else [Modality(self.modality).value]

    @property
    def kinds(self) -> list[str]:
        return list(MODEL_KINDS) if self.model == "all" else [self.model]

    @property
    def synth_config(self) -> SynthConfig:
        return replace(self.synth, seed=self.seed)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["synth"] = self.synth_config.as_dict()
        d["user_groups"] = list(self.user_groups)
        d["grid"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["grid"].items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"


def _choice(name, value, allowed):
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")


def _scalar(text: str):
    low = text.lower()
    if low == "none":
        return None
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_kv(text: str) -> dict:
    """Nested dict from ``key = value`` lines."""
    out: dict = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected 'key = value', got {line!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        *parents, leaf = key.split(".")
        node = out
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"config line {n}: {key!r} clashes with a scalar key")
        node[leaf] = [_scalar(v.strip()) for v in val.split(",")] if "," in val else _scalar(val)
    return out


def _grid_from(values: dict) -> HyperGrid:
    known = {f.name: f.default for f in fields(HyperGrid)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown grid keys {sorted(unknown)}")
    kw = {}
    for k, v in values.items():
        if isinstance(known[k], tuple):
            v = tuple(v) if isinstance(v, (list, tuple)) else (v,)
        kw[k] = v
    try:
        return HyperGrid(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_from_mapping(values: dict, base: RunConfig | None = None) -> RunConfig:
    """Overlay ``values`` (parsed JSON or flags; ``None`` means unset) on ``base``."""
    cfg = base or RunConfig()
    known = {f.name for f in fields(RunConfig)}
    updates = {}
    for key, val in values.items():
        if val is None:
            continue
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "synth":
            merged = {**cfg.synth.as_dict(), **val}
            try:
                val = SynthConfig.from_mapping(merged)
            except (KeyError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
        elif key == "grid":
            merged = {f.name: getattr(cfg.grid, f.name) for f in fields(HyperGrid)}
            val = _grid_from({**merged, **val})
        elif key == "user_groups":
            val = tuple(int(v) for v in val)
        elif key in ("modality", "model", "split", "method", "norm", "vocab_scope"):
            val = str(val)
        updates[key] = val
    return replace(cfg, **updates)


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
            values = json.loads(text) if str(path).endswith(".json") else parse_kv(text)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = config_from_mapping(values)
    return config_from_mapping(overrides or {}, cfg).validate()
