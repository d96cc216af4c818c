"""Run configuration: one YAML tree merging the feature, model, training,
split, evaluation and path settings, every leaf addressable by a dotted key."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .errors import ConfigError, IGTError
from .featurize import FeatureConfig
from .model import ModelConfig
from .pipeline import SplitSpec, TrainConfig

# model keys derived from the feature section rather than set directly
_DERIVED_MODEL_KEYS = ("k_pe", "d_node", "d_edge")


@dataclass
class EvalSettings:
    roc_fpr: float = 0.01
    ef_fraction: float = 0.01
    top_k: int = 0
    per_example: bool = False
    bins: int = 50


@dataclass
class RunSettings:
    seed: Optional[int] = None
    workers: int = 1


@dataclass
class PathSettings:
    manifest: str = ""
    val_manifest: str = ""
    out: str = "igt_out"
    checkpoint: str = ""
    compare_checkpoint: str = ""
    receptor: str = ""
    ligand: str = ""
    poses: str = ""
    reference: str = ""


def _split_defaults() -> dict:
    return {"ratios": [0.70, 0.15, 0.15], "seed": None, "unit": "target_id"}


def _section_defaults() -> Dict[str, Dict[str, Any]]:
    feat = FeatureConfig().to_dict()
    model = {k: v for k, v in dataclasses.asdict(ModelConfig()).items() if k not in _DERIVED_MODEL_KEYS}
    train = dataclasses.asdict(TrainConfig())
    train["seed"] = None
    return {
        "run": dataclasses.asdict(RunSettings()),
        "paths": dataclasses.asdict(PathSettings()),
        "feature": feat,
        "model": model,
        "train": train,
        "split": _split_defaults(),
        "eval": dataclasses.asdict(EvalSettings()),
    }


DEFAULTS = _section_defaults()

# keys whose default is None but which hold integers once resolved
_INT_OR_NONE = {"run.seed", "train.seed", "split.seed"}


def dotted_defaults() -> Dict[str, Any]:
    return {f"{s}.{k}": v for s, sec in DEFAULTS.items() for k, v in sec.items()}


def parse_value(key: str, text: str):
    """Convert a command-line string to the type of ``key``'s default."""
    default = dotted_defaults()[key]
    try:
        if key in _INT_OR_NONE:
            return None if text.lower() in ("", "none", "null") else int(text)
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, list):
            items = [t.strip() for t in text.split(",") if t.strip()]
            if default and isinstance(default[0], float):
                return [float(t) for t in items]
            return items
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot interpret {text!r} as {type(default).__name__}") from None


def _check_tree(tree: dict, origin: str) -> None:
    if not isinstance(tree, dict):
        raise ConfigError(f"{origin}: top level must be a mapping of sections")
    for section, body in tree.items():
        if section not in DEFAULTS:
            raise ConfigError(f"{origin}: unknown section {section!r}")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{origin}: section {section!r} must be a mapping")
        for key in body:
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{origin}: unknown key {section}.{key}")


def load_tree(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        tree = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc.__class__.__name__})") from None
    _check_tree(tree, str(path))
    return tree


@dataclass
class RunConfig:
    """Fully resolved settings; build with :func:`resolve`."""

    feature: FeatureConfig
    model: ModelConfig
    train: TrainConfig
    split: SplitSpec
    eval: EvalSettings
    run: RunSettings
    paths: PathSettings
    tree: dict = field(repr=False, default_factory=dict)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.tree, sort_keys=True, default_flow_style=False)

    def echo(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "resolved_config.yaml"
        path.write_text(self.to_yaml())
        return path


def resolve(config_path=None, overrides: Optional[Dict[str, Any]] = None,
            env: Optional[dict] = None, base: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Defaults, then ``base`` (dotted), then the YAML file, then dotted overrides.

    Seeds left unset fall back to IGT_SEED, then 0.
    """
    env = os.environ if env is None else env
    tree = {s: dict(v) for s, v in DEFAULTS.items()}
    for key, value in (base or {}).items():
        section, _, name = key.partition(".")
        tree[section][name] = value
    if config_path:
        for section, body in load_tree(config_path).items():
            tree[section].update(body or {})
    for key, value in (overrides or {}).items():
        section, _, name = key.partition(".")
        if section not in DEFAULTS or name not in DEFAULTS[section]:
            raise ConfigError(f"unknown key {key}")
        tree[section][name] = value

    seed = tree["run"]["seed"]
    if seed is None:
        raw = env.get("IGT_SEED")
        try:
            seed = int(raw) if raw not in (None, "") else 0
        except ValueError:
            raise ConfigError(f"IGT_SEED must be an integer, got {raw!r}") from None
    tree["run"]["seed"] = seed
    for section in ("train", "split"):
        if tree[section]["seed"] is None:
            tree[section]["seed"] = seed

    try:
        feat = FeatureConfig(**{**tree["feature"], "exclude_resnames": tuple(tree["feature"]["exclude_resnames"])})
        model = ModelConfig.for_features(feat, **tree["model"])
        train = TrainConfig(**tree["train"])
        split = SplitSpec(tuple(tree["split"]["ratios"]), tree["split"]["seed"], tree["split"]["unit"])
        ev = EvalSettings(**tree["eval"])
        run = RunSettings(**tree["run"])
        paths = PathSettings(**{k: str(v) if v is not None else "" for k, v in tree["paths"].items()})
    except ConfigError:
        raise
    except (TypeError, ValueError, IGTError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    if run.workers < 1:
        raise ConfigError("run.workers must be >= 1")
    if not 0.0 < ev.roc_fpr <= 1.0 or not 0.0 < ev.ef_fraction <= 1.0:
        raise ConfigError("eval.roc_fpr and eval.ef_fraction must lie in (0, 1]")
    if ev.bins < 1:
        raise ConfigError("eval.bins must be >= 1")
    return RunConfig(feat, model, train, split, ev, run, paths, tree)


def feature_config_from_dict(d: dict) -> FeatureConfig:
    known = {f.name for f in fields(FeatureConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown feature keys {sorted(unknown)}")
    return FeatureConfig(**{**d, "exclude_resnames": tuple(d.get("exclude_resnames", ()))})
