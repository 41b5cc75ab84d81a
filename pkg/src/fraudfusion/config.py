"""Run configuration: YAML files, bundled presets and ``key=value`` overrides."""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .dataset import SCENARIOS, FeatureSchema, Scenario
from .errors import ConfigError

CONFIG_ENV = "FRAUDFUSION_CONFIG"

# Default sweep when a config gives no grid.
DEFAULT_GRID = {
    "learning_rate": [0.05, 0.1, 0.3],
    "max_depth": [3, 5, 7],
    "n_trees": [100, 300],
    "min_child_weight": [1, 10],
}

DEFAULTS = {
    "synth": None,
    "data": {
        "csv": "data/dataset.csv",
        "schema": None,
    },
    "split": {
        "train_fraction": 0.6,
        "train_size": None,
    },
    "grid": DEFAULT_GRID,
    "holdout_fraction": 0.2,
    "gbdt": {},
    "costs": {"acl": 1000.0, "clv": 300.0, "churn_given_reject": 0.3},
    "n_bootstrap": 100,
    "master_seed": 0,
    "scenarios": list(SCENARIOS),
    "output_dir": "runs/default",
    "threads": 1,
}

# Keys whose values are free-form mappings; overrides may add sub-keys.
_OPEN_KEYS = {"grid", "gbdt", "synth"}


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("fraudfusion.presets").iterdir() if p.name.endswith(".yaml"))


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("grid",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _read(path_or_preset: str) -> dict:
    p = Path(path_or_preset)
    if p.is_file():
        text = p.read_text(encoding="utf-8")
    elif path_or_preset in preset_names():
        text = resources.files("fraudfusion.presets").joinpath(f"{path_or_preset}.yaml").read_text(encoding="utf-8")
    else:
        raise ConfigError(f"config not found: {path_or_preset!r} (not a file or one of presets {preset_names()})")
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path_or_preset}: top level must be a mapping")
    return data


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node.get(part), dict):
            if node.get(part) is None and parts[0] in _OPEN_KEYS:
                node[part] = {}
            else:
                raise ConfigError(f"override {key!r} does not name a declared config key")
        node = node[part]
    leaf = parts[-1]
    if leaf not in node and parts[0] not in _OPEN_KEYS:
        raise ConfigError(f"override {key!r} does not name a declared config key")
    node[leaf] = yaml.safe_load(raw)


def load_config(path_or_preset: str | None, overrides=()) -> dict:
    """Defaults, then the file (or preset), then overrides. Unknown top-level keys are rejected."""
    path_or_preset = path_or_preset or os.environ.get(CONFIG_ENV)
    if not path_or_preset:
        raise ConfigError(f"no config given (use --config or set {CONFIG_ENV})")
    user = _read(path_or_preset)
    unknown = set(user) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, user)
    for ov in overrides:
        apply_override(cfg, ov)
    return cfg


def schema_path_for(cfg: dict) -> Path:
    if cfg["data"].get("schema"):
        return Path(cfg["data"]["schema"])
    csv_path = Path(cfg["data"]["csv"])
    return csv_path.with_name(csv_path.stem + ".schema.yaml")


def load_schema(cfg: dict) -> FeatureSchema:
    return FeatureSchema.load(schema_path_for(cfg))


def parse_scenarios(value) -> list[Scenario]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    scenarios = [Scenario.parse(v) for v in value]
    if not scenarios:
        raise ConfigError("at least one scenario is required")
    if len({s.id for s in scenarios}) != len(scenarios):
        raise ConfigError("scenarios must be distinct")
    return scenarios


@dataclass
class ExperimentConfig:
    scenarios: list
    grid: dict
    costs: object
    train_fraction: float | None = 0.6
    train_size: int | None = None
    holdout_fraction: float = 0.2
    base_params: object = None
    n_bootstrap: int = 100
    master_seed: int = 0
    output_dir: Path = field(default_factory=lambda: Path("runs/default"))

    @classmethod
    def from_dict(cls, cfg: dict) -> ExperimentConfig:
        from .gbdt import GbdtParams
        from .metrics import CostParams

        split = cfg.get("split") or {}
        train_size = split.get("train_size")
        train_fraction = None if train_size is not None else split.get("train_fraction", 0.6)
        n_boot = int(cfg.get("n_bootstrap", 100))
        if n_boot < 2:
            raise ConfigError("n_bootstrap must be at least 2")
        return cls(
            scenarios=parse_scenarios(cfg.get("scenarios") or list(SCENARIOS)),
            grid=dict(cfg.get("grid") or {}),
            costs=CostParams.from_dict(cfg.get("costs") or {}),
            train_fraction=None if train_fraction is None else float(train_fraction),
            train_size=None if train_size is None else int(train_size),
            holdout_fraction=float(cfg.get("holdout_fraction", 0.2)),
            base_params=GbdtParams.from_dict(cfg.get("gbdt") or {}).validate(),
            n_bootstrap=n_boot,
            master_seed=int(cfg.get("master_seed", 0)),
            output_dir=Path(cfg.get("output_dir", "runs/default")),
        )

    def to_dict(self) -> dict:
        """Portable record for manifests (no output path, no thread count)."""
        return {
            "scenarios": [s.id for s in self.scenarios],
            "split": {"train_fraction": self.train_fraction, "train_size": self.train_size},
            "grid": self.grid,
            "holdout_fraction": self.holdout_fraction,
            "gbdt": self.base_params.to_dict(),
            "costs": self.costs.to_dict(),
            "n_bootstrap": self.n_bootstrap,
            "master_seed": self.master_seed,
        }
