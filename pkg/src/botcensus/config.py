"""Pipeline configuration: one structured JSON document covering every
training hyperparameter, with library defaults baked in.

Config resolution order used by the CLI: command-line flag, then config file,
then a BOTCENSUS_-prefixed environment variable, then the default below.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import WeightsConfig
from .errors import ConfigError
from .graph import DistillConfig, GraphConfig
from .tabular import BoostConfig, ForestConfig
from .text import TextConfig

ENV_PREFIX = "BOTCENSUS_"

# JSON key -> dataclass field renames (lambda is a Python keyword).
_DISTILL_KEY_MAP = {"lambda": "lam"}


@dataclass
class PipelineConfig:
    forest: ForestConfig = field(default_factory=ForestConfig)
    adaboost: BoostConfig = field(default_factory=BoostConfig)
    text: TextConfig = field(default_factory=TextConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    val_fraction: float = 0.2
    seed: int = 0
    text_providers: tuple[str, str] = ("hash-a", "hash-b")

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Derive deterministic per-component seeds from one master seed."""
        return dataclasses.replace(
            self,
            seed=seed,
            forest=dataclasses.replace(self.forest, seed=seed + 1),
            adaboost=dataclasses.replace(self.adaboost, seed=seed + 2),
            text=dataclasses.replace(self.text, seed=seed + 3),
            graph=dataclasses.replace(self.graph, seed=seed + 5),
            distill=dataclasses.replace(self.distill, seed=seed + 9),
            weights=dataclasses.replace(self.weights, seed=seed + 13),
        )

    def to_dict(self) -> dict:
        obj = {
            "val_fraction": self.val_fraction,
            "seed": self.seed,
            "text_providers": list(self.text_providers),
            "forest": dataclasses.asdict(self.forest),
            "adaboost": dataclasses.asdict(self.adaboost),
            "text": dataclasses.asdict(self.text),
            "graph": dataclasses.asdict(self.graph),
            "distill": dataclasses.asdict(self.distill),
            "weights": dataclasses.asdict(self.weights),
        }
        distill = obj["distill"]
        distill["lambda"] = distill.pop("lam")
        return obj


def _section(cls, obj: dict, name: str, key_map: dict[str, str] | None = None):
    if not isinstance(obj, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    fields = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in obj.items():
        target = (key_map or {}).get(key, key)
        if target not in fields:
            raise ConfigError(f"unknown key {key!r} in config section {name!r}")
        kwargs[target] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config section {name!r}: {exc}")


def config_from_dict(obj: dict) -> PipelineConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config document must be a JSON object")
    known = {
        "forest", "adaboost", "text", "graph", "distill", "weights",
        "val_fraction", "seed", "text_providers",
    }
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        val_fraction = float(obj.get("val_fraction", 0.2))
        seed = int(obj.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad val_fraction/seed in config: {exc}")
    cfg = PipelineConfig(
        forest=_section(ForestConfig, obj.get("forest", {}), "forest"),
        adaboost=_section(BoostConfig, obj.get("adaboost", {}), "adaboost"),
        text=_section(TextConfig, obj.get("text", {}), "text"),
        graph=_section(GraphConfig, obj.get("graph", {}), "graph"),
        distill=_section(DistillConfig, obj.get("distill", {}), "distill",
                         _DISTILL_KEY_MAP),
        weights=_section(WeightsConfig, obj.get("weights", {}), "weights"),
        val_fraction=val_fraction,
        seed=seed,
        text_providers=tuple(obj.get("text_providers", ("hash-a", "hash-b"))),
    )
    if not (0.0 < cfg.val_fraction < 1.0):
        raise ConfigError(f"val_fraction out of (0, 1): {cfg.val_fraction}")
    if len(cfg.text_providers) < 1:
        raise ConfigError("need at least one text provider")
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    return config_from_dict(obj)


def write_default_config(path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(PipelineConfig().to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
