"""Single-document JSON checkpoints.

Floats are written with ``repr`` (shortest round-trip form), keys sorted, so
a checkpoint reloads bit-exactly and identical runs give identical bytes.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from . import __version__
from .data import DatasetVocab, FeatureSchema, SplitSpec, StandardizerStats
from .model import ModelConfig, ModelParameters, param_shapes

SCHEMA_VERSION = 1


@dataclass
class Checkpoint:
    model_config: ModelConfig
    vocab: DatasetVocab
    standardizer: StandardizerStats
    schema: FeatureSchema
    split: SplitSpec
    params: ModelParameters
    best_epoch: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "model_config": self.model_config.to_dict(),
            "vocab": self.vocab.to_dict(),
            "standardizer": self.standardizer.to_dict(),
            "feature_schema": self.schema.to_dict(),
            "split": self.split.to_dict(),
            "parameters": {
                name: {"shape": list(self.params[name].shape), "values": self.params[name].reshape(-1).tolist()}
                for name in sorted(self.params)
            },
            "best_epoch": self.best_epoch,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported checkpoint schema_version {d.get('schema_version')!r}")
        config = ModelConfig.from_dict(d["model_config"])
        expected = param_shapes(config)
        params = {}
        for name, entry in d["parameters"].items():
            shape = tuple(entry["shape"])
            if expected.get(name) != shape:
                raise ValueError(f"checkpoint parameter {name} has shape {shape}, expected {expected.get(name)}")
            params[name] = np.asarray(entry["values"], dtype=np.float64).reshape(shape)
        if set(params) != set(expected):
            raise ValueError(f"checkpoint parameters {sorted(params)} do not match {sorted(expected)}")
        return cls(
            model_config=config,
            vocab=DatasetVocab.from_dict(d["vocab"]),
            standardizer=StandardizerStats.from_dict(d["standardizer"]),
            schema=FeatureSchema.from_dict(d["feature_schema"]),
            split=SplitSpec.from_dict(d["split"]),
            params=params,
            best_epoch=int(d["best_epoch"]),
            seed=int(d["seed"]),
        )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(ckpt.to_dict(), sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    return Checkpoint.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
