"""Run configuration: one JSON document wiring inputs, hyperparameters and outputs."""

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, Optional, Union

from . import __version__
from .data import FeatureSchema, SplitSpec
from .optim import TrainConfig
from .raster import BufferConfig


def _default_model() -> dict:
    return {"hidden_size": 128, "embed_dims": {"playa": 16, "huc8": 8, "author": 4}}


@dataclass
class RunConfig:
    playas: str = "playas.csv"
    monthly: str = "monthly.csv"
    lulc: str = "lulc.csv"
    rasters: Dict[str, str] = field(default_factory=dict)
    model: dict = field(default_factory=_default_model)
    train: TrainConfig = field(default_factory=TrainConfig)
    buffer: BufferConfig = field(default_factory=BufferConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    schema: FeatureSchema = field(default_factory=FeatureSchema)
    cutoff: float = 0.3
    output_dir: str = "run"
    seed: int = 0
    max_playas: Optional[int] = None

    def __post_init__(self):
        self.set_seed(self.seed)

    def set_seed(self, seed: int) -> None:
        """The global seed drives every generator."""
        self.seed = seed
        self.train.seed = seed
        self.buffer.base_seed = seed

    def to_dict(self) -> dict:
        return {
            "tool_version": __version__,
            "playas": self.playas,
            "monthly": self.monthly,
            "lulc": self.lulc,
            "rasters": dict(sorted(self.rasters.items())),
            "model": self.model,
            "train": self.train.to_dict(),
            "buffer": {"radius": self.buffer.radius, "n_points": self.buffer.n_points, "base_seed": self.buffer.base_seed},
            "split": self.split.to_dict(),
            "schema": self.schema.to_dict(),
            "cutoff": self.cutoff,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "max_playas": self.max_playas,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: Union[str, Path, None] = None) -> "RunConfig":
        known = {f.name for f in fields(cls)} | {"tool_version"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {k: v for k, v in d.items() if k in known and k != "tool_version"}
        if "train" in kw:
            kw["train"] = TrainConfig(**kw["train"])
        if "buffer" in kw:
            kw["buffer"] = BufferConfig(**kw["buffer"])
        if "split" in kw:
            kw["split"] = SplitSpec.from_dict(kw["split"])
        if "schema" in kw:
            kw["schema"] = FeatureSchema.from_dict(kw["schema"])
        if "model" in kw:
            kw["model"] = {**_default_model(), **kw["model"]}
        cfg = cls(**kw)
        if base_dir is not None:
            cfg.resolve_paths(base_dir)
        return cfg

    def resolve_paths(self, base_dir: Union[str, Path]) -> None:
        base = Path(base_dir)

        def res(p):
            return str((base / p).resolve())

        self.playas, self.monthly, self.lulc = res(self.playas), res(self.monthly), res(self.lulc)
        self.rasters = {str(y): res(p) for y, p in self.rasters.items()}
        self.output_dir = res(self.output_dir)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, directory: Union[str, Path], name: str = "run_config.json") -> Path:
        path = Path(directory) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        return path


def load_config(path: Union[str, Path, None]) -> RunConfig:
    """Load a config file; relative paths resolve against its directory."""
    if path is None:
        cfg = RunConfig()
        cfg.resolve_paths(Path.cwd())
        return cfg
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(doc, base_dir=path.parent)
