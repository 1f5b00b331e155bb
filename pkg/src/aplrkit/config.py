"""Run configuration: one JSON document drives the whole pipeline."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .boost import Hyperparams
from .dataset import EncodingSchema, TargetSpec
from .errors import ConfigError
from .evaluation import TuneGrid
from .smote import SmoteConfig


@dataclass(frozen=True)
class RunConfig:
    data: Path
    encoding: EncodingSchema = field(default_factory=EncodingSchema)
    target: TargetSpec = TargetSpec()
    test_fraction: float = 0.2
    smote: SmoteConfig | None = SmoteConfig()
    hyperparams: Hyperparams = Hyperparams()
    tune: TuneGrid | None = None
    seed: int = 42

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "RunConfig":
        known = {"data", "encoding", "target", "test_fraction", "smote", "hyperparams", "tune", "seed"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "data" not in doc:
            raise ConfigError("config needs a 'data' path")
        data = Path(doc["data"])
        if base_dir is not None and not data.is_absolute():
            data = base_dir / data
        seed = int(doc.get("seed", 42))
        smote_doc = doc.get("smote", {})
        try:
            smote = None if smote_doc is None else SmoteConfig(
                k_neighbors=int(smote_doc.get("k_neighbors", 5)),
                seed=seed,
                target_ratio=float(smote_doc.get("target_ratio", 1.0)),
            )
            hp = Hyperparams.from_dict({**doc.get("hyperparams", {}), "seed": seed})
            tune = None if doc.get("tune") is None else TuneGrid.from_dict(doc["tune"])
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cls(
            data=data,
            encoding=EncodingSchema.from_dict(doc.get("encoding", {})),
            target=TargetSpec.from_dict(doc.get("target", {})),
            test_fraction=float(doc.get("test_fraction", 0.2)),
            smote=smote,
            hyperparams=hp,
            tune=tune,
            seed=seed,
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc, path.parent)

    def to_dict(self) -> dict:
        return {
            "data": str(self.data),
            "encoding": self.encoding.to_dict(),
            "target": self.target.to_dict(),
            "test_fraction": self.test_fraction,
            "smote": None if self.smote is None else {
                "k_neighbors": self.smote.k_neighbors,
                "target_ratio": self.smote.target_ratio,
            },
            "hyperparams": {k: v for k, v in self.hyperparams.to_dict().items() if k != "seed"},
            "tune": None if self.tune is None else self.tune.to_dict(),
            "seed": self.seed,
        }

    def digest(self) -> str:
        """Hash of the configuration, independent of where the data file lives."""
        doc = self.to_dict()
        doc["data"] = Path(doc["data"]).name
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()
