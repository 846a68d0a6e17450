"""Experiment configuration: one JSON document, overridable from the command line."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import LabError

DEFAULT_TOLERANCES = {
    "deterministic": 1e-10,
    "mc_sigmas": 3.0,
    "relative": 0.05,
}


@dataclass
class ExperimentConfig:
    seed: int = 0
    paths: int = 20000
    steps: int = 200
    out: str = "talagrand_out"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("seed", "paths", "steps"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise LabError(f"config field {name!r} must be an integer, got {value!r}")
        if self.seed < 0:
            raise LabError("seed must be nonnegative")
        if self.paths < 2 or self.steps < 1:
            raise LabError("paths must be >= 2 and steps >= 1")
        if not isinstance(self.out, str) or not self.out:
            raise LabError("out must be a non-empty path string")
        if not isinstance(self.tolerances, dict) or not isinstance(self.params, dict):
            raise LabError("tolerances and params must be objects")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise LabError(f"unknown tolerance keys {sorted(unknown)}")
        for k, v in self.tolerances.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise LabError(f"tolerance {k!r} must be a positive number")

    def tolerance(self, key):
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def to_dict(self):
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise LabError("config document must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise LabError(f"unknown config keys {sorted(unknown)}")
        doc = copy.deepcopy(doc)
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(doc.pop("tolerances", {}) or {})
        return cls(tolerances=tol, **doc)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LabError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise LabError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(text)

    def with_overrides(self, **overrides):
        doc = self.to_dict()
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_dict(doc)
