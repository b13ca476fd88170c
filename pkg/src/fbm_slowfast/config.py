"""Experiment configuration: JSON schema, defaults, round-trip and derived objects."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import jsonschema

from .errors import ConfigError
from .noise import NoiseSpec
from .slowfast import resolve_alpha

_K = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}
_PARITY = {"enum": ["sin", "cos"]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "hurst": {"type": "number", "exclusiveMinimum": 0.25, "exclusiveMaximum": 1},
        "alpha": {"oneOf": [{"type": "number"}, {"const": "auto"}]},
        "epsilon_list": {"type": "array",
                         "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
        "nu": {"type": "number", "exclusiveMinimum": 0},
        "grid_n": {"type": "integer", "minimum": 4, "multipleOf": 2},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "T": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "samples": {"type": "integer", "minimum": 0},
        "replicas": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "output_every": {"type": "integer", "minimum": 1},
        "xi": {"type": "number"},
        "complement_lambda": {"type": "number", "exclusiveMaximum": 0},
        "p": {"type": ["number", "null"], "minimum": 1},
        "sigma_multiple": {"type": "number", "exclusiveMinimum": 0},
        "ergodic": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "batches": {"type": "integer", "minimum": 2},
            },
        },
        "fou_table": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["lambda", "sigma", "hurst", "t"],
                "properties": {
                    "lambda": {"type": "number", "exclusiveMinimum": 0},
                    "sigma": {"type": "number", "minimum": 0},
                    "hurst": {"type": "number", "exclusiveMinimum": 0.25, "exclusiveMaximum": 1},
                    "t": {"type": "number", "minimum": 0},
                    "x0": {"type": "number"},
                },
            },
        },
        "noise": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["sigma", "lambda"],
                "properties": {
                    "k": _K,
                    "parity": _PARITY,
                    "components": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["k"],
                            "properties": {"k": _K, "parity": _PARITY,
                                           "weight": {"type": "number"}},
                        },
                    },
                    "sigma": {"type": "number", "minimum": 0},
                    "lambda": {"type": "number", "exclusiveMaximum": 0},
                },
                "oneOf": [{"required": ["k"]}, {"required": ["components"]}],
            },
        },
    },
}

DEFAULTS = {
    "hurst": 0.7,
    "alpha": "auto",
    "epsilon_list": [0.4, 0.2, 0.1],
    "nu": 0.1,
    "grid_n": 32,
    "dt": 0.005,
    "T": 1.0,
    "seed": 0,
    "samples": 0,
    "replicas": 1,
    "output_dir": "out",
    "output_every": 50,
    "xi": 3.5,
    "complement_lambda": -1.0,
    "p": None,
    "sigma_multiple": 3.0,
    "ergodic": {"T": 200.0, "dt": 0.05, "batches": 20},
    "fou_table": [],
    "noise": [],
}


def _locate(text, path):
    """Best-effort line number of the JSON node at ``path`` inside ``text``."""
    if text is None or not path:
        return None
    key = next((p for p in reversed(path) if isinstance(p, str)), None)
    if key is None:
        return None
    idx = text.find(f'"{key}"')
    return text.count("\n", 0, idx) + 1 if idx >= 0 else None


@dataclass
class Config:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    @classmethod
    def from_dict(cls, raw, text=None):
        """Validate ``raw`` against :data:`SCHEMA` and fill defaults."""
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        validator = jsonschema.Draft202012Validator(SCHEMA)
        errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            msgs = []
            for e in errors:
                where = "/".join(str(p) for p in e.absolute_path) or "<root>"
                line = _locate(text, list(e.absolute_path))
                prefix = f"line {line}: " if line else ""
                msgs.append(f"{prefix}{where}: {e.message}")
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(msgs))
        data = copy.deepcopy(DEFAULTS)
        for key, value in raw.items():
            if key == "ergodic":
                data["ergodic"].update(value)
            else:
                data[key] = copy.deepcopy(value)
        cfg = cls(data)
        cfg._check_consistency()
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(raw, text)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(text)

    def _check_consistency(self):
        try:
            resolve_alpha(self.data["alpha"], self.data["hurst"])
        except ValueError as exc:
            raise ConfigError(f"alpha: {exc}") from exc
        n = self.data["grid_n"]
        for i, entry in enumerate(self.data["noise"]):
            ks = [entry["k"]] if "k" in entry else [c["k"] for c in entry["components"]]
            for k in ks:
                if max(abs(k[0]), abs(k[1])) >= n // 3 or k == [0, 0]:
                    raise ConfigError(f"noise/{i}: wavevector {k} not resolved "
                                      f"(need 0 < |k|_inf < {n // 3} on grid_n={n})")

    def to_dict(self):
        return copy.deepcopy(self.data)

    def to_json(self):
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"

    def with_overrides(self, **kw):
        data = self.to_dict()
        data.update({k: v for k, v in kw.items() if v is not None})
        return Config.from_dict(data)

    def digest(self):
        """SHA-256 of the canonical JSON form, ignoring where outputs are written."""
        fields = {k: v for k, v in self.data.items() if k != "output_dir"}
        canon = json.dumps(fields, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    @property
    def alpha(self):
        return resolve_alpha(self.data["alpha"], self.data["hurst"])

    def noise_spec(self, hurst=None):
        return NoiseSpec.from_entries(self.data["grid_n"], self.data["noise"],
                                      self.data["hurst"] if hurst is None else hurst,
                                      xi=self.data["xi"],
                                      complement_lambda=self.data["complement_lambda"])
