"""Run configuration, presets and dataset resolution.

Resolution order: built-in defaults, then a JSON config file, then
``--preset`` (which rewrites the normalization modes and the schedule from
the resolved ``lr`` and ``epochs``), then individual flags.

JSON schema (every key optional)::

    {
      "data": "blobs" | "mnist:<dir>",
      "blobs": {BlobSpec fields},
      "mnist_train": int, "mnist_test": int,
      "hidden": [int, ...] | null,      # null: (64, 64) for blobs, (256, 128) for MNIST
      "embedding_dim": int,
      "embedding_norm": "none" | "l2" | "batchnorm",
      "weight_norm": "off" | "l2",
      "schedule": {"mode": "step", "phases": [{"alpha", "lr", "epochs"}, ...]}
                | {"mode": "ramp", "alpha_start", "alpha_end", "total_epochs", "lr"},
      "lr": float, "epochs": [int, int], "momentum": float, "weight_decay": float,
      "batch_size": int, "seed": int, "out": str, "preset": str | null
    }
"""

import json
from dataclasses import asdict, dataclass, field

from .data import BlobSpec, gen_blobs, load_mnist
from .training import Architecture, TemperatureSchedule

PRESETS = ("sm", "ln", "bn", "hln", "hbn")

DEFAULT_BLOBS = BlobSpec().to_dict()


class ConfigError(ValueError):
    pass


def preset_fields(name, lr, epochs):
    """Normalization modes and schedule for one of the named presets."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    e1, e2 = epochs
    start = [{"alpha": 1.0 if name == "sm" else 16.0, "lr": lr, "epochs": e1}]
    heat = [{"alpha": 4.0, "lr": lr / 10.0, "epochs": e2}] if name in ("hln", "hbn") else []
    norm = {"sm": "none", "ln": "l2", "hln": "l2", "bn": "batchnorm", "hbn": "batchnorm"}[name]
    return {
        "embedding_norm": norm,
        "weight_norm": "off" if name == "sm" else "l2",
        "schedule": {"mode": "step", "phases": start + heat},
    }


@dataclass
class RunConfig:
    data: str = "blobs"
    blobs: dict = field(default_factory=lambda: dict(DEFAULT_BLOBS))
    mnist_train: int = 50_000
    mnist_test: int = 10_000
    hidden: list | None = None
    embedding_dim: int = 16
    embedding_norm: str = "batchnorm"
    weight_norm: str = "l2"
    schedule: dict | None = None
    lr: float = 0.01
    epochs: list = field(default_factory=lambda: [30, 20])
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 32
    seed: int = 0
    out: str = "runs/heatup"
    preset: str | None = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if "blobs" in d:
            cfg.blobs = {**DEFAULT_BLOBS, **d["blobs"]}
        return cfg

    def resolved_hidden(self):
        if self.hidden is not None:
            return tuple(self.hidden)
        return (256, 128) if self.data.startswith("mnist") else (64, 64)

    def build_schedule(self):
        if self.schedule is None:
            return TemperatureSchedule.from_dict(preset_fields("hbn", self.lr, self.epochs)["schedule"])
        return TemperatureSchedule.from_dict(self.schedule)

    def build_arch(self, input_dim, n_classes):
        return Architecture(input_dim, n_classes, self.resolved_hidden(), self.embedding_dim,
                            self.embedding_norm, self.weight_norm)

    def validate(self):
        try:
            if len(self.epochs) != 2 or min(int(e) for e in self.epochs) < 1:
                raise ConfigError(f"epochs must be two positive counts, got {self.epochs}")
            if self.batch_size < 2:
                raise ConfigError("batch_size must be at least 2")
            if not self.lr > 0:
                raise ConfigError("lr must be positive")
            self.build_schedule()
            self.build_arch(1, 2)
            if not (self.data == "blobs" or self.data.startswith("mnist:")):
                raise ConfigError(f"data must be 'blobs' or 'mnist:<dir>', got {self.data!r}")
            BlobSpec(**self.blobs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self


def parse_phases(text):
    """``"16:0.01:30,4:0.001:20"`` -> step schedule dict."""
    phases = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise ConfigError(f"phase {part!r} must be alpha:lr:epochs")
        phases.append({"alpha": float(bits[0]), "lr": float(bits[1]), "epochs": int(bits[2])})
    return {"mode": "step", "phases": phases}


def parse_ramp(text):
    """``"16:4:10"`` (alpha_start:alpha_end:epochs) -> ramp schedule dict (lr filled later)."""
    bits = text.split(":")
    if len(bits) != 3:
        raise ConfigError(f"ramp {text!r} must be alpha_start:alpha_end:epochs")
    return {"mode": "ramp", "alpha_start": float(bits[0]), "alpha_end": float(bits[1]),
            "total_epochs": int(bits[2])}


def resolve_config(file_path=None, preset=None, overrides=None):
    """Combine defaults, an optional JSON file, a preset and flag overrides."""
    d = {}
    if file_path:
        try:
            with open(file_path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{file_path}: invalid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{file_path}: top level must be an object")
    cfg = RunConfig.from_dict(d)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    # lr/epochs feed preset expansion, so apply them first
    for key in ("lr", "epochs"):
        if key in overrides:
            setattr(cfg, key, overrides.pop(key))
    preset = preset or cfg.preset
    if preset is not None:
        for key, value in preset_fields(preset, cfg.lr, cfg.epochs).items():
            setattr(cfg, key, value)
        cfg.preset = preset
    for key, value in overrides.items():
        if key == "blobs":
            cfg.blobs = {**cfg.blobs, **value}
        elif key == "schedule" and value.get("mode") == "ramp" and "lr" not in value:
            cfg.schedule = {**value, "lr": cfg.lr}
        else:
            setattr(cfg, key, value)
    if cfg.schedule is None:
        cfg.schedule = preset_fields("hbn", cfg.lr, cfg.epochs)["schedule"]
    return cfg.validate()


def load_dataset(cfg):
    if cfg.data == "blobs":
        return gen_blobs(BlobSpec(**cfg.blobs))
    return load_mnist(cfg.data.split(":", 1)[1], cfg.mnist_train, cfg.mnist_test)
