"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import InvalidParameter
from .imageio import atomic_write, format_value

F_TYPES = ("zero", "log", "quartic")
DATASETS = ("gaussian", "two-point", "gmm", "folder")
MODELS = ("oracle", "linear", "mlp")


@dataclass(frozen=True)
class ExperimentConfig:
    # schedule
    n_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    sigma: float = 0.4
    support: int = 0  # 0 = automatic
    f_type: str = "quartic"
    f_end: float = 0.14
    fine_to_coarse: bool = False
    paper_exponent: bool = False
    # sampler
    literal_index: bool = False
    final_noise: bool = False
    # data
    field_ndim: int = 2
    image_size: int = 8
    dataset: str = "two-point"
    dataset_path: str = ""
    data_scale: float = 0.5
    spectral_decay: float = 4.0
    gmm_components: int = 4
    gmm_var: float = 0.01
    # model and training
    model: str = "oracle"
    mlp_hidden: int = 64
    mlp_depth: int = 2
    mlp_embed: int = 16
    train_steps: int = 2000
    batch_size: int = 128
    learning_rate: float = 1e-3
    samples_per_step: int = 256
    # sampling and evaluation
    n_samples: int = 64
    stride: int = 100
    n_bands: int = 2
    n_reference: int = 4096
    eval_batch: int = 4096
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        if self.f_type not in F_TYPES:
            raise InvalidParameter(f"f_type must be one of {F_TYPES}, got {self.f_type!r}")
        if self.dataset not in DATASETS:
            raise InvalidParameter(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        if self.model not in MODELS:
            raise InvalidParameter(f"model must be one of {MODELS}, got {self.model!r}")
        if self.field_ndim not in (1, 2):
            raise InvalidParameter("field_ndim must be 1 or 2")
        if self.dataset == "folder" and not self.dataset_path:
            raise InvalidParameter("dataset = folder needs dataset_path")
        for name in ("n_steps", "image_size", "n_samples", "stride", "batch_size", "n_bands"):
            if getattr(self, name) < 1:
                raise InvalidParameter(f"{name} must be >= 1")

    def to_text(self) -> str:
        lines = [f"{f.name} = {format_value(getattr(self, f.name))}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidParameter(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        return cls().with_overrides(values)

    def with_overrides(self, values) -> "ExperimentConfig":
        """Copy with string-valued overrides; unknown keys are rejected."""
        if not isinstance(values, dict):
            pairs = {}
            for item in values:
                if "=" not in item:
                    raise InvalidParameter(f"override must be key=value, got {item!r}")
                k, v = item.split("=", 1)
                pairs[k.strip()] = v.strip()
            values = pairs
        types = {f.name: f.type for f in fields(self)}
        parsed = {}
        for key, value in values.items():
            if key not in types:
                raise InvalidParameter(f"unknown config key {key!r}")
            parsed[key] = _parse(key, types[key], value)
        return dataclasses.replace(self, **parsed)

    def save(self, path):
        atomic_write(path, self.to_text().encode())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def schedule_kwargs(self) -> dict:
        return dict(
            ndim=self.field_ndim,
            n_steps=self.n_steps,
            beta_start=self.beta_start,
            beta_end=self.beta_end,
            sigma=self.sigma,
            support=self.support or None,
            f_type=self.f_type,
            f_end=self.f_end,
            fine_to_coarse=self.fine_to_coarse,
            paper_exponent=self.paper_exponent,
        )


def _parse(key, typ, value):
    if not isinstance(value, str):
        return value
    try:
        if typ in (bool, "bool"):
            low = value.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(value)
        if typ in (int, "int"):
            return int(value)
        if typ in (float, "float"):
            return float(value)
    except ValueError:
        raise InvalidParameter(f"bad value for {key}: {value!r}") from None
    return value
