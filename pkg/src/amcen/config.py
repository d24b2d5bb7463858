"""Run configuration: a flat dataclass, a flat key=value file format, and CLI overrides.

Defaults follow the reference hyperparameter setting: Adam at lr 1e-3 with
weight decay 1e-5, 30 + 20 epochs for the two training stages, embedding
width 200, batch size 1024, 2 message-passing layers with dropout 0.3,
attention window 4 with 10 heads, blend weight 0.2, and ranking/contrast
trade-off 0.6.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import DataError

COMPOSITIONS = ("subtract", "multiply", "circular_correlation")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    stage1_epochs: int = 30
    stage2_epochs: int = 20
    embed_dim: int = 200
    batch_size: int = 1024
    num_layers: int = 2
    dropout: float = 0.3
    window_size: int = 4
    num_heads: int = 10
    blend_weight: float = 0.2
    ranking_loss_weight: float = 0.6
    temperature: float = 0.1
    composition: str = "multiply"
    num_bases: int = 0
    seed: int = 0
    eval_every: int = 1
    dtype: str = "float32"
    optimizer: str = "adam"
    # Ablation switches.
    no_attention_mask: bool = False
    his_only: bool = False
    nonhis_only: bool = False
    no_predictive_mask: bool = False
    gt_predictive_mask: bool = False
    # Fidelity switches for the two formulations we deliberately deviate from:
    # softmax(ReLU(x)) as the message-passing activation, and post-softmax
    # multiplicative masking in the decoder.
    softmax_relu_activation: bool = False
    post_softmax_mask: bool = False
    # Optional L2 normalization of contrastive representations.
    normalize_contrast: bool = False

    def validate(self) -> None:
        if not 0.0 <= self.ranking_loss_weight <= 1.0:
            raise DataError(f"ranking_loss_weight must be in [0, 1], got {self.ranking_loss_weight}")
        if not 0.0 <= self.blend_weight <= 1.0:
            raise DataError(f"blend_weight must be in [0, 1], got {self.blend_weight}")
        if not 0.0 <= self.dropout < 1.0:
            raise DataError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.temperature <= 0:
            raise DataError(f"temperature must be positive, got {self.temperature}")
        if self.window_size < 1:
            raise DataError(f"window_size must be >= 1, got {self.window_size}")
        for name in ("stage1_epochs", "stage2_epochs", "embed_dim", "batch_size", "num_heads"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive, got {getattr(self, name)}")
        if self.num_layers < 0:
            raise DataError(f"num_layers must be >= 0, got {self.num_layers}")
        if self.embed_dim % self.num_heads != 0:
            raise DataError(
                f"embed_dim ({self.embed_dim}) must be divisible by num_heads ({self.num_heads})"
            )
        if self.composition not in COMPOSITIONS:
            raise DataError(f"unknown composition {self.composition!r}, expected one of {COMPOSITIONS}")
        if self.his_only and self.nonhis_only:
            raise DataError("his_only and nonhis_only are mutually exclusive")
        if self.dtype not in ("float32", "float64"):
            raise DataError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.optimizer not in ("adam", "adamw"):
            raise DataError(f"optimizer must be adam or adamw, got {self.optimizer!r}")


@dataclass
class RunConfig(TrainConfig):
    dataset_dir: str = ""
    out_dir: str = "runs/default"
    granularity: int = 1
    topk: int = 10

    def validate(self) -> None:
        super().validate()
        if self.granularity <= 0:
            raise DataError(f"granularity must be positive, got {self.granularity}")

    def train_config(self) -> TrainConfig:
        train_names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in train_names})


def _parse_value(raw: str, ftype: type):
    raw = raw.strip()
    if ftype is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return ftype(raw)


def load_config(path, cls=RunConfig):
    """Parse a flat ``key = value`` config file (# starts a comment)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such config file: {path}")
    known = {f.name: f.type for f in fields(cls)}
    # dataclass field types arrive as strings under `from __future__ import annotations`
    type_map = {"int": int, "float": float, "str": str, "bool": bool}
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in known:
            raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
        ftype = known[key]
        if isinstance(ftype, str):
            ftype = type_map[ftype]
        try:
            values[key] = _parse_value(raw, ftype)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return cls(**values)


def save_config(config, path) -> None:
    """Write a config back out in the same flat key=value format."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")
