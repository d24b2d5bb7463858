"""Self-describing checkpoint container: a JSON header plus named parameter blobs.

Each tensor is stored as an individual ``.npy`` entry inside a zip archive;
the header records shapes, dtypes, and per-blob SHA-256 digests (integrity),
a fingerprint of the forward-semantics config fields plus model shape
(compatibility), the training stage, epoch, and running metrics.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import zipfile
from dataclasses import dataclass

import numpy as np
import torch

from .config import TrainConfig
from .errors import CheckpointError

FORMAT_VERSION = 1

# Fields that change what the forward pass computes. Optimization-only fields
# (lr, epochs, batch size, seed) and inference-mode switches (predictive-mask
# handling) are excluded so a trained model can be re-evaluated under them.
FINGERPRINT_FIELDS = (
    "embed_dim", "num_layers", "num_heads", "window_size", "blend_weight",
    "composition", "num_bases", "dropout", "temperature", "normalize_contrast",
    "softmax_relu_activation", "post_softmax_mask",
    "no_attention_mask", "his_only", "nonhis_only",
)


def config_fingerprint(config, meta: dict) -> str:
    if dataclasses.is_dataclass(config):
        config = dataclasses.asdict(config)
    payload = {name: config[name] for name in FINGERPRINT_FIELDS}
    payload["model_meta"] = {k: int(v) for k, v in sorted(meta.items())}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Checkpoint:
    stage: str
    epoch: int
    config: dict
    fingerprint: str
    model_meta: dict
    metrics: dict
    tensors: dict[str, np.ndarray]

    def train_config(self) -> TrainConfig:
        names = {f.name for f in dataclasses.fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in self.config.items() if k in names})


def save_checkpoint(path, model, config, stage: str, epoch: int = 0,
                    metrics: dict | None = None) -> None:
    from .network import model_meta  # local import to avoid a cycle

    meta = model_meta(model)
    state = {name: tensor.detach().cpu().numpy()
             for name, tensor in model.state_dict().items()}
    entries = {}
    blobs = {}
    for name, arr in state.items():
        buf = io.BytesIO()
        np.save(buf, arr)
        data = buf.getvalue()
        blobs[name] = data
        entries[name] = {
            "shape": list(arr.shape),
            "dtype": str(arr.dtype),
            "sha256": hashlib.sha256(data).hexdigest(),
        }
    header = {
        "format_version": FORMAT_VERSION,
        "stage": stage,
        "epoch": epoch,
        "config": dataclasses.asdict(config) if dataclasses.is_dataclass(config) else dict(config),
        "fingerprint": config_fingerprint(config, meta),
        "model_meta": meta,
        "metrics": metrics or {},
        "tensors": entries,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("header.json", json.dumps(header, indent=1))
        for name, data in blobs.items():
            zf.writestr(f"params/{name}.npy", data)


def load_checkpoint(path, expected_config=None, expected_meta: dict | None = None,
                    force: bool = False) -> Checkpoint:
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json"))
            raw = {name: zf.read(f"params/{name}.npy")
                   for name in header.get("tensors", {})}
    except (OSError, zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version in {path}")
    tensors = {}
    for name, entry in header["tensors"].items():
        data = raw[name]
        if hashlib.sha256(data).hexdigest() != entry["sha256"]:
            raise CheckpointError(f"checkpoint {path} failed integrity check for {name!r}")
        arr = np.load(io.BytesIO(data))
        if list(arr.shape) != entry["shape"] or str(arr.dtype) != entry["dtype"]:
            raise CheckpointError(f"checkpoint {path} has inconsistent metadata for {name!r}")
        tensors[name] = arr
    ckpt = Checkpoint(header["stage"], header["epoch"], header["config"],
                      header["fingerprint"], header["model_meta"],
                      header["metrics"], tensors)
    if expected_config is not None:
        meta = expected_meta if expected_meta is not None else ckpt.model_meta
        expected = config_fingerprint(expected_config, meta)
        if expected != ckpt.fingerprint and not force:
            raise CheckpointError(
                f"checkpoint {path} fingerprint {ckpt.fingerprint} does not match the "
                f"requested config ({expected}); pass force=True/--force to override")
    return ckpt


def restore_model(model, ckpt: Checkpoint) -> None:
    state = {name: torch.from_numpy(arr.copy()) for name, arr in ckpt.tensors.items()}
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing or unexpected:
        raise CheckpointError(
            f"checkpoint does not match the model (missing={sorted(missing)}, "
            f"unexpected={sorted(unexpected)})")
