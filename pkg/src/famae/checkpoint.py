"""Checkpoint archive: one zip holding a JSON header and raw parameter bytes.

``header.json`` carries {config, epoch, seed} plus the ordered parameter
manifest (name and shape per entry); ``params.bin`` is the concatenation of
every parameter as little-endian float64 in manifest order. Round trips are
bit-exact: a loaded model produces outputs identical to the saved one.
"""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .encoder import FAEncoder
from .mae import MaskedAutoencoder
from .models import build_models

__all__ = ["save_checkpoint", "load_checkpoint"]

FORMAT_NAME = "famae-checkpoint"
FORMAT_VERSION = 1
_ZIP_DATE = (2000, 1, 1, 0, 0, 0)  # fixed so identical runs write identical bytes


class CheckpointError(ValueError):
    """Malformed or inconsistent checkpoint archive."""


def _named_params(fa: FAEncoder, mae: MaskedAutoencoder):
    for name, p in fa.named_parameters():
        yield f"fa.{name}", p
    for name, p in mae.named_parameters():
        yield f"mae.{name}", p


def save_checkpoint(
    path,
    fa: FAEncoder,
    mae: MaskedAutoencoder,
    config: dict,
    epoch: int,
    seed: int,
) -> None:
    manifest = []
    chunks = []
    for name, p in _named_params(fa, mae):
        manifest.append({"name": name, "shape": list(p.shape)})
        chunks.append(p.detach().cpu().numpy().astype("<f8").tobytes())
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": config,
        "epoch": int(epoch),
        "seed": int(seed),
        "params": manifest,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("header.json", date_time=_ZIP_DATE)
        zf.writestr(info, json.dumps(header, sort_keys=True, indent=2))
        info = zipfile.ZipInfo("params.bin", date_time=_ZIP_DATE)
        zf.writestr(info, b"".join(chunks))


def load_checkpoint(path) -> tuple[FAEncoder, MaskedAutoencoder, dict]:
    """Rebuild (fa, mae) from an archive; returns the header as third value."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        blob = zf.read("params.bin")
    if header.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path}: not a {FORMAT_NAME} archive")
    fa, mae = build_models(header["config"].get("model", {}))
    params = dict(_named_params(fa, mae))
    offset = 0
    for entry in header["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in params:
            raise CheckpointError(f"{path}: unknown parameter {name!r} in manifest")
        param = params.pop(name)
        if tuple(param.shape) != shape:
            raise CheckpointError(
                f"{path}: parameter {name!r} has shape {tuple(param.shape)}, "
                f"manifest says {shape}"
            )
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise CheckpointError(f"{path}: params.bin truncated at {name!r}")
        values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        with torch.no_grad():
            param.copy_(torch.from_numpy(values.reshape(shape).copy()))
        offset = end
    if params:
        raise CheckpointError(
            f"{path}: manifest missing parameter {sorted(params)[0]!r}"
        )
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes in params.bin")
    fa.eval()
    mae.eval()
    return fa, mae, header
