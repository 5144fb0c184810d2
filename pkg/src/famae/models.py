"""Model construction and deterministic parameter initialization."""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .encoder import FAEncoder
from .filters import INIT_STD, FrequencyFilterBank
from .mae import MaskedAutoencoder

__all__ = ["MODEL_DEFAULTS", "build_models", "init_parameters"]

MODEL_DEFAULTS = {
    "depth": 4,
    "width": 64,
    "heads": 8,
    "patch": 20,
    "mlp_dim": 128,
    "dropout": 0.2,
    "operator_kind": "query",
    "fa_on": True,
    "enc2_depth": 2,
    "dec_depth": 2,
    "attn_heads": 4,
    "max_channels": 8,
}


def build_models(cfg: dict | None = None) -> tuple[FAEncoder, MaskedAutoencoder]:
    """Encoder + masked autoencoder from a model-config dict (defaults filled)."""
    merged = dict(MODEL_DEFAULTS)
    if cfg:
        unknown = set(cfg) - set(MODEL_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown model config key {sorted(unknown)[0]!r}")
        merged.update(cfg)
    fa = FAEncoder(
        depth=merged["depth"],
        width=merged["width"],
        heads=merged["heads"],
        patch_size=merged["patch"],
        mlp_dim=merged["mlp_dim"],
        dropout=merged["dropout"],
        operator=merged["operator_kind"],
        frequency_mixing=merged["fa_on"],
    )
    mae = MaskedAutoencoder(
        width=merged["width"],
        patch_size=merged["patch"],
        enc_depth=merged["enc2_depth"],
        dec_depth=merged["dec_depth"],
        attn_heads=merged["attn_heads"],
        mlp_dim=merged["mlp_dim"],
        max_channels=merged["max_channels"],
        dropout=merged["dropout"],
    )
    return fa, mae


def _fill(param: torch.Tensor, values: np.ndarray) -> None:
    with torch.no_grad():
        param.copy_(torch.from_numpy(values.reshape(param.shape)))


def init_parameters(module: nn.Module, rng: np.random.Generator) -> None:
    """Re-initialize every parameter from a numpy stream, in definition order.

    Linear layers get the usual fan-in-scaled uniform init, filter banks and
    learned tokens/embeddings get N(0, 0.02), norms get identity. Drawing
    from numpy makes init bit-identical for a given seed on every platform.
    """
    for sub in module.modules():
        if isinstance(sub, nn.Linear):
            bound = 1.0 / math.sqrt(sub.in_features)
            _fill(sub.weight, rng.uniform(-bound, bound, size=tuple(sub.weight.shape)))
            if sub.bias is not None:
                _fill(sub.bias, rng.uniform(-bound, bound, size=tuple(sub.bias.shape)))
        elif isinstance(sub, nn.LayerNorm):
            with torch.no_grad():
                sub.weight.fill_(1.0)
                sub.bias.fill_(0.0)
        elif isinstance(sub, FrequencyFilterBank):
            _fill(sub.filters, rng.normal(0.0, INIT_STD, size=tuple(sub.filters.shape)))
            _fill(
                sub.query_weight,
                rng.normal(0.0, INIT_STD, size=tuple(sub.query_weight.shape)),
            )
        elif isinstance(sub, MaskedAutoencoder):
            _fill(sub.mask_token, rng.normal(0.0, INIT_STD, size=tuple(sub.mask_token.shape)))
            _fill(sub.chan_embed, rng.normal(0.0, INIT_STD, size=tuple(sub.chan_embed.shape)))
