"""Frequency-maintain masked autoencoding in latent space.

The shared encoder always consumes full, unmasked sequences, channel by
channel; masking happens afterwards, on the latent tokens. Kept tokens from
all channels (with sinusoidal position and learned channel embeddings added)
are concatenated and run through a lightweight second transformer encoder;
the full token grid is then rebuilt with a learned mask token at masked
slots, decoded by a lightweight transformer, and a linear head predicts the
original (standardized) patch behind every token. The loss is the mean over
masked tokens, the union across channels, of the per-patch MSE; unmasked
positions contribute exactly nothing.

The conventional time-domain-masking variant (used as an ablation) differs
in exactly one respect: the shared encoder sees only the kept patches.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .attention import MultiHeadSelfAttention
from .data import standardize
from .encoder import Block, FAEncoder, patchify
from .fourier import REAL_DTYPE

__all__ = [
    "MaskSpec",
    "sample_mask",
    "sinusoidal_positions",
    "MaskedAutoencoder",
    "mae_forward",
    "mae_loss",
    "reconstruction_targets",
]

logger = logging.getLogger(__name__)


@dataclass
class MaskSpec:
    """Masking ratio in [0, 1); draws are independent per channel."""

    ratio: float = 0.5
    per_channel_independent: bool = True

    def __post_init__(self):
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError(f"mask ratio must be in [0, 1), got {self.ratio}")
        if not self.per_channel_independent:
            raise ValueError("per-channel independent masking is the only supported mode")


def sample_mask(n_tokens: int, spec: MaskSpec, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of the round(ratio * n_tokens) masked tokens.

    Uniform without replacement; at least one token must remain kept.
    """
    if n_tokens < 1:
        raise ValueError("n_tokens must be >= 1")
    n_masked = int(round(spec.ratio * n_tokens))
    if n_tokens - n_masked < 1:
        raise ValueError(
            f"ratio {spec.ratio} leaves no kept tokens out of {n_tokens}"
        )
    if n_masked == 0:
        return np.empty(0, dtype=np.int64)
    return np.sort(rng.choice(n_tokens, size=n_masked, replace=False)).astype(np.int64)


def sinusoidal_positions(n: int, width: int) -> torch.Tensor:
    """Fixed sin/cos position table [n, width]."""
    pos = torch.arange(n, dtype=REAL_DTYPE).unsqueeze(1)
    half = torch.arange(0, width, 2, dtype=REAL_DTYPE)
    div = torch.exp(-half * math.log(10000.0) / width)
    table = torch.zeros(n, width, dtype=REAL_DTYPE)
    table[:, 0::2] = torch.sin(pos * div)
    table[:, 1::2] = torch.cos(pos * div[: width // 2])
    return table


class MaskedAutoencoder(nn.Module):
    """Lightweight second encoder + decoder around the latent token grid."""

    def __init__(
        self,
        width: int = 64,
        patch_size: int = 20,
        enc_depth: int = 2,
        dec_depth: int = 2,
        attn_heads: int = 4,
        mlp_dim: int = 128,
        max_channels: int = 8,
        dropout: float = 0.0,
    ):
        super().__init__()
        self.width = width
        self.patch_size = patch_size
        self.max_channels = max_channels
        self.mask_token = nn.Parameter(torch.randn(width, dtype=REAL_DTYPE) * 0.02)
        self.chan_embed = nn.Parameter(torch.randn(max_channels, width, dtype=REAL_DTYPE) * 0.02)
        self.enc_blocks = nn.ModuleList(
            Block(MultiHeadSelfAttention(width, attn_heads), width, mlp_dim, dropout)
            for _ in range(enc_depth)
        )
        self.enc_norm = nn.LayerNorm(width, dtype=REAL_DTYPE)
        self.dec_blocks = nn.ModuleList(
            Block(MultiHeadSelfAttention(width, attn_heads), width, mlp_dim, dropout)
            for _ in range(dec_depth)
        )
        self.dec_norm = nn.LayerNorm(width, dtype=REAL_DTYPE)
        self.recon_head = nn.Linear(width, patch_size, dtype=REAL_DTYPE)
        self.last_enc_attention: list[torch.Tensor] | None = None

    def _check_slots(self, slots) -> torch.Tensor:
        slots = torch.as_tensor(list(slots), dtype=torch.long)
        if slots.numel() and int(slots.max()) >= self.max_channels:
            raise ValueError(
                f"channel slot {int(slots.max())} exceeds the configured "
                f"{self.max_channels} channel-embedding slots"
            )
        return slots

    def encode_visible(
        self,
        kept_tokens: list[torch.Tensor],
        kept_idx: list[np.ndarray],
        slots,
        record_attention: bool = False,
    ) -> torch.Tensor:
        """Second-encoder pass over the kept tokens of every channel.

        ``kept_tokens[c]`` is [B, K_c, D] with original patch indices
        ``kept_idx[c]``; returns the concatenation [B, sum K_c, D].
        """
        slots = self._check_slots(slots)
        n_max = max(int(idx.max()) + 1 if len(idx) else 1 for idx in kept_idx)
        pos = sinusoidal_positions(n_max, self.width)
        parts = []
        for tok, idx, slot in zip(kept_tokens, kept_idx, slots):
            parts.append(tok + pos[torch.as_tensor(idx, dtype=torch.long)] + self.chan_embed[slot])
        x = torch.cat(parts, dim=-2)
        attn = []
        for block in self.enc_blocks:
            block.mixer.record_attention = record_attention
            x = block(x)
            if record_attention:
                attn.append(block.mixer.last_attention)
            block.mixer.record_attention = False
        self.last_enc_attention = attn if record_attention else None
        return self.enc_norm(x)

    def decode(
        self,
        visible: torch.Tensor,
        kept_idx: list[np.ndarray],
        masked_idx: list[np.ndarray],
        n_patches: int,
        slots,
    ) -> torch.Tensor:
        """Rebuild the [B, C, N, D] grid (mask tokens at masked slots) and decode."""
        slots = self._check_slots(slots)
        n_chan = len(kept_idx)
        batch = visible.shape[0]
        grid = self.mask_token.expand(batch, n_chan, n_patches, self.width).clone()
        offset = 0
        for c, idx in enumerate(kept_idx):
            take = torch.as_tensor(idx, dtype=torch.long)
            grid[:, c, take] = visible[:, offset : offset + len(idx)]
            offset += len(idx)
        pos = sinusoidal_positions(n_patches, self.width)
        grid = grid + pos + self.chan_embed[slots].unsqueeze(-2)
        x = grid.reshape(batch, n_chan * n_patches, self.width)
        for block in self.dec_blocks:
            x = block(x)
        x = self.dec_norm(x)
        return x.reshape(batch, n_chan, n_patches, self.width)

    def forward(
        self,
        kept_tokens: list[torch.Tensor],
        kept_idx: list[np.ndarray],
        masked_idx: list[np.ndarray],
        n_patches: int,
        slots=None,
        record_attention: bool = False,
    ) -> torch.Tensor:
        """Kept latent tokens -> reconstructed patches [B, C, N, P]."""
        if slots is None:
            slots = range(len(kept_tokens))
        visible = self.encode_visible(kept_tokens, kept_idx, slots, record_attention)
        decoded = self.decode(visible, kept_idx, masked_idx, n_patches, slots)
        return self.recon_head(decoded)

    def mix_full(
        self, tokens: torch.Tensor, slots=None, record_attention: bool = False
    ) -> torch.Tensor:
        """Second-encoder pass over the full unmasked grid [B, C, N, D]."""
        batch, n_chan, n_patches, _ = tokens.shape
        if slots is None:
            slots = range(n_chan)
        all_idx = [np.arange(n_patches)] * n_chan
        kept = [tokens[:, c] for c in range(n_chan)]
        out = self.encode_visible(kept, all_idx, slots, record_attention)
        return out.reshape(batch, n_chan, n_patches, self.width)


def reconstruction_targets(signals, patch_size: int) -> torch.Tensor:
    """Standardized, patchified signals [B, C, L] -> [B, C, N, P]."""
    x = torch.as_tensor(np.asarray(signals), dtype=REAL_DTYPE)
    return patchify(standardize(x), patch_size)


def mae_forward(
    signals,
    fa: FAEncoder,
    mae: MaskedAutoencoder,
    spec: MaskSpec,
    rng: np.random.Generator,
    time_domain_masking: bool = False,
    record_attention: bool = False,
) -> tuple[torch.Tensor, list[np.ndarray]]:
    """One masked-autoencoding pass over a [B, C, L] batch.

    Returns the reconstructed patches [B, C, N, P] and the per-channel masked
    index sets (drawn from channel-indexed substreams of ``rng``). With
    ``time_domain_masking`` the shared encoder sees only kept patches
    (conventional masking); otherwise it always sees the full sequence.
    """
    targets = reconstruction_targets(signals, fa.patch_size)
    batch, n_chan, n_patches, _ = targets.shape
    if n_chan > mae.max_channels:
        raise ValueError(
            f"{n_chan} channels exceed the configured {mae.max_channels} slots"
        )
    chan_rngs = rng.spawn(n_chan)
    masked_idx = [sample_mask(n_patches, spec, r) for r in chan_rngs]
    kept_idx = [np.setdiff1d(np.arange(n_patches), m) for m in masked_idx]
    if time_domain_masking:
        kept_tokens = [
            fa.forward_tokens(fa.embed(targets[:, c, kept_idx[c]])) for c in range(n_chan)
        ]
    else:
        tokens = fa.forward_tokens(fa.embed(targets))  # full sequences, per channel
        kept_tokens = [tokens[:, c, kept_idx[c]] for c in range(n_chan)]
    recon = mae(kept_tokens, kept_idx, masked_idx, n_patches,
                record_attention=record_attention)
    return recon, masked_idx


def mae_loss(
    recon: torch.Tensor, targets: torch.Tensor, masked_idx: list[np.ndarray]
) -> torch.Tensor:
    """Mean over masked tokens (union across channels) of per-patch MSE.

    Per-token MSE averages over patch elements first, then over the union and
    the batch. An empty union yields a graph-connected zero (warned once per
    call) so an optimizer step is still a no-op rather than an error.
    """
    n_masked = sum(len(m) for m in masked_idx)
    if n_masked == 0:
        logger.warning("mae_loss: empty masked set, loss defined as 0")
        return recon.sum() * 0.0
    per_token = ((recon - targets) ** 2).mean(dim=-1)  # [B, C, N]
    total = per_token.new_zeros(())
    for c, m in enumerate(masked_idx):
        if len(m):
            total = total + per_token[:, c, torch.as_tensor(m, dtype=torch.long)].mean(0).sum()
    return total / n_masked
