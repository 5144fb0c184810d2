"""Patchify + embed + stacked frequency-aware blocks.

One encoder instance handles signals of any length: a length-L signal is cut
into N = ceil(L/P) non-overlapping patches (right-padded with zeros to a
multiple of P), each patch embedded by a small MLP, and the token sequence
run through ``depth`` residual blocks whose token mixer is the frequency
filter bank (or, for the ablation variant, plain self-attention). No
positional embedding is added here: the DFT along the token axis is itself
position-sensitive.

The block follows

    out = u + FF(norm2(u)),  u = x + Mix(norm1(x))

i.e. the mixer-plus-feedforward residual composition with pre-normalization.
"""

from __future__ import annotations

import torch
from torch import nn

from .attention import MultiHeadSelfAttention
from .filters import FrequencyFilterBank
from .fourier import REAL_DTYPE

__all__ = ["patchify", "PatchEmbed", "FeedForward", "Block", "FAEncoder"]

ATTN_HEAD_DIM = 16  # head size for the self-attention alternative mixer


def patchify(signal: torch.Tensor, patch_size: int) -> torch.Tensor:
    """Cut [..., L] into [..., N, P] non-overlapping patches.

    L is right-padded with zeros to the next multiple of ``patch_size``;
    N = ceil(L / P). Empty signals are rejected.
    """
    if patch_size < 1:
        raise ValueError(f"patch_size must be >= 1, got {patch_size}")
    length = signal.shape[-1]
    if length < 1:
        raise ValueError("cannot patchify an empty signal")
    n_patches = -(-length // patch_size)
    pad = n_patches * patch_size - length
    if pad:
        signal = torch.nn.functional.pad(signal, (0, pad))
    return signal.reshape(*signal.shape[:-1], n_patches, patch_size)


class PatchEmbed(nn.Module):
    """Row-wise MLP taking each length-P patch to a D-dim token."""

    def __init__(self, patch_size: int, width: int):
        super().__init__()
        self.patch_size = patch_size
        self.net = nn.Sequential(
            nn.Linear(patch_size, width, dtype=REAL_DTYPE),
            nn.GELU(),
            nn.Linear(width, width, dtype=REAL_DTYPE),
        )

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        if patches.shape[-1] != self.patch_size:
            raise ValueError(
                f"patch width {patches.shape[-1]} does not match configured "
                f"patch_size {self.patch_size}"
            )
        return self.net(patches)


class FeedForward(nn.Module):
    def __init__(self, width: int, hidden: int, dropout: float = 0.0):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(width, hidden, dtype=REAL_DTYPE),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(hidden, width, dtype=REAL_DTYPE),
            nn.Dropout(dropout),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class Block(nn.Module):
    """Residual block: token mixer plus feedforward, pre-normalized."""

    def __init__(self, mixer: nn.Module, width: int, mlp_dim: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(width, dtype=REAL_DTYPE)
        self.mixer = mixer
        self.drop = nn.Dropout(dropout)
        self.norm2 = nn.LayerNorm(width, dtype=REAL_DTYPE)
        self.ff = FeedForward(width, mlp_dim, dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        u = x + self.drop(self.mixer(self.norm1(x)))
        return u + self.ff(self.norm2(u))


class FAEncoder(nn.Module):
    """Shared-weight encoder applied to one channel at a time.

    Input [..., L] -> tokens [..., N, D]. ``frequency_mixing=False`` swaps
    the filter-bank mixer for self-attention of matched width, which is the
    only difference between the two variants.
    """

    def __init__(
        self,
        depth: int = 4,
        width: int = 64,
        heads: int = 8,
        patch_size: int = 20,
        mlp_dim: int = 128,
        dropout: float = 0.2,
        operator: str = "query",
        frequency_mixing: bool = True,
    ):
        super().__init__()
        self.depth = depth
        self.width = width
        self.heads = heads
        self.patch_size = patch_size
        self.mlp_dim = mlp_dim
        self.dropout = dropout
        self.operator = operator
        self.frequency_mixing = frequency_mixing
        self.embed = PatchEmbed(patch_size, width)
        self.blocks = nn.ModuleList(
            Block(self._make_mixer(), width, mlp_dim, dropout) for _ in range(depth)
        )
        self.norm = nn.LayerNorm(width, dtype=REAL_DTYPE)

    def _make_mixer(self) -> nn.Module:
        if self.frequency_mixing:
            return FrequencyFilterBank(self.heads, self.width, self.operator)
        return MultiHeadSelfAttention(self.width, max(1, self.width // ATTN_HEAD_DIM))

    def forward_tokens(self, tokens: torch.Tensor) -> torch.Tensor:
        """Run already-embedded tokens [..., N, D] through the blocks."""
        for block in self.blocks:
            tokens = block(tokens)
        return self.norm(tokens)

    def forward(self, signal: torch.Tensor) -> torch.Tensor:
        return self.forward_tokens(self.embed(patchify(signal, self.patch_size)))

    encode = forward
