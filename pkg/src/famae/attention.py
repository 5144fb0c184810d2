"""Standard multi-head self-attention, with inspectable attention matrices."""

from __future__ import annotations

import math

import torch
from torch import nn

from .fourier import REAL_DTYPE

__all__ = ["MultiHeadSelfAttention"]


class MultiHeadSelfAttention(nn.Module):
    """Self-attention over [..., T, D] with ``heads`` heads of dim D/heads.

    When ``record_attention`` is set, the row-softmaxed attention weights of
    the latest forward pass are kept in ``last_attention`` with shape
    [..., heads, T, T].
    """

    def __init__(self, width: int, heads: int):
        super().__init__()
        if width % heads != 0:
            raise ValueError(f"width {width} not divisible by heads {heads}")
        self.width = width
        self.heads = heads
        self.head_dim = width // heads
        kw = {"dtype": REAL_DTYPE}
        self.q_proj = nn.Linear(width, width, **kw)
        self.k_proj = nn.Linear(width, width, **kw)
        self.v_proj = nn.Linear(width, width, **kw)
        self.out_proj = nn.Linear(width, width, **kw)
        self.record_attention = False
        self.last_attention: torch.Tensor | None = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        *lead, t, d = x.shape
        shape = (*lead, t, self.heads, self.head_dim)
        q = self.q_proj(x).view(shape).transpose(-3, -2)  # [..., heads, T, hd]
        k = self.k_proj(x).view(shape).transpose(-3, -2)
        v = self.v_proj(x).view(shape).transpose(-3, -2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        attn = torch.softmax(scores, dim=-1)
        if self.record_attention:
            self.last_attention = attn.detach().clone()
        out = (attn @ v).transpose(-3, -2).reshape(*lead, t, d)
        return self.out_proj(out)

    def extra_repr(self) -> str:
        return f"width={self.width}, heads={self.heads}"
