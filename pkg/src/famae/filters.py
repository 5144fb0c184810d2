"""Multi-head frequency filter layer: the token mixer.

A bank holds H learnable complex filters of width D (stored as (re, im)
float64 pairs) plus a real query matrix. Mixing a token sequence means: DFT
along the token axis, modulate the half spectrum with the bank, inverse DFT
back. The bank's size is independent of the sequence length, which is what
makes one trained layer applicable to inputs of any length or sampling rate.

Two modulation operators exist:

* ``query``: data-dependent head combination. Queries Q = Re(Z) W weight the
  filters, M = Q K, and the spectrum is modulated elementwise, Z * M. This
  equals a weighted sum over heads of the per-head modulated spectra, with
  the weights generated from the data itself.
* ``maxpool``: per frequency bin and feature, apply the head whose modulated
  value has the largest modulus, keeping that complex value (phase intact).
  Ties resolve to the smallest head index. Gradients flow only through the
  selected head.
"""

from __future__ import annotations

import torch
from torch import nn

from .fourier import REAL_DTYPE, irdft, rdft

__all__ = [
    "FrequencyFilterBank",
    "apply_query_filter",
    "apply_maxpool_filter",
    "freq_layer_forward",
]

OPERATOR_KINDS = ("query", "maxpool")
INIT_STD = 0.02


class FrequencyFilterBank(nn.Module):
    """H complex filters over D features, plus the query matrix.

    Parameters live as float64: ``filters`` is [H, D, 2] (re, im) and
    ``query_weight`` is [D, H]. ``heads`` and ``width`` fix the parameter
    count; no parameter depends on the token count.
    """

    def __init__(self, heads: int, width: int, operator: str = "query"):
        super().__init__()
        if operator not in OPERATOR_KINDS:
            raise ValueError(f"operator must be one of {OPERATOR_KINDS}, got {operator!r}")
        if heads < 1 or width < 1:
            raise ValueError("heads and width must be >= 1")
        self.heads = heads
        self.width = width
        self.operator = operator
        self.filters = nn.Parameter(torch.randn(heads, width, 2, dtype=REAL_DTYPE) * INIT_STD)
        self.query_weight = nn.Parameter(torch.randn(width, heads, dtype=REAL_DTYPE) * INIT_STD)

    def complex_filters(self) -> torch.Tensor:
        """The filters as a complex [H, D] view."""
        return torch.view_as_complex(self.filters)

    def modulate(self, z: torch.Tensor) -> torch.Tensor:
        if self.operator == "query":
            return apply_query_filter(z, self)
        return apply_maxpool_filter(z, self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return freq_layer_forward(x, self)

    def extra_repr(self) -> str:
        return f"heads={self.heads}, width={self.width}, operator={self.operator}"


def _check_width(z: torch.Tensor, bank: FrequencyFilterBank) -> None:
    if z.shape[-1] != bank.width:
        raise ValueError(
            f"feature width {z.shape[-1]} does not match bank width {bank.width}"
        )


def apply_query_filter(z: torch.Tensor, bank: FrequencyFilterBank) -> torch.Tensor:
    """Query-operator modulation of a spectrum z [..., N_f, D].

    Q = Re(z) W, M = Q K, output = z * M elementwise.
    """
    if bank.operator != "query":
        raise ValueError(f"bank operator is {bank.operator!r}, expected 'query'")
    _check_width(z, bank)
    queries = z.real @ bank.query_weight  # [..., N_f, H]
    mod = torch.complex(queries @ bank.filters[..., 0], queries @ bank.filters[..., 1])
    return z * mod


def apply_maxpool_filter(z: torch.Tensor, bank: FrequencyFilterBank) -> torch.Tensor:
    """Max-pool modulation: keep, per (bin, feature), the head of maximal modulus."""
    if bank.operator != "maxpool":
        raise ValueError(f"bank operator is {bank.operator!r}, expected 'maxpool'")
    _check_width(z, bank)
    per_head = z.unsqueeze(-2) * bank.complex_filters()  # [..., N_f, H, D]
    _, best = per_head.abs().max(dim=-2, keepdim=True)  # first max wins ties
    return torch.take_along_dim(per_head, best, dim=-2).squeeze(-2)


def freq_layer_forward(x: torch.Tensor, bank: FrequencyFilterBank) -> torch.Tensor:
    """Mix tokens of a real sequence x [..., N, D] through the filter bank.

    DFT along the token axis (half spectrum, the input being real), modulate,
    inverse DFT back to N tokens. Output shape equals input shape for any N
    with the same bank parameters.
    """
    n_tokens = x.shape[-2]
    z = rdft(x, axis=-2)
    z = bank.modulate(z)
    return irdft(z, axis=-2, n_out=n_tokens)
