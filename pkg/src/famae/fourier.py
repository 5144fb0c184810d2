"""Discrete Fourier transforms along a chosen axis, and the training contract.

All tensors are torch float64 / complex128. ``dft``/``idft`` are the full
complex transforms (``idft`` carries the 1/N factor); ``rdft``/``irdft`` are
the real-input specializations that keep only the first ``N//2 + 1`` bins,
the rest being conjugate-symmetric redundancies. All four are exact adjoints
under autograd, so gradients through them are exact up to rounding.

``backward`` is the reverse-mode entry point: given a scalar loss produced by
a graph over tensors with ``requires_grad`` set, it fills ``.grad`` on every
participating leaf. Complex parameters are stored as (re, im) float pairs
throughout the package, so their gradients are with respect to the real
components.
"""

from __future__ import annotations

import torch

__all__ = ["dft", "idft", "rdft", "irdft", "backward"]

REAL_DTYPE = torch.float64
COMPLEX_DTYPE = torch.complex128


def _check_axis(x: torch.Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise IndexError(f"axis {axis} out of range for rank-{x.ndim} tensor")
    return axis % x.ndim


def dft(x: torch.Tensor, axis: int) -> torch.Tensor:
    """Full DFT along ``axis``: z_k = sum_n x_n exp(-i 2pi k n / N)."""
    axis = _check_axis(x, axis)
    return torch.fft.fft(x.to(COMPLEX_DTYPE), dim=axis)


def idft(z: torch.Tensor, axis: int) -> torch.Tensor:
    """Inverse DFT along ``axis``, including the 1/N factor."""
    axis = _check_axis(z, axis)
    return torch.fft.ifft(z.to(COMPLEX_DTYPE), dim=axis)


def rdft(x: torch.Tensor, axis: int) -> torch.Tensor:
    """DFT of a real tensor, keeping the first ``N//2 + 1`` bins."""
    axis = _check_axis(x, axis)
    if x.is_complex():
        raise TypeError("rdft expects a real tensor")
    return torch.fft.rfft(x.to(REAL_DTYPE), dim=axis)


def irdft(z: torch.Tensor, axis: int, n_out: int) -> torch.Tensor:
    """Inverse of :func:`rdft` back to ``n_out`` real samples.

    The extent along ``axis`` must equal ``n_out // 2 + 1``; the imaginary
    parts of the DC (and, for even ``n_out``, Nyquist) bins are ignored, as
    conjugate symmetry requires them to be zero.
    """
    axis = _check_axis(z, axis)
    if n_out < 1:
        raise ValueError(f"n_out must be >= 1, got {n_out}")
    expected = n_out // 2 + 1
    if z.shape[axis] != expected:
        raise ValueError(
            f"extent {z.shape[axis]} along axis {axis} does not match "
            f"n_out={n_out} (expected {expected} half-spectrum bins)"
        )
    return torch.fft.irfft(z.to(COMPLEX_DTYPE), n=n_out, dim=axis)


def backward(loss: torch.Tensor) -> None:
    """Reverse-mode pass: fill ``.grad`` of every leaf that produced ``loss``.

    ``loss`` must be a real scalar. Calling twice on the same graph raises,
    as the graph is consumed by the pass.
    """
    if loss.numel() != 1:
        raise ValueError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    if loss.is_complex():
        raise TypeError("loss must be real")
    loss.backward()
