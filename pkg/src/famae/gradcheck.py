"""Central finite-difference gradient checking for float64 modules."""

from __future__ import annotations

from typing import Callable, Iterable

import torch

__all__ = ["finite_difference_grad", "check_gradients"]


def finite_difference_grad(
    fn: Callable[[], torch.Tensor], param: torch.Tensor, eps: float = 1e-5
) -> torch.Tensor:
    """Central-difference gradient of the scalar ``fn()`` w.r.t. ``param``.

    ``param`` is perturbed in place one element at a time; ``fn`` must
    re-evaluate the full forward pass on each call.
    """
    grad = torch.zeros_like(param)
    flat = param.data.view(-1)
    gflat = grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = fn().item()
            flat[i] = orig - eps
            lo = fn().item()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def check_gradients(
    fn: Callable[[], torch.Tensor],
    params: Iterable[tuple[str, torch.Tensor]],
    eps: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-4,
) -> dict[str, float]:
    """Compare autograd gradients of ``fn()`` against central differences.

    Returns the per-parameter error ``||g_fd - g_auto|| / max(||g_fd||,
    ||g_auto||, floor)`` and raises ``AssertionError`` naming the first
    parameter above ``tol``. The floor makes parameters whose true gradient
    is exactly zero (e.g. a shift a downstream softmax cancels) compare
    absolutely instead of dividing finite-difference truncation noise by
    itself; real gradients at these scales sit orders of magnitude above it.
    """
    params = list(params)
    for _, p in params:
        p.grad = None
    loss = fn()
    loss.backward()
    errors: dict[str, float] = {}
    with torch.no_grad():
        for name, p in params:
            auto = p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
            fd = finite_difference_grad(fn, p, eps=eps)
            denom = max(fd.norm().item(), auto.norm().item(), floor)
            err = (fd - auto).norm().item() / denom
            errors[name] = err
            if err > tol:
                raise AssertionError(
                    f"gradient mismatch for {name}: relative error {err:.3e} > {tol:.1e}"
                )
    return errors
