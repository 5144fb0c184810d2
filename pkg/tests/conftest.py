import numpy as np
import pytest
import torch

from famae.models import build_models, init_parameters
from famae.seeding import substream

TINY_MODEL = {
    "depth": 2,
    "width": 16,
    "heads": 4,
    "patch": 5,
    "mlp_dim": 32,
    "dropout": 0.0,
    "enc2_depth": 1,
    "dec_depth": 1,
    "attn_heads": 2,
    "max_channels": 4,
}


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_models():
    fa, mae = build_models(TINY_MODEL)
    init_parameters(fa, substream(7, "init", "fa"))
    init_parameters(mae, substream(7, "init", "mae"))
    fa.eval()
    mae.eval()
    return fa, mae


def brute_dft(x: np.ndarray) -> np.ndarray:
    """Direct O(N^2) summation z_k = sum_n x_n exp(-i 2pi k n / N)."""
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ np.asarray(x, dtype=np.complex128)


def brute_idft(z: np.ndarray) -> np.ndarray:
    """Direct O(N^2) inverse summation with the 1/N factor."""
    n = len(z)
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) @ np.asarray(z, dtype=np.complex128) / n


def rel_err(got, want) -> float:
    got = np.asarray(got)
    want = np.asarray(want)
    denom = max(float(np.max(np.abs(want))), 1e-300)
    return float(np.max(np.abs(got - want))) / denom


def to_t(x) -> torch.Tensor:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return torch.as_tensor(x, dtype=torch.complex128)
    return torch.as_tensor(x, dtype=torch.float64)


def npy(t: torch.Tensor) -> np.ndarray:
    return t.detach().numpy()
