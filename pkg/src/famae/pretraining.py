"""Self-supervised pretraining loop behind a sklearn transformer API.

``fit`` runs masked-autoencoding epochs over an unlabeled [num, C, L] array:
standardize, encode every channel in full, mask latent tokens per channel,
reconstruct, Adam step. ``transform`` returns pooled features for downstream
use. Checkpoints round-trip bit-exactly via :mod:`famae.checkpoint`.
"""

from __future__ import annotations

import logging

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin

from .checkpoint import load_checkpoint, save_checkpoint
from .classification import ADAM_BETAS, pooled_features
from .fourier import REAL_DTYPE
from .mae import MaskSpec, mae_forward, mae_loss, reconstruction_targets
from .models import build_models, init_parameters
from .seeding import Streams, seed_torch

__all__ = ["MaskedAutoencoderPretrainer"]

logger = logging.getLogger(__name__)


class MaskedAutoencoderPretrainer(TransformerMixin, BaseEstimator):
    """Frequency-maintain masked-autoencoder pretraining.

    ``latent_masking=False`` switches to conventional time-domain masking
    (the encoder sees only kept patches) — the frequency-maintain ablation.
    ``frequency_mixing=False`` swaps the encoder's token mixer for
    self-attention — the frequency-aware ablation.
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
        enc2_depth: int = 2,
        dec_depth: int = 2,
        attn_heads: int = 4,
        max_channels: int = 8,
        mask_ratio: float = 0.5,
        latent_masking: bool = True,
        epochs: int = 200,
        batch_size: int = 128,
        lr: float = 1e-3,
        seed: int = 0,
    ):
        self.depth = depth
        self.width = width
        self.heads = heads
        self.patch_size = patch_size
        self.mlp_dim = mlp_dim
        self.dropout = dropout
        self.operator = operator
        self.frequency_mixing = frequency_mixing
        self.enc2_depth = enc2_depth
        self.dec_depth = dec_depth
        self.attn_heads = attn_heads
        self.max_channels = max_channels
        self.mask_ratio = mask_ratio
        self.latent_masking = latent_masking
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _model_config(self) -> dict:
        return {
            "depth": self.depth,
            "width": self.width,
            "heads": self.heads,
            "patch": self.patch_size,
            "mlp_dim": self.mlp_dim,
            "dropout": self.dropout,
            "operator_kind": self.operator,
            "fa_on": self.frequency_mixing,
            "enc2_depth": self.enc2_depth,
            "dec_depth": self.dec_depth,
            "attn_heads": self.attn_heads,
            "max_channels": self.max_channels,
        }

    def fit(self, X, y=None, channel_names=None):
        """Pretrain on unlabeled signals [num, channels, length]."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(f"X must be [num, channels, length], got shape {X.shape}")
        num, n_chan, _ = X.shape
        if n_chan < 1:
            raise ValueError("pretraining needs at least one channel")
        if n_chan > self.max_channels:
            raise ValueError(
                f"{n_chan} channels exceed the {self.max_channels} channel-embedding slots"
            )

        streams = Streams(self.seed)
        fa, mae = build_models(self._model_config())
        init_parameters(fa, streams.get("init", "fa"))
        init_parameters(mae, streams.get("init", "mae"))
        seed_torch(streams.seed, "pretrain")
        spec = MaskSpec(self.mask_ratio)
        opt = torch.optim.Adam(
            list(fa.parameters()) + list(mae.parameters()), lr=self.lr, betas=ADAM_BETAS
        )

        xt = torch.as_tensor(X, dtype=REAL_DTYPE)
        fa.train()
        mae.train()
        curve = []
        for epoch in range(self.epochs):
            order = streams.get("shuffle", epoch).permutation(num)
            losses = []
            for step, start in enumerate(range(0, num, self.batch_size)):
                batch = torch.from_numpy(order[start : start + self.batch_size])
                xb = xt[batch]
                rng = streams.get("mask", epoch, step)
                recon, masks = mae_forward(
                    xb, fa, mae, spec, rng,
                    time_domain_masking=not self.latent_masking,
                )
                loss = mae_loss(recon, reconstruction_targets(xb, fa.patch_size), masks)
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"pretraining diverged: non-finite loss at epoch {epoch}, step {step}"
                    )
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(loss.detach().item())
            curve.append(float(np.mean(losses)))
            logger.debug("pretrain epoch %d: loss %.6f", epoch, curve[-1])
        fa.eval()
        mae.eval()
        self.encoder_ = fa
        self.mae_ = mae
        self.loss_curve_ = curve
        self.n_channels_ = n_chan
        self.channel_names_ = list(channel_names) if channel_names else None
        self.epochs_run_ = self.epochs
        return self

    def transform(self, X, use_second_encoder: bool | None = None) -> np.ndarray:
        """Pooled features [num, D] (one channel) or [num, C*D].

        By default the second encoder is applied exactly when the input is
        multi-channel.
        """
        X = np.asarray(X, dtype=np.float64)
        if use_second_encoder is None:
            use_second_encoder = X.shape[1] > 1
        xt = torch.as_tensor(X, dtype=REAL_DTYPE)
        self.encoder_.eval()
        self.mae_.eval()
        with torch.no_grad():
            feats = pooled_features(
                self.encoder_, self.mae_, xt, use_second_encoder=use_second_encoder
            )
        return feats.numpy()

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        config = {
            "model": self._model_config(),
            "pretrain": {
                "mask_ratio": self.mask_ratio,
                "latent_masking": self.latent_masking,
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "lr": self.lr,
            },
            "channels": self.channel_names_,
        }
        save_checkpoint(path, self.encoder_, self.mae_, config, self.epochs_run_, self.seed)

    @classmethod
    def from_checkpoint(cls, path) -> "MaskedAutoencoderPretrainer":
        fa, mae, header = load_checkpoint(path)
        cfg = header["config"]
        model = cfg.get("model", {})
        pre = cfg.get("pretrain", {})
        est = cls(
            depth=model.get("depth", 4),
            width=model.get("width", 64),
            heads=model.get("heads", 8),
            patch_size=model.get("patch", 20),
            mlp_dim=model.get("mlp_dim", 128),
            dropout=model.get("dropout", 0.2),
            operator=model.get("operator_kind", "query"),
            frequency_mixing=model.get("fa_on", True),
            enc2_depth=model.get("enc2_depth", 2),
            dec_depth=model.get("dec_depth", 2),
            attn_heads=model.get("attn_heads", 4),
            max_channels=model.get("max_channels", 8),
            mask_ratio=pre.get("mask_ratio", 0.5),
            latent_masking=pre.get("latent_masking", True),
            epochs=pre.get("epochs", 200),
            batch_size=pre.get("batch_size", 128),
            lr=pre.get("lr", 1e-3),
            seed=header.get("seed", 0),
        )
        est.encoder_ = fa
        est.mae_ = mae
        est.loss_curve_ = []
        est.n_channels_ = None
        est.channel_names_ = cfg.get("channels")
        est.epochs_run_ = header.get("epoch", 0)
        return est
