"""Downstream classification: full-model fine-tuning behind a sklearn API.

Signals are encoded channel by channel with the shared encoder; features are
the mean token per channel, concatenated across channels (for a single
channel this reduces to the plain average token). With the second encoder
retained, tokens from all channels are mixed by it before pooling — the
default for multimodal inputs when a pretrained second encoder is available,
while single-channel fine-tuning drops it. A linear head maps features to
class logits; every weight is trainable.
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import torch
from torch import nn
from sklearn.base import BaseEstimator, ClassifierMixin

from .checkpoint import load_checkpoint
from .data import standardize
from .encoder import FAEncoder
from .fourier import REAL_DTYPE
from .mae import MaskedAutoencoder
from .models import build_models, init_parameters
from .seeding import Streams, seed_torch

__all__ = ["SignalClassifier", "pooled_features", "ADAM_BETAS"]

ADAM_BETAS = (0.9, 0.99)


def pooled_features(
    fa: FAEncoder,
    mae: MaskedAutoencoder | None,
    x: torch.Tensor,
    use_second_encoder: bool,
    slots=None,
    n_slots: int | None = None,
) -> torch.Tensor:
    """Per-channel mean tokens of a [B, C, L] batch, concatenated.

    ``slots`` maps each input channel to its channel-embedding slot (and its
    block of the concatenated feature vector); slots absent from the input
    contribute zero features, which is how a model fine-tuned on ``n_slots``
    channels evaluates a smaller channel subset.
    """
    batch, n_chan, _ = x.shape
    if slots is None:
        slots = list(range(n_chan))
    if n_slots is None:
        n_slots = n_chan
    tokens = fa(standardize(x))  # [B, C, N, D]
    if use_second_encoder:
        if mae is None:
            raise ValueError("second encoder requested but absent")
        tokens = mae.mix_full(tokens, slots=slots)
    per_chan = tokens.mean(dim=-2)  # [B, C, D]
    if n_slots == 1:
        return per_chan[:, 0]
    out = per_chan.new_zeros(batch, n_slots, per_chan.shape[-1])
    out[:, torch.as_tensor(list(slots), dtype=torch.long)] = per_chan
    return out.reshape(batch, -1)


class SignalClassifier(ClassifierMixin, BaseEstimator):
    """Multi-channel time-series classifier, optionally warm-started.

    ``pretrained`` may be a checkpoint path, a fitted
    ``MaskedAutoencoderPretrainer``, or an ``(encoder, mae)`` pair; when
    given, the architecture comes from it and the arch parameters here are
    ignored. ``keep_second_encoder=None`` resolves to True exactly when the
    input is multi-channel and a pretrained second encoder exists.
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
        keep_second_encoder: bool | None = None,
        epochs: int = 80,
        batch_size: int = 64,
        lr: float = 1e-3,
        pretrained=None,
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
        self.keep_second_encoder = keep_second_encoder
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.pretrained = pretrained
        self.seed = seed

    # -- construction -----------------------------------------------------

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
        }

    def _resolve_models(self, streams: Streams):
        src = self.pretrained
        if src is None:
            fa, mae = build_models(self._model_config())
            init_parameters(fa, streams.get("init", "fa"))
            init_parameters(mae, streams.get("init", "mae"))
            return fa, mae, False
        if isinstance(src, (str, Path)):
            fa, mae, _ = load_checkpoint(src)
            return fa, mae, True
        if hasattr(src, "encoder_") and hasattr(src, "mae_"):
            return copy.deepcopy(src.encoder_), copy.deepcopy(src.mae_), True
        if isinstance(src, tuple) and len(src) == 2:
            return copy.deepcopy(src[0]), copy.deepcopy(src[1]), True
        raise TypeError(f"unsupported pretrained source: {type(src)!r}")

    # -- sklearn API -------------------------------------------------------

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(f"X must be [num, channels, length], got shape {X.shape}")
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError("y must be one label per sample")
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        num, n_chan, _ = X.shape

        streams = Streams(self.seed)
        fa, mae, warm = self._resolve_models(streams)
        use_enc2 = self.keep_second_encoder
        if use_enc2 is None:
            use_enc2 = warm and n_chan > 1
        if use_enc2 and n_chan > mae.max_channels:
            raise ValueError(
                f"{n_chan} channels exceed the {mae.max_channels} channel-embedding slots"
            )
        feat_width = fa.width if n_chan == 1 else n_chan * fa.width
        head = nn.Linear(feat_width, len(self.classes_), dtype=REAL_DTYPE)
        init_parameters(head, streams.get("init", "head"))

        self.encoder_ = fa
        self.mae_ = mae if use_enc2 else None
        self.head_ = head
        self.use_second_encoder_ = use_enc2
        self.n_channels_ = n_chan

        params = list(fa.parameters()) + list(head.parameters())
        if use_enc2:
            params += list(mae.parameters())
        opt = torch.optim.Adam(params, lr=self.lr, betas=ADAM_BETAS)
        seed_torch(streams.seed, "finetune")

        xt = torch.as_tensor(X, dtype=REAL_DTYPE)
        yt = torch.as_tensor(y_enc, dtype=torch.long)
        fa.train()
        if use_enc2:
            mae.train()
        head.train()
        curve = []
        for epoch in range(self.epochs):
            order = streams.get("shuffle", epoch).permutation(num)
            losses = []
            for start in range(0, num, self.batch_size):
                batch = torch.from_numpy(order[start : start + self.batch_size])
                logits = self._logits_tensor(xt[batch])
                loss = nn.functional.cross_entropy(logits, yt[batch])
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"fine-tuning diverged: non-finite loss at epoch {epoch}"
                    )
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(loss.detach().item())
            curve.append(float(np.mean(losses)))
        self.loss_curve_ = curve
        self._eval_mode()
        return self

    def _eval_mode(self):
        self.encoder_.eval()
        self.head_.eval()
        if self.mae_ is not None:
            self.mae_.eval()

    def _logits_tensor(self, xt: torch.Tensor, channel_slots=None) -> torch.Tensor:
        feats = pooled_features(
            self.encoder_,
            self.mae_,
            xt,
            use_second_encoder=self.use_second_encoder_,
            slots=channel_slots,
            n_slots=self.n_channels_,
        )
        return self.head_(feats)

    def decision_function(self, X, channel_slots=None) -> np.ndarray:
        """Class logits [num, n_classes]; ``channel_slots`` maps the input's
        channels onto the training-time channel slots (subset evaluation)."""
        xt = torch.as_tensor(np.asarray(X, dtype=np.float64), dtype=REAL_DTYPE)
        self._eval_mode()
        with torch.no_grad():
            return self._logits_tensor(xt, channel_slots).numpy()

    def predict_proba(self, X, channel_slots=None) -> np.ndarray:
        logits = torch.from_numpy(self.decision_function(X, channel_slots))
        return torch.softmax(logits, dim=-1).numpy()

    def predict(self, X, channel_slots=None) -> np.ndarray:
        logits = self.decision_function(X, channel_slots)
        return self.classes_[np.argmax(logits, axis=-1)]
