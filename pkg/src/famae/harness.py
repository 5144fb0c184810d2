"""Experiment surface: fine-tuning, evaluation, ablations, modality
mismatch, attention export and parameter/FLOP accounting.

Every experiment derives its randomness from one seed through named
substreams; mismatch rows key their substream by the row's channel names, so
re-running an identical channel set reproduces the identical result (an
identity substitution has delta exactly zero).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import torch

from .classification import SignalClassifier
from .data import DatasetBundle, standardize
from .encoder import FAEncoder
from .mae import MaskedAutoencoder
from .metrics import Metrics, evaluate_predictions
from .seeding import Streams

__all__ = [
    "finetune",
    "evaluate",
    "run_ablation_cell",
    "modality_substitution",
    "modality_dropout",
    "export_attention",
    "count_params",
    "count_flops",
    "flops_freq_layer",
    "write_csv",
    "write_json",
]


# ---------------------------------------------------------------------------
# fine-tuning and evaluation


def finetune(
    pretrained,
    target: DatasetBundle,
    seed: int = 0,
    epochs: int = 80,
    batch_size: int = 64,
    lr: float = 1e-3,
    keep_second_encoder: bool | None = None,
    model_config: dict | None = None,
) -> tuple[SignalClassifier, Metrics]:
    """Fine-tune on the target's train split, evaluate on its test split.

    ``pretrained`` may be None (training from scratch); ``model_config``
    then fixes the fresh architecture.
    """
    arch = dict(model_config or {})
    clf = SignalClassifier(
        depth=arch.get("depth", 4),
        width=arch.get("width", 64),
        heads=arch.get("heads", 8),
        patch_size=arch.get("patch", 20),
        mlp_dim=arch.get("mlp_dim", 128),
        dropout=arch.get("dropout", 0.2),
        operator=arch.get("operator_kind", "query"),
        frequency_mixing=arch.get("fa_on", True),
        keep_second_encoder=keep_second_encoder,
        epochs=epochs,
        batch_size=batch_size,
        lr=lr,
        pretrained=pretrained,
        seed=seed,
    )
    x_train, y_train = target.split("train")
    clf.fit(x_train, y_train)
    return clf, evaluate(clf, target, "test")


def evaluate(
    clf: SignalClassifier,
    bundle: DatasetBundle,
    split: str = "test",
    channel_slots=None,
) -> Metrics:
    x, y = bundle.split(split)
    if len(y) == 0:
        raise ValueError(f"split {split!r} is empty")
    pred = clf.predict(x, channel_slots=channel_slots)
    return evaluate_predictions(y, pred, bundle.n_classes)


def run_ablation_cell(
    pretrain_bundle: DatasetBundle,
    target: DatasetBundle,
    fa_on: bool,
    fm_on: bool,
    seed: int = 0,
    pretrain_kwargs: dict | None = None,
    finetune_kwargs: dict | None = None,
) -> Metrics:
    """One cell of the {frequency mixing} x {latent masking} grid.

    Each toggle changes exactly one code path: ``fa_on`` picks the encoder's
    token mixer, ``fm_on`` picks where masking happens.
    """
    from .pretraining import MaskedAutoencoderPretrainer

    pk = dict(pretrain_kwargs or {})
    fk = dict(finetune_kwargs or {})
    pre = MaskedAutoencoderPretrainer(
        frequency_mixing=fa_on, latent_masking=fm_on, seed=seed, **pk
    )
    pre.fit(pretrain_bundle.split("train")[0], channel_names=pretrain_bundle.channels)
    _, metrics = finetune(pre, target, seed=seed, **fk)
    return metrics


# ---------------------------------------------------------------------------
# modality mismatch


def _row_seed(seed: int, mode: str, channels) -> int:
    return Streams(seed).spawn_key("mismatch", mode, *channels).seed


def modality_substitution(
    pretrained,
    data: DatasetBundle,
    base_channels: list[str],
    rows: list[list[str]],
    seed: int = 0,
    **finetune_kwargs,
) -> list[dict]:
    """Fine-tune/evaluate per substituted channel set: one result row per
    schedule row, each carrying its metrics, the no-swap baseline's, and the
    deltas. Unknown channel names raise ``KeyError``.
    """
    def run(channels):
        bundle = data.select_channels(channels)
        _, m = finetune(
            pretrained, bundle,
            seed=_row_seed(seed, "substitution", channels), **finetune_kwargs,
        )
        return m

    base = run(base_channels).as_dict()
    out = []
    for row in rows:
        m = run(row).as_dict()
        out.append({
            "channels": "+".join(row),
            **m,
            **{f"baseline_{k}": v for k, v in base.items()},
            **{f"delta_{k}": m[k] - base[k] for k in m},
        })
    return out


def modality_dropout(
    pretrained,
    data: DatasetBundle,
    subsets: list[list[str]],
    seed: int = 0,
    **finetune_kwargs,
) -> list[dict]:
    """Fine-tune once on the first (full) subset, then evaluate every subset.

    Channels keep the channel-embedding slot they had at fine-tuning time;
    missing channels contribute zero features to the head. Empty subsets are
    rejected.
    """
    if not subsets or any(len(s) == 0 for s in subsets):
        raise ValueError("every dropout subset must be nonempty")
    full = list(subsets[0])
    clf, _ = finetune(
        pretrained, data.select_channels(full),
        seed=_row_seed(seed, "dropout", full), **finetune_kwargs,
    )
    out = []
    for subset in subsets:
        slots = [full.index(name) for name in subset]  # raises on unknown names
        m = evaluate(clf, data.select_channels(subset), "test", channel_slots=slots)
        out.append({"channels": "+".join(subset), "n_channels": len(subset), **m.as_dict()})
    return out


# ---------------------------------------------------------------------------
# attention export


def export_attention(
    fa: FAEncoder,
    mae: MaskedAutoencoder | None,
    signals,
    slots=None,
) -> tuple[np.ndarray, list[torch.Tensor]]:
    """Channel-to-channel attention matrix [C, C] plus raw per-layer maps.

    Runs the second encoder over the full unmasked token grid, averages the
    token-level attention over batch, heads and layers, then within each
    (channel row, channel col) block: mean over the block's rows, sum over
    its columns — so every row of the C x C matrix sums to 1.
    """
    if mae is None:
        raise ValueError("attention export needs the second encoder; it is absent")
    x = torch.as_tensor(np.asarray(signals, dtype=np.float64))
    batch, n_chan, _ = x.shape
    fa.eval()
    mae.eval()
    with torch.no_grad():
        tokens = fa(standardize(x))
        mae.mix_full(tokens, slots=slots, record_attention=True)
    layers = mae.last_enc_attention  # list of [B, heads, T, T]
    n_patches = tokens.shape[-2]
    stacked = torch.stack(layers).mean(dim=(0, 1, 2))  # [T, T]
    blocks = stacked.reshape(n_chan, n_patches, n_chan, n_patches)
    chan_matrix = blocks.sum(dim=3).mean(dim=1)  # rows: mean, cols: sum
    return chan_matrix.numpy(), layers


# ---------------------------------------------------------------------------
# parameter and FLOP accounting


def count_params(*modules) -> int:
    """Trainable parameters across the given modules."""
    return sum(p.numel() for m in modules if m is not None
               for p in m.parameters() if p.requires_grad)


def _flops_fft(n: int, columns: int) -> int:
    # Budget figure from the standard FFT estimate, per transform per column.
    if n < 2:
        return 0
    return int(5 * n * math.log2(n)) * columns


def _flops_linear(rows: int, d_in: int, d_out: int) -> int:
    return rows * (2 * d_in + 1) * d_out  # multiply-adds count 2, plus bias


def flops_freq_layer(n_tokens: int, width: int, heads: int, operator: str = "query") -> int:
    """Analytic FLOPs of one frequency-filter mixing pass over [N, D]."""
    nf = n_tokens // 2 + 1
    total = 2 * _flops_fft(n_tokens, width)  # forward + inverse transform
    if operator == "query":
        total += _flops_linear(nf, width, heads)  # queries
        total += 2 * 2 * nf * heads * width  # two real matmuls forming the modulation
        total += 6 * nf * width  # complex hadamard
    else:
        total += 6 * nf * heads * width  # per-head complex products
        total += 5 * nf * heads * width  # moduli + argmax scan
    return total


def _flops_attention(n_tokens: int, width: int, heads: int) -> int:
    total = 4 * _flops_linear(n_tokens, width, width)  # q, k, v, out
    total += 2 * 2 * n_tokens * n_tokens * width  # scores and weighted sum
    total += 5 * heads * n_tokens * n_tokens  # softmax
    return total


def _flops_block(n_tokens: int, width: int, mlp_dim: int, mixer_flops: int) -> int:
    ln = 2 * 8 * n_tokens * width
    ff = _flops_linear(n_tokens, width, mlp_dim) + _flops_linear(n_tokens, mlp_dim, width)
    ff += 8 * n_tokens * mlp_dim  # activation
    return ln + mixer_flops + ff + 2 * n_tokens * width  # residual adds


def count_flops(
    fa: FAEncoder,
    mae: MaskedAutoencoder | None = None,
    n_channels: int = 1,
    length: int = 200,
    keep_second_encoder: bool = False,
) -> int:
    """Analytic FLOP estimate of one forward pass over a [C, L] sample.

    Multiply-adds count as 2 operations; each FFT as 5 N log2 N per feature
    column. An estimator, not a hardware measurement.
    """
    from .encoder import ATTN_HEAD_DIM

    n_tokens = -(-length // fa.patch_size)
    per_chan = _flops_linear(n_tokens, fa.patch_size, fa.width)
    per_chan += _flops_linear(n_tokens, fa.width, fa.width) + 8 * n_tokens * fa.width
    for _ in range(fa.depth):
        if fa.frequency_mixing:
            mixer = flops_freq_layer(n_tokens, fa.width, fa.heads, fa.operator)
        else:
            mixer = _flops_attention(n_tokens, fa.width, max(1, fa.width // ATTN_HEAD_DIM))
        per_chan += _flops_block(n_tokens, fa.width, fa.mlp_dim, mixer)
    per_chan += 8 * n_tokens * fa.width  # final norm
    total = n_channels * per_chan
    if keep_second_encoder and mae is not None:
        joint = n_channels * n_tokens
        heads = mae.enc_blocks[0].mixer.heads if len(mae.enc_blocks) else 1
        for block in mae.enc_blocks:
            total += _flops_block(
                joint, mae.width, 128, _flops_attention(joint, mae.width, heads)
            )
        total += 8 * joint * mae.width
    return total


# ---------------------------------------------------------------------------
# result files


def write_csv(path, rows: list[dict], fieldnames: list[str] | None = None) -> None:
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
