"""Dataset format, ingestion, and the synthetic multimodal generator.

A dataset on disk is a directory holding ``manifest.json`` plus one binary
blob per split per array. Blobs are self-describing up to dtype:

    16-byte magic ``FAMAE-TENSOR\\0\\0\\0\\0``
    rank as little-endian u64
    one extent per dimension, little-endian u64
    raw row-major data (float64 for signals, int32 for labels, little-endian)

Round trips are bit-exact. Unknown manifest keys are preserved on load and
written back on save.

The synthetic generator produces multi-channel windows whose classes are
frequency signatures: each channel of each sample is a sum of sinusoids at
class-specific bands (frequency jittered within the band, phase uniform)
scaled to unit RMS, plus 1/f^alpha noise with RMS = 1/snr. ``snr`` is an
amplitude (RMS) ratio; ``inf`` means no noise, and a channel with no bands
for any class is pure unit-RMS noise. With ``shared_latent`` every channel
encodes the sample's class through its own bands; without it only the first
channel does, the rest encoding independent draws.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

__all__ = [
    "BLOB_MAGIC",
    "write_blob",
    "read_blob",
    "DatasetBundle",
    "save_dataset",
    "load_dataset",
    "standardize",
    "ChannelSpec",
    "SynthConfig",
    "synth_generate",
    "colored_noise",
]

BLOB_MAGIC = b"FAMAE-TENSOR\x00\x00\x00\x00"

STD_FLOOR = 1e-8


class DataFormatError(ValueError):
    """Malformed manifest or blob."""


# ---------------------------------------------------------------------------
# tensor blobs


def write_blob(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array)
    if array.dtype not in (np.float64, np.int32):
        raise DataFormatError(f"blob dtype must be float64 or int32, got {array.dtype}")
    with open(path, "wb") as fh:
        fh.write(BLOB_MAGIC)
        fh.write(struct.pack("<Q", array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes())


def read_blob(path, dtype) -> np.ndarray:
    dtype = np.dtype(dtype)
    raw = Path(path).read_bytes()
    if raw[: len(BLOB_MAGIC)] != BLOB_MAGIC:
        raise DataFormatError(f"{path}: bad magic, not a FAMAE-TENSOR blob")
    off = len(BLOB_MAGIC)
    if len(raw) < off + 8:
        raise DataFormatError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if len(raw) < off + 8 * rank:
        raise DataFormatError(f"{path}: truncated extents")
    shape = struct.unpack_from(f"<{rank}Q", raw, off)
    off += 8 * rank
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    got = len(raw) - off
    if got != expected:
        raise DataFormatError(
            f"{path}: payload holds {got} bytes but shape {tuple(shape)} "
            f"({dtype}) needs {expected}"
        )
    data = np.frombuffer(raw, dtype=dtype.newbyteorder("<"), offset=off)
    return data.reshape(shape).astype(dtype, copy=True)


# ---------------------------------------------------------------------------
# dataset bundle


@dataclass
class DatasetBundle:
    """Manifest-described windowed signals with labels, one array pair per split."""

    manifest: dict
    signals: dict[str, np.ndarray] = field(default_factory=dict)  # split -> [num, C, L]
    labels: dict[str, np.ndarray] = field(default_factory=dict)  # split -> [num]

    @property
    def name(self) -> str:
        return self.manifest["name"]

    @property
    def channels(self) -> list[str]:
        return list(self.manifest["channels"])

    @property
    def n_classes(self) -> int:
        return int(self.manifest["n_classes"])

    @property
    def length(self) -> int:
        return int(self.manifest["length"])

    @property
    def sampling_rate_hz(self) -> float:
        return float(self.manifest["sampling_rate_hz"])

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self.signals[name], self.labels[name]

    def validate(self) -> None:
        n_chan = len(self.channels)
        for split, size in self.manifest["splits"].items():
            x, y = self.signals[split], self.labels[split]
            if x.shape != (size, n_chan, self.length):
                raise DataFormatError(
                    f"split {split!r}: signals shape {x.shape} does not match "
                    f"manifest ({size}, {n_chan}, {self.length})"
                )
            if y.shape != (size,):
                raise DataFormatError(
                    f"split {split!r}: labels shape {y.shape} does not match manifest ({size},)"
                )
            if y.size and (y.min() < 0 or y.max() >= self.n_classes):
                raise DataFormatError(
                    f"split {split!r}: labels outside [0, {self.n_classes})"
                )

    def select_channels(self, names: list[str]) -> "DatasetBundle":
        """Bundle restricted to the named channels, in the given order."""
        current = self.channels
        try:
            idx = [current.index(n) for n in names]
        except ValueError as exc:
            unknown = next(n for n in names if n not in current)
            raise KeyError(f"unknown channel name {unknown!r}") from exc
        manifest = dict(self.manifest)
        manifest["channels"] = list(names)
        return DatasetBundle(
            manifest=manifest,
            signals={s: x[:, idx, :] for s, x in self.signals.items()},
            labels={s: y.copy() for s, y in self.labels.items()},
        )


def save_dataset(bundle: DatasetBundle, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    bundle.validate()
    (root / "manifest.json").write_text(
        json.dumps(bundle.manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    for split in bundle.manifest["splits"]:
        write_blob(root / f"{split}_signals.bin", bundle.signals[split].astype(np.float64))
        write_blob(root / f"{split}_labels.bin", bundle.labels[split].astype(np.int32))


def load_dataset(path) -> DatasetBundle:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    for key in ("name", "sampling_rate_hz", "length", "channels", "splits", "n_classes"):
        if key not in manifest:
            raise DataFormatError(f"{manifest_path}: missing manifest key {key!r}")
    bundle = DatasetBundle(manifest=manifest)
    for split in manifest["splits"]:
        try:
            bundle.signals[split] = read_blob(root / f"{split}_signals.bin", np.float64)
            bundle.labels[split] = read_blob(root / f"{split}_labels.bin", np.int32)
        except DataFormatError as exc:
            raise DataFormatError(f"split {split!r}: {exc}") from exc
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# standardization


def standardize(signals):
    """Per-sample, per-channel z-score over the window (std floored at 1e-8).

    Accepts numpy arrays or torch tensors shaped [..., L] and returns the
    same kind.
    """
    if isinstance(signals, torch.Tensor):
        mean = signals.mean(dim=-1, keepdim=True)
        std = signals.std(dim=-1, keepdim=True, correction=0)
        return (signals - mean) / torch.clamp(std, min=STD_FLOOR)
    signals = np.asarray(signals, dtype=np.float64)
    mean = signals.mean(axis=-1, keepdims=True)
    std = signals.std(axis=-1, keepdims=True)
    return (signals - mean) / np.maximum(std, STD_FLOOR)


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass
class ChannelSpec:
    """One synthetic channel.

    ``band_centers_hz`` holds one list of sinusoid center frequencies per
    class. ``copy_of`` makes the channel an exact copy of a previously
    defined one (band fields are then ignored).
    """

    name: str
    band_centers_hz: list[list[float]] = field(default_factory=list)
    band_width_hz: float = 1.0
    snr: float = math.inf
    copy_of: str | None = None

    @classmethod
    def from_dict(cls, raw: dict, n_classes: int) -> "ChannelSpec":
        known = {"name", "band_centers_hz", "band_width_hz", "snr", "copy_of"}
        unknown = set(raw) - known
        if unknown:
            raise DataFormatError(f"channel config: unknown key {sorted(unknown)[0]!r}")
        if "name" not in raw:
            raise DataFormatError("channel config: missing 'name'")
        snr = raw.get("snr", math.inf)
        if isinstance(snr, str):
            if snr.lower() not in ("inf", "infinity"):
                raise DataFormatError(f"channel {raw['name']!r}: bad snr {snr!r}")
            snr = math.inf
        spec = cls(
            name=raw["name"],
            band_centers_hz=[list(b) for b in raw.get("band_centers_hz", [])],
            band_width_hz=float(raw.get("band_width_hz", 1.0)),
            snr=float(snr),
            copy_of=raw.get("copy_of"),
        )
        if spec.copy_of is None and spec.band_centers_hz:
            if len(spec.band_centers_hz) != n_classes:
                raise DataFormatError(
                    f"channel {spec.name!r}: band_centers_hz lists {len(spec.band_centers_hz)} "
                    f"classes, dataset has {n_classes}"
                )
        return spec


def _default_splits() -> dict[str, int]:
    # Few-shot transfer shape: small labeled splits, large test.
    return {"train": 60, "val": 20, "test": 500}


@dataclass
class SynthConfig:
    n_classes: int
    sampling_rate_hz: float
    length: int
    channels: list[ChannelSpec]
    noise_exponent: float = 1.0
    shared_latent: bool = True
    name: str = "synthetic"
    splits: dict[str, int] = field(default_factory=_default_splits)

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        known = {
            "n_classes", "sampling_rate_hz", "length", "channels",
            "noise_exponent", "shared_latent", "name", "splits",
        }
        unknown = set(raw) - known
        if unknown:
            raise DataFormatError(f"synth config: unknown key {sorted(unknown)[0]!r}")
        for key in ("n_classes", "sampling_rate_hz", "length", "channels"):
            if key not in raw:
                raise DataFormatError(f"synth config: missing {key!r}")
        cfg = cls(
            n_classes=int(raw["n_classes"]),
            sampling_rate_hz=float(raw["sampling_rate_hz"]),
            length=int(raw["length"]),
            channels=[ChannelSpec.from_dict(c, int(raw["n_classes"])) for c in raw["channels"]],
            noise_exponent=float(raw.get("noise_exponent", 1.0)),
            shared_latent=bool(raw.get("shared_latent", True)),
            name=str(raw.get("name", "synthetic")),
            splits={k: int(v) for k, v in raw.get("splits", _default_splits()).items()},
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.n_classes < 1:
            raise DataFormatError("synth config: n_classes must be >= 1")
        if self.length < 1:
            raise DataFormatError("synth config: length must be >= 1")
        nyquist = self.sampling_rate_hz / 2.0
        names = set()
        for chan in self.channels:
            if chan.name in names:
                raise DataFormatError(f"channel {chan.name!r}: duplicate name")
            names.add(chan.name)
            if chan.copy_of is not None:
                if chan.copy_of not in names - {chan.name}:
                    raise DataFormatError(
                        f"channel {chan.name!r}: copy_of {chan.copy_of!r} not defined earlier"
                    )
                continue
            for bands in chan.band_centers_hz:
                for center in bands:
                    if center + chan.band_width_hz / 2.0 >= nyquist:
                        raise DataFormatError(
                            f"channel {chan.name!r}: band at {center} Hz reaches "
                            f"the Nyquist frequency {nyquist} Hz"
                        )


def colored_noise(length: int, exponent: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS 1/f^exponent noise of the given length (DC removed)."""
    white = rng.standard_normal(length)
    if length == 1:
        return np.zeros(1)
    spec = np.fft.rfft(white)
    k = np.arange(1, spec.size, dtype=np.float64)
    spec[1:] *= k ** (-exponent / 2.0)
    spec[0] = 0.0
    out = np.fft.irfft(spec, n=length)
    rms = np.sqrt(np.mean(out**2))
    return out / max(rms, STD_FLOOR)


def _balanced_labels(n: int, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    # Stratified: counts within +/-1 of uniform, order shuffled.
    reps = np.arange(n, dtype=np.int64) % n_classes
    rng.shuffle(reps)
    return reps.astype(np.int32)


def _render_channel(
    chan: ChannelSpec,
    cls: int,
    cfg: SynthConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    t = np.arange(cfg.length, dtype=np.float64) / cfg.sampling_rate_hz
    bands = chan.band_centers_hz[cls] if chan.band_centers_hz else []
    sig = np.zeros(cfg.length)
    for center in bands:
        freq = center + rng.uniform(-chan.band_width_hz / 2.0, chan.band_width_hz / 2.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        sig += np.sin(2.0 * math.pi * freq * t + phase)
    if bands:
        rms = np.sqrt(np.mean(sig**2))
        sig = sig / max(rms, STD_FLOOR)
        if math.isfinite(chan.snr):
            sig = sig + colored_noise(cfg.length, cfg.noise_exponent, rng) / chan.snr
    else:
        sig = colored_noise(cfg.length, cfg.noise_exponent, rng)
    return sig


def synth_generate(
    cfg: SynthConfig, sizes: dict[str, int] | None, rng: np.random.Generator
) -> DatasetBundle:
    """Generate a bundle with the given per-split sizes. Fixed rng -> fixed bytes."""
    cfg.validate()
    if sizes is None:
        sizes = cfg.splits
    manifest = {
        "name": cfg.name,
        "sampling_rate_hz": cfg.sampling_rate_hz,
        "length": cfg.length,
        "channels": [c.name for c in cfg.channels],
        "splits": {k: int(v) for k, v in sizes.items()},
        "n_classes": cfg.n_classes,
    }
    bundle = DatasetBundle(manifest=manifest)
    split_rngs = rng.spawn(len(sizes))
    chan_index = {c.name: i for i, c in enumerate(cfg.channels)}
    for (split, n), srng in zip(sizes.items(), split_rngs):
        labels = _balanced_labels(n, cfg.n_classes, srng)
        signals = np.zeros((n, len(cfg.channels), cfg.length))
        for i in range(n):
            for j, chan in enumerate(cfg.channels):
                if chan.copy_of is not None:
                    signals[i, j] = signals[i, chan_index[chan.copy_of]]
                    continue
                cls = int(labels[i])
                if not cfg.shared_latent and j > 0:
                    cls = int(srng.integers(cfg.n_classes))
                signals[i, j] = _render_channel(chan, cls, cfg, srng)
        bundle.signals[split] = signals
        bundle.labels[split] = labels
    bundle.validate()
    return bundle
