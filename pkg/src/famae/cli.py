"""Command-line entry point: famae synth|pretrain|finetune|ablate|mismatch|attn.

Every run is driven by one JSON config (plus ``--set`` overrides), writes its
resolved ``config.json`` and a ``runlog.json`` (wall clock, parameter count)
next to its results, and is deterministic given the seed. Exit codes are a
contract: 0 success, 1 runtime failure, 2 config error, 3 missing artifact.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, config_hash, load_config_file, resolve_config
from .data import (
    DataFormatError,
    DatasetBundle,
    SynthConfig,
    load_dataset,
    save_dataset,
    synth_generate,
    write_blob,
)
from .harness import (
    count_params,
    evaluate,
    export_attention,
    finetune,
    modality_dropout,
    modality_substitution,
    run_ablation_cell,
    write_csv,
    write_json,
)
from .pretraining import MaskedAutoencoderPretrainer
from .seeding import substream

__all__ = ["main"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3


# ---------------------------------------------------------------------------
# config plumbing


def _resolved(args) -> dict:
    raw = load_config_file(args.config) if args.config else {}
    return resolve_config(raw, overrides=args.set or [], seed=args.seed,
                          output_dir=args.out)


def _out_dir(cfg) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _synth_bundle(synth_dict, seed: int, role: str) -> DatasetBundle:
    synth = SynthConfig.from_dict(synth_dict)
    return synth_generate(synth, None, substream(seed, "data", role))


def _target_bundle(cfg) -> DatasetBundle:
    data = cfg["data"]
    if data["path"]:
        return load_dataset(data["path"])
    if data["synth"]:
        return _synth_bundle(data["synth"], cfg["seed"], "target")
    raise ConfigError("config needs data.path or data.synth")


def _pretrain_bundle(cfg) -> DatasetBundle:
    data = cfg["data"]
    if data["pretrain_path"]:
        return load_dataset(data["pretrain_path"])
    if data["pretrain_synth"]:
        return _synth_bundle(data["pretrain_synth"], cfg["seed"], "pretrain")
    return _target_bundle(cfg)


def _pretrain_kwargs(cfg) -> dict:
    model, pre = cfg["model"], cfg["pretrain"]
    return {
        "depth": model["depth"],
        "width": model["width"],
        "heads": model["heads"],
        "patch_size": model["patch"],
        "mlp_dim": model["mlp_dim"],
        "dropout": model["dropout"],
        "operator": model["operator_kind"],
        "enc2_depth": model["enc2_depth"],
        "dec_depth": model["dec_depth"],
        "attn_heads": model["attn_heads"],
        "max_channels": model["max_channels"],
        "mask_ratio": pre["mask_ratio"],
        "epochs": pre["epochs"],
        "batch_size": pre["batch"],
        "lr": pre["lr"],
    }


def _finetune_kwargs(cfg) -> dict:
    ft = cfg["finetune"]
    return {
        "epochs": ft["epochs"],
        "batch_size": ft["batch"],
        "lr": ft["lr"],
        "keep_second_encoder": ft["keep_enc2"],
    }


def _finish(out: Path, cfg: dict, started: float, **extra) -> None:
    if "param_count" not in extra:
        from .models import build_models
        extra["param_count"] = count_params(*build_models(cfg["model"]))
    write_json(out / "config.json", cfg)
    write_json(out / "runlog.json", {
        "wall_clock_s": round(time.time() - started, 3),
        "config_hash": config_hash(cfg),
        **extra,
    })


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    cfg = _resolved(args)
    started = time.time()
    if not cfg["data"]["synth"]:
        raise ConfigError("synth needs a data.synth section")
    out = _out_dir(cfg)
    bundle = _synth_bundle(cfg["data"]["synth"], cfg["seed"], "target")
    save_dataset(bundle, out)
    _finish(out, cfg, started, command="synth")
    sizes = {k: int(v) for k, v in bundle.manifest["splits"].items()}
    print(f"dataset {bundle.name!r}: channels={bundle.channels} "
          f"classes={bundle.n_classes} length={bundle.length} splits={sizes}")
    print(f"written to {out}")
    return EXIT_OK


def _select_pretrain_channels(cfg, bundle: DatasetBundle) -> DatasetBundle:
    channels = cfg["pretrain"]["channels"]
    return bundle.select_channels(list(channels)) if channels else bundle


def cmd_pretrain(args) -> int:
    cfg = _resolved(args)
    started = time.time()
    out = _out_dir(cfg)
    bundle = _select_pretrain_channels(cfg, _pretrain_bundle(cfg))
    pre = MaskedAutoencoderPretrainer(
        frequency_mixing=cfg["model"]["fa_on"],
        latent_masking=cfg["pretrain"]["fm_on"],
        seed=cfg["seed"],
        **_pretrain_kwargs(cfg),
    )
    pre.fit(bundle.split("train")[0], channel_names=bundle.channels)
    ckpt = out / "checkpoint.famae"
    pre.save(ckpt)
    write_csv(out / "loss_curve.csv",
              [{"epoch": i, "loss": v} for i, v in enumerate(pre.loss_curve_)])
    n_params = count_params(pre.encoder_, pre.mae_)
    _finish(out, cfg, started, command="pretrain", param_count=n_params)
    print(f"pretrained {pre.epochs} epochs on channels {bundle.channels} "
          f"({n_params} params); final loss {pre.loss_curve_[-1]:.6f}"
          if pre.loss_curve_ else "pretrained 0 epochs")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = _resolved(args)
    started = time.time()
    out = _out_dir(cfg)
    target = _target_bundle(cfg)
    pretrained = args.checkpoint
    clf, metrics = finetune(
        pretrained, target, seed=cfg["seed"],
        model_config=cfg["model"], **_finetune_kwargs(cfg),
    )
    row = {"config_hash": config_hash(cfg), "seed": cfg["seed"], "split": "test",
           **metrics.as_dict()}
    write_csv(out / "results.csv", [row])
    write_json(out / "metrics.json", {
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "test": metrics.as_dict(),
        "loss_curve": clf.loss_curve_,
        "pretrained": str(pretrained) if pretrained else None,
    })
    n_params = count_params(clf.encoder_, clf.mae_, clf.head_)
    _finish(out, cfg, started, command="finetune", param_count=n_params)
    print(f"test accuracy {metrics.accuracy:.4f} f1 {metrics.f1:.4f} "
          f"({'pretrained' if pretrained else 'scratch'})")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _resolved(args)
    started = time.time()
    out = _out_dir(cfg)
    pre_bundle = _select_pretrain_channels(cfg, _pretrain_bundle(cfg))
    target = _target_bundle(cfg)
    rows = []
    for fa_on, fm_on in ((False, False), (True, False), (False, True), (True, True)):
        metrics = run_ablation_cell(
            pre_bundle, target, fa_on=fa_on, fm_on=fm_on, seed=cfg["seed"],
            pretrain_kwargs=_pretrain_kwargs(cfg),
            finetune_kwargs=_finetune_kwargs(cfg),
        )
        rows.append({"config_hash": config_hash(cfg), "seed": cfg["seed"],
                     "fa": fa_on, "fm": fm_on, **metrics.as_dict()})
        print(f"fa={fa_on} fm={fm_on}: accuracy {metrics.accuracy:.4f}")
    write_csv(out / "ablation.csv", rows)
    _finish(out, cfg, started, command="ablate")
    return EXIT_OK


def _default_substitution_rows(base: list[str], available: list[str]) -> list[list[str]]:
    spares = [c for c in available if c not in base]
    if not spares:
        raise ConfigError(
            "substitution schedule needs at least one dataset channel outside "
            "the pretraining set"
        )
    rows = []
    for i in range(len(base)):
        row = list(base)
        row[i] = spares[min(i, len(spares) - 1)]
        rows.append(row)
    return rows


def cmd_mismatch(args) -> int:
    cfg = _resolved(args)
    started = time.time()
    out = _out_dir(cfg)
    if not args.checkpoint:
        raise FileNotFoundError("mismatch needs --checkpoint")
    pre = MaskedAutoencoderPretrainer.from_checkpoint(args.checkpoint)
    target = _target_bundle(cfg)
    mode = args.mode or cfg["mismatch"]["mode"]
    if mode not in ("substitution", "dropout"):
        raise ConfigError(f"mismatch mode must be substitution or dropout, got {mode!r}")
    base = cfg["mismatch"]["base_channels"] or pre.channel_names_ or target.channels
    base = [c for c in base if c in target.channels] or target.channels
    rows_cfg = cfg["mismatch"]["rows"]
    ft = _finetune_kwargs(cfg)
    if mode == "substitution":
        rows = [list(r) for r in rows_cfg] if rows_cfg else \
            _default_substitution_rows(base, target.channels)
        results = modality_substitution(pre, target, base, rows,
                                        seed=cfg["seed"], **ft)
    else:
        subsets = [list(r) for r in rows_cfg] if rows_cfg else \
            [base[:c] for c in range(len(base), 0, -1)]
        results = modality_dropout(pre, target, subsets, seed=cfg["seed"], **ft)
    for row in results:
        row = dict(row)
        print(f"{mode} {row.pop('channels')}: accuracy {row['accuracy']:.4f}")
    out_rows = [{"config_hash": config_hash(cfg), "seed": cfg["seed"], "mode": mode, **r}
                for r in results]
    write_csv(out / "mismatch.csv", out_rows)
    _finish(out, cfg, started, command="mismatch", mode=mode)
    return EXIT_OK


def cmd_attn(args) -> int:
    cfg = _resolved(args)
    started = time.time()
    out = _out_dir(cfg)
    if not args.checkpoint:
        raise FileNotFoundError("attn needs --checkpoint")
    pre = MaskedAutoencoderPretrainer.from_checkpoint(args.checkpoint)
    target = _target_bundle(cfg)
    x, _ = target.split("test")
    batch = x[: min(len(x), 64)]
    matrix, _ = export_attention(pre.encoder_, pre.mae_, batch)
    write_blob(out / "attention.bin", np.asarray(matrix, dtype=np.float64))
    rows = [{"channel": name, **{c: matrix[i, j] for j, c in enumerate(target.channels)}}
            for i, name in enumerate(target.channels)]
    write_csv(out / "attention.csv", rows)
    _finish(out, cfg, started, command="attn")
    print(f"attention matrix over channels {target.channels} written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and dispatch


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON run config")
    sub.add_argument("--seed", type=int, help="override the config seed")
    sub.add_argument("--out", help="override the config output_dir")
    sub.add_argument("--checkpoint", help="pretraining checkpoint archive")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override one config entry (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="famae",
        description="frequency-aware masked autoencoding for multimodal time series",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, func, extra in (
        ("synth", cmd_synth, "generate a synthetic dataset directory"),
        ("pretrain", cmd_pretrain, "masked-autoencoder pretraining"),
        ("finetune", cmd_finetune, "fine-tune and evaluate on a target dataset"),
        ("ablate", cmd_ablate, "frequency-mixing x latent-masking grid"),
        ("mismatch", cmd_mismatch, "modality substitution / dropout experiments"),
        ("attn", cmd_attn, "export the channel-to-channel attention matrix"),
    ):
        sub = subs.add_parser(name, help=extra)
        _add_common(sub)
        if name == "mismatch":
            sub.add_argument("--mode", choices=("substitution", "dropout"))
        sub.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001 - CLI boundary maps everything else
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
