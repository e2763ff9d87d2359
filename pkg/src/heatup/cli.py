"""``heatup`` command line: train, eval, analyze and plot.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage,
3 unreadable or unwritable files (including corrupt checkpoints).
"""

import argparse
import json
import os
import sys


from . import analysis
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (PRESETS, ConfigError, RunConfig, load_dataset, parse_phases,
                     parse_ramp, resolve_config)
from .data import export_embeddings, import_embeddings
from .errors import CheckpointError, HeatupError, IdxParseError
from .evaluation import EmbeddingSet, evaluate
from .numerics import Rng
from .svg import scatter_svg, sweep_svg
from .training import Trainer, embed_dataset, init_params

DEFAULT_ALPHA_GRID = tuple(2.0 ** e for e in range(-2, 9))
DEFAULT_NORM_GRID = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)


class IoFailure(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _say(msg):
    print(msg, file=sys.stderr)


def _makedirs(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {path}: {exc}") from exc


def _write_text(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _load(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError as exc:
        raise IoFailure(f"checkpoint not found: {path}") from exc
    except (OSError, CheckpointError) as exc:
        raise IoFailure(str(exc)) from exc


def _dataset(cfg):
    try:
        return load_dataset(cfg)
    except (OSError, IdxParseError) as exc:
        raise IoFailure(str(exc)) from exc


def _config_from_checkpoint(ckpt, args):
    d = dict(ckpt.extra.get("config") or {})
    cfg = RunConfig.from_dict(d)
    if getattr(args, "data", None):
        cfg.data = args.data
    return cfg


# ---------------------------------------------------------------------------
# train


def cmd_train(args):
    overrides = {
        "seed": args.seed, "out": args.out, "data": args.data, "lr": args.lr,
        "batch_size": args.batch_size, "momentum": args.momentum,
        "embedding_dim": args.embedding_dim,
        "epochs": _ints(args.epochs) if args.epochs else None,
        "hidden": _ints(args.hidden) if args.hidden else None,
        "schedule": (parse_phases(args.phases) if args.phases
                     else parse_ramp(args.ramp) if args.ramp else None),
    }
    if args.blob_seed is not None:
        overrides["blobs"] = {"seed": args.blob_seed}
    if args.resume:
        ckpt = _load(args.resume)
        if ckpt.trainer is None:
            raise ConfigError(f"{args.resume} holds no trainer state to resume from")
        cfg = RunConfig.from_dict(ckpt.extra.get("config") or {})
        if args.out:
            cfg.out = args.out
        net, head, trainer = ckpt.net, ckpt.head, ckpt.trainer
    else:
        cfg = resolve_config(args.config, args.preset, overrides)
    ds = _dataset(cfg)
    if not args.resume:
        arch = cfg.build_arch(ds.train.dim, ds.train_class_count)
        net, head = init_params(arch, Rng(cfg.seed))
        trainer = Trainer(net, head, cfg.build_schedule(), Rng(cfg.seed).spawn(1),
                          cfg.batch_size, cfg.momentum, cfg.weight_decay)
    _makedirs(cfg.out)
    _write_text(os.path.join(cfg.out, "config.json"), cfg.to_json())
    until = None
    if args.stop_after is not None:
        until = args.stop_after
    trainer.run(ds.train, until_epoch=until,
                on_epoch=None if args.quiet else _progress)
    _write_text(os.path.join(cfg.out, "log.csv"), trainer.log.to_csv())
    ckpt_path = os.path.join(cfg.out, "model.ckpt")
    try:
        save_checkpoint(ckpt_path, net, head, trainer, extra={"config": cfg.to_dict()})
    except OSError as exc:
        raise IoFailure(f"cannot write {ckpt_path}: {exc}") from exc
    if args.export_embeddings:
        _, f_hat = embed_dataset(net, ds.test.x)
        fmt = "json" if args.export_embeddings.endswith(".json") else "csv"
        try:
            export_embeddings(f_hat, ds.test.y, args.export_embeddings, fmt)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
    _say(f"wrote {ckpt_path} after {trainer.epoch} epochs")
    return 0


def _progress(trainer):
    r = trainer.log.records[-1]
    _say(f"epoch {r['epoch']:>3}  alpha {r['alpha']:<8g} lr {r['lr']:<8g} "
         f"loss {r['mean_loss']:.4f}  acc {r['train_acc']:.4f}")


# ---------------------------------------------------------------------------
# eval


def _embeddings_from_file(path):
    try:
        return import_embeddings(path)
    except (OSError, ValueError, KeyError) as exc:
        raise IoFailure(f"cannot read embeddings from {path}: {exc}") from exc


def cmd_eval(args):
    ks = _ints(args.ks)
    if args.embeddings:
        emb, labels = _embeddings_from_file(args.embeddings)
        out = args.out or "."
    else:
        ckpt = _load(args.checkpoint)
        cfg = _config_from_checkpoint(ckpt, args)
        ds = _dataset(cfg)
        _, emb = embed_dataset(ckpt.net, ds.test.x)
        labels = ds.test.y
        out = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    report = evaluate(EmbeddingSet(emb, labels), ks, rng=Rng(args.seed), n_init=args.n_init)
    _makedirs(out)
    _write_text(os.path.join(out, "eval_report.json"), report.to_json())
    print(report.table())
    return 0


# ---------------------------------------------------------------------------
# analyze


def cmd_analyze(args):
    ckpt = _load(args.checkpoint)
    cfg = _config_from_checkpoint(ckpt, args)
    ds = _dataset(cfg)
    split = ds.train if args.split == "train" else ds.test
    if split is ds.test and ds.split_mode == "disjoint_classes":
        raise ConfigError("test classes are unseen by the head; analyze the train split")
    net, head = ckpt.net, ckpt.head
    f, f_hat = embed_dataset(net, split.x)
    census = analysis.type_census(head, f_hat, split.y, args.tau)
    tau = census["tau"]
    out = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    _makedirs(out)
    _write_text(os.path.join(out, "census.json"), json.dumps(census, indent=2) + "\n")
    m = analysis.margins(head.logits(f_hat), split.y)
    picks = analysis.representatives(m, args.per_type, tau)
    ids = sorted(i for t in analysis.SAMPLE_TYPES for i in picks[t])
    sweeps = args.sweep.split(",")
    if "alpha" in sweeps:
        grid = _floats(args.alpha_grid) if args.alpha_grid else DEFAULT_ALPHA_GRID
        curves = analysis.alpha_sweep(head, [(i, f_hat[i], split.y[i]) for i in ids], grid, tau)
        analysis.write_curves(curves, os.path.join(out, "alpha_sweep.csv"))
    if "norm" in sweeps:
        if head.weight_norm != "off" or net.arch.embedding_norm != "none":
            _say("warning: norm sweep needs an unnormalized (sm) model; skipped")
        else:
            grid = _floats(args.norm_grid) if args.norm_grid else DEFAULT_NORM_GRID
            curves = [analysis.norm_sweep(head, f[i], split.y[i], grid, i, tau) for i in ids]
            analysis.write_curves(curves, os.path.join(out, "norm_sweep.csv"))
    counts = census["counts"]
    print(f"tau {tau:.6g}  hard {counts['hard']}  boundary {counts['boundary']}  "
          f"centroid {counts['centroid']}")
    return 0


# ---------------------------------------------------------------------------
# plot


def cmd_plot(args):
    if not args.embeddings and not args.sweep:
        raise ConfigError("plot needs --embeddings and/or --sweep")
    out = args.out or "."
    _makedirs(out)
    if args.embeddings:
        emb, labels = _embeddings_from_file(args.embeddings)
        if emb.shape[1] != 2:
            raise ConfigError(f"scatter plots need 2-D embeddings, got k={emb.shape[1]}; "
                              "use 'heatup eval' for higher-dimensional embeddings")
        weights = None
        if args.checkpoint:
            weights = _load(args.checkpoint).head.effective_weight()
            if weights.shape[0] != 2:
                raise ConfigError("checkpoint head is not 2-D")
        _write_text(os.path.join(out, "scatter.svg"),
                    scatter_svg(emb, labels, weights, title=args.title or "embedding"))
    if args.sweep:
        try:
            curves = analysis.read_curves(args.sweep)
        except (OSError, KeyError, ValueError) as exc:
            raise IoFailure(f"cannot read sweep CSV {args.sweep}: {exc}") from exc
        xlabel = "alpha" if "alpha" in os.path.basename(args.sweep) else "feature norm"
        _write_text(os.path.join(out, "sweep.svg"),
                    sweep_svg(curves, xlabel, title=args.title or "gradient magnitude"))
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="heatup", description="Temperature-scaled softmax "
                                "embedding training and analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
        sp.add_argument("--data", help="'blobs' or 'mnist:<dir>'")

    t = sub.add_parser("train", help="train a model")
    common(t)
    t.add_argument("--lr", type=float)
    t.add_argument("--epochs", help="E1,E2 epoch counts for the preset schedule")
    t.add_argument("--phases", help="explicit step schedule alpha:lr:epochs,...")
    t.add_argument("--ramp", help="linear-temperature schedule alpha_start:alpha_end:epochs")
    t.add_argument("--hidden", help="hidden widths, e.g. 64,64")
    t.add_argument("--embedding-dim", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--momentum", type=float)
    t.add_argument("--blob-seed", type=int)
    t.add_argument("--resume", help="continue from a checkpoint with trainer state")
    t.add_argument("--stop-after", type=int, help="stop after this many total epochs")
    t.add_argument("--export-embeddings", help="write test embeddings (.csv or .json)")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate test embeddings")
    common(e)
    e.add_argument("--checkpoint")
    e.add_argument("--embeddings", help="evaluate an exported embedding file instead")
    e.add_argument("--ks", default="1,2,4,8")
    e.add_argument("--n-init", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze", help="sample census and gradient sweeps")
    common(a)
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--tau", type=float)
    a.add_argument("--alpha-grid")
    a.add_argument("--norm-grid")
    a.add_argument("--per-type", type=int, default=3)
    a.add_argument("--split", choices=("train", "test"), default="train")
    a.add_argument("--sweep", default="alpha,norm", help="comma list of alpha, norm")
    a.set_defaults(func=cmd_analyze)

    pl = sub.add_parser("plot", help="render SVG figures")
    common(pl)
    pl.add_argument("--embeddings", help="2-D embedding export")
    pl.add_argument("--checkpoint", help="draw the head's weight directions")
    pl.add_argument("--sweep", help="sweep CSV from analyze")
    pl.add_argument("--title")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "train":
        if args.preset is not None and args.preset not in PRESETS:
            _say(f"error: unknown preset {args.preset!r}; valid presets: {', '.join(PRESETS)}")
            return 2
        if args.seed is None:
            args.seed = 0
    if args.command == "eval" and not (args.checkpoint or args.embeddings):
        _say("error: eval needs --checkpoint or --embeddings")
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        _say(f"error: {exc}")
        return 2
    except IoFailure as exc:
        _say(f"error: {exc}")
        return 3
    except (HeatupError, ValueError, RuntimeError, FloatingPointError) as exc:
        _say(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
