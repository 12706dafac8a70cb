"""Command-line entry point: ``qot {synth,train,eval,count,gradcheck,export-features}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from ..qvit import QViT, RealViT
from .accounting import CONVENTION, count_flops, count_params
from .certify import run_suite
from .config import PRESETS, format_config, load_config
from .metrics import format_confusion
from .synth import load_split, synth_dataset
from .tensorio import write_manifest, write_tensor
from .train import STAGES, MetricRow, evaluate, load_model, save_model, train

log = logging.getLogger("qot")

# published budget of the quaternion transformer (params, FLOPs)
PAPER_PARAMS = 7.04e6
PAPER_FLOPS = 10.53e6


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qot", description="Quaternion orthogonal transformer toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate the synthetic blob dataset")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--classes", type=int, default=7)
    s.add_argument("--n-train", type=int, default=100, help="samples per class in the train split")
    s.add_argument("--n-test", type=int, default=100, help="samples per class in the test split")
    s.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    t.add_argument("--data", required=True, type=Path, help="train manifest (or a synth output directory)")
    t.add_argument("--out", required=True, type=Path)
    t.add_argument("--config", default="default", help=f"preset ({', '.join(PRESETS)}) or config file")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--epochs", type=int, help="override the epoch count of every stage")
    t.add_argument("--lr", type=float)
    t.add_argument("--stage", choices=["ortho", "qvit", "joint"],
                   help="run one stage only (default: ortho then qvit)")
    t.add_argument("--init", type=Path, help="checkpoint to start from (e.g. for --stage qvit)")
    t.add_argument("--val", type=Path, help="validation manifest evaluated after each epoch")

    e = sub.add_parser("eval", help="accuracy and confusion matrix of a checkpoint")
    e.add_argument("--checkpoint", required=True, type=Path)
    e.add_argument("--data", required=True, type=Path)
    e.add_argument("--out", type=Path, help="directory for confusion.tsv / confusion.png")

    c = sub.add_parser("count", help="parameter and FLOP accounting")
    c.add_argument("--config", default="default")
    c.add_argument("--out", type=Path, help="directory for per-layer tables and a figure")

    g = sub.add_parser("gradcheck", help="finite-difference certification of every backward rule")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path)

    x = sub.add_parser("export-features", help="write quaternion features for every sample")
    x.add_argument("--checkpoint", required=True, type=Path)
    x.add_argument("--data", required=True, type=Path)
    x.add_argument("--out", required=True, type=Path)
    return p


def _manifest(path: Path, split: str = "train") -> Path:
    if path.is_dir():
        for cand in (path / split / "manifest.tsv", path / "manifest.tsv"):
            if cand.is_file():
                return cand
        raise FileNotFoundError(f"no manifest.tsv under {path}")
    return path


def cmd_synth(args) -> int:
    for split, n, seed in (("train", args.n_train, args.seed), ("test", args.n_test, args.seed + 1)):
        m = synth_dataset(args.out / split, args.classes, n, seed)
        print(f"{split}\t{m}\t{args.classes * n}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    epochs = {"epochs_ortho": args.epochs, "epochs_qvit": args.epochs} if args.epochs is not None else {}
    cfg = cfg.with_overrides(lam=args.lam, lr=args.lr, **epochs)
    x, y = load_split(_manifest(args.data), cfg.num_classes)
    if x.ndim == 4 and x.shape[1:3] == (cfg.H, cfg.W) and cfg.backbone == "toy" and x.shape[1] != cfg.image_size:
        cfg = cfg.with_overrides(backbone="precomputed", feature_dim=x.shape[-1])
        log.info("inputs are %s feature maps; using the precomputed-feature path", x.shape[1:])
    val = load_split(_manifest(args.val, "test"), cfg.num_classes) if args.val else None
    model = None
    if args.init:
        model, _ = load_model(args.init)
        cfg = model.cfg.with_overrides(lam=args.lam, lr=args.lr, **epochs)
        model.cfg = cfg
    args.out.mkdir(parents=True, exist_ok=True)
    metrics_path = args.out / "metrics.tsv"
    stage = args.stage or "two-stage"
    t0 = time.time()
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write("epoch\tsplit\tloss\taccuracy\n")

        def on_metric(row: MetricRow):
            fh.write(row.line() + "\n")
            fh.flush()
            print(row.line(), flush=True)

        res = train(cfg, x, y, seed=args.seed, stage=stage, model=model, on_metric=on_metric, val=val)
    save_model(args.out / "model.qckpt", res.model, seed=args.seed, steps=res.steps, stage=stage)
    (args.out / "config.txt").write_text(format_config(cfg), encoding="utf-8")
    from .plots import plot_metrics

    plot_metrics(res.metrics, args.out / "metrics.png")
    print(f"# checkpoint {args.out / 'model.qckpt'} ({res.steps} steps, {time.time() - t0:.1f}s)", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    model, _ = load_model(args.checkpoint)
    x, y = load_split(_manifest(args.data, "test"), model.cfg.num_classes)
    acc, cm = evaluate(model, x, y)
    print(f"accuracy\t{acc:.4f}\t{int(np.trace(cm))}/{int(cm.sum())}")
    print(format_confusion(cm))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "confusion.tsv").write_text(format_confusion(cm) + "\n", encoding="utf-8")
        (args.out / "accuracy.txt").write_text(f"{acc:.6f}\n", encoding="utf-8")
        from .plots import plot_confusion

        plot_confusion(cm, args.out / "confusion.png")
    return 0


def cmd_count(args) -> int:
    cfg = load_config(args.config).qvit
    q, r = QViT(cfg), RealViT(cfg)
    shape = (cfg.H, cfg.W, cfg.C, 4)
    qrep = count_params(q).merge(count_flops(q, shape))
    rrep = count_params(r).merge(count_flops(r, shape))
    print(f"# convention: {CONVENTION}")
    for line in qrep.lines():
        print(line)
    print("model\tparams\tflops\tparams_M\tflops_M")
    for name, rep in (("Q-ViT", qrep), ("real-ViT", rrep)):
        print(f"{name}\t{rep.total_params}\t{rep.total_flops}\t{rep.total_params / 1e6:.2f}M\t{rep.total_flops / 1e6:.2f}M")
    print(f"published\t{int(PAPER_PARAMS)}\t{int(PAPER_FLOPS)}\t7.04M\t10.53M")
    print(f"param_ratio\t{qrep.total_params / rrep.total_params:.4f}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "qvit_costs.tsv").write_text("\n".join(qrep.lines()) + "\n", encoding="utf-8")
        (args.out / "realvit_costs.tsv").write_text("\n".join(rrep.lines()) + "\n", encoding="utf-8")
        from .plots import plot_costs

        plot_costs({"Q-ViT": qrep, "real ViT": rrep}, args.out / "costs.png")
    return 0


def cmd_gradcheck(args) -> int:
    lines = []

    def emit(line):
        lines.append(line)
        print(line, flush=True)

    reports = run_suite(seed=args.seed, emit=emit)
    ok = all(r.passed for r in reports.values())
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "gradcheck.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"# {sum(r.passed for r in reports.values())}/{len(reports)} cases passed", file=sys.stderr)
    return 0 if ok else 1


def cmd_export(args) -> int:
    model, _ = load_model(args.checkpoint)
    x, y = load_split(_manifest(args.data), model.cfg.num_classes)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "features").mkdir(exist_ok=True)
    from ..autograd.engine import no_grad

    rows = []
    with no_grad():
        for i in range(0, len(x), 64):
            feats = model.quaternion_features(model.cast_input(x[i : i + 64])).value
            for j, f in enumerate(feats):
                rel = f"features/{i + j:06d}.qt"
                write_tensor(args.out / rel, f)
                rows.append((rel, int(y[i + j])))
    write_manifest(args.out / "manifest.tsv", rows)
    print(f"{len(rows)}\t{args.out / 'manifest.tsv'}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "count": cmd_count,
    "gradcheck": cmd_gradcheck,
    "export-features": cmd_export,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"qot {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
