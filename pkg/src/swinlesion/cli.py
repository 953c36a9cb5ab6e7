"""Command-line driver: stats, split, augment, train, eval, gradcheck (+ synth, ablate).

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint
from .config import ConfigError, ExperimentConfig, derive_seed, dump_config, from_dict, load_config
from .data.augment import materialize, read_aug_manifest, selective_augment, write_aug_manifest
from .data.dataset import (ISIC2019_CLASSES, DatasetError, compute_stats, format_stats_report,
                           load_ground_truth)
from .data.elastic import resize
from .data.imageio import read_image, resolve_image, to_float, write_ppm
from .data.split import (SplitError, check_fractions, read_manifest_meta, read_split_manifest,
                         stratified_split, write_split_manifest)
from .data.synthetic import write_fixture
from .engine import ImageSet, TrainData, TrainingError, evaluate, train

log = logging.getLogger("swinlesion")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- helpers ---------------------------------------------------------------------
_PATH_FLAGS = {"dataset": "paths.dataset", "manifest": "paths.manifest", "gt": "paths.gt_csv",
               "augment_manifest": "paths.augment_manifest", "out": "paths.out"}


def _config(args, *path_flags: str) -> ExperimentConfig:
    """Config file (or defaults) with --seed and the listed path flags applied on top."""
    cfg = load_config(args.config) if getattr(args, "config", None) else from_dict({})
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        overrides["train.epochs"] = args.epochs
    for flag in path_flags:
        if getattr(args, flag, None) is not None:
            overrides[_PATH_FLAGS[flag]] = str(getattr(args, flag))
    return cfg.replace(**overrides) if overrides else cfg


def _provenance(cfg: ExperimentConfig, **extra) -> dict:
    return {"seed": cfg.seed, "config": cfg.to_dict(), **extra}


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required (or set it in the config file)")
    return value


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load_images(root, names: Sequence[str], size: int) -> np.ndarray:
    out = np.empty((len(names), size, size, 3))
    for i, name in enumerate(names):
        img = to_float(read_image(resolve_image(root, name)))
        out[i] = resize(img, size)
    return out


def _manifest_data(manifest, root, size: int):
    rows = read_split_manifest(manifest)
    if not rows:
        raise DatasetError(f"{manifest}: empty dataset")
    meta = read_manifest_meta(manifest)
    names = meta.get("class_names")
    if names is None:
        names = [str(k) for k in range(max(r.cls for r in rows) + 1)]
    parts = {}
    for split in ("train", "val", "test"):
        sel = [r for r in rows if r.split == split]
        images = _load_images(root, [r.image for r in sel], size) if sel else np.zeros((0, size, size, 3))
        parts[split] = ImageSet(images, [r.cls for r in sel], [r.image for r in sel])
    return parts, list(names), rows


def _extra_from_aug(aug_manifest, rows, size: int) -> ImageSet:
    label_of = {r.image: r.cls for r in rows}
    base = Path(aug_manifest).parent
    entries = read_aug_manifest(aug_manifest)
    unknown = [e["source"] for e in entries if e["source"] not in label_of]
    if unknown:
        raise DatasetError(f"{aug_manifest}: source {unknown[0]!r} is not in the split manifest")
    images = _load_images(base, [e["output_path"] for e in entries], size) if entries else np.zeros((0, size, size, 3))
    return ImageSet(images, [label_of[e["source"]] for e in entries], [e["output_path"] for e in entries])


def _write_history(path: Path, history, prov: dict) -> None:
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(prov, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc", "lr"])
        for h in history:
            w.writerow([h.epoch, repr(h.train_loss), repr(h.val_loss), repr(h.val_acc), repr(h.lr)])


# -- commands --------------------------------------------------------------------
def cmd_stats(args) -> int:
    cfg = _config(args, "gt", "dataset")
    gt = _require(cfg.paths.gt_csv, "--gt")
    ds = load_ground_truth(gt, cfg.paths.dataset, check_files=cfg.paths.dataset is not None)
    stats = compute_stats(ds)
    report = format_stats_report(stats, {"source": gt, "seed": cfg.seed,
                                         "config": json.dumps(cfg.to_dict(), sort_keys=True)})
    if args.out:
        _write_text(Path(args.out), report)
    sys.stdout.write(report)
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = _config(args, "gt")
    gt = _require(cfg.paths.gt_csv, "--gt")
    out = Path(_require(args.out, "--out"))
    fractions = check_fractions(args.fractions if args.fractions is not None else cfg.split.fractions)
    cfg = cfg.replace(**{"split.fractions": list(fractions)})
    ds = load_ground_truth(gt, check_files=False)
    split_seed = derive_seed(cfg.seed, "split")
    plan = stratified_split(ds.labels, fractions, split_seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_split_manifest(out, plan, ds.records,
                         _provenance(cfg, split_seed=split_seed, class_names=list(ds.class_names), source=gt))
    print(f"train={len(plan.train)} val={len(plan.val)} test={len(plan.test)} -> {out}")
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = _config(args, "manifest", "dataset")
    manifest = _require(cfg.paths.manifest, "--manifest")
    root = _require(cfg.paths.dataset, "--dataset")
    out = Path(_require(args.out, "--out"))
    threshold = args.threshold if args.threshold is not None else cfg.augment.threshold
    multiplier = args.multiplier if args.multiplier is not None else cfg.augment.multiplier
    cfg = cfg.replace(**{"augment.threshold": threshold, "augment.multiplier": multiplier})
    rows = read_split_manifest(manifest)
    names = [r.image for r in rows]
    train_pos = [i for i, r in enumerate(rows) if r.split == "train"]
    aug_seed = cfg.seed_for("augment")
    entries = selective_augment([r.cls for r in rows], train_pos, threshold, multiplier, aug_seed,
                                cfg.augment.sigma, cfg.augment.alpha, names)
    out.mkdir(parents=True, exist_ok=True)
    if entries:
        images = materialize(entries, lambda i: to_float(read_image(resolve_image(root, names[i]))))
        for e, img in zip(entries, images):
            write_ppm(out / e.output_path, img)
    write_aug_manifest(out / "augment_manifest.csv", entries, names,
                       _provenance(cfg, augment_seed=aug_seed, split_manifest=str(manifest)))
    print(f"{len(entries)} synthetic images -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args, "manifest", "dataset", "augment_manifest", "out")
    manifest = _require(cfg.paths.manifest, "--manifest")
    root = _require(cfg.paths.dataset, "--dataset")
    out = Path(cfg.paths.out)
    size = cfg.model.image_size
    parts, class_names, rows = _manifest_data(manifest, root, size)
    if len(class_names) != cfg.model.num_classes:
        raise ConfigError(f"manifest defines {len(class_names)} classes but model.num_classes is "
                          f"{cfg.model.num_classes}")
    extra = _extra_from_aug(cfg.paths.augment_manifest, rows, size) if cfg.paths.augment_manifest else None
    data = TrainData(parts["train"], parts["val"], parts["test"], class_names, extra)
    resume = Checkpoint.load(args.resume) if args.resume else None
    out.mkdir(parents=True, exist_ok=True)
    ckpt, report = train(data, cfg, resume=resume, on_epoch=lambda r: print(r.line(), flush=True))
    ckpt.save(out / "checkpoint.ckpt")
    report.write(out, "report")
    _write_history(out / "history.csv", report.history, _provenance(cfg))
    _write_text(out / "config.yaml", dump_config(cfg))
    for split, m in report.splits.items():
        print(f"{split}_acc={m.accuracy:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(_require(args.checkpoint, "--checkpoint"))
    cfg = from_dict(ckpt.config)
    manifest = _require(args.manifest or cfg.paths.manifest, "--manifest")
    root = _require(args.dataset or cfg.paths.dataset, "--dataset")
    rows = read_split_manifest(manifest)
    meta = read_manifest_meta(manifest)
    class_names = meta.get("class_names") or [str(k) for k in range(max(r.cls for r in rows) + 1)]
    if len(class_names) != cfg.model.num_classes:
        raise DatasetError(f"checkpoint predicts {cfg.model.num_classes} classes but {manifest} defines "
                           f"{len(class_names)}")
    sel = [r for r in rows if args.split == "all" or r.split == args.split]
    if not sel:
        raise DatasetError(f"{manifest}: no rows in split {args.split!r}")
    data = ImageSet(_load_images(root, [r.image for r in sel], cfg.model.image_size), [r.cls for r in sel])
    report = evaluate(ckpt, data, cfg.train.eval_batch_size, args.split, class_names)
    out = Path(args.out or Path(args.checkpoint).parent)
    report.write(out, f"eval_{args.split}")
    print(f"{args.split}_acc={report.accuracy(args.split):.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .checks import model_gradcheck
    cfg = _config(args)
    reports = model_gradcheck(cfg, batch=args.batch, seed=cfg.seed, max_coords=args.max_coords, tol=args.tol)
    lines = [r.line() for r in reports]
    failed = [r for r in reports if not r.passed]
    worst = max(reports, key=lambda r: r.max_rel_err)
    lines.append(f"{len(reports) - len(failed)}/{len(reports)} parameter groups within {args.tol:g}; "
                 f"worst {worst.name} {worst.max_rel_err:.3e}")
    text = "\n".join(lines) + "\n"
    if args.out:
        prov = "# " + json.dumps(_provenance(cfg), sort_keys=True) + "\n"
        _write_text(Path(args.out), prov + text)
    sys.stdout.write(text)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_synth(args) -> int:
    counts = [int(c) for c in args.counts.split(",")]
    names = args.classes.split(",") if args.classes else ISIC2019_CLASSES
    if len(names) < len(counts):
        raise UsageError(f"{len(counts)} counts but only {len(names)} class names")
    ds = write_fixture(args.out, counts, size=args.size, seed=args.seed if args.seed is not None else 0,
                       class_names=names)
    print(f"{len(ds)} images, {len(counts)} classes -> {args.out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .ablation import run_ablation
    seeds = [int(s) for s in args.seeds.split(",")]
    result = run_ablation(seeds, epochs=args.epochs)
    table = result.table()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps(
            {"seeds": seeds, "class_names": result.class_names, "counts": result.counts,
             "runs": [r.__dict__ for r in result.runs]}, indent=2, sort_keys=True) + "\n")
        (out / "ablation.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------
def _fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad fractions {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="swinlesion", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, *flags):
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="root seed (overrides the config)")
        for f in flags:
            sp.add_argument(f"--{f}")
        return sp

    s = common(sub.add_parser("stats", help="class distribution report"), "gt", "dataset", "out")
    s.set_defaults(func=cmd_stats)

    s = common(sub.add_parser("split", help="stratified train/val/test manifest"), "gt", "out")
    s.add_argument("--fractions", type=_fractions, help="train,val,test e.g. 0.7,0.15,0.15")
    s.set_defaults(func=cmd_split)

    s = common(sub.add_parser("augment", help="elastic copies of minority training images"),
               "manifest", "dataset", "out")
    s.add_argument("--threshold", type=int)
    s.add_argument("--multiplier", type=int)
    s.set_defaults(func=cmd_augment)

    s = common(sub.add_parser("train", help="train and write checkpoint + report"),
               "manifest", "dataset", "out")
    s.add_argument("--augment-manifest", dest="augment_manifest")
    s.add_argument("--epochs", type=int)
    s.add_argument("--resume", help="checkpoint to continue from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    for f in ("checkpoint", "manifest", "dataset", "out"):
        s.add_argument(f"--{f}")
    s.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    s.set_defaults(func=cmd_eval)

    s = common(sub.add_parser("gradcheck", help="finite-difference check of every parameter group"), "out")
    s.add_argument("--batch", type=int, default=3)
    s.add_argument("--max-coords", dest="max_coords", type=int, default=4)
    s.add_argument("--tol", type=float, default=1e-3)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("synth", help="write a synthetic PPM dataset + ground-truth CSV")
    s.add_argument("--out", required=True)
    s.add_argument("--counts", required=True, help="comma-separated images per class")
    s.add_argument("--classes", help="comma-separated class names")
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ablate", help="{ce,focal} x {batchformer off,on} on long-tailed synthetic data")
    s.add_argument("--seeds", default="0,1,2")
    s.add_argument("--epochs", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, DatasetError, SplitError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, FloatingPointError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
