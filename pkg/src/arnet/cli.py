"""``arnet`` command line: train, score, eval, gradcheck, synth.

Exit codes: 0 ok, 1 runtime failure, 2 configuration error.

A run is described by a JSON config whose keys are the fields of
``RunConfig``; command-line flags override it. The effective config (minus
output paths) is embedded in every checkpoint.
"""
import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import data as D
from . import gradcheck
from .checkpoint import atomic_write, canonical_json, load, save
from .erasing import ErasingOpSet
from .errors import ArnetError, ConfigError
from .evaluator import one_vs_rest, summarize
from .model import ArchConfig
from .scorer import score_normalized
from .trainer import TrainConfig, train

log = logging.getLogger("arnet")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
DEFAULT_ERASING = ("gray", "rot90")


@dataclass
class RunConfig:
    data: str = None
    layout: str = "class/split"   # image folders only
    class_id: int = None
    classes: list = None
    erasing: list = field(default_factory=lambda: list(DEFAULT_ERASING))
    width: float = 1.0
    size: int = None              # None: smallest multiple of 16 that fits
    batch_size: int = 32
    lr: float = 0.1
    epochs: int = None
    halving_period: int = None
    seed: int = 0
    hflip: bool = None            # None: on for RGB, off for grayscale
    shift: bool = None
    out: str = None
    csv: str = None
    strict: bool = False

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def effective(self):
        """Config as embedded in checkpoints: output paths are not part of the run."""
        d = asdict(self)
        for k in ("out", "csv"):
            d.pop(k)
        return d


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config field 'config': cannot read {path} ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg


def _csv_list(text, cast=str):
    if text is None:
        return None
    return [cast(t.strip()) for t in text.split(",") if t.strip()]


def build_config(args):
    cfg = RunConfig.from_dict(_load_config(args.config))
    overrides = {}
    for name in ("data", "class_id", "width", "size", "batch_size", "lr", "epochs",
                 "halving_period", "seed", "hflip", "shift", "out", "csv", "layout"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "erasing", None) is not None:
        overrides["erasing"] = _csv_list(args.erasing)
    if getattr(args, "classes", None) is not None:
        overrides["classes"] = _csv_list(args.classes, int)
    if getattr(args, "strict", False):
        overrides["strict"] = True
    return replace(cfg, **overrides)


# --- data ---------------------------------------------------------------

def _require_data(cfg):
    if cfg.data is None:
        raise ConfigError("config field 'data' is required")
    if not Path(cfg.data).exists():
        raise ConfigError(f"config field 'data': path {cfg.data} does not exist")


def load_split(cfg, split):
    """Read one split and pad/crop it to the working size; returns ``(Dataset, preprocess)``."""
    _require_data(cfg)
    root = Path(cfg.data)
    if root.is_dir() and D.find_idx(root, split)[0] is not None:
        ds = D.read_idx_dir(root, split)
    elif root.is_dir():
        ds = D.read_image_dir(root, split, cfg.layout, strict=cfg.strict)
    else:
        raise ConfigError(f"config field 'data': {root} is not a dataset directory")
    source = list(ds.shape[-2:])
    size = cfg.size or D.default_size(ds.shape)
    if size % 16:
        raise ConfigError(f"config field 'size': {size} is not a multiple of 16")
    images = D.fit_to_size(ds.images, size)
    pre = {"source_hw": source, "size": size, "pad_value": -1.0}
    return D.Dataset(images, ds.labels, split, ds.class_names, ds.ids), pre


def _train_config(cfg, channels, seed):
    rgb = channels == 3
    return TrainConfig(batch_size=cfg.batch_size, base_lr=cfg.lr, epochs=cfg.epochs,
                       lr_halving_period=cfg.halving_period, seed=seed,
                       hflip=rgb if cfg.hflip is None else cfg.hflip,
                       shift=rgb if cfg.shift is None else cfg.shift)


def _arch(cfg, ops, channels, size):
    return ArchConfig(ops.output_channels(channels), channels, cfg.width, size)


def _write_text(path, text):
    atomic_write(path, text.encode())


# --- commands -------------------------------------------------------------

def cmd_train(cfg):
    if cfg.out is None:
        raise ConfigError("config field 'out' is required")
    if cfg.class_id is None:
        raise ConfigError("config field 'class_id' is required")
    ds, pre = load_split(cfg, "train")
    normal = ds.of_class(cfg.class_id)
    if len(normal) == 0:
        raise ConfigError(f"config field 'class_id': class {cfg.class_id} has no training images")
    ops = ErasingOpSet.from_names(cfg.erasing)
    c, size = normal.images.shape[1], normal.images.shape[-1]
    ckpt, report = train(normal.images, ops, _arch(cfg, ops, c, size),
                         _train_config(cfg, c, cfg.seed))
    ckpt.meta["run"] = cfg.effective()
    ckpt.meta["preprocess"] = pre
    save(ckpt, cfg.out)
    _write_text(f"{cfg.out}.report.json", json.dumps(report.to_dict(), indent=2) + "\n")
    log.info("wrote %s (final loss %.6g)", cfg.out, report.epoch_losses[-1])
    return EXIT_OK


def _prepare_input(img, ckpt):
    """Apply the checkpoint's recorded padding; ``None`` if the image cannot fit."""
    pre = ckpt.meta.get("preprocess", {})
    want = (ckpt.arch.out_channels, ckpt.arch.input_size, ckpt.arch.input_size)
    if img.shape == want:
        return img
    if img.shape[0] == want[0] and list(img.shape[-2:]) == pre.get("source_hw"):
        return D.fit_to_size(img[None], want[-1], pre.get("pad_value", -1.0))[0]
    return None


def _score_inputs(cfg, paths, split):
    """Yield ``(id, image or None, error)`` for IDX/folder data and loose image files."""
    if cfg.data is not None:
        _require_data(cfg)
        root = Path(cfg.data)
        if root.is_dir() and D.find_idx(root, split)[0] is not None:
            ds = D.read_idx_dir(root, split)
        elif root.is_dir():
            ds = D.read_image_dir(root, split, cfg.layout, strict=cfg.strict)
        else:
            raise ConfigError(f"config field 'data': {root} is not a dataset directory")
        ids = ds.ids or [str(i) for i in range(len(ds))]
        for sid, img in zip(ids, ds.images):
            yield sid, img, None
    for p in paths:
        try:
            decoded = D.read_image_files([p], strict=True)
        except ArnetError as exc:
            yield str(p), None, str(exc)
            continue
        yield str(p), decoded[0][1], None


def cmd_score(cfg, checkpoint, paths, split="test"):
    if checkpoint is None:
        raise ConfigError("config field 'checkpoint' is required")
    ckpt = load(checkpoint)
    rows, failures = [], 0
    for sid, img, err in _score_inputs(cfg, paths, split):
        if img is not None:
            x = _prepare_input(img, ckpt)
            if x is None:
                err = (f"image shape {img.shape} does not match checkpoint input "
                       f"{(ckpt.arch.out_channels, ckpt.arch.input_size, ckpt.arch.input_size)}")
        if err is not None:
            failures += 1
            rows.append({"id": sid, "error": err})
            log.warning("%s: %s", sid, err)
            continue
        rows.append(score_normalized(ckpt, x, sid).to_dict())
    text = "".join(json.dumps(r) + "\n" for r in rows)
    if cfg.out:
        _write_text(cfg.out, text)
    else:
        sys.stdout.write(text)
    if cfg.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = ErasingOpSet.from_names(ckpt.erasing).n_selections
        w.writerow(["id", "score"] + [f"error_{k}" for k in range(n)] + ["error"])
        for r in rows:
            if "error" in r and "score" not in r:
                w.writerow([r["id"], ""] + [""] * n + [r["error"]])
            else:
                w.writerow([r["id"], repr(r["score"])] + [repr(e) for e in r["errors"]] + [""])
        _write_text(cfg.csv, buf.getvalue())
    return EXIT_RUNTIME if failures and cfg.strict else EXIT_OK


def cmd_eval(cfg):
    if cfg.out is None:
        raise ConfigError("config field 'out' is required")
    train_set, pre = load_split(cfg, "train")
    test_set, _ = load_split(replace(cfg, size=pre["size"]), "test")
    present = sorted(int(c) for c in np.unique(train_set.labels))
    classes = cfg.classes if cfg.classes is not None else present
    missing = sorted(set(classes) - set(present))
    if missing:
        raise ConfigError(f"config field 'classes': no training images for {missing}")
    ops = ErasingOpSet.from_names(cfg.erasing)
    c, size = train_set.images.shape[1], train_set.images.shape[-1]
    arch = _arch(cfg, ops, c, size)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    per_class, counts, failed = {}, {}, {}
    for cid in classes:
        seed = cfg.seed + cid
        try:
            res = one_vs_rest(train_set, test_set, cid, cfg.erasing, arch,
                              _train_config(cfg, c, seed))
        except ArnetError as exc:
            log.error("class %d failed: %s", cid, exc)
            failed[cid] = str(exc)
            continue
        per_class[cid] = res.auroc
        counts[cid] = {"train": res.n_train, "normal": res.n_normal, "anomalous": res.n_anomalous}
        row = {"class_id": cid, "seed": seed, "auroc": res.auroc, **counts[cid]}
        _write_text(out / f"class_{cid}.json", json.dumps(row, indent=2) + "\n")
        log.info("class %d: AUROC %.4f", cid, res.auroc)
    summary = {"run": cfg.effective(), "failed": {str(k): v for k, v in failed.items()}}
    if per_class:
        rep = summarize(per_class)
        rep.counts = counts
        summary.update(rep.to_dict())
    _write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "auroc_percent"])
    if per_class:
        for cid, v in rep.per_class.items():
            w.writerow([cid, f"{v:.1f}"])
        w.writerow(["avg", f"{rep.average:.1f}"])
        w.writerow(["sd", f"{rep.sd:.2f}"])
    _write_text(Path(cfg.csv) if cfg.csv else out / "summary.csv", buf.getvalue())
    print(json.dumps({k: summary.get(k) for k in ("per_class", "average", "sd")}))
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_gradcheck(dtype, instances, seed, out):
    results = gradcheck.run(dtype, instances=instances, seed=seed)
    lines = ["op\tmax_rel_error\ttolerance\tinstances\tstatus"]
    for r in results:
        lines.append(f"{r.op}\t{r.max_rel_error:.3e}\t{r.tolerance:.0e}\t{r.instances}\t"
                     f"{'PASS' if r.passed else 'FAIL'}")
    print("\n".join(lines))
    if out:
        _write_text(out, canonical_json([r.to_dict() for r in results]) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def cmd_synth(out, n_per_class, n_test, size, seed):
    if out is None:
        raise ConfigError("config field 'out' is required")
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    for split, n, s in (("train", n_per_class, seed), ("test", n_test, seed + 1)):
        ds = D.synth_glyphs(n, size, seed=s, split=split)
        img_name, lbl_name = D.IDX_STEMS[split]
        D.write_idx(root / img_name, D.dataset_to_bytes(ds.images[:, 0]), D.IDX_IMAGES_MAGIC)
        D.write_idx(root / lbl_name, ds.labels.astype(np.uint8), D.IDX_LABELS_MAGIC)
    print(json.dumps({"out": str(root), "classes": ["L", "mirrored-L", "ring"],
                      "train_per_class": n_per_class, "test_per_class": n_test, "size": size}))
    return EXIT_OK


# --- argument parsing -----------------------------------------------------

def _run_flags(p, eval_cmd=False):
    p.add_argument("--config", help="JSON run config; flags override its keys")
    p.add_argument("--data", help="IDX directory or image-folder root")
    p.add_argument("--layout", choices=["class/split", "class"], default=None)
    p.add_argument("--erasing", help="comma-separated operators (gray, rot90, scale)")
    p.add_argument("--width", type=float, help="channel width multiplier")
    p.add_argument("--size", type=int, help="working image size (multiple of 16)")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float, help="base learning rate (per-pixel MSE units)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--halving-period", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--hflip", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--shift", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--out")
    if eval_cmd:
        p.add_argument("--classes", help="comma-separated class ids (default: all)")
        p.add_argument("--csv", help="summary CSV path (default: OUT/summary.csv)")
    else:
        p.add_argument("--class-id", type=int)


def make_parser():
    ap = argparse.ArgumentParser(prog="arnet", description="Attribute-restoration anomaly detection")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    _run_flags(sub.add_parser("train", help="train on one normal class"))

    sc = sub.add_parser("score", help="score images with a checkpoint")
    sc.add_argument("--checkpoint", required=True)
    sc.add_argument("--config")
    sc.add_argument("--data", help="score one split of this dataset")
    sc.add_argument("--split", choices=["train", "test"], default="test")
    sc.add_argument("--layout", choices=["class/split", "class"], default=None)
    sc.add_argument("--out", help="JSON-lines output (default stdout)")
    sc.add_argument("--csv", help="CSV mirror of the records")
    sc.add_argument("--strict", action="store_true", help="exit 1 if any input fails")
    sc.add_argument("inputs", nargs="*", help="image files")

    _run_flags(sub.add_parser("eval", help="one-vs-rest evaluation over classes"), eval_cmd=True)

    gc = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    gc.add_argument("--dtype", choices=sorted(gradcheck.PRECISION), default="float32")
    gc.add_argument("--instances", type=int, default=20)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--out", help="also write the results as JSON")

    sy = sub.add_parser("synth", help="write the synthetic glyph dataset as IDX files")
    sy.add_argument("--out", required=True)
    sy.add_argument("--n-per-class", type=int, default=200)
    sy.add_argument("--n-test", type=int, default=100, help="test images per class")
    sy.add_argument("--size", type=int, default=16)
    sy.add_argument("--seed", type=int, default=0)
    return ap


def _dispatch(args):
    if args.command == "gradcheck":
        return cmd_gradcheck(args.dtype, args.instances, args.seed, args.out)
    if args.command == "synth":
        return cmd_synth(args.out, args.n_per_class, args.n_test, args.size, args.seed)
    cfg = build_config(args)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "score":
        return cmd_score(cfg, args.checkpoint, args.inputs, args.split)
    return cmd_eval(cfg)


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"arnet: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArnetError, OSError) as exc:
        print(f"arnet: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
