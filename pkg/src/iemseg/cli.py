"""Batch command-line front end.

    iemseg segment  --input IMAGES --output OUT [options]
    iemseg evaluate --pred OUT --gt MASKS [--flip-search]
    iemseg synth    --output CORPUS --count N --seed S

Every option can also be set through an environment variable named
``IEMSEG_<OPTION>`` (upper case, dashes as underscores), e.g.
``IEMSEG_ITERATIONS=50``.  Command-line flags win over the environment.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import VARIANT_NAMES, IemConfig, ObjectiveVariant
from .imaging import ImageDecodeError, load_image, load_mask, preprocess, save_image, save_mask
from .inpaint import KernelSpec
from .metrics import evaluate_batch, score
from .optimizer import multi_init_run
from .synth import SHAPES, corpus_specs, gen_layered

log = logging.getLogger("iemseg")

ENV_PREFIX = "IEMSEG_"
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
CSV_COLUMNS = ["image_id", "init_size", "accuracy", "iou", "dice", "flipped", "final_L_inp", "degenerate"]
MEAN_ROW_ID = "mean"


class UsageError(Exception):
    """Bad flags or unusable input/output locations (exit status 2)."""


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _strip_mask_suffix(stem: str) -> str:
    return stem[:-5] if stem.endswith("_mask") else stem


def _list_images(directory: Path, file_list: Path | None = None) -> list[Path]:
    if file_list is not None:
        names = [ln.strip() for ln in file_list.read_text().splitlines() if ln.strip()]
        return [directory / n for n in names]
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


# ---------------------------------------------------------------- manifest

def write_manifest(path: Path, entries: dict[str, str]) -> None:
    with open(path, "w") as f:
        for key, value in entries.items():
            f.write(f"{key}={value}\n")


def read_manifest(path: Path) -> dict[str, str]:
    entries = {}
    for line in Path(path).read_text().splitlines():
        if line and not line.startswith("#") and "=" in line:
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries


# ---------------------------------------------------------------- segment

def config_from_args(args) -> IemConfig:
    try:
        sizes = tuple(int(s) for s in str(args.init_sizes).split(",") if s.strip())
        return IemConfig(
            kernel=KernelSpec(args.kernel_size, args.sigma, stacked=not args.no_stack),
            lam=args.lam,
            variant=ObjectiveVariant.from_name(args.objective),
            iterations=args.iterations,
            init_sizes=sizes,
            regularizer=not args.no_regularizer,
            smoothing=not args.no_smoothing,
            boundary_restricted=not args.unrestricted_updates,
            strict_iterations=args.strict_iterations,
            selection=args.selection,
            fallback=args.fallback,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _segment_one(job):
    path, cfg, target = job
    try:
        img = load_image(path, channels=3)
    except ImageDecodeError as exc:
        return path, None, str(exc)
    x = preprocess(img, target)
    return path, multi_init_run(x, cfg), None


def cmd_segment(args) -> int:
    t0 = time.perf_counter()
    cfg = config_from_args(args)
    src = Path(args.input)
    out = Path(args.output)
    if not src.is_dir():
        raise UsageError(f"input directory {src} does not exist")
    if any(s >= args.target_size for s in cfg.init_sizes):
        raise UsageError(f"init sizes {cfg.init_sizes} must be smaller than --target-size {args.target_size}")
    if args.flip_search and not args.gt:
        raise UsageError("--flip-search needs --gt")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from exc

    file_list = Path(args.file_list) if args.file_list else None
    paths = _list_images(src, file_list)
    jobs = [(p, cfg, args.target_size) for p in paths]
    n_workers = max(1, args.jobs or os.cpu_count() or 1)
    t1 = time.perf_counter()
    if n_workers == 1 or len(jobs) <= 1:
        outcomes = [_segment_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(_segment_one, jobs, chunksize=1))
    t2 = time.perf_counter()

    gt_dir = Path(args.gt) if args.gt else None
    rows, trace_rows, skipped = [], [], []
    for path, res, err in outcomes:
        if res is None:
            log.warning("skipping %s: %s", path.name, err)
            skipped.append(path.name)
            continue
        stem = path.stem
        save_mask(res.mask, out / f"{stem}_mask.png")
        metrics = None
        if gt_dir is not None:
            gt_path = _find_gt(gt_dir, stem)
            if gt_path is None:
                log.warning("no ground truth for %s", stem)
            else:
                metrics = score(res.mask, _load_gt(gt_path, res.mask.shape[0], args.threshold), args.flip_search)
        rows.append(_result_row(stem, res.init_size, metrics, res.final_inpainting, res.degenerate))
        for it, l_iem, l_inp in res.objective_trace:
            trace_rows.append([stem, res.init_size, it, _fmt(l_iem), _fmt(l_inp)])

    _write_csv(out / "results.csv", CSV_COLUMNS, rows)
    _write_csv(out / "traces.csv", ["image_id", "init_size", "iteration", "L_IEM", "L_inp"], trace_rows)
    t3 = time.perf_counter()

    manifest = {"tool": "iemseg", "version": __version__}
    manifest.update(cfg.to_flat())
    manifest.update({
        "input": str(src.resolve()),
        "output": str(out.resolve()),
        "file_list": str(file_list.resolve()) if file_list else "",
        "gt": str(gt_dir.resolve()) if gt_dir else "",
        "target_size": str(args.target_size),
        "threshold": str(args.threshold),
        "flip_search": str(args.flip_search),
        "jobs": str(n_workers),
        "images_found": str(len(paths)),
        "images_processed": str(len(rows)),
        "images_skipped": str(len(skipped)),
        "skipped": ",".join(skipped),
        "seconds_setup": f"{t1 - t0:.3f}",
        "seconds_segment": f"{t2 - t1:.3f}",
        "seconds_write": f"{t3 - t2:.3f}",
    })
    write_manifest(out / "manifest.txt", manifest)
    log.info("segmented %d images (%d skipped) in %.1fs", len(rows), len(skipped), t3 - t0)
    return 0


def _result_row(image_id, init_size, metrics, final_l_inp, degenerate):
    return [
        image_id,
        _fmt(init_size),
        _fmt(metrics.accuracy) if metrics else "",
        _fmt(metrics.iou) if metrics else "",
        _fmt(metrics.dice) if metrics else "",
        _fmt(metrics.flipped) if metrics else "",
        _fmt(final_l_inp),
        _fmt(degenerate),
    ]


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------- evaluate

def _find_gt(gt_dir: Path, stem: str) -> Path | None:
    for p in sorted(gt_dir.iterdir()):
        if p.suffix.lower() in IMAGE_SUFFIXES and _strip_mask_suffix(p.stem) == stem:
            return p
    return None


def _load_gt(path: Path, side: int, threshold: int) -> np.ndarray:
    """Binarize a ground-truth mask, bringing it to ``side`` x ``side`` if needed."""
    mask = load_mask(path, threshold)
    if mask.shape == (side, side):
        return mask
    gray = load_image(path).mean(axis=0, keepdims=True)
    return (preprocess(gray, side)[0] >= threshold / 255.0).astype(np.uint8)


def cmd_evaluate(args) -> int:
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise UsageError(f"directory {d} does not exist")
    preds = {_strip_mask_suffix(p.stem): p for p in _list_images(pred_dir)}
    gts = {_strip_mask_suffix(p.stem): p for p in _list_images(gt_dir)}
    stems = sorted(preds.keys() & gts.keys())
    if not stems:
        raise UsageError(f"no matching file stems between {pred_dir} and {gt_dir}")

    extra = {}
    results_csv = pred_dir / "results.csv"
    if results_csv.exists():
        with open(results_csv, newline="") as f:
            for row in csv.DictReader(f):
                extra[row["image_id"]] = row

    pairs = []
    for stem in stems:
        pred = load_mask(preds[stem], args.threshold)
        pairs.append((pred, _load_gt(gts[stem], pred.shape[0], args.threshold)))
    batch = evaluate_batch(pairs, flip_search=args.flip_search)

    rows = []
    for stem, m in zip(stems, batch.per_image):
        info = extra.get(stem, {})
        rows.append([stem, info.get("init_size", ""), _fmt(m.accuracy), _fmt(m.iou), _fmt(m.dice),
                     _fmt(m.flipped), info.get("final_L_inp", ""), info.get("degenerate", "")])
    mean = batch.mean
    rows.append([MEAN_ROW_ID, "", _fmt(mean.accuracy), _fmt(mean.iou), _fmt(mean.dice),
                 _fmt(batch.flipped_fraction), "", ""])
    out = Path(args.output) if args.output else pred_dir / "evaluation.csv"
    try:
        _write_csv(out, CSV_COLUMNS, rows)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from exc
    print(f"images={len(stems)} accuracy={mean.accuracy:.4f} iou={mean.iou:.4f} dice={mean.dice:.4f}")
    return 0


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    out = Path(args.output)
    shapes = tuple(s for s in args.shapes.split(",") if s)
    if args.count < 1:
        raise UsageError("--count must be positive")
    try:
        specs = corpus_specs(args.count, args.seed, side=args.side, kind=args.kind, shapes=shapes)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out}: {exc}") from exc
    for i, spec in enumerate(specs):
        image, mask = gen_layered(spec)
        name = f"synth_{i:04d}.png"
        save_image(image, out / "images" / name)
        save_mask(mask, out / "masks" / name)
    write_manifest(out / "synth_manifest.txt", {
        "tool": "iemseg", "version": __version__, "count": str(args.count), "seed": str(args.seed),
        "side": str(args.side), "kind": args.kind, "shapes": ",".join(shapes),
    })
    log.info("wrote %d synthetic images to %s", args.count, out)
    return 0


# ---------------------------------------------------------------- parser

def _add_segment_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="directory of PNG/JPEG images")
    p.add_argument("--output", required=True, help="directory for masks, CSVs and manifest")
    p.add_argument("--file-list", help="text file naming the images to use, one per line")
    p.add_argument("--gt", help="optional ground-truth mask directory for inline scoring")
    p.add_argument("--from-manifest", help="take defaults from a previous run's manifest.txt")
    p.add_argument("--iterations", type=int, default=150)
    p.add_argument("--lambda", dest="lam", type=float, default=0.001, help="diversity regularizer strength")
    p.add_argument("--kernel-size", type=int, default=21)
    p.add_argument("--sigma", type=float, default=5.0)
    p.add_argument("--no-stack", action="store_true", help="apply the Gaussian directly instead of as two passes")
    p.add_argument("--init-sizes", default="44,78,92", help="comma-separated centered-square sizes")
    p.add_argument("--objective", choices=VARIANT_NAMES, default="l1-mask")
    p.add_argument("--no-regularizer", action="store_true")
    p.add_argument("--no-smoothing", action="store_true")
    p.add_argument("--unrestricted-updates", action="store_true", help="flip any pixel, not only boundary pixels")
    p.add_argument("--strict-iterations", action="store_true", help="never stop early at a fixed point")
    p.add_argument("--selection", choices=("inpainting", "objective"), default="inpainting")
    p.add_argument("--fallback", choices=("mean", "zero"), default="mean")
    p.add_argument("--target-size", type=int, default=128)
    p.add_argument("--threshold", type=int, default=128, help="gray level at which ground truth counts as foreground")
    p.add_argument("--flip-search", action="store_true")
    p.add_argument("--jobs", type=int, default=0, help="worker processes (0 = all CPUs)")


_MANIFEST_TO_DEST = {
    "iterations": "iterations", "lam": "lam", "kernel_size": "kernel_size", "sigma": "sigma",
    "init_sizes": "init_sizes", "objective": "objective", "selection": "selection",
    "fallback": "fallback", "target_size": "target_size", "threshold": "threshold",
}
_MANIFEST_NEGATED = {
    "stacked": "no_stack", "regularizer": "no_regularizer", "smoothing": "no_smoothing",
    "boundary_restricted": "unrestricted_updates",
}


def _manifest_defaults(path: str, parser: argparse.ArgumentParser) -> dict:
    entries = read_manifest(Path(path))
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, dest in _MANIFEST_TO_DEST.items():
        if key in entries:
            conv = actions[dest].type or str
            defaults[dest] = conv(entries[key])
    for key, dest in _MANIFEST_NEGATED.items():
        if key in entries:
            defaults[dest] = entries[key] != "True"
    if "strict_iterations" in entries:
        defaults["strict_iterations"] = entries["strict_iterations"] == "True"
    for key in ("file_list", "input"):
        if entries.get(key):
            defaults[key] = entries[key]
    return defaults


def _apply_env(parser: argparse.ArgumentParser) -> None:
    for action in parser._actions:
        if not action.option_strings or action.dest == "help":
            continue
        name = ENV_PREFIX + action.option_strings[-1].lstrip("-").replace("-", "_").upper()
        if name not in os.environ:
            continue
        raw = os.environ[name]
        if isinstance(action, argparse._StoreTrueAction):
            value = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            value = action.type(raw) if action.type else raw
        action.default = value
        action.required = False


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iemseg", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment every image in a directory")
    _add_segment_options(seg)
    seg.set_defaults(func=cmd_segment)

    ev = sub.add_parser("evaluate", help="score predicted masks against ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--output", help="CSV path (default: PRED/evaluation.csv)")
    ev.add_argument("--flip-search", action="store_true")
    ev.add_argument("--threshold", type=int, default=128)
    ev.set_defaults(func=cmd_evaluate)

    syn = sub.add_parser("synth", help="generate a planted-shape corpus")
    syn.add_argument("--output", required=True)
    syn.add_argument("--count", type=int, default=10)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--side", type=int, default=128)
    syn.add_argument("--kind", choices=("constant", "textured", "mixed"), default="mixed")
    syn.add_argument("--shapes", default=",".join(SHAPES))
    syn.set_defaults(func=cmd_synth)

    for p in (seg, ev, syn):
        _apply_env(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if "segment" in argv and "--from-manifest" in argv:
        manifest = argv[argv.index("--from-manifest") + 1]
        seg = parser._subparsers._group_actions[0].choices["segment"]
        defaults = _manifest_defaults(manifest, seg)
        seg.set_defaults(**defaults)
        if "input" in defaults:
            for action in seg._actions:
                if action.dest == "input":
                    action.required = False
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
