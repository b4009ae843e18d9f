"""``edgesal`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, DatasetIndex, RunConfig, list_images
from .io import (
    DataError,
    atomic_write_bytes,
    read_gray,
    read_map,
    read_mask,
    read_rgb,
    to_uint8,
    write_csv,
    write_png,
)
from .labels import TriLabelMap, three_category_labels
from .metrics import N_THRESHOLDS, aggregate, evaluate_image
from .net import checkpoint
from .net.model import build_model
from .net.train import infer, train
from .rbd import rbd_saliency
from .synth import synth_dataset
from .tensor import ShapeError

log = logging.getLogger("edgesal")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3


class InvariantError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _meta(cfg: RunConfig) -> dict:
    return {"edgesal-version": __version__, "config-hash": cfg.config_hash(), "seed": cfg.seed}


def _out(cfg: RunConfig) -> Path:
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report_unmatched(index: DatasetIndex):
    for p in index.unmatched_images + index.unmatched_masks:
        log.warning("unmatched file: %s", p)


# ---------------------------------------------------------------------------
# commands

def cmd_relabel(cfg: RunConfig, args) -> int:
    _, mask_dir = cfg.dataset_dirs()
    out = _out(cfg)
    rows, failed = [], []
    for path in list_images(mask_dir):
        try:
            mask = read_mask(path)
        except DataError as exc:
            log.error("%s", exc)
            failed.append(path.name)
            continue
        labels = three_category_labels(mask)
        target = out / f"{path.stem}_label.png"
        write_png(target, labels.to_gray(), _meta(cfg))
        if TriLabelMap.from_gray(read_gray(target)) != labels:
            raise InvariantError(f"{target}: label image did not round-trip")
        nb, ne, ns = labels.counts
        rows.append((path.stem, nb, ne, ns, labels.edge_fraction))
    write_csv(out / "relabel.csv", ["name", "background", "edge", "object", "edge_fraction"], rows, _meta(cfg))
    mean_edge = float(np.mean([r[4] for r in rows])) if rows else 0.0
    print(f"relabeled {len(rows)} masks, {len(failed)} unreadable, mean edge fraction {mean_edge:.4f}")
    return EXIT_OK


def cmd_rbd(cfg: RunConfig, args) -> int:
    index = DatasetIndex.build(*cfg.dataset_dirs())
    _report_unmatched(index)
    out = _out(cfg)
    params = cfg.rbd_params()
    for image_path, _ in index.pairs:
        s = rbd_saliency(read_rgb(image_path), params)
        write_png(out / f"{image_path.stem}_rbd.png", to_uint8(s), _meta(cfg))
    print(f"wrote {index.n_matched} RBD maps to {out}")
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    n, size = int(cfg.values["synth"]["count"]), int(cfg.values["synth"]["size"])
    width = max(4, len(str(max(n - 1, 0))))
    for i, (img, mask) in enumerate(synth_dataset(n, size, cfg.seed)):
        if not mask.any():
            raise InvariantError(f"synthetic sample {i} has an empty mask")
        stem = f"{i:0{width}d}"
        write_png(out / "images" / f"{stem}.png", to_uint8(img), _meta(cfg))
        write_png(out / "masks" / f"{stem}.png", mask.astype(np.uint8) * 255, _meta(cfg))
    print(f"wrote {n} synthetic {size}x{size} samples to {out}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    from threadpoolctl import threadpool_limits

    index = DatasetIndex.build(*cfg.dataset_dirs())
    _report_unmatched(index)
    if not index.pairs:
        raise DataError("no matched image/mask pairs to train on")
    data = [(read_rgb(i), read_mask(m)) for i, m in index.pairs]
    out = _out(cfg)
    widths, fusion_width = cfg.model_plan()
    model = build_model(widths, cfg.seed, fusion_width)
    tcfg = cfg.train_config()

    def progress(row):
        if row.it % 100 == 0 or row.it == tcfg.max_iter - 1:
            log.info("iter %d lr %.3g loss %.4f / %.4f", row.it, row.lr, row.loss_frontend, row.loss_final)

    # the training loop is single-threaded by contract
    with threadpool_limits(limits=1):
        result = train(model, data, tcfg, cfg.rbd_params(), progress=progress)
    meta = _meta(cfg)
    checkpoint.save(out / "model.easal", result.model, meta)
    write_csv(
        out / "trace.csv",
        ["iter", "lr", "loss_frontend", "loss_final"],
        [(r.it, r.lr, r.loss_frontend, r.loss_final) for r in result.trace],
        meta,
    )
    header = "".join(f"# {k}: {v}\n" for k, v in sorted(meta.items()))
    atomic_write_bytes(out / "config.yaml", (header + cfg.dump()).encode())
    print(f"trained {len(result.trace)} iterations on {len(data) - result.n_skipped} pairs "
          f"({result.n_skipped} skipped); checkpoint {out / 'model.easal'}")
    return EXIT_OK


def cmd_infer(cfg: RunConfig, args) -> int:
    model, _ = checkpoint.load(args.checkpoint)
    image_dir = Path(args.images) if args.images else cfg.dataset_dirs()[0]
    if not image_dir.is_dir():
        raise DataError(f"image directory {image_dir} does not exist")
    out = _out(cfg)
    params = cfg.rbd_params()
    paths = list_images(image_dir)
    for path in paths:
        sal, edge, _ = infer(model, read_rgb(path), rbd_params=params)
        if not (np.all(sal >= 0) and np.all(sal + edge <= 1 + 1e-12)):
            raise InvariantError(f"{path}: class probabilities left the simplex")
        write_png(out / f"{path.stem}_sal.png", to_uint8(sal), _meta(cfg))
        write_png(out / f"{path.stem}_edge.png", to_uint8(edge), _meta(cfg))
    print(f"wrote saliency and edge maps for {len(paths)} images to {out}")
    return EXIT_OK


def _eval_pairs(cfg: RunConfig, args):
    gt_dir = Path(args.gt) if args.gt else cfg.dataset_dirs()[1]
    pred_dir = Path(args.pred)
    for d in (gt_dir, pred_dir):
        if not d.is_dir():
            raise DataError(f"directory {d} does not exist")
    preds = {p.stem: p for p in list_images(pred_dir)}
    triples, missing = [], []
    for gt_path in list_images(gt_dir):
        pred = preds.get(gt_path.stem + args.suffix) or preds.get(gt_path.stem)
        if pred is None:
            log.warning("no prediction for %s", gt_path.name)
            missing.append(gt_path.stem)
            continue
        triples.append((gt_path.stem, read_map(pred), read_mask(gt_path)))
    if not triples:
        raise DataError(f"no prediction in {pred_dir} pairs with a mask in {gt_dir}")
    reports = []
    for name, s, gt in triples:
        try:
            reports.append(evaluate_image(s, gt, name))
        except ValueError as exc:
            log.warning("%s: %s", name, exc)
            missing.append(name)
    if not reports:
        raise DataError("every pair failed to evaluate")
    return aggregate(reports, skipped=missing)


def _write_pr(path, report, meta):
    rows = [(t, report.precision[t], report.recall[t], report.f[t]) for t in range(N_THRESHOLDS)]
    write_csv(path, ["threshold", "precision", "recall", "f"], rows, meta)


def cmd_eval(cfg: RunConfig, args) -> int:
    report = _eval_pairs(cfg, args)
    out = _out(cfg)
    meta = _meta(cfg)
    rows = [(r.name, r.mae, r.max_f, r.mean_f, int(r.degenerate)) for r in report.images]
    rows.append(("#aggregate:curve_mean", report.mean_mae, report.max_f, report.mean_f, ""))
    rows.append(("#aggregate:per_image", report.mean_mae, report.max_f_per_image, report.mean_f_per_image, ""))
    rows.append(("#skipped", report.n_skipped, "", "", ""))
    write_csv(out / "report.csv", ["name", "mae", "max_f", "mean_f", "degenerate"], rows, meta)
    _write_pr(out / "pr.csv", report, meta)
    print(f"evaluated {report.n_evaluated} images ({report.n_skipped} skipped): "
          f"MAE {report.mean_mae:.4f}, max F {report.max_f:.4f}, mean F {report.mean_f:.4f}")
    return EXIT_OK


def cmd_export_pr(cfg: RunConfig, args) -> int:
    report = _eval_pairs(cfg, args)
    _write_pr(_out(cfg) / "pr.csv", report, _meta(cfg))
    print(f"wrote a {N_THRESHOLDS}-point PR curve over {report.n_evaluated} images")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key, e.g. --set train.max_iter=200")
    common.add_argument("--data", help="dataset root (dataset.root)")
    common.add_argument("--out", help="output directory (output)")
    common.add_argument("--seed", type=int, help="random seed (seed)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="edgesal", description="Edge-aware saliency toolkit.")
    parser.add_argument("--version", action="version", version=f"edgesal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("relabel", parents=[common], help="masks -> three-category label images")
    sub.add_parser("rbd", parents=[common], help="boundary-connectivity saliency priors")
    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--count", type=int, help="number of samples (synth.count)")
    p.add_argument("--size", type=int, help="image side length (synth.size)")
    p = sub.add_parser("train", parents=[common], help="train the network")
    p.add_argument("--iters", type=int, help="iterations (train.max_iter)")
    p = sub.add_parser("infer", parents=[common], help="saliency and salient-edge maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", help="image directory (default: <data>/images)")
    for name, help_ in (("eval", "MAE / F-measure report and PR curve"), ("export-pr", "PR curve CSV only")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--pred", required=True, help="directory of predicted maps")
        p.add_argument("--gt", help="directory of ground-truth masks (default: <data>/masks)")
        p.add_argument("--suffix", default="_sal", help="prediction stem suffix (default _sal)")
    return parser


COMMANDS = {
    "relabel": cmd_relabel,
    "rbd": cmd_rbd,
    "synth": cmd_synth,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "export-pr": cmd_export_pr,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    flags = {"seed": args.seed, "output": args.out, "dataset__root": args.data}
    for attr, key in (("count", "synth__count"), ("size", "synth__size"), ("iters", "train__max_iter")):
        flags[key] = getattr(args, attr, None)
    try:
        cfg = RunConfig.load(args.config, args.set, **flags)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"edgesal: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError, checkpoint.CheckpointError, OSError) as exc:
        print(f"edgesal: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantError, AssertionError) as exc:
        print(f"edgesal: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
