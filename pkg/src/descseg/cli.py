"""Command-line interface.

Subcommands:

* ``phantom``     -- generate a synthetic mask + image + descriptor targets
* ``describe``    -- print the descriptor table of a mask (pretty/CSV/JSON)
* ``reconstruct`` -- train a predictor against descriptor constraints
* ``eval``        -- Dice table between a predicted and a reference mask
* ``plot``        -- colorized PPM panels (input | ground truth | prediction)

Exit codes: 0 success (all active constraints satisfied), 1 constraints
unsatisfied at termination, 2 usage/config error, 3 numerical failure.

Every subcommand that writes files drops a ``manifest.json`` next to them;
manifests are the only outputs allowed to differ between identical seeded
runs (they carry a timestamp).
"""

from __future__ import annotations

import argparse
import datetime
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .constraints import (
    BarrierParams,
    ConstraintSpec,
    RatioEntry,
    bounds_from_target,
    load_spec,
    save_spec,
    shared_centroid_prior,
    spec_to_dict,
)
from .descriptors import Connectivity, DescriptorSet, build_laplacian, describe
from .errors import FormatError, NumericalError, SpecError
from .evaluate import dice, report
from .grid import GridShape, LabelMask, argmax_labels, one_hot
from .netpbm import (
    image_to_u8,
    load_mask,
    read_pgm,
    save_mask,
    save_probmap,
    save_probmap_pgms,
    write_pgm,
    write_ppm,
)
from .optimizer import TrainConfig, train
from .phantom import PhantomKind, PhantomSpec, generate
from .predictors import make_predictor

EXIT_OK = 0
EXIT_UNSATISFIED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

_PALETTE = (
    (0, 0, 0),
    (214, 73, 51),
    (86, 170, 86),
    (68, 119, 204),
    (221, 170, 51),
    (170, 68, 153),
    (96, 192, 192),
)

_TRAIN_DEFAULTS = {
    "epochs": 50,
    "iters_per_epoch": 100,
    "lr": 5e-4,
    "beta1": 0.9,
    "beta2": 0.99,
    "eps": 1e-8,
    "seed": 0,
    "smooth_abs": False,
    "log_every": 50,
    "slack": 0.10,
    "t0": 5.0,
    "growth": 1.1,
    "t_max": 100.0,
    "predictor": "freefield",
    "connectivity": 8,
}


def _load_config(path) -> dict:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON config ({exc})") from exc
    if not isinstance(payload, dict):
        raise SpecError(f"{path}: config must be a flat JSON object")
    unknown = set(payload) - set(_TRAIN_DEFAULTS)
    if unknown:
        raise SpecError(f"{path}: unknown config keys {sorted(unknown)}")
    return payload


def _resolve(args, config: dict, key: str):
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key, _TRAIN_DEFAULTS[key])
    return value


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _pair(cell) -> str:
    return "-" if cell is None else f"({_fmt(cell[0])}, {_fmt(cell[1])})"


def descriptor_table(ds: DescriptorSet) -> str:
    """Pretty table, descriptors as rows and classes as columns.

    Adjacent classes whose centroid (or spread) cells are identical share one
    merged cell, mirroring how a shared target location is reported once.
    """
    ncols = ds.num_classes
    headers = ["descriptor (pixels)"] + [f"class {k}" for k in range(ncols)]

    def merged(cells):
        out, i = [], 0
        while i < ncols:
            span = 1
            while i + span < ncols and cells[i + span] == cells[i] and cells[i] != "-":
                span += 1
            out.append((cells[i], span))
            i += span
        return out

    rows = [
        ("volume", [(_fmt(c.volume), 1) for c in ds.classes]),
        ("centroid", merged([_pair(c.centroid) for c in ds.classes])),
        ("spread", merged([_pair(c.spread) for c in ds.classes])),
        ("length", [(_fmt(c.length), 1) for c in ds.classes]),
    ]

    widths = [len(headers[0])] + [len(h) for h in headers[1:]]
    for label, cells in rows:
        widths[0] = max(widths[0], len(label))
        col = 0
        for text, span in cells:
            if span == 1:
                widths[1 + col] = max(widths[1 + col], len(text))
            col += span
    for _, cells in rows:  # widen spanned columns when a merged cell overflows
        col = 0
        for text, span in cells:
            if span > 1:
                avail = sum(widths[1 + col : 1 + col + span]) + 3 * (span - 1)
                extra = len(text) - avail
                if extra > 0:
                    for j in range(span):
                        widths[1 + col + j] += -(-extra // span)
            col += span

    lines = [
        " | ".join(
            [headers[0].ljust(widths[0])]
            + [h.rjust(widths[1 + i]) for i, h in enumerate(headers[1:])]
        )
    ]
    lines.append("-+-".join("-" * w for w in widths))
    for label, cells in rows:
        parts = [label.ljust(widths[0])]
        col = 0
        for text, span in cells:
            field = sum(widths[1 + col : 1 + col + span]) + 3 * (span - 1)
            parts.append(text.rjust(field) if span == 1 else text.center(field))
            col += span
        lines.append(" | ".join(parts))
    for (f, k, l), value in sorted(ds.ratios.items()):
        lines.append(f"ratio {f} {k}/{l}: {_fmt(value)}")
    return "\n".join(lines)


def descriptor_csv(ds: DescriptorSet) -> str:
    lines = ["class,V,Cx,Cy,Dx,Dy,L"]
    for k, c in enumerate(ds.classes):
        if c.absent:
            lines.append(f"{k},{c.volume!r},,,,,{c.length!r}")
        else:
            lines.append(
                f"{k},{c.volume!r},{c.centroid[0]!r},{c.centroid[1]!r},"
                f"{c.spread[0]!r},{c.spread[1]!r},{c.length!r}"
            )
    return "\n".join(lines)


def _mask_to_rgb(mask: LabelMask) -> np.ndarray:
    colors = np.array(
        [_PALETTE[k % len(_PALETTE)] for k in range(mask.num_classes)],
        dtype=np.uint8,
    )
    return colors[mask.labels].reshape(mask.shape.height, mask.shape.width, 3)


def _write_manifest(out_dir: Path, subcommand: str, args, inputs: dict,
                    outputs: list[Path], extra: dict | None = None) -> None:
    payload = {
        "subcommand": subcommand,
        "config": getattr(args, "config", None),
        "seed": getattr(args, "seed", None),
        "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
        "outputs": sorted(p.name for p in outputs),
        "engine_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        payload.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(payload, indent=2) + "\n")


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommands -----------------------------------------------------------


def cmd_phantom(args) -> int:
    overrides = {
        "grid": GridShape(args.height, args.width),
        "seed": args.seed,
        "connectivity": Connectivity(args.connectivity),
    }
    if args.noise_sigma is not None:
        overrides["noise_sigma"] = args.noise_sigma
    for key in ("disk_radius", "ring_outer_radius", "blob_radius"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    for key in ("center", "blob_center"):
        if getattr(args, key) is not None:
            overrides[key] = tuple(getattr(args, key))
    if args.kind == "blob":
        grid = overrides.pop("grid")
        spec = PhantomSpec.blob(grid=grid, **overrides)
    else:
        spec = PhantomSpec.cardiac(**overrides)
    mask, image, targets = generate(spec)

    out = _outdir(args.out)
    save_mask(out / "mask.pgm", mask)
    write_pgm(out / "image.pgm", image_to_u8(image))
    (out / "targets.json").write_text(json.dumps(targets.to_dict(), indent=2) + "\n")
    (out / "targets.csv").write_text(descriptor_csv(targets) + "\n")
    outputs = [out / n for n in
               ("mask.pgm", "mask.pgm.json", "image.pgm", "targets.json", "targets.csv")]
    _write_manifest(out, "phantom", args, {}, outputs,
                    {"kind": args.kind, "grid": [args.height, args.width]})
    print(f"wrote {args.kind} phantom to {out}")
    return EXIT_OK


def cmd_describe(args) -> int:
    mask = load_mask(args.mask)
    lap = build_laplacian(mask.shape, Connectivity(args.connectivity))
    ratio_pairs = tuple(
        (f, int(k), int(l)) for f, k, l in (args.ratio or [])
    )
    ds = describe(mask, lap, ratio_pairs=ratio_pairs)
    if args.format == "json":
        text = json.dumps(ds.to_dict(), indent=2)
    elif args.format == "csv":
        text = descriptor_csv(ds)
    else:
        text = descriptor_table(ds)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _build_reconstruct_spec(args, config, mask, lap):
    slack = _resolve(args, config, "slack")
    barrier = BarrierParams(
        t0=_resolve(args, config, "t0"),
        growth=_resolve(args, config, "growth"),
        t_max=_resolve(args, config, "t_max"),
    )
    if args.spec:
        spec = load_spec(args.spec)
    else:
        targets = describe(mask, lap)
        spec = ConstraintSpec(bounds_from_target(targets, slack), barrier=barrier)
    ratios = list(spec.ratios)
    for f, k, l, a, b in args.ratio or []:
        try:
            ratios.append(RatioEntry(f, int(k), int(l), float(a), float(b)))
        except ValueError as exc:
            raise SpecError(f"bad --ratio {f} {k} {l} {a} {b}: {exc}") from exc
    spec = ConstraintSpec(spec.entries, tuple(ratios), spec.barrier)
    for k, l in args.shared_centroid or []:
        spec = shared_centroid_prior(spec, int(k), int(l))
    return spec


def cmd_reconstruct(args) -> int:
    config = _load_config(args.config) if args.config else {}
    if not args.mask and not args.spec:
        raise SpecError("reconstruct needs --mask or --spec")

    connectivity = Connectivity(int(_resolve(args, config, "connectivity")))
    mask = load_mask(args.mask) if args.mask else None

    image = None
    if args.image:
        image = read_pgm(args.image).astype(np.float64) / 255.0

    if mask is not None:
        grid = mask.shape
        num_classes = mask.num_classes
    elif image is not None:
        grid = GridShape(*image.shape)
        num_classes = None
    elif args.height and args.width:
        grid = GridShape(args.height, args.width)
        num_classes = None
    else:
        raise SpecError("spec-only runs need --height/--width (or --image)")

    lap = build_laplacian(grid, connectivity)
    spec = _build_reconstruct_spec(args, config, mask, lap)
    if num_classes is None:
        num_classes = args.classes or max(spec.max_class() + 1, 2)
    spec.check_classes(num_classes)

    predictor_name = _resolve(args, config, "predictor")
    predictor = make_predictor(predictor_name, grid, num_classes, image)
    train_config = TrainConfig(
        epochs=int(_resolve(args, config, "epochs")),
        iters_per_epoch=int(_resolve(args, config, "iters_per_epoch")),
        lr=float(_resolve(args, config, "lr")),
        beta1=float(_resolve(args, config, "beta1")),
        beta2=float(_resolve(args, config, "beta2")),
        eps=float(_resolve(args, config, "eps")),
        seed=int(_resolve(args, config, "seed")),
        smooth_abs=bool(_resolve(args, config, "smooth_abs")),
        log_every=int(_resolve(args, config, "log_every")),
    )

    result = train(predictor, spec, lap, train_config)

    out = _outdir(args.out)
    save_probmap(out / "probs.sspm", result.final_probs)
    save_mask(out / "pred.pgm", argmax_labels(result.final_probs))
    result.write_jsonl(out / "train_log.jsonl")
    (out / "entries.json").write_text(
        json.dumps([row.to_dict() for row in result.final_entries], indent=2) + "\n"
    )
    save_spec(out / "spec.json", spec)
    outputs = [out / n for n in
               ("probs.sspm", "pred.pgm", "pred.pgm.json", "train_log.jsonl",
                "entries.json", "spec.json")]
    outputs += save_probmap_pgms(out, result.final_probs)

    eval_summary = None
    if mask is not None:
        ev = report(result.final_probs, mask, spec, lap)
        payload = ev.to_dict()
        payload.pop("runtime_s")  # keep primary outputs byte-reproducible
        (out / "eval.json").write_text(json.dumps(payload, indent=2) + "\n")
        outputs.append(out / "eval.json")
        eval_summary = ev.mean_foreground_dice

    _write_manifest(
        out, "reconstruct", args,
        {"mask": args.mask, "spec": args.spec, "image": args.image},
        outputs,
        {"wall_clock_s": result.wall_clock_s, "aborted": result.aborted,
         "satisfied": result.satisfied, "predictor": predictor_name},
    )

    final_loss = result.loss_trace[-1] if result.loss_trace else float("nan")
    print(f"final loss {final_loss:.6g} after {len(result.loss_trace)} iterations")
    if eval_summary is not None:
        print(f"mean foreground dice {eval_summary:.4f}")
    if result.aborted is not None:
        print(f"aborted: {result.aborted}", file=sys.stderr)
        return EXIT_NUMERIC
    print("constraints satisfied" if result.satisfied else "constraints UNSATISFIED")
    return EXIT_OK if result.satisfied else EXIT_UNSATISFIED


def cmd_eval(args) -> int:
    pred = load_mask(args.pred)
    gt = load_mask(args.gt, num_classes=None)
    if pred.num_classes != gt.num_classes:
        k = max(pred.num_classes, gt.num_classes)
        pred = LabelMask(pred.shape, k, pred.labels)
        gt = LabelMask(gt.shape, k, gt.labels)
    dices = [dice(pred, gt, k) for k in range(gt.num_classes)]
    payload = {
        "dice_per_class": dices,
        "mean_foreground_dice": float(np.mean(dices[1:])),
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_plot(args) -> int:
    out = _outdir(args.out)
    outputs = []
    if args.image:
        gray = read_pgm(args.image)
        write_ppm(out / "input_panel.ppm", np.repeat(gray[:, :, None], 3, axis=2))
        outputs.append(out / "input_panel.ppm")
    if args.gt:
        write_ppm(out / "gt_panel.ppm", _mask_to_rgb(load_mask(args.gt)))
        outputs.append(out / "gt_panel.ppm")
    if args.pred:
        write_ppm(out / "pred_panel.ppm", _mask_to_rgb(load_mask(args.pred)))
        outputs.append(out / "pred_panel.ppm")
    if not outputs:
        raise SpecError("plot needs at least one of --image/--gt/--pred")
    _write_manifest(out, "plot", args,
                    {"image": args.image, "gt": args.gt, "pred": args.pred}, outputs)
    print(f"wrote {len(outputs)} panel(s) to {out}")
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="descseg",
        description="Train segmentations from global shape descriptors.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic scene")
    p.add_argument("--kind", choices=[k.value for k in PhantomKind], default="cardiac")
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=None)
    p.add_argument("--connectivity", type=int, choices=[4, 8], default=8)
    p.add_argument("--disk-radius", type=float, default=None)
    p.add_argument("--ring-outer-radius", type=float, default=None)
    p.add_argument("--blob-radius", type=float, default=None)
    p.add_argument("--center", type=float, nargs=2, metavar=("X", "Y"), default=None)
    p.add_argument("--blob-center", type=float, nargs=2, metavar=("X", "Y"),
                   default=None)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("describe", help="descriptor table of a mask")
    p.add_argument("mask")
    p.add_argument("--format", choices=["pretty", "csv", "json"], default="pretty")
    p.add_argument("--connectivity", type=int, choices=[4, 8], default=8)
    p.add_argument("--ratio", action="append", nargs=3, metavar=("F", "K", "L"),
                   default=None, help="include ratio F(K)/F(L) in the output")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("reconstruct", help="train against descriptor constraints")
    p.add_argument("--mask", default=None, help="derive targets from this mask")
    p.add_argument("--spec", default=None, help="constraint spec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="flat JSON config file")
    p.add_argument("--predictor", choices=["freefield", "coordnet"], default=None)
    p.add_argument("--image", default=None, help="intensity PGM (coordnet feature)")
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--iters-per-epoch", type=int, default=None, dest="iters_per_epoch")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--slack", type=float, default=None)
    p.add_argument("--smooth-abs", action="store_true", default=None, dest="smooth_abs")
    p.add_argument("--connectivity", type=int, choices=[4, 8], default=None)
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--growth", type=float, default=None)
    p.add_argument("--t-max", type=float, default=None, dest="t_max")
    p.add_argument("--log-every", type=int, default=None, dest="log_every")
    p.add_argument("--shared-centroid", action="append", nargs=2, type=int,
                   metavar=("K", "L"), default=None,
                   help="class K uses class L's centroid bounds")
    p.add_argument("--ratio", action="append", nargs=5,
                   metavar=("F", "K", "L", "A", "B"), default=None,
                   help="add ratio bound A <= F(K)/F(L) <= B")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="Dice table between two masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="colorized PPM panels")
    p.add_argument("--out", required=True)
    p.add_argument("--image", default=None)
    p.add_argument("--gt", default=None)
    p.add_argument("--pred", default=None)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, FormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
