"""Command-line entry point wiring the toolkit into reproducible runs.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every subcommand that writes artifacts also writes ``manifest.json``
echoing the fully resolved configuration and the toolkit version, and all
randomness descends from one root seed through named derivations.
"""

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import degradations as dg
from . import diagnostics as dx
from . import training as tr
from . import verification as vf
from .errors import ConfigValidationError
from .model import ToyModel
from .seeding import derive_seed


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def load_config(path) -> tr.TrainConfig:
    """Parse a JSON config file; report every defaulted field on stderr."""
    text = Path(path).read_text().strip()
    data = json.loads(text) if text else {}
    if not isinstance(data, dict):
        raise ConfigValidationError([f"{path}: top level must be an object"])
    config = tr.TrainConfig.from_dict(data)
    for name in config.defaulted_fields:
        print(f"config: using default for {name}", file=sys.stderr)
    return config


def write_manifest(out_dir: Path, command: str, config_echo: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"tool": "degalign", "version": __version__,
                "command": command, "config": config_echo}
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_svg_lines(path, series: dict, x_values, title: str,
                    width: int = 640, height: int = 400) -> None:
    """Minimal line chart: one polyline per named series."""
    pad = 50
    xs = list(x_values)
    all_y = [y for ys in series.values() for y in ys]
    y_lo, y_hi = min(all_y), max(all_y)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    x_lo, x_hi = min(xs), max(xs)

    def px(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
               "#8c564b", "#e377c2", "#7f7f7f"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}">',
             f'<text x="{width / 2}" y="20" text-anchor="middle" '
             f'font-size="14">{title}</text>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
             f'y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" '
             f'y2="{height - pad}" stroke="black"/>']
    for k, (name, ys) in enumerate(sorted(series.items())):
        color = palette[k % len(palette)]
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * k}" '
                     f'font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _model_from_checkpoint(path):
    config, state, _, step = tr.load_checkpoint(path)
    model = ToyModel(config.model, config.init_seed)
    model.load_state(state)
    return model, config, step


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_degrade(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ranges = dataclasses.replace(dg.DegradationRanges(),
                                 target_scale=args.scale)
    recipes = []
    for i in range(args.count):
        hr = tr.synthesize_image(args.size, derive_seed(args.seed, f"img-{i}"))
        dg.save_png(out / f"hr_{i:04d}.png", hr)
        if args.paired:
            lr1, lr2, (r1, r2) = dg.generate_paired_sample(
                hr, ranges, derive_seed(args.seed, f"pair-{i}"))
            dg.save_png(out / f"lr1_{i:04d}.png", lr1)
            dg.save_png(out / f"lr2_{i:04d}.png", lr2)
            recipes.append({"index": i, "first": r1.to_dict(),
                            "second": r2.to_dict()})
        else:
            recipe = dg.sample_second_order_recipe(
                ranges, derive_seed(args.seed, f"pair-{i}"))
            dg.save_png(out / f"lr1_{i:04d}.png", dg.degrade(hr, recipe))
            recipes.append({"index": i, "first": recipe.to_dict()})
    (out / "recipes.json").write_text(
        json.dumps(recipes, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "degrade",
                   {"seed": args.seed, "count": args.count,
                    "size": args.size, "scale": args.scale,
                    "paired": args.paired})
    print(f"wrote {args.count} image sets to {out}")
    return 0


def _resolved_train_config(args) -> tr.TrainConfig:
    config = load_config(args.config) if args.config else tr.TrainConfig()
    if args.seed is not None:
        config = dataclasses.replace(
            config,
            data_seed=derive_seed(args.seed, "data"),
            init_seed=derive_seed(args.seed, "init"),
            dropout_seed=derive_seed(args.seed, "dropout"),
            rff_seed=derive_seed(args.seed, "rff"))
    if args.workers is not None:
        config = dataclasses.replace(config, workers=args.workers)
    return config


def cmd_train(args) -> int:
    config = _resolved_train_config(args)
    out = Path(args.out)
    result = tr.run_training(config, out, resume_from=args.resume)
    write_manifest(out, "train", config.to_dict())
    final = result.history[-1]
    print(f"finished {config.steps} steps; final l1 {final.l1:.5f}; "
          f"checkpoint {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    model, config, step = _model_from_checkpoint(args.checkpoint)
    root_seed = config.data_seed if args.seed is None else args.seed
    images = tr.make_eval_images(config)
    report = tr.evaluate_model(model, images, root_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(tr.eval_report_rows(report))
    if args.plot:
        bands = len(report.conditions[0].mean_mape_per_band)
        series = {row.condition: list(row.mean_mape_per_band)
                  for row in report.conditions}
        write_svg_lines(out / "mape.svg", series, range(bands),
                        "per-band spectral MAPE by condition")
    write_manifest(out, "eval", {"checkpoint": str(args.checkpoint),
                                 "step": step, "seed": root_seed,
                                 "train_config": config.to_dict()})
    single = report.mean_psnr(["clean", "blur", "noise", "jpeg"])
    print(f"chi {report.chi:.4f}; mean single-degradation PSNR "
          f"{single:.3f} dB")
    return 0


def cmd_analyze_freq(args) -> int:
    pred = dg.load_png(args.pred)
    gt = dg.load_png(args.gt)
    report = dx.radial_band_mape(pred, gt, bands=args.bands)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "mape.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["band", "edge_lo", "edge_hi", "mape"])
        for b, mape in enumerate(report.mape_per_band):
            writer.writerow([b, repr(report.band_edges[b]),
                             repr(report.band_edges[b + 1]), repr(mape)])
    if args.plot:
        write_svg_lines(out / "mape.svg",
                        {"mape": list(report.mape_per_band)},
                        range(args.bands), "per-band spectral MAPE")
    write_manifest(out, "analyze-freq",
                   {"pred": str(args.pred), "gt": str(args.gt),
                    "bands": args.bands})
    print(f"wrote {out / 'mape.csv'}")
    return 0


def cmd_analyze_entropy(args) -> int:
    model, config, step = _model_from_checkpoint(args.checkpoint)
    if args.image:
        image = dg.load_png(args.image)
        if image.shape[2] == 1:
            image = np.repeat(image, 3, axis=2)
    else:
        hr = tr.make_eval_images(config)[0]
        image = dg.degrade(hr, dg.clean_recipe(config.model.scale))
    dominant, entropy = dx.channel_frequency_entropy(
        model.tap_features(image), bands=args.bands)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "entropy.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "dominant_band"])
        for ch, band in enumerate(dominant):
            writer.writerow([ch, int(band)])
        writer.writerow(["__entropy_bits__", repr(entropy)])
    write_manifest(out, "analyze-entropy",
                   {"checkpoint": str(args.checkpoint), "step": step,
                    "bands": args.bands,
                    "image": str(args.image) if args.image else None})
    print(f"channel frequency entropy: {entropy:.4f} bits")
    return 0


def cmd_analyze_ddr(args) -> int:
    model, config, step = _model_from_checkpoint(args.checkpoint)
    root_seed = config.data_seed if args.seed is None else args.seed
    report = tr.evaluate_model(model, tr.make_eval_images(config), root_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    single = report.mean_psnr(["clean", "blur", "noise", "jpeg"])
    with open(out / "ddr.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chi", "mean_single_degradation_psnr"])
        writer.writerow([repr(report.chi), repr(single)])
    write_manifest(out, "analyze-ddr",
                   {"checkpoint": str(args.checkpoint), "step": step,
                    "seed": root_seed})
    print(f"chi {report.chi:.4f}; mean single-degradation PSNR "
          f"{single:.3f} dB")
    return 0


def cmd_verify_lemma(args) -> int:
    report = vf.lemma_verification(args.seed, games=args.games)
    print(f"identity gap {report.max_identity_gap:.3e} "
          f"(tolerance 1e-9); ratio excess {report.max_ratio_excess:.3e} "
          f"(tolerance 1e-12) over {report.games} games: "
          f"{'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def cmd_verify_gradcheck(args) -> int:
    results = vf.gradient_check_suite(seeds=range(args.seed,
                                                  args.seed + args.rounds))
    failures = [r for r in results if not r.passed]
    worst = max(r.max_rel_err for r in results)
    print(f"{len(results)} gradient checks, worst relative error "
          f"{worst:.3e}: {'PASS' if not failures else 'FAIL'}")
    for r in failures:
        print(f"  FAIL {r.name} (seed {r.seed}): {r.max_rel_err:.3e}")
    return 0 if not failures else 1


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="degalign",
        description="Feature-statistic alignment toolkit for blind "
                    "super-resolution experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="synthesize a degraded dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--paired", action="store_true",
                   help="emit two independently degraded views per image")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="run a training experiment")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int,
                   help="root seed; overrides the four config seeds")
    p.add_argument("--workers", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the eight "
                                    "degradation conditions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--plot", action="store_true",
                   help="also write an SVG chart of per-band MAPE")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze-freq",
                       help="per-band spectral MAPE between two images")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bands", type=int, default=16)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_analyze_freq)

    p = sub.add_parser("analyze-entropy",
                       help="dominant-band channel entropy at the tap")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--image", help="PNG to analyze (default: held-out "
                                   "synthetic image)")
    p.add_argument("--bands", type=int, default=16)
    p.set_defaults(func=cmd_analyze_entropy)

    p = sub.add_parser("analyze-ddr",
                       help="degradation-cluster separation of tap features")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_analyze_ddr)

    p = sub.add_parser("verify-lemma",
                       help="check the dropout-interaction ratio identity")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--games", type=int, default=100)
    p.set_defaults(func=cmd_verify_lemma)

    p = sub.add_parser("verify-gradcheck",
                       help="finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=10,
                   help="number of consecutive seeds to test")
    p.set_defaults(func=cmd_verify_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; keep both
        return exc.code if exc.code is not None else 0
    try:
        return args.func(args)
    except ConfigValidationError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
