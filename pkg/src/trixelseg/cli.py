"""Command-line entry point: ``trixelseg {mesh,segment,bench,features,buildmap,cv}``.

Option values resolve in the order command-line flag, then ``--config``
JSON file, then built-in default. Exit codes:

0 success; 2 usage error or missing eyes file; 3 unreadable input;
4 degenerate eyes; 5 trimap without foreground or background seeds;
6 other invalid input; 7 nothing to report.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import classify, descriptors
from .evalbench import APPROACHES, PipelineConfig, emit_report, run_benchmark, segment_person
from .deskcorpus import load_manifest
from .exceptions import DegenerateEyes, EmptyForeground, NoRecords, TrixelsegError
from .imaging import CanonicalFrame, eyes_path_for, read_eyes, read_image, read_mask, write_mask
from .trimap import ProbabilityMap, Stage, build_probability_map
from .tritom import DmumParams, build_mesh, draw_overlay, dump_mesh

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_EYES, EXIT_SEEDS, EXIT_INPUT, EXIT_EMPTY = 0, 2, 3, 4, 5, 6, 7


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _dmum(args) -> DmumParams:
    return DmumParams(args.seed_scale, args.min_spacing, args.border_step)


def _pipeline(args) -> PipelineConfig:
    gc = {"n_components": args.components, "max_iter": args.max_iter, "tol": args.tol,
          "area_weighting": not args.no_area_weighting, "random_state": args.seed}
    return PipelineConfig(grabcut=gc, dmum=_dmum(args))


def _maps(args, base: Path | None = None):
    paths = {"skin": args.skin_map, "clothes": args.clothes_map}
    for k in paths:
        if paths[k] is None and base is not None and (base / f"{k}_map.png").exists():
            paths[k] = base / f"{k}_map.png"
    if any(p is None for p in paths.values()):
        return None
    return {k: ProbabilityMap.load(p) for k, p in paths.items()}


def _stem(path) -> str:
    return Path(path).name.split(".")[0]


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands

def cmd_mesh(args):
    img = read_image(args.image)
    mesh = build_mesh(img, _dmum(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = _stem(args.image)
    dump_mesh(mesh, out / f"{stem}.tritom")
    draw_overlay(img, mesh).save(out / f"{stem}.overlay.png")
    print(f"{mesh.n_trixels} trixels, {len(mesh.vertices)} vertices")


def cmd_segment(args):
    eyes_file = Path(args.eyes) if args.eyes else eyes_path_for(args.image)
    if not eyes_file.exists():
        raise CliError(f"eyes file not found: {eyes_file}", EXIT_USAGE)
    stages = ["skin", "clothes"] if args.stages == "both" else [args.stages]
    prior = None
    if stages == ["clothes"]:
        if not args.skin_mask:
            raise CliError("--stages clothes needs --skin-mask", EXIT_USAGE)
        prior = read_mask(args.skin_mask)
    img = read_image(args.image)
    eyes = read_eyes(eyes_file)
    maps = None
    if args.trimap == "prob":
        maps = _maps(args)
        if maps is None:
            raise CliError("--trimap prob needs --skin-map and --clothes-map", EXIT_USAGE)
    res = segment_person(img, eyes, args.engine, args.trimap, maps, _pipeline(args), stages,
                         prior)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = _stem(args.image)
    timings = not args.no_timings
    doc = {"engine": args.engine, "trimap": args.trimap, "iterations": res.iterations,
           "pixel_count": int(img.shape[0] * img.shape[1])}
    for name in stages:
        r = getattr(res, name)
        write_mask(out / f"{stem}.{name}.png", r.mask)
        doc[name] = r.to_json(timings)
    doc["unit_count"] = res.stages[0].unit_count
    _write_json(out / f"{stem}.result.json", doc)


def cmd_bench(args):
    manifest = Path(args.manifest)
    corpus = load_manifest(manifest)
    approaches = args.approaches or list(APPROACHES)
    maps = _maps(args, manifest.parent)
    if maps is None and any(a.endswith("_Prob") for a in approaches):
        raise CliError("probabilistic approaches need --skin-map and --clothes-map", EXIT_USAGE)
    records = run_benchmark(corpus, approaches, maps, _pipeline(args), args.jobs)
    doc = emit_report(records, args.out_dir, timings=not args.no_timings)
    for a, s in doc["summary"].items():
        norm = s["normalized_iterations"]
        print(f"{a}: median JI {s['median_jaccard']:.4f}, mean iterations "
              f"{s['mean_iterations']:.2f}" + ("" if norm is None else f" ({norm:.3f} of pixel-geo)"))


def cmd_features(args):
    kind = descriptors.PatternKind(args.kind)
    rows, ids = [], []
    for i, path in enumerate(args.images):
        img = read_image(path)
        mask = read_mask(args.masks[i]) if args.masks else None
        pat = descriptors.prepare_pattern(img, kind, mask, args.bbox)
        parts = []
        if "lbp" in args.descriptor:
            parts.append(descriptors.lbp_descriptor(pat, args.grid, args.lbp_sampling))
        if "hog" in args.descriptor:
            parts.append(descriptors.hog_descriptor(pat, args.cell, args.bins))
        rows.append(descriptors.concat(parts))
        ids.append(_stem(path))
    descriptors.write_descriptors(args.output, ids, rows)
    print(f"{len(rows)} rows x {len(rows[0])} values")


def cmd_buildmap(args):
    manifest = Path(args.manifest)
    entries = json.loads(manifest.read_text())
    key_order = ["mask", f"{args.target}_gt", "gt"]
    pairs = []
    for e in entries:
        key = next((k for k in key_order if k in e), None)
        if key is None:
            raise CliError(f"manifest entry without a mask: {e}", EXIT_INPUT)
        pairs.append((read_mask(manifest.parent / e[key]), read_eyes(manifest.parent / e["eyes"])))
    frame = CanonicalFrame(tuple(args.canvas), tuple(args.eye_midpoint), args.d0)
    pmap = build_probability_map(pairs, frame, Stage(args.target))
    side = pmap.save(args.output)
    print(f"wrote {args.output} and {side}")


def _named_paths(items):
    out = {}
    for item in items or []:
        name, _, path = item.partition("=")
        if not path:
            raise CliError(f"expected NAME=PATH, got {item!r}", EXIT_USAGE)
        out[name] = path
    return out


def cmd_cv(args):
    labels = classify.read_labels(args.labels)
    cues = {}
    order = None
    for name, path in _named_paths(args.cue).items():
        ids, values, _ = descriptors.read_descriptors(path)
        order = order or ids
        index = dict(zip(ids, values))
        cues[name] = np.stack([index[i] for i in order])
    for name, path in _named_paths(args.score).items():
        scores = classify.read_scores(path)
        order = order or sorted(scores)
        cues[name] = np.array([scores[i] for i in order])
    if not cues:
        raise CliError("give at least one --cue or --score", EXIT_USAGE)
    y = np.array([labels[i] for i in order])
    report = classify.cross_validate(cues, y, args.weights, args.repetitions, args.folds,
                                     args.seed, args.C, args.gamma)
    Path(args.output).write_text(classify.dump_report(report))
    print(f"fused accuracy {report['accuracy']['fused']['mean']:.4f}")


# ---------------------------------------------------------------------------
# parser

def _gamma(text):
    return text if text == "auto" else float(text)


def build_parser(config: dict | None = None) -> argparse.ArgumentParser:
    """Parser whose subcommand defaults are overridden by ``config``."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults; flags still win")
    p = argparse.ArgumentParser(prog="trixelseg", parents=[common],
                                description="Trixel-based person segmentation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    mesh_opts = argparse.ArgumentParser(add_help=False)
    mesh_opts.add_argument("--seed-scale", type=float, default=16.0,
                           help="DMUM cost of a zero-gradient pixel (default 16)")
    mesh_opts.add_argument("--min-spacing", type=float, default=6.0,
                           help="minimum vertex spacing r_min in pixels (default 6)")
    mesh_opts.add_argument("--border-step", type=int, default=16,
                           help="border vertex spacing in pixels (default 16)")

    gc_opts = argparse.ArgumentParser(add_help=False)
    gc_opts.add_argument("--components", type=int, default=5, help="GMM components (default 5)")
    gc_opts.add_argument("--max-iter", type=int, default=10, help="outer iterations (default 10)")
    gc_opts.add_argument("--tol", type=float, default=1e-3,
                         help="relative energy change that stops iterating (default 1e-3)")
    gc_opts.add_argument("--no-area-weighting", action="store_true",
                         help="do not weight trixel data terms by pixel count")
    gc_opts.add_argument("--seed", type=int, default=42, help="k-means seed (default 42)")
    gc_opts.add_argument("--skin-map", help="skin probability map PNG (sidecar JSON beside it)")
    gc_opts.add_argument("--clothes-map", help="clothes probability map PNG")
    gc_opts.add_argument("--no-timings", action="store_true",
                         help="omit wall-clock fields so reports are byte-reproducible")
    gc_opts.add_argument("-o", "--out-dir", default=".", help="output directory")

    s = sub.add_parser("mesh", parents=[common, mesh_opts], help="build a trixel mesh")
    s.add_argument("image")
    s.add_argument("-o", "--out-dir", default=".", help="output directory")
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("segment", parents=[common, mesh_opts, gc_opts],
                       help="two-stage skin and clothes segmentation of one person")
    s.add_argument("image")
    s.add_argument("--eyes", help="eyes JSON (default: <image>.eyes.json)")
    s.add_argument("--engine", choices=["pixel", "tritom"], default="tritom")
    s.add_argument("--trimap", choices=["geo", "prob"], default="geo")
    s.add_argument("--stages", choices=["both", "skin", "clothes"], default="both",
                   help="stages to run (default both)")
    s.add_argument("--skin-mask", help="existing skin mask, required for --stages clothes")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("bench", parents=[common, mesh_opts, gc_opts], help="benchmark a corpus manifest")
    s.add_argument("manifest")
    s.add_argument("--approaches", nargs="+", choices=APPROACHES)
    s.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("features", parents=[common], help="LBP/HOG descriptors to CSV")
    s.add_argument("images", nargs="+")
    s.add_argument("--masks", nargs="+", help="one mask per image")
    s.add_argument("--kind", choices=[k.value for k in descriptors.PatternKind], default="hs")
    s.add_argument("--descriptor", choices=["lbp", "hog", "lbp+hog"], default="lbp")
    s.add_argument("--grid", type=int, default=5, help="LBP cells per side (default 5)")
    s.add_argument("--lbp-sampling", choices=["square", "circle"], default="square")
    s.add_argument("--cell", type=int, default=8, help="HOG cell size in pixels (default 8)")
    s.add_argument("--bins", type=int, default=9, help="HOG orientation bins (default 9)")
    s.add_argument("--bbox", type=int, nargs=4, metavar=("X0", "Y0", "X1", "Y1"))
    s.add_argument("-o", "--output", required=True, help="CSV path")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("buildmap", parents=[common], help="probability map from a mask manifest")
    s.add_argument("manifest", help='JSON list of {"mask"|"<target>_gt"|"gt": path, "eyes": path}')
    s.add_argument("--target", choices=["skin", "clothes"], required=True)
    s.add_argument("--canvas", type=int, nargs=2, default=[256, 256], metavar=("W", "H"))
    s.add_argument("--eye-midpoint", type=float, nargs=2, default=[128.0, 80.0],
                   metavar=("X", "Y"))
    s.add_argument("--d0", type=float, default=40.0, help="canonical inter-eye distance")
    s.add_argument("-o", "--output", required=True, help="16-bit PNG path")
    s.set_defaults(func=cmd_buildmap)

    s = sub.add_parser("cv", parents=[common], help="repeated k-fold cross-validation with score fusion")
    s.add_argument("--cue", action="append", metavar="NAME=CSV",
                   help="descriptor CSV; an SVM is trained per fold")
    s.add_argument("--score", action="append", metavar="NAME=CSV",
                   help="external sample_id,score CSV")
    s.add_argument("--labels", required=True, help="CSV of sample_id,label")
    s.add_argument("--weights", type=float, nargs="+", help="fusion weights (default equal)")
    s.add_argument("--repetitions", type=int, default=5)
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--C", type=float, default=1.0)
    s.add_argument("--gamma", type=_gamma, default="auto")
    s.add_argument("-o", "--output", required=True, help="report JSON path")
    s.set_defaults(func=cmd_cv)

    if config:
        for sp in sub.choices.values():
            known = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in config.items() if k in known})
    return p


def _read_config(argv) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        conf = json.loads(Path(known.config).read_text())
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_IO) from exc
    except ValueError as exc:
        raise CliError(f"config is not valid JSON: {exc}", EXIT_USAGE) from exc
    if not isinstance(conf, dict):
        raise CliError("config must be a JSON object", EXIT_USAGE)
    conf = {k.replace("-", "_"): v for k, v in conf.items()}
    valid = {a.dest for sp in _subparsers(build_parser()).values() for a in sp._actions}
    unknown = sorted(set(conf) - valid - {"func", "command"})
    if unknown:
        raise CliError(f"unknown config keys: {unknown}", EXIT_USAGE)
    return conf


def _subparsers(parser) -> dict:
    return next(a.choices for a in parser._actions if isinstance(a, argparse._SubParsersAction))


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = _read_config(argv)
        args = build_parser(config).parse_args(argv)
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DegenerateEyes as exc:
        print(f"error: degenerate eyes: {exc}", file=sys.stderr)
        return EXIT_EYES
    except EmptyForeground as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SEEDS
    except NoRecords as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (TrixelsegError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
