"""Segmentation quality and cost benchmark.

Four approaches are compared: {pixel, trixel} units x {geometric,
probabilistic} trimaps. Every person is segmented twice, first skin then
clothes. The two masks are unioned and scored against the ground-truth
people mask. Iterations are summed over both stages.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DimMismatch, NoRecords, TrixelsegError
from .graphcut import PIXEL, TRIXEL, SegmentationResult, build_unit_graph, segment
from .imaging import EyePair, check_image
from .trimap import GeometricTemplate, ProbabilityMap, ProbTrimapParams, Stage, \
    geometric_trimap, probabilistic_trimap
from .tritom import DmumParams, build_mesh

APPROACHES = ("PixelGC_Geo", "PixelGC_Prob", "TriToMGC_Geo", "TriToMGC_Prob")
THRESHOLDS = np.round(np.linspace(0.0, 1.0, 21), 2)


def jaccard(seg, gt) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    seg, gt = np.asarray(seg, bool), np.asarray(gt, bool)
    if seg.shape != gt.shape:
        raise DimMismatch(f"mask shapes differ: {seg.shape} vs {gt.shape}")
    union = np.count_nonzero(seg | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(seg & gt) / union


def parse_approach(name: str) -> tuple[str, str]:
    """``"TriToMGC_Prob"`` -> ``("tritom", "prob")``."""
    if name not in APPROACHES:
        raise ValueError(f"unknown approach {name!r}; choose from {APPROACHES}")
    engine, kind = name.split("_")
    return ("pixel" if engine == "PixelGC" else "tritom"), kind.lower()


@dataclass
class PipelineConfig:
    grabcut: dict = field(default_factory=dict)  # keyword overrides for graphcut.segment
    dmum: DmumParams = field(default_factory=DmumParams)
    template: GeometricTemplate = field(default_factory=GeometricTemplate)
    prob: ProbTrimapParams = field(default_factory=ProbTrimapParams)


@dataclass
class PersonResult:
    """Per-stage results; a stage that was not run is ``None``."""

    skin: SegmentationResult | None
    clothes: SegmentationResult | None
    mesh_ms: float = 0.0

    @property
    def stages(self) -> list[SegmentationResult]:
        return [r for r in (self.skin, self.clothes) if r is not None]

    @property
    def mask(self) -> np.ndarray:
        return np.logical_or.reduce([r.mask for r in self.stages])

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.stages)


def segment_person(img, eyes: EyePair, engine="pixel", trimap_kind="geo", maps=None,
                   cfg: PipelineConfig | None = None, stages=(Stage.SKIN, Stage.CLOTHES),
                   prior_skin_mask=None) -> PersonResult:
    """Skin stage, then clothes stage with the skin mask forced to background.

    ``maps`` maps stage names to ``ProbabilityMap`` and is required for
    ``trimap_kind="prob"``. Running the clothes stage alone needs
    ``prior_skin_mask``.
    """
    cfg = cfg or PipelineConfig()
    stages = [Stage(s) for s in stages]
    if not stages:
        raise ValueError("no stages to run")
    if Stage.SKIN not in stages and prior_skin_mask is None:
        raise ValueError("the clothes stage needs a skin mask or the skin stage")
    img = check_image(img)
    eyes.validate(img.shape)
    mesh, mesh_ms = None, 0.0
    if engine == "tritom":
        t0 = time.perf_counter()
        mesh = build_mesh(img, cfg.dmum)
        mesh_ms = (time.perf_counter() - t0) * 1e3
        graph = build_unit_graph(img, TRIXEL, mesh)
    elif engine == "pixel":
        graph = build_unit_graph(img, PIXEL)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    if trimap_kind == "prob" and any(maps is None or s.value not in maps for s in stages):
        raise ValueError("probabilistic trimaps need a map for every stage")

    results = {}
    prior = prior_skin_mask
    for stage in stages:
        if trimap_kind == "geo":
            tm = geometric_trimap(eyes, img.shape, stage, prior, mesh, cfg.template)
        elif trimap_kind == "prob":
            pmap: ProbabilityMap = maps[stage.value]
            tm = probabilistic_trimap(eyes, pmap, img.shape, stage, prior, mesh, cfg.prob)
        else:
            raise ValueError(f"unknown trimap kind {trimap_kind!r}")
        res = segment(graph, tm, **cfg.grabcut)
        res.timings = {"mesh": 0.0 if results else mesh_ms, **res.timings}
        results[stage] = res
        prior = res.mask
    return PersonResult(results.get(Stage.SKIN), results.get(Stage.CLOTHES), mesh_ms)


@dataclass
class BenchRecord:
    image: str
    approach: str
    iterations: int
    unit_count: int
    jaccard: float
    wall_ms: dict = field(default_factory=dict)
    error: str | None = None
    energy: dict = field(default_factory=dict)  # stage name -> energy trace

    def to_json(self, timings=True) -> dict:
        out = asdict(self)
        if not timings:
            out.pop("wall_ms")
        if out["error"] is None:
            out.pop("error")
        return out


def _run_one(args):
    name, img, eyes, gt, approach, maps, cfg = args
    engine, kind = parse_approach(approach)
    t0 = time.perf_counter()
    try:
        res = segment_person(img, eyes, engine, kind, maps, cfg)
    except TrixelsegError as exc:
        return BenchRecord(name, approach, 0, 0, 0.0, {}, f"{type(exc).__name__}: {exc}")
    total = (time.perf_counter() - t0) * 1e3
    wall = {"mesh": res.mesh_ms,
            "gmm": res.skin.timings["gmm"] + res.clothes.timings["gmm"],
            "flow": res.skin.timings["flow"] + res.clothes.timings["flow"],
            "total": total}
    energy = {"skin": list(res.skin.energy_trace), "clothes": list(res.clothes.energy_trace)}
    return BenchRecord(name, approach, res.iterations, res.skin.unit_count,
                       float(jaccard(res.mask, gt)), wall, energy=energy)


def run_benchmark(corpus, approaches=APPROACHES, maps=None, cfg: PipelineConfig | None = None,
                  jobs: int = 1) -> list[BenchRecord]:
    """Score every ``(image, approach)`` pair; failures are kept as error records.

    ``corpus`` yields objects with ``name``, ``image``, ``eyes`` and ``gt``.
    Results come back in corpus order whatever ``jobs`` is.
    """
    cfg = cfg or PipelineConfig()
    for a in approaches:
        parse_approach(a)
    tasks = [(it.name, it.image, it.eyes, it.gt, a, maps, cfg) for it in corpus for a in approaches]
    if not tasks:
        raise NoRecords("empty corpus")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


def jaccard_curve(values) -> np.ndarray:
    """Fraction of images with JI >= t for each of the 21 thresholds."""
    v = np.asarray(values, float)
    if v.size == 0:
        return np.zeros(len(THRESHOLDS))
    return np.array([(v >= t - 1e-12).mean() for t in THRESHOLDS])


def summarize(records) -> dict:
    """Per-approach means and medians plus iterations normalised to PixelGC_Geo."""
    ok = [r for r in records if r.error is None]
    if not ok:
        raise NoRecords("no successful records")
    out = {}
    for a in dict.fromkeys(r.approach for r in ok):
        rs = [r for r in ok if r.approach == a]
        ji = [r.jaccard for r in rs]
        out[a] = {"n": len(rs), "mean_iterations": float(np.mean([r.iterations for r in rs])),
                  "mean_units": float(np.mean([r.unit_count for r in rs])),
                  "median_jaccard": float(np.median(ji)), "mean_jaccard": float(np.mean(ji)),
                  "curve": jaccard_curve(ji).tolist()}
    ref = out.get("PixelGC_Geo", {}).get("mean_iterations")
    for a, s in out.items():
        s["normalized_iterations"] = s["mean_iterations"] / ref if ref else None
    return out


def emit_report(records, out_dir, timings: bool = True) -> dict:
    """Write ``bench.json``, ``curve_<approach>.csv``, ``curve_<approach>.dat`` and ``iterations.csv``."""
    records = list(records)
    summary = summarize(records)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"records": [r.to_json(timings) for r in records], "summary": summary}
    (out / "bench.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    for a, s in summary.items():
        with open(out / f"curve_{a}.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["threshold", "fraction"])
            for t, f in zip(THRESHOLDS, s["curve"]):
                wr.writerow([f"{t:.2f}", f"{f:.6f}"])
        with open(out / f"curve_{a}.dat", "w") as fh:
            fh.write(f"# {a}: jaccard threshold vs fraction of images\n")
            for t, f in zip(THRESHOLDS, s["curve"]):
                fh.write(f"{t:.2f} {f:.6f}\n")
    with open(out / "iterations.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["approach", "mean_iterations", "normalized_iterations", "mean_units",
                     "median_jaccard"])
        for a, s in summary.items():
            norm = "" if s["normalized_iterations"] is None else f"{s['normalized_iterations']:.4f}"
            wr.writerow([a, f"{s['mean_iterations']:.4f}", norm, f"{s['mean_units']:.1f}",
                         f"{s['median_jaccard']:.4f}"])
    return doc
