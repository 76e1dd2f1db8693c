"""Command-line surface binding the library into workflows.

Exit codes: 0 success, 1 usage error, 2 format error, 3 internal error.
Every flag has a run-config equivalent (JSON object keyed like gt_dir /
pred_dir / categories / output / threads / seed / ...); explicit flags win
over the config file.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import io as pio
from .errors import FormatError, PanopticError
from .evaluate import evaluate_items, load_manifest, pair_directories
from .fusion import FusionConfig, fuse, resolve_overlaps
from .metrics import MetricConfig, semantic_iou_counts
from .stats import bootstrap_pq, overlap_cdf, threshold_sweep
from .synth import (AddSpurious, BoundaryJitter, DropSegment, MergeSegments,
                    Relabel, SplitSegment, SynthSpec, gen_ground_truth,
                    perturb, registry_for)

logger = logging.getLogger("panopteval")


class RunConfig:
    """Flag values merged over an optional JSON run-config file."""

    def __init__(self, config_path: str | None, flags: dict):
        if config_path:
            try:
                doc = json.loads(Path(config_path).read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise FormatError(f"cannot read run config {config_path}: {e}") from e
            if not isinstance(doc, dict):
                raise FormatError(f"{config_path}: run config must be a JSON object")
        else:
            doc = {}
        self._file = doc
        self._flags = flags

    def get(self, key: str, default=None):
        value = self._flags.get(key)
        if value is None:
            value = self._file.get(key, default)
        return value

    def require(self, key: str):
        value = self.get(key)
        if value is None:
            raise click.UsageError(
                f"missing required option --{key.replace('_', '-')}")
        return value


def config_option(f):
    return click.option("--config", "config_path", type=click.Path(),
                        default=None, help="Run-config JSON; flags win.")(f)


def _load_maps_by_stem(gt_dir, pred_dir, registry, semantic: bool = False):
    items = pair_directories(gt_dir, pred_dir)
    pairs = []
    for item in items:
        if item.pred is None:
            raise FormatError(f"no prediction for stem {item.stem!r}")
        if semantic:
            gt = pio.read_semantic(item.gt.raster_path, registry)
            pred = pio.read_semantic(item.pred.raster_path, registry)
        else:
            gt = pio.read_panoptic(item.gt, registry)
            pred = pio.read_panoptic(item.pred, registry)
        pairs.append((item.stem, gt, pred))
    return pairs


@click.group()
def cli():
    """Panoptic segmentation evaluation toolkit."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")


@cli.command()
@click.option("--gt-dir", type=click.Path(), help="Ground-truth panoptic pairs.")
@click.option("--pred-dir", type=click.Path(), help="Predicted panoptic pairs.")
@click.option("--categories", type=click.Path(), help="Class registry JSON.")
@click.option("--manifest", type=click.Path(), default=None,
              help="Explicit pairing manifest instead of stem pairing.")
@click.option("--output", type=click.Path(), help="Report path.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default=None)
@click.option("--threads", type=int, default=None)
@click.option("--iou-threshold", type=float, default=None)
@config_option
def evaluate(gt_dir, pred_dir, categories, manifest, output, fmt, threads,
             iou_threshold, config_path):
    """Evaluate predictions against ground truth (PQ/SQ/RQ report)."""
    run = RunConfig(config_path, dict(gt_dir=gt_dir, pred_dir=pred_dir,
                                      categories=categories, manifest=manifest,
                                      output=output, format=fmt, threads=threads,
                                      iou_threshold=iou_threshold))
    registry = pio.read_class_registry(run.require("categories"))
    manifest = run.get("manifest")
    if manifest:
        items = load_manifest(manifest)
    else:
        items = pair_directories(run.require("gt_dir"), run.require("pred_dir"))
    metric_config = MetricConfig(iou_threshold=float(run.get("iou_threshold", 0.5)))
    result, _per_image = evaluate_items(items, registry, metric_config,
                                        int(run.get("threads", 1)))
    click.echo(pio.render_summary(result))
    output = run.get("output")
    if output:
        pio.write_report(result, run.get("format", "json"), output)
        click.echo(f"report written to {output}")


@cli.command()
@click.option("--gt-dir", type=click.Path())
@click.option("--pred-dir", type=click.Path())
@click.option("--categories", type=click.Path())
@click.option("--thresholds", default=None,
              help="Comma-separated IoU thresholds.")
@click.option("--output", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default=None)
@config_option
def sweep(gt_dir, pred_dir, categories, thresholds, output, fmt, config_path):
    """PQ/SQ/RQ at a sweep of IoU matching thresholds."""
    run = RunConfig(config_path, dict(gt_dir=gt_dir, pred_dir=pred_dir,
                                      categories=categories, thresholds=thresholds,
                                      output=output, format=fmt))
    registry = pio.read_class_registry(run.require("categories"))
    raw = run.get("thresholds", "0.1,0.25,0.5,0.6,0.75,0.9")
    try:
        values = [float(t) for t in str(raw).split(",") if str(t).strip()]
    except ValueError as e:
        raise click.UsageError(f"bad --thresholds: {e}")
    pairs = [(gt, pred) for _stem, gt, pred in _load_maps_by_stem(
        run.require("gt_dir"), run.require("pred_dir"), registry)]
    rows = []
    for t, result in threshold_sweep(pairs, registry, values):
        agg = result.all
        rows.append({
            "threshold": t,
            "pq": agg.pq if agg else None,
            "sq": agg.sq if agg else None,
            "rq": agg.rq if agg else None,
            "pq_stuff": result.stuff.pq if result.stuff else None,
            "pq_things": result.things.pq if result.things else None,
        })
    output = run.require("output")
    pio.write_table(rows, ("threshold", "pq", "sq", "rq", "pq_stuff", "pq_things"),
                    run.get("format", "csv"), output)
    click.echo(f"sweep written to {output}")


@cli.command()
@click.option("--gt-dir", type=click.Path())
@click.option("--pred-dir", type=click.Path())
@click.option("--categories", type=click.Path())
@click.option("--resamples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--output", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default=None)
@config_option
def bootstrap(gt_dir, pred_dir, categories, resamples, seed, threads, output,
              fmt, config_path):
    """Bootstrap confidence intervals for the aggregate metrics."""
    run = RunConfig(config_path, dict(gt_dir=gt_dir, pred_dir=pred_dir,
                                      categories=categories, resamples=resamples,
                                      seed=seed, threads=threads, output=output,
                                      format=fmt))
    registry = pio.read_class_registry(run.require("categories"))
    items = pair_directories(run.require("gt_dir"), run.require("pred_dir"))
    _result, per_image = evaluate_items(items, registry,
                                        threads=int(run.get("threads", 1)))
    stats = [per_image[stem] for stem in sorted(per_image)]
    results = bootstrap_pq(stats, registry,
                           n_resamples=int(run.get("resamples", 1000)),
                           seed=int(run.get("seed", 0)))
    rows = [{"metric": name, "point": br.point, "lo": br.lo, "hi": br.hi,
             "n_resamples": br.n_resamples, "seed": br.seed}
            for name, br in results.items()]
    output = run.require("output")
    pio.write_table(rows, ("metric", "point", "lo", "hi", "n_resamples", "seed"),
                    run.get("format", "csv"), output)
    click.echo(f"bootstrap written to {output}")


@cli.command()
@click.option("--gt-dir", type=click.Path())
@click.option("--pred-dir", type=click.Path())
@click.option("--categories", type=click.Path())
@click.option("--output", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default=None)
@config_option
def cdf(gt_dir, pred_dir, categories, output, fmt, config_path):
    """Cumulative distribution of matched IoUs (threshold-free matching)."""
    run = RunConfig(config_path, dict(gt_dir=gt_dir, pred_dir=pred_dir,
                                      categories=categories, output=output,
                                      format=fmt))
    registry = pio.read_class_registry(run.require("categories"))
    pairs = [(gt, pred) for _stem, gt, pred in _load_maps_by_stem(
        run.require("gt_dir"), run.require("pred_dir"), registry)]
    rows = [{"iou": v, "cumulative_fraction": f}
            for v, f in overlap_cdf(pairs, registry)]
    output = run.require("output")
    pio.write_table(rows, ("iou", "cumulative_fraction"),
                    run.get("format", "csv"), output)
    click.echo(f"cdf written to {output}")


@cli.command()
@click.option("--gt-dir", type=click.Path(),
              help="Ground-truth semantic maps (16-bit PNG).")
@click.option("--pred-dir", type=click.Path())
@click.option("--categories", type=click.Path())
@click.option("--output", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default=None)
@config_option
def miou(gt_dir, pred_dir, categories, output, fmt, config_path):
    """Semantic mean IoU over paired 16-bit class rasters."""
    run = RunConfig(config_path, dict(gt_dir=gt_dir, pred_dir=pred_dir,
                                      categories=categories, output=output,
                                      format=fmt))
    registry = pio.read_class_registry(run.require("categories"))
    pairs = _load_maps_by_stem(run.require("gt_dir"), run.require("pred_dir"),
                               registry, semantic=True)
    inter, union = semantic_iou_counts((gt, pred) for _stem, gt, pred in pairs)
    rows = [{"class_id": cid, "name": registry[cid].name,
             "iou": inter[cid] / union[cid]}
            for cid in sorted(union)]
    mean = sum(r["iou"] for r in rows) / len(rows) if rows else 0.0
    rows.append({"class_id": None, "name": "mean", "iou": mean})
    output = run.require("output")
    pio.write_table(rows, ("class_id", "name", "iou"),
                    run.get("format", "csv"), output)
    click.echo(f"mean IoU {100 * mean:.1f} written to {output}")


@cli.command()
@click.option("--instances", "instances_path", type=click.Path())
@click.option("--width", type=int, default=None)
@click.option("--height", type=int, default=None)
@click.option("--categories", type=click.Path())
@click.option("--score-thresh", type=float, default=None)
@click.option("--keep-frac", type=float, default=None)
@click.option("--out-raster", type=click.Path())
@click.option("--out-sidecar", type=click.Path())
@config_option
def resolve(instances_path, width, height, categories, score_thresh, keep_frac,
            out_raster, out_sidecar, config_path):
    """Resolve overlapping scored instances into a things-only panoptic pair."""
    run = RunConfig(config_path, dict(instances=instances_path, width=width,
                                      height=height, categories=categories,
                                      score_thresh=score_thresh,
                                      keep_frac=keep_frac, out_raster=out_raster,
                                      out_sidecar=out_sidecar))
    registry = pio.read_class_registry(run.require("categories"))
    path = run.require("instances")
    instances = pio.read_instances(path, int(run.require("width")),
                                   int(run.require("height")))
    for i, inst in enumerate(instances):
        if inst.class_id not in registry or not registry.is_thing(inst.class_id):
            raise FormatError(
                f"{path}: instance {i} class {inst.class_id} is not a thing class")
    config = FusionConfig(score_threshold=float(run.get("score_thresh", 0.5)),
                          keep_fraction=float(run.get("keep_frac", 0.5)))
    resolved = resolve_overlaps(
        instances, config,
        shape=(int(run.require("height")), int(run.require("width"))))
    out_raster = run.require("out_raster")
    pio.write_panoptic(resolved, pio.PanopticFilePair(
        Path(out_raster), Path(run.require("out_sidecar"))))
    click.echo(f"resolved map written to {out_raster}")


@cli.command(name="fuse")
@click.option("--things-raster", type=click.Path())
@click.option("--things-sidecar", type=click.Path())
@click.option("--semantic", "semantic_path", type=click.Path())
@click.option("--categories", type=click.Path())
@click.option("--out-raster", type=click.Path())
@click.option("--out-sidecar", type=click.Path())
@config_option
def fuse_cmd(things_raster, things_sidecar, semantic_path, categories,
             out_raster, out_sidecar, config_path):
    """Fuse a things-only map with a semantic map (things win conflicts)."""
    run = RunConfig(config_path, dict(things_raster=things_raster,
                                      things_sidecar=things_sidecar,
                                      semantic=semantic_path,
                                      categories=categories,
                                      out_raster=out_raster,
                                      out_sidecar=out_sidecar))
    registry = pio.read_class_registry(run.require("categories"))
    things = pio.read_panoptic(
        pio.PanopticFilePair(Path(run.require("things_raster")),
                             Path(run.require("things_sidecar"))), registry)
    semantic = pio.read_semantic(run.require("semantic"), registry)
    try:
        fused = fuse(things, semantic, registry)
    except ValueError as e:
        raise FormatError(str(e)) from e
    out_raster = run.require("out_raster")
    pio.write_panoptic(fused, pio.PanopticFilePair(
        Path(out_raster), Path(run.require("out_sidecar"))))
    click.echo(f"fused map written to {out_raster}")


def _parse_perturbations(specs, base_seed: int):
    out = []
    for i, spec in enumerate(specs):
        kind, _, arg = str(spec).partition(":")
        seed = base_seed + 1000 * (i + 1)
        try:
            if kind == "jitter":
                out.append(BoundaryJitter(radius=int(arg or 1), seed=seed))
            elif kind == "split":
                out.append(SplitSegment(seed=seed))
            elif kind == "merge":
                out.append(MergeSegments(seed=seed))
            elif kind == "relabel":
                out.append(Relabel(seed=seed))
            elif kind == "drop":
                out.append(DropSegment(seed=seed))
            elif kind == "add":
                out.append(AddSpurious(area=int(arg or 16), seed=seed))
            else:
                raise click.UsageError(f"unknown perturbation kind {kind!r}")
        except ValueError as e:
            raise click.UsageError(f"bad perturbation {spec!r}: {e}")
    return out


@cli.command()
@click.option("--out-dir", type=click.Path())
@click.option("--images", type=int, default=None)
@click.option("--width", type=int, default=None)
@click.option("--height", type=int, default=None)
@click.option("--stuff", type=int, default=None)
@click.option("--things", type=int, default=None)
@click.option("--segments", type=int, default=None)
@click.option("--crowd-prob", type=float, default=None)
@click.option("--void-frac", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--perturb", "perturbations", multiple=True,
              help="Also emit a pred/ dir with these error modes, e.g. "
                   "drop, jitter:2, add:32 (repeatable).")
@config_option
def synth(out_dir, images, width, height, stuff, things, segments, crowd_prob,
          void_frac, seed, perturbations, config_path):
    """Generate a synthetic ground-truth corpus (and optional predictions)."""
    run = RunConfig(config_path, dict(out_dir=out_dir, images=images,
                                      width=width, height=height, stuff=stuff,
                                      things=things, segments=segments,
                                      crowd_prob=crowd_prob, void_frac=void_frac,
                                      seed=seed,
                                      perturb=list(perturbations) or None))
    out_dir = Path(run.require("out_dir"))
    images = int(run.get("images", 1))
    seed = int(run.get("seed", 0))
    perturbations = run.get("perturb") or []

    def spec_for(i: int) -> SynthSpec:
        return SynthSpec(width=int(run.get("width", 64)),
                         height=int(run.get("height", 64)),
                         n_stuff_classes=int(run.get("stuff", 2)),
                         n_thing_classes=int(run.get("things", 2)),
                         n_segments=int(run.get("segments", 6)),
                         crowd_probability=float(run.get("crowd_prob", 0.0)),
                         void_fraction=float(run.get("void_frac", 0.0)),
                         seed=seed + i)

    try:
        registry = registry_for(spec_for(0))
    except ValueError as e:
        raise click.UsageError(str(e))
    out_dir.mkdir(parents=True, exist_ok=True)
    pio.write_class_registry(registry, out_dir / "categories.json")
    for i in range(images):
        gt = gen_ground_truth(spec_for(i))
        stem = f"image_{i:04d}"
        pio.write_panoptic(gt, pio.PanopticFilePair.for_stem(out_dir / "gt", stem))
        if perturbations:
            pred = gt
            for p in _parse_perturbations(perturbations, seed + i):
                try:
                    pred = perturb(pred, p, registry)
                except ValueError as e:
                    logger.info("%s: skipped %s (%s)", stem, type(p).__name__, e)
            pio.write_panoptic(pred,
                               pio.PanopticFilePair.for_stem(out_dir / "pred", stem))
    click.echo(f"wrote {images} image(s) under {out_dir}")


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the evaluation service (FastAPI over uvicorn)."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port, log_level="info")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except FormatError as e:
        click.echo(f"format error: {e}", err=True)
        return 2
    except PanopticError as e:
        click.echo(f"error: {e}", err=True)
        return 3
    except OSError as e:
        click.echo(f"i/o error: {e}", err=True)
        return 3
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports, not crashes
        click.echo(f"internal error: {type(e).__name__}: {e}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
