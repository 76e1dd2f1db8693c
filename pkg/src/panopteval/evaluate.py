"""Dataset-level evaluation: pairing, per-image statistics, aggregation.

Per-image work is pure and order-free; statistics are exact rationals, so
any worker count or schedule produces identical reports. Missing predictions
are scored as all false negatives rather than skipped.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .io import (PanopticFilePair, load_palette_panoptic, read_panoptic,
                 segment_keys_from_sidecar)
from .matching import (IntersectionTable, match_table, match_optimal,
                       match_unique)
from .metrics import (EvaluationResult, MetricConfig, PQStat, compute_pq,
                      pq_stats)
from .model import VOID_KEY, ClassRegistry, PanopticMap

logger = logging.getLogger("panopteval")


def evaluate_single(gt: PanopticMap, pred: PanopticMap, registry: ClassRegistry,
                    config: MetricConfig | None = None) -> PQStat:
    """Match one image pair and tally its per-class statistics."""
    config = config or MetricConfig()
    t = config.iou_threshold
    if t >= 0.5:
        match = match_unique(gt, pred, registry, t)
    else:
        match = match_optimal(gt, pred, registry, t)
    return pq_stats(match)


@dataclass(frozen=True)
class PairItem:
    """One evaluation unit: a ground-truth source and an optional prediction."""

    stem: str
    gt: PanopticFilePair | PanopticMap
    pred: PanopticFilePair | PanopticMap | None


def pair_directories(gt_dir: Path | str, pred_dir: Path | str) -> list[PairItem]:
    """Pair panoptic files by stem; unpaired predictions are an error.

    Ground-truth stems without a prediction yield items with pred=None,
    which the evaluator scores as all-FN.
    """
    gt_dir, pred_dir = Path(gt_dir), Path(pred_dir)
    gt_stems = sorted(p.stem for p in gt_dir.glob("*.png"))
    if not gt_stems:
        raise FormatError(f"no ground-truth rasters (*.png) in {gt_dir}")
    pred_stems = {p.stem for p in pred_dir.glob("*.png")} if pred_dir.is_dir() else set()
    extra = sorted(pred_stems - set(gt_stems))
    if extra:
        raise FormatError(
            f"predictions without ground truth: {', '.join(extra)}")
    items = []
    for stem in gt_stems:
        pred = (PanopticFilePair.for_stem(pred_dir, stem)
                if stem in pred_stems else None)
        items.append(PairItem(stem, PanopticFilePair.for_stem(gt_dir, stem), pred))
    return items


def load_manifest(path: Path | str) -> list[PairItem]:
    """Explicit pairing manifest: JSON list of file quadruples per stem."""
    import json

    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read manifest {path}: {e}") from e
    items = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        try:
            stem = str(entry["stem"])
            gt = PanopticFilePair(Path(entry["gt_raster"]), Path(entry["gt_sidecar"]))
            pred = None
            if entry.get("pred_raster"):
                pred = PanopticFilePair(Path(entry["pred_raster"]),
                                        Path(entry["pred_sidecar"]))
        except (KeyError, TypeError) as e:
            raise FormatError(f"{path}: manifest entry {i} is malformed: {e}") from e
        if stem in seen:
            raise FormatError(f"{path}: duplicate manifest stem {stem!r}")
        seen.add(stem)
        items.append(PairItem(stem, gt, pred))
    return sorted(items, key=lambda it: it.stem)


def _as_map(source, registry: ClassRegistry) -> PanopticMap:
    if isinstance(source, PanopticMap):
        return source
    return read_panoptic(source, registry)


def _keyed_counts(indices, id_of_index, doc, marginal, registry, source):
    """Map palette-index marginal counts to validated segment keys."""
    present_idx = np.nonzero(marginal)[0]
    ids = id_of_index[present_idx]
    present = {int(i) for i in ids if i != 0}
    key_of, crowd = segment_keys_from_sidecar(doc["segments"], present,
                                              registry, source)
    key_of_index: dict[int, tuple] = {}
    areas: dict[tuple, int] = {}
    for idx in present_idx.tolist():
        sid = int(id_of_index[idx])
        key = VOID_KEY if sid == 0 else key_of[sid]
        key_of_index[idx] = key
        if key != VOID_KEY:
            areas[key] = areas.get(key, 0) + int(marginal[idx])
    return key_of_index, areas, crowd


def _pair_table_from_files(gt_pair: PanopticFilePair, pred_pair: PanopticFilePair,
                           registry: ClassRegistry, stem: str):
    """One joint 256x256 histogram for a palette-coded file pair.

    Numerically identical to reading both maps and intersecting them, but
    with a fraction of the memory traffic. Returns None when either raster
    is not palette-coded.
    """
    gt_loaded = load_palette_panoptic(gt_pair)
    pred_loaded = load_palette_panoptic(pred_pair)
    if gt_loaded is None or pred_loaded is None:
        return None
    gt_idx, gt_ids, gt_doc = gt_loaded
    pr_idx, pr_ids, pr_doc = pred_loaded
    if gt_idx.shape != pr_idx.shape:
        raise FormatError(
            f"{stem}: prediction shape {pr_idx.shape} does not match "
            f"ground truth {gt_idx.shape}")

    combo = gt_idx.astype(np.uint16)
    combo <<= 8
    combo |= pr_idx
    counts = np.bincount(combo.ravel(), minlength=65536).reshape(256, 256)

    gt_key_of, gt_areas, gt_crowd = _keyed_counts(
        gt_idx, gt_ids, gt_doc, counts.sum(axis=1), registry,
        str(gt_pair.raster_path))
    pr_key_of, pr_areas, _ = _keyed_counts(
        pr_idx, pr_ids, pr_doc, counts.sum(axis=0), registry,
        str(pred_pair.raster_path))

    overlaps: dict[tuple, int] = {}
    for gi, pi in zip(*np.nonzero(counts)):
        pred_key = pr_key_of[int(pi)]
        if pred_key == VOID_KEY:
            continue
        gt_key = gt_key_of[int(gi)]
        pair_key = (gt_key, pred_key)
        overlaps[pair_key] = overlaps.get(pair_key, 0) + int(counts[gi, pi])

    return IntersectionTable(
        overlaps=overlaps,
        gt_areas=gt_areas,
        pred_areas=pr_areas,
        gt_crowd=frozenset(k for k in gt_crowd if k in gt_areas),
    )


def _item_stats(item: PairItem, registry: ClassRegistry,
                config: MetricConfig) -> tuple[str, PQStat]:
    if (isinstance(item.gt, PanopticFilePair)
            and isinstance(item.pred, PanopticFilePair)):
        table = _pair_table_from_files(item.gt, item.pred, registry, item.stem)
        if table is not None:
            t = config.iou_threshold
            match = match_table(table, registry, t, optimal=t < 0.5)
            return item.stem, pq_stats(match)
    gt = _as_map(item.gt, registry)
    if item.pred is None:
        pred = PanopticMap(np.zeros(gt.shape, np.int32), np.zeros(gt.shape, np.int32))
    else:
        pred = _as_map(item.pred, registry)
        if pred.shape != gt.shape:
            raise FormatError(
                f"{item.stem}: prediction shape {pred.shape} does not match "
                f"ground truth {gt.shape}")
    return item.stem, evaluate_single(gt, pred, registry, config)


def evaluate_items(items: list[PairItem], registry: ClassRegistry,
                   config: MetricConfig | None = None,
                   threads: int = 1) -> tuple[EvaluationResult, dict[str, PQStat]]:
    """Evaluate a dataset, optionally across a worker pool.

    Returns the aggregate report plus per-image statistics keyed by stem.
    Only a bounded number of rasters is in flight at any time.
    """
    config = config or MetricConfig()
    if threads < 1:
        raise ValueError("threads must be >= 1")
    for item in items:
        if item.pred is None:
            logger.info("no prediction for %s: scoring all ground truth as FN",
                        item.stem)

    per_image: dict[str, PQStat] = {}
    if threads == 1 or len(items) <= 1:
        for item in items:
            stem, stat = _item_stats(item, registry, config)
            per_image[stem] = stat
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for stem, stat in pool.map(_item_stats, items,
                                       [registry] * len(items),
                                       [config] * len(items),
                                       chunksize=max(1, len(items) // (4 * threads))):
                per_image[stem] = stat

    total = PQStat()
    for stem in sorted(per_image):
        total += per_image[stem]
    return compute_pq(total, registry, config), per_image


def evaluate_directories(gt_dir: Path | str, pred_dir: Path | str,
                         registry: ClassRegistry,
                         config: MetricConfig | None = None,
                         threads: int = 1) -> tuple[EvaluationResult, dict[str, PQStat]]:
    """Pair two directories by stem and evaluate them."""
    items = pair_directories(gt_dir, pred_dir)
    return evaluate_items(items, registry, config, threads)
