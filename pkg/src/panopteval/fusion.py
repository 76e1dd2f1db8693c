"""Baseline heuristics that merge independent outputs into a panoptic map.

Overlapping scored instances are resolved with a greedy, confidence-ordered
suppression pass; the surviving thing segments are then stamped over a
semantic labeling, things winning every conflict.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .io import ScoredInstance
from .metrics import MetricConfig, PQStat, compute_pq
from .model import VOID_ID, ClassRegistry, PanopticMap


@dataclass(frozen=True)
class FusionConfig:
    score_threshold: float = 0.5
    keep_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError("score_threshold must lie in [0, 1]")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError("keep_fraction must lie in (0, 1]")


def resolve_overlaps(instances: Sequence[ScoredInstance],
                     config: FusionConfig | None = None,
                     shape: tuple[int, int] | None = None) -> PanopticMap:
    """Suppress overlapping instances into a things-only panoptic map.

    Instances below the score threshold are dropped; the rest are visited in
    descending score order (ties: larger area first, then input order). Each
    keeps only pixels not claimed by earlier instances and survives iff the
    remaining fraction of its original area is >= keep_fraction.
    """
    config = config or FusionConfig()
    if shape is None:
        if not instances:
            raise ValueError("cannot infer dimensions from an empty instance list")
        shape = instances[0].mask.shape
    for inst in instances:
        if inst.mask.shape != shape:
            raise ValueError(
                f"dimension mismatch: mask {inst.mask.shape} vs {shape}")

    order = sorted(range(len(instances)),
                   key=lambda i: (-instances[i].score, -instances[i].area, i))
    class_ids = np.zeros(shape, dtype=np.int32)
    instance_ids = np.zeros(shape, dtype=np.int32)
    claimed = np.zeros(shape, dtype=bool)
    next_instance: dict[int, int] = {}
    for i in order:
        inst = instances[i]
        if inst.score < config.score_threshold:
            continue
        remaining = inst.mask & ~claimed
        kept = int(remaining.sum())
        if Fraction(kept, inst.area) < Fraction(config.keep_fraction):
            continue
        zid = next_instance.get(inst.class_id, 0) + 1
        next_instance[inst.class_id] = zid
        claimed |= remaining
        class_ids[remaining] = inst.class_id
        instance_ids[remaining] = zid
    return PanopticMap(class_ids, instance_ids)


def fuse(things: PanopticMap, semantic: PanopticMap,
         registry: ClassRegistry) -> PanopticMap:
    """Merge a things-only map with a semantic labeling, things winning.

    Semantic pixels of a thing class that no instance covers become void:
    a panoptic map cannot carry instance-less thing pixels.
    """
    if things.shape != semantic.shape:
        raise ValueError(
            f"dimension mismatch: things {things.shape} vs semantic {semantic.shape}")
    _, thing_keys, _ = things.segment_index()
    for cid, _ in thing_keys:
        if cid not in registry or not registry.is_thing(cid):
            raise ValueError(
                f"instance map contains non-thing class id {cid}")

    sem = semantic.class_ids
    max_id = int(sem.max(initial=0))
    stuff_lut = np.zeros(max_id + 1, dtype=bool)
    for cid in range(1, max_id + 1):
        if cid in registry:
            stuff_lut[cid] = not registry.is_thing(cid)
        elif (sem == cid).any():
            raise ValueError(f"semantic map contains unknown class id {cid}")

    class_ids = np.where(stuff_lut[sem], sem, VOID_ID).astype(np.int32)
    instance_ids = np.zeros_like(class_ids)
    covered = things.class_ids != VOID_ID
    class_ids[covered] = things.class_ids[covered]
    instance_ids[covered] = things.instance_ids[covered]
    return PanopticMap(class_ids, instance_ids, things.crowd_keys)


def grid_search_fusion(
        scenes: Iterable[tuple[Sequence[ScoredInstance], PanopticMap, PanopticMap]],
        registry: ClassRegistry,
        score_values: Sequence[float],
        keep_values: Sequence[float],
        metric_config: MetricConfig | None = None,
) -> tuple[FusionConfig, float, list[tuple[FusionConfig, float]]]:
    """Pick the (score_threshold, keep_fraction) pair maximizing PQ.

    Scenes are (instances, semantic map, ground truth) triples; ties go to
    the first lattice point in (score, keep) order.
    """
    from .evaluate import evaluate_single

    scenes = list(scenes)
    if not scenes:
        raise ValueError("grid search needs at least one scene")
    metric_config = metric_config or MetricConfig()
    trials: list[tuple[FusionConfig, float]] = []
    best: tuple[FusionConfig, float] | None = None
    for s, k in product(score_values, keep_values):
        config = FusionConfig(score_threshold=s, keep_fraction=k)
        total = PQStat()
        for instances, semantic, gt in scenes:
            resolved = resolve_overlaps(instances, config, shape=gt.shape)
            fused = fuse(resolved, semantic, registry)
            total += evaluate_single(gt, fused, registry, metric_config)
        result = compute_pq(total, registry, metric_config)
        pq = result.all.pq if result.all else 0.0
        trials.append((config, pq))
        if best is None or pq > best[1]:
            best = (config, pq)
    return best[0], best[1], trials
