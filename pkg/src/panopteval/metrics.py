"""PQ/SQ/RQ computation, scale breakdowns, and semantic mean IoU.

Per class, PQ = (sum of matched IoUs) / (TP + FP/2 + FN/2), which factors
exactly into SQ (mean matched IoU) times RQ (an F1-style detection term).
Aggregates are unweighted means over classes that appear in the data, so the
metric is insensitive to class imbalance.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .errors import UnknownClassError
from .matching import MatchResult
from .model import VOID_ID, ClassRegistry, PanopticMap


@dataclass
class ClassStat:
    iou_sum: Fraction = Fraction(0)
    tp: int = 0
    fp: int = 0
    fn: int = 0


class PQStat:
    """Per-class accumulator of matched-IoU mass and TP/FP/FN counts.

    Merging is a field-wise sum; the IoU mass is an exact rational, so merge
    order never changes the result and parallel reductions are safe.
    """

    def __init__(self):
        self.per_class: dict[int, ClassStat] = defaultdict(ClassStat)

    def __getitem__(self, class_id: int) -> ClassStat:
        return self.per_class[class_id]

    def __iadd__(self, other: "PQStat") -> "PQStat":
        for cid, st in other.per_class.items():
            mine = self.per_class[cid]
            mine.iou_sum += st.iou_sum
            mine.tp += st.tp
            mine.fp += st.fp
            mine.fn += st.fn
        return self

    def class_ids(self) -> list[int]:
        return sorted(self.per_class)


def pq_stats(match: MatchResult) -> PQStat:
    """Tally per-class iou_sum/tp/fp/fn from a match partition."""
    stat = PQStat()
    for cid, cm in match.classes.items():
        st = stat[cid]
        for pair in cm.tp:
            st.iou_sum += pair.iou
        st.tp += len(cm.tp)
        st.fp += len(cm.fp)
        st.fn += len(cm.fn)
    return stat


def merge_stats(a: PQStat, b: PQStat) -> PQStat:
    """Field-wise sum of two accumulators (commutative, identity = empty)."""
    out = PQStat()
    out += a
    out += b
    return out


@dataclass(frozen=True)
class MetricConfig:
    iou_threshold: float = 0.5
    alpha: float = 0.5
    beta: float = 0.5
    class_subset: frozenset[int] | None = None

    def __post_init__(self):
        if not 0 < self.iou_threshold < 1:
            raise ValueError("iou_threshold must lie in (0, 1)")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")


@dataclass(frozen=True)
class ClassResult:
    class_id: int
    name: str
    isthing: bool
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class SplitResult:
    pq: float
    sq: float
    rq: float
    n_classes: int
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class EvaluationResult:
    per_class: list[ClassResult]
    all: SplitResult | None
    stuff: SplitResult | None
    things: SplitResult | None


def _split(rows: list[ClassResult]) -> SplitResult | None:
    if not rows:
        return None
    n = len(rows)
    return SplitResult(
        pq=sum(r.pq for r in rows) / n,
        sq=sum(r.sq for r in rows) / n,
        rq=sum(r.rq for r in rows) / n,
        n_classes=n,
        tp=sum(r.tp for r in rows),
        fp=sum(r.fp for r in rows),
        fn=sum(r.fn for r in rows),
    )


def compute_pq(stats: PQStat, registry: ClassRegistry,
               config: MetricConfig | None = None) -> EvaluationResult:
    """Per-class and aggregate PQ/SQ/RQ from accumulated statistics.

    Classes with tp = fp = fn = 0 are excluded from every mean. SQ for a
    class without matches is reported as 0 by convention.
    """
    config = config or MetricConfig()
    rows: list[ClassResult] = []
    for cid in sorted(stats.per_class):
        if config.class_subset is not None and cid not in config.class_subset:
            continue
        st = stats.per_class[cid]
        if st.tp == 0 and st.fp == 0 and st.fn == 0:
            continue
        if cid not in registry:
            raise UnknownClassError(f"statistics reference unknown class id {cid}")
        denom = st.tp + 0.5 * st.fp + 0.5 * st.fn
        pq = float(2 * st.iou_sum / (2 * st.tp + st.fp + st.fn))
        sq = float(st.iou_sum / st.tp) if st.tp else 0.0
        rq = st.tp / denom
        cls = registry[cid]
        rows.append(ClassResult(cid, cls.name, cls.isthing,
                                pq, sq, rq, st.tp, st.fp, st.fn))
    return EvaluationResult(
        per_class=rows,
        all=_split(rows),
        stuff=_split([r for r in rows if not r.isthing]),
        things=_split([r for r in rows if r.isthing]),
    )


def rq_alpha_beta(stats: PQStat, alpha: float, beta: float) -> dict[int, float]:
    """Recognition quality with tunable FP/FN penalties.

    RQ(alpha, beta) = tp / (tp + alpha*fp + beta*fn); alpha = beta = 0.5
    reproduces plain RQ. Classes with a zero denominator are excluded.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    out: dict[int, float] = {}
    for cid in sorted(stats.per_class):
        st = stats.per_class[cid]
        denom = st.tp + alpha * st.fp + beta * st.fn
        if denom == 0:
            continue
        out[cid] = st.tp / denom
    return out


def nearest_rank(sorted_values, fraction: float):
    """Nearest-rank percentile: smallest value covering `fraction` of the data."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("percentile of empty data")
    rank = max(1, math.ceil(fraction * n))
    return sorted_values[min(rank, n) - 1]


def scale_thresholds(gt_maps: Iterable[PanopticMap],
                     registry: ClassRegistry | None = None,
                     things_only: bool = False) -> tuple[int, int]:
    """25th/75th nearest-rank percentiles of non-crowd segment areas.

    Defines the small/medium/large strata; ``things_only`` restricts the
    area sample to thing classes (requires a registry).
    """
    if things_only and registry is None:
        raise ValueError("things_only requires a registry")
    areas: list[int] = []
    for pmap in gt_maps:
        _, keys, seg_areas = pmap.segment_index()
        for key, area in zip(keys, seg_areas):
            if key in pmap.crowd_keys:
                continue
            if things_only and not registry.is_thing(key[0]):
                continue
            areas.append(int(area))
    if len(areas) < 4:
        raise ValueError(
            f"scale cuts need at least 4 ground-truth segments, got {len(areas)}")
    areas.sort()
    return nearest_rank(areas, 0.25), nearest_rank(areas, 0.75)


_STRATA = ("small", "medium", "large")


def _stratum(area: int, cuts: tuple[int, int]) -> str:
    s_cut, l_cut = cuts
    if area <= s_cut:
        return "small"
    if area <= l_cut:
        return "medium"
    return "large"


def scale_breakdown(matches: Iterable[MatchResult], cuts: tuple[int, int],
                    registry: ClassRegistry,
                    config: MetricConfig | None = None) -> dict[str, EvaluationResult]:
    """PQ/SQ/RQ per scale stratum.

    TP and FN follow the ground-truth segment's area stratum; FP follow the
    predicted segment's area (the only area an unmatched prediction has).
    """
    stats = {name: PQStat() for name in _STRATA}
    for match in matches:
        for cid, cm in match.classes.items():
            for pair in cm.tp:
                st = stats[_stratum(pair.gt_area, cuts)][cid]
                st.iou_sum += pair.iou
                st.tp += 1
            for _key, area in cm.fn:
                stats[_stratum(area, cuts)][cid].fn += 1
            for _key, area in cm.fp:
                stats[_stratum(area, cuts)][cid].fp += 1
    return {name: compute_pq(stats[name], registry, config) for name in _STRATA}


@dataclass(frozen=True)
class MeanIoUResult:
    per_class: dict[int, float]
    mean: float


def semantic_iou_counts(
        pairs: Iterable[tuple[PanopticMap, PanopticMap]],
) -> tuple[dict[int, int], dict[int, int]]:
    """Pooled per-class intersection and union pixel counts.

    Ground-truth void pixels are excluded from both tallies; prediction void
    forms no class of its own.
    """
    inter_total: dict[int, int] = {}
    union_total: dict[int, int] = {}
    for gt, pred in pairs:
        if gt.shape != pred.shape:
            raise ValueError(
                f"dimension mismatch: gt {gt.shape} vs prediction {pred.shape}")
        g = gt.class_ids.ravel()
        p = pred.class_ids.ravel()
        valid = g != VOID_ID
        g = g[valid]
        p = p[valid]
        n_bins = int(max(g.max(initial=0), p.max(initial=0))) + 1
        inter = np.bincount(g[g == p], minlength=n_bins)
        union = (np.bincount(g, minlength=n_bins)
                 + np.bincount(p, minlength=n_bins) - inter)
        for cid in np.nonzero(union)[0].tolist():
            if cid == VOID_ID:
                continue
            inter_total[cid] = inter_total.get(cid, 0) + int(inter[cid])
            union_total[cid] = union_total.get(cid, 0) + int(union[cid])
    return inter_total, union_total


def mean_iou(gt: PanopticMap, pred: PanopticMap,
             registry: ClassRegistry) -> MeanIoUResult:
    """Semantic mean IoU over classes, ignoring instance ids.

    Pixels void in the ground truth are excluded from both intersection and
    union; the mean runs over classes present in either map. Distinct from
    SQ, which averages IoU over matched segments only.
    """
    inter, union = semantic_iou_counts([(gt, pred)])
    per_class: dict[int, float] = {}
    for cid in sorted(union):
        if cid not in registry:
            raise UnknownClassError(f"map contains unknown class id {cid}")
        per_class[cid] = inter[cid] / union[cid]
    mean = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return MeanIoUResult(per_class=per_class, mean=mean)
