"""Segment matching: overlap tables, IoU, and the TP/FP/FN partition.

Above a 0.5 IoU threshold the non-overlap property of panoptic maps makes the
matching unique, so it is read straight off the overlap table. At or below
0.5 several predictions can compete for a ground-truth segment and the
matching is solved exactly as a maximum-weight bipartite matching over the
per-class candidate graph, with a deterministic lexicographic tie-break.

All IoUs are exact rationals (ratios of pixel counts), which makes matching
decisions and downstream metric sums independent of summation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import UnknownClassError
from .model import VOID_KEY, ClassRegistry, PanopticMap, SegmentKey

# bincount is faster than sort-based unique, but only worth allocating for
# graphs that fit comfortably in memory
_MAX_BINCOUNT_BINS = 1 << 26


@dataclass
class IntersectionTable:
    """Sparse pairwise overlap counts between two segmentations.

    ``overlaps`` maps (gt_key, pred_key) to the shared pixel count; the
    pseudo-key (0, 0) stands for ground-truth void. Crowd ground-truth
    segments appear under their ordinary keys and are listed in ``gt_crowd``.
    Zero-overlap pairs are absent, so every count is >= 1.
    """

    overlaps: dict[tuple[SegmentKey, SegmentKey], int]
    gt_areas: dict[SegmentKey, int]
    pred_areas: dict[SegmentKey, int]
    gt_crowd: frozenset[SegmentKey]
    _void_by_pred: dict[SegmentKey, int] = field(default_factory=dict)
    _crowd_by_pred: dict[SegmentKey, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self._void_by_pred and not self._crowd_by_pred:
            for (g, p), n in self.overlaps.items():
                if g == VOID_KEY:
                    self._void_by_pred[p] = self._void_by_pred.get(p, 0) + n
                elif g in self.gt_crowd and g[0] == p[0]:
                    self._crowd_by_pred[p] = self._crowd_by_pred.get(p, 0) + n

    def overlap(self, gt_key: SegmentKey, pred_key: SegmentKey) -> int:
        return self.overlaps.get((gt_key, pred_key), 0)

    def void_overlap(self, pred_key: SegmentKey) -> int:
        """Pixels of the prediction lying on ground-truth void."""
        return self._void_by_pred.get(pred_key, 0)

    def crowd_overlap(self, pred_key: SegmentKey) -> int:
        """Pixels of the prediction lying on same-class crowd ground truth."""
        return self._crowd_by_pred.get(pred_key, 0)


def intersection_table(gt: PanopticMap, pred: PanopticMap) -> IntersectionTable:
    """Exact pairwise overlap counts from one joint raster scan."""
    if gt.shape != pred.shape:
        raise ValueError(
            f"dimension mismatch: gt {gt.shape} vs prediction {pred.shape}")
    gt_raster, gt_keys, gt_areas = gt.segment_index()
    pr_raster, pr_keys, pr_areas = pred.segment_index()
    n_pred = len(pr_keys) + 1

    combo = np.multiply(gt_raster.ravel(), n_pred, dtype=np.int64)
    combo += pr_raster.ravel()
    n_bins = (len(gt_keys) + 1) * n_pred
    if n_bins <= _MAX_BINCOUNT_BINS:
        counts = np.bincount(combo, minlength=n_bins)
        flat = np.nonzero(counts)[0]
        pairs = zip(flat.tolist(), counts[flat].tolist())
    else:
        uniq, cnt = np.unique(combo, return_counts=True)
        pairs = zip(uniq.tolist(), cnt.tolist())

    overlaps: dict[tuple[SegmentKey, SegmentKey], int] = {}
    for packed, n in pairs:
        gi, pi = divmod(packed, n_pred)
        if pi == 0:
            continue  # prediction void never affects evaluation
        gk = VOID_KEY if gi == 0 else gt_keys[gi - 1]
        overlaps[(gk, pr_keys[pi - 1])] = int(n)

    return IntersectionTable(
        overlaps=overlaps,
        gt_areas={k: int(a) for k, a in zip(gt_keys, gt_areas)},
        pred_areas={k: int(a) for k, a in zip(pr_keys, pr_areas)},
        gt_crowd=frozenset(k for k in gt.crowd_keys if k in gt_keys),
    )


def iou(gt_key: SegmentKey, pred_key: SegmentKey,
        table: IntersectionTable) -> Fraction:
    """IoU of a same-class pair, with ground-truth void excised.

    Prediction pixels that land on ground-truth void are removed from the
    union before dividing, so spilling over void costs nothing.
    """
    if gt_key[0] != pred_key[0]:
        raise ValueError(
            f"cross-class pair {gt_key} / {pred_key} is never a match candidate")
    inter = table.overlap(gt_key, pred_key)
    union = (table.gt_areas[gt_key] + table.pred_areas[pred_key]
             - inter - table.void_overlap(pred_key))
    if union <= 0:
        return Fraction(0)
    return Fraction(inter, union)


@dataclass(frozen=True)
class MatchedPair:
    gt_key: SegmentKey
    pred_key: SegmentKey
    iou: Fraction
    gt_area: int
    pred_area: int


@dataclass
class ClassMatch:
    tp: list[MatchedPair] = field(default_factory=list)
    fp: list[tuple[SegmentKey, int]] = field(default_factory=list)
    fn: list[tuple[SegmentKey, int]] = field(default_factory=list)
    discarded: list[tuple[SegmentKey, int]] = field(default_factory=list)


@dataclass
class MatchResult:
    """Per-class partition of segments into TP pairs, FP, and FN.

    Crowd ground-truth segments never appear in tp or fn; predictions mostly
    covered by void or same-class crowds land in ``discarded`` instead of fp.
    """

    threshold: float
    classes: dict[int, ClassMatch]


_Edge = tuple[SegmentKey, SegmentKey, Fraction]


def _candidates_by_class(table: IntersectionTable) -> dict[int, list[_Edge]]:
    """Same-class, non-crowd candidate pairs with positive IoU, sorted by key."""
    per_class: dict[int, list[_Edge]] = {}
    for (g, p), _n in table.overlaps.items():
        if g == VOID_KEY or g in table.gt_crowd or g[0] != p[0]:
            continue
        per_class.setdefault(g[0], []).append((g, p, iou(g, p, table)))
    for edges in per_class.values():
        edges.sort(key=lambda e: (e[0], e[1]))
    return per_class


def max_weight_matching(edges: list[_Edge]) -> list[_Edge]:
    """Exact maximum-weight bipartite matching by repeated best augmentation.

    Weights are (iou, tie) pairs compared lexicographically, where tie gives
    edge i (in the caller's order) the value 2**-(i+1). Subset sums of
    distinct powers of two are unique, so among all matchings with maximal
    total IoU the one containing the earliest-ranked edges wins, which makes
    the result deterministic.
    """
    if not edges:
        return []
    gts = sorted({e[0] for e in edges})
    preds = sorted({e[1] for e in edges})
    gt_of = {g: i for i, g in enumerate(gts)}
    pred_of = {p: i for i, p in enumerate(preds)}
    weight = [(e[2], Fraction(1, 2 << i)) for i, e in enumerate(edges)]
    edge_gt = [gt_of[e[0]] for e in edges]
    edge_pred = [pred_of[e[1]] for e in edges]
    out_edges: list[list[int]] = [[] for _ in gts]
    for idx in range(len(edges)):
        out_edges[edge_gt[idx]].append(idx)

    zero = (Fraction(0), Fraction(0))
    match_at_gt: list[int | None] = [None] * len(gts)
    match_at_pred: list[int | None] = [None] * len(preds)

    while True:
        # best-gain alternating path from any free gt to each pred
        best: list[tuple[Fraction, Fraction] | None] = [None] * len(preds)
        back: list[tuple[int, int | None] | None] = [None] * len(preds)
        for gi in range(len(gts)):
            if match_at_gt[gi] is not None:
                continue
            for e in out_edges[gi]:
                gain = weight[e]
                j = edge_pred[e]
                if best[j] is None or gain > best[j]:
                    best[j] = gain
                    back[j] = (e, None)
        for _ in range(len(preds)):
            improved = False
            for j in range(len(preds)):
                e0 = match_at_pred[j]
                if best[j] is None or e0 is None:
                    continue
                base = (best[j][0] - weight[e0][0], best[j][1] - weight[e0][1])
                for e in out_edges[edge_gt[e0]]:
                    j2 = edge_pred[e]
                    if j2 == j:
                        continue
                    gain = (base[0] + weight[e][0], base[1] + weight[e][1])
                    if best[j2] is None or gain > best[j2]:
                        best[j2] = gain
                        back[j2] = (e, j)
                        improved = True
            if not improved:
                break
        target = None
        target_gain = zero
        for j in range(len(preds)):
            if match_at_pred[j] is None and best[j] is not None and best[j] > target_gain:
                target_gain = best[j]
                target = j
        if target is None:
            break
        j: int | None = target
        while j is not None:
            e, prev = back[j]
            match_at_pred[j] = e
            match_at_gt[edge_gt[e]] = e
            j = prev

    return [edges[e] for e in match_at_pred if e is not None]


def filter_unmatched(unmatched_preds: list[SegmentKey],
                     table: IntersectionTable,
                     threshold: float) -> tuple[list[SegmentKey], list[SegmentKey]]:
    """Split unmatched predictions into false positives and discards.

    A prediction is discarded (not counted as FP) when the fraction of its
    pixels on ground-truth void, or on crowd ground truth of its own class,
    exceeds the matching threshold.
    """
    fp: list[SegmentKey] = []
    discarded: list[SegmentKey] = []
    for key in unmatched_preds:
        area = table.pred_areas[key]
        if (Fraction(table.void_overlap(key), area) > threshold
                or Fraction(table.crowd_overlap(key), area) > threshold):
            discarded.append(key)
        else:
            fp.append(key)
    return fp, discarded


def _check_classes_known(table: IntersectionTable, registry: ClassRegistry) -> None:
    for key in list(table.gt_areas) + list(table.pred_areas):
        if key[0] not in registry:
            raise UnknownClassError(f"segment {key} has unknown class id {key[0]}")


def match_table(table: IntersectionTable, registry: ClassRegistry,
                threshold: float, optimal: bool) -> MatchResult:
    """Produce the TP/FP/FN partition from a prebuilt overlap table."""
    _check_classes_known(table, registry)
    candidates = _candidates_by_class(table)

    chosen: dict[int, list[_Edge]] = {}
    for cid, edges in candidates.items():
        if optimal:
            # at the 0.5 boundary the strict rule applies, which keeps the
            # optimal matching identical to the unique one
            if threshold >= 0.5:
                picked = [e for e in edges if e[2] > threshold]
            else:
                picked = max_weight_matching(
                    [e for e in edges if e[2] >= threshold])
        else:
            picked = [e for e in edges if e[2] > threshold]
        if not optimal or threshold >= 0.5:
            gt_seen = {e[0] for e in picked}
            pred_seen = {e[1] for e in picked}
            if len(gt_seen) != len(picked) or len(pred_seen) != len(picked):
                raise AssertionError(
                    "uniqueness violated above the 0.5 threshold; "
                    "inputs are not valid panoptic maps")
        chosen[cid] = picked

    matched_gt = {e[0] for edges in chosen.values() for e in edges}
    matched_pred = {e[1] for edges in chosen.values() for e in edges}

    classes: dict[int, ClassMatch] = {}

    def class_match(cid: int) -> ClassMatch:
        return classes.setdefault(cid, ClassMatch())

    for cid in chosen:
        class_match(cid).tp = [
            MatchedPair(g, p, v, table.gt_areas[g], table.pred_areas[p])
            for g, p, v in chosen[cid]]
    for key in sorted(table.gt_areas):
        if key in table.gt_crowd or key in matched_gt:
            continue
        class_match(key[0]).fn.append((key, table.gt_areas[key]))
    unmatched_by_class: dict[int, list[SegmentKey]] = {}
    for key in sorted(table.pred_areas):
        if key not in matched_pred:
            unmatched_by_class.setdefault(key[0], []).append(key)
    for cid, keys in unmatched_by_class.items():
        fp, discarded = filter_unmatched(keys, table, threshold)
        class_match(cid).fp = [(k, table.pred_areas[k]) for k in fp]
        class_match(cid).discarded = [(k, table.pred_areas[k]) for k in discarded]

    return MatchResult(threshold=threshold,
                       classes=dict(sorted(classes.items())))


def match_unique(gt: PanopticMap, pred: PanopticMap, registry: ClassRegistry,
                 threshold: float = 0.5) -> MatchResult:
    """Unique greedy matching for thresholds >= 0.5 (IoU strictly greater).

    Non-overlap of panoptic segments guarantees at most one candidate above
    0.5 per segment, so the result does not depend on enumeration order.
    """
    if threshold < 0.5 or threshold >= 1:
        raise ValueError("unique matching requires a threshold in [0.5, 1)")
    return match_table(intersection_table(gt, pred), registry, threshold,
                       optimal=False)


def match_optimal(gt: PanopticMap, pred: PanopticMap, registry: ClassRegistry,
                  threshold: float = 0.5) -> MatchResult:
    """Optimal matching for thresholds <= 0.5, maximizing total IoU.

    Candidate edges use IoU >= threshold below 0.5 and the strict rule at
    exactly 0.5, where it coincides with the unique matching.
    """
    if threshold <= 0 or threshold > 0.5:
        raise ValueError("optimal matching requires a threshold in (0, 0.5]")
    return match_table(intersection_table(gt, pred), registry, threshold,
                       optimal=True)
