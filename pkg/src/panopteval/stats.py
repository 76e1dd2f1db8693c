"""Statistical analyses: bootstrap intervals, overlap CDFs, threshold sweeps."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .matching import (intersection_table, match_table, max_weight_matching,
                       _candidates_by_class)
from .metrics import (EvaluationResult, MetricConfig, PQStat, compute_pq,
                      nearest_rank, pq_stats)
from .model import ClassRegistry, PanopticMap


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    lo: float
    hi: float
    n_resamples: int
    seed: int


def _aggregate_values(result: EvaluationResult) -> dict[str, float | None]:
    return {
        "pq": result.all.pq if result.all else None,
        "sq": result.all.sq if result.all else None,
        "rq": result.all.rq if result.all else None,
        "pq_stuff": result.stuff.pq if result.stuff else None,
        "pq_things": result.things.pq if result.things else None,
    }


def bootstrap_pq(per_image_stats: Sequence[PQStat], registry: ClassRegistry,
                 config: MetricConfig | None = None,
                 n_resamples: int = 1000,
                 seed: int = 0) -> dict[str, BootstrapResult]:
    """Image-level bootstrap of the reported aggregates.

    Images are resampled with replacement; each resample draws from an
    independent generator keyed by (seed, resample index), so results do not
    depend on execution schedule. Bounds are nearest-rank 5th and 95th
    percentiles. Aggregates undefined on the full set are omitted; resamples
    where an aggregate is undefined contribute 0.
    """
    stats = list(per_image_stats)
    if not stats:
        raise ValueError("bootstrap needs at least one image")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    config = config or MetricConfig()

    total = PQStat()
    for st in stats:
        total += st
    points = _aggregate_values(compute_pq(total, registry, config))
    keys = [k for k, v in points.items() if v is not None]

    samples: dict[str, list[float]] = {k: [] for k in keys}
    n = len(stats)
    for i in range(n_resamples):
        rng = np.random.default_rng((seed, i))
        merged = PQStat()
        for j in rng.integers(0, n, size=n).tolist():
            merged += stats[j]
        values = _aggregate_values(compute_pq(merged, registry, config))
        for k in keys:
            samples[k].append(values[k] if values[k] is not None else 0.0)

    out: dict[str, BootstrapResult] = {}
    for k in keys:
        ordered = sorted(samples[k])
        out[k] = BootstrapResult(
            point=points[k],
            lo=nearest_rank(ordered, 0.05),
            hi=nearest_rank(ordered, 0.95),
            n_resamples=n_resamples,
            seed=seed,
        )
    return out


def overlap_cdf(pairs: Iterable[tuple[PanopticMap, PanopticMap]],
                registry: ClassRegistry) -> list[tuple[float, float]]:
    """Empirical CDF of matched IoUs under threshold-free optimal matching.

    Candidate edges are all positive-IoU same-class pairs (crowd ground truth
    excluded); per class the total IoU is maximized exactly. Returns points
    (iou, cumulative fraction) sorted by IoU, one per distinct value.
    """
    ious: list[Fraction] = []
    for gt, pred in pairs:
        table = intersection_table(gt, pred)
        for edges in _candidates_by_class(table).values():
            for _g, _p, v in max_weight_matching([e for e in edges if e[2] > 0]):
                ious.append(v)
    if not ious:
        return []
    ious.sort()
    total = len(ious)
    points: list[tuple[float, float]] = []
    for i, v in enumerate(ious, start=1):
        if i == total or ious[i] != v:
            points.append((float(v), i / total))
    return points


def threshold_sweep(pairs: Iterable[tuple[PanopticMap, PanopticMap]],
                    registry: ClassRegistry,
                    thresholds: Sequence[float],
                    config: MetricConfig | None = None,
                    ) -> list[tuple[float, EvaluationResult]]:
    """Full metric computation at each IoU threshold.

    Thresholds above 0.5 use the unique matching; at or below 0.5 the optimal
    matching is solved. Pixel scans happen once per pair; every threshold is
    re-derived from the cached overlap tables.
    """
    for t in thresholds:
        if not 0 < t < 1:
            raise ValueError(f"threshold {t} outside (0, 1)")
    base = config or MetricConfig()
    tables = [intersection_table(gt, pred) for gt, pred in pairs]
    out: list[tuple[float, EvaluationResult]] = []
    for t in thresholds:
        total = PQStat()
        for table in tables:
            match = match_table(table, registry, t, optimal=t <= 0.5)
            total += pq_stats(match)
        cfg = MetricConfig(iou_threshold=t, alpha=base.alpha, beta=base.beta,
                           class_subset=base.class_subset)
        out.append((t, compute_pq(total, registry, cfg)))
    return out
