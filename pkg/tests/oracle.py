"""Naive reference implementation used as an independent oracle.

Everything here works on explicit per-pixel Python sets and exhaustive
enumeration: no numpy, no shared code with the fast path. Slow but obviously
correct at desk scale.
"""

from fractions import Fraction


def pixel_sets(pmap):
    """(key -> set of (y, x), void set) by scanning every pixel."""
    cls = pmap.class_ids.tolist()
    inst = pmap.instance_ids.tolist()
    segments = {}
    void = set()
    for y, row in enumerate(cls):
        for x, c in enumerate(row):
            if c == 0:
                void.add((y, x))
            else:
                segments.setdefault((c, inst[y][x]), set()).add((y, x))
    return segments, void


def naive_iou(gt_pixels, pred_pixels, gt_void):
    inter = len(gt_pixels & pred_pixels)
    union = len(gt_pixels) + len(pred_pixels) - inter - len(pred_pixels & gt_void)
    if union <= 0:
        return Fraction(0)
    return Fraction(inter, union)


def candidate_edges(gt, pred, min_iou=Fraction(0)):
    """All same-class non-crowd pairs with IoU above the floor, by class."""
    gt_segs, gt_void = pixel_sets(gt)
    pred_segs, _ = pixel_sets(pred)
    per_class = {}
    for gkey, gpix in gt_segs.items():
        if gkey in gt.crowd_keys:
            continue
        for pkey, ppix in pred_segs.items():
            if pkey[0] != gkey[0]:
                continue
            v = naive_iou(gpix, ppix, gt_void)
            if v > min_iou:
                per_class.setdefault(gkey[0], []).append((gkey, pkey, v))
    for edges in per_class.values():
        edges.sort(key=lambda e: (e[0], e[1]))
    return per_class


def enumerate_matchings(edges):
    """Every matching (as a tuple of edge indices) of the candidate list."""
    results = []

    def recurse(i, used_g, used_p, picked):
        if i == len(edges):
            results.append(tuple(picked))
            return
        recurse(i + 1, used_g, used_p, picked)
        g, p, _ = edges[i]
        if g not in used_g and p not in used_p:
            recurse(i + 1, used_g | {g}, used_p | {p}, picked + [i])

    recurse(0, frozenset(), frozenset(), [])
    return results


def best_matching(edges):
    """Exhaustively maximize (total IoU, sum of 2**-(rank+1)) over matchings."""
    best_key = None
    best = ()
    for picked in enumerate_matchings(edges):
        total = sum((edges[i][2] for i in picked), Fraction(0))
        pref = sum((Fraction(1, 2 << i) for i in picked), Fraction(0))
        key = (total, pref)
        if best_key is None or key > best_key:
            best_key = key
            best = picked
    return [edges[i] for i in best], (best_key or (Fraction(0), Fraction(0)))[0]


def naive_pq_stats(gt, pred, registry, threshold=0.5, optimal=False):
    """Per-class (iou_sum, tp, fp, fn) following the published procedure.

    Unique mode takes every pair strictly above the threshold; optimal mode
    solves the matching exhaustively with candidate edges at IoU >= threshold
    (strict at exactly 0.5). Unmatched predictions mostly covered by void or
    same-class crowd are dropped, everything else is an FP.
    """
    gt_segs, gt_void = pixel_sets(gt)
    pred_segs, _ = pixel_sets(pred)
    per_class_edges = candidate_edges(gt, pred)

    matched = []
    for cid in sorted(per_class_edges):
        edges = per_class_edges[cid]
        if not optimal or threshold >= Fraction(1, 2):
            matched.extend(e for e in edges if e[2] > threshold)
        else:
            chosen, _total = best_matching([e for e in edges if e[2] >= threshold])
            matched.extend(chosen)

    matched_g = {e[0] for e in matched}
    matched_p = {e[1] for e in matched}
    stats = {}

    def stat(cid):
        return stats.setdefault(cid, [Fraction(0), 0, 0, 0])

    for gkey, pkey, v in matched:
        st = stat(gkey[0])
        st[0] += v
        st[1] += 1
    for gkey in gt_segs:
        if gkey in gt.crowd_keys or gkey in matched_g:
            continue
        stat(gkey[0])[3] += 1
    crowd_by_class = {}
    for gkey in gt_segs:
        if gkey in gt.crowd_keys:
            crowd_by_class.setdefault(gkey[0], set()).update(gt_segs[gkey])
    for pkey, ppix in pred_segs.items():
        if pkey in matched_p:
            continue
        area = len(ppix)
        void_frac = Fraction(len(ppix & gt_void), area)
        crowd_pixels = crowd_by_class.get(pkey[0], set())
        crowd_frac = Fraction(len(ppix & crowd_pixels), area)
        if void_frac > threshold or crowd_frac > threshold:
            continue
        stat(pkey[0])[2] += 1
    return {cid: tuple(v) for cid, v in stats.items()}


def naive_metrics(stats):
    """Eq-style per-class PQ/SQ/RQ plus plain means, all from the naive tallies."""
    per_class = {}
    for cid, (iou_sum, tp, fp, fn) in sorted(stats.items()):
        if tp == fp == fn == 0:
            continue
        denom = Fraction(2 * tp + fp + fn, 2)
        pq = iou_sum / denom
        sq = iou_sum / tp if tp else Fraction(0)
        rq = Fraction(tp) / denom
        per_class[cid] = (pq, sq, rq)
    if not per_class:
        return per_class, None
    n = len(per_class)
    mean_pq = sum((v[0] for v in per_class.values()), Fraction(0)) / n
    return per_class, mean_pq
