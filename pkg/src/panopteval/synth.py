"""Synthetic ground truth and controlled perturbations for desk-scale testing.

Maps are Voronoi partitions of random sites, so segments stay connected and
plausibly shaped without any dataset dependency. Every operation draws all
randomness from an explicit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import ClassDef, ClassRegistry, PanopticMap, SegmentKey


@dataclass(frozen=True)
class SynthSpec:
    width: int
    height: int
    n_stuff_classes: int = 2
    n_thing_classes: int = 2
    n_segments: int = 6
    crowd_probability: float = 0.0
    void_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("map dimensions must be >= 1")
        if self.n_stuff_classes < 0 or self.n_thing_classes < 0:
            raise ValueError("class counts must be >= 0")
        if not 0.0 <= self.crowd_probability <= 1.0:
            raise ValueError("crowd_probability must lie in [0, 1]")
        if not 0.0 <= self.void_fraction <= 1.0:
            raise ValueError("void_fraction must lie in [0, 1]")
        if self.void_fraction < 1.0:
            if self.n_segments < 1:
                raise ValueError("need at least one segment unless fully void")
            if self.n_stuff_classes + self.n_thing_classes < 1:
                raise ValueError("need at least one class unless fully void")


def registry_for(spec: SynthSpec) -> ClassRegistry:
    """Registry with ids 1..n_stuff as stuff and the rest as things."""
    classes = [ClassDef(i + 1, f"stuff_{i + 1}", False)
               for i in range(spec.n_stuff_classes)]
    classes += [ClassDef(spec.n_stuff_classes + i + 1, f"thing_{i + 1}", True)
                for i in range(spec.n_thing_classes)]
    return ClassRegistry(classes)


def _voronoi_cells(rng: np.random.Generator, height: int, width: int,
                   n_sites: int) -> np.ndarray:
    sites_y = rng.uniform(0, height, size=n_sites).astype(np.float32)
    sites_x = rng.uniform(0, width, size=n_sites).astype(np.float32)
    yy = np.arange(height, dtype=np.float32)
    xx = np.arange(width, dtype=np.float32)
    # chunk rows so the (pixels x sites) distance block stays bounded
    rows_per_chunk = max(1, int(5e7 // max(1, width * n_sites)))
    cells = np.empty((height, width), dtype=np.int32)
    for y0 in range(0, height, rows_per_chunk):
        y1 = min(height, y0 + rows_per_chunk)
        dy = (yy[y0:y1, None, None] - sites_y[None, None, :]) ** 2
        dx = (xx[None, :, None] - sites_x[None, None, :]) ** 2
        cells[y0:y1] = np.argmin(dy + dx, axis=2)
    return cells


def _carve_void(rng: np.random.Generator, seg_raster: np.ndarray,
                fraction: float) -> None:
    if fraction <= 0:
        return
    h, w = seg_raster.shape
    target = round(fraction * h * w)
    if fraction >= 1.0 or target >= h * w:
        seg_raster[:] = 0
        return
    carved = int((seg_raster == 0).sum())
    attempts = 0
    while carved < target and attempts < 10_000:
        attempts += 1
        rh = int(rng.integers(1, max(2, h // 3)))
        rw = int(rng.integers(1, max(2, w // 3)))
        y0 = int(rng.integers(0, h - rh + 1))
        x0 = int(rng.integers(0, w - rw + 1))
        seg_raster[y0:y0 + rh, x0:x0 + rw] = 0
        carved = int((seg_raster == 0).sum())


def gen_ground_truth(spec: SynthSpec) -> PanopticMap:
    """Deterministic synthetic panoptic map for a generation spec."""
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    if spec.void_fraction >= 1.0:
        return PanopticMap.from_segment_index(np.zeros((h, w), np.int32), [])

    cells = _voronoi_cells(rng, h, w, spec.n_segments)
    class_ids = list(range(1, spec.n_stuff_classes + spec.n_thing_classes + 1))
    cell_class = rng.choice(class_ids, size=spec.n_segments).tolist()

    next_instance: dict[int, int] = {}
    cell_key: list[SegmentKey] = []
    for cid in cell_class:
        if cid <= spec.n_stuff_classes:
            cell_key.append((cid, 0))
        else:
            zid = next_instance.get(cid, 0) + 1
            next_instance[cid] = zid
            cell_key.append((cid, zid))

    keys = sorted(set(cell_key))
    index_of = {k: i + 1 for i, k in enumerate(keys)}
    lut = np.array([index_of[k] for k in cell_key], dtype=np.int32)
    seg_raster = lut[cells]

    _carve_void(rng, seg_raster, spec.void_fraction)
    # drop keys fully swallowed by void carving
    areas = np.bincount(seg_raster.ravel(), minlength=len(keys) + 1)[1:]
    if len(areas) and areas.min() < 1:
        survivors = [k for k, a in zip(keys, areas) if a > 0]
        remap = np.zeros(len(keys) + 1, dtype=np.int32)
        for new, key in enumerate(survivors, start=1):
            remap[index_of[key]] = new
        seg_raster = remap[seg_raster]
        keys = survivors

    crowd = set()
    for key in keys:
        if key[0] > spec.n_stuff_classes and rng.random() < spec.crowd_probability:
            crowd.add(key)
    return PanopticMap.from_segment_index(seg_raster, keys, crowd)


# ---------------------------------------------------------------------------
# perturbations


@dataclass(frozen=True)
class BoundaryJitter:
    """Resample each pixel from a random offset within the given radius."""

    radius: int
    seed: int = 0


@dataclass(frozen=True)
class SplitSegment:
    """Split one thing segment into two instances along a random line."""

    seed: int = 0
    target: SegmentKey | None = None


@dataclass(frozen=True)
class MergeSegments:
    """Merge two thing segments of one class into a single instance."""

    seed: int = 0
    targets: tuple[SegmentKey, SegmentKey] | None = None


@dataclass(frozen=True)
class Relabel:
    """Reassign one segment to a different class of the same kind."""

    seed: int = 0
    target: SegmentKey | None = None
    new_class: int | None = None


@dataclass(frozen=True)
class DropSegment:
    """Turn one segment into void."""

    seed: int = 0
    target: SegmentKey | None = None


@dataclass(frozen=True)
class AddSpurious:
    """Stamp a new thing segment of the given area over the map."""

    area: int
    seed: int = 0
    class_id: int | None = None


Perturbation = Union[BoundaryJitter, SplitSegment, MergeSegments, Relabel,
                     DropSegment, AddSpurious]


def _pick(rng: np.random.Generator, options: list):
    return options[int(rng.integers(0, len(options)))]


def _require_target(pmap: PanopticMap, target: SegmentKey) -> None:
    _, keys, _ = pmap.segment_index()
    if tuple(target) not in keys:
        raise ValueError(f"target segment {tuple(target)} absent from map")


def _next_instance_id(keys, class_id: int) -> int:
    return max((z for c, z in keys if c == class_id), default=0) + 1


def _rebuild(pmap: PanopticMap, class_ids, instance_ids) -> PanopticMap:
    new = PanopticMap(class_ids, instance_ids)
    _, keys, _ = new.segment_index()
    crowd = frozenset(k for k in pmap.crowd_keys if k in keys)
    return PanopticMap(class_ids, instance_ids, crowd)


def perturb(pmap: PanopticMap, perturbation: Perturbation,
            registry: ClassRegistry) -> PanopticMap:
    """Apply exactly one error mode; the output is always a valid map."""
    rng = np.random.default_rng(perturbation.seed)
    _, keys, _ = pmap.segment_index()

    if isinstance(perturbation, BoundaryJitter):
        r = perturbation.radius
        if r < 0:
            raise ValueError("jitter radius must be >= 0")
        if r == 0:
            return PanopticMap(pmap.class_ids, pmap.instance_ids, pmap.crowd_keys)
        h, w = pmap.shape
        yy = rng.integers(-r, r + 1, size=(h, w), dtype=np.int32)
        xx = rng.integers(-r, r + 1, size=(h, w), dtype=np.int32)
        yy += np.arange(h, dtype=np.int32)[:, None]
        xx += np.arange(w, dtype=np.int32)[None, :]
        np.clip(yy, 0, h - 1, out=yy)
        np.clip(xx, 0, w - 1, out=xx)
        flat = yy * np.int32(w)
        flat += xx
        return _rebuild(pmap,
                        np.take(pmap.class_ids.ravel(), flat),
                        np.take(pmap.instance_ids.ravel(), flat))

    if isinstance(perturbation, SplitSegment):
        areas = pmap.segment_areas()
        candidates = [k for k in keys
                      if registry.is_thing(k[0]) and k not in pmap.crowd_keys
                      and areas[k] >= 2]
        if perturbation.target is not None:
            _require_target(pmap, perturbation.target)
            target = tuple(perturbation.target)
        elif candidates:
            target = _pick(rng, sorted(candidates))
        else:
            raise ValueError("no splittable thing segment in map")
        raster, keys, _ = pmap.segment_index()
        mask = raster == (keys.index(target) + 1)
        ys, xs = np.nonzero(mask)
        cy, cx = ys.mean(), xs.mean()
        side = None
        for _ in range(16):
            theta = rng.uniform(0, math.pi)
            s = (xs - cx) * math.cos(theta) + (ys - cy) * math.sin(theta) > 0
            if 0 < int(s.sum()) < len(ys):
                side = s
                break
        if side is None:
            side = np.arange(len(ys)) % 2 == 0  # collinear pixels: alternate
        inst = np.array(pmap.instance_ids)
        inst[ys[side], xs[side]] = _next_instance_id(keys, target[0])
        return _rebuild(pmap, pmap.class_ids, inst)

    if isinstance(perturbation, MergeSegments):
        if perturbation.targets is not None:
            a, b = (tuple(perturbation.targets[0]), tuple(perturbation.targets[1]))
            _require_target(pmap, a)
            _require_target(pmap, b)
            if a[0] != b[0] or not registry.is_thing(a[0]):
                raise ValueError("can only merge two thing segments of one class")
        else:
            by_class: dict[int, list[SegmentKey]] = {}
            for k in keys:
                if registry.is_thing(k[0]) and k not in pmap.crowd_keys:
                    by_class.setdefault(k[0], []).append(k)
            mergeable = sorted(c for c, ks in by_class.items() if len(ks) >= 2)
            if not mergeable:
                raise ValueError("no class with two thing segments to merge")
            cid = _pick(rng, mergeable)
            a, b = sorted(by_class[cid])[:2]
        inst = np.array(pmap.instance_ids)
        mask = (pmap.class_ids == b[0]) & (pmap.instance_ids == b[1])
        inst[mask] = a[1]
        return _rebuild(pmap, pmap.class_ids, inst)

    if isinstance(perturbation, Relabel):
        if perturbation.target is not None:
            _require_target(pmap, perturbation.target)
            target = tuple(perturbation.target)
        else:
            target = _pick(rng, sorted(keys))
        isthing = registry.is_thing(target[0])
        if perturbation.new_class is not None:
            new_class = perturbation.new_class
            if new_class not in registry or registry.is_thing(new_class) != isthing:
                raise ValueError("relabel must stay within the same kind")
        else:
            pool = sorted((registry.thing_ids if isthing else registry.stuff_ids)
                          - {target[0]})
            if not pool:
                raise ValueError(f"no alternative class of the same kind as {target[0]}")
            new_class = _pick(rng, pool)
        cls = np.array(pmap.class_ids)
        inst = np.array(pmap.instance_ids)
        mask = (pmap.class_ids == target[0]) & (pmap.instance_ids == target[1])
        cls[mask] = new_class
        new_inst = target[1]
        if isthing:
            new_inst = _next_instance_id(keys, new_class)
            inst[mask] = new_inst
        crowd = set(pmap.crowd_keys)
        if target in crowd:
            crowd.discard(target)
            crowd.add((new_class, new_inst))
        return PanopticMap(cls, inst, crowd)

    if isinstance(perturbation, DropSegment):
        if perturbation.target is not None:
            _require_target(pmap, perturbation.target)
            target = tuple(perturbation.target)
        else:
            target = _pick(rng, sorted(keys))
        cls = np.array(pmap.class_ids)
        inst = np.array(pmap.instance_ids)
        mask = (pmap.class_ids == target[0]) & (pmap.instance_ids == target[1])
        cls[mask] = 0
        inst[mask] = 0
        return _rebuild(pmap, cls, inst)

    if isinstance(perturbation, AddSpurious):
        h, w = pmap.shape
        area = perturbation.area
        if not 1 <= area <= h * w:
            raise ValueError(f"spurious area {area} outside [1, {h * w}]")
        if perturbation.class_id is not None:
            cid = perturbation.class_id
            if cid not in registry or not registry.is_thing(cid):
                raise ValueError("spurious segments must carry a thing class")
        else:
            if not registry.thing_ids:
                raise ValueError("registry has no thing classes")
            cid = _pick(rng, sorted(registry.thing_ids))
        cols = min(w, max(1, int(rng.integers(1, min(w, area) + 1))))
        rows = math.ceil(area / cols)
        if rows > h:
            rows = h
            cols = math.ceil(area / rows)
        y0 = int(rng.integers(0, h - rows + 1))
        x0 = int(rng.integers(0, w - cols + 1))
        cls = np.array(pmap.class_ids)
        inst = np.array(pmap.instance_ids)
        zid = _next_instance_id(keys, cid)
        remaining = area
        for row in range(rows):
            take = min(cols, remaining)
            cls[y0 + row, x0:x0 + take] = cid
            inst[y0 + row, x0:x0 + take] = zid
            remaining -= take
        return _rebuild(pmap, cls, inst)

    raise TypeError(f"unknown perturbation {type(perturbation).__name__}")
