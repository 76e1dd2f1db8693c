"""Core data model: class registries, panoptic label maps, and segments.

A panoptic map assigns every pixel a (class_id, instance_id) pair; (0, 0)
marks void. Stuff classes carry a single canonical instance id of 0, thing
classes get one id per instance. Crowd regions (several adjacent instances
annotated as one blob) are ordinary segments flagged in ``crowd_keys``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

VOID_ID = 0
VOID_KEY = (0, 0)
MAX_INSTANCE_ID = 0xFFFF

SegmentKey = tuple[int, int]


@dataclass(frozen=True)
class ClassDef:
    class_id: int
    name: str
    isthing: bool


class ClassRegistry:
    """The closed label vocabulary, partitioned into stuff and thing classes.

    Class id 0 is reserved for void and cannot be registered; every class is
    exactly one of stuff or thing.
    """

    void_id = VOID_ID

    def __init__(self, classes: Iterable[ClassDef]):
        by_id: dict[int, ClassDef] = {}
        for c in classes:
            if c.class_id == VOID_ID:
                raise ValueError("class id 0 is reserved for void")
            if c.class_id < 1:
                raise ValueError(f"class ids must be >= 1, got {c.class_id}")
            if c.class_id in by_id:
                raise ValueError(f"duplicate class id {c.class_id}")
            by_id[c.class_id] = c
        self._by_id: dict[int, ClassDef] = dict(sorted(by_id.items()))
        self.stuff_ids = frozenset(i for i, c in by_id.items() if not c.isthing)
        self.thing_ids = frozenset(i for i, c in by_id.items() if c.isthing)

    def __contains__(self, class_id: int) -> bool:
        return class_id in self._by_id

    def __getitem__(self, class_id: int) -> ClassDef:
        return self._by_id[class_id]

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[ClassDef]:
        return iter(self._by_id.values())

    def ids(self) -> list[int]:
        return list(self._by_id)

    def is_thing(self, class_id: int) -> bool:
        return class_id in self.thing_ids

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ClassRegistry) and self._by_id == other._by_id


# Pixel keys are packed as uint64 (class << 32 | instance) so one np.unique
# pass recovers the segment partition; both halves are treated as uint32 to
# stay injective for arbitrary (even malformed, negative) int32 inputs.
_KEY_SHIFT = np.uint64(32)
_LOW_MASK = np.uint64(0xFFFFFFFF)


def _unpack_key(packed: int) -> SegmentKey:
    c = int(np.uint64(packed) >> _KEY_SHIFT)
    z = int(np.uint64(packed) & _LOW_MASK)
    # undo the uint32 view for negative int32 values
    if c >= 1 << 31:
        c -= 1 << 32
    if z >= 1 << 31:
        z -= 1 << 32
    return (c, z)


class PanopticMap:
    """Immutable per-pixel (class id, instance id) raster with crowd flags.

    Segment keys partition the non-void pixels by construction: a pixel
    belongs to exactly one (class_id, instance_id) key or to void.
    """

    __slots__ = ("_class_ids", "_instance_ids", "crowd_keys",
                 "_seg_raster", "_seg_keys", "_seg_areas")

    def __init__(self, class_ids, instance_ids,
                 crowd_keys: Iterable[SegmentKey] = ()):
        c = np.array(class_ids, dtype=np.int32, copy=True)
        z = np.array(instance_ids, dtype=np.int32, copy=True)
        if c.ndim != 2 or c.shape != z.shape:
            raise ValueError("class and instance rasters must share a 2-d shape")
        z[c == VOID_ID] = 0  # void pixels are canonically (0, 0)
        c.setflags(write=False)
        z.setflags(write=False)
        self._class_ids = c
        self._instance_ids = z
        self.crowd_keys = frozenset((int(a), int(b)) for a, b in crowd_keys)
        self._seg_raster = None
        self._seg_keys = None
        self._seg_areas = None

    @classmethod
    def from_segment_index(cls, seg_raster, keys: Iterable[SegmentKey],
                           crowd_keys: Iterable[SegmentKey] = ()) -> "PanopticMap":
        """Build a map from a dense segment-index raster.

        ``seg_raster`` holds values in [0, len(keys)] with 0 = void and value
        i+1 owned by ``keys[i]``. Every key must own at least one pixel.
        """
        sr = np.array(seg_raster, dtype=np.int32, copy=True)
        if sr.ndim != 2:
            raise ValueError("segment-index raster must be 2-d")
        keys = tuple((int(a), int(b)) for a, b in keys)
        if len(set(keys)) != len(keys):
            raise ValueError("segment keys must be unique")
        areas = np.bincount(sr.ravel(), minlength=len(keys) + 1)[1:]
        if len(areas) != len(keys) or (len(keys) and areas.min() < 1):
            raise ValueError("every segment key must own at least one pixel")
        sr.setflags(write=False)
        return cls._adopt_index(sr, keys, areas.astype(np.int64), crowd_keys)

    @classmethod
    def _adopt_index(cls, seg_raster: np.ndarray, keys: tuple[SegmentKey, ...],
                     areas: np.ndarray,
                     crowd_keys: Iterable[SegmentKey]) -> "PanopticMap":
        # trusted fast path: the caller owns the raster and guarantees keys,
        # areas and raster agree
        seg_raster.setflags(write=False)
        self = object.__new__(cls)
        self._seg_raster = seg_raster
        self._seg_keys = keys
        self._seg_areas = areas
        self._class_ids = None
        self._instance_ids = None
        self.crowd_keys = frozenset((int(a), int(b)) for a, b in crowd_keys)
        return self

    @property
    def shape(self) -> tuple[int, int]:
        arr = self._class_ids if self._class_ids is not None else self._seg_raster
        return arr.shape

    @property
    def height(self) -> int:
        return self.shape[0]

    @property
    def width(self) -> int:
        return self.shape[1]

    def _lut(self, field: int) -> np.ndarray:
        lut = np.zeros(len(self._seg_keys) + 1, dtype=np.int32)
        for i, key in enumerate(self._seg_keys):
            lut[i + 1] = key[field]
        return lut

    @property
    def class_ids(self) -> np.ndarray:
        if self._class_ids is None:
            arr = self._lut(0)[self._seg_raster]
            arr.setflags(write=False)
            self._class_ids = arr
        return self._class_ids

    @property
    def instance_ids(self) -> np.ndarray:
        if self._instance_ids is None:
            arr = self._lut(1)[self._seg_raster]
            arr.setflags(write=False)
            self._instance_ids = arr
        return self._instance_ids

    def segment_index(self) -> tuple[np.ndarray, tuple[SegmentKey, ...], np.ndarray]:
        """Dense segment partition: (index raster, keys, areas).

        The raster holds 0 for void and i+1 for keys[i]; areas align with keys.
        """
        if self._seg_raster is None:
            c = self._class_ids.ravel().astype(np.uint32).astype(np.uint64)
            z = self._instance_ids.ravel().astype(np.uint32).astype(np.uint64)
            packed = (c << _KEY_SHIFT) | z
            uniq, inverse, counts = np.unique(
                packed, return_inverse=True, return_counts=True)
            if len(uniq) and uniq[0] == 0:  # void present, already index 0
                raster = inverse.astype(np.int32)
                keys = tuple(_unpack_key(u) for u in uniq[1:])
                areas = counts[1:].astype(np.int64)
            else:
                raster = (inverse + 1).astype(np.int32)
                keys = tuple(_unpack_key(u) for u in uniq)
                areas = counts.astype(np.int64)
            raster = raster.reshape(self._class_ids.shape)
            raster.setflags(write=False)
            self._seg_raster = raster
            self._seg_keys = keys
            self._seg_areas = areas
        return self._seg_raster, self._seg_keys, self._seg_areas

    def segment_areas(self) -> dict[SegmentKey, int]:
        _, keys, areas = self.segment_index()
        return {k: int(a) for k, a in zip(keys, areas)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PanopticMap):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.class_ids, other.class_ids)
                and np.array_equal(self.instance_ids, other.instance_ids)
                and self.crowd_keys == other.crowd_keys)


@dataclass(frozen=True)
class Segment:
    key: SegmentKey
    area: int
    isthing: bool
    is_crowd: bool

    @property
    def class_id(self) -> int:
        return self.key[0]

    @property
    def instance_id(self) -> int:
        return self.key[1]


def _first_pixel_of(pmap: PanopticMap, seg_value: int) -> tuple[int, int]:
    raster, _, _ = pmap.segment_index()
    flat = int(np.flatnonzero(raster.ravel() == seg_value)[0])
    return divmod(flat, pmap.width)


def extract_segments(pmap: PanopticMap, registry: ClassRegistry) -> list[Segment]:
    """List every non-void segment of the map, sorted by key.

    Raises UnknownClassError naming the first offending pixel when a class id
    is not registered.
    """
    from .errors import UnknownClassError

    _, keys, areas = pmap.segment_index()
    order = sorted(range(len(keys)), key=lambda i: keys[i])
    out = []
    for i in order:
        cid, _ = keys[i]
        if cid not in registry:
            y, x = _first_pixel_of(pmap, i + 1)
            raise UnknownClassError(
                f"pixel (y={y}, x={x}) has unknown class id {cid}")
        out.append(Segment(keys[i], int(areas[i]),
                           registry.is_thing(cid),
                           keys[i] in pmap.crowd_keys))
    return out


def canonicalize_stuff(pmap: PanopticMap, registry: ClassRegistry) -> PanopticMap:
    """Force instance id 0 on every stuff-class pixel; things are untouched.

    Idempotent; segments of the same stuff class merge into one key.
    """
    if not registry.stuff_ids:
        return pmap
    stuff = np.isin(pmap.class_ids, np.fromiter(registry.stuff_ids, dtype=np.int32))
    if not bool((stuff & (pmap.instance_ids != 0)).any()):
        return pmap
    inst = np.where(stuff, 0, pmap.instance_ids)
    crowd = frozenset((c, 0) if c in registry.stuff_ids else (c, z)
                      for c, z in pmap.crowd_keys)
    return PanopticMap(pmap.class_ids, inst, crowd)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def validate_map(pmap: PanopticMap, registry: ClassRegistry) -> list[Violation]:
    """Report structural violations; an empty report means the map is well formed.

    Never raises: validation reports, it does not abort.
    """
    out: list[Violation] = []
    _, keys, _ = pmap.segment_index()
    seen_unknown: set[int] = set()
    for i, (cid, inst) in enumerate(keys):
        if cid not in registry:
            if cid not in seen_unknown:
                seen_unknown.add(cid)
                y, x = _first_pixel_of(pmap, i + 1)
                out.append(Violation(
                    "unknown-class",
                    f"pixel (y={y}, x={x}) has unknown class id {cid}"))
            continue
        if inst < 0 or inst > MAX_INSTANCE_ID:
            out.append(Violation(
                "instance-overflow",
                f"segment {(cid, inst)} instance id outside [0, {MAX_INSTANCE_ID}]"))
    present = set(keys)
    for key in sorted(pmap.crowd_keys):
        if key not in present:
            out.append(Violation(
                "stale-crowd-flag",
                f"crowd flag on absent segment {key}"))
        elif key[0] in registry and not registry.is_thing(key[0]):
            out.append(Violation(
                "crowd-on-stuff",
                f"crowd flag on stuff segment {key}"))
    return out
