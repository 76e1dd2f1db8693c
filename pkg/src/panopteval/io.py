"""Bit-exact readers and writers for every on-disk format.

Formats:
  - panoptic pair: 24-bit RGB PNG whose pixel value R + 256*G + 65536*B is a
    segment id (0 = void), plus a JSON sidecar mapping ids to class, instance
    and crowd flags;
  - class registry: JSON list of {id, name, isthing};
  - semantic map: single-channel 16-bit PNG, value = class id, 0 = void;
  - scored instances: JSON list with row-major zero-first run-length masks;
  - reports: JSON or CSV with numbers fixed to 4 decimal places.

Readers reject malformed input naming the first offending record; writers are
deterministic, so equal inputs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import CapacityError, FormatError
from .metrics import EvaluationResult
from .model import (MAX_INSTANCE_ID, VOID_ID, ClassDef, ClassRegistry,
                    PanopticMap, SegmentKey)

MAX_SEGMENT_ID = (1 << 24) - 1
_PNG_COMPRESS_LEVEL = 1  # fixed for byte determinism; rasters compress well anyway


@dataclass(frozen=True)
class PanopticFilePair:
    raster_path: Path
    sidecar_path: Path

    @classmethod
    def for_stem(cls, directory: Path | str, stem: str) -> "PanopticFilePair":
        d = Path(directory)
        return cls(d / f"{stem}.png", d / f"{stem}.json")


# ---------------------------------------------------------------------------
# class registry

def read_class_registry(path: Path | str) -> ClassRegistry:
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read class registry {path}: {e}") from e
    if not isinstance(entries, list):
        raise FormatError(f"{path}: class registry must be a JSON list")
    classes = []
    seen: set[int] = set()
    for i, entry in enumerate(entries):
        try:
            cid = int(entry["id"])
            name = str(entry["name"])
            isthing = int(entry["isthing"])
        except (TypeError, KeyError, ValueError) as e:
            raise FormatError(f"{path}: entry {i} is malformed: {e}") from e
        if cid == VOID_ID:
            raise FormatError(f"{path}: entry {i} uses id 0, reserved for void")
        if cid < 0:
            raise FormatError(f"{path}: entry {i} has negative id {cid}")
        if cid in seen:
            raise FormatError(f"{path}: duplicate class id {cid}")
        if isthing not in (0, 1):
            raise FormatError(f"{path}: entry {i} isthing must be 0 or 1")
        seen.add(cid)
        classes.append(ClassDef(cid, name, bool(isthing)))
    return ClassRegistry(classes)


def write_class_registry(registry: ClassRegistry, path: Path | str) -> None:
    entries = [{"id": c.class_id, "name": c.name, "isthing": int(c.isthing)}
               for c in registry]
    Path(path).write_text(json.dumps(entries, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# panoptic id arrays <-> maps (shared by file readers and the service)

def segment_keys_from_sidecar(segments: Sequence[Mapping], present: set[int],
                              registry: ClassRegistry, source: str,
                              ) -> tuple[dict[int, SegmentKey], set[SegmentKey]]:
    """Validate sidecar entries against the raster and assign segment keys.

    Returns (segment id -> key, crowd key set). Stuff ids map to instance 0;
    thing ids keep a declared instance id or receive the smallest unused one
    per class, in ascending segment-id order.
    """
    declared: dict[int, Mapping] = {}
    for i, entry in enumerate(segments):
        try:
            sid = int(entry["id"])
        except (TypeError, KeyError, ValueError) as e:
            raise FormatError(f"{source}: segment entry {i} is malformed: {e}") from e
        if sid <= 0:
            raise FormatError(f"{source}: segment entry {i} has reserved id {sid}")
        if sid in declared:
            raise FormatError(f"{source}: duplicate segment id {sid}")
        declared[sid] = entry

    missing = sorted(present - set(declared))
    orphan = sorted(set(declared) - present)
    if missing:
        raise FormatError(
            f"{source}: raster ids missing from segment list: {missing}")
    if orphan:
        raise FormatError(
            f"{source}: segment list ids absent from raster: {orphan}")

    # first pass: keys with explicit instance ids (stuff is always instance 0)
    key_of: dict[int, SegmentKey] = {}
    used: dict[int, set[int]] = {}
    auto: list[int] = []
    crowd: set[SegmentKey] = set()
    for sid in sorted(declared):
        entry = declared[sid]
        try:
            cid = int(entry["class_id"])
            iscrowd = int(entry.get("iscrowd", 0))
            inst = entry.get("instance_id")
        except (TypeError, KeyError, ValueError) as e:
            raise FormatError(f"{source}: segment id {sid} is malformed: {e}") from e
        if cid not in registry:
            raise FormatError(
                f"{source}: segment id {sid} has unknown class id {cid}")
        if iscrowd not in (0, 1):
            raise FormatError(f"{source}: segment id {sid} iscrowd must be 0 or 1")
        isthing = registry.is_thing(cid)
        if iscrowd and not isthing:
            raise FormatError(
                f"{source}: segment id {sid} flags a stuff class {cid} as crowd")
        if not isthing:
            key_of[sid] = (cid, 0)
            continue
        if inst is None:
            auto.append(sid)
            continue
        inst = int(inst)
        if inst < 0 or inst > MAX_INSTANCE_ID:
            raise FormatError(
                f"{source}: segment id {sid} instance id {inst} outside "
                f"[0, {MAX_INSTANCE_ID}]")
        if inst in used.setdefault(cid, set()):
            raise FormatError(
                f"{source}: duplicate segment key ({cid}, {inst})")
        used[cid].add(inst)
        key_of[sid] = (cid, inst)

    for sid in auto:
        cid = int(declared[sid]["class_id"])
        taken = used.setdefault(cid, set())
        inst = 1
        while inst in taken:
            inst += 1
        if inst > MAX_INSTANCE_ID:
            raise FormatError(f"{source}: class {cid} exceeds the instance id range")
        taken.add(inst)
        key_of[sid] = (cid, inst)

    for sid, entry in declared.items():
        if int(entry.get("iscrowd", 0)):
            crowd.add(key_of[sid])
    return key_of, crowd


def panoptic_from_ids(ids: np.ndarray, segments: Sequence[Mapping],
                      registry: ClassRegistry,
                      source: str = "input",
                      _owned: bool = False) -> PanopticMap:
    """Build a map from a segment-id raster and its id descriptions.

    Stuff segments are canonicalized to instance id 0 (same-class stuff ids
    merge); thing segments keep a declared instance id or get the smallest
    unused one per class, in ascending segment-id order.

    ``_owned`` marks a raster the caller hands over for adoption, sparing
    the defensive copy on the dense-id fast path.
    """
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise FormatError(f"{source}: segment-id raster must be 2-d")
    if ids.size == 0:
        raise FormatError(f"{source}: empty raster")
    max_id = int(ids.max())
    if 0 <= max_id <= max(4 * len(segments) + 16, 4096):
        try:
            counts = np.bincount(ids.ravel(), minlength=max_id + 1)
        except ValueError as e:
            raise FormatError(f"{source}: negative segment id in raster") from e
        count_of = {sid: int(counts[sid])
                    for sid in np.nonzero(counts)[0].tolist() if sid != 0}
    else:
        if int(ids.min()) < 0:
            raise FormatError(f"{source}: negative segment id in raster")
        uniq, cnt = np.unique(ids, return_counts=True)
        count_of = {int(s): int(n) for s, n in zip(uniq, cnt) if s != 0}
    present = set(count_of)

    key_of, crowd = segment_keys_from_sidecar(segments, present, registry, source)

    if max_id == len(key_of) and len(set(key_of.values())) == len(key_of):
        # dense ids with an injective id -> key mapping: adopt the raster
        # as the segment index directly, ordering keys by file id
        keys = tuple(key_of[sid] for sid in range(1, max_id + 1))
        areas = np.array([count_of[sid] for sid in range(1, max_id + 1)],
                         dtype=np.int64)
        raster = ids if (_owned or not ids.flags.writeable) \
            else np.array(ids, copy=True)
        return PanopticMap._adopt_index(raster, keys, areas, crowd)

    keys = tuple(sorted(set(key_of.values())))
    index_of = {k: i + 1 for i, k in enumerate(keys)}
    areas = np.zeros(len(keys), dtype=np.int64)
    lut = np.zeros(max_id + 1, dtype=np.int32)
    for sid, key in key_of.items():
        idx = index_of[key]
        lut[sid] = idx
        areas[idx - 1] += count_of[sid]
    return PanopticMap._adopt_index(lut[ids], keys, areas, crowd)


def panoptic_to_ids(pmap: PanopticMap) -> tuple[np.ndarray, list[dict]]:
    """Deterministic segment-id raster plus sidecar entries.

    Ids are assigned in first-pixel raster-scan order starting at 1; entries
    come back sorted by id.
    """
    raster, keys, _ = pmap.segment_index()
    if len(keys) > MAX_SEGMENT_ID:
        raise CapacityError(
            f"{len(keys)} segments exceed the 24-bit id capacity")
    uniq, first = np.unique(raster.ravel(), return_index=True)
    order = uniq[np.argsort(first)]
    new_id = np.zeros(len(keys) + 1, dtype=np.int32)
    entries = []
    next_id = 1
    for old in order.tolist():
        if old == 0:
            continue
        key = keys[old - 1]
        new_id[old] = next_id
        entries.append({
            "id": next_id,
            "class_id": key[0],
            "instance_id": key[1],
            "iscrowd": int(key in pmap.crowd_keys),
        })
        next_id += 1
    return new_id[raster], entries


# ---------------------------------------------------------------------------
# panoptic file pairs

def _ids_to_rgb(ids: np.ndarray) -> np.ndarray:
    rgb = np.empty(ids.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = ids & 0xFF
    rgb[..., 1] = (ids >> 8) & 0xFF
    rgb[..., 2] = (ids >> 16) & 0xFF
    return rgb


def _identity_palette() -> list[int]:
    # palette entry i renders as the RGB triple encoding id i
    flat = []
    for i in range(256):
        flat += [i & 0xFF, (i >> 8) & 0xFF, (i >> 16) & 0xFF]
    return flat


def _palette_to_ids(im: Image.Image) -> np.ndarray:
    indices = np.asarray(im)
    palette = im.getpalette() or []
    palette = palette + [0] * (768 - len(palette))
    lut = np.array([palette[3 * i] + 256 * palette[3 * i + 1]
                    + 65536 * palette[3 * i + 2] for i in range(256)],
                   dtype=np.int64)
    return lut[indices]


def _decode_ids(im: Image.Image) -> np.ndarray:
    # let PIL pad to 4 bytes in C, reinterpret as little-endian words and
    # mask off the filler byte while widening to int64 in a single ufunc
    # pass; int64 ids spare bincount and fancy indexing their internal casts
    h, w = im.height, im.width
    buf = im.convert("RGBA").tobytes()
    words = np.frombuffer(buf, "<u4").reshape(h, w)
    return np.bitwise_and(words, np.int64(0xFFFFFF), dtype=np.int64)


def write_panoptic(pmap: PanopticMap, pair: PanopticFilePair) -> PanopticFilePair:
    ids, entries = panoptic_to_ids(pmap)
    pair.raster_path.parent.mkdir(parents=True, exist_ok=True)
    if len(entries) <= 255:
        # palette raster: identical rendered pixels at a third of the decode
        # cost; palette index i carries the RGB triple encoding id i
        im = Image.fromarray(ids.astype(np.uint8), mode="P")
        im.putpalette(_identity_palette())
    else:
        im = Image.fromarray(_ids_to_rgb(ids))
    im.save(pair.raster_path, format="PNG", compress_level=_PNG_COMPRESS_LEVEL)
    doc = {"width": pmap.width, "height": pmap.height, "segments": entries}
    pair.sidecar_path.write_text(json.dumps(doc, separators=(",", ":")) + "\n")
    return pair


def load_palette_panoptic(pair: PanopticFilePair):
    """Palette raster as (uint8 indices, index -> id table, sidecar doc).

    Returns None when the raster is not palette-coded; used by the joint
    fast path that counts a whole pair with one histogram.
    """
    try:
        with Image.open(pair.raster_path) as im:
            if im.mode != "P":
                return None
            indices = np.asarray(im)
            palette = im.getpalette() or []
    except FileNotFoundError as e:
        raise FormatError(f"cannot read raster: {e}") from e
    except Image.UnidentifiedImageError as e:
        raise FormatError(f"{pair.raster_path}: not a PNG image") from e
    palette = palette + [0] * (768 - len(palette))
    id_of_index = np.array(
        [palette[3 * i] + 256 * palette[3 * i + 1] + 65536 * palette[3 * i + 2]
         for i in range(256)], dtype=np.int64)
    try:
        doc = json.loads(pair.sidecar_path.read_text())
        doc["segments"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise FormatError(f"cannot read sidecar {pair.sidecar_path}: {e}") from e
    h, w = indices.shape
    if "width" in doc and (int(doc["width"]), int(doc.get("height", h))) != (w, h):
        raise FormatError(
            f"{pair.sidecar_path}: dimension mismatch with raster "
            f"({doc.get('width')}x{doc.get('height')} vs {w}x{h})")
    return indices, id_of_index, doc


def read_panoptic(pair: PanopticFilePair, registry: ClassRegistry) -> PanopticMap:
    try:
        with Image.open(pair.raster_path) as im:
            if im.mode == "P":
                ids = _palette_to_ids(im)
            elif im.mode == "RGB":
                ids = _decode_ids(im)
            else:
                raise FormatError(
                    f"{pair.raster_path}: expected a 24-bit RGB raster, got {im.mode}")
    except FileNotFoundError as e:
        raise FormatError(f"cannot read raster: {e}") from e
    except Image.UnidentifiedImageError as e:
        raise FormatError(f"{pair.raster_path}: not a PNG image") from e
    try:
        doc = json.loads(pair.sidecar_path.read_text())
        segments = doc["segments"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise FormatError(f"cannot read sidecar {pair.sidecar_path}: {e}") from e
    h, w = ids.shape
    if "width" in doc and (int(doc["width"]), int(doc.get("height", h))) != (w, h):
        raise FormatError(
            f"{pair.sidecar_path}: dimension mismatch with raster "
            f"({doc.get('width')}x{doc.get('height')} vs {w}x{h})")
    return panoptic_from_ids(ids, segments, registry,
                             source=str(pair.raster_path), _owned=True)


# ---------------------------------------------------------------------------
# semantic maps

def read_semantic(path: Path | str, registry: ClassRegistry) -> PanopticMap:
    """Single-channel 16-bit PNG; pixel value = class id, 0 = void.

    All instance ids are 0: the result is a pure semantic labeling.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode not in ("I;16", "I", "L", "P"):
                raise FormatError(
                    f"{path}: expected a single-channel raster, got {im.mode}")
            arr = np.asarray(im).astype(np.int32)
    except FileNotFoundError as e:
        raise FormatError(f"cannot read semantic map: {e}") from e
    except Image.UnidentifiedImageError as e:
        raise FormatError(f"{path}: not a PNG image") from e
    counts = np.bincount(arr.ravel())
    for value in np.nonzero(counts)[0].tolist():
        if value != VOID_ID and value not in registry:
            raise FormatError(f"{path}: unknown class value {value}")
    return PanopticMap(arr, np.zeros_like(arr))


def write_semantic(pmap: PanopticMap, path: Path | str) -> None:
    arr = pmap.class_ids
    if int(arr.max(initial=0)) > 0xFFFF:
        raise CapacityError("class ids exceed the 16-bit semantic raster range")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr.astype(np.uint16)).save(
        path, format="PNG", compress_level=_PNG_COMPRESS_LEVEL)


# ---------------------------------------------------------------------------
# scored instances (row-major zero-first RLE masks)

@dataclass(frozen=True)
class ScoredInstance:
    """A confidence-scored binary mask carrying a thing class."""

    class_id: int
    score: float
    mask: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise ValueError("mask must be 2-d")
        if not mask.any():
            raise ValueError("instance mask must cover at least one pixel")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def area(self) -> int:
        return int(self.mask.sum())


def rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major run lengths of a binary mask, first run counting zeros."""
    flat = np.asarray(mask, dtype=bool).ravel()
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(counts: Sequence[int], width: int, height: int) -> np.ndarray:
    """Inverse of rle_encode; rejects runs that do not tile width*height."""
    total = width * height
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise FormatError("negative run length")
    if sum(counts) != total:
        raise FormatError(
            f"run lengths sum to {sum(counts)}, expected {total} for "
            f"{width}x{height}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        if value:
            flat[pos:pos + c] = True
        pos += c
        value = not value
    return flat.reshape(height, width)


def read_instances(path: Path | str, width: int, height: int) -> list[ScoredInstance]:
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read instances {path}: {e}") from e
    if not isinstance(entries, list):
        raise FormatError(f"{path}: instance file must be a JSON list")
    out = []
    for i, entry in enumerate(entries):
        try:
            cid = int(entry["class_id"])
            score = float(entry["score"])
            counts = entry["counts"]
        except (TypeError, KeyError, ValueError) as e:
            raise FormatError(f"{path}: instance {i} is malformed: {e}") from e
        mask = rle_decode(counts, width, height)
        try:
            out.append(ScoredInstance(cid, score, mask))
        except ValueError as e:
            raise FormatError(f"{path}: instance {i}: {e}") from e
    return out


def write_instances(instances: Iterable[ScoredInstance], path: Path | str) -> None:
    entries = [{"class_id": inst.class_id,
                "score": inst.score,
                "counts": rle_encode(inst.mask)}
               for inst in instances]
    Path(path).write_text(json.dumps(entries, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# reports

def _format_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        raise TypeError("no boolean report fields")
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.4f}"
    return json.dumps(v)


def _dump_fixed(obj) -> str:
    """Tiny JSON writer emitting floats with exactly 4 decimal places."""
    if isinstance(obj, dict):
        inner = ",".join(f"{json.dumps(k)}:{_dump_fixed(v)}" for k, v in obj.items())
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_dump_fixed(v) for v in obj) + "]"
    return _format_value(obj)


def _split_row(split) -> dict | None:
    if split is None:
        return None
    return {"pq": split.pq, "sq": split.sq, "rq": split.rq,
            "n_classes": split.n_classes,
            "tp": split.tp, "fp": split.fp, "fn": split.fn}


def report_document(result: EvaluationResult) -> dict:
    return {
        "aggregates": {
            "all": _split_row(result.all),
            "stuff": _split_row(result.stuff),
            "things": _split_row(result.things),
        },
        "per_class": [
            {"class_id": r.class_id, "name": r.name,
             "kind": "thing" if r.isthing else "stuff",
             "pq": r.pq, "sq": r.sq, "rq": r.rq,
             "tp": r.tp, "fp": r.fp, "fn": r.fn}
            for r in result.per_class
        ],
    }


_REPORT_COLUMNS = ("scope", "class_id", "name", "kind", "pq", "sq", "rq",
                   "tp", "fp", "fn", "n_classes")


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}"
    s = str(v)
    if any(ch in s for ch in ",\"\n"):
        s = '"' + s.replace('"', '""') + '"'
    return s


def render_table_csv(rows: list[dict], columns: Sequence[str]) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_csv_cell(row.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def report_rows(result: EvaluationResult) -> list[dict]:
    rows = []
    for r in result.per_class:
        rows.append({"scope": "class", "class_id": r.class_id, "name": r.name,
                     "kind": "thing" if r.isthing else "stuff",
                     "pq": r.pq, "sq": r.sq, "rq": r.rq,
                     "tp": r.tp, "fp": r.fp, "fn": r.fn, "n_classes": None})
    for scope, split in (("all", result.all), ("stuff", result.stuff),
                         ("things", result.things)):
        if split is None:
            continue
        rows.append({"scope": scope, "class_id": None, "name": None, "kind": None,
                     "pq": split.pq, "sq": split.sq, "rq": split.rq,
                     "tp": split.tp, "fp": split.fp, "fn": split.fn,
                     "n_classes": split.n_classes})
    return rows


def write_report(result: EvaluationResult, fmt: str, path: Path | str) -> None:
    """Serialize a report deterministically as JSON or CSV (4 decimal places)."""
    path = Path(path)
    if fmt == "json":
        text = _dump_fixed(report_document(result)) + "\n"
    elif fmt == "csv":
        text = render_table_csv(report_rows(result), _REPORT_COLUMNS)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def write_table(rows: list[dict], columns: Sequence[str], fmt: str,
                path: Path | str) -> None:
    """Generic deterministic table emission for sweep/bootstrap/CDF outputs."""
    path = Path(path)
    if fmt == "json":
        text = _dump_fixed([{c: row.get(c) for c in columns} for row in rows]) + "\n"
    elif fmt == "csv":
        text = render_table_csv(rows, columns)
    else:
        raise ValueError(f"unknown table format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def render_summary(result: EvaluationResult) -> str:
    """Console summary with metrics as percentages (one decimal)."""
    lines = [f"{'':8s}{'PQ':>8s}{'SQ':>8s}{'RQ':>8s}{'N':>6s}"]
    for label, split in (("all", result.all), ("stuff", result.stuff),
                         ("things", result.things)):
        if split is None:
            lines.append(f"{label:8s}{'-':>8s}{'-':>8s}{'-':>8s}{0:6d}")
        else:
            lines.append(f"{label:8s}{100 * split.pq:8.1f}{100 * split.sq:8.1f}"
                         f"{100 * split.rq:8.1f}{split.n_classes:6d}")
    return "\n".join(lines)
