"""Evaluation service: the core package behind an HTTP API.

Rasters cross the wire as base64-encoded little-endian int32 buffers in
row-major order with an explicit shape, paired with segment-info lists, so
clients exchange in-memory arrays without touching the filesystem. Metric
fields carry the same 4-decimal rounding as file reports, keeping every
surface numerically identical.
"""

from __future__ import annotations

import base64
from pathlib import Path

import numpy as np
from fastapi import FastAPI
from pydantic import BaseModel, Field

from . import io as pio
from .errors import FormatError, PanopticError
from .evaluate import evaluate_directories, evaluate_single
from .fusion import FusionConfig, fuse, resolve_overlaps
from .metrics import EvaluationResult, MetricConfig, compute_pq
from .model import ClassDef, ClassRegistry, PanopticMap


class ArrayPayload(BaseModel):
    shape: list[int] = Field(min_length=2, max_length=2)
    dtype: str = "int32"
    data_b64: str

    def to_array(self) -> np.ndarray:
        if self.dtype != "int32":
            raise FormatError(f"unsupported array dtype {self.dtype!r}")
        h, w = self.shape
        if h < 1 or w < 1:
            raise FormatError(f"bad array shape {self.shape}")
        try:
            raw = base64.b64decode(self.data_b64, validate=True)
        except Exception as e:
            raise FormatError(f"bad base64 array data: {e}") from e
        if len(raw) != 4 * h * w:
            raise FormatError(
                f"array data holds {len(raw)} bytes, expected {4 * h * w}")
        return np.frombuffer(raw, dtype="<i4").reshape(h, w)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ArrayPayload":
        arr = np.ascontiguousarray(arr, dtype="<i4")
        return cls(shape=list(arr.shape),
                   data_b64=base64.b64encode(arr.tobytes()).decode("ascii"))


class SegmentEntry(BaseModel):
    id: int
    class_id: int
    instance_id: int | None = None
    iscrowd: int = 0


class CategoryEntry(BaseModel):
    id: int
    name: str
    isthing: int


class PanopticPayload(BaseModel):
    labels: ArrayPayload
    segments: list[SegmentEntry]


class PairEvalRequest(BaseModel):
    gt: ArrayPayload
    gt_segments: list[SegmentEntry]
    pred: ArrayPayload
    pred_segments: list[SegmentEntry]
    categories: list[CategoryEntry]
    iou_threshold: float = 0.5


class DirsEvalRequest(BaseModel):
    gt_dir: str
    pred_dir: str
    categories_path: str
    iou_threshold: float = 0.5
    threads: int = 1


class ClassRow(BaseModel):
    class_id: int
    name: str
    kind: str
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int


class SplitRow(BaseModel):
    pq: float
    sq: float
    rq: float
    n_classes: int
    tp: int
    fp: int
    fn: int


class ReportResponse(BaseModel):
    all: SplitRow | None
    stuff: SplitRow | None
    things: SplitRow | None
    per_class: list[ClassRow]


class InstancePayload(BaseModel):
    class_id: int
    score: float
    counts: list[int]


class ResolveRequest(BaseModel):
    width: int
    height: int
    instances: list[InstancePayload]
    score_threshold: float = 0.5
    keep_fraction: float = 0.5


class FuseRequest(BaseModel):
    things: PanopticPayload
    semantic: ArrayPayload
    categories: list[CategoryEntry]


class LoadRequest(BaseModel):
    raster_path: str
    sidecar_path: str
    categories_path: str


def _registry_from(categories: list[CategoryEntry]) -> ClassRegistry:
    try:
        return ClassRegistry(
            ClassDef(c.id, c.name, bool(c.isthing)) for c in categories)
    except ValueError as e:
        raise FormatError(str(e)) from e


def _round4(v: float) -> float:
    return float(f"{v:.4f}")


def _split_row(split) -> SplitRow | None:
    if split is None:
        return None
    return SplitRow(pq=_round4(split.pq), sq=_round4(split.sq),
                    rq=_round4(split.rq), n_classes=split.n_classes,
                    tp=split.tp, fp=split.fp, fn=split.fn)


def _report_response(result: EvaluationResult) -> ReportResponse:
    return ReportResponse(
        all=_split_row(result.all),
        stuff=_split_row(result.stuff),
        things=_split_row(result.things),
        per_class=[ClassRow(class_id=r.class_id, name=r.name,
                            kind="thing" if r.isthing else "stuff",
                            pq=_round4(r.pq), sq=_round4(r.sq), rq=_round4(r.rq),
                            tp=r.tp, fp=r.fp, fn=r.fn)
                   for r in result.per_class],
    )


def _panoptic_payload(pmap: PanopticMap) -> PanopticPayload:
    ids, entries = pio.panoptic_to_ids(pmap)
    return PanopticPayload(
        labels=ArrayPayload.from_array(ids),
        segments=[SegmentEntry(**e) for e in entries],
    )


def _map_from_payload(payload: PanopticPayload,
                      registry: ClassRegistry, source: str) -> PanopticMap:
    return pio.panoptic_from_ids(
        payload.labels.to_array(),
        [e.model_dump() for e in payload.segments],
        registry, source=source)


def create_app() -> FastAPI:
    app = FastAPI(title="panopteval", version="0.1.0")

    @app.exception_handler(FormatError)
    async def _format_error(_request, exc: FormatError):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(PanopticError)
    async def _panoptic_error(_request, exc: PanopticError):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(_request, exc: ValueError):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/evaluate/pair", response_model=ReportResponse)
    def evaluate_pair_endpoint(req: PairEvalRequest):
        registry = _registry_from(req.categories)
        gt = pio.panoptic_from_ids(req.gt.to_array(),
                                   [e.model_dump() for e in req.gt_segments],
                                   registry, source="gt")
        pred = pio.panoptic_from_ids(req.pred.to_array(),
                                     [e.model_dump() for e in req.pred_segments],
                                     registry, source="pred")
        config = MetricConfig(iou_threshold=req.iou_threshold)
        stat = evaluate_single(gt, pred, registry, config)
        return _report_response(compute_pq(stat, registry, config))

    @app.post("/evaluate/dirs", response_model=ReportResponse)
    def evaluate_dirs_endpoint(req: DirsEvalRequest):
        registry = pio.read_class_registry(req.categories_path)
        config = MetricConfig(iou_threshold=req.iou_threshold)
        result, _per_image = evaluate_directories(
            req.gt_dir, req.pred_dir, registry, config, threads=req.threads)
        return _report_response(result)

    @app.post("/resolve", response_model=PanopticPayload)
    def resolve_endpoint(req: ResolveRequest):
        instances = []
        for i, inst in enumerate(req.instances):
            mask = pio.rle_decode(inst.counts, req.width, req.height)
            try:
                instances.append(pio.ScoredInstance(inst.class_id, inst.score, mask))
            except ValueError as e:
                raise FormatError(f"instance {i}: {e}") from e
        config = FusionConfig(score_threshold=req.score_threshold,
                              keep_fraction=req.keep_fraction)
        resolved = resolve_overlaps(instances, config,
                                    shape=(req.height, req.width))
        return _panoptic_payload(resolved)

    @app.post("/fuse", response_model=PanopticPayload)
    def fuse_endpoint(req: FuseRequest):
        registry = _registry_from(req.categories)
        things = _map_from_payload(req.things, registry, source="things")
        semantic_ids = req.semantic.to_array()
        semantic = PanopticMap(semantic_ids, np.zeros_like(semantic_ids))
        fused = fuse(things, semantic, registry)
        return _panoptic_payload(fused)

    @app.post("/io/panoptic", response_model=PanopticPayload)
    def load_panoptic_endpoint(req: LoadRequest):
        registry = pio.read_class_registry(req.categories_path)
        pmap = pio.read_panoptic(
            pio.PanopticFilePair(Path(req.raster_path), Path(req.sidecar_path)),
            registry)
        return _panoptic_payload(pmap)

    return app


app = create_app()
