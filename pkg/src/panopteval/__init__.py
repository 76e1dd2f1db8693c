"""Panoptic segmentation evaluation toolkit.

Evaluates panoptic label maps with the PQ/SQ/RQ metric family, merges
independent instance and semantic outputs into coherent panoptic maps, and
provides the statistical analyses (threshold sweeps, bootstrap intervals,
scale and stuff/thing breakdowns) used to study the task.
"""

from .errors import CapacityError, FormatError, PanopticError, UnknownClassError
from .evaluate import (PairItem, evaluate_directories, evaluate_items,
                       evaluate_single, load_manifest, pair_directories)
from .fusion import FusionConfig, fuse, grid_search_fusion, resolve_overlaps
from .io import (PanopticFilePair, ScoredInstance, panoptic_from_ids,
                 panoptic_to_ids, read_class_registry, read_instances,
                 read_panoptic, read_semantic, rle_decode, rle_encode,
                 write_class_registry, write_instances, write_panoptic,
                 write_report, write_semantic)
from .matching import (IntersectionTable, MatchedPair, MatchResult,
                       filter_unmatched, intersection_table, iou,
                       match_optimal, match_unique, max_weight_matching)
from .metrics import (ClassResult, EvaluationResult, MeanIoUResult,
                      MetricConfig, PQStat, SplitResult, compute_pq,
                      mean_iou, merge_stats, pq_stats, rq_alpha_beta,
                      scale_breakdown, scale_thresholds)
from .model import (MAX_INSTANCE_ID, VOID_ID, ClassDef, ClassRegistry,
                    PanopticMap, Segment, SegmentKey, Violation,
                    canonicalize_stuff, extract_segments, validate_map)
from .stats import BootstrapResult, bootstrap_pq, overlap_cdf, threshold_sweep
from .synth import (AddSpurious, BoundaryJitter, DropSegment, MergeSegments,
                    Perturbation, Relabel, SplitSegment, SynthSpec,
                    gen_ground_truth, perturb, registry_for)

__version__ = "0.1.0"

__all__ = [
    "AddSpurious", "BootstrapResult", "BoundaryJitter", "CapacityError",
    "ClassDef", "ClassRegistry", "ClassResult", "DropSegment",
    "EvaluationResult", "FormatError", "FusionConfig", "IntersectionTable",
    "MAX_INSTANCE_ID", "MatchResult", "MatchedPair", "MeanIoUResult",
    "MergeSegments", "MetricConfig", "PQStat", "PairItem", "PanopticError",
    "PanopticFilePair", "PanopticMap", "Perturbation", "Relabel",
    "ScoredInstance", "Segment", "SegmentKey", "SplitResult", "SplitSegment",
    "SynthSpec", "UnknownClassError", "VOID_ID", "Violation",
    "bootstrap_pq", "canonicalize_stuff", "compute_pq", "evaluate_directories",
    "evaluate_items", "evaluate_single", "extract_segments", "filter_unmatched",
    "fuse", "gen_ground_truth", "grid_search_fusion", "intersection_table",
    "iou", "load_manifest", "match_optimal", "match_unique",
    "max_weight_matching", "mean_iou", "merge_stats", "overlap_cdf",
    "pair_directories", "panoptic_from_ids", "panoptic_to_ids", "perturb",
    "pq_stats", "read_class_registry", "read_instances", "read_panoptic",
    "read_semantic", "registry_for", "resolve_overlaps", "rle_decode",
    "rle_encode", "scale_breakdown", "scale_thresholds", "threshold_sweep",
    "validate_map", "write_class_registry", "write_instances",
    "write_panoptic", "write_report", "write_semantic",
]
