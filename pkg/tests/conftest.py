import numpy as np
import pytest

from panopteval import ClassDef, ClassRegistry, PanopticMap


@pytest.fixture
def registry():
    return ClassRegistry([
        ClassDef(1, "sky", False),
        ClassDef(2, "road", False),
        ClassDef(3, "car", True),
        ClassDef(4, "person", True),
    ])


def make_map(class_rows, inst_rows, crowd=()):
    return PanopticMap(np.array(class_rows, dtype=np.int32),
                       np.array(inst_rows, dtype=np.int32),
                       crowd)


@pytest.fixture
def make():
    return make_map


def random_pair(seed, max_size=64, max_segments=10, with_void=True,
                with_crowd=True, registry_spec=(2, 2)):
    """A seeded synthetic (gt, pred, registry) triple for randomized suites."""
    from panopteval import (AddSpurious, BoundaryJitter, DropSegment,
                            MergeSegments, Relabel, SplitSegment, SynthSpec,
                            gen_ground_truth, perturb, registry_for)

    rng = np.random.default_rng(seed)
    h = int(rng.integers(8, max_size + 1))
    w = int(rng.integers(8, max_size + 1))
    spec = SynthSpec(
        width=w, height=h,
        n_stuff_classes=registry_spec[0], n_thing_classes=registry_spec[1],
        n_segments=int(rng.integers(1, max_segments + 1)),
        crowd_probability=0.3 if with_crowd else 0.0,
        void_fraction=float(rng.uniform(0, 0.3)) if with_void else 0.0,
        seed=seed,
    )
    reg = registry_for(spec)
    gt = gen_ground_truth(spec)

    if rng.random() < 0.15:
        # occasionally evaluate against an unrelated segmentation
        pred = gen_ground_truth(SynthSpec(
            width=w, height=h,
            n_stuff_classes=registry_spec[0], n_thing_classes=registry_spec[1],
            n_segments=int(rng.integers(1, max_segments + 1)),
            void_fraction=float(rng.uniform(0, 0.3)) if with_void else 0.0,
            seed=seed + 7_000_000,
        ))
        return gt, pred, reg

    pred = gt
    kinds = [
        lambda s: BoundaryJitter(radius=int(rng.integers(1, 4)), seed=s),
        lambda s: SplitSegment(seed=s),
        lambda s: MergeSegments(seed=s),
        lambda s: Relabel(seed=s),
        lambda s: AddSpurious(area=int(rng.integers(4, 64)), seed=s),
    ]
    if with_void:
        kinds.append(lambda s: DropSegment(seed=s))  # dropping creates void
    for k in range(int(rng.integers(0, 4))):
        make_kind = kinds[int(rng.integers(0, len(kinds)))]
        try:
            pred = perturb(pred, make_kind(seed + 31 * k + 1), reg)
        except ValueError:
            pass  # mode infeasible for this map; try the next draw
    return gt, pred, reg
