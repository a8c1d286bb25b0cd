"""Label schemes, patient-independent splitting and class-balanced batch schedules."""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import EmptyManifest, ExcludedClass, IndivisibleBatch

log = logging.getLogger(__name__)

# Allowed deviation of a class's val image fraction from 1 - ratio before the
# greedy assignment is replaced by the closest exact subset.
SPLIT_TOLERANCE = 0.05

_CHRONIC_GROUP = {
    "COPD": "Chronic",
    "Bronchiectasis": "Chronic",
    "URTI": "NonChronic",
    "Pneumonia": "NonChronic",
    "Bronchiolitis": "NonChronic",
    "Healthy": "Healthy",
}


class LabelScheme(Enum):
    PATHOLOGICAL6 = "pathological6"
    CHRONIC3 = "chronic3"

    @property
    def classes(self) -> tuple[str, ...]:
        if self is LabelScheme.PATHOLOGICAL6:
            return ("Bronchiectasis", "Bronchiolitis", "COPD", "Healthy", "Pneumonia", "URTI")
        return ("Healthy", "Chronic", "NonChronic")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def healthy_index(self) -> int:
        return self.classes.index("Healthy")


def map_label(disease: str, scheme: LabelScheme) -> int:
    if disease not in _CHRONIC_GROUP:
        raise ExcludedClass(f"{disease!r} is not one of the retained classes")
    name = disease if scheme is LabelScheme.PATHOLOGICAL6 else _CHRONIC_GROUP[disease]
    return scheme.classes.index(name)


@dataclass(frozen=True)
class ImageRef:
    path: str
    patient: int
    label: str

    def to_json(self) -> dict:
        return {"path": self.path, "patient": self.patient, "label": self.label}


@dataclass
class SplitManifest:
    train: list[ImageRef]
    val: list[ImageRef]
    seed: int
    ratio: float
    scheme: LabelScheme = LabelScheme.PATHOLOGICAL6
    shortfalls: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "ratio": self.ratio,
            "scheme": self.scheme.value,
            "train": [r.to_json() for r in self.train],
            "val": [r.to_json() for r in self.val],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SplitManifest":
        return cls(
            train=[ImageRef(d["path"], int(d["patient"]), d["label"]) for d in data["train"]],
            val=[ImageRef(d["path"], int(d["patient"]), d["label"]) for d in data["val"]],
            seed=int(data["seed"]),
            ratio=float(data["ratio"]),
            scheme=LabelScheme(data["scheme"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SplitManifest":
        return cls.from_json(json.loads(Path(path).read_text()))


def _closest_subset(order: list[int], counts: dict[int, int], target: float) -> set[int]:
    """Proper non-empty subset of patients whose image total is closest to ``target``."""
    total = sum(counts.values())
    reach: dict[int, tuple[int, ...]] = {0: ()}
    for pid in order:
        for s, members in list(reach.items()):
            reach.setdefault(s + counts[pid], members + (pid,))
    best = min((s for s in reach if 0 < s < total), key=lambda s: (abs(s - target), s))
    return set(reach[best])


def split_by_patient(manifest: list[ImageRef], ratio: float = 0.8, seed: int = 0,
                     scheme: LabelScheme = LabelScheme.PATHOLOGICAL6) -> SplitManifest:
    """Assign whole patients to train/val, class by class, aiming at ``ratio`` of images in train.

    Patients are taken largest first (the seed only orders equal-size ties) and
    each goes to whichever side is further below its image target. If that
    leaves a class's val fraction more than SPLIT_TOLERANCE off target, the
    class is re-split with the patient subset whose image count is closest to
    the val target. A class with a single patient ends up train-only, which is
    logged as a shortfall.
    """
    if not manifest:
        raise EmptyManifest("no images to split")
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)

    by_class: dict[str, dict[int, list[ImageRef]]] = defaultdict(lambda: defaultdict(list))
    for ref in manifest:
        by_class[ref.label][ref.patient].append(ref)

    train_patients: set[int] = set()
    shortfalls = []
    for label in sorted(by_class):
        patients = by_class[label]
        pids = sorted(patients)
        tie = dict(zip(pids, rng.permutation(len(pids))))
        order = sorted(pids, key=lambda p: (-len(patients[p]), tie[p]))
        total = sum(len(patients[p]) for p in pids)
        target = {"train": ratio * total, "val": (1 - ratio) * total}
        got = {"train": 0, "val": 0}
        sides: dict[int, str] = {}
        for pid in order:
            side = "train" if target["train"] - got["train"] >= target["val"] - got["val"] else "val"
            sides[pid] = side
            got[side] += len(patients[pid])
        if len(pids) >= 2 and (got["val"] == 0 or
                               abs(got["val"] / total - (1 - ratio)) > SPLIT_TOLERANCE):
            counts = {p: len(patients[p]) for p in pids}
            val_pids = _closest_subset(order, counts, target["val"])
            sides = {p: "val" if p in val_pids else "train" for p in pids}
        if len(pids) < 2:
            msg = f"{label}: only {len(pids)} patient(s); class is train-only"
            log.warning(msg)
            shortfalls.append(msg)
        train_patients.update(p for p, s in sides.items() if s == "train")

    train = [r for r in manifest if r.patient in train_patients]
    val = [r for r in manifest if r.patient not in train_patients]
    return SplitManifest(train, val, seed, ratio, scheme, shortfalls)


def epoch_batches(class_sizes: list[int], batch: int) -> int:
    n_classes = len(class_sizes)
    per_class = batch // n_classes
    return n_classes * math.ceil(float(np.median(class_sizes)) / per_class)


def balanced_batches(labels: list[int] | np.ndarray, n_classes: int, batch: int = 6,
                     seed: int = 0, epoch: int = 0) -> list[np.ndarray]:
    """One epoch of index batches holding ``batch // n_classes`` samples of every class.

    Minority classes are oversampled by cycling fresh permutations of their
    indices; majority classes are subsampled without replacement. The
    schedule depends only on (labels, seed, epoch).
    """
    if batch % n_classes:
        raise IndivisibleBatch(f"batch {batch} is not a multiple of {n_classes} classes")
    labels = np.asarray(labels, dtype=np.intp)
    members = [np.flatnonzero(labels == c) for c in range(n_classes)]
    missing = [c for c, m in enumerate(members) if m.size == 0]
    if missing:
        raise EmptyManifest(f"classes {missing} have no samples")
    per_class = batch // n_classes
    n_batches = epoch_batches([m.size for m in members], batch)
    draws = n_batches * per_class
    rng = np.random.default_rng([seed, epoch])

    streams = []
    for m in members:
        reps = math.ceil(draws / m.size)
        streams.append(np.concatenate([rng.permutation(m) for _ in range(reps)])[:draws])

    out = []
    for b in range(n_batches):
        idx = np.concatenate([s[b * per_class:(b + 1) * per_class] for s in streams])
        out.append(rng.permutation(idx))
    return out
