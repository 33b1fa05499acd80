"""Dataset manifests, subject-independent splitters, synthetic task pairs,
and utterance-level aggregation.

Splits always operate on whole utterances (grouped by (subject, utterance)),
never on individual segments: segments of one utterance are near-duplicates
and must not straddle train/test.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SyntheticSpec
from .features import flatten_segments, load_cache

MANIFEST_COLUMNS = ["path", "label", "subject", "utterance"]


@dataclass
class Row:
    path: str
    label: str
    subject: str
    utterance: str


@dataclass
class DatasetManifest:
    name: str
    class_list: list[str]
    rows: list[Row]
    modality: str = "audio-segments"  # or "image-frames"

    def group_keys(self) -> list[tuple[str, str]]:
        """Per-row (subject, utterance) key; the unit all splits respect."""
        return [(r.subject, r.utterance) for r in self.rows]


def load_manifest(
    path: str | Path,
    name: str | None = None,
    modality: str = "audio-segments",
    class_list: list[str] | None = None,
) -> DatasetManifest:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != MANIFEST_COLUMNS:
            raise ValueError(
                f"{path}: manifest header must be {','.join(MANIFEST_COLUMNS)}"
            )
        rows = [Row(r["path"], r["label"], r["subject"], r["utterance"]) for r in reader]
    if class_list is None:
        class_list = sorted({r.label for r in rows})
    unknown = {r.label for r in rows} - set(class_list)
    if unknown:
        raise ValueError(f"{path}: labels {sorted(unknown)} not in class list")
    return DatasetManifest(
        name=name or path.stem, class_list=list(class_list), rows=rows, modality=modality
    )


def save_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_COLUMNS)
        for r in manifest.rows:
            writer.writerow([r.path, r.label, r.subject, r.utterance])


@dataclass
class SplitPlan:
    scheme: str
    folds: list[tuple[np.ndarray, np.ndarray]]  # (train indices, test indices)


def _unique_groups(keys: list[tuple[str, str]]) -> list[tuple[str, str]]:
    seen: dict[tuple[str, str], None] = {}
    for k in keys:
        seen.setdefault(k)
    return list(seen)


def kfold_split(dataset, k: int, seed: int) -> SplitPlan:
    """Shuffle utterances by ``seed`` and deal them into k near-equal folds;
    every row follows its utterance."""
    if k < 2:
        raise ValueError("k must be >= 2")
    keys = dataset.group_keys()
    groups = _unique_groups(keys)
    if len(groups) < k:
        raise ValueError(f"only {len(groups)} utterances for k={k}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(groups))
    fold_of_group: dict[tuple[str, str], int] = {}
    for fold, chunk in enumerate(np.array_split(order, k)):
        for gi in chunk:
            fold_of_group[groups[gi]] = fold
    row_folds = np.array([fold_of_group[key] for key in keys])
    all_idx = np.arange(len(keys))
    folds = [
        (all_idx[row_folds != f], all_idx[row_folds == f]) for f in range(k)
    ]
    return SplitPlan(scheme=f"kfold({k})", folds=folds)


def losocv_split(dataset) -> SplitPlan:
    """One fold per subject (lexicographic order); test = that subject."""
    keys = dataset.group_keys()
    subjects = sorted({s for s, _ in keys})
    if len(subjects) < 2:
        raise ValueError("leave-one-subject-out needs at least 2 subjects")
    row_subjects = np.array([s for s, _ in keys])
    all_idx = np.arange(len(keys))
    folds = [
        (all_idx[row_subjects != s], all_idx[row_subjects == s]) for s in subjects
    ]
    return SplitPlan(scheme="losocv", folds=folds)


@dataclass
class ArrayDataset:
    """In-memory labeled samples ready for the network: one row per segment
    (or frame), flattened features."""

    name: str
    class_list: list[str]
    x: np.ndarray  # (n, dim) float32
    y: np.ndarray  # (n,) int64 indices into class_list
    subjects: np.ndarray  # (n,) str
    utterances: np.ndarray  # (n,) str
    prototypes: np.ndarray | None = None  # synthetic tasks only

    def __len__(self) -> int:
        return self.x.shape[0]

    def group_keys(self) -> list[tuple[str, str]]:
        return list(zip(self.subjects.tolist(), self.utterances.tolist()))

    def group_ids(self) -> np.ndarray:
        """Globally-unique utterance keys ("subject|utterance") per row."""
        return np.array(
            [f"{s}|{u}" for s, u in zip(self.subjects, self.utterances)], dtype=object
        )

    def take(self, indices, name: str | None = None) -> "ArrayDataset":
        idx = np.asarray(indices)
        return ArrayDataset(
            name=name or self.name,
            class_list=list(self.class_list),
            x=self.x[idx],
            y=self.y[idx],
            subjects=self.subjects[idx],
            utterances=self.utterances[idx],
        )


def load_segments(
    manifest: DatasetManifest, base_dir: str | Path | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Read every row's feature cache (or image); returns raw segments
    (n, F, T, C) plus aligned labels, subjects, utterance ids."""
    base = Path(base_dir) if base_dir else None
    seg_list, labels, subjects, utts = [], [], [], []
    label_index = {c: i for i, c in enumerate(manifest.class_list)}
    for row in manifest.rows:
        p = Path(row.path)
        if base and not p.is_absolute():
            p = base / p
        if manifest.modality == "image-frames":
            arr = _load_image(p)[None]  # one frame = one sample
        else:
            _, arr, _ = load_cache(p)
        for seg in arr:
            seg_list.append(seg)
            labels.append(label_index[row.label])
            subjects.append(row.subject)
            utts.append(row.utterance)
    if not seg_list:
        raise ValueError(f"manifest {manifest.name} has no samples")
    return (
        np.stack(seg_list),
        np.array(labels, dtype=np.int64),
        np.array(subjects, dtype=object),
        np.array(utts, dtype=object),
    )


def _load_image(path: Path) -> np.ndarray:
    from PIL import Image

    img = Image.open(path).convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.shape != (64, 64, 3):
        raise ValueError(f"{path}: expected a pre-cropped 64x64 RGB frame, got {arr.shape}")
    return arr


def dataset_from_segments(
    name: str,
    class_list: list[str],
    segments: np.ndarray,
    y: np.ndarray,
    subjects: np.ndarray,
    utterances: np.ndarray,
) -> ArrayDataset:
    return ArrayDataset(
        name=name,
        class_list=list(class_list),
        x=flatten_segments(segments).astype(np.float32),
        y=np.asarray(y, dtype=np.int64),
        subjects=np.asarray(subjects, dtype=object),
        utterances=np.asarray(utterances, dtype=object),
    )


def gen_synthetic(
    spec: SyntheticSpec, seed: int
) -> tuple[ArrayDataset, ArrayDataset]:
    """Paired source/destination classification tasks.

    Class prototypes are orthonormal directions; destination prototypes are
    ``relatedness * source + sqrt(1 - relatedness^2) * fresh`` with the fresh
    directions orthogonal to the source set, so the prototype inner product
    equals ``relatedness`` exactly. Samples add isotropic noise and a
    per-subject mean offset.
    """
    rng = np.random.default_rng(seed)
    c, dim = spec.num_classes, spec.dim
    basis = rng.normal(size=(dim, 2 * c))
    q, _ = np.linalg.qr(basis)
    src_proto = q[:, :c].T
    fresh = q[:, c : 2 * c].T
    rho = spec.relatedness
    dst_proto = rho * src_proto + np.sqrt(1.0 - rho * rho) * fresh

    def build(name: str, proto: np.ndarray, rng: np.random.Generator) -> ArrayDataset:
        offsets = spec.subject_sigma * rng.normal(size=(spec.subjects, dim))
        xs, ys, subjects, utts = [], [], [], []
        uid = 0
        for cls in range(c):
            for i in range(spec.samples_per_class):
                subj = i % spec.subjects
                sample = proto[cls] + spec.noise * rng.normal(size=dim) + offsets[subj]
                xs.append(sample)
                ys.append(cls)
                subjects.append(f"s{subj}")
                utts.append(f"u{uid:05d}")
                uid += 1
        return ArrayDataset(
            name=name,
            class_list=[f"class{j}" for j in range(c)],
            x=np.array(xs, dtype=np.float32),
            y=np.array(ys, dtype=np.int64),
            subjects=np.array(subjects, dtype=object),
            utterances=np.array(utts, dtype=object),
            prototypes=proto,
        )

    source = build("source", src_proto, rng)
    dest = build("destination", dst_proto, rng)
    return source, dest


def utterance_aggregate(
    utterance_keys: np.ndarray, posteriors: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean the segment posteriors of each utterance; argmax predicts
    (ties -> lowest class index). Returns (keys, posteriors, predictions)
    with keys sorted."""
    utterance_keys = np.asarray(utterance_keys)
    posteriors = np.asarray(posteriors, dtype=np.float64)
    if utterance_keys.size == 0:
        raise ValueError("empty group")
    if utterance_keys.shape[0] != posteriors.shape[0]:
        raise ValueError("keys and posteriors misaligned")
    uniq, inverse = np.unique(utterance_keys, return_inverse=True)
    sums = np.zeros((uniq.size, posteriors.shape[1]))
    np.add.at(sums, inverse, posteriors)
    counts = np.bincount(inverse, minlength=uniq.size)[:, None]
    means = sums / counts
    return uniq, means, means.argmax(axis=1)


def group_labels(utterance_keys: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Label of each utterance in the sorted-unique key order that
    utterance_aggregate uses."""
    uniq, first = np.unique(np.asarray(utterance_keys), return_index=True)
    return np.asarray(y)[first]
