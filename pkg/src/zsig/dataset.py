"""Data loading, validation, and seen/unseen split handling.

File formats:
  features    CSV with header ``id,f0,...,f{D-1}``, or a binary file with
              magic bytes ``ZSLF`` followed by little-endian u32 row count,
              u32 column count, and row-major float32 data.
  labels      CSV with header ``id,class``.
  embeddings  CSV with header ``class,e0,...,e{D'-1}``.  Several embedding
              files may be fused: each block is L2-normalized per row and
              the blocks are concatenated column-wise.
  splits      JSON: ``{"seed": u64, "unseen_count": int,
              "trials": [["classA", "classB", ...], ...]}``.

Class identifiers are strings in files and dense integer ids internally
(row order of the first embeddings file).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InvalidSplitError

FEATURE_MAGIC = b"ZSLF"

# Substream tags so every consumer of the seed draws from a disjoint stream.
STREAM_SPLITS = 1
STREAM_SYNTH = 2
STREAM_BASELINE = 3


def substream(seed, *path):
    """Counter-based generator for ``(seed, *path)``.

    Philox4x64 keyed through a SeedSequence, so any (seed, stream, trial)
    tuple maps to the same stream on every platform.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed),) + tuple(int(p) for p in path))))


@dataclass(frozen=True)
class ZslDataset:
    """Feature matrix, per-instance labels, and per-class label embeddings."""

    features: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int class ids, indexing rows of embeddings
    embeddings: np.ndarray  # (K, D') float64, rows L2-normalized per block
    class_names: tuple  # length K

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        emb = np.ascontiguousarray(np.asarray(self.embeddings, dtype=np.float64))
        names = tuple(str(n) for n in self.class_names)
        if feats.ndim != 2 or emb.ndim != 2 or labels.ndim != 1:
            raise DataFormatError("features/embeddings must be 2-D and labels 1-D")
        n, d = feats.shape
        k, dp = emb.shape
        if labels.shape[0] != n:
            raise DataFormatError(f"{n} feature rows but {labels.shape[0]} labels")
        if len(names) != k:
            raise DataFormatError(f"{k} embedding rows but {len(names)} class names")
        if not (n >= k >= 2 and d >= 1 and dp >= 1):
            raise DataFormatError(f"need N >= K >= 2, D >= 1, D' >= 1; got N={n} K={k} D={d} D'={dp}")
        if not np.isfinite(feats).all():
            raise DataFormatError("non-finite value in features")
        if not np.isfinite(emb).all():
            raise DataFormatError("non-finite value in embeddings")
        if labels.min() < 0 or labels.max() >= k:
            raise DataFormatError("label references a class absent from embeddings")
        feats.flags.writeable = False
        emb.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "class_names", names)

    @property
    def n_instances(self):
        return self.features.shape[0]

    @property
    def n_classes(self):
        return self.embeddings.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def embedding_dim(self):
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class Partition:
    """One side of a seen/unseen split.

    Labels stay in the global id space; ``class_ids`` lists the classes
    present (sorted ascending) and ``embeddings`` holds one row per entry
    of ``class_ids``.
    """

    features: np.ndarray
    labels: np.ndarray
    class_ids: np.ndarray
    embeddings: np.ndarray

    @property
    def n_instances(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    """A batch of seen/unseen trials drawn from one seed."""

    seed: int
    unseen_count: int
    trials: tuple  # tuple of tuples of int class ids, each sorted ascending

    def __post_init__(self):
        trials = tuple(tuple(int(c) for c in t) for t in self.trials)
        for t in trials:
            if len(set(t)) != len(t):
                raise InvalidSplitError(f"duplicate class ids in trial {t}")
            if len(t) != self.unseen_count:
                raise InvalidSplitError(f"trial has {len(t)} classes, expected {self.unseen_count}")
        object.__setattr__(self, "trials", trials)


def _read_csv_rows(path):
    path = Path(path)
    if not path.exists():
        raise DataFormatError("file not found", path=str(path))
    with open(path, "r", encoding="utf-8") as fh:
        rows = [(i + 1, line.rstrip("\n")) for i, line in enumerate(fh)]
    rows = [(ln, s) for ln, s in rows if s.strip()]
    if not rows:
        raise DataFormatError("empty file", path=str(path))
    return rows


def _parse_floats(fields, path, line):
    try:
        return [float(f) for f in fields]
    except ValueError as exc:
        raise DataFormatError(f"non-numeric value: {exc}", path=str(path), line=line) from None


def _load_features_csv(path):
    rows = _read_csv_rows(path)
    header = rows[0][1].split(",")
    if header[0].strip() != "id":
        raise DataFormatError("features header must start with 'id'", path=str(path), line=rows[0][0])
    ncols = len(header) - 1
    if ncols < 1:
        raise DataFormatError("features file has no feature columns", path=str(path), line=rows[0][0])
    ids, data = [], []
    for ln, s in rows[1:]:
        fields = s.split(",")
        if len(fields) != ncols + 1:
            raise DataFormatError(
                f"ragged row: expected {ncols + 1} fields, got {len(fields)}", path=str(path), line=ln
            )
        ids.append(fields[0].strip())
        data.append(_parse_floats(fields[1:], path, ln))
    mat = np.asarray(data, dtype=np.float64)
    if not np.isfinite(mat).all():
        bad = int(np.argwhere(~np.isfinite(mat).all(axis=1))[0, 0])
        raise DataFormatError("non-finite feature value", path=str(path), line=rows[1 + bad][0])
    return ids, mat


def _load_features_binary(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != FEATURE_MAGIC:
        raise DataFormatError("bad magic bytes in binary features file", path=str(path))
    if len(blob) < 12:
        raise DataFormatError("truncated binary features file", path=str(path))
    nrows, ncols = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * nrows * ncols
    if len(blob) != expected:
        raise DataFormatError(
            f"binary features payload is {len(blob)} bytes, expected {expected}", path=str(path)
        )
    mat = np.frombuffer(blob, dtype="<f4", offset=12).reshape(nrows, ncols).astype(np.float64)
    if not np.isfinite(mat).all():
        raise DataFormatError("non-finite feature value", path=str(path))
    return None, mat


def _is_binary_features(path):
    with open(path, "rb") as fh:
        return fh.read(4) == FEATURE_MAGIC


def _load_labels(path):
    rows = _read_csv_rows(path)
    header = [h.strip() for h in rows[0][1].split(",")]
    if header != ["id", "class"]:
        raise DataFormatError("labels header must be 'id,class'", path=str(path), line=rows[0][0])
    ids, classes = [], []
    for ln, s in rows[1:]:
        fields = s.split(",")
        if len(fields) != 2:
            raise DataFormatError(f"expected 2 fields, got {len(fields)}", path=str(path), line=ln)
        ids.append(fields[0].strip())
        classes.append(fields[1].strip())
    return ids, classes


def normalize_rows(mat):
    """L2-normalize each row; rows with (near-)zero norm are left untouched."""
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    safe = np.where(norms > 1e-12, norms, 1.0)
    return mat / safe


def _load_embeddings_block(path):
    rows = _read_csv_rows(path)
    header = rows[0][1].split(",")
    if header[0].strip() != "class":
        raise DataFormatError("embeddings header must start with 'class'", path=str(path), line=rows[0][0])
    ncols = len(header) - 1
    if ncols < 1:
        raise DataFormatError("embeddings file has no value columns", path=str(path), line=rows[0][0])
    names, data = [], []
    for ln, s in rows[1:]:
        fields = s.split(",")
        if len(fields) != ncols + 1:
            raise DataFormatError(
                f"ragged row: expected {ncols + 1} fields, got {len(fields)}", path=str(path), line=ln
            )
        name = fields[0].strip()
        if name in names:
            raise DataFormatError(f"duplicate class '{name}'", path=str(path), line=ln)
        names.append(name)
        data.append(_parse_floats(fields[1:], path, ln))
    mat = np.asarray(data, dtype=np.float64)
    if not np.isfinite(mat).all():
        raise DataFormatError("non-finite embedding value", path=str(path))
    return names, mat


def load_embeddings(paths):
    """Load one or more embedding blocks; fuse by per-row-normalized concat."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    names = None
    blocks = []
    for p in paths:
        block_names, mat = _load_embeddings_block(p)
        if names is None:
            names = block_names
        else:
            if set(block_names) != set(names):
                raise DataFormatError("embedding files list different class sets", path=str(p))
            order = [block_names.index(n) for n in names]
            mat = mat[order]
        blocks.append(normalize_rows(mat))
    return names, np.concatenate(blocks, axis=1)


def load_dataset(features_path, labels_path, embeddings_path):
    """Load and cross-validate the three dataset files.

    ``embeddings_path`` may be a single path or a sequence of paths to fuse.
    Feature row order is preserved.  CSV features are joined to labels by
    the ``id`` column; binary features are aligned positionally with the
    labels file.
    """
    class_names, embeddings = load_embeddings(embeddings_path)
    name_to_id = {n: i for i, n in enumerate(class_names)}

    label_ids, label_classes = _load_labels(labels_path)
    for i, cls in enumerate(label_classes):
        if cls not in name_to_id:
            raise DataFormatError(
                f"label names class '{cls}' absent from embeddings", path=str(labels_path), line=i + 2
            )

    if _is_binary_features(features_path):
        _, feats = _load_features_binary(features_path)
        if feats.shape[0] != len(label_ids):
            raise DataFormatError(
                f"{feats.shape[0]} feature rows but {len(label_ids)} labels", path=str(features_path)
            )
    else:
        feat_ids, feats = _load_features_csv(features_path)
        if len(feat_ids) != len(label_ids):
            raise DataFormatError(
                f"{len(feat_ids)} feature rows but {len(label_ids)} labels", path=str(features_path)
            )
        if feat_ids != label_ids:
            by_id = dict(zip(label_ids, label_classes))
            missing = [i for i in feat_ids if i not in by_id]
            if missing:
                raise DataFormatError(f"feature id '{missing[0]}' has no label", path=str(features_path))
            label_classes = [by_id[i] for i in feat_ids]

    labels = np.asarray([name_to_id[c] for c in label_classes], dtype=np.int64)
    return ZslDataset(features=feats, labels=labels, embeddings=embeddings, class_names=tuple(class_names))


def generate_splits(class_count, unseen_count, trial_count, seed):
    """Draw ``trial_count`` unseen-class sets uniformly without replacement.

    Deterministic in ``seed``; each trial is sorted ascending.
    """
    if not 0 < unseen_count < class_count:
        raise InvalidSplitError(f"unseen_count must be in (0, {class_count}); got {unseen_count}")
    if trial_count < 1:
        raise InvalidSplitError(f"trial_count must be >= 1; got {trial_count}")
    rng = substream(seed, STREAM_SPLITS)
    trials = []
    for _ in range(trial_count):
        picks = rng.choice(class_count, size=unseen_count, replace=False)
        trials.append(tuple(sorted(int(c) for c in picks)))
    return SplitSpec(seed=int(seed), unseen_count=int(unseen_count), trials=tuple(trials))


def apply_split(dataset, unseen_ids):
    """Partition a dataset into (seen, unseen) by class id."""
    unseen = sorted(set(int(c) for c in unseen_ids))
    if not unseen:
        raise InvalidSplitError("unseen set is empty; transduction needs unseen data")
    k = dataset.n_classes
    for c in unseen:
        if not 0 <= c < k:
            raise InvalidSplitError(f"unknown class id {c}")
    seen = sorted(set(range(k)) - set(unseen))
    unseen_mask = np.isin(dataset.labels, unseen)

    def part(ids, mask):
        ids = np.asarray(ids, dtype=np.int64)
        return Partition(
            features=dataset.features[mask],
            labels=dataset.labels[mask],
            class_ids=ids,
            embeddings=dataset.embeddings[ids],
        )

    return part(seen, ~unseen_mask), part(unseen, unseen_mask)


def save_splits(spec, class_names, path):
    """Write a SplitSpec as JSON, translating ids to class-name strings."""
    doc = {
        "seed": int(spec.seed),
        "unseen_count": int(spec.unseen_count),
        "trials": [[str(class_names[c]) for c in trial] for trial in spec.trials],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_splits(path, class_names):
    """Read a SplitSpec JSON and map class names back to integer ids."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError("file not found", path=str(path))
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid JSON: {exc}", path=str(path)) from None
    for key in ("seed", "unseen_count", "trials"):
        if key not in doc:
            raise DataFormatError(f"splits file missing '{key}'", path=str(path))
    name_to_id = {str(n): i for i, n in enumerate(class_names)}
    trials = []
    for trial in doc["trials"]:
        ids = []
        for name in trial:
            if str(name) not in name_to_id:
                raise InvalidSplitError(f"splits file names unknown class '{name}'")
            ids.append(name_to_id[str(name)])
        trials.append(tuple(sorted(ids)))
    return SplitSpec(seed=int(doc["seed"]), unseen_count=int(doc["unseen_count"]), trials=tuple(trials))


def save_features_binary(path, features):
    """Write features in the ZSLF binary format (float32, row-major)."""
    mat = np.ascontiguousarray(np.asarray(features, dtype="<f4"))
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
        fh.write(mat.tobytes())
