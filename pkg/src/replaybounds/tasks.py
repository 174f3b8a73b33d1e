"""Sequential task data: generators, IDX ingestion, supersample bookkeeping.

A TaskSequence stores T supersample datasets as arrays:

    features[t, j, c]  -> feature vector of the c-th element of pair j in task t
    labels[t, j, c]    -> its class index

The membership bit S[t, j] picks the training element (column S[t, j]);
the other column is held out.
"""
from __future__ import annotations

import base64
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import RngStream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SEQUENCE_FORMAT_VERSION = 1


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxCountMismatch(IdxError):
    pass


class IdxTruncated(IdxError):
    pass


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TaskSequence:
    features: np.ndarray  # (T, n, 2, dim)
    labels: np.ndarray  # (T, n, 2)
    num_classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f, y = self.features, self.labels
        if f.ndim != 4 or f.shape[2] != 2:
            raise ValueError(f"features must have shape (T, n, 2, dim), got {f.shape}")
        if y.shape != f.shape[:3]:
            raise ValueError(f"labels shape {y.shape} does not match features {f.shape}")
        if f.shape[0] < 2 or f.shape[1] < 1:
            raise ValueError("a task sequence needs T >= 2 and n >= 1")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError("label out of range")
        f.setflags(write=False)
        y.setflags(write=False)

    @property
    def T(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[3]

    def training_view(self, task: int, S: np.ndarray):
        """Features and labels of the training elements of one task."""
        j = np.arange(self.n)
        cols = S[task].astype(int)
        return self.features[task, j, cols], self.labels[task, j, cols]

    def to_json(self) -> str:
        doc = {
            "format": "replaybounds.TaskSequence",
            "version": SEQUENCE_FORMAT_VERSION,
            "shape": list(self.features.shape),
            "num_classes": self.num_classes,
            "meta": self.meta,
            "features": base64.b64encode(self.features.astype("<f8").tobytes()).decode("ascii"),
            "labels": base64.b64encode(self.labels.astype("<i8").tobytes()).decode("ascii"),
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TaskSequence":
        doc = json.loads(text)
        if doc.get("version") != SEQUENCE_FORMAT_VERSION:
            raise ValueError(f"unsupported sequence format version {doc.get('version')}")
        shape = tuple(doc["shape"])
        feats = np.frombuffer(base64.b64decode(doc["features"]), dtype="<f8").reshape(shape).astype(float)
        labels = np.frombuffer(base64.b64decode(doc["labels"]), dtype="<i8").reshape(shape[:3]).astype(np.int64)
        return cls(feats, labels, int(doc["num_classes"]), doc["meta"])


# Per-task streams are drawn in fixed-size chunks, so the data for a smaller
# n is a prefix of the data for a larger n under the same seed.
CHUNK = 64


def _nested(rng: RngStream, T: int, n: int, draw) -> np.ndarray:
    """Stack per-task arrays of length n built from chunked child streams."""
    out = []
    for t in range(T):
        parts = [draw(rng.child(t, c).generator(), CHUNK) for c in range(-(-n // CHUNK))]
        out.append(np.concatenate(parts)[:n])
    return np.stack(out)


def gen_synthetic_sequence(T: int, n: int, dim: int, class_sep: float, rotation_per_task: float,
                           rng: RngStream) -> TaskSequence:
    """Two unit-covariance Gaussian classes per task, means rotating from task to task.

    Task t has class means +-class_sep/2 along the first axis, rotated by
    t * rotation_per_task in the plane of the first two axes.
    """
    if T < 2 or n < 1 or dim < 2:
        raise ValueError(f"invalid config: T={T}, n={n}, dim={dim} (need T >= 2, n >= 1, dim >= 2)")
    if class_sep <= 0:
        raise ValueError(f"invalid config: class_sep must be positive, got {class_sep}")
    labels = _nested(rng, T, n, lambda g, size: g.integers(0, 2, size=(size, 2)))
    noise = _nested(rng.child("noise"), T, n, lambda g, size: g.standard_normal((size, 2, dim)))
    means = np.zeros((T, 2, dim))
    for t in range(T):
        a = t * rotation_per_task
        direction = np.array([math.cos(a), math.sin(a)])
        means[t, 0, :2] = -0.5 * class_sep * direction
        means[t, 1, :2] = 0.5 * class_sep * direction
    t_idx = np.arange(T)[:, None, None]
    features = means[t_idx, labels] + noise
    meta = {
        "generator": "gaussian_rotation",
        "class_sep": class_sep,
        "rotation_per_task": rotation_per_task,
        "dim": dim,
        "delta": 0.0,
        "class_assignment": [[0, 1] for _ in range(T)],
    }
    return TaskSequence(features, labels, 2, meta)


def _read_be32(buf: bytes, offset: int) -> int:
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path, labels_path):
    """Read an IDX image/label file pair.

    Returns (features, labels): features are flattened pixels scaled to [0, 1]
    as float64 with shape (count, rows * cols); labels are int64.
    """
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()
    if len(img) < 16:
        raise IdxTruncated(f"{images_path}: header truncated")
    if len(lab) < 8:
        raise IdxTruncated(f"{labels_path}: header truncated")
    if _read_be32(img, 0) != IDX_IMAGES_MAGIC:
        raise IdxMagicError(f"{images_path}: bad magic 0x{_read_be32(img, 0):08x}")
    if _read_be32(lab, 0) != IDX_LABELS_MAGIC:
        raise IdxMagicError(f"{labels_path}: bad magic 0x{_read_be32(lab, 0):08x}")
    count, rows, cols = _read_be32(img, 4), _read_be32(img, 8), _read_be32(img, 12)
    lcount = _read_be32(lab, 4)
    if count != lcount:
        raise IdxCountMismatch(f"image count {count} != label count {lcount}")
    npix = count * rows * cols
    if len(img) - 16 < npix:
        raise IdxTruncated(f"{images_path}: expected {npix} pixel bytes, found {len(img) - 16}")
    if len(lab) - 8 < count:
        raise IdxTruncated(f"{labels_path}: expected {count} label bytes, found {len(lab) - 8}")
    pixels = np.frombuffer(img, dtype=np.uint8, count=npix, offset=16).reshape(count, rows * cols)
    labels = np.frombuffer(lab, dtype=np.uint8, count=count, offset=8)
    return pixels.astype(float) / 255.0, labels.astype(np.int64)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images of shape (count, rows, cols) and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def split_classes(features: np.ndarray, labels: np.ndarray, classes_per_task: int, T: int, n: int,
                  rng: RngStream) -> TaskSequence:
    """Partition the sorted class list into T consecutive groups, one group per task.

    Each task draws 2n of its samples without replacement, arranged as n
    supersample pairs, and relabels classes to their position in the group.
    """
    if T < 2:
        raise ValueError("a task sequence needs T >= 2")
    classes = np.unique(labels)
    if T * classes_per_task > len(classes):
        raise InsufficientSamples(f"{T} tasks x {classes_per_task} classes exceeds {len(classes)} distinct labels")
    need = math.ceil(2 * n / classes_per_task)
    g = rng.generator()
    feats, labs, assignment, sources = [], [], [], []
    for t in range(T):
        group = classes[t * classes_per_task:(t + 1) * classes_per_task]
        pool = []
        for c in group:
            idx = np.flatnonzero(labels == c)
            if len(idx) < need:
                raise InsufficientSamples(f"class {c} has {len(idx)} samples, task {t} needs {need}")
            pool.append(idx)
        pool = np.concatenate(pool)
        chosen = g.choice(pool, size=2 * n, replace=False).reshape(n, 2)
        relabel = {int(c): i for i, c in enumerate(group)}
        feats.append(features[chosen])
        labs.append(np.vectorize(relabel.__getitem__)(labels[chosen]))
        assignment.append([int(c) for c in group])
        sources.append(chosen.tolist())
    meta = {
        "generator": "split_classes",
        "classes_per_task": classes_per_task,
        "class_assignment": assignment,
        "source_indices": sources,
        "dim": int(features.shape[1]),
        "delta": 0.0,
    }
    return TaskSequence(np.stack(feats).astype(float), np.stack(labs).astype(np.int64), classes_per_task, meta)


def flip_labels(seq: TaskSequence, delta: float, rng: RngStream) -> TaskSequence:
    """Replace each label, independently with probability delta, by a uniformly drawn different label."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    flip = _nested(rng, seq.T, seq.n, lambda g, size: g.random((size, 2))) < delta
    C = seq.num_classes
    shift = _nested(rng.child("shift"), seq.T, seq.n, lambda g, size: g.integers(1, C, size=(size, 2))) if C > 1 else 0
    labels = np.where(flip, (seq.labels + shift) % seq.num_classes, seq.labels)
    meta = dict(seq.meta, delta=delta)
    return TaskSequence(seq.features.copy(), labels.astype(np.int64), seq.num_classes, meta)


def draw_membership(T: int, n: int, rng: RngStream) -> np.ndarray:
    """T x n matrix of i.i.d. fair membership bits."""
    if T < 1 or n < 1:
        raise ValueError("T and n must be positive")
    return _nested(rng, T, n, lambda g, size: g.integers(0, 2, size=size, dtype=np.uint8))


@dataclass(frozen=True, eq=False)
class BufferIndex:
    """Replay buffer indices: tasks U and, per selected task, sample indices.

    In uniform mode every row of `samples` holds the same l indices V, so
    the buffer is the product M^U_V. Balanced mode draws one row per task.
    """

    tasks: np.ndarray  # (k,)
    samples: np.ndarray  # (k, l)

    @property
    def k(self) -> int:
        return len(self.tasks)

    @property
    def l(self) -> int:
        return self.samples.shape[1]

    @property
    def size(self) -> int:
        return self.k * self.l

    def cells(self) -> np.ndarray:
        """(k*l, 2) array of (task, sample) pairs."""
        if self.size == 0:
            return np.zeros((0, 2), dtype=np.int64)
        t = np.repeat(self.tasks, self.l)
        return np.stack([t, self.samples.reshape(-1)], axis=1).astype(np.int64)

    def restrict(self, current: int) -> "BufferIndex":
        """Rows whose task precedes `current`."""
        keep = self.tasks < current
        return BufferIndex(self.tasks[keep], self.samples[keep])

    def to_dict(self) -> dict:
        return {"tasks": self.tasks.tolist(), "samples": self.samples.tolist(), "l": self.l}

    @classmethod
    def from_dict(cls, d: dict) -> "BufferIndex":
        tasks = np.asarray(d["tasks"], dtype=np.int64)
        samples = np.asarray(d["samples"], dtype=np.int64).reshape(len(tasks), d["l"])
        return cls(tasks, samples)

    @classmethod
    def empty(cls, l: int = 0) -> "BufferIndex":
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, l), dtype=np.int64))


def draw_buffer_index(current: int, k: int, l: int, n: int, rng: RngStream, mode: str = "uniform",
                      train_labels: np.ndarray | None = None, num_classes: int = 2) -> BufferIndex:
    """Draw U uniformly among k-subsets of the tasks before `current` (0-based) and V among l-subsets of [n].

    mode="balanced" stratifies each selected task's sample indices by the
    class of its training element; `train_labels` is the (T, n) array of
    training-element labels.
    """
    if k < 0 or l < 0:
        raise ValueError("k and l must be nonnegative")
    if k > current:
        raise ValueError(f"k={k} exceeds the {current} previous tasks")
    if l > n:
        raise ValueError(f"l={l} exceeds n={n}")
    g = rng.generator()
    tasks = np.sort(g.choice(current, size=k, replace=False)).astype(np.int64) if k else np.zeros(0, dtype=np.int64)
    if mode == "uniform":
        v = np.sort(g.choice(n, size=l, replace=False)) if l else np.zeros(0, dtype=np.int64)
        samples = np.tile(v, (k, 1))
    elif mode == "balanced":
        if train_labels is None:
            raise ValueError("balanced mode needs the training labels")
        rows = [_balanced_row(train_labels[u], l, num_classes, g) for u in tasks]
        samples = np.array(rows, dtype=np.int64).reshape(k, l)
    else:
        raise ValueError(f"unknown buffer mode {mode!r}")
    return BufferIndex(tasks, samples.astype(np.int64))


def _balanced_row(labels: np.ndarray, l: int, num_classes: int, g: np.random.Generator) -> np.ndarray:
    by_class = [g.permutation(np.flatnonzero(labels == c)) for c in range(num_classes)]
    quota = np.full(num_classes, l // num_classes)
    quota[g.permutation(num_classes)[: l % num_classes]] += 1
    chosen = []
    spare = []
    for c in range(num_classes):
        take = min(quota[c], len(by_class[c]))
        chosen.extend(by_class[c][:take])
        spare.extend(by_class[c][take:])
    short = l - len(chosen)
    if short:
        chosen.extend(g.permutation(np.array(spare, dtype=np.int64))[:short])
    return np.sort(np.array(chosen, dtype=np.int64))
