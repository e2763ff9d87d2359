"""Dataset containers, MNIST IDX parsing, synthetic blobs and embedding export."""

import csv
import gzip
import io
import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (GenerationError, IdxCountMismatchError, IdxMagicError,
                     IdxTruncatedError)
from .numerics import DTYPE, Rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SPLIT_MODES = ("shared_classes", "disjoint_classes")


@dataclass
class SampleBatch:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=DTYPE)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError(f"inconsistent batch shapes: x {self.x.shape}, y {self.y.shape}")

    def __len__(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def classes(self):
        return np.unique(self.y)

    def subset(self, index):
        return SampleBatch(self.x[index], self.y[index])


@dataclass
class Dataset:
    train: SampleBatch
    test: SampleBatch
    split_mode: str = "shared_classes"
    name: str = ""

    def __post_init__(self):
        if self.split_mode not in SPLIT_MODES:
            raise ValueError(f"split_mode must be one of {SPLIT_MODES}")
        if self.split_mode == "disjoint_classes":
            overlap = np.intersect1d(self.train.classes, self.test.classes)
            if overlap.size:
                raise ValueError(f"disjoint split has shared classes {overlap.tolist()}")

    @property
    def class_count(self):
        return int(np.union1d(self.train.classes, self.test.classes).size)

    @property
    def train_class_count(self):
        """Number of classifier outputs needed for the training labels."""
        return int(self.train.y.max()) + 1


# ---------------------------------------------------------------------------
# IDX


def _read_bytes(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if str(path).endswith(".gz"):
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw, expected_magic, ndim, what):
    if len(raw) < 4:
        raise IdxTruncatedError(f"{what}: file too short for the magic number", len(raw))
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise IdxMagicError(
            f"{what}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}", 0)
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise IdxTruncatedError(f"{what}: header needs {header_end} bytes", len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    payload = math.prod(dims)  # exact: huge declared sizes must not wrap
    if len(raw) < header_end + payload:
        raise IdxTruncatedError(
            f"{what}: declared {payload} payload bytes, only {len(raw) - header_end} present",
            len(raw))
    data = np.frombuffer(raw, dtype=np.uint8, count=payload, offset=header_end)
    return dims, data


def parse_idx_images(raw):
    dims, data = _parse_idx(raw, IDX_IMAGES_MAGIC, 3, "images")
    n, rows, cols = dims
    return data.reshape(n, rows * cols)


def parse_idx_labels(raw):
    (n,), data = _parse_idx(raw, IDX_LABELS_MAGIC, 1, "labels")
    return data


def load_idx(images_path, labels_path):
    """Read an IDX image/label pair into a batch with pixels scaled to [0, 1].

    Paths ending in ``.gz`` are decompressed transparently.
    """
    images = parse_idx_images(_read_bytes(images_path))
    labels = parse_idx_labels(_read_bytes(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images.shape[0]} images but {labels.shape[0]} labels", 4)
    return SampleBatch(images.astype(DTYPE) / 255.0, labels.astype(np.int64))


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def find_mnist(directory):
    """Return ``{split: (images, labels)}`` paths in ``directory`` or None."""
    found = {}
    for split, names in MNIST_FILES.items():
        paths = []
        for name in names:
            for candidate in (name, name + ".gz", name.replace("-idx", ".idx")):
                p = os.path.join(directory, candidate)
                if os.path.exists(p):
                    paths.append(p)
                    break
        if len(paths) != 2:
            return None
        found[split] = tuple(paths)
    return found


def load_mnist(directory, n_train=50_000, n_test=10_000):
    """MNIST with the first ``n_train`` training images and ``n_test`` test images."""
    paths = find_mnist(directory)
    if paths is None:
        raise FileNotFoundError(f"no MNIST IDX files found in {directory!r}")
    train = load_idx(*paths["train"])
    test = load_idx(*paths["test"])
    return Dataset(train.subset(slice(0, n_train)), test.subset(slice(0, n_test)),
                   "shared_classes", name="mnist")


# ---------------------------------------------------------------------------
# Synthetic blobs


@dataclass
class BlobSpec:
    n_classes: int = 16
    dim: int = 32
    per_class: int = 100
    min_angle_deg: float = 60.0
    sigma: float = 0.15
    radius: float = 1.0
    split_mode: str = "disjoint_classes"
    test_fraction: float = 0.5
    seed: int = 0
    max_retries: int = 10_000

    def to_dict(self):
        return dict(self.__dict__)


def sample_centers(n, dim, min_angle_deg, rng, max_retries=10_000):
    """Random unit vectors with every pairwise angle at least ``min_angle_deg``."""
    max_cos = math.cos(math.radians(min_angle_deg))
    centers = []
    attempts = 0
    while len(centers) < n:
        attempts += 1
        if attempts > max_retries:
            raise GenerationError(
                f"could not place {n} centers in R^{dim} with pairwise angle "
                f">= {min_angle_deg} deg after {max_retries} draws")
        v = rng.normal(size=dim)
        v /= np.linalg.norm(v)
        if all(float(v @ c) <= max_cos for c in centers):
            centers.append(v)
    return np.array(centers)


def gen_blobs(spec=None, **overrides):
    """Gaussian blobs around well-separated unit directions.

    With ``disjoint_classes`` the first half of the classes form the training
    split and the second half the test split; otherwise each class is split
    by ``test_fraction``.
    """
    spec = spec or BlobSpec()
    if overrides:
        spec = BlobSpec(**{**spec.to_dict(), **overrides})
    if spec.split_mode not in SPLIT_MODES:
        raise ValueError(f"split_mode must be one of {SPLIT_MODES}")
    rng = Rng(spec.seed)
    centers = sample_centers(spec.n_classes, spec.dim, spec.min_angle_deg, rng,
                             spec.max_retries) * spec.radius
    xs, ys = [], []
    for c in range(spec.n_classes):
        noise = rng.normal(0.0, 1.0, size=(spec.per_class, spec.dim)) * spec.sigma
        xs.append(centers[c] + noise)
        ys.append(np.full(spec.per_class, c))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    if spec.split_mode == "disjoint_classes":
        n_train = spec.n_classes // 2
        if n_train < 1 or n_train == spec.n_classes:
            raise GenerationError("disjoint split needs at least 2 classes")
        is_train = y < n_train
    else:
        n_test = int(round(spec.per_class * spec.test_fraction))
        within = np.tile(np.arange(spec.per_class), spec.n_classes)
        is_train = within >= n_test
    ds = Dataset(SampleBatch(x[is_train], y[is_train]),
                 SampleBatch(x[~is_train], y[~is_train]),
                 spec.split_mode, name="blobs")
    ds.centers = centers
    return ds


# ---------------------------------------------------------------------------
# Embedding export


def _fmt(v):
    return "%.17g" % v


def embeddings_to_csv(embeddings, labels, dim=None):
    embeddings = np.asarray(embeddings, dtype=DTYPE)
    if dim is None:
        dim = embeddings.shape[1] if embeddings.ndim == 2 else 0
    buf = io.StringIO()
    buf.write(",".join(["label"] + [f"e{j}" for j in range(dim)]) + "\n")
    for lab, row in zip(labels, embeddings):
        buf.write(",".join([str(int(lab))] + [_fmt(v) for v in row]) + "\n")
    return buf.getvalue()


def export_embeddings(embeddings, labels, path, fmt="csv", dim=None):
    """Write embeddings as ``label,e0,...,e{k-1}`` CSV or the equivalent JSON."""
    embeddings = np.asarray(embeddings, dtype=DTYPE)
    if dim is None:
        dim = embeddings.shape[1] if embeddings.ndim == 2 else 0
    if fmt == "csv":
        text = embeddings_to_csv(embeddings, labels, dim)
    elif fmt == "json":
        text = json.dumps({
            "columns": ["label"] + [f"e{j}" for j in range(dim)],
            "rows": [[int(lab)] + [float(v) for v in row] for lab, row in zip(labels, embeddings)],
        }) + "\n"
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write embeddings to {path}: {exc}") from exc


def import_embeddings(path):
    """Inverse of :func:`export_embeddings`; returns ``(embeddings, labels)``."""
    with open(path, newline="") as fh:
        text = fh.read()
    if str(path).endswith(".json"):
        doc = json.loads(text)
        dim = len(doc["columns"]) - 1
        rows = doc["rows"]
        labels = np.array([r[0] for r in rows], dtype=np.int64)
        emb = np.array([r[1:] for r in rows], dtype=DTYPE).reshape(len(rows), dim)
        return emb, labels
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if not header or header[0] != "label":
        raise ValueError(f"{path}: expected a 'label' first column")
    dim = len(header) - 1
    rows = [r for r in reader if r]
    labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
    emb = np.array([[float(v) for v in r[1:]] for r in rows], dtype=DTYPE).reshape(len(rows), dim)
    return emb, labels
