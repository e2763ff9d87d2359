"""Gradient anatomy of a frozen classifier head.

Samples are typed by their logit margin ``z_y - max_{m != y} z_m``: hard when
the margin is <= 0, boundary when it is positive but below ``tau``, centroid
otherwise. Sweeps evaluate the per-sample embedding gradient norm over a grid
of ``alpha`` values, or over rescalings of the feature for an unnormalized
head. Nothing here mutates the model.
"""

import csv
import io
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .loss_head import gradient_magnitude

HARD, BOUNDARY, CENTROID = "hard", "boundary", "centroid"
SAMPLE_TYPES = (HARD, BOUNDARY, CENTROID)


@dataclass(frozen=True)
class SampleType:
    kind: str
    margin: float

    @property
    def easy(self):
        return self.kind != HARD


def margins(logits, labels):
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    labels = np.asarray(labels).reshape(-1)
    idx = np.arange(z.shape[0])
    others = z.copy()
    others[idx, labels] = -np.inf
    return z[idx, labels] - others.max(axis=1)


def type_of_margin(margin, tau):
    if margin <= 0:
        return HARD
    return BOUNDARY if margin < tau else CENTROID


def classify_sample(head, f_hat_row, label, tau):
    margin = float(margins(head.logits(f_hat_row), [label])[0])
    return SampleType(type_of_margin(margin, tau), margin)


def default_tau(margin_values):
    """Median of the positive margins (0 if there are none)."""
    m = np.asarray(margin_values)
    pos = m[m > 0]
    return float(np.median(pos)) if pos.size else 0.0


def type_census(head, f_hat, labels, tau=None):
    """Counts and fractions of hard/boundary/centroid samples."""
    m = margins(head.logits(f_hat), labels)
    if tau is None:
        tau = default_tau(m)
    kinds = [type_of_margin(v, tau) for v in m]
    n = len(kinds)
    counts = {t: kinds.count(t) for t in SAMPLE_TYPES}
    return {
        "tau": float(tau),
        "n": n,
        "counts": counts,
        "fractions": {t: (counts[t] / n if n else 0.0) for t in SAMPLE_TYPES},
    }


@dataclass
class SweepCurve:
    variable: str
    grid: np.ndarray
    values: np.ndarray
    sample_id: int
    sample_type: str

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.grid.size > 1 and not np.all(np.diff(self.grid) > 0):
            raise ValueError("sweep grid must be strictly ascending")

    def value_at(self, x):
        i = int(np.flatnonzero(np.isclose(self.grid, x, rtol=1e-12, atol=0))[0])
        return float(self.values[i])


def _check_grid(grid):
    grid = np.asarray(grid, dtype=np.float64).ravel()
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be non-empty, positive and strictly ascending")
    return grid


def _map(fn, items, threads=None):
    threads = threads or int(os.environ.get("HEATUP_THREADS", "1") or 1)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def alpha_sweep(head, samples, grid, tau=0.0, threads=None):
    """Gradient norm w.r.t. the embedding over an alpha grid, per sample.

    ``samples`` is a sequence of ``(sample_id, f_hat_row, label)``.
    """
    grid = _check_grid(grid)

    def one(sample):
        sid, f, y = sample
        kind = classify_sample(head, f, y, tau).kind
        vals = [gradient_magnitude(head, f, y, a) for a in grid]
        return SweepCurve("alpha", grid, vals, int(sid), kind)

    return _map(one, list(samples), threads)


def norm_sweep(head, f_row, label, grid, sample_id=0, tau=0.0):
    """Gradient norm at ``f = s * f0 / ||f0||`` for each scale ``s``, with alpha = 1."""
    if head.weight_norm != "off":
        raise ValueError("norm sweeps need a head trained without weight normalization")
    grid = _check_grid(grid)
    f0 = np.asarray(f_row, dtype=np.float64).ravel()
    n0 = np.linalg.norm(f0)
    if not n0 > 0:
        raise ValueError("norm sweep needs a non-zero feature")
    u = f0 / n0
    kind = classify_sample(head, f0, label, tau).kind
    vals = [gradient_magnitude(head, s * u, label, 1.0) for s in grid]
    return SweepCurve("norm_scale", grid, vals, int(sample_id), kind)


def representatives(margin_values, per_type=3, tau=None):
    """Indices of up to ``per_type`` samples per type, spread over the margin range.

    Within each type the samples at evenly spaced quantiles of the margin are
    chosen (both ends included), so the picks are deterministic and span the type.
    """
    m = np.asarray(margin_values)
    if tau is None:
        tau = default_tau(m)
    chosen = {}
    for t in SAMPLE_TYPES:
        idx = np.array([i for i, v in enumerate(m) if type_of_margin(v, tau) == t], dtype=int)
        if idx.size == 0:
            chosen[t] = []
            continue
        order = idx[np.argsort(m[idx], kind="stable")]
        if order.size <= per_type:
            chosen[t] = order.tolist()
        else:
            pos = np.linspace(0, order.size - 1, per_type).round().astype(int)
            chosen[t] = order[pos].tolist()
    return chosen


SWEEP_FIELDS = ("sample_id", "type", "grid_value", "grad_magnitude")


def curves_to_csv(curves):
    rows = sorted(((c.sample_id, c.sample_type, g, v) for c in curves
                   for g, v in zip(c.grid, c.values)), key=lambda r: (r[0], r[2]))
    buf = io.StringIO()
    buf.write(",".join(SWEEP_FIELDS) + "\n")
    for sid, kind, g, v in rows:
        buf.write(f"{sid},{kind},{float(g)!r},{float(v)!r}\n")
    return buf.getvalue()


def write_curves(curves, path):
    with open(path, "w", newline="") as fh:
        fh.write(curves_to_csv(curves))


def read_curves(path, variable="alpha"):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    by_id = {}
    for r in rows:
        by_id.setdefault(int(r["sample_id"]), (r["type"], []))[1].append(
            (float(r["grid_value"]), float(r["grad_magnitude"])))
    curves = []
    for sid in sorted(by_id):
        kind, pts = by_id[sid]
        pts.sort()
        curves.append(SweepCurve(variable, [p[0] for p in pts], [p[1] for p in pts], sid, kind))
    return curves


def parameter_checksum(*modules):
    """CRC-32 over all parameter bytes; used to verify sweeps are read-only."""
    crc = 0
    for m in modules:
        for p in m.parameters():
            crc = zlib.crc32(np.ascontiguousarray(p.value).tobytes(), crc)
    return crc


def strict_alpha_samples(head, f_hat, labels, min_margin=0.1):
    """Samples whose alpha-sweep shape is unambiguous.

    Easy samples need a margin of at least ``min_margin``; hard samples need
    a single wrong class holding the top logit. Returns ``(easy, hard)``
    index arrays.
    """
    z = head.logits(f_hat)
    labels = np.asarray(labels).reshape(-1)
    m = margins(z, labels)
    top = z.max(axis=1, keepdims=True)
    unique_top = (z == top).sum(axis=1) == 1
    wrong_top = z.argmax(axis=1) != labels
    easy = np.flatnonzero(m >= min_margin)
    hard = np.flatnonzero((m < 0) & unique_top & wrong_top)
    return easy, hard


def directional_logits(head, f_row):
    """Bias-free logits of the unit feature direction, ``W^T f / ||f||``."""
    f = np.asarray(f_row, dtype=np.float64).ravel()
    return head.effective_weight().T @ (f / np.linalg.norm(f))


def strict_norm_samples(head, f, labels, min_gap=0.1):
    """Samples whose norm-sweep limit is unambiguous.

    As the feature is scaled up, the bias fades and the class with the
    largest directional logit takes over. A sample qualifies when that class
    leads the runner-up by ``min_gap`` and agrees with its type: the label
    for easy samples, another class for hard ones. Returns ``(easy, hard)``.
    """
    z = head.logits(f)
    labels = np.asarray(labels).reshape(-1)
    m = margins(z, labels)
    easy, hard = [], []
    for i, y in enumerate(labels):
        d = directional_logits(head, f[i])
        order = np.argsort(-d, kind="stable")
        if d[order[0]] - d[order[1]] < min_gap:
            continue
        if m[i] > 0 and order[0] == y:
            easy.append(i)
        elif m[i] <= 0 and order[0] != y:
            hard.append(i)
    return np.array(easy, dtype=int), np.array(hard, dtype=int)
