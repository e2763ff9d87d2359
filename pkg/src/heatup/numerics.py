"""Dense float64 arithmetic, seeded randomness and stable softmax primitives.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 with shape
``(rows, cols)``; the helpers here add shape checking with readable errors.
"""

import numpy as np

from .errors import ShapeError

DTYPE = np.float64


def as_matrix(a, name="array"):
    """Return ``a`` as a C-contiguous float64 2-D array."""
    arr = np.ascontiguousarray(a, dtype=DTYPE)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a, b):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(a):
    return np.ascontiguousarray(np.asarray(a, dtype=DTYPE).T)


def axpy(alpha, x, y):
    """Return ``alpha * x + y`` for equally shaped arrays."""
    x = np.asarray(x, dtype=DTYPE)
    y = np.asarray(y, dtype=DTYPE)
    if x.shape != y.shape:
        raise ShapeError(f"axpy operands differ in shape: {x.shape} vs {y.shape}")
    return alpha * x + y


def logsumexp(v, axis=None):
    """``log(sum(exp(v)))`` evaluated as ``m + log(sum(exp(v - m)))``.

    With ``axis=None`` the input must be a non-empty vector and a float is
    returned. With an integer axis the reduction is applied along it.
    """
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0:
        raise ValueError("logsumexp of an empty vector is undefined")
    if axis is None:
        v = v.ravel()
        m = v.max()
        return float(m + np.log(np.exp(v - m).sum()))
    m = v.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(v - m).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def log_softmax_temp(z, alpha):
    """Row-wise ``log p`` with ``p = softmax(alpha * z)``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    s = alpha * np.asarray(z, dtype=DTYPE)
    return s - np.expand_dims(logsumexp(s, axis=-1), -1)


def softmax_temp(z, alpha):
    """Temperature softmax ``exp(alpha z_m) / sum_j exp(alpha z_j)``.

    ``alpha`` is the reciprocal temperature. Works on a vector or row-wise on
    a matrix.
    """
    p = np.exp(log_softmax_temp(z, alpha))
    # renormalise so the sum is 1 to working precision
    return p / p.sum(axis=-1, keepdims=True)


class Rng:
    """Seeded random stream backed by numpy's PCG64 generator.

    PCG64 (O'Neill's permuted congruential generator, 128-bit LCG state with
    an XSL-RR output permutation) produces the same stream for the same seed
    on every platform numpy supports. The state can be exported to a JSON
    compatible dict and restored exactly.
    """

    def __init__(self, seed=0):
        self.seed = int(seed)
        self._bitgen = np.random.PCG64(self.seed)
        self.gen = np.random.Generator(self._bitgen)

    def uniform(self, low, high, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def random(self, size=None):
        return self.gen.random(size)

    def spawn(self, offset):
        """Independent child stream derived deterministically from the seed."""
        state = np.random.SeedSequence([self.seed, int(offset)]).generate_state(1, np.uint64)
        return Rng(int(state[0]))

    def get_state(self):
        return self._bitgen.state

    def set_state(self, state):
        self._bitgen.state = state
