"""Normalized linear classifier head and temperature-scaled cross-entropy.

``alpha`` is the reciprocal temperature: probabilities are
``softmax(alpha * z)`` over the logits ``z``. The logit gradient of the
per-sample loss is ``alpha * (p - q)`` with ``q`` the one-hot target, and the
embedding gradient is ``alpha * sum_m (p_m - q_m) w_m``.
"""

import numpy as np

from .errors import ShapeError, StateError
from .layers import Parameter
from .numerics import DTYPE, as_matrix, log_softmax_temp, softmax_temp

WEIGHT_NORM_MODES = ("off", "l2")


def check_labels(labels, n_rows, n_classes):
    labels = np.asarray(labels)
    if labels.ndim == 0:
        labels = labels[None]
    if labels.shape != (n_rows,):
        raise ShapeError(f"expected {n_rows} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    return labels


def one_hot(labels, n_classes):
    q = np.zeros((len(labels), n_classes), dtype=DTYPE)
    q[np.arange(len(labels)), labels] = 1.0
    return q


class ClassifierHead:
    """Linear classifier ``z = f_hat W_hat + b`` over ``M`` classes.

    With ``weight_norm="l2"`` every column of ``W`` is divided by its norm
    before use, and the bias defaults to absent. ``alpha`` is a fixed
    per-phase constant, never learned.
    """

    def __init__(self, dim, n_classes, weight_norm="l2", alpha=16.0, bias=None):
        if weight_norm not in WEIGHT_NORM_MODES:
            raise ValueError(f"weight_norm must be one of {WEIGHT_NORM_MODES}, got {weight_norm!r}")
        if dim < 1 or n_classes < 1:
            raise ValueError("head dimensions must be positive")
        if bias is None:
            bias = weight_norm == "off"
        self.dim = dim
        self.n_classes = n_classes
        self.weight_norm = weight_norm
        self.alpha = alpha
        self.weight = Parameter("weight", np.zeros((dim, n_classes)))
        self.bias = Parameter("bias", np.zeros(n_classes)) if bias else None
        self._cache = None

    @property
    def alpha(self):
        return self._alpha

    @alpha.setter
    def alpha(self, value):
        if not value > 0:
            raise ValueError(f"alpha must be positive, got {value}")
        self._alpha = float(value)

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def effective_weight(self):
        """Weights as used in the forward pass (unit columns when normalized)."""
        w = self.weight.value
        if self.weight_norm == "off":
            return w
        return w / np.sqrt((w * w).sum(axis=0))

    def logits(self, f_hat):
        """Pure logit computation; no caching."""
        f_hat = np.asarray(f_hat, dtype=DTYPE)
        z = f_hat @ self.effective_weight()
        if self.bias is not None:
            z = z + self.bias.value
        return z

    def forward(self, f_hat):
        f_hat = as_matrix(f_hat, "embedding")
        if f_hat.shape[1] != self.dim:
            raise ShapeError(f"head expects {self.dim} embedding columns, got shape {f_hat.shape}")
        w = self.weight.value
        norms = np.sqrt((w * w).sum(axis=0)) if self.weight_norm == "l2" else None
        w_eff = w / norms if norms is not None else w
        z = f_hat @ w_eff
        if self.bias is not None:
            z = z + self.bias.value
        self._cache = (f_hat, w_eff, norms)
        return z

    def backward(self, grad_z):
        """Return the embedding gradient and accumulate parameter gradients."""
        if self._cache is None:
            raise StateError("ClassifierHead.backward called before forward")
        f_hat, w_eff, norms = self._cache
        grad_z = as_matrix(grad_z, "grad_z")
        if grad_z.shape != (f_hat.shape[0], self.n_classes):
            raise ShapeError(f"grad_z shape {grad_z.shape} does not match logits shape "
                             f"{(f_hat.shape[0], self.n_classes)}")
        grad_w_eff = f_hat.T @ grad_z
        if norms is None:
            self.weight.grad += grad_w_eff
        else:
            # column-wise L2-normalization Jacobian
            radial = (grad_w_eff * w_eff).sum(axis=0)
            self.weight.grad += (grad_w_eff - w_eff * radial) / norms
        if self.bias is not None:
            self.bias.grad += grad_z.sum(axis=0)
        return grad_z @ w_eff.T


def head_logits(head, f_hat):
    return head.forward(f_hat)


def grad_embedding(head, grad_z):
    return head.backward(grad_z)


def ce_loss(logits, labels, alpha):
    """Batch-mean cross-entropy of ``softmax(alpha * logits)`` against labels."""
    z = as_matrix(logits, "logits")
    labels = check_labels(labels, z.shape[0], z.shape[1])
    logp = log_softmax_temp(z, alpha)
    return float(-logp[np.arange(z.shape[0]), labels].mean())


def grad_logits(logits, labels, alpha):
    """Gradient of :func:`ce_loss` w.r.t. the logits: ``alpha (p - q) / batch``."""
    z = as_matrix(logits, "logits")
    labels = check_labels(labels, z.shape[0], z.shape[1])
    p = softmax_temp(z, alpha)
    return alpha * (p - one_hot(labels, z.shape[1])) / z.shape[0]


def embedding_gradient(head, f_row, label, alpha):
    """Per-sample ``d loss / d f`` for one embedding row, without touching state."""
    f_row = np.asarray(f_row, dtype=DTYPE).ravel()
    if f_row.shape[0] != head.dim:
        raise ShapeError(f"embedding has {f_row.shape[0]} entries, head expects {head.dim}")
    label = int(check_labels([label], 1, head.n_classes)[0])
    w = head.effective_weight()
    z = head.logits(f_row)
    coeff = softmax_temp(z, alpha)
    # p_y - 1 == -sum of the other probabilities, which keeps tiny values exact
    coeff[label] = -np.delete(coeff, label).sum()
    return alpha * (w @ coeff)


def gradient_magnitude(head, f_hat_row, label, alpha):
    """Euclidean norm of the per-sample embedding gradient at ``alpha``."""
    return float(np.linalg.norm(embedding_gradient(head, f_hat_row, label, alpha)))
