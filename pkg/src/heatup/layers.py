"""Layers with hand-written forward/backward passes.

Every layer caches what its backward pass needs during ``forward`` and raises
:class:`StateError` when ``backward`` is called without it. Parameter
gradients accumulate until ``zero_grad`` is called.
"""

import numpy as np

from .errors import DegenerateInputError, ShapeError, StateError
from .numerics import DTYPE, as_matrix


class Parameter:
    """A trainable array paired with its gradient buffer."""

    def __init__(self, name, value):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=DTYPE)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


class LinearLayer:
    def __init__(self, in_dim, out_dim, bias=True):
        if in_dim < 1 or out_dim < 1:
            raise ValueError(f"layer widths must be positive, got {in_dim}x{out_dim}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter("weight", np.zeros((in_dim, out_dim)))
        self.bias = Parameter("bias", np.zeros(out_dim)) if bias else None
        self._x = None

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x):
        x = as_matrix(x, "input")
        if x.shape[1] != self.in_dim:
            raise ShapeError(f"linear layer expects {self.in_dim} input columns, got shape {x.shape}")
        self._x = x
        out = x @ self.weight.value
        if self.bias is not None:
            out = out + self.bias.value
        return out

    def backward(self, grad_out):
        if self._x is None:
            raise StateError("LinearLayer.backward called before forward")
        grad_out = as_matrix(grad_out, "grad_out")
        if grad_out.shape != (self._x.shape[0], self.out_dim):
            raise ShapeError(
                f"grad_out shape {grad_out.shape} does not match output shape "
                f"{(self._x.shape[0], self.out_dim)}")
        self.weight.grad += self._x.T @ grad_out
        if self.bias is not None:
            self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value.T


class ReLU:
    def __init__(self):
        self._mask = None

    def parameters(self):
        return []

    def zero_grad(self):
        pass

    def forward(self, x):
        x = as_matrix(x, "input")
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out):
        if self._mask is None:
            raise StateError("ReLU.backward called before forward")
        grad_out = as_matrix(grad_out, "grad_out")
        if grad_out.shape != self._mask.shape:
            raise ShapeError(f"grad_out shape {grad_out.shape} != cached shape {self._mask.shape}")
        return np.where(self._mask, grad_out, 0.0)


class L2NormLayer:
    """Row-wise projection onto the unit sphere, ``f / ||f||``.

    The backward pass applies the Jacobian ``(I - f_hat f_hat^T) / ||f||``,
    so returned gradients are orthogonal to the input row and shrink as its
    norm grows.
    """

    def __init__(self, epsilon=1e-12):
        self.epsilon = epsilon
        self._norms = None
        self._out = None

    def parameters(self):
        return []

    def zero_grad(self):
        pass

    def forward(self, f):
        f = as_matrix(f, "input")
        norms = np.sqrt((f * f).sum(axis=1))
        bad = np.flatnonzero(~(norms > self.epsilon))
        if bad.size:
            i = int(bad[0])
            raise DegenerateInputError(
                f"row {i} has norm {norms[i]:.3g} <= epsilon {self.epsilon:g}", row=i)
        self._norms = norms
        self._out = f / norms[:, None]
        return self._out

    def backward(self, grad_out):
        if self._out is None:
            raise StateError("L2NormLayer.backward called before forward")
        g = as_matrix(grad_out, "grad_out")
        if g.shape != self._out.shape:
            raise ShapeError(f"grad_out shape {g.shape} != cached shape {self._out.shape}")
        u = self._out
        radial = (g * u).sum(axis=1, keepdims=True)
        return (g - radial * u) / self._norms[:, None]


class BatchNormNoScale:
    """Batch normalization without learned scale or shift, divided by sqrt(k).

    In train mode each column is standardized with the batch mean and biased
    batch variance; the result is divided by ``sqrt(k)`` so rows have squared
    norm close to 1 on average. Infer mode uses the running estimates.
    """

    def __init__(self, dim, epsilon=1e-5, momentum=0.9):
        if dim < 1:
            raise ValueError("batch-norm dimension must be positive")
        if not 0.0 < momentum < 1.0:
            raise ValueError(f"momentum must lie in (0, 1), got {momentum}")
        self.dim = dim
        self.epsilon = epsilon
        self.momentum = momentum
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.training = True
        self._cache = None

    def parameters(self):
        return []

    def zero_grad(self):
        pass

    def train(self):
        self.training = True

    def eval(self):
        self.training = False

    def forward(self, f):
        f = as_matrix(f, "input")
        if f.shape[1] != self.dim:
            raise ShapeError(f"batch norm expects {self.dim} columns, got shape {f.shape}")
        scale = 1.0 / np.sqrt(self.dim)
        if not self.training:
            self._cache = None
            return (f - self.running_mean) / np.sqrt(self.running_var + self.epsilon) * scale
        n = f.shape[0]
        if n < 2:
            raise ValueError(f"train-mode batch norm needs at least 2 rows, got {n}")
        mean = f.mean(axis=0)
        centered = f - mean
        var = (centered * centered).mean(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = centered * inv_std
        self.running_mean = self.momentum * self.running_mean + (1.0 - self.momentum) * mean
        self.running_var = self.momentum * self.running_var + (1.0 - self.momentum) * var
        self._cache = (xhat, inv_std, scale)
        return xhat * scale

    def backward(self, grad_out):
        if not self.training:
            raise StateError("BatchNormNoScale.backward is undefined in infer mode")
        if self._cache is None:
            raise StateError("BatchNormNoScale.backward called before a train-mode forward")
        xhat, inv_std, scale = self._cache
        g = as_matrix(grad_out, "grad_out")
        if g.shape != xhat.shape:
            raise ShapeError(f"grad_out shape {g.shape} != cached shape {xhat.shape}")
        n = g.shape[0]
        dxhat = g * scale
        return inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
