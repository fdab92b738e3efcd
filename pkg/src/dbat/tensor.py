"""Dense float64 linear algebra and hand-written reverse-mode gradients for ReLU MLPs.

A "matrix" here is simply a 2-D ``numpy.ndarray`` of dtype float64. The
functions below add the shape checking and gradient plumbing the rest of the
package relies on; no autodiff graph is built.
"""

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when array shapes do not conform."""


class StaleCacheError(ValueError):
    """Raised when an activation cache does not belong to the given model/gradient."""


def as_matrix(a, name="array"):
    """Return ``a`` as a C-contiguous 2-D float64 array (1-D input becomes one row)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf")
    return np.ascontiguousarray(m)


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


@dataclass
class ActivationCache:
    # inputs[i] is the input to layer i; pre[i] its pre-activation output
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    signature: tuple = ()


def _signature(model):
    return tuple(w.shape for w, _ in model.layers)


def forward(model, batch):
    """Run the MLP on ``batch`` (n x in_dim). ReLU between layers, raw logits out."""
    x = as_matrix(batch, "batch")
    if x.shape[1] != model.in_dim:
        raise ShapeError(f"batch has {x.shape[1]} columns, model expects {model.in_dim}")
    cache = ActivationCache(signature=_signature(model))
    h = x
    last = len(model.layers) - 1
    for i, (w, b) in enumerate(model.layers):
        cache.inputs.append(h)
        z = h @ w + b
        cache.pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
    return h, cache


def backward(model, cache, dlogits):
    """Backpropagate ``dlogits`` through the network recorded in ``cache``.

    Returns ``(param_grads, dinput)`` where ``param_grads`` is a list of
    ``(dW, db)`` pairs aligned with ``model.layers``.
    """
    if cache.signature != _signature(model) or len(cache.pre) != len(model.layers):
        raise StaleCacheError("activation cache was produced by a different model")
    g = as_matrix(dlogits, "dlogits")
    if g.shape != cache.pre[-1].shape:
        raise StaleCacheError(f"dlogits shape {g.shape} != logits shape {cache.pre[-1].shape}")
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        w, _ = model.layers[i]
        if i < len(model.layers) - 1:
            g = g * (cache.pre[i] > 0.0)
        grads[i] = (cache.inputs[i].T @ g, g.sum(axis=0))
        g = g @ w.T
    return grads, g


def log_softmax(logits):
    z = as_matrix(logits, "logits")
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits):
    z = as_matrix(logits, "logits")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels, weights=None):
    """Weighted-mean cross entropy and its gradient with respect to the logits.

    loss = sum_i w_i * CE_i / sum_i w_i. ``weights`` defaults to all ones.
    """
    z = as_matrix(logits, "logits")
    n, k = z.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for {n} rows")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != n:
            raise ShapeError(f"{w.shape[0]} weights for {n} rows")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
    logp = log_softmax(z)
    rows = np.arange(n)
    ce = -logp[rows, labels]
    total = w.sum()
    loss = float(np.dot(w, ce) / total)
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    grad *= (w / total)[:, None]
    return loss, grad
