"""Projected gradient descent over l_inf / l_2 / l_1 balls with pluggable targets and losses."""

from dataclasses import dataclass

import numpy as np

from .inference import AttackSurface
from .model import MlpParams
from .tensor import ShapeError, as_matrix, log_softmax

NORMS = ("linf", "l2", "l1")
INITS = ("at_x", "random_in_ball")
TARGET_MODES = ("untargeted", "untargeted_masked_to_original", "random_target", "least_likely", "fixed")
LOSSES = ("cross_entropy", "cw_margin", "kl_to_reference", "logit_match")
REFERENCE_LOSSES = ("kl_to_reference", "logit_match")


@dataclass(frozen=True)
class AttackSpec:
    norm: str = "linf"
    epsilon: float = 8 / 255
    step: float = 1 / 255
    steps: int = 10
    init: str = "random_in_ball"
    target_mode: str = "untargeted"
    loss: str = "cross_entropy"
    target: int = -1
    clip_box: tuple = None

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}; choose from {NORMS}")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}; choose from {INITS}")
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"unknown target_mode {self.target_mode!r}; choose from {TARGET_MODES}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; choose from {LOSSES}")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.steps > 0 and not self.step > 0:
            raise ValueError("step must be > 0 when steps > 0")
        if self.target_mode == "fixed" and self.target < 0:
            raise ValueError("fixed target mode needs target >= 0")
        if self.loss in REFERENCE_LOSSES and self.target_mode != "untargeted":
            raise ValueError(f"{self.loss} is an untargeted divergence loss")
        if self.target_mode == "untargeted_masked_to_original" and self.loss != "cross_entropy":
            raise ValueError("the class-masked attack uses cross entropy")
        if self.clip_box is not None:
            lo, hi = self.clip_box
            if not lo < hi:
                raise ValueError(f"empty clip box {self.clip_box}")
            object.__setattr__(self, "clip_box", (float(lo), float(hi)))

    @property
    def targeted(self):
        return self.target_mode in ("random_target", "least_likely", "fixed")


def sample_random_target(y, num_classes, rng):
    """Uniform draw from {0, ..., 2C-1} minus {y, y + C}. ``y`` may be an array."""
    y = np.asarray(y, dtype=np.int64)
    if np.any(y < 0) or np.any(y >= num_classes):
        raise ValueError(f"natural label must lie in [0, {num_classes})")
    if 2 * num_classes - 2 < 1:
        raise ValueError("need at least two classes to pick a foreign target")
    rng = np.random.default_rng(rng)
    t = rng.integers(0, 2 * num_classes - 2, size=y.shape)
    t = t + (t >= y)
    t = t + (t >= y + num_classes)
    return int(t) if t.ndim == 0 else t


def _random_other(y, k, rng):
    t = rng.integers(0, k - 1, size=y.shape)
    return t + (t >= y)


def least_likely_target(surface, x):
    """Lowest-scoring class on the surface for each row of ``x`` (ties: lowest index)."""
    if isinstance(surface, MlpParams):
        surface = AttackSurface(surface)
    return np.argmin(surface.scores(x), axis=1)


def attack_loss(output, loss, labels=None, reference=None):
    """Batch-summed attack objective and its gradient with respect to ``output``.

    cross_entropy: -log softmax(output)[y]
    cw_margin:     max_{j != y} z_j - z_y
    kl_to_reference: KL(softmax(output) || softmax(reference))
    logit_match:   -||output - reference||^2
    ``reference`` holds logits (one row per example).
    """
    z = as_matrix(output, "output")
    n, k = z.shape
    rows = np.arange(n)
    if loss in REFERENCE_LOSSES:
        if reference is None:
            raise ValueError(f"{loss} needs reference logits")
        ref = as_matrix(reference, "reference")
        if ref.shape != z.shape:
            raise ShapeError(f"reference shape {ref.shape} != output shape {z.shape}")
        if loss == "logit_match":
            diff = z - ref
            return -float(np.sum(diff * diff)), -2.0 * diff
        lp = log_softmax(z)
        lr = log_softmax(ref)
        p = np.exp(lp)
        per = np.sum(p * (lp - lr), axis=1)
        return float(per.sum()), p * ((lp - lr) - per[:, None])
    if labels is None:
        raise ValueError(f"{loss} needs labels")
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != n or np.any(y < 0) or np.any(y >= k):
        raise ValueError(f"labels must be {n} ids in [0, {k})")
    if loss == "cross_entropy":
        lp = log_softmax(z)
        g = np.exp(lp)
        g[rows, y] -= 1.0
        return float(-lp[rows, y].sum()), g
    if loss == "cw_margin":
        masked = z.copy()
        masked[rows, y] = -np.inf
        j = np.argmax(masked, axis=1)
        g = np.zeros_like(z)
        g[rows, j] += 1.0
        g[rows, y] -= 1.0
        return float(np.sum(z[rows, j] - z[rows, y])), g
    raise ValueError(f"unknown loss {loss!r}")


def untargeted_masked_loss(logits, labels, num_classes):
    """Cross entropy restricted to the natural columns [0, C) of doubled logits."""
    z = as_matrix(logits, "logits")
    if z.shape[1] != 2 * num_classes:
        raise ShapeError(f"masked loss needs {2 * num_classes} logits, got {z.shape[1]}")
    value, g_nat = attack_loss(z[:, :num_classes], "cross_entropy", labels)
    g = np.zeros_like(z)
    g[:, :num_classes] = g_nat
    return value, g


def project_l1(delta, eps):
    """Euclidean projection of each row onto the l1 ball of radius ``eps`` (sort-based)."""
    d = as_matrix(delta, "delta").copy()
    a = np.abs(d)
    outside = a.sum(axis=1) > eps
    if not np.any(outside):
        return d
    if eps == 0:
        d[outside] = 0.0
        return d
    u = -np.sort(-a[outside], axis=1)
    css = np.cumsum(u, axis=1) - eps
    idx = np.arange(1, u.shape[1] + 1)
    rho = np.count_nonzero(u - css / idx > 0, axis=1) - 1
    theta = css[np.arange(u.shape[0]), rho] / (rho + 1)
    d[outside] = np.sign(d[outside]) * np.maximum(a[outside] - theta[:, None], 0.0)
    return d


def project_ball(delta, eps, norm):
    if norm == "linf":
        return np.clip(delta, -eps, eps)
    if norm == "l2":
        n = np.linalg.norm(delta, axis=1, keepdims=True)
        scale = np.where(n > eps, eps / np.where(n > 0, n, 1.0), 1.0)
        return delta * scale
    return project_l1(delta, eps)


def norm_of(delta, norm):
    delta = as_matrix(delta)
    if norm == "linf":
        return np.abs(delta).max(axis=1)
    if norm == "l2":
        return np.linalg.norm(delta, axis=1)
    return np.abs(delta).sum(axis=1)


def step_direction(grad, norm):
    """Unit steepest-ascent direction of ``grad`` for the given norm (zero where grad is zero)."""
    if norm == "linf":
        return np.sign(grad)
    if norm == "l2":
        n = np.linalg.norm(grad, axis=1, keepdims=True)
        return grad / np.where(n > 0, n, 1.0)
    rows = np.arange(grad.shape[0])
    j = np.argmax(np.abs(grad), axis=1)
    out = np.zeros_like(grad)
    out[rows, j] = np.sign(grad[rows, j])
    return out


def random_in_ball(shape, eps, norm, rng):
    n, d = shape
    if norm == "linf":
        return rng.uniform(-eps, eps, size=shape)
    if norm == "l2":
        g = rng.standard_normal(shape)
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * (eps * rng.uniform(size=(n, 1)) ** (1.0 / d))
    e = rng.exponential(size=(n, d + 1))
    mag = e[:, :d] / e.sum(axis=1, keepdims=True)
    return eps * mag * rng.choice([-1.0, 1.0], size=shape)


def _targets(surface, x, y, spec, rng):
    if spec.target_mode == "fixed":
        if spec.target >= surface.width:
            raise ValueError(f"fixed target {spec.target} outside surface width {surface.width}")
        return np.full(x.shape[0], spec.target, dtype=np.int64)
    if spec.target_mode == "least_likely":
        return least_likely_target(surface, x)
    if surface.raw_doubled:
        return sample_random_target(y, surface.num_classes, rng)
    return _random_other(y, surface.width, rng)


def pgd(surface, x, y, spec, rng=None, reference=None):
    """Run PGD from ``x`` and return the perturbed batch.

    ``surface`` is an AttackSurface (a bare MlpParams is wrapped as raw logits).
    Untargeted modes ascend the loss of the true label ``y``; targeted modes
    descend the loss of the chosen target. Every iterate is projected back onto
    the epsilon-ball around ``x`` and into ``spec.clip_box``.
    ``reference`` supplies logits for the divergence losses; for
    ``kl_to_reference`` it defaults to the surface output at ``x``.
    """
    if isinstance(surface, MlpParams):
        surface = AttackSurface(surface)
    x0 = as_matrix(x, "x")
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.shape[0] != x0.shape[0]:
        raise ShapeError(f"{y.shape[0]} labels for {x0.shape[0]} examples")
    box = spec.clip_box
    if box is not None and (x0.min() < box[0] or x0.max() > box[1]):
        raise ValueError(f"input lies outside clip box {box}")
    if spec.epsilon == 0:
        return x0.copy()
    rng = np.random.default_rng(rng)

    masked = spec.target_mode == "untargeted_masked_to_original"
    if masked and not surface.raw_doubled:
        raise ValueError("the class-masked attack needs the raw doubled logits")
    if spec.loss in REFERENCE_LOSSES and reference is None:
        if spec.loss == "logit_match":
            raise ValueError("logit_match needs reference logits")
        reference = surface.scores(x0)
    labels = _targets(surface, x0, y, spec, rng) if spec.targeted else y
    sign = -1.0 if spec.targeted else 1.0

    xa = x0.copy()
    if spec.init == "random_in_ball":
        xa = x0 + random_in_ball(x0.shape, spec.epsilon, spec.norm, rng)
        if box is not None:
            xa = np.clip(xa, *box)
    for _ in range(spec.steps):
        out, state = surface.forward(xa)
        if masked:
            _, g_out = untargeted_masked_loss(out, labels, surface.num_classes)
        else:
            _, g_out = attack_loss(out, spec.loss, labels, reference)
        g = surface.backward(state, g_out)
        xa = xa + sign * spec.step * step_direction(g, spec.norm)
        xa = x0 + project_ball(xa - x0, spec.epsilon, spec.norm)
        if box is not None:
            xa = np.clip(xa, *box)
    return xa
