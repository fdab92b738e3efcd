"""Collapsing 2C outputs to C classes, prediction, and the adversary's attack surfaces.

A doubled model emits 2C logits: columns [0, C) are the natural classes and
[C, 2C) their adversarial counterparts. Prediction aggregates each pair
(i, i + C) with a projection function and takes the argmax; a win by an
adversarial column therefore folds back to its natural class.
"""

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, as_matrix, backward, forward, log_softmax, softmax

PROJECTIONS = ("max", "sum", "mean", "logsumexp")
THREAT_KINDS = ("params_only", "params_plus_conjectured_projection", "realtime_adaptive")


def _check_projection(kind):
    if kind not in PROJECTIONS:
        raise ValueError(f"unknown projection {kind!r}; choose from {PROJECTIONS}")


def project_probs(v, kind="max"):
    """Aggregate each (i, i + C) pair. Accepts one vector or a batch of rows.

    ``max``/``sum``/``mean`` expect probabilities; ``logsumexp`` expects logits.
    """
    _check_projection(kind)
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape[-1] % 2:
        raise ShapeError(f"doubled output must have even width, got {arr.shape[-1]}")
    c = arr.shape[-1] // 2
    nat, adv = arr[..., :c], arr[..., c:]
    if kind == "max":
        return np.maximum(nat, adv)
    if kind == "sum":
        return nat + adv
    if kind == "mean":
        return 0.5 * (nat + adv)
    return np.logaddexp(nat, adv)


def _resolve_classes(model, num_classes):
    k = model.out_dim
    c = k // 2 if num_classes is None else int(num_classes)
    if k not in (c, 2 * c):
        raise ShapeError(f"model emits {k} logits, incompatible with {c} classes")
    return c, k == 2 * c


def predict_logits(logits, proj="max", num_classes=None):
    """Class ids in [0, C) from a batch of logits (ties go to the lowest index)."""
    z = as_matrix(logits, "logits")
    c = z.shape[1] // 2 if num_classes is None else int(num_classes)
    if z.shape[1] == c:
        return np.argmax(z, axis=1)
    if z.shape[1] != 2 * c:
        raise ShapeError(f"{z.shape[1]} logits incompatible with {c} classes")
    v = z if proj == "logsumexp" else softmax(z)
    return np.argmax(project_probs(v, proj), axis=1)


def predict(model, x, proj="max", num_classes=None):
    """Predicted natural class for every row of ``x``.

    ``num_classes`` defaults to half the model width. A model whose width equals
    ``num_classes`` is treated as an ordinary classifier (plain argmax).
    """
    c, _ = _resolve_classes(model, num_classes)
    logits, _ = forward(model, x)
    return predict_logits(logits, proj, c)


class AttackSurface:
    """The differentiable map x -> scores an adversary optimizes against.

    With ``projection=None`` the scores are the raw logits. Otherwise the doubled
    logits are collapsed to C log-space scores with the given projection:
    ``score_i = agg(log p_i, log p_{i+C})`` (max of log-probs for ``max``,
    log of the pair sum for ``sum``/``mean``), or ``logaddexp`` of the raw pair
    logits for ``logsumexp``.
    """

    def __init__(self, model, projection=None, num_classes=None):
        self.model = model
        self.num_classes, self.doubled = _resolve_classes(model, num_classes)
        if projection is not None:
            _check_projection(projection)
            if not self.doubled:
                projection = None
        self.projection = projection

    @property
    def width(self):
        if self.projection is None:
            return self.model.out_dim
        return self.num_classes

    @property
    def raw_doubled(self):
        """True when the scores are the full 2C logits of a doubled model."""
        return self.doubled and self.projection is None

    def forward(self, x):
        z, cache = forward(self.model, x)
        if self.projection is None:
            return z, (cache, None)
        c = self.num_classes
        if self.projection == "logsumexp":
            s = np.logaddexp(z[:, :c], z[:, c:])
            local = np.exp(np.concatenate([z[:, :c] - s, z[:, c:] - s], axis=1))
            return s, (cache, (local, None))
        lp = log_softmax(z)
        nat, adv = lp[:, :c], lp[:, c:]
        if self.projection == "max":
            take_nat = nat >= adv
            s = np.where(take_nat, nat, adv)
            local = np.concatenate([take_nat, ~take_nat], axis=1).astype(np.float64)
        else:
            s = np.logaddexp(nat, adv)
            local = np.exp(np.concatenate([nat - s, adv - s], axis=1))
            if self.projection == "mean":
                s = s - np.log(2.0)
        return s, (cache, (local, np.exp(lp)))

    def backward(self, state, dscores):
        cache, proj_state = state
        g = as_matrix(dscores, "dscores")
        if proj_state is not None:
            local, probs = proj_state
            g = np.concatenate([g, g], axis=1) * local
            if probs is not None:
                # through log_softmax: dz = dl - p * sum(dl)
                g = g - probs * g.sum(axis=1, keepdims=True)
        _, dx = backward(self.model, cache, g)
        return dx

    def scores(self, x):
        return self.forward(x)[0]


@dataclass(frozen=True)
class ThreatModel:
    kind: str = "realtime_adaptive"
    defender_projection: str = "max"
    conjectured_projection: str = "sum"

    def __post_init__(self):
        if self.kind not in THREAT_KINDS:
            raise ValueError(f"unknown threat model {self.kind!r}; choose from {THREAT_KINDS}")
        _check_projection(self.defender_projection)
        _check_projection(self.conjectured_projection)


def attack_surface(model, threat, num_classes=None):
    """Surface seen by an adversary with the knowledge described by ``threat``."""
    if threat.kind == "params_only":
        return AttackSurface(model, None, num_classes)
    if threat.kind == "params_plus_conjectured_projection":
        return AttackSurface(model, threat.conjectured_projection, num_classes)
    return AttackSurface(model, threat.defender_projection, num_classes)
