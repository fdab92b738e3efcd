"""Training loops: double-boundary adversarial training plus AT, TRADES and natural baselines."""

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .attacks import AttackSpec, pgd
from .data import adv_label
from .inference import AttackSurface, ThreatModel
from .model import SwaState, init_params, swa_update
from .tensor import backward, forward, log_softmax, softmax_cross_entropy

log = logging.getLogger(__name__)

METHODS = ("dbat", "at", "trades", "natural")
HISTORY_COLUMNS = ("epoch", "train_loss", "natural_acc", "robust_acc")


class TrainingDiverged(RuntimeError):
    """The training loss became NaN or infinite."""


def _default_train_attack():
    return AttackSpec(norm="linf", epsilon=1.2, step=0.2, steps=6, init="at_x", target_mode="random_target")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "dbat"
    lam: float = 1.0
    beta: float = 6.0
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    epochs: int = 5
    batch_size: int = 128
    lr_decay_epochs: tuple = ()
    seed: int = 0
    attack: AttackSpec = field(default_factory=_default_train_attack)
    swa_enabled: bool = True
    swa_start: int = 0
    hidden: tuple = (32, 32)
    lambda_warmup_epochs: int = 0
    defender_projection: str = "max"
    history_eval_size: int = 1000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.method == "dbat" and not self.lam > 0:
            raise ValueError("lambda must be > 0 for dbat")
        if self.method == "trades" and not self.beta > 0:
            raise ValueError("beta must be > 0 for trades")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0 or self.swa_start < 0 or self.lambda_warmup_epochs < 0:
            raise ValueError("epochs, swa_start and lambda_warmup_epochs must be >= 0")


class TrainResult(NamedTuple):
    model: object
    swa: SwaState
    history: list


class BatchLoss(NamedTuple):
    loss: float
    grads: list
    info: dict


def natural_batch_loss(model, x, y):
    logits, cache = forward(model, x)
    loss, dz = softmax_cross_entropy(logits, y)
    grads, _ = backward(model, cache, dz)
    return BatchLoss(loss, grads, {})


def dbat_batch_loss(model, x, y, attack, lam, num_classes, rng=None, x_adv=None):
    """One double-boundary objective evaluation.

    Each natural example is attacked (targeted PGD against the live doubled
    logits by default), the result is labeled ``y + C``, and the weighted cross
    entropy over the concatenated batch is returned: natural rows carry weight 1
    and adversarial rows weight ``lam``, normalized by the weight sum.
    """
    y = np.asarray(y, dtype=np.int64)
    if x_adv is None:
        x_adv = pgd(AttackSurface(model, None, num_classes), x, y, attack, rng)
    xs = np.concatenate([x, x_adv], axis=0)
    ys = np.concatenate([y, adv_label(y, num_classes)])
    m = y.shape[0]
    w = np.concatenate([np.ones(m), np.full(m, float(lam))])
    logits, cache = forward(model, xs)
    loss, dz = softmax_cross_entropy(logits, ys, w)
    grads, _ = backward(model, cache, dz)
    ce = -log_softmax(logits)[np.arange(2 * m), ys]
    info = {
        "x_adv": x_adv,
        "labels": ys,
        "weights": w,
        "natural_sum": float(ce[:m].sum()),
        "adversarial_sum": float(lam * ce[m:].sum()),
        "weight_sum": float(w.sum()),
    }
    return BatchLoss(loss, grads, info)


def at_batch_loss(model, x, y, attack, rng=None, x_adv=None):
    """Madry-style objective: cross entropy on untargeted PGD examples only."""
    y = np.asarray(y, dtype=np.int64)
    if x_adv is None:
        spec = dataclasses.replace(attack, target_mode="untargeted")
        x_adv = pgd(AttackSurface(model, None, model.out_dim), x, y, spec, rng)
    logits, cache = forward(model, x_adv)
    loss, dz = softmax_cross_entropy(logits, y)
    grads, _ = backward(model, cache, dz)
    return BatchLoss(loss, grads, {"x_adv": x_adv})


def trades_batch_loss(model, x, y, attack, beta, rng=None, x_adv=None):
    """CE(f(x), y) + beta * KL(p(x') || p(x)) with x' maximizing the KL term.

    The KL gradient vanishes at x' = x, so a start at x is replaced by a
    random start inside the ball.
    """
    y = np.asarray(y, dtype=np.int64)
    m = y.shape[0]
    if x_adv is None:
        spec = dataclasses.replace(attack, target_mode="untargeted", loss="kl_to_reference")
        if spec.init == "at_x":
            spec = dataclasses.replace(spec, init="random_in_ball")
        x_adv = pgd(AttackSurface(model, None, model.out_dim), x, y, spec, rng)
    logits, cache = forward(model, np.concatenate([x, x_adv], axis=0))
    z_nat, z_adv = logits[:m], logits[m:]
    ce, dz_nat = softmax_cross_entropy(z_nat, y)
    lp_nat, lp_adv = log_softmax(z_nat), log_softmax(z_adv)
    p_nat, p_adv = np.exp(lp_nat), np.exp(lp_adv)
    per = np.sum(p_adv * (lp_adv - lp_nat), axis=1)
    kl = float(per.mean())
    dz_adv = beta * p_adv * ((lp_adv - lp_nat) - per[:, None]) / m
    dz_nat = dz_nat + beta * (p_nat - p_adv) / m
    grads, _ = backward(model, cache, np.concatenate([dz_nat, dz_adv], axis=0))
    return BatchLoss(ce + beta * kl, grads, {"x_adv": x_adv, "natural_ce": ce, "kl": kl})


class SGD:
    """SGD with heavy-ball momentum and L2 weight decay (decay added to the gradient)."""

    def __init__(self, model, lr, momentum=0.0, weight_decay=0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers]

    def step(self, model, grads):
        for (w, b), (gw, gb), (vw, vb) in zip(model.layers, grads, self.velocity):
            for p, g, v in ((w, gw, vw), (b, gb, vb)):
                if self.weight_decay:
                    g = g + self.weight_decay * p
                v *= self.momentum
                v += g
                p -= self.lr * v


def _lr_at(config, epoch):
    return config.lr * 0.1 ** sum(1 for e in config.lr_decay_epochs if epoch >= e)


def _lambda_at(config, epoch):
    if config.lambda_warmup_epochs <= 0:
        return config.lam
    return config.lam * min(1.0, (epoch + 1) / config.lambda_warmup_epochs)


def _out_dim(config, dataset):
    return 2 * dataset.num_classes if config.method == "dbat" else dataset.num_classes


def history_attack(config):
    """Untargeted, deterministic version of the training attack used for history rows."""
    return dataclasses.replace(config.attack, target_mode="untargeted", loss="cross_entropy", init="at_x")


def train(config, dataset, model=None):
    """Train on ``dataset`` according to ``config``; returns (model, swa, history)."""
    from .metrics import natural_accuracy, robust_accuracy

    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    c = dataset.num_classes
    init_seq, shuffle_seq, attack_seq, eval_seq = np.random.SeedSequence(config.seed).spawn(4)
    if model is None:
        dims = (dataset.dim,) + tuple(config.hidden) + (_out_dim(config, dataset),)
        model = init_params(dims, np.random.default_rng(init_seq))
    elif model.out_dim != _out_dim(config, dataset) or model.in_dim != dataset.dim:
        raise ValueError(f"model dims {model.dims} incompatible with {config.method} on this dataset")

    shuffle_rng = np.random.default_rng(shuffle_seq)
    attack_rng = np.random.default_rng(attack_seq)
    eval_idx = np.random.default_rng(eval_seq).permutation(len(dataset))[: config.history_eval_size]
    eval_set = dataset.subset(np.sort(eval_idx))
    threat = ThreatModel("realtime_adaptive", config.defender_projection)

    opt = SGD(model, config.lr, config.momentum, config.weight_decay)
    swa = SwaState.for_model(model)
    x_all, y_all = dataset.features, dataset.labels
    history = []
    step = 0
    for epoch in range(config.epochs):
        opt.lr = _lr_at(config, epoch)
        lam = _lambda_at(config, epoch)
        order = shuffle_rng.permutation(len(dataset))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            x, y = x_all[idx], y_all[idx]
            if config.method == "dbat":
                out = dbat_batch_loss(model, x, y, config.attack, lam, c, attack_rng)
            elif config.method == "at":
                out = at_batch_loss(model, x, y, config.attack, attack_rng)
            elif config.method == "trades":
                out = trades_batch_loss(model, x, y, config.attack, config.beta, attack_rng)
            else:
                out = natural_batch_loss(model, x, y)
            if not np.isfinite(out.loss):
                raise TrainingDiverged(f"non-finite loss {out.loss} at epoch {epoch}, step {step}")
            opt.step(model, out.grads)
            if config.swa_enabled and step >= config.swa_start:
                swa_update(swa, model)
            total += out.loss * len(idx)
            count += len(idx)
            step += 1
        scored = swa.averaged if config.swa_enabled and swa.k > 0 else model
        nat = natural_accuracy(scored, eval_set, config.defender_projection)
        rob = robust_accuracy(scored, eval_set, history_attack(config), threat, seed=config.seed)
        row = {"epoch": epoch + 1, "train_loss": total / count, "natural_acc": nat, "robust_acc": rob}
        log.info("epoch %d loss %.4f nat %.4f rob %.4f", epoch + 1, row["train_loss"], nat, rob)
        history.append(row)
    return TrainResult(model, swa, history)


def write_history_csv(history, path, header_comment=None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([row["epoch"]] + [repr(float(row[k])) for k in HISTORY_COLUMNS[1:]])


def eval_model(result, config):
    """Model used for evaluation: the weight average when SWA ran, else the live weights."""
    if config.swa_enabled and result.swa.k > 0:
        return result.swa.averaged
    return result.model

