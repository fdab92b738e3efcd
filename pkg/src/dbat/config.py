"""Flat ``section.key = value`` experiment configuration, presets and digests."""

import dataclasses
import difflib
import hashlib
from dataclasses import dataclass

from .attacks import AttackSpec
from .inference import ThreatModel
from .trainers import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration key or value."""


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _words(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _centers(text):
    return tuple(_floats(c) for c in text.split(";") if c.strip())


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ";".join(_fmt(v) for v in value)
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (parser, default)
SCHEMA = {
    "seed": (int, 0),
    "output_dir": (str, "out"),
    "data.source": (str, "blobs"),
    "data.path": (str, ""),
    "data.test_path": (str, ""),
    "data.label_column": (str, "label"),
    "data.centers": (_centers, ((-1.0, 0.0), (1.0, 0.0))),
    "data.std": (float, 0.1),
    "data.n_per_blob": (int, 10000),
    "data.test_n_per_blob": (int, 2000),
    "data.seed": (int, 1),
    "model.hidden": (_ints, (32, 32)),
    "train.method": (str, "dbat"),
    "train.lambda": (float, 1.0),
    "train.beta": (float, 6.0),
    "train.lr": (float, 0.05),
    "train.momentum": (float, 0.9),
    "train.weight_decay": (float, 0.0),
    "train.epochs": (int, 10),
    "train.batch_size": (int, 128),
    "train.lr_decay_epochs": (_ints, (7,)),
    "train.swa_enabled": (_bool, True),
    "train.swa_start": (int, 0),
    "train.lambda_warmup_epochs": (int, 0),
    "train.history_eval_size": (int, 1000),
    "attack.norm": (str, "linf"),
    "attack.epsilon": (float, 1.2),
    "attack.step": (float, 0.2),
    "attack.steps": (int, 6),
    "attack.init": (str, "at_x"),
    "attack.target_mode": (str, "random_target"),
    "attack.loss": (str, "cross_entropy"),
    "attack.target": (int, -1),
    "attack.clip_lo": (_opt_float, None),
    "attack.clip_hi": (_opt_float, None),
    "eval.norm": (str, "linf"),
    "eval.epsilon": (float, 1.2),
    "eval.step": (float, 0.1),
    "eval.steps": (int, 20),
    "eval.init": (str, "random_in_ball"),
    "eval.loss": (str, "cross_entropy"),
    "eval.threats": (_words, ("params_only", "params_plus_conjectured_projection", "realtime_adaptive")),
    "eval.projection": (str, "max"),
    "eval.conjectured_projection": (str, "sum"),
    "eval.use_swa": (_bool, True),
    "eval.seed": (int, 0),
    "eval.lambdas": (_floats, ()),
    "boundary.n_directions": (int, 1000),
    "boundary.growth_factor": (float, 0.002),
    "boundary.n_points": (int, 100),
    "boundary.max_radius": (_opt_float, None),
    "boundary.bins": (int, 20),
    "raster.bounds": (_floats, (-3.0, 3.0, -3.0, 3.0)),
    "raster.resolution": (int, 100),
    "blobs.methods": (_words, ("at", "dbat")),
}

# One epoch of 20k blob points at batch 128 is 157 steps; averaging starts after it.
_ROBUST_BLOBS = {
    "data.centers": "-1.3,0;1.3,0",
    "train.swa_start": "157",
}

ALIASES = {"lambda": "train.lambda", "beta": "train.beta", "epsilon": "attack.epsilon"}

# Keys that say where results go rather than what is computed; left out of the digest.
NON_SEMANTIC = ("output_dir",)

PRESETS = {
    "fig3-blobs": {"train.swa_start": "157"},
    "threat-ladder": dict(_ROBUST_BLOBS),
    "lambda-sweep": dict(_ROBUST_BLOBS, **{
        "eval.lambdas": "0.1,1,8",
        "eval.threats": "realtime_adaptive",
    }),
    "boundary-hist": {
        "train.method": "natural",
        "train.swa_enabled": "false",
        "data.n_per_blob": "2000",
        "data.test_n_per_blob": "500",
    },
    "vc-claims": {},
}


@dataclass
class ExperimentConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def canonical(self, semantic_only=False):
        keys = [k for k in sorted(self.values) if not (semantic_only and k in NON_SEMANTIC)]
        return "".join(f"{k} = {_fmt(self.values[k])}\n" for k in keys)

    def digest(self):
        return hashlib.sha256(self.canonical(semantic_only=True).encode()).hexdigest()[:16]

    def with_overrides(self, overrides):
        return parse_config(overrides, base=self)

    def train_config(self, **changes):
        v = self.values
        cfg = TrainConfig(
            method=v["train.method"], lam=v["train.lambda"], beta=v["train.beta"], lr=v["train.lr"],
            momentum=v["train.momentum"], weight_decay=v["train.weight_decay"], epochs=v["train.epochs"],
            batch_size=v["train.batch_size"], lr_decay_epochs=v["train.lr_decay_epochs"], seed=v["seed"],
            attack=self.train_attack(), swa_enabled=v["train.swa_enabled"], swa_start=v["train.swa_start"],
            hidden=v["model.hidden"], lambda_warmup_epochs=v["train.lambda_warmup_epochs"],
            defender_projection=v["eval.projection"], history_eval_size=v["train.history_eval_size"],
        )
        return dataclasses.replace(cfg, **changes) if changes else cfg

    def _clip_box(self):
        lo, hi = self.values["attack.clip_lo"], self.values["attack.clip_hi"]
        if lo is None and hi is None:
            return None
        if lo is None or hi is None:
            raise ConfigError("attack.clip_lo and attack.clip_hi must be set together")
        return (lo, hi)

    def train_attack(self):
        v = self.values
        return AttackSpec(norm=v["attack.norm"], epsilon=v["attack.epsilon"], step=v["attack.step"],
                          steps=v["attack.steps"], init=v["attack.init"], target_mode=v["attack.target_mode"],
                          loss=v["attack.loss"], target=v["attack.target"], clip_box=self._clip_box())

    def eval_attack(self):
        v = self.values
        return AttackSpec(norm=v["eval.norm"], epsilon=v["eval.epsilon"], step=v["eval.step"],
                          steps=v["eval.steps"], init=v["eval.init"], target_mode="untargeted",
                          loss=v["eval.loss"], clip_box=self._clip_box())

    def threats(self):
        v = self.values
        return [ThreatModel(k, v["eval.projection"], v["eval.conjectured_projection"]) for k in v["eval.threats"]]


def defaults():
    return ExperimentConfig({k: d for k, (_, d) in SCHEMA.items()})


def _parse_lines(text):
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        k, v = line.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return pairs


def parse_config(source, base=None):
    """Apply ``key = value`` pairs (text or mapping) on top of ``base`` (defaults if None)."""
    pairs = _parse_lines(source) if isinstance(source, str) else list(source.items())
    values = dict((base or defaults()).values)
    for key, raw in pairs:
        key = ALIASES.get(key, key)
        if key not in SCHEMA:
            close = difflib.get_close_matches(key, list(SCHEMA) + list(ALIASES), n=1, cutoff=0.6)
            hint = f" (did you mean {close[0]!r}?)" if close else ""
            raise ConfigError(f"unknown key {key!r}{hint}")
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    cfg = ExperimentConfig(values)
    try:
        cfg.train_config()
        cfg.eval_attack()
        cfg.threats()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path=None, preset=None, overrides=()):
    """Resolve preset, then file, then ``key=value`` overrides, in that order."""
    cfg = defaults()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg = parse_config(PRESETS[preset], cfg)
    if path is not None:
        with open(path) as fh:
            cfg = parse_config(fh.read(), cfg)
    if overrides:
        cfg = parse_config("\n".join(overrides), cfg)
    return cfg
