"""``dbat`` command line: train, eval, attack, blobs, boundary-dist, vc-demo."""

import argparse
import csv
import logging
import os
import sys

from threadpoolctl import threadpool_limits

from . import __version__
from .config import PRESETS, ConfigError, load_config
from .data import load_csv, make_blobs
from .inference import predict
from .metrics import (EvalReport, adversarial_examples, boundary_distance_histogram, decision_boundary_raster,
                      natural_accuracy, robust_accuracy, write_raster_csv, write_reports_csv)
from .model import CheckpointError, load_checkpoint, save_checkpoint
from .trainers import TrainingDiverged, train, write_history_csv
from .vc import BudgetExceeded, claim_suite, homogeneous_dimension_report

log = logging.getLogger("dbat")


def header(cfg):
    return f"dbat {__version__} seed={cfg['seed']} config={cfg.digest()}"


def load_data(cfg):
    """(train, test) datasets described by the ``data.*`` keys."""
    if cfg["data.source"] == "blobs":
        centers, std, seed = cfg["data.centers"], cfg["data.std"], cfg["data.seed"]
        return (make_blobs(centers, std, cfg["data.n_per_blob"], seed),
                make_blobs(centers, std, cfg["data.test_n_per_blob"], seed + 1))
    if cfg["data.source"] == "csv":
        if not cfg["data.path"]:
            raise ConfigError("data.source = csv needs data.path")
        tr = load_csv(cfg["data.path"], cfg["data.label_column"])
        te = load_csv(cfg["data.test_path"], cfg["data.label_column"]) if cfg["data.test_path"] else tr
        if te.num_classes != tr.num_classes or te.dim != tr.dim:
            raise ValueError("train and test CSV disagree on classes or feature count")
        return tr, te
    raise ConfigError(f"unknown data.source {cfg['data.source']!r}; choose from ['blobs', 'csv']")


def _resolve_clip(cfg, dataset):
    # pixel-like CSV features get a [0, 1] box unless one is configured
    if cfg["data.source"] != "csv" or cfg["attack.clip_lo"] is not None or cfg["attack.clip_hi"] is not None:
        return cfg
    x = dataset.features
    if x.size and x.min() >= 0.0 and x.max() <= 1.0:
        return cfg.with_overrides({"attack.clip_lo": 0.0, "attack.clip_hi": 1.0})
    return cfg


def prepare(cfg):
    train_set, test_set = load_data(cfg)
    return _resolve_clip(cfg, train_set), train_set, test_set


def _out(cfg, name):
    os.makedirs(cfg["output_dir"], exist_ok=True)
    return os.path.join(cfg["output_dir"], name)


def write_resolved_config(cfg, path):
    # output_dir is left out so reruns into different directories stay byte-identical
    with open(path, "w") as fh:
        fh.write(f"# {header(cfg)}\n")
        fh.write(cfg.canonical(semantic_only=True))


def evaluate(cfg, model, dataset):
    """Natural accuracy plus robust accuracy under every configured threat model."""
    attack = cfg.eval_attack()
    nat = natural_accuracy(model, dataset, cfg["eval.projection"])
    robust = {}
    for threat in cfg.threats():
        if attack.epsilon == 0:
            robust[threat.kind] = nat
        else:
            robust[threat.kind] = robust_accuracy(model, dataset, attack, threat, cfg["eval.seed"])
    return EvalReport(nat, robust, len(dataset), cfg["seed"], cfg.digest())


def _check_classes(model, dataset):
    c = dataset.num_classes
    if model.out_dim not in (c, 2 * c) or model.in_dim != dataset.dim:
        raise ValueError(f"checkpoint has dims {model.dims} but the data has {dataset.dim} features "
                         f"and {c} classes")


def _scored_model(cfg, model, swa):
    if cfg["eval.use_swa"] and swa is not None and swa.k > 0:
        return swa.averaged
    return model


def run_train(cfg, train_set=None):
    if train_set is None:
        cfg, train_set, _ = prepare(cfg)
    tc = cfg.train_config()
    return train(tc, train_set), tc


def cmd_train(cfg):
    cfg, train_set, _ = prepare(cfg)
    result, tc = run_train(cfg, train_set)
    save_checkpoint(result.model, result.swa if tc.swa_enabled else None, _out(cfg, "model.ckpt"))
    write_history_csv(result.history, _out(cfg, "history.csv"), header(cfg))
    write_resolved_config(cfg, _out(cfg, "config.resolved"))
    return result


def lambda_sweep(cfg, train_set, test_set):
    """Train and evaluate once per ``eval.lambdas`` value; returns [(lam, report)]."""
    out = []
    for lam in cfg["eval.lambdas"]:
        sub = cfg.with_overrides({"train.lambda": lam})
        result, tc = run_train(sub, train_set)
        model = _scored_model(sub, result.model, result.swa if tc.swa_enabled else None)
        out.append((lam, evaluate(sub, model, test_set)))
    return out


def cmd_eval(cfg, checkpoint=None):
    cfg, train_set, test_set = prepare(cfg)
    if checkpoint is not None:
        model, swa = load_checkpoint(checkpoint)
        _check_classes(model, test_set)
        report = evaluate(cfg, _scored_model(cfg, model, swa), test_set)
        write_reports_csv([report], _out(cfg, "report.csv"), header(cfg))
        return [report]
    if cfg["eval.lambdas"]:
        reports = []
        for lam, rep in lambda_sweep(cfg, train_set, test_set):
            write_reports_csv([rep], _out(cfg, f"report_lambda_{lam!r}.csv"), header(cfg), [("lambda", [lam])])
            reports.append(rep)
        return reports
    result, tc = run_train(cfg, train_set)
    model = _scored_model(cfg, result.model, result.swa if tc.swa_enabled else None)
    report = evaluate(cfg, model, test_set)
    write_reports_csv([report], _out(cfg, "report.csv"), header(cfg))
    return [report]


def cmd_attack(cfg, checkpoint):
    """Write adversarial versions of the test set under the first configured threat model."""
    cfg, _, test_set = prepare(cfg)
    model, swa = load_checkpoint(checkpoint)
    _check_classes(model, test_set)
    model = _scored_model(cfg, model, swa)
    threat = cfg.threats()[0]
    x_adv = adversarial_examples(model, test_set, cfg.eval_attack(), threat, cfg["eval.seed"])
    pred = predict(model, x_adv, threat.defender_projection, test_set.num_classes)
    path = _out(cfg, "adversarial.csv")
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header(cfg)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(test_set.dim)] + ["label", "pred"])
        for row, y, p in zip(x_adv, test_set.labels, pred):
            w.writerow([repr(float(v)) for v in row] + [int(y), int(p)])
    return x_adv


def cmd_blobs(cfg):
    """Train each of ``blobs.methods`` and write decision rasters plus a summary report."""
    cfg, train_set, test_set = prepare(cfg)
    if train_set.dim != 2:
        raise ValueError("blobs rasters need 2-D data")
    bounds, res, proj = cfg["raster.bounds"], cfg["raster.resolution"], cfg["eval.projection"]
    reports, methods, rasters = [], [], {}
    for method in cfg["blobs.methods"]:
        sub = cfg.with_overrides({"train.method": method})
        result, tc = run_train(sub, train_set)
        model = _scored_model(sub, result.model, result.swa if tc.swa_enabled else None)
        save_checkpoint(result.model, result.swa if tc.swa_enabled else None, _out(cfg, f"blobs_{method}.ckpt"))
        grid = decision_boundary_raster(model, bounds, res, proj, False, train_set.num_classes)
        write_raster_csv(grid, _out(cfg, f"raster_{method}.csv"), bounds, header(cfg))
        rasters[method] = grid
        if model.out_dim == 2 * train_set.num_classes:
            full = decision_boundary_raster(model, bounds, res, proj, True, train_set.num_classes)
            write_raster_csv(full, _out(cfg, f"raster_{method}_all2C.csv"), bounds, header(cfg))
            rasters[f"{method}_all2C"] = full
        reports.append(evaluate(sub, model, test_set))
        methods.append(method)
    write_reports_csv(reports, _out(cfg, "blobs_report.csv"), header(cfg), [("method", methods)])
    return reports, rasters


def cmd_boundary_dist(cfg, checkpoint=None):
    cfg, train_set, test_set = prepare(cfg)
    if checkpoint is not None:
        model, swa = load_checkpoint(checkpoint)
        _check_classes(model, test_set)
        model = _scored_model(cfg, model, swa)
    else:
        result, tc = run_train(cfg, train_set)
        model = _scored_model(cfg, result.model, result.swa if tc.swa_enabled else None)
    hist = boundary_distance_histogram(model, test_set, cfg["boundary.n_directions"], cfg["boundary.growth_factor"],
                                       cfg["eval.projection"], cfg["boundary.max_radius"], cfg["boundary.n_points"],
                                       cfg["boundary.bins"], cfg["eval.seed"])
    hist.write_csv(_out(cfg, "boundary_hist.csv"), header(cfg))
    return hist


def cmd_vcdemo(cfg, stream=None):
    stream = stream or sys.stdout
    results = claim_suite()
    dims = homogeneous_dimension_report()
    path = _out(cfg, "vc_claims.csv")
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header(cfg)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["claim", "expected", "observed", "result"])
        for r in results:
            w.writerow([r.name, r.expected, r.observed, "PASS" if r.passed else "FAIL"])
        for d, n, shattered in dims:
            w.writerow([f"homogeneous halfspaces, d={d}, {n} points", "", shattered, "REPORT"])
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  expected={r.expected} observed={r.observed}", file=stream)
    for d, n, shattered in dims:
        print(f"INFO  homogeneous halfspaces d={d} n={n} shattered={shattered}", file=stream)
    return results


def build_parser():
    p = argparse.ArgumentParser(prog="dbat", description=__doc__)
    p.add_argument("--version", action="version", version=f"dbat {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--threads", type=int, default=None, help="BLAS thread cap; 1 gives bit-stable output")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    common(sub.add_parser("train", help="train a model, write checkpoint and history"))
    sp = common(sub.add_parser("eval", help="natural and robust accuracy report"))
    sp.add_argument("--checkpoint", help="evaluate this checkpoint instead of training")
    sp = common(sub.add_parser("attack", help="write adversarial test examples"))
    sp.add_argument("--checkpoint", required=True)
    common(sub.add_parser("blobs", help="decision-region rasters for AT and DBAT on blobs"))
    sp = common(sub.add_parser("boundary-dist", help="histogram of distances to the decision boundary"))
    sp.add_argument("--checkpoint")
    common(sub.add_parser("vc-demo", help="shattering checks for halfspaces, balls and unions"))
    return p


def _dispatch(args, cfg):
    if args.command == "train":
        cmd_train(cfg)
    elif args.command == "eval":
        cmd_eval(cfg, args.checkpoint)
    elif args.command == "attack":
        cmd_attack(cfg, args.checkpoint)
    elif args.command == "blobs":
        cmd_blobs(cfg)
    elif args.command == "boundary-dist":
        cmd_boundary_dist(cfg, args.checkpoint)
    else:
        cmd_vcdemo(cfg)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        overrides = list(args.overrides)
        if args.out:
            overrides.append(f"output_dir = {args.out}")
        cfg = load_config(args.config, args.preset, overrides)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            with threadpool_limits(limits=args.threads):
                _dispatch(args, cfg)
        else:
            _dispatch(args, cfg)
    except (ValueError, CheckpointError, OSError, TrainingDiverged, BudgetExceeded) as exc:
        msg = " ".join(str(exc).split())
        print(f"dbat: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
