import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbat.attacks import AttackSpec
from dbat.data import LabeledDataset, make_blobs
from dbat.inference import ThreatModel, predict
from dbat.metrics import (EvalReport, boundary_distance_histogram, boundary_distances, decision_boundary_raster,
                          f1_robust, natural_accuracy, raster_grid, robust_accuracy, write_raster_csv,
                          write_reports_csv)
from dbat.model import MlpParams, init_params
from dbat.trainers import TrainConfig, eval_model, train

REALTIME = ThreatModel("realtime_adaptive")


def linear2(w=(1.0, 0.0), b=0.0):
    """Two-class linear model with logits (0, w.x + b): boundary w.x + b = 0."""
    return MlpParams([(np.column_stack([np.zeros(2), np.asarray(w, float)]), np.array([0.0, b]))])


def test_oracle_and_anti_oracle():
    c = 3
    y = np.arange(30) % c
    oracle = LabeledDataset(np.eye(c)[y] * 10, y, c)
    ident = MlpParams([(np.eye(c), np.zeros(c))])
    assert np.mean(predict(ident, oracle.features, num_classes=c) == y) == 1.0
    anti = LabeledDataset(np.eye(c)[(y + 1) % c] * 10, y, c)
    assert np.mean(predict(ident, anti.features, num_classes=c) == y) == 0.0


def test_natural_accuracy_oracle_doubled():
    c = 2
    y = np.arange(20) % c
    ds = LabeledDataset(np.eye(2 * c)[y] * 10, y, c)
    assert natural_accuracy(MlpParams([(np.eye(2 * c), np.zeros(2 * c))]), ds) == 1.0
    anti = LabeledDataset(np.eye(2 * c)[(y + 1) % c + c] * 10, y, c)
    assert natural_accuracy(MlpParams([(np.eye(2 * c), np.zeros(2 * c))]), anti) == 0.0


def test_random_logit_model_is_chance():
    rng = np.random.default_rng(0)
    y = np.arange(10_000) % 4
    ds = LabeledDataset(rng.standard_normal((10_000, 8)), y, 4)
    model = init_params((8, 8), 1)
    assert abs(natural_accuracy(model, ds) - 0.25) < 0.03


def test_eps_zero_robust_equals_natural():
    ds = make_blobs([(-1, 0), (1, 0)], 0.5, 300, 0)
    model = init_params((2, 16, 4), 0)
    spec = AttackSpec(epsilon=0.0, step=0.1, steps=5)
    for kind in ("params_only", "params_plus_conjectured_projection", "realtime_adaptive"):
        assert robust_accuracy(model, ds, spec, ThreatModel(kind)) == natural_accuracy(model, ds)


def test_untrained_model_near_chance_before_and_after():
    # labels independent of features, so any fixed classifier sits at 1/C
    rng = np.random.default_rng(3)
    c = 2
    ds = LabeledDataset(rng.standard_normal((4000, 2)), rng.integers(0, c, 4000), c)
    model = init_params((2, 16, 2 * c), 5)
    spec = AttackSpec(epsilon=0.05, step=0.02, steps=5)
    assert abs(natural_accuracy(model, ds) - 1 / c) < 0.05
    assert abs(robust_accuracy(model, ds, spec, REALTIME) - 1 / c) < 0.05


@pytest.fixture(scope="module")
def blob_model():
    ds = make_blobs([(-1.3, 0), (1.3, 0)], 0.1, 2000, 0)
    att = AttackSpec(epsilon=1.2, step=0.2, steps=6, init="at_x", target_mode="random_target")
    cfg = TrainConfig(epochs=4, attack=att, history_eval_size=100, swa_start=32)
    res = train(cfg, ds)
    return eval_model(res, cfg), make_blobs([(-1.3, 0), (1.3, 0)], 0.1, 500, 1)


@pytest.mark.parametrize("seed", range(3))
def test_robust_accuracy_monotone_in_budget(blob_model, seed):
    model, test = blob_model
    accs = []
    for eps in (0.0, 0.6, 1.2):
        spec = AttackSpec(epsilon=eps, step=0.1, steps=20)
        accs.append(robust_accuracy(model, test, spec, REALTIME, seed=seed))
    assert accs[0] == natural_accuracy(model, test)
    assert accs[0] >= accs[1] >= accs[2]


def test_robust_accuracy_empty():
    with pytest.raises(ValueError):
        natural_accuracy(init_params((2, 4), 0), LabeledDataset(np.zeros((0, 2)), [], 2))


def test_f1_examples():
    assert f1_robust(1.0, 1.0) == 1.0
    assert f1_robust(0.7, 0.0) == 0.0
    assert f1_robust(0.0, 0.0) == 0.0
    assert f1_robust(0.95, 0.40) == pytest.approx(0.562962962962963, abs=1e-12)
    with pytest.raises(ValueError):
        f1_robust(1.2, 0.5)


@given(st.floats(0, 1), st.floats(0, 1))
def test_f1_between_min_and_max(a, b):
    f = f1_robust(a, b)
    assert min(a, b) - 1e-12 <= f <= max(a, b) + 1e-12


def test_report_columns_and_csv(tmp_path):
    rep = EvalReport(0.9, {"params_only": 0.6, "realtime_adaptive": 0.5}, 10, 3, "abc")
    assert rep.columns() == ["natural_acc", "robust_acc_params_only", "robust_acc_realtime_adaptive",
                             "f1_robust", "n_examples", "seed", "config_digest"]
    assert rep.f1_robust == f1_robust(0.9, 0.5)
    p = tmp_path / "r.csv"
    write_reports_csv([rep], p, "hdr", [("lambda", [1.0])])
    lines = p.read_text().splitlines()
    assert lines[0] == "# hdr" and lines[1].startswith("lambda,natural_acc") and lines[2].startswith("1.0,0.9,0.6,0.5")


def test_boundary_distance_linear_example():
    d, cens = boundary_distances(linear2(), [[0.5, 0.0]], 1000, 0.002, num_classes=2, max_radius=2.0, seed=0)
    assert abs(d[0] - 0.5) / 0.5 < 0.1 and not cens[0]


def test_point_on_boundary():
    d, _ = boundary_distances(linear2(), [[0.0, 0.3]], 200, 0.002, num_classes=2, max_radius=1.0, seed=0)
    assert d[0] < 0.002


def test_constant_model_censored():
    const = MlpParams([(np.zeros((2, 2)), np.array([1.0, 0.0]))])
    d, cens = boundary_distances(const, np.zeros((3, 2)), 50, 0.05, num_classes=2, max_radius=0.5, seed=0)
    assert cens.all() and np.all(d == 0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-1, 1), st.integers(0, 2**31))
def test_linear_estimate_never_below_truth(angle, b, seed):
    w = np.array([np.cos(angle), np.sin(angle)])
    x = np.random.default_rng(seed).uniform(-1, 1, (5, 2))
    truth = np.abs(x @ w + b)
    d, cens = boundary_distances(linear2(w, b), x, 100, 0.01, num_classes=2, max_radius=4.0, seed=seed)
    assert np.all(d[~cens] >= truth[~cens] - 0.01 - 1e-9)


def test_histogram_shape_and_bit_stable(tmp_path):
    ds = make_blobs([(-1, 0), (1, 0)], 0.3, 100, 0)
    outs = []
    for name in ("a.csv", "b.csv"):
        h = boundary_distance_histogram(linear2(), ds, 100, 0.01, n_points=30, seed=4)
        h.write_csv(tmp_path / name, "hdr")
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    assert h.counts.sum() == 30 and len(h.counts) == 20 and h.edges[0] == 0.0
    lines = outs[0].decode().splitlines()
    assert lines[0] == "# hdr" and lines[1].startswith("# bins=20") and lines[2] == "bin_lo,bin_hi,count"
    assert len(lines) == 23


def test_raster_orientation():
    g = raster_grid((0, 2, 0, 2), 2)
    assert g.tolist() == [[0.5, 1.5], [1.5, 1.5], [0.5, 0.5], [1.5, 0.5]]


def test_raster_linear_split():
    grid = decision_boundary_raster(linear2(), (-1, 1, -1, 1), 10, num_classes=2)
    assert np.all(grid[:, :5] == 0) and np.all(grid[:, 5:] == 1)


def test_raster_single_cell():
    m = init_params((2, 8, 4), 3)
    grid = decision_boundary_raster(m, (-2, 0, 1, 3), 1)
    assert grid.shape == (1, 1) and grid[0, 0] == predict(m, [[-1.0, 2.0]])[0]


def test_raster_show_all_uses_full_width():
    m = init_params((2, 16, 4), 0)
    full = decision_boundary_raster(m, (-3, 3, -3, 3), 40, show_all_2C=True)
    folded = decision_boundary_raster(m, (-3, 3, -3, 3), 40)
    assert full.max() < 4 and folded.max() < 2
    assert np.array_equal(full % 2, folded)


def test_raster_deterministic_and_written(tmp_path):
    m = init_params((2, 8, 4), 1)
    a = decision_boundary_raster(m, (-1, 1, -1, 1), 7)
    b = decision_boundary_raster(m, (-1, 1, -1, 1), 7)
    assert np.array_equal(a, b)
    p = tmp_path / "r.csv"
    write_raster_csv(a, p, (-1, 1, -1, 1), "hdr")
    assert len(p.read_text().splitlines()) == 8
    assert "resolution=7" in (tmp_path / "r.csv.meta").read_text()


def test_raster_rejects_non_2d():
    with pytest.raises(ValueError):
        decision_boundary_raster(init_params((3, 4), 0), (-1, 1, -1, 1), 4)
    with pytest.raises(ValueError):
        raster_grid((1, 1, 0, 1), 3)
