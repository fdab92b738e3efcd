import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbat.attacks import AttackSpec, pgd
from dbat.inference import (PROJECTIONS, AttackSurface, ThreatModel, attack_surface, predict, predict_logits,
                            project_probs)
from dbat.model import MlpParams, init_params
from dbat.tensor import ShapeError, softmax

from _util import central_diff, rel_err, with_random_biases

N_PROP = 100_000


def dirichlet(n, c, seed, alpha=0.3):
    return np.random.default_rng(seed).dirichlet(np.full(2 * c, alpha), size=n)


def logit_model(k):
    """Linear model whose logits equal its k-dimensional input."""
    return MlpParams([(np.eye(k), np.zeros(k))])


def test_project_max_example():
    assert project_probs([0.1, 0.2, 0.3, 0.4], "max").tolist() == [0.3, 0.4]


def test_project_sum_mean_logsumexp_examples():
    v = np.array([0.1, 0.2, 0.3, 0.4])
    assert np.allclose(project_probs(v, "sum"), [0.4, 0.6])
    assert np.allclose(project_probs(v, "mean"), [0.2, 0.3])
    assert np.allclose(project_probs(v, "logsumexp"), np.logaddexp([0.1, 0.2], [0.3, 0.4]))


def test_project_rejects_odd_width_and_unknown():
    with pytest.raises(ShapeError):
        project_probs([0.2, 0.3, 0.5], "max")
    with pytest.raises(ValueError):
        project_probs([0.5, 0.5], "median")


@pytest.mark.parametrize("c", [2, 5])
def test_one_hot_adversarial_folds_back(c):
    for k in range(c):
        v = np.zeros(2 * c)
        v[c + k] = 1.0
        assert int(np.argmax(project_probs(v, "max"))) == k


@pytest.mark.parametrize("c", [2, 4, 10])
def test_sum_and_max_agree_with_dominant_entry(c):
    v = dirichlet(N_PROP, c, c)
    dominant = v.max(axis=1) > 0.5
    a = np.argmax(project_probs(v, "max"), axis=1)
    b = np.argmax(project_probs(v, "sum"), axis=1)
    assert dominant.sum() > 1000
    assert np.count_nonzero(a[dominant] != b[dominant]) == 0


@pytest.mark.parametrize("c", [2, 4, 10])
def test_mean_is_half_sum_same_argmax(c):
    v = dirichlet(N_PROP, c, 100 + c)
    s, m = project_probs(v, "sum"), project_probs(v, "mean")
    assert np.allclose(m, 0.5 * s, rtol=0, atol=1e-16)
    assert np.count_nonzero(np.argmax(s, axis=1) != np.argmax(m, axis=1)) == 0


@pytest.mark.parametrize("c", [2, 4, 10])
def test_max_prediction_is_global_argmax_mod_c(c):
    z = np.random.default_rng(c).standard_normal((N_PROP, 2 * c)) * 3
    g = np.argmax(z, axis=1)
    partner = (g + c) % (2 * c)
    rows = np.arange(len(z))
    cond = z[rows, partner] < z[rows, g]
    pred = predict_logits(z, "max", c)
    assert np.count_nonzero(pred[cond] != g[cond] % c) == 0


@pytest.mark.parametrize("c", [2, 4, 10])
def test_logsumexp_agrees_when_winner_clear(c):
    z = np.random.default_rng(7 + c).standard_normal((N_PROP, 2 * c)) * 4
    pair_max = np.maximum(z[:, :c], z[:, c:])
    pair_lse = np.logaddexp(z[:, :c], z[:, c:])
    win = np.argmax(pair_max, axis=1)
    rows = np.arange(len(z))
    others = pair_lse.copy()
    others[rows, win] = -np.inf
    cond = pair_max[rows, win] > others.max(axis=1)
    pred = predict_logits(z, "logsumexp", c)
    assert cond.sum() > 1000
    assert np.count_nonzero(pred[cond] != win[cond]) == 0


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(1e-6, 10))
def test_logsumexp_monotone(a, b, d):
    base = project_probs([a, b], "logsumexp")[0]
    up_a = project_probs([a + d, b], "logsumexp")[0]
    up_b = project_probs([a, b + d], "logsumexp")[0]
    assert up_a >= base and up_b >= base
    # strict once the moved entry is not swamped by the other in float64
    if a - b > -20:
        assert up_a > base
    if b - a > -20:
        assert up_b > base


def test_predict_peaked_columns():
    c = 3
    m = logit_model(2 * c)
    for y in range(c):
        z = np.zeros((1, 2 * c))
        z[0, y] = 50.0
        assert predict(m, z)[0] == y
        z = np.zeros((1, 2 * c))
        z[0, y + c] = 50.0
        assert predict(m, z)[0] == y


@pytest.mark.parametrize("proj", PROJECTIONS)
def test_uniform_logits_tie_to_zero(proj):
    assert predict(logit_model(6), np.zeros((1, 6)), proj)[0] == 0


def test_predict_plain_classifier():
    m = logit_model(3)
    assert predict(m, [[0.1, 2.0, 0.3]], num_classes=3)[0] == 1


def test_predict_width_mismatch():
    with pytest.raises(ShapeError):
        predict(logit_model(5), np.zeros((1, 5)), num_classes=2)


def test_surface_widths():
    m = init_params((2, 8, 6), 0)
    assert attack_surface(m, ThreatModel("params_only")).width == 6
    assert attack_surface(m, ThreatModel("params_plus_conjectured_projection")).width == 3
    assert attack_surface(m, ThreatModel("realtime_adaptive")).width == 3


def test_surface_scores_are_log_projected_probs():
    m = with_random_biases(init_params((2, 8, 6), 1), 1)
    x = np.random.default_rng(2).standard_normal((5, 2))
    from dbat.tensor import forward
    p = softmax(forward(m, x)[0])
    for proj in ("max", "sum", "mean"):
        s = AttackSurface(m, proj).scores(x)
        assert np.allclose(s, np.log(project_probs(p, proj)), atol=1e-12)


def test_conjecture_equal_to_defender_gives_same_attack():
    m = init_params((2, 16, 4), 3)
    x = np.random.default_rng(0).standard_normal((20, 2))
    y = np.random.default_rng(1).integers(0, 2, 20)
    spec = AttackSpec(epsilon=0.5, step=0.1, steps=5)
    s1 = attack_surface(m, ThreatModel("params_plus_conjectured_projection", "max", "max"))
    s2 = attack_surface(m, ThreatModel("realtime_adaptive", "max", "max"))
    assert np.array_equal(pgd(s1, x, y, spec, rng=9), pgd(s2, x, y, spec, rng=9))


@pytest.mark.parametrize("proj", PROJECTIONS)
@pytest.mark.parametrize("seed", range(3))
def test_surface_gradient(proj, seed):
    m = with_random_biases(init_params((3, 10, 6), seed), seed)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((4, 3))
    r = rng.standard_normal((4, 3))
    surf = AttackSurface(m, proj)
    s, state = surf.forward(x)
    g = surf.backward(state, r)
    fd = central_diff(lambda v: float(np.sum(surf.scores(v) * r)), x)
    assert rel_err(g, fd) < 1e-4


def test_threat_validation():
    with pytest.raises(ValueError):
        ThreatModel("oracle")
    with pytest.raises(ValueError):
        ThreatModel("realtime_adaptive", "median")
