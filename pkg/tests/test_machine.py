import hashlib
import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, max_relative_error
from rahi.distributions import SeededRng
from rahi.machine import (
    ClassifierParams,
    assessment_from_outputs,
    deterministic_predict_many,
    draw_mask,
    featurize,
    forward,
    init_params,
    machine_loss_grad,
    mc_predict,
    mc_predict_many,
    tokenize,
    train_machine,
    zero_params,
)


def _bucket(token, dim, seed=0):
    h = hashlib.blake2b(token.encode(), digest_size=8, key=seed.to_bytes(8, "little")).digest()
    return int.from_bytes(h, "little") % dim


def test_tokenize():
    assert tokenize("Hello, World! 42x") == ["hello", "world", "42x"]
    assert tokenize("  ...  ") == []


def test_featurize_examples():
    assert not featurize("", 8).any()
    v = featurize("aa bb aa", 8)
    ia, ib = _bucket("aa", 8), _bucket("bb", 8)
    assert ia != ib
    expected = np.zeros(8)
    expected[ia], expected[ib] = 2 / math.sqrt(5), 1 / math.sqrt(5)
    np.testing.assert_allclose(v, expected, rtol=1e-15)
    np.testing.assert_array_equal(featurize("aa bb aa", 8), v)


def test_featurize_seed_changes_buckets():
    words = " ".join(f"t{k}" for k in range(50))
    assert not np.array_equal(featurize(words, 1024, 0), featurize(words, 1024, 1))


def test_featurize_requires_power_of_two():
    with pytest.raises(ValueError):
        featurize("x", 12)


@given(st.text(max_size=200))
def test_featurize_norm(text):
    v = featurize(text, 64)
    assert v.shape == (64,) and np.all(np.isfinite(v))
    norm = np.linalg.norm(v)
    assert norm == 0.0 or abs(norm - 1.0) < 1e-12


def _tiny():
    return ClassifierParams(np.array([[0.5, -1.0], [0.25, 2.0]]), np.array([0.1, -0.2]), np.array([1.5, -0.5]), 0.3)


def test_forward_examples():
    x = np.array([1.0, 0.0])
    assert forward(zero_params(2, 2), None, x) == 0.5
    # sigmoid(1.5 tanh(0.6) - 0.5 tanh(-1.2) + 0.3)
    assert forward(_tiny(), None, x) == pytest.approx(0.8208918641384715, abs=1e-15)
    mask = draw_mask(2, 2, 0.0, np.random.default_rng(0))
    assert forward(_tiny(), mask, x) == forward(_tiny(), None, x)


def test_forward_with_mask_by_hand():
    p = _tiny()
    mask = draw_mask(2, 2, 0.5, np.random.default_rng(0))
    mask.input_kept[:] = [True, True]
    mask.hidden_kept[:] = [True, False]
    # input scaled by 2, second hidden unit dropped, first scaled by 2
    z = 1.5 * 2 * math.tanh(2 * 0.5 + 0.1) + 0.3
    assert forward(p, mask, np.array([1.0, 0.0])) == pytest.approx(1 / (1 + math.exp(-z)), abs=1e-15)


def test_assessment_examples():
    a = assessment_from_outputs([0.4, 0.6])
    assert a.mean == pytest.approx(0.5, abs=1e-15)
    assert a.variance == pytest.approx(0.01, abs=1e-15)


def test_rate_zero_variance_exactly_zero():
    p = init_params(16, 4, SeededRng(1))
    x = featurize("one two three", 16)
    a = mc_predict(p, x, 20, 0.0, SeededRng(2))
    assert a.variance == 0.0
    assert a.mean == forward(p, None, x)
    many = mc_predict_many(p, x[None, :], 20, 0.0, SeededRng(2))
    assert many[0].variance == 0.0
    assert many[0].mean == pytest.approx(deterministic_predict_many(p, x[None, :])[0], abs=1e-15)


def test_mc_predict_matches_recomputation():
    p = init_params(8, 3, SeededRng(4))
    x = featurize("alpha beta gamma delta", 8)
    a = mc_predict(p, x, 8, 0.5, SeededRng(9))
    outs = a.pass_outputs.tolist()
    assert len(outs) == 8 and a.passes == 8
    assert abs(a.mean - statistics.fmean(outs)) <= 1e-12
    assert abs(a.variance - statistics.pvariance(outs)) <= 1e-12
    # pass n is reproducible on its own stream
    for n in (0, 5):
        mask = draw_mask(8, 3, 0.5, SeededRng(9).child(n).generator())
        assert forward(p, mask, x) == outs[n]
    assert mc_predict(p, x, 8, 0.5, SeededRng(9)).pass_outputs.tolist() == outs


def test_mc_predict_many_is_reproducible_and_spread():
    p = init_params(64, 8, SeededRng(1))
    X = np.stack([featurize(f"w{k} w{k+1} w{k+2}", 64) for k in range(5)])
    a = mc_predict_many(p, X, 30, 0.5, SeededRng(3))
    b = mc_predict_many(p, X, 30, 0.5, SeededRng(3))
    assert [m.pass_outputs.tolist() for m in a] == [m.pass_outputs.tolist() for m in b]
    assert all(m.variance > 0 for m in a)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60))
def test_variance_bounds(outputs):
    a = assessment_from_outputs(outputs)
    assert 0.0 <= a.variance <= 0.25
    assert abs(a.mean - statistics.fmean(outputs)) <= 1e-12
    assert abs(a.variance - statistics.pvariance(outputs)) <= 1e-12


def test_loss_at_max_entropy():
    X = np.random.default_rng(0).normal(size=(7, 4))
    loss, _ = machine_loss_grad(zero_params(4, 3), X, np.array([0, 1, 1, 0, 1, 0, 0]))
    assert loss == pytest.approx(math.log(2), abs=1e-15)


def _random_net(k):
    rng = np.random.default_rng(1000 + k)
    D, H, n = int(rng.integers(2, 7)), int(rng.integers(1, 5)), int(rng.integers(1, 6))
    params = ClassifierParams(rng.normal(size=(D, H)), rng.normal(size=H), rng.normal(size=H), float(rng.normal()))
    X = rng.normal(size=(n, D))
    y = rng.integers(0, 2, n).astype(float)
    rate = 0.0 if k % 3 == 0 else 0.5
    masks = None if k % 3 == 0 else [draw_mask(D, H, rate, rng) for _ in range(n)]
    return params, X, y, masks


def machine_gradient_error(k):
    params, X, y, masks = _random_net(k)
    D, H = params.W1.shape
    _, g = machine_loss_grad(params, X, y, masks)
    f = lambda flat: machine_loss_grad(ClassifierParams.unravel(flat, D, H), X, y, masks)[0]
    return max_relative_error(g.ravel(), central_difference(f, params.ravel()))


def test_gradient_matches_finite_differences():
    errors = [machine_gradient_error(k) for k in range(60)]
    assert max(errors) <= 1e-4


def test_duplicated_batch_has_same_loss_and_gradient():
    params, X, y, _ = _random_net(1)
    l1, g1 = machine_loss_grad(params, X, y)
    l2, g2 = machine_loss_grad(params, np.concatenate([X, X]), np.concatenate([y, y]))
    assert l1 == pytest.approx(l2, rel=1e-12)
    np.testing.assert_allclose(g1.ravel(), g2.ravel(), rtol=1e-10, atol=1e-15)


def _separable(n=80):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(float)
    X[:, 0] += np.where(y == 1, 0.3, -0.3)  # margin
    return X, y


def test_trainer_separates_linearly_separable_data():
    X, y = _separable()
    p = train_machine(init_params(2, 8, SeededRng(0)), X, y, 200, 0.5, 0.0, SeededRng(1), batch_size=16)
    acc = np.mean((deterministic_predict_many(p, X) > 0.5) == (y == 1))
    assert acc == 1.0


def test_trainer_lr_zero_and_determinism():
    X, y = _separable(30)
    p0 = init_params(2, 4, SeededRng(0))
    same = train_machine(p0, X, y, 5, 0.0, 0.5, SeededRng(1))
    np.testing.assert_array_equal(same.ravel(), p0.ravel())
    a = train_machine(p0, X, y, 5, 0.3, 0.5, SeededRng(1))
    b = train_machine(p0, X, y, 5, 0.3, 0.5, SeededRng(1))
    assert a.ravel().tobytes() == b.ravel().tobytes()
    assert not np.array_equal(a.ravel(), p0.ravel())


def test_draw_mask_validates_rate():
    with pytest.raises(ValueError):
        draw_mask(4, 2, 1.0, np.random.default_rng(0))
    m = draw_mask(100_000, 1, 0.3, np.random.default_rng(0))
    assert abs(m.input_kept.mean() - 0.7) < 0.01
    s_in, _ = m.scales()
    assert set(np.unique(s_in)) == {0.0, 1 / 0.7}


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_forward_is_locally_smooth(seed):
    p = init_params(8, 4, SeededRng(seed))
    x = np.random.default_rng(seed).random(8)
    assert abs(forward(p, None, x + 1e-9) - forward(p, None, x)) < 1e-6
