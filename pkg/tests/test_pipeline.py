import dataclasses

import numpy as np
import pytest

from rahi.config import RahiConfig, SyntheticSpec
from rahi.dataio import build_dataset
from rahi.distributions import SeededRng
from rahi.machine import init_params
from rahi.fusion import init_encoder
from rahi.pipeline import (
    ARMS,
    STREAM_INIT,
    Evaluator,
    PipelineError,
    Split,
    TrainedModel,
    ablate,
    crowd_assessments,
    dynamic_eval,
    evaluate_model,
    split_dataset,
    train_all,
)


def small_config(**kw):
    cfg = RahiConfig(dim=1024, hidden=16, n_passes=10, epochs=3, fusion_augment=64, samples_per_side=16,
                     synth=SyntheticSpec(n_users=80, n_news=150, comments_max=30))
    return dataclasses.replace(cfg, **kw)


@pytest.fixture(scope="module")
def corpus():
    from rahi.synthetic import generate_synthetic

    return generate_synthetic(small_config().synth)


@pytest.fixture(scope="module")
def ds(corpus):
    return build_dataset(corpus.news, corpus.comments)


@pytest.fixture(scope="module")
def model(ds):
    return train_all(ds, small_config())


def test_split_is_disjoint_stratified(ds):
    s = split_dataset(ds, (0.7, 0.2, 0.1), SeededRng(1))
    parts = [set(s.train), set(s.valid), set(s.test)]
    assert sum(map(len, parts)) == len(ds.news) == len(set.union(*parts))
    assert (len(s.train), len(s.valid), len(s.test)) == (104, 30, 16)  # round(0.7 * 75) = 52 per class
    labels = ds.labels
    assert sum(labels[i] for i in s.train) == 52


def test_empty_training_split_errors(ds):
    with pytest.raises(PipelineError):
        train_all(ds, small_config(), Split([], [], sorted(ds.labels)))


def test_zero_learning_rates_leave_parameters_at_init(ds):
    cfg = small_config(epochs=1, machine_lr=0.0, crowd_lr=0.0, fusion_lr=0.0)
    m = train_all(ds, cfg)
    init = SeededRng(cfg.seed).child(STREAM_INIT)
    np.testing.assert_array_equal(m.machine.ravel(), init_params(cfg.dim, cfg.hidden, init.child(0)).ravel())
    np.testing.assert_array_equal(m.encoder.ravel(), init_encoder(cfg.fusion_hidden, init.child(1)).ravel())
    fresh = train_all(ds, dataclasses.replace(cfg, adjust=False))
    np.testing.assert_array_equal(m.reliab.rho, fresh.reliab.rho)


def test_training_is_deterministic(ds, model):
    again = train_all(ds, small_config())
    assert evaluate_model(again, ds) == evaluate_model(model, ds)
    assert again.machine.ravel().tobytes() == model.machine.ravel().tobytes()


def test_save_load_round_trip(tmp_path, ds, model):
    model.save(tmp_path)
    assert TrainedModel.exists(tmp_path)
    loaded = TrainedModel.load(tmp_path)
    assert loaded.config == model.config and loaded.split == model.split
    assert evaluate_model(loaded, ds) == evaluate_model(model, ds)


def test_evaluator_arms(ds, model):
    reports = evaluate_model(model, ds)
    assert set(reports) == set(ARMS)
    for rep in reports.values():
        assert 0.0 <= rep.accuracy <= 1.0
    items = Evaluator(model, ds, model.split.test[:3]).items()
    d = items[0].as_dict()
    assert {"machine_mean", "machine_variance", "alpha", "beta", "mu", "sigma", "verdict"} <= set(d)


def test_dynamic_eval_edges(ds, model):
    first, last = 30, 10**9
    curve = dynamic_eval(model, ds, [first, last])
    ev = Evaluator(model, ds, model.split.test)
    assert all(c is None for c in crowd_assessments(ds, model.split.test, model.reliab, model.config, first))
    assert np.all(ev.scores(first)["crowd"] == 0.5)
    assert curve[1][1]["hybrid"] == evaluate_model(model, ds)["hybrid"]
    assert curve[0][1]["machine"] == curve[1][1]["machine"]
    with pytest.raises(ValueError):
        dynamic_eval(model, ds, [60, 60])


def test_count_in_denominator_mode(corpus):
    cfg = small_config(activity_mode="count-in-denominator", activity_threshold=40, epochs=1)
    ds = build_dataset(corpus.news, corpus.comments, cfg.activity_threshold, cfg.activity_mode)
    assert ds.inactive_users
    m = train_all(ds, cfg)
    assert not set(m.reliab.users) & ds.inactive_users
    nid = m.split.test[0]
    a = crowd_assessments(ds, [nid], m.reliab, cfg)[0]
    assert a.n_users == len(ds.comments_by_news[nid])


def test_ablate_keys(ds, model):
    table = ablate(ds, small_config(), model)
    assert list(table) == ["hybrid", "machine-only", "crowd-only", "no-adjustment", "machine-deterministic", "mv", "wv"]
