import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from moodveil.evaluation.nested import Design, FeatureSpec
from moodveil.models.mlp import MlpHyper, train_mlp
from moodveil.nimlp import (IdentityEncoder, NiMlpModel, TradeoffPoint, compute_tradeoff_ratio,
                            export_sweep, fit_identity_encoder, lasso_cd, load_nimlp,
                            pareto_front, retrain_head, save_nimlp, selection_key, sigma_sweep,
                            train_noisy_head)
from moodveil.privacy_audit import train_identity_probe
from moodveil.synthgen import SynthConfig, generate_samples

from oracles import encoder_closed_form


# -- identity encoder -------------------------------------------------------

def test_single_cell_example():
    enc = fit_identity_encoder(np.full((5, 1), 0.5), np.zeros(5, int), lam=1.0)
    assert enc.theta[0, 0] == pytest.approx(0.4)


def test_lambda_zero_gives_user_means():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(12, 3))
    ids = np.repeat([0, 1, 2], 4)
    enc = fit_identity_encoder(Z, ids, 0.0)
    np.testing.assert_allclose(enc.theta, [Z[ids == u].mean(axis=0) for u in range(3)], atol=1e-10)


def test_huge_lambda_gives_zero_and_missing_user_zero_row():
    Z = np.random.default_rng(1).normal(size=(6, 4))
    ids = np.array([0, 0, 0, 2, 2, 2])
    assert not fit_identity_encoder(Z, ids, 1e6).theta.any()
    enc = fit_identity_encoder(Z, ids, 0.1, n_users=3)
    assert not enc.theta[1].any() and enc.counts.tolist() == [3, 0, 3]


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        fit_identity_encoder(np.zeros((2, 1)), [0, 1], -0.1)


def test_sparsity_monotone_in_lambda():
    rng = np.random.default_rng(2)
    Z = rng.exponential(size=(40, 8))
    ids = rng.integers(0, 5, 40)
    sp = [fit_identity_encoder(Z, ids, lam, 5).sparsity for lam in (0.0, 0.5, 2, 10, 50)]
    assert sp == sorted(sp)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (9, 3), elements=st.floats(-5, 5)),
       st.lists(st.integers(0, 3), min_size=9, max_size=9),
       st.floats(0, 20))
def test_encoder_matches_closed_form(Z, ids, lam):
    enc = fit_identity_encoder(Z, ids, lam, n_users=4)
    np.testing.assert_allclose(enc.theta, encoder_closed_form(Z, ids, lam, 4), atol=1e-9)


def test_lasso_cd_general_design():
    # the solution must satisfy the lasso optimality conditions
    rng = np.random.default_rng(3)
    A = rng.normal(size=(30, 5))
    Z = rng.normal(size=(30, 2))
    lam = 3.0
    theta = lasso_cd(A, Z, lam)
    grad = 2 * A.T @ (A @ theta - Z)
    on = theta != 0
    np.testing.assert_allclose(grad[on], -lam * np.sign(theta[on]), atol=1e-6)
    assert np.all(np.abs(grad[~on]) <= lam + 1e-6)


# -- noisy head on a small synthetic set ---------------------------------------

@pytest.fixture(scope="module")
def small():
    samples = generate_samples(SynthConfig(seed=4, num_users=6, days_per_user=50,
                                           identity_confound=1.0))
    d = Design(samples, FeatureSpec("both", top_k=150))
    rows = np.arange(len(samples))
    tr, va = rows[rows % 5 != 0], rows[rows % 5 == 0]
    (Xtr, Xva), _ = d.matrices(tr, va)
    base = train_mlp(Xtr, d.y[tr], MlpHyper(h1=32, h2=16, epochs=30), seed=0)
    return base, Xtr, d.ids[tr], d.y[tr], Xva, d.ids[va], d.y[va]


def test_zero_encoder_makes_sigma_irrelevant(small):
    base, X, ids, y, *_ = small
    enc = IdentityEncoder(np.zeros((6, 16)), 1e9, np.bincount(ids))
    a = train_noisy_head(base, enc, X, ids, y, 0.0, seed=3)
    b = train_noisy_head(base, enc, X, ids, y, 50.0, seed=3)
    np.testing.assert_array_equal(a.W, b.W)
    np.testing.assert_array_equal(a.W, retrain_head(base, X, y, seed=3).W)


def test_training_leaves_base_and_encoder_alone(small):
    base, X, ids, y, *_ = small
    before = {k: v.copy() for k, v in base.params.items()}
    enc = fit_identity_encoder(base.features(X), ids, 1.0)
    theta = enc.theta.copy()
    train_noisy_head(base, enc, X, ids, y, 10.0, seed=0)
    assert all(np.array_equal(before[k], base.params[k]) for k in before)
    assert np.array_equal(theta, enc.theta)


def test_inference_is_noise_free(small):
    base, X, ids, y, Xv, *_ = small
    enc = fit_identity_encoder(base.features(X), ids, 0.1)
    model = NiMlpModel(base, enc, train_noisy_head(base, enc, X, ids, y, 25.0, seed=0))
    assert np.array_equal(model.predict(Xv), model.predict(Xv))
    np.testing.assert_array_equal(model.predict(Xv), model.head.head.predict(base.features(Xv)))


def test_strong_noise_hides_identity(small):
    base, X, ids, y, Xv, idv, _ = small
    enc = fit_identity_encoder(base.features(X), ids, 0.1)
    model = NiMlpModel(base, enc, train_noisy_head(base, enc, X, ids, y, 100.0, seed=0))
    clean = train_identity_probe(base.features(Xv), idv, seed=0).accuracy
    noisy = train_identity_probe(model.head_inputs(Xv, idv, 0), idv, seed=0).accuracy
    assert noisy <= 0.5 * clean


def test_singleton_sweep_and_zero_sigma_anchor(small, tmp_path):
    res = sigma_sweep(*small, lambdas=[1.0], sigmas=[0.0], seed=0)
    (p,) = res.points
    assert res.selected is p and res.pareto == [p]
    assert p.s == pytest.approx(res.base_s)
    export_sweep(tmp_path / "s.csv", res)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "sigma,lambda,mood_f1,probe_acc,ratio,dominant" and len(lines) == 2


def test_save_load_round_trip(small, tmp_path):
    base, X, ids, y, Xv, idv, _ = small
    enc = fit_identity_encoder(base.features(X), ids, 2.0)
    model = NiMlpModel(base, enc, train_noisy_head(base, enc, X, ids, y, 5.0, seed=1))
    save_nimlp(tmp_path / "m.mvml", model)
    back = load_nimlp(tmp_path / "m.mvml")
    np.testing.assert_array_equal(back.predict(Xv), model.predict(Xv))
    np.testing.assert_array_equal(back.head_inputs(Xv, idv, 2), model.head_inputs(Xv, idv, 2))


# -- tradeoff ratio and selection ---------------------------------------------

@pytest.mark.parametrize("args,expected", [
    ((0.5, 0.3, 0.8, 0.7), 2.0),
    ((0.5, 0.5, 0.8, 0.7), 0.0),
    ((0.5, 0.5, 0.8, 0.9), 0.0),
    ((0.5, 0.3, 0.8, 0.8), math.inf),
    ((0.5, 0.3, 0.8, 0.85), math.inf),
    ((0.3, 0.5, 0.8, 0.9), -math.inf),
    ((0.3, 0.5, 0.8, 0.7), -2.0),
])
def test_tradeoff_ratio(args, expected):
    r = compute_tradeoff_ratio(*args)
    assert r == pytest.approx(expected) if math.isfinite(expected) else r == expected


def test_selection_prefers_dominant_then_ratio_then_privacy():
    pts = [TradeoffPoint(1, 1, 0.7, 0.4, 3.0), TradeoffPoint(5, 1, 0.8, 0.3, math.inf),
           TradeoffPoint(10, 1, 0.81, 0.2, math.inf), TradeoffPoint(25, 1, 0.6, 0.1, 5.0)]
    order = sorted(pts, key=selection_key)
    assert [p.sigma for p in order] == [10, 5, 25, 1]


def test_pareto_front():
    pts = [TradeoffPoint(1, 1, 0.8, 0.5, 0), TradeoffPoint(2, 1, 0.7, 0.3, 0),
           TradeoffPoint(3, 1, 0.6, 0.4, 0), TradeoffPoint(4, 1, 0.8, 0.6, 0)]
    assert [p.sigma for p in pareto_front(pts)] == [2, 1]
