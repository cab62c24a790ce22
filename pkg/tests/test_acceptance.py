"""Acceptance gate: eleven criteria, each printed as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py``; the summary section at the end
of the pytest output lists every criterion with its measured values.
End-to-end criteria use the default synthetic roster (17 users, 120 days)
and reduced hyperparameter grids to fit the time budget; the reductions are
stated per test.
"""
from __future__ import annotations

from contextlib import nullcontext
from dataclasses import replace

import numpy as np
import pytest

from moodveil import nimlp as ni
from moodveil.config import RunConfig
from moodveil.data_model import filter_participants
from moodveil.evaluation import (Design, audit_leakage, chrono_partition, compare, fit_model,
                                 nested_cv, wilcoxon_signed_rank)
from moodveil.models import HyperGrid, MlpHyper, loss_and_grads, train_mlp
from moodveil.models.mlp import dropout_masks, init_params
from moodveil.models.svm import Kernel, kkt_violation, smo
from moodveil.pipeline import cmd_run
from moodveil.privacy_audit import train_identity_probe
from moodveil.synthgen import SynthConfig, generate_samples

import oracles

SEEDS = (0, 1, 2, 3, 4)
SINGLE_MLP = dict(mlp_h1=(128,), mlp_h2=(64,), mlp_dropout=(0.0,))


def _design(**synth):
    return Design(filter_participants(generate_samples(SynthConfig(**synth))))


# 1 -------------------------------------------------------------------------

def test_c01_gradients_match_central_differences(criterion):
    rng = np.random.default_rng(101)
    worst = 0.0
    for draw in range(20):
        d, h1, h2 = rng.integers(2, 9), rng.integers(2, 12), rng.integers(2, 10)
        n = int(rng.integers(1, 9))
        hyper = MlpHyper(h1=int(h1), h2=int(h2), dropout=float(rng.choice([0.0, 0.3])))
        params = init_params(int(d), hyper, rng)
        X = rng.normal(size=(n, int(d)))
        y = rng.integers(0, 3, n)
        masks = dropout_masks(rng, n, hyper, hyper.dropout) if hyper.dropout else None
        _, g = loss_and_grads(params, X, y, masks)
        num = oracles.central_difference(lambda: loss_and_grads(params, X, y, masks)[0], params)
        worst = max(worst, oracles.max_relative_error(g, num))
    ok = worst < 1e-4
    criterion(1, "MLP gradients vs central differences", ok,
              f"max relative error {worst:.2e} over 20 draws (< 1e-4)")
    assert ok


# 2 -------------------------------------------------------------------------

@pytest.mark.parametrize("setting", ["rbf", 2, 3, 5, 10])
def test_c02_smo_matches_brute_force(setting, criterion, request):
    rng = np.random.default_rng(202 + (0 if setting == "rbf" else setting))
    gap = kkt = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 7))
        X = rng.uniform(-1, 1, size=(n, 2))
        y = rng.permutation(np.r_[1.0, -1.0, rng.choice([-1.0, 1.0], n - 2)])
        C = float(rng.choice([0.1, 0.5, 1, 2, 3, 5, 10]))
        kern = Kernel.from_setting(setting, X)
        K = kern(X, X)
        res = smo(K, y, C)
        best, _ = oracles.brute_force_dual(K, y, C)
        got = oracles.dual_value(res.alpha, y[:, None] * y[None, :] * K)
        gap = max(gap, abs(best - got))
        kkt = max(kkt, kkt_violation(res.alpha, K, y, C))
    ok = gap < 1e-4 and kkt < 1e-3
    results = request.config.stash.setdefault(_SMO_KEY, {})
    results[str(setting)] = (gap, kkt)
    allok = all(g < 1e-4 and k < 1e-3 for g, k in results.values())
    detail = "; ".join(f"{s}: gap {g:.1e}, kkt {k:.1e}" for s, (g, k) in results.items())
    criterion(2, "SMO vs brute-force dual (50 problems per kernel)", allok,
              f"{detail} ({len(results)}/5 kernels)")
    assert ok


_SMO_KEY = pytest.StashKey[dict]()


# 3 -------------------------------------------------------------------------

def test_c03_encoder_closed_form_and_path(criterion):
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(100):
        U, d = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        N = int(rng.integers(1, 30))
        ids = rng.integers(0, U, N)
        Z = rng.normal(size=(N, d)) * rng.uniform(0.1, 3)
        lam = float(rng.choice([0.0, 0.1, 1, 2, 3, 5, 10, rng.uniform(0, 20)]))
        enc = ni.fit_identity_encoder(Z, ids, lam, U)
        worst = max(worst, float(np.abs(enc.theta - oracles.encoder_closed_form(Z, ids, lam, U)).max()))
    Z = np.abs(rng.normal(size=(200, 16)))
    ids = rng.integers(0, 17, 200)
    norms = [np.abs(ni.fit_identity_encoder(Z, ids, lam, 17).theta).sum()
             for lam in (0.1, 1, 2, 3, 5, 10)]
    monotone = all(a >= b for a, b in zip(norms, norms[1:]))
    ok = worst < 1e-8 and monotone
    criterion(3, "identity encoder vs closed form; L1 path", ok,
              f"max |diff| {worst:.1e} on 100 problems; L1 norms {np.round(norms, 2).tolist()}")
    assert ok


# 4 -------------------------------------------------------------------------

def test_c04_sigma_zero_reduction(criterion):
    design = _design(seed=44, num_users=8, days_per_user=60)
    plan = chrono_partition(design.samples)
    tr, te = plan.train_indices(9), plan.test_indices(9)
    (X_tr, X_te), _ = design.matrices(tr, te)
    base = train_mlp(X_tr, design.y[tr], MlpHyper(h1=32, h2=16, epochs=40), seed=4)
    enc = ni.fit_identity_encoder(base.features(X_tr), design.ids[tr], 1.0, design.n_users)
    noisy = ni.train_noisy_head(base, enc, X_tr, design.ids[tr], design.y[tr], 0.0, seed=9)
    plain = ni.retrain_head(base, X_tr, design.y[tr], seed=9)
    p_ni = ni.NiMlpModel(base, enc, noisy).predict(X_te)
    p_plain = plain.predict(base.features(X_te))
    ok = np.array_equal(p_ni, p_plain) and np.array_equal(noisy.W, plain.W)
    criterion(4, "sigma = 0 reduces to a plain retrained head", ok,
              f"{int((p_ni == p_plain).sum())}/{len(p_ni)} test predictions identical")
    assert ok


# 5 -------------------------------------------------------------------------

def _privacy_run(seed):
    """Train on folds 0-7, select (lambda, sigma) on fold 8, probe on fold 9."""
    design = _design(seed=seed, identity_confound=0.8)
    plan = chrono_partition(design.samples)
    tr = np.flatnonzero(plan.fold_of <= 7)
    va, te = plan.test_indices(8), plan.test_indices(9)
    (X_tr, X_va, X_te), _ = design.matrices(tr, va, te)
    base = fit_model("mlp", dict(h1=128, h2=64, dropout=0.0), X_tr, design.y[tr], seed)
    grid = HyperGrid()
    sweep = ni.sigma_sweep(base, X_tr, design.ids[tr], design.y[tr], X_va, design.ids[va],
                           design.y[va], grid.nimlp_lambda, grid.nimlp_sigma, seed=seed,
                           n_users=design.n_users)
    ids = design.ids[te]
    raw = train_identity_probe(X_te, ids, 5, seed).accuracy
    mlp = train_identity_probe(base.features(X_te), ids, 5, seed).accuracy
    nim = train_identity_probe(sweep.model.head_inputs(X_te, ids, seed), ids, 5, seed).accuracy
    return raw, mlp, nim


def test_c05_privacy_ordering(criterion):
    runs = np.array([_privacy_run(s) for s in SEEDS])
    raw, mlp, nim = np.median(runs, axis=0)
    ok = raw > mlp > nim and nim <= 0.6 * mlp
    criterion(5, "probe(raw) > probe(MLP) > probe(NI-MLP), NI <= 0.6 MLP", ok,
              f"medians raw {raw:.3f}, MLP {mlp:.3f}, NI-MLP {nim:.3f} "
              f"(ratio {nim / mlp:.2f}); beta_id=0.8, full lambda x sigma grid")
    assert ok


# 6 -------------------------------------------------------------------------

def test_c06_multimodal_gain(criterion):
    grid = HyperGrid(**SINGLE_MLP)
    gains, pvals, rows = [], [], []
    for seed in SEEDS:
        base = _design(seed=seed, interaction_signal=1.0, mood_signal=0.0)
        reps = {m: nested_cv(base.with_modality(m), "mlp", grid, seed=seed)
                for m in ("both", "text", "apps")}
        f1 = {m: r.mean_f1 for m, r in reps.items()}
        gains.append(f1["both"] - max(f1["text"], f1["apps"]))
        pvals.append(max(compare(reps["both"], reps[m]).pvalue for m in ("text", "apps")))
        rows.append(f1)
    gain, p = float(np.median(gains)), float(np.median(pvals))
    ok = gain >= 0.05 and p < 0.05
    criterion(6, "fused MLP beats each unimodal MLP by >= 5 F1 points", ok,
              f"median gain {100 * gain:.1f} points, median worst-case Wilcoxon p {p:.4f}; "
              f"fused F1 {np.median([r['both'] for r in rows]):.3f}, "
              f"text {np.median([r['text'] for r in rows]):.3f}, "
              f"apps {np.median([r['apps'] for r in rows]):.3f}")
    assert ok


# 7 and 11 share one set of nested runs ------------------------------------

@pytest.fixture(scope="module")
def mood_runs():
    design = _design(seed=7, mood_signal=0.7).with_modality("both")
    grid = HyperGrid(svm_C=(1.0,), svm_kernel=("rbf",), **SINGLE_MLP)
    plan = chrono_partition(design.samples)
    reports = {k: nested_cv(design, k, grid, plan=plan, seed=7)
               for k in ("majority", "svm", "mlp")}
    return design, plan, reports


def test_c07_baseline_gap(mood_runs, criterion):
    _, _, reports = mood_runs
    base = reports["majority"]
    parts, ok = [], True
    for kind in ("svm", "mlp"):
        rep = reports[kind]
        for metric, mine, theirs in (("f1", rep.mean_f1, base.mean_f1),
                                     ("acc", rep.mean_accuracy, base.mean_accuracy)):
            p = compare(rep, base, metric).pvalue
            ok &= mine > theirs and p < 0.05
            parts.append(f"{kind} {metric} {mine:.3f} vs {theirs:.3f} (p={p:.4f})")
    criterion(7, "SVM and MLP beat the majority baseline", ok, "; ".join(parts))
    assert ok


def test_c11_no_leakage(mood_runs, criterion):
    design, plan, reports = mood_runs
    audits = [audit_leakage(r, design, plan) for r in reports.values()]
    checks = sum(len(a.checks) for a in audits)
    failures = [f for a in audits for f in a.failures()]
    folds = {f.fold for r in reports.values() for f in r.folds}
    ok = not failures and folds == set(range(10))
    criterion(11, "no vocab or model fit on its own test fold", ok,
              f"{checks} provenance checks over {len(folds)} folds, {len(failures)} failures")
    assert ok


# 8 -------------------------------------------------------------------------

def test_c08_wilcoxon_exact(criterion):
    rng = np.random.default_rng(808)
    worst, cases = 0.0, 0
    for _ in range(200):
        n = int(rng.integers(1, 13))
        a = rng.integers(0, 6, n).astype(float)      # small integers force ties and zeros
        b = rng.integers(0, 6, n).astype(float)
        if rng.random() < 0.5:
            a = a + rng.normal(scale=0.1, size=n).round(1)
        w_ref, p_ref = oracles.wilcoxon_enumeration(a.tolist(), b.tolist())
        with pytest.warns(UserWarning) if np.count_nonzero(a - b) < 5 else nullcontext():
            res = wilcoxon_signed_rank(a, b)
        worst = max(worst, abs(res.pvalue - p_ref), abs(res.statistic - w_ref))
        cases += 1
    ok = worst < 1e-12
    criterion(8, "exact Wilcoxon vs sign enumeration", ok,
              f"max deviation {worst:.1e} over {cases} inputs with n <= 12")
    assert ok


# 9 -------------------------------------------------------------------------

def test_c09_tradeoff_ratio(criterion):
    r = ni.compute_tradeoff_ratio(79.04, 36.65, 58.38, 52.90)
    ok = abs(r - 7.735) < 1e-3
    criterion(9, "tradeoff ratio arithmetic", ok, f"R = {r:.4f} (target 7.735 +- 1e-3)")
    assert ok


# 10 ------------------------------------------------------------------------

def test_c10_determinism(tmp_path, criterion):
    cfg = replace(RunConfig(seed=10, model="mlp", modality="text"),
                  grid=HyperGrid(**SINGLE_MLP)).validate()
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        out.mkdir()
        cmd_run(cfg, out)
        outs.append(out)
    files = ("metrics.csv", "table.csv", "provenance.csv", "config.json")
    same = {f: (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files}
    models = sorted(p.name for p in (outs[0] / "models").iterdir())
    same["models"] = all((outs[0] / "models" / m).read_bytes() == (outs[1] / "models" / m).read_bytes()
                         for m in models)
    ok = all(same.values())
    criterion(10, "two cmd_run executions are byte-identical", ok,
              ", ".join(f"{k} {'same' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok
