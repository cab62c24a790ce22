"""Nested cross-validation over chronological folds, with provenance tracking.

Every vocabulary and model is fit on an explicit set of sample rows. Those
rows are recorded per outer fold together with the provenance hashes the fit
objects carry, so :func:`audit_leakage` can confirm afterwards that nothing
fit for a fold ever saw that fold's test samples.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import nimlp as _ni
from ..data_model import DailySample
from ..featurizer import CountTable, Modality, provenance_hash
from ..models import (ConvergenceError, HyperGrid, MlpHyper, grid_candidates, train_majority,
                      train_mlp, train_svm)
from ..rng import child_seed
from .metrics import accuracy, macro_f1, precision_recall_f1
from .splits import FoldPlan, UserSplit, chrono_partition
from .stats import WilcoxonResult, wilcoxon_signed_rank

MODALITY_ORDER = ("both", "text", "apps")
MODALITY_LABELS = {"both": "Text+Apps", "text": "Text", "apps": "Apps"}
KIND_ORDER = ("majority", "svm", "mlp", "nimlp")
KIND_LABELS = {"majority": "Baseline", "svm": "SVM", "mlp": "MLP", "nimlp": "NI-MLP"}


@dataclass(frozen=True)
class FeatureSpec:
    modality: str = "both"
    top_k: int = 1000
    min_user_frac: float = 0.10
    norm: str = "l1"
    vocab_scope: str = "fold"    # "fold": vocabularies fit on training rows only

    def __post_init__(self):
        Modality(self.modality)
        if self.vocab_scope not in ("fold", "global"):
            raise ValueError("vocab_scope must be 'fold' or 'global'")


class Design:
    """Samples plus everything needed to build fold-local feature matrices."""

    def __init__(self, samples: Sequence[DailySample], spec: FeatureSpec = FeatureSpec(),
                 table: CountTable | None = None):
        self.samples = list(samples)
        self.spec = spec
        self.table = table if table is not None else CountTable(self.samples)
        self.y = np.array([int(s.label) for s in self.samples], dtype=np.int64)
        self.ids = self.table.user_codes
        self.keys = self.table.keys
        self.n_users = int(self.ids.max()) + 1 if len(self.ids) else 0
        self._vocab_cache: dict[bytes, tuple] = {}

    def with_modality(self, modality: str) -> "Design":
        spec = FeatureSpec(modality, self.spec.top_k, self.spec.min_user_frac,
                           self.spec.norm, self.spec.vocab_scope)
        return Design(self.samples, spec, self.table)

    def key_hash(self, rows) -> str:
        return provenance_hash(self.keys[i] for i in rows)

    def vocabs(self, fit_rows: np.ndarray):
        fit_rows = np.asarray(fit_rows, dtype=np.int64)
        if self.spec.vocab_scope == "global":
            fit_rows = np.arange(len(self.samples))
        key = fit_rows.tobytes()
        if key not in self._vocab_cache:
            mod = Modality(self.spec.modality)
            tv = (self.table.text_vocab(fit_rows, self.spec.top_k)
                  if mod in (Modality.TEXT, Modality.BOTH) else None)
            av = (self.table.app_vocab(fit_rows, self.spec.min_user_frac)
                  if mod in (Modality.APPS, Modality.BOTH) else None)
            self._vocab_cache[key] = (tv, av)
        return self._vocab_cache[key]

    def matrices(self, fit_rows, *eval_rows):
        """Feature matrices for ``fit_rows`` and each of ``eval_rows`` under vocabularies fit on ``fit_rows``."""
        tv, av = self.vocabs(fit_rows)
        mats = [self.table.features(self.spec.modality, tv, av, r, self.spec.norm)
                for r in (fit_rows, *eval_rows)]
        return mats, _vocab_hashes(self, fit_rows)


def _vocab_hashes(design: Design, rows) -> dict:
    tv, av = design.vocabs(rows)
    return {"vocab_text": tv.provenance if tv else None,
            "vocab_app": av.provenance if av else None}


def fit_model(kind: str, params: dict, X, y, seed: int):
    if kind == "majority":
        return train_majority(y)
    if kind == "svm":
        return train_svm(X, y, C=params["C"], kernel=params["kernel"])
    if kind in ("mlp", "nimlp"):
        return train_mlp(X, y, MlpHyper(**params), seed)
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class FitRecord:
    """Rows one stage was fit on and the provenance hashes its outputs carry."""

    rows: np.ndarray
    hashes: dict


@dataclass
class FoldResult:
    fold: int
    params: dict
    accuracy: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    test_rows: np.ndarray
    predictions: np.ndarray
    fits: dict = field(default_factory=dict)      # stage -> FitRecord
    extra: dict = field(default_factory=dict)


@dataclass
class EvalReport:
    kind: str
    modality: str
    folds: list[FoldResult]
    split: str = "nested"

    @property
    def fold_accuracy(self) -> np.ndarray:
        return np.array([f.accuracy for f in self.folds])

    @property
    def fold_f1(self) -> np.ndarray:
        return np.array([f.macro_f1 for f in self.folds])

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracy))

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.fold_f1))

    def rows(self):
        for f in self.folds:
            yield [self.kind, self.modality, str(f.fold), f"{f.accuracy:.6f}", f"{f.macro_f1:.6f}",
                   json.dumps(f.params, sort_keys=True),
                   *(f"{v:.6f}" for v in f.precision), *(f"{v:.6f}" for v in f.recall)]
        yield [self.kind, self.modality, "mean", f"{self.mean_accuracy:.6f}",
               f"{self.mean_f1:.6f}", "", *[""] * 6]


CSV_HEADER = ["model", "modality", "fold", "accuracy", "macro_f1", "params",
              "precision_neg", "precision_neu", "precision_pos",
              "recall_neg", "recall_neu", "recall_pos"]


def export_reports(path: str | Path, reports: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rep in reports:
            w.writerows(rep.rows())


def compare(a: EvalReport, b: EvalReport, metric: str = "f1", alpha: float = 0.05) -> WilcoxonResult:
    """Paired signed-rank test of ``a`` against ``b`` over matching folds."""
    get = (lambda r: r.fold_f1) if metric == "f1" else (lambda r: r.fold_accuracy)
    if [f.fold for f in a.folds] != [f.fold for f in b.folds]:
        raise ValueError("reports cover different folds")
    return wilcoxon_signed_rank(get(a), get(b), alpha)


def format_table(reports: Sequence[EvalReport], alpha: float = 0.05) -> str:
    """Modality rows by model columns, F1 block then accuracy block, in percent.

    A trailing ``*`` marks a model whose per-fold scores differ from the
    baseline's at level ``alpha`` (two-sided exact signed-rank test).
    """
    by = {(r.kind, r.modality): r for r in reports}
    kinds = [k for k in KIND_ORDER if any(kk == k for kk, _ in by)]
    mods = [m for m in MODALITY_ORDER if any(mm == m for _, mm in by)]
    header = ["modality"] + [f"{KIND_LABELS[k]} F1" for k in kinds] \
        + [f"{KIND_LABELS[k]} Acc" for k in kinds]
    lines = [",".join(header)]
    for m in mods:
        cells = [MODALITY_LABELS[m]]
        for metric in ("f1", "acc"):
            for k in kinds:
                rep = by.get((k, m))
                if rep is None:
                    cells.append("-")
                    continue
                val = rep.mean_f1 if metric == "f1" else rep.mean_accuracy
                mark = ""
                base = by.get(("majority", m))
                if k != "majority" and base is not None and len(rep.folds) >= 5:
                    if compare(rep, base, metric, alpha).significant:
                        mark = "*"
                cells.append(f"{100 * val:.2f}{mark}")
        lines.append(",".join(cells))
    return "\n".join(lines)


def _score(design: Design, kind: str, params: dict, fit_rows, val_rows, seed: int) -> float:
    (X_fit, X_val), _ = design.matrices(fit_rows, val_rows)
    try:
        model = fit_model(kind, params, X_fit, design.y[fit_rows], seed)
    except ConvergenceError:
        return -math.inf
    return macro_f1(model.predict(X_val), design.y[val_rows])


def select_params(design: Design, kind: str, candidates: list[dict],
                  splits: list[tuple[np.ndarray, np.ndarray]], seeds: list[int],
                  jobs: int = 1) -> tuple[dict, np.ndarray]:
    """Candidate with the highest mean validation macro-F1 (first one wins ties)."""
    if len(candidates) == 1:
        return candidates[0], np.zeros(1)
    tasks = [(c, s) for c in range(len(candidates)) for s in range(len(splits))]

    def run(task):
        c, s = task
        return _score(design, kind, candidates[c], *splits[s], seeds[s])

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            scores = list(pool.map(run, tasks))
    else:
        scores = [run(t) for t in tasks]
    means = np.array(scores).reshape(len(candidates), len(splits)).mean(axis=1)
    return candidates[int(np.argmax(means))], means


def _mlp_outer(design, grid, plan, outer, seed, jobs, cache):
    """Selected MLP setting and its refit on every non-test fold (cached for NI-MLP reuse)."""
    key = ("mlp", design.spec, outer)
    if cache is not None and key in cache:
        return cache[key]
    train = plan.train_indices(outer)
    inner = plan.inner_splits(outer)
    seeds = [child_seed(seed, "mlp", outer, v) for v in range(len(inner))]
    params, means = select_params(design, "mlp", grid_candidates(grid, "mlp"), inner, seeds, jobs)
    (X_tr,), hashes = design.matrices(train)
    model = fit_model("mlp", params, X_tr, design.y[train], child_seed(seed, "mlp", outer, plan.k))
    model.meta["provenance"] = design.key_hash(train)
    out = (params, means, model, hashes)
    if cache is not None:
        cache[key] = out
    return out


def _sweep_fold(design, grid, plan, outer, params, seed):
    """Pick (lambda, sigma) on one inner validation fold, base refit on the rest."""
    val_fold = (outer - 1) % plan.k
    train = plan.train_indices(outer)
    fit = train[plan.fold_of[train] != val_fold]
    val = plan.test_indices(val_fold)
    (X_fit, X_val), hashes = design.matrices(fit, val)
    base = fit_model("mlp", params, X_fit, design.y[fit], child_seed(seed, "mlp", outer, val_fold))
    base.meta["provenance"] = design.key_hash(fit)
    sweep = _ni.sigma_sweep(base, X_fit, design.ids[fit], design.y[fit],
                            X_val, design.ids[val], design.y[val],
                            grid.nimlp_lambda, grid.nimlp_sigma,
                            seed=child_seed(seed, "nimlp", outer, 0), n_users=design.n_users)
    rec = FitRecord(fit, {**hashes, "model": base.meta["provenance"]})
    return sweep, rec


def _check_same(a: str, b: str) -> str:
    # base, encoder and head of an NI-MLP must share one fit set
    return a if a == b else f"mismatch:{a}:{b}"


def _evaluate(fold, params, preds, y_true, test_rows, fits, extra=None) -> FoldResult:
    p, r, _ = precision_recall_f1(preds, y_true)
    return FoldResult(fold, params, accuracy(preds, y_true), macro_f1(preds, y_true), p, r,
                      test_rows, preds, fits, extra or {})


def nested_cv(design: Design, kind: str, grid: HyperGrid = HyperGrid(),
              plan: FoldPlan | None = None, k: int = 10, seed: int = 0, jobs: int = 1,
              cache: dict | None = None, folds: Sequence[int] | None = None) -> EvalReport:
    """Grid search on the k-1 inner folds, refit on all of them, score the test fold.

    ``nimlp`` reuses the selected MLP of each outer fold as its frozen base,
    picks (lambda, sigma) by the tradeoff ratio on the inner fold preceding
    the test fold, then fits the encoder and noisy head on the full training
    part. Pass the same ``cache`` dict to the ``mlp`` and ``nimlp`` calls to
    share base models.
    """
    plan = plan or chrono_partition(design.samples, k)
    results = []
    for outer in (range(plan.k) if folds is None else folds):
        train, test = plan.train_indices(outer), plan.test_indices(outer)
        (X_tr, X_te), hashes = design.matrices(train, test)
        train_hash = design.key_hash(train)
        fits = {}
        inner = plan.inner_splits(outer)
        for v, (fit_rows, _) in enumerate(inner):
            fits[f"inner{v}"] = FitRecord(fit_rows, _vocab_hashes(design, fit_rows))
        extra = {}
        if kind in ("mlp", "nimlp"):
            params, means, model, _ = _mlp_outer(design, grid, plan, outer, seed, jobs, cache)
        else:
            seeds = [child_seed(seed, kind, outer, v) for v in range(len(inner))]
            params, means = select_params(design, kind, grid_candidates(grid, kind), inner,
                                          seeds, jobs)
            model = fit_model(kind, params, X_tr, design.y[train],
                              child_seed(seed, kind, outer, plan.k))
            model.meta["provenance"] = train_hash
        extra["inner_means"] = means
        if kind == "nimlp":
            sweep, rec = _sweep_fold(design, grid, plan, outer, params, seed)
            fits["sweep"] = rec
            sel = sweep.selected
            enc = _ni.fit_identity_encoder(model.features(X_tr), design.ids[train], sel.lam,
                                           design.n_users)
            head = _ni.train_noisy_head(model, enc, X_tr, design.ids[train], design.y[train],
                                        sel.sigma, child_seed(seed, "nimlp", outer, 1))
            ni = _ni.NiMlpModel(model, enc, head, {"provenance": design.key_hash(train)})
            preds = ni.predict(X_te)
            params = {**params, "lambda": sel.lam, "sigma": sel.sigma}
            extra.update(sweep=sweep, model=ni)
            model_hash = _check_same(model.meta["provenance"], ni.meta["provenance"])
        else:
            preds = model.predict(X_te)
            extra["model"] = model
            model_hash = model.meta["provenance"]
        fits["final"] = FitRecord(train, {**hashes, "model": model_hash})
        results.append(_evaluate(outer, params, preds, design.y[test], test, fits, extra))
    return EvalReport(kind, design.spec.modality, results)


def user_split_eval(design: Design, kind: str, split: UserSplit, grid: HyperGrid = HyperGrid(),
                    seed: int = 0, jobs: int = 1) -> EvalReport:
    """Select on validation users, refit on training users, score unseen test users."""
    tr, va, te = split.train, split.val, split.test
    candidates = grid_candidates(grid, "mlp" if kind == "nimlp" else kind)
    base_kind = "mlp" if kind == "nimlp" else kind
    params, means = select_params(design, base_kind, candidates, [(tr, va)],
                                  [child_seed(seed, base_kind, 0, 0)], jobs)
    (X_tr, X_va, X_te), hashes = design.matrices(tr, va, te)
    model = fit_model(base_kind, params, X_tr, design.y[tr], child_seed(seed, base_kind, 0, 1))
    model.meta["provenance"] = design.key_hash(tr)
    extra = {"inner_means": means, "model": model}
    fits = {"final": FitRecord(tr, {**hashes, "model": model.meta["provenance"]})}
    if kind == "nimlp":
        # Validation users are unseen by the encoder; their rows get zero identity codes.
        sweep = _ni.sigma_sweep(model, X_tr, design.ids[tr], design.y[tr], X_va, design.ids[va],
                                design.y[va], grid.nimlp_lambda, grid.nimlp_sigma,
                                seed=child_seed(seed, "nimlp", 0, 0), n_users=design.n_users)
        ni = sweep.model
        params = {**params, "lambda": sweep.selected.lam, "sigma": sweep.selected.sigma}
        extra.update(sweep=sweep, model=ni)
        preds = ni.predict(X_te)
    else:
        preds = model.predict(X_te)
    return EvalReport(kind, design.spec.modality,
                      [_evaluate(0, params, preds, design.y[te], te, fits, extra)], split="user")


@dataclass
class LeakageAudit:
    ok: bool
    checks: list[tuple[int, str, bool, str]]    # (fold, stage, passed, detail)

    def failures(self):
        return [c for c in self.checks if not c[2]]


def audit_leakage(report: EvalReport, design: Design, plan: FoldPlan | None = None) -> LeakageAudit:
    """Recompute fit-set hashes and confirm every fit set is disjoint from its test fold.

    With ``vocab_scope="global"`` the vocabulary hashes cover the whole
    dataset, so those checks fail by design.
    """
    checks = []
    for f in report.folds:
        test = set(f.test_rows.tolist())
        if plan is not None:
            same = np.array_equal(np.sort(f.test_rows), plan.test_indices(f.fold))
            checks.append((f.fold, "test_rows", same, "test rows match the fold plan"))
        test_keys = {design.keys[i] for i in test}
        for stage, rec in f.fits.items():
            rows = rec.rows.tolist()
            disjoint = test.isdisjoint(rows) and test_keys.isdisjoint(design.keys[i] for i in rows)
            checks.append((f.fold, stage, disjoint, f"{len(rows)} fit rows vs {len(test)} test rows"))
            expected = design.key_hash(rows)
            for name, h in rec.hashes.items():
                if h is not None:
                    checks.append((f.fold, f"{stage}/{name}", h == expected,
                                   "provenance hash matches fit rows"))
    return LeakageAudit(all(c[2] for c in checks), checks)
