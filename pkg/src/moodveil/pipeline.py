"""End-to-end stages behind the command-line interface.

Each ``cmd_*`` function takes a validated :class:`RunConfig` and an output
directory, writes comma-delimited tables plus model containers there, and
returns the in-memory results. Any failure is re-raised as
:class:`StageError` naming the stage that broke.
"""
from __future__ import annotations

import csv
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nimlp as ni
from .config import RunConfig
from .data_model import filter_participants, load_events, load_labels, window_events
from .evaluation import (Design, EvalReport, FeatureSpec, FoldResult, audit_leakage,
                         chrono_partition, default_user_groups, export_reports, fit_model,
                         format_table, nested_cv, select_params, user_split, user_split_eval)
from .featurizer import export_vocab
from .models import grid_candidates, save_model
from .privacy_audit import AuditInput, audit_suite, export_audit, export_projection
from .rng import child_seed
from .synthgen import describe, generate, generate_samples

OUT_ENV = "MOODVEIL_OUT"


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")
        self.stage = stage


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def resolve_out(cfg: RunConfig, command: str) -> Path:
    if cfg.out:
        return Path(cfg.out)
    root = os.environ.get(OUT_ENV, "moodveil_out")
    return Path(root) / f"{command}-seed{cfg.seed}"


def prepare_out(path: Path, force: bool) -> Path:
    """Create ``path``; refuse to reuse a non-empty directory unless forced."""
    if path.exists() and any(path.iterdir()) and not force:
        raise FileExistsError(f"output directory {path} is not empty (use --force)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(out: Path, cfg: RunConfig, command: str) -> None:
    (out / "config.json").write_text(cfg.to_json(), encoding="utf-8")
    seeds = {"root": cfg.seed, "data": child_seed(cfg.seed, "data")}
    (out / "seeds.json").write_text(json.dumps({"command": command, **seeds}, sort_keys=True)
                                    + "\n", encoding="utf-8")


def load_samples(cfg: RunConfig):
    with stage("load"):
        if cfg.events is not None:
            samples = window_events(load_events(cfg.events), load_labels(cfg.labels),
                                    cfg.tz_offset_minutes, cfg.drop_empty_days)
        else:
            samples = generate_samples(cfg.synth_config)
    with stage("filter"):
        return filter_participants(samples, cfg.min_reports)


def make_design(cfg: RunConfig, samples, modality: str = "both") -> Design:
    spec = FeatureSpec(modality, cfg.top_k, cfg.min_user_frac, cfg.norm, cfg.vocab_scope)
    return Design(samples, spec)


# -- generate ---------------------------------------------------------------

def cmd_generate(cfg: RunConfig, out: Path, show_summary: bool = False):
    with stage("generate"):
        paths = generate(cfg.synth_config, out)
        (out / "config.json").write_text(cfg.to_json(), encoding="utf-8")
    summary = None
    if show_summary:
        with stage("describe"):
            samples = window_events(load_events(paths[0]), load_labels(paths[1]),
                                    cfg.synth_config.tz_offset_minutes)
            summary = describe(samples)
    return paths, summary


# -- run --------------------------------------------------------------------

@dataclass
class RunResult:
    reports: list[EvalReport]
    table: str
    leakage_ok: bool


def _evaluate(cfg, design, kind, cache):
    if cfg.split == "user":
        users = sorted({s.user_id for s in design.samples})
        groups = default_user_groups(users, cfg.user_groups)
        return user_split_eval(design, kind, user_split(design.samples, *groups), cfg.grid,
                               cfg.seed, cfg.jobs)
    return nested_cv(design, kind, cfg.grid, k=cfg.folds, seed=cfg.seed, jobs=cfg.jobs,
                     cache=cache)


def _save_artifacts(out: Path, rep: EvalReport) -> None:
    mdir = out / "models"
    mdir.mkdir(exist_ok=True)
    for f in rep.folds:
        model = f.extra.get("model")
        path = mdir / f"{rep.kind}_{rep.modality}_fold{f.fold}.mvml"
        if isinstance(model, ni.NiMlpModel):
            ni.save_nimlp(path, model, {"params": f.params})
        elif model is not None:
            save_model(path, model, {"params": f.params})


def export_provenance(path: Path, reports, designs) -> bool:
    ok = True
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "modality", "fold", "stage", "fit_rows", "fit_hash",
                    "vocab_text", "vocab_app", "model_hash", "test_hash", "passed"])
        for rep in reports:
            design = designs[rep.modality]
            audit = audit_leakage(rep, design)
            ok &= audit.ok
            failed = {(c[0], c[1].split("/")[0]) for c in audit.failures()}
            for f in rep.folds:
                test_hash = design.key_hash(f.test_rows)
                for name, rec in f.fits.items():
                    h = rec.hashes
                    w.writerow([rep.kind, rep.modality, f.fold, name, len(rec.rows),
                                design.key_hash(rec.rows), h.get("vocab_text") or "",
                                h.get("vocab_app") or "", h.get("model") or "", test_hash,
                                int((f.fold, name) not in failed)])
    return ok


def cmd_run(cfg: RunConfig, out: Path) -> RunResult:
    write_manifest(out, cfg, "run")
    samples = load_samples(cfg)
    base = make_design(cfg, samples)
    designs, reports = {}, []
    cache: dict = {}
    for modality in cfg.modalities:
        design = base.with_modality(modality)
        designs[modality] = design
        for kind in cfg.kinds:
            with stage(f"{kind}/{modality}"):
                reports.append(_evaluate(cfg, design, kind, cache))
    with stage("report"):
        export_reports(out / "metrics.csv", reports)
        table = format_table(reports)
        (out / "table.csv").write_text(table + "\n", encoding="utf-8")
        ok = export_provenance(out / "provenance.csv", reports, designs)
    with stage("artifacts"):
        for rep in reports:
            _save_artifacts(out, rep)
        vdir = out / "vocab"
        vdir.mkdir(exist_ok=True)
        tv, av = base.vocabs(_first_fit_rows(cfg, base))
        export_vocab(vdir / "text_fold0.tsv", tv)
        export_vocab(vdir / "apps_fold0.tsv", av)
    return RunResult(reports, table, ok)


def _first_fit_rows(cfg, design):
    if cfg.split == "user":
        users = sorted({s.user_id for s in design.samples})
        return user_split(design.samples, *default_user_groups(users, cfg.user_groups)).train
    return chrono_partition(design.samples, cfg.folds).train_indices(0)


# -- sweep / audit ----------------------------------------------------------

@dataclass
class HoldoutRun:
    """Base MLP and NI-MLP sweep on one train / validation / test partition."""

    design: Design
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    X: tuple
    base: object
    sweep: ni.SweepResult


def holdout_partition(cfg: RunConfig, design: Design):
    """Chronological: last fold is test, the one before it validation. Users: the group split."""
    if cfg.split == "user":
        users = sorted({s.user_id for s in design.samples})
        sp = user_split(design.samples, *default_user_groups(users, cfg.user_groups))
        return sp.train, sp.val, sp.test
    plan = chrono_partition(design.samples, cfg.folds)
    k = plan.k
    return (np.flatnonzero(plan.fold_of < k - 2), plan.test_indices(k - 2),
            plan.test_indices(k - 1))


def holdout_run(cfg: RunConfig, design: Design) -> HoldoutRun:
    tr, va, te = holdout_partition(cfg, design)
    (X_tr, X_va, X_te), _ = design.matrices(tr, va, te)
    with stage("base-mlp"):
        params, _ = select_params(design, "mlp", grid_candidates(cfg.grid, "mlp"), [(tr, va)],
                                  [child_seed(cfg.seed, "mlp", 0, 0)], cfg.jobs)
        base = fit_model("mlp", params, X_tr, design.y[tr], child_seed(cfg.seed, "mlp", 0, 1))
    with stage("sweep"):
        sweep = ni.sigma_sweep(base, X_tr, design.ids[tr], design.y[tr], X_va, design.ids[va],
                               design.y[va], cfg.grid.nimlp_lambda, cfg.grid.nimlp_sigma,
                               seed=child_seed(cfg.seed, "nimlp", 0, 0),
                               probe_folds=cfg.probe_folds, n_users=design.n_users)
    return HoldoutRun(design, tr, va, te, (X_tr, X_va, X_te), base, sweep)


def cmd_sweep(cfg: RunConfig, out: Path) -> dict:
    write_manifest(out, cfg, "sweep")
    samples = load_samples(cfg)
    base = make_design(cfg, samples)
    runs = {}
    for modality in cfg.modalities:
        run = holdout_run(cfg, base.with_modality(modality))
        with stage("export"):
            ni.export_sweep(out / f"sweep_{modality}.csv", run.sweep)
            ni.export_sweep(out / f"pareto_{modality}.csv",
                            ni.SweepResult(run.sweep.pareto, run.sweep.selected, run.sweep.pareto,
                                           run.sweep.base_t, run.sweep.base_s))
            ni.save_nimlp(out / f"nimlp_{modality}.mvml", run.sweep.model,
                          {"base_t": run.sweep.base_t, "base_s": run.sweep.base_s})
        runs[modality] = run
    return runs


def cmd_audit(cfg: RunConfig, out: Path):
    write_manifest(out, cfg, "audit")
    samples = load_samples(cfg)
    base = make_design(cfg, samples)
    entries = {}
    for modality in cfg.modalities:
        run = holdout_run(cfg, base.with_modality(modality))
        te = run.test
        entries[modality] = AuditInput(run.X[2], run.design.ids[te], run.base, run.sweep.model)
    with stage("audit"):
        method = None if cfg.method == "none" else cfg.method
        table = audit_suite(entries, cfg.probe_folds, child_seed(cfg.seed, "probe"), method,
                            cfg.perplexity)
    with stage("export"):
        export_audit(out / "audit.csv", table)
        users = np.array(sorted({s.user_id for s in samples}), dtype=object)
        for (rep, mod), proj in table.projections.items():
            export_projection(out / f"projection_{rep}_{mod}.csv", proj, users[table.ids[mod]])
    return table


# -- report -----------------------------------------------------------------

def reports_from_csv(path: str | Path) -> list[EvalReport]:
    """Rebuild per-fold scores from a metrics file written by :func:`cmd_run`."""
    reports: dict[tuple, EvalReport] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["fold"] == "mean":
                continue
            key = (row["model"], row["modality"])
            rep = reports.setdefault(key, EvalReport(*key, []))
            prec = np.array([float(row[f"precision_{c}"]) for c in ("neg", "neu", "pos")])
            rec = np.array([float(row[f"recall_{c}"]) for c in ("neg", "neu", "pos")])
            rep.folds.append(FoldResult(int(row["fold"]), json.loads(row["params"]),
                                        float(row["accuracy"]), float(row["macro_f1"]),
                                        prec, rec, np.empty(0, np.int64), np.empty(0, np.int64)))
    return list(reports.values())


def cmd_report(run_dir: str | Path) -> str:
    with stage("report"):
        return format_table(reports_from_csv(Path(run_dir) / "metrics.csv"))
