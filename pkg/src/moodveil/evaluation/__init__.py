"""Chronological folds, nested cross-validation, metrics and significance tests."""
from .metrics import accuracy, confusion_matrix, macro_f1, precision_recall_f1
from .nested import (Design, EvalReport, FeatureSpec, FoldResult, LeakageAudit, audit_leakage,
                     compare, export_reports, fit_model, format_table, nested_cv, select_params,
                     user_split_eval)
from .splits import FoldPlan, UserSplit, chrono_partition, default_user_groups, user_split
from .stats import WilcoxonResult, wilcoxon_signed_rank

__all__ = [
    "accuracy", "confusion_matrix", "macro_f1", "precision_recall_f1",
    "Design", "EvalReport", "FeatureSpec", "FoldResult", "LeakageAudit", "audit_leakage",
    "compare", "export_reports", "fit_model", "format_table", "nested_cv", "select_params",
    "user_split_eval", "FoldPlan", "UserSplit", "chrono_partition", "default_user_groups",
    "user_split", "WilcoxonResult", "wilcoxon_signed_rank",
]
