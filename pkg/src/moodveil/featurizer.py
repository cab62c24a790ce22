"""Bag-of-words / bag-of-apps featurization and early fusion.

Each modality produces ``[normalized counts | binarized counts]``, so a
vocabulary of size V gives a 2V-dimensional vector. Fused vectors are the
text vector followed by the app vector.
"""
from __future__ import annotations

import enum
import hashlib
import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from ._stopwords import STOPWORDS, STOPWORDS_VERSION
from .data_model import DailySample, sample_key

__all__ = [
    "Modality", "VocabKind", "Vocab", "FeatureVector", "CountTable",
    "tokenize", "build_text_vocab", "build_app_vocab", "bag_counts",
    "normalize_binarize", "fuse", "provenance_hash", "export_vocab",
    "export_feature_matrix", "DEFAULT_STOPWORDS",
]

DEFAULT_STOPWORDS = STOPWORDS
NORMS = ("l1", "l2", "max")

_TOKEN_RE = re.compile(r"[^\W_]+")


class Modality(str, enum.Enum):
    TEXT = "text"
    APPS = "apps"
    BOTH = "both"


class VocabKind(str, enum.Enum):
    TEXT = "text"
    APP = "app"


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def provenance_hash(keys: Iterable[tuple[str, str]]) -> str:
    """Order-independent digest of the sample keys an object was fit on."""
    h = hashlib.sha256()
    for user, date in sorted(keys):
        h.update(f"{user}\x1f{date}\x1e".encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    kind: VocabKind
    freqs: tuple[int, ...] = ()
    thresholds: dict = field(default_factory=dict, compare=False)
    provenance: str = ""
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def digest(self) -> str:
        """Hash of tokens, thresholds and fit provenance."""
        h = hashlib.sha256()
        h.update(self.kind.value.encode())
        h.update(repr(sorted(self.thresholds.items())).encode())
        h.update(self.provenance.encode())
        h.update("\x1f".join(self.tokens).encode("utf-8"))
        return h.hexdigest()


def _rank_tokens(counts: dict[str, int]) -> list[tuple[str, int]]:
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def _select_text(counts: dict[str, int], top_k: int, stopwords) -> list[tuple[str, int]]:
    if not counts:
        raise ValueError("cannot build a text vocabulary from an empty corpus")
    kept = {t: c for t, c in counts.items() if t not in stopwords and c > 0}
    if not kept:
        warnings.warn("every corpus token is a stopword; text vocabulary is empty")
    return _rank_tokens(kept)[:top_k]


def _app_threshold(min_user_frac: float, n_users: int) -> int:
    # round() guards against products like 0.1 * 30 = 3.0000000000000004.
    return math.ceil(round(min_user_frac * n_users, 9))


def build_text_vocab(samples: Sequence[DailySample], top_k: int = 1000,
                     stopwords=DEFAULT_STOPWORDS) -> Vocab:
    if not samples:
        raise ValueError("cannot build a text vocabulary from zero samples")
    counts = Counter()
    for s in samples:
        counts.update(tokenize(s.text))
    ranked = _select_text(counts, top_k, stopwords)
    return Vocab(tuple(t for t, _ in ranked), VocabKind.TEXT,
                 tuple(c for _, c in ranked), _text_thresholds(top_k, stopwords),
                 provenance_hash(sample_key(s) for s in samples))


def _text_thresholds(top_k, stopwords) -> dict:
    tag = STOPWORDS_VERSION if stopwords is DEFAULT_STOPWORDS else f"custom-{len(stopwords)}"
    return {"top_k": top_k, "stopwords": tag}


def build_app_vocab(samples: Sequence[DailySample], min_user_frac: float = 0.10) -> Vocab:
    """Keep apps typed in by at least ceil(min_user_frac * U) distinct users."""
    users = {s.user_id for s in samples}
    if not users:
        raise ValueError("app vocabulary needs samples from at least one user")
    keystrokes = Counter()
    users_of = {}
    for s in samples:
        for ev in s.events:
            keystrokes[ev.app] += ev.keystrokes
            users_of.setdefault(ev.app, set()).add(s.user_id)
    need = _app_threshold(min_user_frac, len(users))
    kept = {a: c for a, c in keystrokes.items() if len(users_of[a]) >= need}
    ranked = _rank_tokens(kept)
    return Vocab(tuple(a for a, _ in ranked), VocabKind.APP,
                 tuple(c for _, c in ranked),
                 {"min_user_frac": min_user_frac, "min_users": need},
                 provenance_hash(sample_key(s) for s in samples))


def bag_counts(sample: DailySample, vocab: Vocab) -> np.ndarray:
    counts = np.zeros(len(vocab), dtype=np.int64)
    if vocab.kind is VocabKind.TEXT:
        for tok in tokenize(sample.text):
            i = vocab.index.get(tok)
            if i is not None:
                counts[i] += 1
    else:
        for ev in sample.events:
            i = vocab.index.get(ev.app)
            if i is not None:
                counts[i] += ev.keystrokes
    return counts


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    modality: Modality

    def __len__(self) -> int:
        return len(self.values)


def _normalize_rows(counts: np.ndarray, norm: str) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    if norm == "l1":
        scale = counts.sum(axis=-1, keepdims=True)
    elif norm == "l2":
        scale = np.sqrt((counts ** 2).sum(axis=-1, keepdims=True))
    elif norm == "max":
        scale = counts.max(axis=-1, keepdims=True, initial=0.0)
    else:
        raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")
    return np.divide(counts, scale, out=np.zeros_like(counts), where=scale > 0)


def normalize_binarize(counts, norm: str = "l1",
                       modality: Modality = Modality.TEXT) -> FeatureVector:
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    values = np.concatenate([_normalize_rows(counts, norm), (counts > 0).astype(np.float64)])
    return FeatureVector(values, Modality(modality))


def fuse(x_t: FeatureVector, x_a: FeatureVector) -> FeatureVector:
    if x_t.modality is not Modality.TEXT or x_a.modality is not Modality.APPS:
        raise ValueError(
            f"fuse expects (text, apps) vectors, got ({x_t.modality.value}, {x_a.modality.value})")
    return FeatureVector(np.concatenate([x_t.values, x_a.values]), Modality.BOTH)


def normalize_binarize_matrix(counts: np.ndarray, norm: str = "l1") -> np.ndarray:
    """Row-wise :func:`normalize_binarize` for an N x V count matrix."""
    counts = np.asarray(counts)
    return np.hstack([_normalize_rows(counts, norm), (counts > 0).astype(np.float64)])


class CountTable:
    """Per-sample token counts over every token seen, computed once.

    Fold-local vocabularies and feature matrices are then column selections,
    which keeps nested cross-validation from re-tokenizing the corpus for
    every (fold, setting) pair. Results match the per-sample functions above.
    """

    def __init__(self, samples: Sequence[DailySample]):
        self.samples = list(samples)
        self.keys = [sample_key(s) for s in self.samples]
        users = sorted({s.user_id for s in self.samples})
        self._user_index = {u: i for i, u in enumerate(users)}
        self.user_codes = np.array([self._user_index[s.user_id] for s in self.samples],
                                   dtype=np.int64)

        word_ids: dict[str, int] = {}
        app_ids: dict[str, int] = {}
        w_rows, w_cols, a_rows, a_cols, a_vals = [], [], [], [], []
        for r, s in enumerate(self.samples):
            for tok in tokenize(s.text):
                w_rows.append(r)
                w_cols.append(word_ids.setdefault(tok, len(word_ids)))
            for ev in s.events:
                a_rows.append(r)
                a_cols.append(app_ids.setdefault(ev.app, len(app_ids)))
                a_vals.append(ev.keystrokes)
        n = len(self.samples)
        self.words = np.array(list(word_ids), dtype=object)
        self.apps = np.array(list(app_ids), dtype=object)
        # Duplicate (row, col) entries are summed on conversion to CSR.
        self.word_counts = sp.csr_matrix(
            (np.ones(len(w_rows), dtype=np.int64), (w_rows, w_cols)), shape=(n, len(word_ids)))
        self.app_counts = sp.csr_matrix(
            (np.asarray(a_vals, dtype=np.int64), (a_rows, a_cols)), shape=(n, len(app_ids)))

    def __len__(self) -> int:
        return len(self.samples)

    def _rows(self, rows) -> np.ndarray:
        return np.arange(len(self)) if rows is None else np.asarray(rows, dtype=np.int64)

    def text_vocab(self, rows=None, top_k: int = 1000, stopwords=DEFAULT_STOPWORDS) -> Vocab:
        rows = self._rows(rows)
        if rows.size == 0:
            raise ValueError("cannot build a text vocabulary from zero samples")
        totals = np.asarray(self.word_counts[rows].sum(axis=0)).ravel()
        counts = {self.words[j]: int(totals[j]) for j in np.flatnonzero(totals)}
        ranked = _select_text(counts, top_k, stopwords)
        return Vocab(tuple(t for t, _ in ranked), VocabKind.TEXT,
                     tuple(c for _, c in ranked), _text_thresholds(top_k, stopwords),
                     provenance_hash(self.keys[i] for i in rows))

    def app_vocab(self, rows=None, min_user_frac: float = 0.10) -> Vocab:
        rows = self._rows(rows)
        codes = self.user_codes[rows]
        n_users = len(np.unique(codes))
        if n_users == 0:
            raise ValueError("app vocabulary needs samples from at least one user")
        sub = self.app_counts[rows]
        owner = sp.csr_matrix((np.ones(len(rows)), (codes, np.arange(len(rows)))),
                              shape=(len(self._user_index), len(rows)))
        users_per_app = np.asarray(((owner @ (sub > 0)) > 0).sum(axis=0)).ravel()
        totals = np.asarray(sub.sum(axis=0)).ravel()
        need = _app_threshold(min_user_frac, n_users)
        keep = np.flatnonzero((totals > 0) & (users_per_app >= need))
        ranked = _rank_tokens({self.apps[j]: int(totals[j]) for j in keep})
        return Vocab(tuple(a for a, _ in ranked), VocabKind.APP,
                     tuple(c for _, c in ranked),
                     {"min_user_frac": min_user_frac, "min_users": need},
                     provenance_hash(self.keys[i] for i in rows))

    def counts(self, vocab: Vocab, rows=None) -> np.ndarray:
        rows = self._rows(rows)
        if vocab.kind is VocabKind.TEXT:
            lookup, table = self.words, self.word_counts
        else:
            lookup, table = self.apps, self.app_counts
        pos = {t: j for j, t in enumerate(lookup)}
        out = np.zeros((len(rows), len(vocab)), dtype=np.int64)
        present = [(i, pos[t]) for i, t in enumerate(vocab.tokens) if t in pos]
        if present:
            dst, src = map(list, zip(*present))
            out[:, dst] = table[rows][:, src].toarray()
        return out

    def features(self, modality: Modality | str, text_vocab: Vocab | None,
                 app_vocab: Vocab | None, rows=None, norm: str = "l1") -> np.ndarray:
        modality = Modality(modality)
        blocks = []
        if modality in (Modality.TEXT, Modality.BOTH):
            blocks.append(normalize_binarize_matrix(self.counts(text_vocab, rows), norm))
        if modality in (Modality.APPS, Modality.BOTH):
            blocks.append(normalize_binarize_matrix(self.counts(app_vocab, rows), norm))
        return np.hstack(blocks)


def export_vocab(path: str | Path, vocab: Vocab) -> None:
    lines = [f"# kind={vocab.kind.value} "
             + " ".join(f"{k}={v}" for k, v in sorted(vocab.thresholds.items()))
             + f" provenance={vocab.provenance}"]
    freqs = vocab.freqs or (0,) * len(vocab)
    lines += [f"{tok}\t{f}" for tok, f in zip(vocab.tokens, freqs)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_feature_matrix(path: str | Path, samples: Sequence[DailySample],
                          X: np.ndarray, vocab_hash: str) -> None:
    X = np.asarray(X)
    if X.shape[0] != len(samples):
        raise ValueError("feature matrix rows must match samples")
    header = ["user_id", "date", "label"] + [f"f_{j}" for j in range(X.shape[1])]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# vocab={vocab_hash}\n")
        fh.write(",".join(header) + "\n")
        for s, row in zip(samples, X):
            vals = ",".join(repr(float(v)) for v in row)
            fh.write(f"{s.user_id},{s.date.isoformat()},{int(s.label)},{vals}\n")
