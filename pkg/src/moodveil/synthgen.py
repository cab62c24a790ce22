"""Synthetic keystroke/label datasets with controllable identity and mood signal.

Generative scheme, per user ``u`` and reporting day ``d``:

* latent mood follows a stationary AR(1) chain ``m_d = rho m_{d-1} + sqrt(1-rho^2) xi``
  and the reported score is ``round(100 * sigmoid(mood_scale * m_d + mood_bias))``;
* filler events draw apps and words from a user-specific softmax whose logits
  are a shared Zipf profile plus ``identity_confound * identity_sharpness``
  times a per-user Gaussian perturbation;
* about ``signal_rate`` mood-lexicon tokens are emitted per day, each taken
  from the lexicon of the day's class with probability ``mood_signal`` and
  from a uniformly random lexicon otherwise;
* with ``interaction_signal > 0`` each day also carries one context event typed
  in app A or app B, containing either "interaction" words or length-matched
  control words. The app bit and the word bit are each uniform and
  independent of mood; their parity encodes positive (even) versus negative
  (odd) mood with probability ``interaction_signal``. Only the pair is
  informative, so neither modality alone can recover it.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import itertools
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

from ._stopwords import STOPWORDS
from .data_model import (DailySample, KeystrokeEvent, LabelRecord, MoodClass,
                         discretize_score, window_bounds_ms, window_events)
from .featurizer import tokenize
from .rng import substream

__all__ = ["SynthConfig", "generate", "generate_records", "generate_samples",
           "class_marginal", "describe", "DatasetSummary"]

POSITIVE_WORDS = ("happy", "great", "love", "fun", "awesome", "excited", "yay", "proud")
NEGATIVE_WORDS = ("sad", "tired", "hate", "alone", "angry", "hurt", "cry", "worst")
NEUTRAL_WORDS = ("fine", "whatever", "normal", "meh", "usual", "regular", "average", "chill")
# Position i of each list has the same length so the context app's keystroke
# count does not reveal which list was used.
INTERACTION_WORDS = ("lmao", "omg", "bruh", "tbh", "ikr", "smh")
CONTROL_WORDS = ("okay", "yes", "sure", "btw", "idk", "brb")
CONTEXT_APPS = ("com.synth.context.alpha", "com.synth.context.beta")

_LEXICONS = {MoodClass.NEGATIVE: NEGATIVE_WORDS, MoodClass.NEUTRAL: NEUTRAL_WORDS,
             MoodClass.POSITIVE: POSITIVE_WORDS}
_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SynthConfig:
    num_users: int = 17
    days_per_user: int = 120
    vocab_size_words: int = 150
    vocab_size_apps: int = 30
    identity_confound: float = 0.8
    mood_signal: float = 0.7
    interaction_signal: float = 0.0
    mood_autocorr: float = 0.5
    events_per_day: float = 6.0
    seed: int | None = None
    words_per_event: float = 6.0
    identity_sharpness: float = 3.0
    signal_rate: float = 3.0
    interaction_tokens: int = 4
    mood_scale: float = 1.5
    mood_bias: float = 0.0
    report_rate: float = 1.0
    tz_offset_minutes: int = 0
    start_date: str = "2024-01-01"

    def validate(self) -> "SynthConfig":
        if self.seed is None:
            raise ValueError("SynthConfig.seed is required")
        for name in ("identity_confound", "mood_signal", "interaction_signal", "report_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not 0.0 <= self.mood_autocorr < 1.0:
            raise ValueError(f"mood_autocorr={self.mood_autocorr} outside [0, 1)")
        if self.num_users < 2:
            raise ValueError("num_users must be at least 2")
        if self.days_per_user < 1:
            raise ValueError("days_per_user must be at least 1")
        if self.vocab_size_words < 1 or self.vocab_size_apps < 1:
            raise ValueError("vocabulary sizes must be positive")
        if self.events_per_day < 0 or self.words_per_event < 1:
            raise ValueError("events_per_day must be >= 0 and words_per_event >= 1")
        dt.date.fromisoformat(self.start_date)
        return self

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthConfig":
        """Build from string or typed values (config files, CLI flags)."""
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in kinds:
                raise KeyError(f"unknown synth config key {key!r}")
            kind = kinds[key]
            if raw is None or (isinstance(raw, str) and raw.lower() == "none"):
                kwargs[key] = None
            elif "int" in kind and "float" not in kind:
                kwargs[key] = int(raw)
            elif "float" in kind:
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)

    def as_dict(self) -> dict:
        return asdict(self)


def filler_words(n: int) -> list[str]:
    """``n`` pronounceable pseudo-words, identical for every seed."""
    reserved = set(STOPWORDS) | set(POSITIVE_WORDS + NEGATIVE_WORDS + NEUTRAL_WORDS
                                    + INTERACTION_WORDS + CONTROL_WORDS)
    sylls = [c + v for c in _CONSONANTS for v in _VOWELS]
    words = []
    for length in itertools.count(2):
        for combo in itertools.product(sylls, repeat=length):
            w = "".join(combo)
            if w not in reserved:
                words.append(w)
                if len(words) == n:
                    return words
    return words


def app_names(n: int) -> list[str]:
    return [f"com.synth.app{i:03d}" for i in range(n)]


def class_marginal(config: SynthConfig) -> np.ndarray:
    """Analytic stationary class probabilities (negative, neutral, positive)."""
    a, b = config.mood_scale, config.mood_bias
    p_neg = norm.cdf((logit(0.335) - b) / a)
    p_not_pos = norm.cdf((logit(0.665) - b) / a)
    return np.array([p_neg, p_not_pos - p_neg, 1.0 - p_not_pos])


def _user_profile(rng, base_logits, config):
    spread = config.identity_confound * config.identity_sharpness
    logits = base_logits + spread * rng.standard_normal(base_logits.shape)
    p = np.exp(logits - logits.max())
    return p / p.sum()


def _mood_path(rng, config):
    n = config.days_per_user
    rho = config.mood_autocorr
    innov = rng.standard_normal(n)
    m = np.empty(n)
    m[0] = innov[0]
    scale = math.sqrt(1.0 - rho * rho)
    for d in range(1, n):
        m[d] = rho * m[d - 1] + scale * innov[d]
    return np.clip(np.rint(100.0 * expit(config.mood_scale * m + config.mood_bias)), 0, 100).astype(int)


def generate_records(config: SynthConfig) -> tuple[list[KeystrokeEvent], list[LabelRecord]]:
    """Simulate in memory; see the module docstring for the scheme."""
    config.validate()
    words = np.array(filler_words(config.vocab_size_words))
    apps = np.array(app_names(config.vocab_size_apps))
    word_base = -np.log1p(np.arange(len(words)))
    app_base = -np.log1p(np.arange(len(apps)))
    start = dt.date.fromisoformat(config.start_date)
    lexicons = [_LEXICONS[c] for c in MoodClass]

    events: list[KeystrokeEvent] = []
    labels: list[LabelRecord] = []
    for u in range(config.num_users):
        user = f"u{u:03d}"
        rng = substream(config.seed, "data", u)
        p_word = _user_profile(rng, word_base, config)
        p_app = _user_profile(rng, app_base, config)
        scores = _mood_path(rng, config)

        for d in range(config.days_per_user):
            reported = rng.random() < config.report_rate
            date = start + dt.timedelta(days=d + 1)
            lo, hi = window_bounds_ms(date, config.tz_offset_minutes)
            mood = discretize_score(int(scores[d]))
            texts: list[tuple[str, str]] = []

            for _ in range(rng.poisson(config.events_per_day)):
                k = 1 + rng.poisson(config.words_per_event - 1)
                texts.append((apps[rng.choice(len(apps), p=p_app)],
                              " ".join(words[rng.choice(len(words), size=k, p=p_word)])))

            n_sig = rng.poisson(config.signal_rate)
            if n_sig:
                toks = []
                for _ in range(n_sig):
                    lex = lexicons[mood] if rng.random() < config.mood_signal \
                        else lexicons[rng.integers(3)]
                    toks.append(lex[rng.integers(len(lex))])
                texts.append((apps[rng.choice(len(apps), p=p_app)], " ".join(toks)))

            if config.interaction_signal > 0:
                app_bit = int(rng.integers(2))
                if mood is not MoodClass.NEUTRAL and rng.random() < config.interaction_signal:
                    parity = 0 if mood is MoodClass.POSITIVE else 1
                else:
                    parity = int(rng.integers(2))
                word_bit = app_bit ^ parity
                lex = INTERACTION_WORDS if word_bit else CONTROL_WORDS
                pos = rng.integers(len(lex), size=config.interaction_tokens)
                texts.append((CONTEXT_APPS[app_bit], " ".join(lex[i] for i in pos)))

            if not reported:
                continue
            order = rng.permutation(len(texts))
            stamps = np.sort(rng.integers(lo, hi, size=len(texts)))
            for ts, i in zip(stamps, order):
                app, text = texts[i]
                events.append(KeystrokeEvent(user, int(ts), str(app), text))
            labels.append(LabelRecord(user, date, int(scores[d])))

    events.sort(key=lambda e: (e.user_id, e.ts_ms))
    return events, labels


def generate_samples(config: SynthConfig) -> list[DailySample]:
    events, labels = generate_records(config)
    return window_events(events, labels, config.tz_offset_minutes)


def _events_text(events: Sequence[KeystrokeEvent]) -> str:
    out = io.StringIO()
    for e in events:
        out.write(json.dumps({"user_id": e.user_id, "ts_ms": e.ts_ms, "app": e.app,
                              "text": e.text}, ensure_ascii=False, separators=(",", ":")))
        out.write("\n")
    return out.getvalue()


def _labels_text(labels: Sequence[LabelRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["user_id", "date", "score"])
    for r in labels:
        writer.writerow([r.user_id, r.date.isoformat(), r.score])
    return out.getvalue()


def generate(config: SynthConfig, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``events.jsonl`` and ``labels.csv`` under ``out_dir``."""
    events, labels = generate_records(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ev_path, lab_path = out_dir / "events.jsonl", out_dir / "labels.csv"
    ev_path.write_bytes(_events_text(events).encode("utf-8"))
    lab_path.write_bytes(_labels_text(labels).encode("utf-8"))
    return ev_path, lab_path


@dataclass
class DatasetSummary:
    n_samples: int
    class_counts: dict
    per_user: dict
    n_events: int
    distinct_words: int
    distinct_apps: int

    @property
    def class_freqs(self) -> np.ndarray:
        c = np.array([self.class_counts[m.name.lower()] for m in MoodClass], dtype=float)
        return c / c.sum()

    def to_text(self) -> str:
        lines = [f"samples: {self.n_samples}  users: {len(self.per_user)}  events: {self.n_events}"]
        freqs = self.class_freqs
        lines.append("class distribution: " + ", ".join(
            f"{m.name.lower()} {100 * f:.2f}%" for m, f in zip(MoodClass, freqs)))
        counts = list(self.per_user.values())
        lines.append(f"samples per user: min {min(counts)}, max {max(counts)}")
        lines.append(f"distinct words: {self.distinct_words}  distinct apps: {self.distinct_apps}")
        return "\n".join(lines)


def describe(samples: Sequence[DailySample]) -> DatasetSummary:
    if not samples:
        raise ValueError("cannot describe an empty dataset")
    classes = Counter(s.label for s in samples)
    words, apps = set(), set()
    n_events = 0
    for s in samples:
        n_events += len(s.events)
        for e in s.events:
            apps.add(e.app)
            words.update(tokenize(e.text))
    return DatasetSummary(
        n_samples=len(samples),
        class_counts={m.name.lower(): classes.get(m, 0) for m in MoodClass},
        per_user=dict(sorted(Counter(s.user_id for s in samples).items())),
        n_events=n_events, distinct_words=len(words), distinct_apps=len(apps))
