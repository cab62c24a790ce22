"""Raw event/label ingestion, daily windowing, and participant filtering."""
from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "KeystrokeEvent", "LabelRecord", "MoodClass", "DailySample", "Roster",
    "EventLog", "DataError", "load_events", "load_labels", "discretize_score",
    "window_events", "filter_participants", "sample_key",
]

# Local hour at which one reporting day ends and the next begins.
DAY_BOUNDARY_HOUR = 5
MAX_MALFORMED_FRAC = 0.10
# Below this many lines a single bad line would trip the fraction cap.
MIN_LINES_FOR_MALFORMED_CAP = 10

_MS_PER_MINUTE = 60_000
_EPOCH = dt.datetime(1970, 1, 1)


class DataError(ValueError):
    """Input data violates a format or content contract."""


class MoodClass(enum.IntEnum):
    NEGATIVE = 0
    NEUTRAL = 1
    POSITIVE = 2


@dataclass(frozen=True)
class KeystrokeEvent:
    user_id: str
    ts_ms: int
    app: str
    text: str = ""

    def __post_init__(self):
        if self.ts_ms <= 0:
            raise DataError(f"timestamp must be positive, got {self.ts_ms}")
        if not self.app:
            raise DataError("app identifier must be non-empty")

    @property
    def keystrokes(self) -> int:
        # An event with empty text still records one key press.
        return max(1, len(self.text))


@dataclass(frozen=True)
class LabelRecord:
    user_id: str
    date: dt.date
    score: int

    def __post_init__(self):
        if not 0 <= self.score <= 100:
            raise DataError(f"score {self.score} outside 0-100")


@dataclass(frozen=True)
class DailySample:
    user_id: str
    date: dt.date
    events: tuple[KeystrokeEvent, ...]
    label: MoodClass
    raw_score: int

    @property
    def key(self) -> tuple[str, str]:
        return sample_key(self)

    @property
    def text(self) -> str:
        return " ".join(e.text for e in self.events if e.text)


def sample_key(sample: DailySample) -> tuple[str, str]:
    return (sample.user_id, sample.date.isoformat())


class EventLog(list):
    """List of events that also remembers how many input lines were skipped."""

    def __init__(self, events: Iterable[KeystrokeEvent] = (), skipped: int = 0):
        super().__init__(events)
        self.skipped = skipped


@dataclass(frozen=True)
class Roster:
    """Deterministic user -> one-hot index mapping (lexicographic order)."""

    users: tuple[str, ...]
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_lookup", {u: i for i, u in enumerate(self.users)})

    @classmethod
    def from_samples(cls, samples: Iterable[DailySample]) -> "Roster":
        return cls(tuple(sorted({s.user_id for s in samples})))

    def __len__(self) -> int:
        return len(self.users)

    def index(self, user_id: str) -> int:
        try:
            return self._lookup[user_id]
        except KeyError:
            raise KeyError(f"user {user_id!r} not in roster") from None

    def encode(self, samples: Sequence[DailySample]) -> np.ndarray:
        return np.array([self.index(s.user_id) for s in samples], dtype=np.int64)


def load_events(path: str | Path) -> EventLog:
    """Read a line-delimited JSON event file.

    Malformed lines are skipped with a warning. If more than 10% of the
    lines are malformed (files of at least ten lines), the file is rejected.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read events file {path}: {exc}") from exc

    events = []
    skipped = 0
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    for lineno, line in enumerate(lines, 1):
        try:
            rec = json.loads(line)
            ts = rec["ts_ms"]
            if isinstance(ts, bool) or not isinstance(ts, int):
                raise TypeError("ts_ms must be an integer")
            text = rec.get("text", "")
            if not isinstance(text, str) or not isinstance(rec["app"], str):
                raise TypeError("app and text must be strings")
            events.append(KeystrokeEvent(str(rec["user_id"]), ts, rec["app"], text))
        except (ValueError, KeyError, TypeError) as exc:
            skipped += 1
            warnings.warn(f"{path}:{lineno}: skipping malformed event ({exc})")

    if not lines:
        warnings.warn(f"events file {path} is empty")
    elif skipped:
        frac = skipped / len(lines)
        warnings.warn(f"{path}: skipped {skipped} malformed line(s) of {len(lines)}")
        if len(lines) >= MIN_LINES_FOR_MALFORMED_CAP and frac > MAX_MALFORMED_FRAC:
            raise DataError(
                f"{path}: {skipped}/{len(lines)} lines malformed "
                f"(limit {MAX_MALFORMED_FRAC:.0%})")

    events.sort(key=lambda e: (e.user_id, e.ts_ms))
    return EventLog(events, skipped)


def load_labels(path: str | Path) -> list[LabelRecord]:
    """Read ``user_id,date,score`` rows. Out-of-range scores are dropped."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read labels file {path}: {exc}") from exc

    records = []
    seen = set()
    with fh:
        reader = csv.DictReader(fh)
        missing = {"user_id", "date", "score"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: header lacks {sorted(missing)}")
        for row in reader:
            try:
                date = dt.date.fromisoformat(row["date"].strip())
                score = int(row["score"])
            except (ValueError, AttributeError) as exc:
                warnings.warn(f"{path}: rejecting row {row}: {exc}")
                continue
            if not 0 <= score <= 100:
                warnings.warn(f"{path}: rejecting row {row}: score outside 0-100")
                continue
            key = (row["user_id"], date)
            if key in seen:
                raise DataError(f"{path}: duplicate label for {key[0]} on {date}")
            seen.add(key)
            records.append(LabelRecord(row["user_id"], date, score))
    return records


def discretize_score(score: int) -> MoodClass:
    if not 0 <= score <= 100:
        raise ValueError(f"score {score} outside 0-100")
    if score <= 33:
        return MoodClass.NEGATIVE
    if score <= 66:
        return MoodClass.NEUTRAL
    return MoodClass.POSITIVE


def window_date(ts_ms: int, tz_offset_minutes: int = 0) -> dt.date:
    """Label date whose [05:00 previous day, 05:00) window contains ``ts_ms``."""
    local = _EPOCH + dt.timedelta(milliseconds=ts_ms + tz_offset_minutes * _MS_PER_MINUTE)
    return (local - dt.timedelta(hours=DAY_BOUNDARY_HOUR)).date() + dt.timedelta(days=1)


def window_bounds_ms(date: dt.date, tz_offset_minutes: int = 0) -> tuple[int, int]:
    """UTC epoch-ms half-open interval covered by the sample for ``date``."""
    end_local = dt.datetime.combine(date, dt.time(DAY_BOUNDARY_HOUR))
    end = int((end_local - _EPOCH) / dt.timedelta(milliseconds=1))
    end -= tz_offset_minutes * _MS_PER_MINUTE
    return end - 86_400_000, end


def window_events(events: Iterable[KeystrokeEvent], labels: Iterable[LabelRecord],
                  tz_offset_minutes: int = 0,
                  drop_empty_days: bool = False) -> list[DailySample]:
    """Attach each user's events to the daily sample whose window holds them.

    One sample is produced per label (in label-file order grouped by user and
    date); events falling on days without a label are ignored.
    """
    buckets: dict[tuple[str, dt.date], list[KeystrokeEvent]] = defaultdict(list)
    for ev in events:
        buckets[(ev.user_id, window_date(ev.ts_ms, tz_offset_minutes))].append(ev)

    samples = []
    for rec in sorted(labels, key=lambda r: (r.user_id, r.date)):
        evs = sorted(buckets.get((rec.user_id, rec.date), ()), key=lambda e: e.ts_ms)
        if drop_empty_days and not evs:
            continue
        samples.append(DailySample(rec.user_id, rec.date, tuple(evs),
                                   discretize_score(rec.score), rec.score))
    return samples


def filter_participants(samples: Sequence[DailySample],
                        min_reports: int = 50) -> list[DailySample]:
    counts = Counter(s.user_id for s in samples)
    kept = [s for s in samples if counts[s.user_id] >= min_reports]
    if not kept:
        raise DataError(
            f"no participant has at least {min_reports} daily reports "
            f"({len(counts)} users, max {max(counts.values(), default=0)})")
    return kept
