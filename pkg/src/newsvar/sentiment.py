"""News regressors from headlines: market-response labels, a Fisher-scored
word dictionary, and POS/NEG/HIGH/NUMB/LAGVOL series on the bar grid."""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .marketdata import BarSeries, DataError, parse_timestamp

__all__ = [
    "SClass",
    "QClass",
    "Headline",
    "Thresholds",
    "LabeledHeadline",
    "DictionaryEntry",
    "SentimentDictionary",
    "RegressorSeries",
    "load_headlines",
    "dedupe",
    "compute_thresholds",
    "label_headlines",
    "tokenize",
    "modal_class",
    "fisher_score",
    "build_dictionary",
    "build_regressors",
]

DENOMINATOR_FLOOR = 1e-9
_TOKEN = re.compile(r"[^\W_]+")


class SClass(str, Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    NEUTRAL = "Neutral"


class QClass(str, Enum):
    HIGH = "High"
    LOW = "Low"


@dataclass(frozen=True)
class Headline:
    timestamp: int
    source_id: str
    text: str


@dataclass(frozen=True)
class Thresholds:
    r_neg: float
    r_pos: float
    r_high: float


@dataclass(frozen=True)
class LabeledHeadline:
    headline: Headline
    s_class: SClass
    q_class: QClass
    matched_return: float


@dataclass(frozen=True)
class DictionaryEntry:
    s_class: SClass
    q_class: QClass
    fisher_s: float
    fisher_q: float


@dataclass
class SentimentDictionary:
    """Retained words with their (threshold-effective) classes and scores."""

    entries: dict[str, DictionaryEntry]
    f_threshold: float

    @property
    def counts(self) -> dict[str, int]:
        c = Counter()
        for e in self.entries.values():
            if e.s_class is not SClass.NEUTRAL:
                c[e.s_class.value] += 1
            if e.q_class is QClass.HIGH:
                c[QClass.HIGH.value] += 1
        return {k: c.get(k, 0) for k in ("Positive", "Negative", "High")}

    def to_json(self) -> str:
        mapping = {
            w: {"s_class": e.s_class.value, "q_class": e.q_class.value, "fisher_s": e.fisher_s, "fisher_q": e.fisher_q}
            for w, e in sorted(self.entries.items())
        }
        return json.dumps(mapping, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "SentimentDictionary":
        mapping = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = {
            w: DictionaryEntry(SClass(d["s_class"]), QClass(d["q_class"]), float(d["fisher_s"]), float(d["fisher_q"]))
            for w, d in mapping.items()
        }
        # exported classes are already threshold-effective
        return cls(entries, 0.0)


@dataclass(frozen=True)
class RegressorSeries:
    timestamps: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    high: np.ndarray
    numb: np.ndarray
    lagvol: np.ndarray
    dropped_headlines: int = field(default=0, compare=False)

    def matrix(self, kind) -> np.ndarray:
        from .volatility import RegressorKind

        cols = RegressorKind(kind).columns
        if not cols:
            return np.zeros((self.timestamps.size, 0))
        return np.column_stack([getattr(self, c).astype(float) for c in cols])

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "pos", "neg", "high", "numb", "lagvol"])
            for i in range(self.timestamps.size):
                w.writerow(
                    [int(self.timestamps[i]), int(self.pos[i]), int(self.neg[i]), int(self.high[i]),
                     int(self.numb[i]), repr(float(self.lagvol[i]))]
                )
        return path

    @classmethod
    def read_csv(cls, path) -> "RegressorSeries":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        ints = data[:, 1:5].astype(np.int64)
        return cls(data[:, 0].astype(np.int64), ints[:, 0], ints[:, 1], ints[:, 2], ints[:, 3], data[:, 5])


def load_headlines(path) -> list[Headline]:
    """Read a ``timestamp,id,text`` CSV (UTF-8, RFC-4180 quoting)."""
    path = Path(path)
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["timestamp", "id", "text"]:
            raise DataError(f"{path}:1: expected header 'timestamp,id,text'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                ts = parse_timestamp(row[0])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            text = row[2].strip()
            if text:
                out.append(Headline(ts, row[1].strip(), text))
    return out


def dedupe(headlines: Iterable[Headline]) -> list[Headline]:
    """Drop repeated (timestamp, text) pairs, keeping the first occurrence."""
    seen = set()
    out = []
    for h in headlines:
        key = (h.timestamp, h.text)
        if key not in seen:
            seen.add(key)
            out.append(h)
    return out


def compute_thresholds(returns, tail: float = 0.025, high_quantile: float = 0.975) -> Thresholds:
    """Empirical return quantiles used to label headlines.

    ``r_high`` is the ``high_quantile`` quantile of squared returns; the
    default makes "High" the top 2.5% of squared moves.
    """
    r = np.asarray(returns, dtype=float)
    if r.size < 200:
        raise ValueError(f"need at least 200 returns for thresholds, got {r.size}")
    r_neg, r_pos = np.quantile(r, [tail, 1.0 - tail])
    if not r_neg < 0.0 < r_pos:
        raise ValueError(f"degenerate thresholds r_neg={r_neg}, r_pos={r_pos}")
    return Thresholds(float(r_neg), float(r_pos), float(np.quantile(r * r, high_quantile)))


def _classify(r: float, th: Thresholds) -> tuple[SClass, QClass]:
    if r <= th.r_neg:
        s = SClass.NEGATIVE
    elif r >= th.r_pos:
        s = SClass.POSITIVE
    else:
        s = SClass.NEUTRAL
    return s, (QClass.HIGH if r * r >= th.r_high else QClass.LOW)


def label_headlines(
    headlines: Iterable[Headline],
    bars: Mapping[str, BarSeries],
    thresholds: Thresholds | Mapping[str, Thresholds],
) -> tuple[list[LabeledHeadline], int]:
    """Attach the bar return whose interval ``(t-1, t]`` contains each stamp.

    Returns the labeled headlines and the number that could not be matched
    (unknown id or stamp outside the bar grid).
    """
    labeled = []
    unmatched = 0
    for h in headlines:
        series = bars.get(h.source_id)
        if series is None or len(series) == 0:
            unmatched += 1
            continue
        i = int(np.searchsorted(series.timestamps, h.timestamp, side="left"))
        if i >= len(series) or h.timestamp <= series.timestamps[i] - series.interval_seconds:
            unmatched += 1
            continue
        th = thresholds if isinstance(thresholds, Thresholds) else thresholds.get(h.source_id)
        if th is None:
            unmatched += 1
            continue
        r = float(series.log_returns[i])
        s, q = _classify(r, th)
        labeled.append(LabeledHeadline(h, s, q, r))
    return labeled, unmatched


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.findall(text.lower()) if len(t) >= 2 and not t.isdigit()]


def modal_class(s_counts: Mapping, q_counts: Mapping) -> tuple[SClass, QClass]:
    """Most frequent class per category; ties resolve to Neutral / Low."""

    def pick(counts, fallback, order):
        values = [counts.get(c, 0) for c in order]
        top = max(values)
        winners = [c for c, v in zip(order, values) if v == top]
        return winners[0] if len(winners) == 1 and top > 0 else fallback

    s = pick(s_counts, SClass.NEUTRAL, list(SClass))
    q = pick(q_counts, QClass.LOW, list(QClass))
    return s, q


def fisher_score(per_class_counts: Mapping[object, np.ndarray], factor: float | None = None) -> float:
    """Between-class over within-class spread of a word's per-headline counts.

    ``per_class_counts[c]`` holds the word's count in every headline of class
    ``c`` (zeros included). The numerator averages ``(mu_i - mu_k)^2`` over
    unordered class pairs: factor 1/3 for three classes, 1 for two.
    """
    groups = [np.asarray(v, dtype=float) for v in per_class_counts.values()]
    n_classes = len(groups)
    if factor is None:
        factor = 2.0 / (n_classes * (n_classes - 1))
    present = [g for g in groups if g.size]
    means = [g.mean() for g in present]
    between = factor * sum((a - b) ** 2 for i, a in enumerate(means) for b in means[i + 1 :])
    total = sum(g.size for g in present)
    within = sum(float(((g - mu) ** 2).sum()) for g, mu in zip(present, means)) / total if total else 0.0
    if between == 0.0:
        return 0.0
    return float(between / max(within, DENOMINATOR_FLOOR))


def _count_tables(labeled: list[LabeledHeadline]):
    tokens = [Counter(tokenize(lh.headline.text)) for lh in labeled]
    s_idx = {c: [i for i, lh in enumerate(labeled) if lh.s_class is c] for c in SClass}
    q_idx = {c: [i for i, lh in enumerate(labeled) if lh.q_class is c] for c in QClass}
    return tokens, s_idx, q_idx


def build_dictionary(labeled: list[LabeledHeadline], f_threshold: float | None = None) -> SentimentDictionary:
    """Score every word and keep those reaching ``f_threshold`` in either category.

    Without an explicit threshold the 75th percentile of all nonzero scores
    is used. A word's class in a category is demoted to Neutral/Low when its
    score in that category falls below the threshold.
    """
    if not labeled:
        raise ValueError("empty corpus")
    tokens, s_idx, q_idx = _count_tables(labeled)
    vocab = sorted(set().union(*tokens))
    raw = {}
    for w in vocab:
        counts = np.array([tk.get(w, 0) for tk in tokens], dtype=float)
        present = counts > 0
        s_occ = {c: int(present[idx].sum()) for c, idx in s_idx.items()}
        q_occ = {c: int(present[idx].sum()) for c, idx in q_idx.items()}
        s_cls, q_cls = modal_class(s_occ, q_occ)
        f_s = fisher_score({c: counts[idx] for c, idx in s_idx.items()}, factor=1.0 / 3.0)
        f_q = fisher_score({c: counts[idx] for c, idx in q_idx.items()}, factor=1.0)
        raw[w] = (s_cls, q_cls, f_s, f_q)
    if f_threshold is None:
        scores = np.array([v for e in raw.values() for v in e[2:] if v > 0.0])
        f_threshold = float(np.quantile(scores, 0.75)) if scores.size else 0.0
    entries = {}
    for w, (s_cls, q_cls, f_s, f_q) in raw.items():
        if f_s < f_threshold and f_q < f_threshold:
            continue
        entries[w] = DictionaryEntry(
            s_cls if f_s >= f_threshold else SClass.NEUTRAL,
            q_cls if f_q >= f_threshold else QClass.LOW,
            f_s,
            f_q,
        )
    return SentimentDictionary(entries, float(f_threshold))


def build_regressors(
    headlines: Iterable[Headline],
    dictionary: SentimentDictionary,
    bar_timestamps,
    bar_volumes,
) -> RegressorSeries:
    """Per-bar word tallies over ``(t-1, t]`` plus lagged bar volume.

    Headlines stamped before the first bar fall into it; those after the last
    bar are dropped and counted. ``lagvol`` of the first bar is 0.
    """
    ts = np.asarray(bar_timestamps, dtype=np.int64)
    vol = np.asarray(bar_volumes, dtype=float)
    n = ts.size
    pos = np.zeros(n, dtype=np.int64)
    neg = np.zeros(n, dtype=np.int64)
    high = np.zeros(n, dtype=np.int64)
    numb = np.zeros(n, dtype=np.int64)
    dropped = 0
    for h in headlines:
        i = int(np.searchsorted(ts, h.timestamp, side="left"))
        if i >= n:
            dropped += 1
            continue
        for tok in tokenize(h.text):
            numb[i] += 1
            e = dictionary.entries.get(tok)
            if e is None:
                continue
            if e.s_class is SClass.POSITIVE:
                pos[i] += 1
            elif e.s_class is SClass.NEGATIVE:
                neg[i] += 1
            if e.q_class is QClass.HIGH:
                high[i] += 1
    lagvol = np.concatenate([[0.0], vol[:-1]]) if n else vol.copy()
    return RegressorSeries(ts, pos, neg, high, numb, lagvol, dropped)
