"""Synthetic tick, sector-map and headline fixtures for demos and tests.

Minute returns follow a GARCH(1,1) whose variance is lifted in minutes that
carry news. Headline wording depends on the sign and size of the return of
the minute it is stamped in, so a sentiment dictionary has something to find.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["FixtureConfig", "write_fixture", "POSITIVE_WORDS", "NEGATIVE_WORDS", "HIGH_WORDS", "FILLER_WORDS"]

POSITIVE_WORDS = ("upgrade", "beats", "surge", "record", "rally", "raises", "strong", "wins")
NEGATIVE_WORDS = ("downgrade", "misses", "plunge", "probe", "cuts", "warning", "weak", "loss")
HIGH_WORDS = ("halted", "shock", "breaking", "urgent", "volatile", "crisis")
FILLER_WORDS = (
    "company", "shares", "market", "update", "report", "quarter", "session", "trading",
    "board", "meeting", "statement", "group", "sector", "analyst", "price", "europe",
)


@dataclass(frozen=True)
class FixtureConfig:
    sectors: int = 2
    members_per_sector: int = 2
    days: int = 10
    minutes_per_day: int = 510
    start_epoch: int = 1_388_566_800  # 2014-01-01 09:00 UTC
    news_rate: float = 0.04  # headlines per instrument-minute
    seed: int = 7


def _instrument_path(rng, cfg: FixtureConfig, common: np.ndarray, news: np.ndarray):
    n = common.size
    omega, alpha, beta = 2e-8, 0.08, 0.88
    s2 = omega / (1 - alpha - beta)
    z = rng.standard_normal(n)
    r = np.empty(n)
    eps_prev = 0.0
    for t in range(n):
        s2 = omega + alpha * eps_prev**2 + beta * s2
        lift = 1.0 + 3.0 * news[t]
        eps_prev = np.sqrt(s2 * lift) * z[t]
        r[t] = eps_prev
    return 0.6 * r + 0.4 * common * np.sqrt(1.0 + 3.0 * news)


def _headline_text(rng, r: float, scale: float) -> str:
    words = list(rng.choice(FILLER_WORDS, size=int(rng.integers(3, 7))))
    if r > 2.0 * scale:
        words += list(rng.choice(POSITIVE_WORDS, size=int(rng.integers(1, 3))))
    elif r < -2.0 * scale:
        words += list(rng.choice(NEGATIVE_WORDS, size=int(rng.integers(1, 3))))
    if abs(r) > 2.5 * scale:
        words += [str(rng.choice(HIGH_WORDS))]
    rng.shuffle(words)
    if rng.random() < 0.3:
        words.append(str(rng.integers(1, 2030)))
    return " ".join(w.capitalize() if i == 0 else w for i, w in enumerate(words))


def write_fixture(root, config: FixtureConfig | None = None) -> dict[str, Path]:
    """Write ``ticks/<id>.csv``, ``sectors.csv`` and ``headlines.csv`` under ``root``.

    Returns the written paths keyed by role.
    """
    cfg = config or FixtureConfig()
    root = Path(root)
    tick_dir = root / "ticks"
    tick_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    minutes = []
    for d in range(cfg.days):
        day0 = cfg.start_epoch + d * 86_400
        minutes.append(day0 + 60 * np.arange(cfg.minutes_per_day + 1))
    stamps = np.concatenate(minutes)
    n = stamps.size

    sector_rows = []
    headlines = []
    for s in range(cfg.sectors):
        sector = f"S{s + 1:02d}"
        common = 3e-4 * rng.standard_normal(n)
        for k in range(cfg.members_per_sector):
            iid = f"{sector}_I{k + 1}"
            sector_rows.append((iid, sector))
            news = rng.poisson(cfg.news_rate, n).astype(float)
            r = _instrument_path(rng, cfg, common, news)
            r[0] = 0.0
            prices = 50.0 * np.exp(np.cumsum(r))
            volumes = rng.poisson(200.0 * (1.0 + 2.0 * news))
            with (tick_dir / f"{iid}.csv").open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["timestamp", "price", "volume"])
                for t in range(n):
                    w.writerow([int(stamps[t]), f"{prices[t]:.6f}", int(volumes[t])])
            scale = float(np.std(r))
            for t in np.flatnonzero(news):
                for _ in range(int(news[t])):
                    # stamp inside the minute so it belongs to the bar closing at stamps[t]
                    ts = int(stamps[t]) - int(rng.integers(0, 60))
                    headlines.append((ts, iid, _headline_text(rng, float(r[t]), scale)))

    sector_path = root / "sectors.csv"
    with sector_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instrument_id", "sector"])
        w.writerows(sector_rows)

    headlines.sort(key=lambda h: (h[0], h[1], h[2]))
    head_path = root / "headlines.csv"
    with head_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(["timestamp", "id", "text"])
        w.writerows(headlines)
    return {"ticks": tick_dir, "sector_map": sector_path, "headlines": head_path}
