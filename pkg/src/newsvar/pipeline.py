"""End-to-end experiment: ingest, dictionary, regressors, rolling VaR,
backtests, MCS and combination, with a manifest of every emitted file."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import marketdata as md
from . import sentiment as sent
from .backtest import backtest, write_reports
from .combine import CombinedVaR, combine, dynamic_weights, optimize_kappa, static_average, write_combined
from .estimation import EstimationError, FitConfig, ModelSpec, fit
from .forecasting import RollConfig, rolling_run, write_panel
from .mcs import MCSConfig, loss_matrix, mcs_run, write_mcs
from .volatility import ConstraintError, FilterError, RegressorKind, RegressorSet

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "StageError",
    "ExperimentConfig",
    "load_config",
    "derive_seed",
    "config_hash",
    "Pipeline",
]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    ticks_dir: Path
    sector_map: Path
    headlines: Path
    out: Path = Path("out")
    seed: int = 0
    label_interval: int = 120
    model_interval: int = 300
    dynamics: tuple[str, ...] = ("GARCH", "EGARCH", "GJR")
    laws: tuple[str, ...] = ("gaussian", "student_t", "ged")
    regressors: tuple[str, ...] = ("N", "IV", "SE")
    insample_fraction: float = 0.5
    refit_every: int = 100
    taus: tuple[float, ...] = (0.01, 0.001)
    max_iterations: int = 5000
    starts: int = 1
    f_threshold: float | None = None
    tail: float = 0.025
    high_quantile: float = 0.975
    dq_lags: int = 4
    mcs_alpha: float = 0.25
    mcs_B: int = 1000
    max_block_lag: int = 10
    kernel_sign: int = -1
    kappa_train_fraction: float = 1.0
    workers: int = 1
    record_timing: bool = False

    def validate(self, check_paths: bool = True) -> None:
        if check_paths:
            for name in ("ticks_dir", "sector_map", "headlines"):
                if not Path(getattr(self, name)).exists():
                    raise ConfigError(f"{name} does not exist: {getattr(self, name)}")
        if self.model_interval % self.label_interval and self.label_interval % self.model_interval:
            log.debug("label and model grids are not nested")
        try:
            self.specs()
        except ValueError as exc:
            raise ConfigError(f"invalid model grid: {exc}") from None
        if not self.specs():
            raise ConfigError("model grid is empty")
        if self.kernel_sign not in (-1, 1):
            raise ConfigError("kernel_sign must be +1 or -1")
        if not 0.0 < self.kappa_train_fraction <= 1.0:
            raise ConfigError("kappa_train_fraction must lie in (0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        try:
            self.roll_config()
            self.mcs_config(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def specs(self) -> list[ModelSpec]:
        return [ModelSpec(d, l, r) for d in self.dynamics for l in self.laws for r in self.regressors]

    def roll_config(self) -> RollConfig:
        return RollConfig(self.insample_fraction, self.refit_every, tuple(self.taus))

    def fit_config(self, seed: int) -> FitConfig:
        return FitConfig(max_iterations=self.max_iterations, starts=self.starts, seed=seed)

    def mcs_config(self, seed: int) -> MCSConfig:
        return MCSConfig(self.mcs_alpha, self.mcs_B, self.max_block_lag, seed)

    def as_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, Path):
                d[k] = str(v)
            elif isinstance(v, tuple):
                d[k] = list(v)
        return d


# TOML table -> {toml key: config field}
_TOML_LAYOUT = {
    None: {"seed": "seed", "out": "out", "workers": "workers", "record_timing": "record_timing"},
    "data": {"ticks_dir": "ticks_dir", "sector_map": "sector_map", "headlines": "headlines"},
    "bars": {"label_interval": "label_interval", "model_interval": "model_interval"},
    "models": {"dynamics": "dynamics", "laws": "laws", "regressors": "regressors"},
    "forecast": {
        "insample_fraction": "insample_fraction",
        "refit_every": "refit_every",
        "taus": "taus",
        "max_iterations": "max_iterations",
        "starts": "starts",
    },
    "dictionary": {"f_threshold": "f_threshold", "tail": "tail", "high_quantile": "high_quantile"},
    "backtest": {"dq_lags": "dq_lags"},
    "mcs": {"alpha": "mcs_alpha", "B": "mcs_B", "max_block_lag": "max_block_lag"},
    "combine": {"kernel_sign": "kernel_sign", "kappa_train_fraction": "kappa_train_fraction"},
}
_PATH_FIELDS = ("ticks_dir", "sector_map", "headlines", "out")


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a TOML experiment file; relative paths resolve against its directory.

    ``overrides`` (field name -> value) win over file values.
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values: dict = {}
    for table, keys in _TOML_LAYOUT.items():
        section = raw if table is None else raw.get(table, {})
        if not isinstance(section, dict):
            raise ConfigError(f"{path}: [{table}] must be a table")
        unknown = set(section) - set(keys) - (set(_TOML_LAYOUT) - {None} if table is None else set())
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)} in [{table or 'root'}]")
        for key, name in keys.items():
            if key in section:
                values[name] = section[key]
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for name in ("ticks_dir", "sector_map", "headlines"):
        if name not in values:
            raise ConfigError(f"{path}: missing data.{name}")
    for name in _PATH_FIELDS:
        if name in values:
            p = Path(values[name])
            values[name] = p if p.is_absolute() else (path.parent / p)
    for name in ("dynamics", "laws", "regressors", "taus"):
        if name in values:
            values[name] = tuple(values[name])
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical (key-sorted) JSON form; output dir and worker count excluded."""
    d = config.as_dict()
    for k in ("out", "workers", "record_timing"):
        d.pop(k)
    return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def derive_seed(root: int, stage: str, *keys) -> int:
    """Independent 32-bit seed for a stage: the root seed plus CRC-32 of each name."""
    entropy = [int(root) & 0xFFFFFFFF, zlib.crc32(stage.encode())]
    entropy += [zlib.crc32(str(k).encode()) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def _tau_tag(tau: float) -> str:
    return f"tau{tau:g}"


def _dump_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n",
                    encoding="utf-8")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def _nan_to_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    return obj


@dataclass
class _Market:
    label: dict[str, md.BarSeries]  # instrument and sector bars on the labeling grid
    model: dict[str, md.BarSeries]  # sector bars on the modeling grid
    sector_of: dict[str, str]


@dataclass
class _News:
    headlines: list[sent.Headline]
    dictionary: sent.SentimentDictionary
    thresholds: dict[str, sent.Thresholds]
    regressors: dict[str, sent.RegressorSeries] = field(default_factory=dict)


def _sector_bars(members: dict[str, md.BarSeries], sector_of: dict[str, str], warnings: list[str]):
    out = {}
    for sector in sorted(set(sector_of.values())):
        group = {i: members[i] for i in sorted(members) if sector_of.get(i) == sector}
        if not group:
            warnings.append(f"sector {sector}: no instruments with tick data")
            continue
        keep, dropped = md.complete_members(group)
        for iid in dropped:
            warnings.append(f"sector {sector}: excluded {iid} (gaps on the common grid)")
        if keep:
            out[sector] = md.aggregate_sector(list(keep.values()))
    return out


def _sector_task(payload):
    """Forecast, backtest, MCS and combination for one sector (picklable)."""
    config, sector, bars, regs = payload
    return sector, _run_sector(config, sector, bars, regs)


def _run_sector(config: ExperimentConfig, sector: str, bars: md.BarSeries, regs: sent.RegressorSeries | None):
    regressors = {RegressorKind.N: RegressorSet.none()}
    if regs is not None:
        for kind in (RegressorKind.IV, RegressorKind.SE):
            regressors[kind] = RegressorSet(kind, regs.matrix(kind))
    fit_cfg = config.fit_config(derive_seed(config.seed, "fit", sector))
    roll = rolling_run(config.specs(), bars.log_returns, regressors, config.roll_config(), fit_cfg, bars.timestamps)
    results = {"roll": roll, "taus": {}}
    for tau, panel in roll.panels.items():
        entry = {"panel": panel}
        entry["backtests"] = {
            mid: backtest(panel.realized, panel.var[:, j], tau, config.dq_lags) for j, mid in enumerate(panel.model_ids)
        }
        if panel.n_models >= 2:
            mcs = mcs_run(loss_matrix(panel), config.mcs_config(derive_seed(config.seed, "mcs", sector, tau)))
            entry["mcs"] = mcs
            survivors = panel.select(mcs.surviving_ids)
        else:
            entry["mcs"] = None
            survivors = panel
        entry["combined"] = _combine_panel(config, survivors)
        results["taus"][tau] = entry
    return results


def _combine_panel(config: ExperimentConfig, panel):
    T = len(panel.realized)
    train = slice(0, max(int(round(config.kappa_train_fraction * T)), 1))
    var_avg = static_average(panel.var)
    if panel.n_models == 1:
        return {"kappa": None, "combined": CombinedVaR(panel.var[:, 0].copy(), var_avg), "ids": panel.model_ids}
    kfit = optimize_kappa(panel.var, panel.realized, panel.sigma2_hat, panel.tau, config.kernel_sign, train=train)
    W = dynamic_weights(panel.var, panel.realized, panel.sigma2_hat, kfit.kappa, panel.tau, config.kernel_sign)
    return {"kappa": kfit, "combined": CombinedVaR(combine(panel.var, W), var_avg), "ids": panel.model_ids}


class Pipeline:
    """Runs CLI stages against one configuration and output directory."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.out = Path(config.out)
        self.warnings: list[str] = []
        self.timing: dict[str, float] = {}
        self.stages: list[str] = []
        self._market: _Market | None = None
        self._news: _News | None = None

    # -- bookkeeping -------------------------------------------------------
    def _stage(self, name: str, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except (ConfigError, md.DataError) as exc:
            raise exc
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.stages.append(name)
        self.timing[name] = round(time.perf_counter() - t0, 3)
        return out

    def write_manifest(self, status: str = "ok", error: str | None = None) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        manifest_path = self.out / "manifest.json"
        files = []
        for p in sorted(self.out.rglob("*")):
            if p.is_file() and p != manifest_path:
                files.append({"path": p.relative_to(self.out).as_posix(),
                              "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        payload = {
            "tool_version": __version__,
            "config_hash": config_hash(self.config),
            "seed": self.config.seed,
            "status": status,
            "stages": self.stages,
            "warnings": self.warnings,
            "files": files,
        }
        if error:
            payload["error"] = error
        if self.config.record_timing:
            payload["timing_seconds"] = self.timing
        return _dump_json(manifest_path, payload)

    # -- stages ------------------------------------------------------------
    def ingest(self) -> _Market:
        if self._market is None:
            self._market = self._stage("ingest", self._ingest)
        return self._market

    def _ingest(self) -> _Market:
        cfg = self.config
        sector_of = md.load_sector_map(cfg.sector_map)
        tick_files = sorted(Path(cfg.ticks_dir).glob("*.csv"))
        if not tick_files:
            raise md.DataError(f"no tick files in {cfg.ticks_dir}")
        label_inst, model_inst = {}, {}
        for path in tick_files:
            ticks = md.load_ticks(path)
            if ticks.instrument_id not in sector_of:
                self.warnings.append(f"{ticks.instrument_id}: not in sector map, skipped")
                continue
            label_inst[ticks.instrument_id] = md.resample(ticks, cfg.label_interval)
            model_inst[ticks.instrument_id] = md.resample(ticks, cfg.model_interval)
        label_sec = _sector_bars(label_inst, sector_of, self.warnings)
        model_sec = _sector_bars(model_inst, sector_of, [])
        if not model_sec:
            raise md.DataError("no sector could be formed from the tick files")

        bar_dir = self.out / "bars"
        for grid, inst, sec in (("label", label_inst, label_sec), ("model", model_inst, model_sec)):
            for name, bars in {**inst, **sec}.items():
                md.write_bars(bars, bar_dir / grid / f"{name}.csv")
        rows = []
        for sector, bars in model_sec.items():
            try:
                stats = md.summary_stats(bars.log_returns).as_dict()
            except md.DegenerateInputError:
                stats = {"n": len(bars)}
                self.warnings.append(f"sector {sector}: degenerate returns, no summary statistics")
            rows.append({"sector": sector, **stats})
        _write_table(bar_dir / "summary_stats.csv", rows,
                     ["sector", "n", "min", "max", "mean", "std_dev", "skewness", "kurtosis", "quantile_1pct",
                      "jarque_bera"])
        return _Market({**label_inst, **label_sec}, model_sec, sector_of)

    def build_dict(self) -> _News:
        if self._news is None:
            market = self.ingest()
            self._news = self._stage("build-dict", lambda: self._build_dict(market))
        return self._news

    def _build_dict(self, market: _Market) -> _News:
        cfg = self.config
        headlines = sent.dedupe(sent.load_headlines(cfg.headlines))
        if not headlines:
            raise md.DataError(f"{cfg.headlines}: no headlines")
        n_raw = len(sent.load_headlines(cfg.headlines))
        if n_raw != len(headlines):
            self.warnings.append(f"headlines: removed {n_raw - len(headlines)} duplicates")
        # the in-sample half of each labeling series defines thresholds and the corpus
        thresholds, cutoff = {}, {}
        for name, bars in sorted(market.label.items()):
            half = bars.window(0, int(math.floor(cfg.insample_fraction * len(bars))))
            try:
                thresholds[name] = sent.compute_thresholds(half.log_returns, cfg.tail, cfg.high_quantile)
            except ValueError as exc:
                self.warnings.append(f"thresholds for {name}: {exc}")
                continue
            cutoff[name] = int(half.timestamps[-1])
        insample = [h for h in headlines if h.source_id in cutoff and h.timestamp <= cutoff[h.source_id]]
        labeled, unmatched = sent.label_headlines(insample, market.label, thresholds)
        if unmatched:
            self.warnings.append(f"labeling: {unmatched} in-sample headline(s) could not be matched to a bar")
        if not labeled:
            raise md.DataError("no in-sample headline could be labeled")
        dictionary = sent.build_dictionary(labeled, cfg.f_threshold)
        sdir = self.out / "sentiment"
        dictionary.save(sdir / "dictionary.json")
        _dump_json(sdir / "dictionary_summary.json", {
            "f_threshold": dictionary.f_threshold,
            "counts": dictionary.counts,
            "n_labeled": len(labeled),
            "n_unmatched": unmatched,
            "n_headlines": len(headlines),
        })
        _dump_json(sdir / "thresholds.json", {k: asdict(v) for k, v in thresholds.items()})
        return _News(headlines, dictionary, thresholds)

    def regressors(self) -> dict[str, sent.RegressorSeries]:
        news = self.build_dict()
        if not news.regressors:
            news.regressors = self._stage("regressors", lambda: self._regressors(news))
        return news.regressors

    def _regressors(self, news: _News) -> dict[str, sent.RegressorSeries]:
        market = self.ingest()
        out = {}
        for sector, bars in market.model.items():
            own = [h for h in news.headlines if h.source_id == sector or market.sector_of.get(h.source_id) == sector]
            regs = sent.build_regressors(own, news.dictionary, bars.timestamps, bars.volumes)
            if regs.dropped_headlines:
                self.warnings.append(f"sector {sector}: {regs.dropped_headlines} headline(s) after the last bar")
            regs.write_csv(self.out / "sentiment" / "regressors" / f"{sector}.csv")
            out[sector] = regs
        return out

    def fit(self) -> dict:
        regs = self.regressors()
        return self._stage("fit", lambda: self._fit(regs))

    def _fit(self, regs) -> dict:
        """Full-sample fit of the in-sample half for every spec and sector."""
        cfg = self.config
        market = self.ingest()
        summary = {}
        for sector, bars in market.model.items():
            n_in = int(math.floor(cfg.insample_fraction * len(bars)))
            fit_cfg = cfg.fit_config(derive_seed(cfg.seed, "fit", sector))
            rows = []
            for spec in cfg.specs():
                rs = RegressorSet.none() if spec.regressors is RegressorKind.N else RegressorSet(
                    spec.regressors, regs[sector].matrix(spec.regressors)[:n_in])
                try:
                    fitted = fit(spec.dynamics, spec.law, rs, bars.log_returns[:n_in], fit_cfg)
                except (EstimationError, ConstraintError, FilterError, ValueError) as exc:
                    self.warnings.append(f"sector {sector}: {spec.model_id} fit failed ({exc})")
                    continue
                rows.append(_nan_to_none(fitted.to_dict()))
            _dump_json(self.out / "fits" / f"{sector}.json", {"sector": sector, "n_obs": n_in, "models": rows})
            summary[sector] = rows
        return summary

    def run(self) -> dict:
        regs = self.regressors()
        return self._stage("run", lambda: self._run(regs))

    def _run(self, regs) -> dict:
        cfg = self.config
        market = self.ingest()
        payloads = [(cfg, s, market.model[s], regs.get(s)) for s in sorted(market.model)]
        if cfg.workers > 1 and len(payloads) > 1:
            with ProcessPoolExecutor(max_workers=min(cfg.workers, len(payloads))) as pool:
                results = dict(pool.map(_sector_task, payloads))
        else:
            results = dict(map(_sector_task, payloads))
        for sector in sorted(results):
            self._write_sector(sector, results[sector])
        return results

    def _write_sector(self, sector: str, res: dict) -> None:
        base = self.out / "results" / sector
        roll = res["roll"]
        for mid, reason in sorted(roll.failures.items()):
            self.warnings.append(f"sector {sector}: dropped {mid} ({reason})")
        _dump_json(base / "fits.json", {
            mid: [_nan_to_none(f.to_dict()) for f in fits] for mid, fits in sorted(roll.fits.items())
        })
        for tau, entry in sorted(res["taus"].items()):
            tag = _tau_tag(tau)
            panel = entry["panel"]
            write_panel(panel, base / f"var_{tag}.csv", {"sector": sector})
            write_reports(entry["backtests"], base / f"backtest_{tag}.csv")
            if entry["mcs"] is not None:
                extra = {"sector": sector, "tau": tau,
                         "regressor_sets": {m: ModelSpec.parse(m).regressors.value for m in panel.model_ids}}
                write_mcs(entry["mcs"], panel.model_ids, base / f"mcs_{tag}.json", extra)
            comb = entry["combined"]
            cv = comb["combined"]
            hit_dyn = panel.realized < cv.var_dyn
            hit_avg = panel.realized < cv.var_avg
            kfit = comb["kappa"]
            meta = {
                "sector": sector,
                "tau": tau,
                "models": comb["ids"],
                "kernel_sign": self.config.kernel_sign,
                "kappa": None if kfit is None else [float(k) for k in kfit.kappa],
                "kappa_loss": None if kfit is None else kfit.loss,
                "kappa_converged": None if kfit is None else kfit.converged,
                "var_dyn": _ad_summary(panel.realized, cv.var_dyn, hit_dyn),
                "var_avg": _ad_summary(panel.realized, cv.var_avg, hit_avg),
            }
            write_combined(panel.timestamps, panel.realized, cv, base / f"combined_{tag}.csv", meta)

    def report(self) -> str:
        return self._stage("report", self._report)

    def _report(self) -> str:
        root = self.out / "results"
        if not root.is_dir():
            raise ConfigError(f"no results under {root}; run the 'run' verb first")
        lines = []
        for sector_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            for mcs_json in sorted(sector_dir.glob("mcs_tau*.json")):
                tag = mcs_json.stem.removeprefix("mcs_")
                mcs = json.loads(mcs_json.read_text(encoding="utf-8"))
                comb = json.loads((sector_dir / f"combined_{tag}.json").read_text(encoding="utf-8"))
                dyn, avg = comb["var_dyn"], comb["var_avg"]
                lines.append(
                    f"{sector_dir.name} {tag}: SSM {len(mcs['surviving_ids'])} model(s) "
                    f"[{', '.join(mcs['surviving_ids'])}], block length {mcs['block_length']}; "
                    f"AD max dyn/avg {_fmt_opt(dyn['ad_max'])}/{_fmt_opt(avg['ad_max'])}, "
                    f"AD mean dyn/avg {_fmt_opt(dyn['ad_mean'])}/{_fmt_opt(avg['ad_mean'])}"
                )
        text = "\n".join(lines) + "\n"
        path = self.out / "report.txt"
        path.write_text(text, encoding="utf-8")
        return text


def _fmt_opt(x) -> str:
    return "-" if x is None else f"{x:.6g}"


def _ad_summary(realized, var, hit) -> dict:
    if not hit.any():
        return {"n_hits": 0, "ad_mean": 0.0, "ad_max": 0.0}
    dev = np.abs(realized[hit] - var[hit])
    return {"n_hits": int(hit.sum()), "ad_mean": float(dev.mean()), "ad_max": float(dev.max())}


def _write_table(path: Path, rows: list[dict], columns: list[str]) -> None:
    import csv

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v
