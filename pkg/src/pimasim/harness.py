"""Seeded replications, parameter sweeps and CSV export."""

import csv
import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels, engines
from .config import SimConfig
from .metrics import Metrics
from .scheduler import build_table
from .validation import check_int

log = logging.getLogger(__name__)

CELL_FIELDS = ("protocol", "K", "lambda_total", "B", "L1_us", "seed", "generated",
               "delivered", "dropped", "drop_prob", "mean_latency_s")
POINT_FIELDS = ("curve", "protocol", "L1_us", "lambda_total", "n_seeds", "mean",
                "ci95_low", "ci95_high")

# reference operating grid: 10 linearly spaced total rates
REFERENCE_GRID = tuple(float(x) for x in np.linspace(0.01, 0.7, 10))

REFERENCE_CURVES = (
    ("TDMA", {"protocol": "tdma"}),
    ("SALOHA", {"protocol": "saloha"}),
    ("PIMA L1=44us", {"protocol": "pima", "pe_target": 0.1, "m1": None}),
    ("PIMA L1=17us", {"protocol": "pima", "pe_target": 0.3, "m1": None}),
)


@functools.lru_cache(maxsize=None)
def cached_table(n_users):
    return build_table(n_users)


def run(config, engine="fast"):
    """Simulate one configuration; deterministic in ``config.seed``."""
    if engine == "reference":
        return engines.run_protocol(config)
    if engine != "fast":
        raise ValueError(f"unknown engine {engine!r}")
    times, owners, rng = engines.simulation_streams(config)
    regions = table = None
    if config.protocol == "pima":
        regions = engines.decision_regions(config)
        table = cached_table(config.n_users)
    return _kernels.run_fast(config, times, owners, rng, regions, table)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def cell_row(config, metrics):
    return {
        "protocol": config.protocol,
        "K": config.n_users,
        "lambda_total": float(config.lambda_total),
        "B": config.buffer,
        "L1_us": config.pia_seconds * 1e6 if config.protocol == "pima" else None,
        "seed": config.seed,
        "generated": metrics.generated,
        "delivered": metrics.delivered,
        "dropped": metrics.dropped,
        "drop_prob": metrics.drop_probability,
        "mean_latency_s": metrics.mean_latency,
    }


def format_row(row, fields=CELL_FIELDS):
    return ",".join(_fmt(row[f]) for f in fields)


def mean_ci(values, level=0.95):
    """Mean and two-sided Student-t interval; the interval is NaN for one sample."""
    values = np.asarray([v for v in values if v is not None], dtype=float)
    if values.size == 0:
        return math.nan, math.nan, math.nan
    mean = float(values.mean())
    if values.size < 2:
        return mean, math.nan, math.nan
    half = stats.t.ppf(0.5 + level / 2, values.size - 1) * values.std(ddof=1) / math.sqrt(values.size)
    return mean, mean - half, mean + half


@dataclass
class SweepResult:
    cells: list = field(default_factory=list)  # (curve, config, metrics)

    def rows(self):
        return [cell_row(cfg, m) for _, cfg, m in self.cells]

    def points(self, metric="drop_prob"):
        """One aggregated row per (curve, rate), in sweep order."""
        groups = {}
        for curve, cfg, m in self.cells:
            groups.setdefault((curve, cfg.lambda_total), []).append((cfg, m))
        out = []
        for (curve, lam), members in groups.items():
            cfg = members[0][0]
            values = [cell_row(c, m)[metric] for c, m in members]
            mean, lo, hi = mean_ci(values)
            out.append({"curve": curve, "protocol": cfg.protocol,
                        "L1_us": cfg.pia_seconds * 1e6 if cfg.protocol == "pima" else None,
                        "lambda_total": float(lam), "n_seeds": len(members),
                        "mean": mean, "ci95_low": lo, "ci95_high": hi})
        return out

    def point(self, curve, lambda_total, metric="drop_prob"):
        for p in self.points(metric):
            if p["curve"] == curve and math.isclose(p["lambda_total"], lambda_total, rel_tol=1e-9):
                return p
        raise KeyError((curve, lambda_total))

    def write_cells(self, path):
        _write_csv(path, CELL_FIELDS, self.rows())

    def write_points(self, path, metric):
        _write_csv(path, POINT_FIELDS, self.points(metric))


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row[f]) for f in fields])


def _run_cell(args):
    curve, config, engine = args
    return curve, config, run(config, engine)


def sweep(base, lambdas, seeds, curves=None, n_jobs=1, engine="fast"):
    """Run every (curve, rate, seed) cell.

    ``curves`` is a sequence of ``(label, overrides)``; by default a single
    curve named after ``base.protocol``. ``seeds`` is either a count (seeds
    ``base.seed .. base.seed + n - 1``) or an explicit list.
    """
    lambdas = list(lambdas)
    if not lambdas:
        raise ValueError("need at least one arrival rate")
    if isinstance(seeds, int):
        seeds = range(base.seed, base.seed + check_int(seeds, "seeds", min_value=1))
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    curves = list(curves) if curves is not None else [(base.protocol, {})]

    jobs = [(label, base.replace(**overrides, lambda_total=float(lam), seed=int(s)), engine)
            for label, overrides in curves for lam in lambdas for s in seeds]
    log.info("sweep: %d cells (%d curves x %d rates x %d seeds)",
             len(jobs), len(curves), len(lambdas), len(seeds))
    if n_jobs == 1:
        cells = [_run_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            cells = list(pool.map(_run_cell, jobs, chunksize=1))
    return SweepResult(cells)


def reference_sweep(seeds=10, horizon_slots=1_000_000, warmup_slots=10_000, n_jobs=1, **overrides):
    base = SimConfig(n_users=20, buffer=3, horizon_slots=horizon_slots,
                     warmup_slots=warmup_slots, **overrides)
    return sweep(base, REFERENCE_GRID, seeds, REFERENCE_CURVES, n_jobs=n_jobs)


__all__ = ["Metrics", "SimConfig", "SweepResult", "run", "sweep", "reference_sweep", "mean_ci",
           "REFERENCE_GRID", "REFERENCE_CURVES", "CELL_FIELDS", "POINT_FIELDS"]
