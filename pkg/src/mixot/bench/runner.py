from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, ExperimentFailed, MixotError
from ..estimators import estimate
from ..kernels import make_kernel
from ..measures import MixingMeasure, wasserstein
from ..mixtures import MixtureModel, ProductMixtureModel
from ..rng import derive_seed
from .config import ExperimentConfig, fit_rate

CSV_COLUMNS = (
    "scenario", "rung_n", "rung_m", "rung_N", "replicate", "seed", "error_metric",
    "error_value", "estimator_objective", "wallclock_ms", "failed",
)
FAILURE_CAP = 0.05
DROP_WEIGHT = 1e-10


def resolve_threads(threads=None):
    if threads is None:
        env = os.environ.get("MIXOT_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    return int(threads)


def matched_errors(est, truth, N=1):
    """Atom and weight errors under the D_N-optimal matching (needs equal atom counts)."""
    if est.k != truth.k:
        raise ValueError("atom/weight errors need equal atom counts")
    best = None
    for perm in itertools.permutations(range(truth.k)):
        da = sum(float(np.linalg.norm(est.atoms[perm[i]] - truth.atoms[i])) for i in range(truth.k))
        dw = sum(abs(float(est.weights[perm[i]] - truth.weights[i])) for i in range(truth.k))
        cost = math.sqrt(N) * da + dw
        if best is None or cost < best[0]:
            best = (cost, da, dw)
    return best


def replicate_errors(cfg: ExperimentConfig, est: MixingMeasure, truth: MixingMeasure, N):
    """List of ``(metric_name, value)`` for one fitted replicate."""
    kind = cfg.metric["kind"]
    if kind == "W":
        r = float(cfg.metric.get("r", 1))
        clean = est.canonicalize(drop_below=DROP_WEIGHT)
        return [(f"W{r:g}", wasserstein(clean, truth, r=r)[0])]
    cost, da, dw = matched_errors(est, truth, N)
    if kind == "D_N":
        return [("D_N", cost)]
    return [("atom", da), ("weight", dw)]


def _metric_names(cfg):
    kind = cfg.metric["kind"]
    if kind == "W":
        return [f"W{float(cfg.metric.get('r', 1)):g}"]
    return ["D_N"] if kind == "D_N" else ["atom", "weight"]


def _local_truth(G0, radius, rng, kernel):
    """A random measure within about ``radius`` (in W_1) of G0, same support size."""
    step = rng.standard_normal(G0.atoms.shape)
    step *= radius / max(np.linalg.norm(step, axis=1).max(), 1e-12) * rng.random()
    atoms = np.clip(G0.atoms + step, kernel.lo, kernel.hi)
    dw = rng.standard_normal(G0.k)
    dw -= dw.mean()
    w = np.clip(G0.weights + 0.5 * radius * dw * G0.weights.min() / max(np.abs(dw).max(), 1e-12),
                1e-3, None)
    return MixingMeasure(atoms, w / w.sum())


def _run_task(args):
    cfg, rung_idx, rep = args
    n_total, m, N = cfg.rungs()[rung_idx]
    seed = derive_seed(cfg.seed, cfg.scenario, m, N, rep)
    rng = np.random.default_rng(seed)
    kernel = make_kernel(cfg.kernel)
    truth = cfg.truth_measure()
    if cfg.local_radius:
        truth = _local_truth(truth, cfg.local_radius, rng, kernel)
    ecfg = replace(cfg.estimator_config(), seed=derive_seed(seed, "optimizer"))
    names = _metric_names(cfg)
    t0 = time.perf_counter()
    try:
        if cfg.model == "plain":
            data = MixtureModel(kernel, truth).sample(rng, m)
        else:
            data = ProductMixtureModel(kernel, truth, N).sample_sequences(m, rng)
        res = estimate(data, kernel, ecfg, kind=cfg.model)
        errors = replicate_errors(cfg, res.estimate, truth, N)
        objective, failed = float(res.objective), 0
    except (MixotError, ValueError, np.linalg.LinAlgError, FloatingPointError):
        errors = [(name, float("nan")) for name in names]
        objective, failed = float("nan"), 1
    ms = (time.perf_counter() - t0) * 1000.0 if cfg.timing else 0.0
    return [
        {
            "scenario": cfg.scenario, "rung_n": n_total, "rung_m": m, "rung_N": N,
            "replicate": rep, "seed": seed, "error_metric": name, "error_value": float(val),
            "estimator_objective": objective, "wallclock_ms": ms, "failed": failed,
        }
        for name, val in errors
    ]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    fits: dict
    failed: int
    wallclock_s: float
    summary: dict = field(default_factory=dict)

    def csv_text(self):
        return rows_to_csv(self.rows)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def aggregate(cfg, rows):
    """Per metric: RateFit over rungs (mean error, or max for local worst-case runs)."""
    fits = {}
    for name in _metric_names(cfg):
        sizes, centers, ses = [], [], []
        for n_total, m, N in cfg.rungs():
            vals = np.array([r["error_value"] for r in rows
                             if r["rung_m"] == m and r["rung_N"] == N and r["error_metric"] == name
                             and not r["failed"]])
            if vals.size == 0:
                continue
            sizes.append(n_total)
            if cfg.local_radius:
                centers.append(float(vals.max()))
            else:
                centers.append(float(vals.mean()))
            ses.append(float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0)
        try:
            fits[name] = fit_rate(sizes, centers, ses)
        except ValueError:
            fits[name] = None
    return fits


def _expected_ok(cfg, fits):
    if not cfg.expected_slope:
        return None
    ok = True
    for name, band in cfg.expected_slope.items():
        fit = fits.get(name)
        if fit is None or not (band[0] <= fit.slope <= band[1]):
            ok = False
    return ok


def run_experiment(cfg: ExperimentConfig, threads=None, progress=None):
    """Run every (rung, replicate) task; deterministic for a given config.

    Raises :class:`ExperimentFailed` (carrying the partial result as ``.result``)
    when more than 5% of replicates fail.
    """
    threads = resolve_threads(threads)
    tasks = [(cfg, i, rep) for i in range(len(cfg.ladder)) for rep in range(cfg.replicates)]
    t0 = time.perf_counter()
    if threads == 1:
        results = []
        for j, t in enumerate(tasks):
            results.append(_run_task(t))
            if progress:
                progress(j + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
    rows = [row for chunk in results for row in chunk]
    wall = time.perf_counter() - t0
    failed = sum(1 for chunk in results if chunk[0]["failed"])
    fits = aggregate(cfg, rows)
    names = _metric_names(cfg)
    head = fits.get(names[0])
    summary = {
        "scenario": cfg.scenario,
        "slope": head.slope if head else None,
        "slope_se": head.slope_se if head else None,
        "r2": head.r2 if head else None,
        "rungs": len(cfg.ladder),
        "replicates": cfg.replicates,
        "metric": names[0],
        "fits": {k: (v.to_dict() if v else None) for k, v in fits.items()},
        "failed": failed,
        "tasks": len(tasks),
        "anchor": cfg.anchor,
        "heuristic": bool(cfg.local_radius),
        "expected_slope": cfg.expected_slope,
        "expected_ok": _expected_ok(cfg, fits),
        "seed": int(cfg.seed),
        "wallclock_s": wall,
    }
    result = ExperimentResult(cfg, rows, fits, failed, wall, summary)
    if failed > FAILURE_CAP * len(tasks):
        err = ExperimentFailed(f"{cfg.scenario}: {failed}/{len(tasks)} replicates failed")
        err.result = result
        raise err
    return result
