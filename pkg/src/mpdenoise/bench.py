"""Monte Carlo harness: losses, overlaps, phase-transition and rate checks.

Every trial draws its instance from the stream keyed on
``(config.seed, point_index, trial)``, so results do not depend on execution
order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import median
from typing import Sequence

import numpy as np
from scipy import stats

from . import spectral
from .config import ExperimentConfig
from .denoise import (
    detect_q,
    oracle_eta,
    rie_denoise,
    shrink_singular_value,
    stepwise_svd,
    tsvd_denoise,
)
from .errors import DegenerateError, DomainError
from .linalg import full_svd, top_singular_triples, top_singular_values
from .synth import assemble

__version__ = "0.1.0"


# ---------------------------------------------------------------------------
# metrics


def frobenius_loss(S, S_hat, squared: bool = False) -> float:
    S = np.asarray(S, dtype=float)
    S_hat = np.asarray(S_hat, dtype=float)
    if S.shape != S_hat.shape:
        raise DomainError(f"shape mismatch: {S.shape} vs {S_hat.shape}")
    sq = float(np.sum((S - S_hat) ** 2))
    return sq if squared else math.sqrt(sq)


def rial(losses_candidate: Sequence[float], losses_baseline: Sequence[float]) -> float:
    """Relative improvement in average loss, ``1 - mean(candidate) / mean(baseline)``."""
    cand = list(map(float, losses_candidate))
    base = list(map(float, losses_baseline))
    if not cand or not base:
        raise DomainError("rial needs non-empty loss lists")
    base_mean = math.fsum(base) / len(base)
    if base_mean == 0:
        raise DegenerateError("baseline mean loss is zero; RIAL undefined")
    return 1.0 - (math.fsum(cand) / len(cand)) / base_mean


@dataclass
class OverlapStats:
    left: np.ndarray  # r x r, <u_i, P_l u_j>
    right: np.ndarray  # r x r, <v_i, P_r v_j>
    left_sq: np.ndarray  # r x |A|, <u_i, u~_k>^2
    right_sq: np.ndarray


def overlap_stats(U, V, U_obs, V_obs, A: Sequence[int]) -> OverlapStats:
    """Overlaps of the truth with the projections onto observed singular vectors indexed by ``A`` (0-based)."""
    U, V = np.atleast_2d(np.asarray(U, float).T).T, np.atleast_2d(np.asarray(V, float).T).T
    U_obs, V_obs = np.asarray(U_obs, float), np.asarray(V_obs, float)
    A = np.asarray(list(A), dtype=int)
    if A.size and (A.min() < 0 or A.max() >= min(U_obs.shape[1], V_obs.shape[1])):
        raise DomainError("index subset out of range")
    Gu = U.T @ U_obs[:, A]
    Gv = V.T @ V_obs[:, A]
    return OverlapStats(Gu @ Gu.T, Gv @ Gv.T, Gu ** 2, Gv ** 2)


# ---------------------------------------------------------------------------
# rate fits


@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float
    slope_stderr: float
    ci_low: float
    ci_high: float
    ns: list
    medians: list

    def to_dict(self):
        return {k: getattr(self, k) for k in ("slope", "intercept", "r2", "slope_stderr", "ci_low", "ci_high", "ns", "medians")}


def fit_rate(ns: Sequence[int], errors: Sequence[Sequence[float]], min_points: int = 4,
             min_trials: int = 30, level: float = 0.95) -> RateFit:
    """Least-squares slope of ``log(median |error|)`` against ``log N``.

    The band is the ``level`` t-interval on the slope.
    """
    ns = [int(n) for n in ns]
    if len(ns) != len(errors):
        raise DomainError("one error sample per ladder point is required")
    if len(ns) < min_points or len(set(ns)) != len(ns) or any(n <= 0 for n in ns):
        raise DegenerateError(f"need at least {min_points} distinct positive ladder points")
    meds = []
    for e in errors:
        e = np.abs(np.asarray(e, dtype=float))
        if e.size < min_trials:
            raise DegenerateError(f"each ladder point needs at least {min_trials} trials")
        meds.append(float(np.median(e)))
    if any(m <= 0 for m in meds):
        raise DegenerateError("median error is zero at some ladder point; log fit undefined")
    x, y = np.log(ns), np.log(meds)
    res = stats.linregress(x, y)
    dof = len(ns) - 2
    half = stats.t.ppf(0.5 + level / 2, dof) * res.stderr if dof > 0 else float("inf")
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), float(res.stderr),
                   float(res.slope - half), float(res.slope + half), ns, meds)


# ---------------------------------------------------------------------------
# experiment points and trials


def _points(cfg: ExperimentConfig) -> list:
    """Expand the sweep/ladder into a list of parameter dicts, one per point."""
    exp = cfg.experiment
    d0 = list(cfg.signal["d_values"])
    if exp == "rates":
        c = float(cfg.ladder["c"])
        return [
            {"case": cs["label"], "d": float(cs["d"]), "M": int(round(n / c)), "N": int(n), "c": c}
            for cs in cfg.ladder["cases"] for n in cfg.ladder["N"]
        ]
    if exp == "phase_transition":
        cs = cfg.sweep.get("c", [cfg.c])
        ds = cfg.sweep.get("d", d0[:1])
        return [
            {"d": float(d), "M": cfg.M, "N": int(round(c * cfg.M)), "c": float(c)}
            for c in cs for d in ds
        ]
    if exp == "comparison" and "M" in cfg.sweep:
        return [{"M": int(m), "N": int(round(cfg.c * m)), "d_values": d0} for m in cfg.sweep["M"]]
    return [{"M": cfg.M, "N": cfg.N, "d_values": d0}]


def _instance(cfg, point, pidx, trial):
    d_values = point.get("d_values", [point["d"]] if "d" in point else None)
    spec = cfg.signal_spec(M=point["M"], N=point["N"], d_values=d_values)
    return assemble(spec, cfg.noise_spec(), (pidx, trial))


def _trial_outlier_count(cfg, point, pidx, trial):
    inst = _instance(cfg, point, pidx, trial)
    M, N = inst.shape
    sigma = cfg.noise_spec().sigma or 1.0
    diag = detect_q(full_svd(inst.S_tilde), N / M, N, sigma)
    return {"q": diag.q, "mu_head": [float(m) for m in diag.mu[:8]]}


def _trial_phase(cfg, point, pidx, trial):
    inst = _instance(cfg, point, pidx, trial)
    M, N = inst.shape
    c = N / M
    top = top_singular_triples(inst.S_tilde, 2)
    u, v = inst.U[:, 0], inst.V[:, 0]
    ou = (u @ top.left_vectors) ** 2
    ov = (v @ top.right_vectors) ** 2
    mu1 = float(top.singular_values[0] ** 2)
    d = point["d"]
    d_hat = shrink_singular_value(mu1, c, N)
    eta_hat = d_hat * spectral.a1(d_hat, c) * spectral.a2(d_hat, c) if d_hat > 0 else 0.0
    return {
        "mu1": mu1,
        "mu2": float(top.singular_values[1] ** 2),
        "overlap_u1": float(ou[0]),
        "overlap_v1": float(ov[0]),
        "overlap_u2_scaled": float(ou[1] * N),
        "overlap_v2_scaled": float(ov[1] * N),
        "overlap_v1_scaled": float(ov[0] * N),
        "eta_hat1": float(eta_hat),
        # <u~1, S v~1> for the rank-one truth
        "eta_oracle1": float(d * (u @ top.left_vectors[:, 0]) * (v @ top.right_vectors[:, 0])),
    }


def _trial_rate(cfg, point, pidx, trial):
    inst = _instance(cfg, point, pidx, trial)
    mu1 = float(top_singular_values(inst.S_tilde, 1)[0] ** 2)
    return {"mu1": mu1}


def run_estimator(est: dict, S_tilde: np.ndarray, r: int):
    """Apply one configured estimator; returns ``(S_hat, extras)``."""
    method = est["method"]
    sigma = est.get("sigma", 1.0)
    if method == "stepwise":
        opts = {k: est[k] for k in ("tau_sep", "delta1", "gate", "max_components") if k in est}
        res = stepwise_svd(S_tilde, sigma=sigma, **opts)
        return res.S_hat, {"result": res}
    if method == "rie":
        res = rie_denoise(S_tilde, sigma=sigma)
        return res.S_hat, {"result": res}
    value = est.get("value", "r")
    if value == "K":
        value = min(S_tilde.shape)
    elif value == "r":
        value = r
    return tsvd_denoise(S_tilde, est.get("mode", "rank"), value), {}


def _support_recovery(true_supports, est_supports):
    tot = hit = 0
    for k, st in enumerate(true_supports):
        se = est_supports[k] if k < len(est_supports) else np.array([], dtype=int)
        tot += len(st)
        hit += len(np.intersect1d(st, se))
    return hit / tot if tot else float("nan")


def _trial_comparison(cfg, point, pidx, trial):
    inst = _instance(cfg, point, pidx, trial)
    S = inst.S
    r = inst.D.size
    out = {}
    sparse = cfg.signal.get("vector_family") == "sparse"
    for est in cfg.estimators:
        name = est.get("name", est["method"])
        S_hat, extra = run_estimator(est, inst.S_tilde, r)
        out[f"loss_{name}"] = frobenius_loss(S, S_hat)
        res = extra.get("result")
        if est["method"] == "stepwise":
            out[f"components_{name}"] = int(res.n_components)
            out[f"q_{name}"] = int(res.initial.q)
            if sparse:
                out[f"recovery_{name}"] = 0.5 * (
                    _support_recovery(inst.left_supports, res.left_supports)
                    + _support_recovery(inst.right_supports, res.right_supports)
                )
                out[f"recovery_left_{name}"] = _support_recovery(inst.left_supports, res.left_supports)
        elif est["method"] == "rie":
            out[f"q_{name}"] = int(res.q)
            out[f"eta1_{name}"] = float(res.eta_hat[0])
            out[f"oracle_eta1_{name}"] = float(oracle_eta(S, res.svd)[0] * res.sigma)
    return out


_TRIALS: dict = {
    "outlier_count": _trial_outlier_count,
    "phase_transition": _trial_phase,
    "rates": _trial_rate,
    "comparison": _trial_comparison,
}


def _work(args):
    cfg, point, pidx, trial = args
    return pidx, trial, _TRIALS[cfg.experiment](cfg, point, pidx, trial)


def _run_all(cfg: ExperimentConfig, points: list, jobs: int = 1) -> list:
    tasks = [(cfg, p, i, t) for i, p in enumerate(points) for t in range(cfg.trials)]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_work, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_work(t) for t in tasks]
    results.sort(key=lambda x: (x[0], x[1]))
    return [{"point": i, "trial": t, "metrics": m} for i, t, m in results]


# ---------------------------------------------------------------------------
# aggregation


def summarize(values: Sequence[float]) -> dict:
    """Order-independent summary (``fsum`` makes the mean exact-rounded)."""
    x = sorted(float(v) for v in values if v == v)
    n = len(x)
    if n == 0:
        return {"n": 0, "mean": None, "median": None, "std": None, "min": None, "max": None}
    mean = math.fsum(x) / n
    var = math.fsum((v - mean) ** 2 for v in x) / (n - 1) if n > 1 else 0.0
    return {"n": n, "mean": mean, "median": float(median(x)), "std": math.sqrt(var), "min": x[0], "max": x[-1]}


def _metric_values(records, pidx, key):
    return [r["metrics"][key] for r in records if r["point"] == pidx and key in r["metrics"]]


def _scalar_keys(records):
    keys = []
    for r in records:
        for k, v in r["metrics"].items():
            if isinstance(v, (int, float)) and k not in keys:
                keys.append(k)
    return keys


@dataclass
class ExperimentReport:
    config: dict
    points: list
    records: list
    aggregates: list
    derived: dict = field(default_factory=dict)
    table: list = field(default_factory=list)
    plot: list = field(default_factory=list)
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "tool": "mpdenoise",
            "version": self.version,
            "config": self.config,
            "points": self.points,
            "aggregates": self.aggregates,
            "derived": self.derived,
            "records": self.records,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)

    def write(self, outdir) -> list:
        os.makedirs(outdir, exist_ok=True)
        written = []
        path = os.path.join(outdir, "report.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")
        written.append(path)
        if self.table:
            path = os.path.join(outdir, "table.csv")
            _write_csv(path, self.table)
            written.append(path)
        if self.plot:
            path = os.path.join(outdir, "plot.csv")
            _write_csv(path, self.plot)
            written.append(path)
        return written


def _write_csv(path, rows):
    cols = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in cols})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _aggregate(records, points):
    keys = _scalar_keys(records)
    return [
        {"point": i, "params": p, "stats": {k: summarize(_metric_values(records, i, k)) for k in keys}}
        for i, p in enumerate(points)
    ]


# ---------------------------------------------------------------------------
# experiment drivers


def run_outlier_count(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    points = _points(cfg)
    records = _run_all(cfg, points, jobs)
    qs = [r["metrics"]["q"] for r in records]
    c = cfg.c
    dc = spectral.critical_strength(c)
    expected_q = 1 + sum(1 for d in cfg.signal["d_values"] if d > dc)
    hist = {str(q): qs.count(q) for q in sorted(set(qs))}
    frac = qs.count(expected_q) / len(qs)
    derived = {"expected_q": expected_q, "q_histogram": hist, "fraction_expected_q": frac,
               "lambda_plus": spectral.edges(c).lambda_plus}
    table = [{"q": int(q), "count": n} for q, n in hist.items()]
    mu_med = np.median(np.array([r["metrics"]["mu_head"] for r in records]), axis=0)
    plot = [{"x": i + 1, "y": float(m), "series": "median_mu"} for i, m in enumerate(mu_med)]
    plot += [{"x": i + 1, "y": spectral.edges(c).lambda_plus, "series": "lambda_plus"} for i in range(len(mu_med))]
    return ExperimentReport(cfg.to_dict(), points, records, _aggregate(records, points), derived, table, plot)


def run_phase_transition(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Sweep ``d`` (and optionally ``c``) with rank one; compare ``mu_1`` and overlaps to their limits."""
    points = _points(cfg)
    records = _run_all(cfg, points, jobs)
    aggs = _aggregate(records, points)
    derived = {"points": []}
    table, plot = [], []
    for i, p in enumerate(points):
        c, d = p["c"], p["d"]
        lam_plus = spectral.edges(c).lambda_plus
        supercritical = d > spectral.critical_strength(c)
        target = spectral.p_of_d(d, c) if supercritical else lam_plus
        mu1 = np.array(_metric_values(records, i, "mu1"))
        row = {
            "c": c, "d": d, "M": p["M"], "N": p["N"],
            "supercritical": supercritical,
            "mu1_target": target,
            "median_mu1": float(np.median(mu1)),
            "median_abs_mu1_error": float(np.median(np.abs(mu1 - target))),
            "a1": spectral.a1(d, c) if supercritical else 0.0,
            "a2": spectral.a2(d, c) if supercritical else 0.0,
            "median_overlap_u1": aggs[i]["stats"]["overlap_u1"]["median"],
            "median_overlap_v1": aggs[i]["stats"]["overlap_v1"]["median"],
            "median_abs_overlap_u1_error": None,
            "median_abs_overlap_v1_error": None,
            "eta_target": d * spectral.a1(d, c) * spectral.a2(d, c) if supercritical else 0.0,
            "median_eta_hat1": aggs[i]["stats"]["eta_hat1"]["median"],
            "median_eta_oracle1": aggs[i]["stats"]["eta_oracle1"]["median"],
        }
        ou = np.array(_metric_values(records, i, "overlap_u1"))
        ov = np.array(_metric_values(records, i, "overlap_v1"))
        row["median_abs_overlap_u1_error"] = float(np.median(np.abs(ou - row["a1"])))
        row["median_abs_overlap_v1_error"] = float(np.median(np.abs(ov - row["a2"])))
        derived["points"].append(row)
        table.append(row)
        series = f"c={c:g}"
        plot += [
            {"x": d, "y": row["median_mu1"], "series": f"mu1 {series}"},
            {"x": d, "y": target, "series": f"limit {series}"},
            {"x": d, "y": row["median_overlap_u1"], "series": f"overlap_u {series}"},
            {"x": d, "y": row["median_overlap_v1"], "series": f"overlap_v {series}"},
            {"x": d, "y": row["median_eta_hat1"], "series": f"eta_hat {series}"},
            {"x": d, "y": row["median_eta_oracle1"], "series": f"eta_oracle {series}"},
        ]
    return ExperimentReport(cfg.to_dict(), points, records, aggs, derived, table, plot)


def run_rates(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Outlier-location (or edge) error against ``N`` on the ladder, with a log-log slope per case."""
    points = _points(cfg)
    records = _run_all(cfg, points, jobs)
    fits, table, plot = {}, [], []
    for cs in cfg.ladder["cases"]:
        label = cs["label"]
        idx = [i for i, p in enumerate(points) if p["case"] == label]
        ns, errs = [], []
        for i in idx:
            p = points[i]
            c, d = p["c"], p["d"]
            target = spectral.p_of_d(d, c) if d > spectral.critical_strength(c) else spectral.edges(c).lambda_plus
            e = np.abs(np.array(_metric_values(records, i, "mu1")) - target)
            ns.append(p["N"])
            errs.append(e)
            plot.append({"x": p["N"], "y": float(np.median(e)), "series": label})
        fit = fit_rate(ns, errs)
        fits[label] = {"d": cs["d"], **fit.to_dict()}
        table.append({"case": label, "d": cs["d"], "slope": fit.slope, "ci_low": fit.ci_low,
                      "ci_high": fit.ci_high, "r2": fit.r2})
    derived = {"rate_fits": fits}
    return ExperimentReport(cfg.to_dict(), points, records, _aggregate(records, points), derived, table, plot)


def run_estimator_comparison(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Loss distributions per estimator; RIAL against ``cfg.baseline`` when given."""
    points = _points(cfg)
    records = _run_all(cfg, points, jobs)
    aggs = _aggregate(records, points)
    names = [e.get("name", e["method"]) for e in cfg.estimators]
    sparsity = cfg.signal.get("sparsity")
    derived = {"points": []}
    table, plot = [], []
    for i, p in enumerate(points):
        entry = {"M": p["M"], "N": p["N"], "estimators": {}}
        base = _metric_values(records, i, f"loss_{cfg.baseline}") if cfg.baseline else None
        for name in names:
            losses = _metric_values(records, i, f"loss_{name}")
            st = summarize(losses)
            est = {"loss": st}
            if base is not None:
                est["rial"] = rial(losses, base)
            rec = _metric_values(records, i, f"recovery_{name}")
            if rec:
                est["support_recovery"] = summarize(rec)
            entry["estimators"][name] = est
            table.append({
                "method": name, "M": p["M"], "N": p["N"],
                "Sparsity": sparsity if sparsity is not None else "",
                "L2 norm": st["mean"], "Median": st["median"], "Std": st["std"],
                "RIAL": est.get("rial", ""),
            })
            if base is not None:
                plot.append({"x": p["M"], "y": est["rial"], "series": name})
        derived["points"].append(entry)
    return ExperimentReport(cfg.to_dict(), points, records, aggs, derived, table, plot)


RUNNERS: dict = {
    "outlier_count": run_outlier_count,
    "phase_transition": run_phase_transition,
    "rates": run_rates,
    "comparison": run_estimator_comparison,
}


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    return RUNNERS[cfg.experiment](cfg, jobs)
