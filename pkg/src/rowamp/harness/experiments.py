"""Experiment runner: trials, baselines, aggregation and CSV/JSON emission.

Records have one row per (sweep point, estimator, iteration).  Iterative
estimators report iterations 1..T (runs that stop early are held at their
last value); ``ls`` and ``replica`` report iteration 0.
"""

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..analysis import (
    ReplicaOptions,
    mutual_information,
    replica_fixed_point,
    se_nmse_db,
    solution_record,
    state_evolution,
)
from ..channels import AwgnRowChannel
from ..ep import IterationFailure, ep_diagonal_run, ep_run
from ..model import UndefinedMetricError, generate_instance, nmse, to_db
from ..numerics import SingularMatrixError
from ..priors import MCOptions
from .config import SWEEP_AXES, build_system

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "digest",
    "snr_db",
    "rho",
    "L",
    "bits",
    "estimator",
    "solver_mode",
    "iteration",
    "nmse_db",
    "nmse_db_stderr",
    "trials",
    "failed",
)


@dataclass
class ResultRecord:
    digest: str
    axes: dict
    estimator: str
    iteration: int
    nmse_db: float
    nmse_db_stderr: float
    trials: int
    failed: int = 0
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def csv_row(self):
        row = {"digest": self.digest, "estimator": self.estimator, "iteration": self.iteration}
        row["solver_mode"] = self.extra.get("solver_mode", "")
        for axis in SWEEP_AXES:
            row[axis] = self.axes.get(axis, "")
        row["nmse_db"] = f"{self.nmse_db:.6f}"
        row["nmse_db_stderr"] = f"{self.nmse_db_stderr:.6f}"
        row["trials"] = self.trials
        row["failed"] = self.failed
        return row

    def to_json(self):
        d = asdict(self)
        return {k: v for k, v in d.items() if k != "extra" or v}


def ls_baseline(instance):
    """Least-squares estimate from the recorded outputs.

    Plain pseudo-inverse when L >= N, ridge with a tiny relative
    regularizer otherwise.
    """
    H, Y = instance.H, instance.Y
    L, N = H.shape
    if L >= N:
        return np.linalg.pinv(H) @ Y
    G = H.conj().T @ H
    lam = 1e-6 * np.real(np.trace(G)) / N
    return np.linalg.solve(G + lam * np.eye(N), H.conj().T @ Y)


def _trial_errors(cfg, point, trial):
    """Run every enabled estimator on one instance.

    Returns ``{estimator: list of per-iteration NMSE (linear)}``; failed
    estimators map to None.
    """
    system = build_system(cfg, point, trial)
    inst = generate_instance(system, seed=cfg.seed + trial)
    out = {}
    for est in cfg.estimators:
        try:
            if est == "ls":
                out[est] = [nmse(inst.X, ls_baseline(inst)).nmse]
                continue
            run = ep_diagonal_run if est == "ep-diagonal" else ep_run
            _, _, traj = run(inst, system.prior, system.channel, cfg.solver)
            out[est] = [10 ** (v / 10) for v in traj.nmse_db]
        except (IterationFailure, SingularMatrixError, UndefinedMetricError) as err:
            log.warning("trial %d estimator %s failed: %s", trial, est, err)
            out[est] = None
    return out


def _pad(seq, length):
    return list(seq) + [seq[-1]] * (length - len(seq))


def solver_mode(estimator, channel):
    if estimator == "ls":
        return "direct"
    if estimator == "ep-diagonal" or getattr(channel, "diagonal_only", False):
        return "diagonal"
    return "full"


def aggregate(per_trial, digest, point, estimator, seconds=0.0, extra=None):
    """Mean and standard error of NMSE_dB over trials, one record per iteration."""
    extra = extra or {}
    ok = [per_trial[k] for k in sorted(per_trial) if per_trial[k] is not None]
    failed = len(per_trial) - len(ok)
    if not ok:
        return [ResultRecord(digest, point, estimator, 0, float("nan"), float("nan"), 0, failed, seconds, dict(extra))]
    T = max(len(s) for s in ok)
    db = np.array([[to_db(v) for v in _pad(s, T)] for s in ok])
    mean = db.mean(axis=0)
    se = db.std(axis=0, ddof=1) / np.sqrt(len(ok)) if len(ok) > 1 else np.zeros(T)
    first = 0 if estimator == "ls" else 1
    return [
        ResultRecord(digest, point, estimator, first + t, float(mean[t]), float(se[t]), len(ok), failed, seconds, dict(extra))
        for t in range(T)
    ]


def run_trials(cfg, point, threads=1):
    """Per-trial results for one sweep point, keyed by trial index."""
    trials = range(cfg.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda k: _trial_errors(cfg, point, k), trials))
    else:
        results = [_trial_errors(cfg, point, k) for k in trials]
    return dict(zip(trials, results))


def _mc(cfg):
    return MCOptions(n_prior=cfg.mc_samples, n_channel=2 * cfg.mc_samples, seed=cfg.seed)


def se_records(cfg, point, digest):
    system = build_system(cfg, point)
    states = state_evolution(system.alpha, system.prior, system.channel, cfg.solver.max_iters, _mc(cfg))
    curve = se_nmse_db(states, system.prior)
    return [ResultRecord(digest, point, "se", t, v, 0.0, 0) for t, v in enumerate(curve) if t > 0]


def replica_records(cfg, point, digest):
    system = build_system(cfg, point)
    mc = _mc(cfg)
    sol = replica_fixed_point(system.alpha, system.prior, system.channel, ReplicaOptions(mc=mc))
    extra = {"free_energy": sol.free_energy, "free_energy_stderr": sol.free_energy_stderr}
    if cfg.mi and isinstance(system.channel, AwgnRowChannel):
        mi, mi_se = mutual_information(sol, system.L, system.N, system.prior, system.channel, mc)
        sol.mutual_info = mi
        extra.update(mutual_info=mi, mutual_info_stderr=mi_se)
    extra["solution"] = solution_record(sol)
    ref = float(np.real(np.trace(system.prior.covariance)))
    db = to_db(sol.mse * system.M / ref) if ref > 0 else float("nan")
    return [ResultRecord(digest, point, "replica", 0, db, 0.0, 0, extra=extra)]


def run_experiment(cfg, threads=1, write=True):
    """Run every sweep point; returns the records (sorted) and writes CSV/JSON."""
    digest = cfg.digest
    records = []
    for point in cfg.axis_points():
        t0 = time.perf_counter()
        if cfg.estimators:
            per_trial = run_trials(cfg, point, threads)
            elapsed = time.perf_counter() - t0
            channel = build_system(cfg, point).channel
            for est in cfg.estimators:
                mode = {"solver_mode": solver_mode(est, channel)}
                records += aggregate({k: v[est] for k, v in per_trial.items()}, digest, point, est, elapsed, mode)
        if cfg.se:
            records += se_records(cfg, point, digest)
        if cfg.replica or cfg.mi:
            records += replica_records(cfg, point, digest)
    records.sort(key=_sort_key)
    if write:
        write_outputs(records, cfg.output, cfg.name, cfg.to_dict())
    return records


def _sort_key(rec):
    axes = tuple(float(rec.axes.get(a, 0)) for a in SWEEP_AXES)
    return axes, rec.estimator, rec.iteration


def write_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(r.csv_row())


def write_outputs(records, out_dir, name, config_dict=None):
    os.makedirs(out_dir, exist_ok=True)
    write_csv(records, os.path.join(out_dir, f"{name}.csv"))
    payload = {"config": config_dict, "records": [r.to_json() for r in records]}
    with open(os.path.join(out_dir, f"{name}.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o)}")


def write_table(path, header, rows):
    """Plain CSV writer for figure data."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])


def write_trajectory(traj, path):
    write_table(path, ("iter", "nmse_db", "mean_trace_qx", "seconds"), list(traj.rows()))


def sweep_phase_diagram(cfg, threads=1):
    """Terminal NMSE over the (rho, L) grid of ``cfg.sweep``.

    Returns ``(rhos, Ls, mean_db, stderr_db, diagnostics)`` where the
    matrices are indexed ``[i_rho, j_L]`` and ``diagnostics`` counts
    monotonicity violations beyond 2 stderr along each axis.
    """
    rhos = list(cfg.sweep.get("rho") or [cfg.system.prior.rho])
    Ls = list(cfg.sweep.get("L") or [cfg.system.L])
    est = cfg.estimators[0] if cfg.estimators else "ep"
    base = replace(cfg, estimators=(est,), se=False, replica=False, mi=False)
    mean = np.full((len(rhos), len(Ls)), np.nan)
    se = np.full_like(mean, np.nan)
    for i, rho in enumerate(rhos):
        for j, L in enumerate(Ls):
            point = {"rho": rho, "L": L}
            for k in ("snr_db", "bits"):
                if cfg.sweep.get(k):
                    point[k] = cfg.sweep[k][0]
            recs = aggregate({k: v[est] for k, v in run_trials(base, point, threads).items()}, cfg.digest, point, est)
            mean[i, j] = recs[-1].nmse_db
            se[i, j] = recs[-1].nmse_db_stderr
    tol = 2 * np.hypot(se[:, 1:], se[:, :-1])
    along_L = int(np.sum(mean[:, 1:] > mean[:, :-1] + tol))
    tol = 2 * np.hypot(se[1:, :], se[:-1, :])
    along_rho = int(np.sum(mean[1:, :] < mean[:-1, :] - tol))
    return rhos, Ls, mean, se, {"L_violations": along_L, "rho_violations": along_rho}
