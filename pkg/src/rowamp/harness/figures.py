"""Figure-data reproductions at desk scale (``full=True`` for the original sizes).

Each ``figN`` writes CSV tables plus a small gnuplot script describing the
intended layout, and returns the list of written paths.  Nothing is rendered.
"""

import json
import os

import numpy as np

from ..analysis import ReplicaOptions, exact_gaussian_mi, mutual_information, replica_fixed_point
from ..channels import AwgnRowChannel
from ..model import make_covariance, noise_trace_for_snr
from ..numerics import complex_normal
from ..priors import GaussianPrior
from .config import parse_config
from .experiments import run_experiment, sweep_phase_diagram, write_table

DEFAULT_TRIALS = {"fig4": 20, "fig5": 100, "fig6": 5, "fig7": 20, "fig8": 20}


def _gnuplot(path, data, xlabel, ylabel, using, title=""):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("set datafile separator ','\n")
        fh.write(f"set xlabel '{xlabel}'\nset ylabel '{ylabel}'\n")
        if title:
            fh.write(f"set title '{title}'\n")
        fh.write(f"plot '{data}' {using}\n")
    return path


def _terminal(records):
    """Last-iteration record of every (axes, estimator) group."""
    last = {}
    for r in records:
        key = (tuple(sorted(r.axes.items())), r.estimator)
        if key not in last or r.iteration > last[key].iteration:
            last[key] = r
    return [last[k] for k in sorted(last, key=lambda k: (k[0], k[1]))]


def fig4(out, trials=None, seed=0, threads=1, mc_samples=20_000, full=False):
    """Per-iteration NMSE of full vs diagonal-restricted EP on correlated covariances."""
    L, N, M = (256, 512, 10) if full else (128, 256, 8)
    cfg = parse_config(
        {
            "name": "fig4",
            "system": {"L": L, "N": N, "M": M},
            "prior": {"type": "bernoulli-gaussian", "rho": 0.1, "covariance": {"kind": "uniform-outer"}},
            "channel": {"type": "awgn", "snr_db": 10, "covariance": {"kind": "uniform-outer"}},
            "solver": {"max_iters": 50, "tol": 1e-6},
            "estimators": ["ep", "ep-diagonal"],
            "sweep": {"rho": [0.1, 0.15, 0.2]},
            "trials": trials or DEFAULT_TRIALS["fig4"],
            "seed": seed,
            "resample_covariance": True,
        },
        output=out,
    )
    run_experiment(cfg, threads)
    gp = _gnuplot(
        os.path.join(out, "fig4.gp"), "fig4.csv", "iteration", "NMSE (dB)", "using 8:9 every ::1 with linespoints"
    )
    return [os.path.join(out, "fig4.csv"), os.path.join(out, "fig4.json"), gp]


def fig5(out, trials=None, seed=0, threads=1, mc_samples=20_000, full=False):
    """Empirical per-iteration NMSE of undamped EP against its state evolution."""
    L, N, M = (256, 512, 10) if full else (256, 512, 4)
    snrs = [5.0, 10.0, 15.0]
    cfg = parse_config(
        {
            "name": "fig5_all",
            "system": {"L": L, "N": N, "M": M},
            "prior": {"type": "bernoulli-gaussian", "rho": 0.1, "covariance": {"kind": "uniform-outer-plus-2I"}},
            "channel": {"type": "awgn", "snr_db": 10, "covariance": {"kind": "uniform-outer-plus-2I"}},
            "solver": {"max_iters": 20, "damping": 1.0, "tol": 0.0},
            "estimators": ["ep"],
            "analysis": {"se": True},
            "sweep": {"snr_db": snrs},
            "trials": trials or DEFAULT_TRIALS["fig5"],
            "seed": seed,
            "mc_samples": mc_samples,
        },
        output=out,
    )
    records = run_experiment(cfg, threads, write=False)
    ep_rows = [(r.axes["snr_db"], r.iteration, r.nmse_db, r.nmse_db_stderr, r.trials) for r in records if r.estimator == "ep"]
    se_rows = [(r.axes["snr_db"], r.iteration, r.nmse_db) for r in records if r.estimator == "se"]
    p_ep = os.path.join(out, "fig5_ep.csv")
    p_se = os.path.join(out, "fig5_se.csv")
    os.makedirs(out, exist_ok=True)
    write_table(p_ep, ("snr_db", "iter", "nmse_db", "nmse_db_stderr", "trials"), ep_rows)
    write_table(p_se, ("snr_db", "iter", "nmse_db"), se_rows)
    with open(os.path.join(out, "fig5.gp"), "w", encoding="utf-8") as fh:
        fh.write("set datafile separator ','\nset xlabel 'iteration'\nset ylabel 'NMSE (dB)'\n")
        fh.write("plot 'fig5_ep.csv' using 2:3 every ::1 with points title 'EP', ")
        fh.write("'fig5_se.csv' using 2:3 every ::1 with lines title 'SE'\n")
    return [p_ep, p_se, os.path.join(out, "fig5.gp")]


def fig6(out, trials=None, seed=0, threads=1, mc_samples=20_000, full=False):
    """Terminal NMSE over a grid of sparsity ratios and measurement counts."""
    if full:
        N, M = 512, 20
        rhos = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4]
        Ls = [128, 192, 256, 320, 384, 448, 512]
    else:
        N, M = 128, 4
        rhos = [0.05, 0.1, 0.2, 0.3]
        Ls = [32, 64, 96, 128]
    cfg = parse_config(
        {
            "name": "fig6",
            "system": {"L": Ls[-1], "N": N, "M": M},
            "prior": {"type": "bernoulli-gaussian", "rho": rhos[0], "covariance": {"kind": "uniform-outer"}},
            "channel": {"type": "awgn", "snr_db": 20, "covariance": {"kind": "uniform-outer"}},
            "solver": {"max_iters": 50, "tol": 1e-6},
            "estimators": ["ep"],
            "sweep": {"rho": rhos, "L": Ls},
            "trials": trials or DEFAULT_TRIALS["fig6"],
            "seed": seed,
        },
        output=out,
    )
    rhos, Ls, mean, se, diag = sweep_phase_diagram(cfg, threads)
    os.makedirs(out, exist_ok=True)
    rows = [(float(r), int(L), float(mean[i, j]), float(se[i, j])) for i, r in enumerate(rhos) for j, L in enumerate(Ls)]
    p = os.path.join(out, "fig6.csv")
    write_table(p, ("rho", "L", "nmse_db", "nmse_db_stderr"), rows)
    pd = os.path.join(out, "fig6_diagnostics.json")
    with open(pd, "w", encoding="utf-8") as fh:
        json.dump(diag, fh, indent=1)
    with open(os.path.join(out, "fig6.gp"), "w", encoding="utf-8") as fh:
        fh.write("set datafile separator ','\nset xlabel 'rho'\nset ylabel 'L'\nset view map\n")
        fh.write("splot 'fig6.csv' using 1:2:3 every ::1 with points palette pointtype 5\n")
    return [p, pd, os.path.join(out, "fig6.gp")]


def fig7_point(snr_db, L, N, M=2, trials=20, seed=0):
    """Replica MI and the exact log-det MI averaged over ``trials`` draws of H."""
    alpha = L / N
    S = make_covariance("ones-plus-I", M, 1.0)
    Sw = make_covariance("ones-plus-I", M, noise_trace_for_snr(snr_db, 1.0, alpha))
    prior, ch = GaussianPrior(S), AwgnRowChannel(Sw)
    sol = replica_fixed_point(alpha, prior, ch, ReplicaOptions(tol=1e-12))
    mi, _ = mutual_information(sol, L, N, prior, ch)
    rng = np.random.default_rng(seed)
    exact = [exact_gaussian_mi(complex_normal(rng, (L, N)) / np.sqrt(L), S, Sw) for _ in range(trials)]
    return mi, float(np.mean(exact)), float(np.std(exact, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0


def fig7(out, trials=None, seed=0, threads=1, mc_samples=20_000, full=False):
    """Mutual information of correlated Gaussian input: replica route vs exact log-det."""
    sizes = [64, 128, 256] if full else [32, 64]
    snrs = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
    n = trials or DEFAULT_TRIALS["fig7"]
    rows = []
    for N in sizes:
        for snr in snrs:
            mi, ex, se = fig7_point(snr, N, N, 2, n, seed)
            rows.append((N, snr, mi, ex, se))
    os.makedirs(out, exist_ok=True)
    p = os.path.join(out, "fig7.csv")
    write_table(p, ("N", "snr_db", "mi_replica", "mi_exact", "mi_exact_stderr"), rows)
    gp = _gnuplot(os.path.join(out, "fig7.gp"), "fig7.csv", "SNR (dB)", "I(X;Y) (nats)", "using 2:3 every ::1 with lines, 'fig7.csv' using 2:4 every ::1 with points")
    return [p, gp]


def fig8(out, trials=None, seed=0, threads=1, mc_samples=20_000, full=False):
    """Terminal NMSE vs SNR for several quantizer resolutions, EP and least squares."""
    L, N, M = (1024, 200, 10) if full else (512, 100, 4)
    cfg = parse_config(
        {
            "name": "fig8_all",
            "system": {"L": L, "N": N, "M": M},
            "prior": {"type": "bernoulli-gaussian", "rho": 0.05, "covariance": {"kind": "scaled-identity"}},
            "channel": {"type": "quantized", "bits": 3, "snr_db": 10},
            "solver": {"max_iters": 50, "tol": 1e-7},
            "estimators": ["ep", "ls"],
            "sweep": {"snr_db": [0.0, 5.0, 10.0, 15.0, 20.0], "bits": [1, 2, 3, 12]},
            "trials": trials or DEFAULT_TRIALS["fig8"],
            "seed": seed,
        },
        output=out,
    )
    records = _terminal(run_experiment(cfg, threads, write=False))
    rows = [(r.axes["snr_db"], r.axes["bits"], r.estimator, r.extra.get("solver_mode", ""), r.nmse_db, r.nmse_db_stderr, r.trials) for r in records]
    os.makedirs(out, exist_ok=True)
    p = os.path.join(out, "fig8.csv")
    write_table(p, ("snr_db", "bits", "estimator", "solver_mode", "nmse_db", "nmse_db_stderr", "trials"), rows)
    gp = _gnuplot(os.path.join(out, "fig8.gp"), "fig8.csv", "SNR (dB)", "NMSE (dB)", "using 1:5 every ::1 with points")
    return [p, gp]


FIGURES = {"fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7, "fig8": fig8}
