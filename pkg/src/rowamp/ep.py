"""Expectation-propagation message passing for row-structured GLMs.

All per-measurement and per-row quantities are stored as stacked arrays:
vectors ``(L, M)`` / ``(N, M)`` and covariances ``(L, M, M)`` / ``(N, M, M)``.
"""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .model import UndefinedMetricError, nmse
from .numerics import SingularMatrixError, clip_psd, ensure_psd, hermitize, inv_h, matvec

log = logging.getLogger(__name__)


class IterationFailure(RuntimeError):
    def __init__(self, message, index=None, trajectory=None):
        super().__init__(message)
        self.index = index
        self.trajectory = trajectory


@dataclass
class SolverOptions:
    max_iters: int = 50
    damping: float = 0.7
    tol: float = 1e-8
    jitter: float = 1e-9
    diagonal: bool = False

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class EPState:
    t: int
    xhat: np.ndarray
    Qx: np.ndarray
    s: np.ndarray
    Qs: np.ndarray = None
    zext: np.ndarray = None
    Qz: np.ndarray = None
    r: np.ndarray = None
    Qr: np.ndarray = None
    n_qs_clipped: int = 0


@dataclass
class Trajectory:
    nmse_db: list = field(default_factory=list)
    mean_trace_qx: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    n_qs_clipped: list = field(default_factory=list)

    def __len__(self):
        return len(self.mean_trace_qx)

    def rows(self):
        for i in range(len(self)):
            nm = self.nmse_db[i] if self.nmse_db else float("nan")
            yield i + 1, nm, self.mean_trace_qx[i], self.seconds[i]


def diagonal_restriction(cov):
    """Zero the off-diagonal entries (keeps the diagonal, so PSD is preserved)."""
    cov = np.asarray(cov)
    out = np.zeros_like(cov)
    idx = np.arange(cov.shape[-1])
    out[..., idx, idx] = cov[..., idx, idx]
    return out


def ep_init(instance, prior):
    """x_n = 0, Q_n = Xi_x, s_l = 0."""
    N, M = instance.X.shape
    L = instance.Y.shape[0]
    Qx = np.broadcast_to(np.asarray(prior.covariance, dtype=complex), (N, M, M)).copy()
    return EPState(
        t=1,
        xhat=np.zeros((N, M), dtype=complex),
        Qx=Qx,
        s=np.zeros((L, M), dtype=complex),
    )


def ep_iteration(state, instance, prior, channel, options=None):
    """One sweep over the measurement side and the row side."""
    opts = options or SolverOptions()
    H = instance.H
    Y = instance.Y
    H2 = np.abs(H) ** 2
    jit = opts.jitter
    restrict = diagonal_restriction if opts.diagonal else (lambda A: A)

    # measurement side
    Qz = restrict(hermitize(np.einsum("ln,nij->lij", H2, state.Qx)))
    z = H @ state.xhat - matvec(Qz, state.s)
    try:
        Qz_inv = inv_h(Qz, jit, name="Q^(z)")
        zt, Qzt = channel.posterior_moments(Y, z, Qz, jitter=jit)
    except SingularMatrixError as err:
        raise IterationFailure(f"{err} at iteration {state.t}", index=_first_bad(Qz)) from None
    Qzt = restrict(ensure_psd(Qzt))
    Qs, clipped = clip_psd(Qz_inv @ (Qz - Qzt) @ Qz_inv)
    Qs = restrict(Qs)
    s_new = matvec(Qz_inv, zt - z)

    theta = opts.damping
    if state.t > 1:
        s_new = theta * s_new + (1 - theta) * state.s

    # row side
    prec = hermitize(np.einsum("ln,lij->nij", H2, Qs))
    try:
        Qr = restrict(inv_h(prec, jit, name="sum |h|^2 Q^(s)"))
        r = state.xhat + matvec(Qr, np.conj(H).T @ s_new)
        xhat, Qx = prior.posterior_moments(r, Qr, jitter=jit)
    except SingularMatrixError as err:
        raise IterationFailure(f"{err} at iteration {state.t}", index=_first_bad(prec)) from None
    Qx = restrict(ensure_psd(Qx))
    if state.t > 1:
        Qx = theta * Qx + (1 - theta) * state.Qx

    return EPState(
        t=state.t + 1,
        xhat=xhat,
        Qx=Qx,
        s=s_new,
        Qs=Qs,
        zext=z,
        Qz=Qz,
        r=r,
        Qr=Qr,
        n_qs_clipped=int(np.count_nonzero(clipped)),
    )


def _first_bad(A):
    bad = ~np.all(np.isfinite(A), axis=(-2, -1))
    if np.any(bad):
        return int(np.argmax(bad))
    lam = np.linalg.eigvalsh(hermitize(A))[..., 0]
    return int(np.argmin(lam))


def ep_run(instance, prior, channel, options=None, truth=None, callback=None):
    """Iterate until ``max_iters`` or the relative change of X-hat drops below ``tol``.

    ``truth`` (defaults to ``instance.X``) is only used for the NMSE
    diagnostic.  Returns ``(Xhat, Qx, trajectory)``.
    """
    opts = options or SolverOptions()
    if getattr(channel, "diagonal_only", False) and not opts.diagonal:
        opts = replace(opts, diagonal=True)
    truth = instance.X if truth is None else truth
    state = ep_init(instance, prior)
    traj = Trajectory()
    t0 = time.perf_counter()
    for _ in range(opts.max_iters):
        prev = state.xhat
        try:
            state = ep_iteration(state, instance, prior, channel, opts)
        except IterationFailure as err:
            err.trajectory = traj
            raise
        traj.mean_trace_qx.append(float(np.mean(np.real(np.trace(state.Qx, axis1=1, axis2=2)))) / state.Qx.shape[-1])
        traj.seconds.append(time.perf_counter() - t0)
        traj.n_qs_clipped.append(state.n_qs_clipped)
        if truth is not None:
            try:
                traj.nmse_db.append(nmse(truth, state.xhat).nmse_db)
            except UndefinedMetricError:
                traj.nmse_db.append(float("nan"))
        if callback is not None:
            callback(state)
        if state.n_qs_clipped:
            log.debug("iteration %d: clipped %d non-PSD Q^(s)", state.t - 1, state.n_qs_clipped)
        denom = np.linalg.norm(state.xhat)
        change = np.linalg.norm(state.xhat - prev)
        if denom > 0 and change / denom < opts.tol:
            break
        if denom == 0 and change == 0 and state.t > 2:
            break
    return state.xhat, state.Qx, traj


def diagonal_baseline(prior, channel):
    """Prior and channel seen by the diagonal (GAMP-like) baseline."""
    return prior.restricted(diagonal_restriction), channel.restricted(diagonal_restriction)


def ep_diagonal_run(instance, prior, channel, options=None):
    p, c = diagonal_baseline(prior, channel)
    opts = replace(options or SolverOptions(), diagonal=True)
    return ep_run(instance, p, c, opts)


__all__ = [
    "EPState",
    "IterationFailure",
    "SolverOptions",
    "Trajectory",
    "diagonal_baseline",
    "diagonal_restriction",
    "ep_diagonal_run",
    "ep_init",
    "ep_iteration",
    "ep_run",
]
