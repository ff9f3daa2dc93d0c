"""Large-system predictions: state evolution, replica fixed point, free energy
and mutual information.

State evolution and the replica fixed point iterate the same map.  Writing
E for the MMSE matrix (``A - B``) and B-tilde for the precision of the
equivalent single-vector channel x + N_c(0, B-tilde^-1):

    Bz       = E{z~ z~^H},   z | a ~ N_c(a, E / alpha),  a ~ N_c(0, B / alpha)
    B-tilde  = E^-1 (alpha^2 Bz - alpha B) E^-1
    E_next   = mmse of x ~ P_X observed through B-tilde^-1

For the AWGN channel the middle step collapses to
B-tilde^-1 = Sigma_w + E / alpha ("closed" mode).
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .channels import AwgnRowChannel
from .ep import diagonal_restriction
from .numerics import (
    SingularMatrixError,
    complex_normal,
    ensure_psd,
    hermitize,
    inv_h,
    logdet_h,
    sqrtm_psd,
)
from .priors import MCOptions, prior_mmse_mc, prior_sample

log = logging.getLogger(__name__)


class SEFailure(RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ReplicaNonConvergence(RuntimeError):
    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


class UnsupportedChannelError(NotImplementedError):
    pass


@dataclass
class SEState:
    Qx_bar: np.ndarray
    Qz_tilde_bar: np.ndarray = None
    Qr: np.ndarray = None

    @property
    def mse(self):
        return float(np.real(np.trace(self.Qx_bar))) / self.Qx_bar.shape[-1]


@dataclass
class ReplicaSolution:
    A: np.ndarray
    B: np.ndarray
    B_tilde: np.ndarray
    Bz: np.ndarray
    mmse: np.ndarray
    free_energy: float = float("nan")
    free_energy_stderr: float = float("nan")
    mutual_info: float = None
    iterations: int = 0
    residual: float = float("nan")
    residuals: list = field(default_factory=list)
    start: str = ""

    @property
    def mse(self):
        return float(np.real(np.trace(self.mmse))) / self.mmse.shape[-1]


def _use_closed(channel, mode):
    if mode == "closed":
        if not isinstance(channel, AwgnRowChannel):
            raise UnsupportedChannelError("closed reduction only exists for the AWGN channel")
        return True
    if mode == "mc":
        return False
    return isinstance(channel, AwgnRowChannel)


def _restrict_for(channel):
    return diagonal_restriction if getattr(channel, "diagonal_only", False) else (lambda A: A)


# ------------------------------------------------------------ building blocks


def prior_mmse(Qr, prior, mc=None):
    """MMSE matrix of x ~ P_X seen through N_c(x, Qr).

    Uses the prior's closed form when one exists and ``mc`` is None,
    otherwise Monte Carlo with common random numbers from ``mc``.
    """
    if mc is None:
        closed = prior.mmse_closed(Qr)
        if closed is not None:
            return closed
        mc = MCOptions()
    return prior_mmse_mc(Qr, prior, mc.n_prior, mc.rng(1), mc.antithetic)


def single_vector_mmse(B_tilde, prior, mc=None):
    """(MMSE matrix, MSE) of the equivalent channel with noise precision B_tilde."""
    noise = inv_h(B_tilde, name="B_tilde")
    E = prior_mmse(noise, prior, mc)
    return E, float(np.real(np.trace(E))) / E.shape[-1]


def prior_b_mc(B_tilde, prior, n_samples=20_000, rng=None):
    """B = E{xhat xhat^H} written as Xi_x minus the Monte-Carlo MMSE."""
    if prior.rho == 0.0:
        return np.zeros_like(prior.covariance)
    noise = inv_h(B_tilde, name="B_tilde")
    return hermitize(prior.covariance - prior_mmse_mc(noise, prior, n_samples, rng))


def channel_bz_mc(B, A, alpha, channel, n_samples=40_000, rng=None):
    """Monte-Carlo E{z~ z~^H} for z ~ N_c(a, (A-B)/alpha), a ~ N_c(0, B/alpha).

    Here z~ is the channel posterior mean given y ~ P(y | z) and the
    Gaussian prior N_c(a, (A-B)/alpha).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    M = A.shape[-1]
    Qz = hermitize(A - B) / alpha
    a = complex_normal(rng, (n_samples, M)) @ sqrtm_psd(B / alpha).T
    z = a + complex_normal(rng, (n_samples, M)) @ sqrtm_psd(Qz).T
    y, _ = channel.sample(z, rng)
    zt, _ = channel.posterior_moments(y, a, Qz)
    return hermitize(np.einsum("ki,kj->ij", zt, np.conj(zt)) / n_samples)


def channel_bz_awgn(B, A, alpha, channel):
    """Closed form of :func:`channel_bz_mc` for AWGN: A/alpha - Q~z."""
    Qz = hermitize(np.asarray(A) - np.asarray(B)) / alpha
    Qt = Qz - Qz @ inv_h(Qz + channel.sigma_w, name="Qz + Sigma_w") @ Qz
    return hermitize(np.asarray(A) / alpha - Qt)


def precision_from_bz(E, B, Bz, alpha):
    """B-tilde = E^-1 (alpha^2 Bz - alpha B) E^-1, PSD-repaired."""
    Ei = inv_h(E, name="A - B")
    Bt = hermitize(Ei @ (alpha ** 2 * Bz - alpha * B) @ Ei)
    return ensure_psd(Bt, 1e-9)


def _noise_and_precision(E, alpha, prior, channel, mc, closed):
    """Map an MMSE matrix to (noise covariance, B_tilde, Bz) of the next step."""
    A = prior.covariance
    B = hermitize(A - E)
    if closed:
        noise = hermitize(channel.sigma_w + E / alpha)
        Bt = inv_h(noise, name="Sigma_w + E/alpha")
        Bz = channel_bz_awgn(B, A, alpha, channel)
        return noise, Bt, Bz
    mc = mc or MCOptions()
    Bz = channel_bz_mc(B, A, alpha, channel, mc.n_channel, mc.rng(2))
    Bt = precision_from_bz(E, B, Bz, alpha)
    return inv_h(Bt, name="B_tilde"), Bt, Bz


# ------------------------------------------------------------ state evolution


def se_init(prior):
    return SEState(Qx_bar=hermitize(np.array(prior.covariance, dtype=complex)))


def se_step(state, alpha, prior, channel, mc=None, mode="auto"):
    """One state-evolution update Q-bar_x(t) -> Q-bar_x(t+1)."""
    closed = _use_closed(channel, mode)
    restrict = _restrict_for(channel)
    E = restrict(state.Qx_bar)
    if np.allclose(E, 0.0, atol=1e-300):
        M = E.shape[-1]
        zero = np.zeros((M, M), dtype=complex)
        return SEState(Qx_bar=zero, Qz_tilde_bar=zero, Qr=zero)
    try:
        noise, _, Bz = _noise_and_precision(E, alpha, prior, channel, mc, closed)
        noise = restrict(noise)
        Qx_next = restrict(prior_mmse(noise, prior, mc))
    except SingularMatrixError as err:
        raise SEFailure(str(err), state) from None
    Qzt = hermitize(prior.covariance / alpha - Bz)
    return SEState(Qx_bar=Qx_next, Qz_tilde_bar=Qzt, Qr=noise)


def state_evolution(alpha, prior, channel, n_iters, mc=None, mode="auto", tol=None):
    """SE trajectory; element 0 is the initial state Q-bar_x = Xi_x."""
    states = [se_init(prior)]
    for _ in range(n_iters):
        nxt = se_step(states[-1], alpha, prior, channel, mc, mode)
        states.append(nxt)
        if tol is not None:
            prev = states[-2].Qx_bar
            scale = max(np.linalg.norm(prev), 1e-300)
            if np.linalg.norm(nxt.Qx_bar - prev) / scale < tol:
                break
    return states


def se_nmse_db(states, prior):
    ref = float(np.real(np.trace(prior.covariance)))
    return [10.0 * np.log10(max(float(np.real(np.trace(s.Qx_bar))) / ref, 1e-30)) for s in states]


# ------------------------------------------------------------ replica


@dataclass
class ReplicaOptions:
    damping: float = 0.5
    tol: float = 1e-8
    max_iters: int = 1000
    mc: MCOptions = None
    mode: str = "auto"
    starts: tuple = ("uninformed", "informed")
    distinct_tol: float = 1e-6


def replica_map(E, alpha, prior, channel, mc=None, closed=True):
    """One undamped application of the fixed-point map; returns (E_next, B_tilde, Bz)."""
    restrict = _restrict_for(channel)
    E = restrict(E)
    noise, Bt, Bz = _noise_and_precision(E, alpha, prior, channel, mc, closed)
    E_next = restrict(prior_mmse(restrict(noise), prior, mc))
    return E_next, Bt, Bz


def _iterate_replica(E, alpha, prior, channel, opts, closed):
    A = prior.covariance
    scale = max(np.linalg.norm(A), 1e-300)
    residuals = []
    for k in range(1, opts.max_iters + 1):
        E_next, Bt, Bz = replica_map(E, alpha, prior, channel, opts.mc, closed)
        res = np.linalg.norm(E_next - E) / max(np.linalg.norm(E), 1e-12 * scale)
        residuals.append(float(res))
        if res < opts.tol or np.linalg.norm(E) == 0.0:
            return E, E_next, Bt, Bz, k, residuals, True
        E = hermitize(opts.damping * E_next + (1 - opts.damping) * E)
    return E, E_next, Bt, Bz, opts.max_iters, residuals, False


def replica_fixed_point(alpha, prior, channel, options=None):
    """Solve the coupled fixed-point equations from several starts and keep
    the converged branch with the smallest free energy."""
    opts = options or ReplicaOptions()
    closed = _use_closed(channel, opts.mode)
    A = hermitize(np.array(prior.covariance, dtype=complex))
    inits = {
        "uninformed": A.copy(),  # B = 0
        "informed": 1e-3 * A,  # B = (1 - 1e-3) Xi_x
    }
    found = []
    history = {}
    for name in opts.starts:
        try:
            E, E_next, Bt, Bz, k, res, ok = _iterate_replica(inits[name], alpha, prior, channel, opts, closed)
        except SingularMatrixError as err:
            log.warning("replica start %s failed: %s", name, err)
            history[name] = [float("inf")]
            continue
        history[name] = res
        if not ok:
            continue
        sol = ReplicaSolution(
            A=A,
            B=hermitize(A - E_next),
            B_tilde=Bt,
            Bz=Bz,
            mmse=E_next,
            iterations=k,
            residual=res[-1],
            residuals=res,
            start=name,
        )
        if any(np.linalg.norm(s.mmse - sol.mmse) <= opts.distinct_tol * max(np.linalg.norm(A), 1e-300) for s in found):
            continue
        found.append(sol)
    if not found:
        raise ReplicaNonConvergence("no start converged", history)
    for sol in found:
        sol.free_energy, sol.free_energy_stderr = free_energy(sol, alpha, prior, channel, opts.mc)
    return select_branch(found)


def select_branch(solutions, offset=0.0):
    """Branch with minimal free energy (ties keep the first)."""
    return min(solutions, key=lambda s: s.free_energy + offset)


def fixed_point_residual(solution, alpha, channel):
    """||B~^-1 - Sigma_w - MMSE/alpha||_F / ||B~^-1||_F for the AWGN channel."""
    Bt_inv = inv_h(solution.B_tilde, name="B_tilde")
    diff = Bt_inv - channel.sigma_w - solution.mmse / alpha
    return float(np.linalg.norm(diff) / np.linalg.norm(Bt_inv))


# ------------------------------------------------------------ free energy / MI


def expected_log_evidence(B_tilde, prior, mc=None):
    """E_y{log P(y)} for y = x + N_c(0, B_tilde^-1); returns (value, stderr)."""
    noise = inv_h(B_tilde, name="B_tilde")
    M = prior.M
    if prior.rho == 1.0 and prior.mmse_closed(noise) is not None:
        S = hermitize(prior.covariance + noise)
        return float(-M * np.log(np.pi) - logdet_h(S) - M), 0.0
    mc = mc or MCOptions()
    rng = mc.rng(3)
    n = mc.n_prior
    x = prior_sample(prior, rng, n)
    y = x + complex_normal(rng, (n, M)) @ sqrtm_psd(noise).T
    vals = prior.log_evidence(y, noise)
    return float(np.mean(vals)), float(np.std(vals) / np.sqrt(n))


def _output_entropy_term(solution, alpha, channel, mc):
    """E_zeta{ int v log v dy } with a = B^(1/2) zeta / sqrt(alpha), Qz = (A-B)/alpha."""
    Qz = solution.mmse / alpha
    M = Qz.shape[-1]
    if isinstance(channel, AwgnRowChannel):
        return float(channel.neg_output_entropy(np.zeros(M), Qz)), 0.0
    mc = mc or MCOptions()
    rng = mc.rng(4)
    n = mc.n_channel
    a = complex_normal(rng, (n, M)) @ sqrtm_psd(solution.B / alpha).T
    vals = channel.neg_output_entropy(a, diagonal_restriction(Qz))
    return float(np.mean(vals)), float(np.std(vals) / np.sqrt(n))


def free_energy(solution, alpha, prior, channel, mc=None):
    """Replica free energy per row; returns (F, stderr)."""
    Bt = solution.B_tilde
    M = Bt.shape[-1]
    elogp, se1 = expected_log_evidence(Bt, prior, mc)
    vlogv, se2 = _output_entropy_term(solution, alpha, channel, mc)
    F = -(elogp + M * np.log(np.pi) - logdet_h(Bt) + M)
    F -= float(np.real(np.trace(solution.mmse @ Bt)))
    F -= alpha * vlogv
    return float(F), float(np.hypot(se1, alpha * se2))


def single_vector_mi(B_tilde, prior, mc=None):
    """I(x; y) of the equivalent channel in nats; returns (value, stderr)."""
    M = B_tilde.shape[-1]
    elogp, se = expected_log_evidence(B_tilde, prior, mc)
    return float(-elogp - M * np.log(np.pi) + logdet_h(B_tilde) - M), se


def mutual_information(solution, L, N, prior, channel, mc=None, route="awgn"):
    """Total I(X; Y | H) in nats predicted from a replica solution.

    ``route="awgn"`` uses the Gaussian-channel degeneration; ``route="free-energy"``
    uses N F - E{H(Y | H, X)}.  Both need the conditional output entropy, so
    only the AWGN channel is supported.
    """
    if not isinstance(channel, AwgnRowChannel):
        raise UnsupportedChannelError("mutual information needs H(Y|H,X); only AWGN is implemented")
    alpha = L / N
    M = solution.B_tilde.shape[-1]
    if route == "awgn":
        ixy, se = single_vector_mi(solution.B_tilde, prior, mc)
        BS = solution.B_tilde @ channel.sigma_w
        loss = float(np.real(np.trace(BS))) - float(np.real(logdet_h(BS))) - M
        return N * ixy + L * loss, N * se
    if route == "free-energy":
        F, se = free_energy(solution, alpha, prior, channel, mc)
        return N * F - L * channel.conditional_entropy(), N * se
    raise ValueError(f"unknown route {route!r}")


def exact_gaussian_mi(H, sigma_x, sigma_w):
    """log det(Sw~ + H~ Sx~ H~^H) - log det(Sw~) with row-stacked Kronecker lifts."""
    L, N = H.shape
    M = sigma_x.shape[-1]
    Ht = np.kron(H, np.eye(M))
    Sx = np.kron(np.eye(N), sigma_x)
    Sw = np.kron(np.eye(L), sigma_w)
    return float(np.real(logdet_h(hermitize(Sw + Ht @ Sx @ Ht.conj().T)) - logdet_h(Sw)))


def solution_record(solution, extra=None):
    """JSON-ready dict of a replica solution (matrices row-major as [re, im] pairs)."""

    def mat(A):
        return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(A)]

    rec = {
        "A": mat(solution.A),
        "B": mat(solution.B),
        "B_tilde": mat(solution.B_tilde),
        "Bz": mat(solution.Bz),
        "mmse": mat(solution.mmse),
        "mse": solution.mse,
        "free_energy": solution.free_energy,
        "free_energy_stderr": solution.free_energy_stderr,
        "mutual_info": solution.mutual_info,
        "iterations": solution.iterations,
        "residual": solution.residual,
        "start": solution.start,
    }
    if extra:
        rec.update(extra)
    return rec


__all__ = [
    "ReplicaNonConvergence",
    "ReplicaOptions",
    "ReplicaSolution",
    "SEFailure",
    "SEState",
    "UnsupportedChannelError",
    "channel_bz_awgn",
    "channel_bz_mc",
    "fixed_point_residual",
    "exact_gaussian_mi",
    "expected_log_evidence",
    "free_energy",
    "mutual_information",
    "precision_from_bz",
    "prior_b_mc",
    "prior_mmse",
    "replica_fixed_point",
    "replica_map",
    "se_init",
    "se_nmse_db",
    "se_step",
    "select_branch",
    "single_vector_mi",
    "single_vector_mmse",
    "solution_record",
    "state_evolution",
]
