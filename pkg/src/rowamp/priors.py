"""Row priors and their denoisers.

A denoiser maps a Gaussian pseudo-observation ``N_c(x | r, Qr)`` of a row to
the posterior mean and covariance of that row.  Both priors below expose the
same ``posterior_moments(r, Qr)`` method so the solver and the state-evolution
code never need to know which prior they are handling.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    complex_normal,
    herm,
    hermitize,
    inv_h,
    log_gauss,
    logdet_h,
    matvec,
    outer,
    quad_form,
    sqrtm_psd,
)

# chunk size for Monte-Carlo sweeps; bounds memory at large M
_CHUNK = 4096


@dataclass
class BernoulliGaussianPrior:
    """Row-sparse prior rho * N_c(0, sigma_x) + (1 - rho) * delta(x)."""

    rho: float
    sigma_x: np.ndarray

    def __post_init__(self):
        self.sigma_x = hermitize(np.asarray(self.sigma_x, dtype=complex))
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")

    @property
    def M(self):
        return self.sigma_x.shape[-1]

    @property
    def covariance(self):
        """Second moment of a row, Xi_x = rho * Sigma_x."""
        return self.rho * self.sigma_x

    def posterior_moments(self, r, Qr, jitter=1e-9):
        xhat, Qx, _ = bg_posterior_moments(r, Qr, self, jitter=jitter)
        return xhat, Qx

    def sample(self, rng, n=None):
        return prior_sample(self, rng, n)

    def log_evidence(self, y, Q):
        """log of int P_X(x) N_c(y | x, Q) dx."""
        log_on = np.log(self.rho) + log_gauss(y, 0.0, self.sigma_x + Q) if self.rho > 0 else -np.inf
        log_off = np.log1p(-self.rho) + log_gauss(y, 0.0, Q) if self.rho < 1 else -np.inf
        return np.logaddexp(log_on, log_off)

    def mmse_closed(self, Qr):
        return None

    def restricted(self, restrict):
        return BernoulliGaussianPrior(self.rho, restrict(self.sigma_x))


@dataclass
class GaussianPrior:
    """Zero-mean Gaussian row prior N_c(0, sigma_x)."""

    sigma_x: np.ndarray
    rho: float = field(default=1.0, init=False)

    def __post_init__(self):
        self.sigma_x = hermitize(np.asarray(self.sigma_x, dtype=complex))

    @property
    def M(self):
        return self.sigma_x.shape[-1]

    @property
    def covariance(self):
        return self.sigma_x

    def posterior_moments(self, r, Qr, jitter=1e-9):
        return gaussian_posterior_moments(r, Qr, self, jitter=jitter)

    def sample(self, rng, n=None):
        return prior_sample(self, rng, n)

    def log_evidence(self, y, Q):
        return log_gauss(y, 0.0, self.sigma_x + Q)

    def mmse_closed(self, Qr):
        """(Sigma_x^-1 + Qr^-1)^-1, written to stay finite for singular Sigma_x."""
        S = self.sigma_x
        return hermitize(S - S @ inv_h(S + Qr, name="Sigma_x + Qr") @ S)

    def restricted(self, restrict):
        return GaussianPrior(restrict(self.sigma_x))


def bg_posterior_moments(r, Qr, prior, jitter=1e-9):
    """Posterior moments of a Bernoulli-Gaussian row seen through N_c(x | r, Qr).

    Returns ``(xhat, Qx, activity)`` where ``activity`` is the posterior
    probability that the row is non-zero.  Arrays may carry leading batch
    axes; ``Qr`` broadcasts against ``r``.
    """
    r = np.asarray(r, dtype=complex)
    Qr = hermitize(np.asarray(Qr, dtype=complex))
    M = r.shape[-1]
    batch = np.broadcast_shapes(r.shape[:-1], Qr.shape[:-2])
    if prior.rho == 0.0:
        return (
            np.zeros(batch + (M,), dtype=complex),
            np.zeros(batch + (M, M), dtype=complex),
            np.zeros(batch),
        )

    Sx = prior.sigma_x
    Qr_inv = inv_h(Qr, jitter, name="Qr")
    # Gamma = (Qr^-1 + Sx^-1)^-1 = Sx - Sx (Sx + Qr)^-1 Sx stays defined for singular Sx
    S_on = Sx + Qr
    S_on_inv = inv_h(S_on, jitter, name="Sigma_x + Qr")
    Gamma = hermitize(Sx - Sx @ S_on_inv @ Sx)
    p = matvec(Gamma @ Qr_inv, r)

    if prior.rho == 1.0:
        activity = np.ones(batch)
    else:
        log_on = np.log(prior.rho) - logdet_h(S_on) - quad_form(r, S_on_inv)
        log_off = np.log1p(-prior.rho) - logdet_h(Qr) - quad_form(r, Qr_inv)
        activity = np.exp(log_on - np.logaddexp(log_on, log_off))
        activity = np.broadcast_to(activity, batch)

    C = activity[..., None]
    xhat = C * p
    Cm = activity[..., None, None]
    Qx = Cm * Gamma + (Cm * (1.0 - Cm)) * outer(p)
    return xhat, _psd_floor(Qx), activity


def _psd_floor(Q):
    # C(Gamma + pp^H) - C^2 pp^H is PSD analytically; only round-off can break it
    Q = hermitize(Q)
    lam, V = np.linalg.eigh(Q)
    if np.all(lam[..., 0] >= 0):
        return Q
    lam = np.maximum(lam, 0.0)
    return hermitize((V * lam[..., None, :]) @ herm(V))


def gaussian_posterior_moments(r, Qr, prior, jitter=1e-9):
    """Posterior of x ~ N_c(0, Sigma_x) given N_c(x | r, Qr)."""
    r = np.asarray(r, dtype=complex)
    Qr = hermitize(np.asarray(Qr, dtype=complex))
    Sx = prior.sigma_x
    S_inv = inv_h(Sx + Qr, jitter, name="Sigma_x + Qr")
    Qx = hermitize(Sx - Sx @ S_inv @ Sx)
    # Qx Qr^-1 = Sx (Sx + Qr)^-1
    xhat = matvec(Sx @ S_inv, r)
    Qx = np.broadcast_to(Qx, xhat.shape + (xhat.shape[-1],)).copy()
    return xhat, Qx


def prior_sample(prior, rng, n=None):
    """Draw ``n`` rows (or a single row when ``n`` is None) from the prior."""
    shape = (1,) if n is None else (n,)
    M = prior.M
    g = complex_normal(rng, shape + (M,))
    x = g @ sqrtm_psd(prior.sigma_x).T
    if prior.rho < 1.0:
        active = rng.random(shape) < prior.rho
        x = x * active[:, None]
    return x[0] if n is None else x


@dataclass
class MCOptions:
    """Monte-Carlo budget and seed.

    A fixed seed gives common random numbers: every call with the same
    options draws identical samples, so iterated maps are deterministic.
    """

    n_prior: int = 20_000
    n_channel: int = 40_000
    seed: int = 0
    antithetic: bool = True

    def rng(self, stream=0):
        return np.random.default_rng([self.seed, stream])


def _single_vector_draws(prior, Qr, n, rng, antithetic):
    """Samples (x, r) of the channel r = x + n, n ~ N_c(0, Qr)."""
    M = prior.M
    if antithetic:
        half = (n + 1) // 2
        x = prior_sample(prior, rng, half)
        g = complex_normal(rng, (half, M))
        x = np.concatenate([x, x])[:n]
        g = np.concatenate([g, -g])[:n]
    else:
        x = prior_sample(prior, rng, n)
        g = complex_normal(rng, (n, M))
    noise = g @ sqrtm_psd(Qr).T
    return x, x + noise


def prior_mmse_mc(Qr, prior, n_samples=20_000, rng=None, antithetic=True):
    """Monte-Carlo MMSE matrix of the channel r = x + n, n ~ N_c(0, Qr).

    Averages the posterior covariance over draws of r (a Rao-Blackwellized
    estimate of E{(x - xhat)(x - xhat)^H}).  ``rho = 0`` returns zeros
    without sampling.
    """
    Qr = hermitize(np.asarray(Qr, dtype=complex))
    M = prior.M
    if prior.rho == 0.0:
        return np.zeros((M, M), dtype=complex)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    _, r = _single_vector_draws(prior, Qr, n_samples, rng, antithetic)
    acc = np.zeros((M, M), dtype=complex)
    for start in range(0, n_samples, _CHUNK):
        _, Qx = prior.posterior_moments(r[start:start + _CHUNK], Qr)
        acc += Qx.sum(axis=0)
    return _psd_floor(acc / n_samples)


def prior_mmse_mc_stats(Qr, prior, n_samples=20_000, rng=None, antithetic=False):
    """Error-based MMSE estimate with a per-entry standard error.

    Uses the empirical error outer products (x - xhat)(x - xhat)^H; intended
    for tests that need an honest Monte-Carlo error bar.
    """
    Qr = hermitize(np.asarray(Qr, dtype=complex))
    rng = np.random.default_rng(0) if rng is None else rng
    x, r = _single_vector_draws(prior, Qr, n_samples, rng, antithetic)
    xhat, _ = prior.posterior_moments(r, Qr)
    e = outer(x - xhat)
    return e.mean(axis=0), e.std(axis=0) / np.sqrt(n_samples)


def prior_second_moment_mc(Qr, prior, n_samples=20_000, rng=None, antithetic=True):
    """Monte-Carlo E{xhat xhat^H} for the channel r = x + n, n ~ N_c(0, Qr)."""
    Qr = hermitize(np.asarray(Qr, dtype=complex))
    M = prior.M
    if prior.rho == 0.0:
        return np.zeros((M, M), dtype=complex)
    rng = np.random.default_rng(0) if rng is None else rng
    _, r = _single_vector_draws(prior, Qr, n_samples, rng, antithetic)
    acc = np.zeros((M, M), dtype=complex)
    for start in range(0, n_samples, _CHUNK):
        xhat, _ = prior.posterior_moments(r[start:start + _CHUNK], Qr)
        acc += np.einsum("ki,kj->ij", xhat, np.conj(xhat))
    return hermitize(acc / n_samples)
