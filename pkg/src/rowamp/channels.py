"""Row-wise output channels y = f(z).

Each channel exposes
  * ``sample(Z, rng)`` returning ``(Y, W)``,
  * ``posterior_moments(Y, z0, Qz)`` giving the mean and covariance of
    ``z`` under ``P(y | z) N_c(z | z0, Qz)``,
  * ``neg_output_entropy(a, Qz)``: the integral of ``v log v`` over ``y``
    where ``v(y) = int P(y | z) N_c(z | a, Qz) dz``,
all batched over leading axes.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from .numerics import (
    SingularMatrixError,
    complex_normal,
    hermitize,
    inv_h,
    logdet_h,
    matvec,
    sqrtm_psd,
)

LOG_TINY = np.log(1e-300)


@dataclass
class AwgnRowChannel:
    """y = z + w with w ~ N_c(0, sigma_w)."""

    sigma_w: np.ndarray

    def __post_init__(self):
        self.sigma_w = hermitize(np.asarray(self.sigma_w, dtype=complex))

    diagonal_only = False

    @property
    def M(self):
        return self.sigma_w.shape[-1]

    def sample(self, Z, rng):
        Z = np.asarray(Z, dtype=complex)
        W = complex_normal(rng, Z.shape) @ sqrtm_psd(self.sigma_w).T
        return Z + W, W

    def posterior_moments(self, y, z0, Qz, jitter=1e-9):
        return awgn_posterior_moments(y, z0, Qz, self, jitter=jitter)

    def neg_output_entropy(self, a, Qz):
        M = self.M
        S = hermitize(np.asarray(Qz) + self.sigma_w)
        val = -(M * np.log(np.pi * np.e) + logdet_h(S))
        return np.broadcast_to(val, np.shape(a)[:-1])

    def conditional_entropy(self):
        """Differential entropy of y given z (per row), nats."""
        return float(self.M * np.log(np.pi * np.e) + logdet_h(self.sigma_w))

    def restricted(self, restrict):
        return AwgnRowChannel(restrict(self.sigma_w))


def awgn_posterior_moments(y, z0, Qz, channel, jitter=1e-9):
    """Gaussian reproduction for N_c(y | z, Sw) N_c(z | z0, Qz).

    Q~z = (Sw^-1 + Qz^-1)^-1 and z~ = Q~z (Sw^-1 y + Qz^-1 z0), computed in
    a form that tolerates either covariance being (near) zero.
    """
    y = np.asarray(y, dtype=complex)
    z0 = np.asarray(z0, dtype=complex)
    Qz = hermitize(np.asarray(Qz, dtype=complex))
    Sw = channel.sigma_w
    if np.any(np.real(np.trace(Qz + Sw, axis1=-2, axis2=-1)) <= 0):
        raise SingularMatrixError("Sigma_w and Qz are both singular")
    # Q~z = Qz - Qz (Qz + Sw)^-1 Qz,  z~ = z0 + Qz (Qz + Sw)^-1 (y - z0)
    S_inv = inv_h(Qz + Sw, jitter, name="Qz + Sigma_w")
    K = Qz @ S_inv
    Qt = hermitize(Qz - K @ Qz)
    zt = z0 + matvec(K, y - z0)
    return zt, Qt


# ---------------------------------------------------------------- quantizer


@dataclass
class QuantizedRowChannel:
    """Separable uniform quantizer applied to Re and Im of z + w.

    ``bits`` per real dimension, cells of width ``2 * clip / 2**bits`` over
    ``[-clip, clip]`` with the outermost cells extended to +-inf.  Noise is
    isotropic: w ~ N_c(0, noise_var * I).
    """

    bits: int
    clip: float
    noise_var: float
    M: int = 1

    diagonal_only = True

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        if self.clip <= 0:
            raise ValueError("clip must be positive")

    @property
    def step(self):
        return 2.0 * self.clip / 2 ** self.bits

    @property
    def n_cells(self):
        return 2 ** self.bits

    @property
    def sigma_w(self):
        return self.noise_var * np.eye(self.M, dtype=complex)

    def label(self, v):
        """Cell index of each real value; boundaries go to the upper cell."""
        k = np.floor((np.asarray(v, dtype=float) + self.clip) / self.step)
        return np.clip(k, 0, self.n_cells - 1).astype(np.int64)

    def midpoint(self, k):
        return -self.clip + (np.asarray(k) + 0.5) * self.step

    def interval(self, k):
        """(q_low, q_up) of each cell, with +-inf at the ends."""
        k = np.asarray(k)
        low = np.where(k == 0, -np.inf, -self.clip + k * self.step)
        up = np.where(k == self.n_cells - 1, np.inf, -self.clip + (k + 1) * self.step)
        return low, up

    def quantize(self, v):
        """Return ``(label, midpoint)`` for real input."""
        k = self.label(v)
        return k, self.midpoint(k)

    def quantize_complex(self, t):
        t = np.asarray(t, dtype=complex)
        return self.quantize(t.real)[1] + 1j * self.quantize(t.imag)[1]

    def sample(self, Z, rng):
        Z = np.asarray(Z, dtype=complex)
        W = np.sqrt(self.noise_var) * complex_normal(rng, Z.shape)
        return self.quantize_complex(Z + W), W

    def cell_probabilities(self, z_real, var_real):
        """P(label | z) for every label, last axis indexes the cell."""
        z = np.asarray(z_real, dtype=float)[..., None]
        k = np.arange(self.n_cells)
        low, up = self.interval(k)
        s = np.sqrt(var_real)
        return ndtr((up - z) / s) - ndtr((low - z) / s)

    def posterior_moments(self, y, z0, Qz, jitter=1e-9):
        """Moments of z given quantized y under a Gaussian prior on z.

        Only the diagonal of ``Qz`` is used and the returned covariance is
        diagonal.  :func:`quantized_posterior_moments` also reports underflow.
        """
        Qz = np.asarray(Qz)
        qz = np.real(np.diagonal(Qz, axis1=-2, axis2=-1))
        zt, qt, _ = quantized_posterior_moments(y, z0, qz, self)
        Qt = np.zeros(qt.shape + (qt.shape[-1],), dtype=complex)
        idx = np.arange(qt.shape[-1])
        Qt[..., idx, idx] = qt
        return zt, Qt

    def neg_output_entropy(self, a, Qz):
        """sum_y v log v for the discrete output, diagonal Qz."""
        a = np.asarray(a, dtype=complex)
        qz = np.real(np.diagonal(np.asarray(Qz), axis1=-2, axis2=-1))
        var = (qz + self.noise_var) / 2.0
        total = 0.0
        for part in (a.real, a.imag):
            p = self.cell_probabilities(part, np.broadcast_to(var, part.shape)[..., None])
            total = total + np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0), axis=(-1, -2))
        return total

    def restricted(self, restrict):
        return self


def truncated_normal_moments(mean, var, low, up):
    """Mean and variance of N(mean, var) restricted to [low, up].

    Evaluated through log-CDF differences so cells far in either tail keep
    full relative precision.  Also returns ``log Z`` (log cell mass).
    """
    mean, var, low, up = np.broadcast_arrays(
        np.asarray(mean, float), np.asarray(var, float), np.asarray(low, float), np.asarray(up, float)
    )
    s = np.sqrt(var)
    a = (low - mean) / s
    b = (up - mean) / s
    # reflect cells lying right of the mean so we always work in the left tail
    flip = (a + b) > 0
    a2 = np.where(flip, -b, a)
    b2 = np.where(flip, -a, b)

    log_Fb = log_ndtr(b2)
    log_Fa = log_ndtr(a2)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_Z = log_Fb + np.log1p(-np.exp(log_Fa - log_Fb))
        log_phi_a = -0.5 * a2 ** 2 - 0.5 * np.log(2 * np.pi)
        log_phi_b = -0.5 * b2 ** 2 - 0.5 * np.log(2 * np.pi)
        ra = np.where(np.isfinite(a2), np.exp(log_phi_a - log_Z), 0.0)
        rb = np.where(np.isfinite(b2), np.exp(log_phi_b - log_Z), 0.0)
        a_ra = np.where(np.isfinite(a2), a2 * ra, 0.0)
        b_rb = np.where(np.isfinite(b2), b2 * rb, 0.0)
    shift = ra - rb
    vfac = 1.0 + a_ra - b_rb - shift ** 2
    m = np.where(flip, -shift, shift)
    return mean + s * m, var * np.clip(vfac, 0.0, 1.0), log_Z


def truncated_posterior_1d(z0, var_z, var_w, low, up):
    """Posterior of a real z ~ N(z0, var_z) given z + w in [low, up], w ~ N(0, var_w).

    Returns ``(mean, var, underflow)``; underflowing cells (mass < 1e-300)
    collapse to a point mass at the nearest cell boundary.
    """
    z0, var_z, low, up = np.broadcast_arrays(
        np.asarray(z0, float), np.asarray(var_z, float), np.asarray(low, float), np.asarray(up, float)
    )
    s2 = var_z + var_w
    mt, vt, log_Z = truncated_normal_moments(z0, s2, low, up)
    gain = var_z / s2
    mean = z0 + gain * (mt - z0)
    var = var_z - gain * var_z * (1.0 - vt / s2)
    under = ~(log_Z > LOG_TINY)
    if np.any(under):
        nearest = np.where(np.abs(low - z0) < np.abs(up - z0), low, up)
        nearest = np.where(np.isfinite(nearest), nearest, np.where(np.isfinite(low), low, up))
        mean = np.where(under, nearest, mean)
        var = np.where(under, 0.0, var)
    return mean, np.maximum(var, 0.0), under


def quantized_posterior_moments(y, z0, qz, channel):
    """Per-component posterior of z given quantized observations.

    ``y`` holds the recorded complex cell midpoints, ``z0`` the prior means
    and ``qz`` the per-component complex variances (Re and Im each get
    ``qz / 2``).  Returns ``(ztilde, qz_tilde, flags)`` with ``qz_tilde``
    again a complex variance and ``flags`` marking underflowing rows.
    """
    y = np.asarray(y, dtype=complex)
    z0 = np.asarray(z0, dtype=complex)
    qz = np.asarray(qz, dtype=float)
    half_w = channel.noise_var / 2.0
    out_mean = []
    out_var = []
    flags = np.zeros(np.broadcast_shapes(y.shape, z0.shape, qz.shape), dtype=bool)
    for yp, zp in ((y.real, z0.real), (y.imag, z0.imag)):
        low, up = channel.interval(channel.label(yp))
        m, v, under = truncated_posterior_1d(zp, qz / 2.0, half_w, low, up)
        out_mean.append(m)
        out_var.append(v)
        flags |= under
    zt = out_mean[0] + 1j * out_mean[1]
    qt = out_var[0] + out_var[1]
    return zt, qt, np.any(flags, axis=-1)


def default_clip(z_cov_diag, sigmas=3.0):
    """Clip level from the per-component variance of z (complex)."""
    return sigmas * float(np.sqrt(np.mean(np.real(z_cov_diag)) / 2.0))
