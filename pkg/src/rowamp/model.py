"""Problem definition: system configuration, synthetic instances, metrics."""

import base64
import json
from dataclasses import dataclass

import numpy as np

from .numerics import complex_normal, hermitize

DB_CLAMP = 300.0


class ConfigurationError(ValueError):
    pass


class UndefinedMetricError(ValueError):
    pass


@dataclass
class SystemConfig:
    """Dimensions plus materialized prior and channel objects."""

    L: int
    N: int
    M: int
    prior: object
    channel: object
    seed: int = 0

    def __post_init__(self):
        if min(self.L, self.N, self.M) < 1:
            raise ConfigurationError("L, N and M must all be positive")
        if self.prior.M != self.M:
            raise ConfigurationError(f"prior has M={self.prior.M}, config says M={self.M}")
        if getattr(self.channel, "M", self.M) != self.M:
            raise ConfigurationError(f"channel has M={self.channel.M}, config says M={self.M}")

    @property
    def alpha(self):
        return self.L / self.N


@dataclass
class ProblemInstance:
    H: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    config: SystemConfig


@dataclass
class ResultMetrics:
    nmse: float
    nmse_db: float
    snr_db: float = float("nan")


def to_db(x):
    with np.errstate(divide="ignore"):
        return float(np.clip(10.0 * np.log10(x), -DB_CLAMP, DB_CLAMP))


def generate_instance(config, seed=None):
    """Draw (H, X, Z, W, Y) for ``config``; ``seed`` overrides ``config.seed``."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    L, N = config.L, config.N
    H = complex_normal(rng, (L, N)) / np.sqrt(L)
    X = config.prior.sample(rng, N)
    Z = H @ X
    Y, W = config.channel.sample(Z, rng)
    return ProblemInstance(H=H, X=X, Z=Z, W=W, Y=Y, config=config)


def nmse(X, Xhat, snr_db=float("nan")):
    X = np.asarray(X)
    Xhat = np.asarray(Xhat)
    if X.shape != Xhat.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Xhat.shape}")
    denom = np.sum(np.abs(X) ** 2)
    if denom == 0:
        raise UndefinedMetricError("NMSE is undefined for an all-zero signal")
    val = float(np.sum(np.abs(X - Xhat) ** 2) / denom)
    return ResultMetrics(nmse=val, nmse_db=to_db(val), snr_db=snr_db)


def empirical_snr(instance):
    """||HX||_F^2 / ||W||_F^2 in dB."""
    if instance.W is None:
        raise UndefinedMetricError("noise realization not stored for this instance")
    sig = np.sum(np.abs(instance.Z) ** 2)
    noise = np.sum(np.abs(instance.W) ** 2)
    if noise == 0:
        return DB_CLAMP
    return to_db(sig / noise)


COVARIANCE_KINDS = ("uniform-outer", "uniform-outer-plus-2I", "scaled-identity", "ones-plus-I")


def make_covariance(kind, M, trace_target=1.0, rng=None):
    """Covariance constructions used by the experiment protocols.

    ``uniform-outer`` is A A^H with A uniform on [0, 1); ``-plus-2I`` adds
    2 I before normalizing.  The result always has trace ``trace_target``.
    """
    if trace_target <= 0:
        raise ConfigurationError("trace_target must be positive")
    if kind in ("uniform-outer", "uniform-outer-plus-2I"):
        rng = np.random.default_rng() if rng is None else rng
        A = rng.random((M, M))
        S = A @ A.T
        if kind == "uniform-outer-plus-2I":
            S = S + 2.0 * np.eye(M)
    elif kind == "scaled-identity":
        S = np.eye(M)
    elif kind == "ones-plus-I":
        S = np.eye(M) + np.ones((M, M))
    else:
        raise ConfigurationError(f"unknown covariance kind {kind!r}")
    S = S / np.trace(S) * trace_target
    return hermitize(S.astype(complex))


def noise_trace_for_snr(snr_db, signal_trace, alpha):
    """Tr(Sigma_w) such that 10 log10(Tr(Xi_x) / (alpha Tr(Sigma_w))) = snr_db."""
    return signal_trace / alpha * 10.0 ** (-snr_db / 10.0)


def design_snr_db(prior, sigma_w, alpha):
    sig = np.real(np.trace(prior.covariance))
    return 10.0 * np.log10(sig / (alpha * np.real(np.trace(sigma_w))))


# ------------------------------------------------------------ serialization
#
# Container: a JSON object
#   {"format": "rowamp-instance", "version": 1,
#    "dims": {"L":..,"N":..,"M":..},
#    "arrays": {name: {"shape": [r, c], "data": base64}}}
# where data is row-major interleaved (re, im) pairs of little-endian float64.

FORMAT_NAME = "rowamp-instance"


def _encode(A):
    A = np.ascontiguousarray(A, dtype=np.complex128)
    pairs = np.empty(A.shape + (2,), dtype="<f8")
    pairs[..., 0] = A.real
    pairs[..., 1] = A.imag
    return {"shape": list(A.shape), "data": base64.b64encode(pairs.tobytes()).decode("ascii")}


def _decode(obj):
    raw = np.frombuffer(base64.b64decode(obj["data"]), dtype="<f8")
    pairs = raw.reshape(tuple(obj["shape"]) + (2,))
    return pairs[..., 0] + 1j * pairs[..., 1]


def instance_to_json(instance):
    cfg = instance.config
    arrays = {k: _encode(getattr(instance, k)) for k in ("H", "X", "Z", "Y")}
    if instance.W is not None:
        arrays["W"] = _encode(instance.W)
    return json.dumps(
        {
            "format": FORMAT_NAME,
            "version": 1,
            "dims": {"L": cfg.L, "N": cfg.N, "M": cfg.M},
            "seed": cfg.seed,
            "arrays": arrays,
        }
    )


def instance_arrays_from_json(text):
    """Decode a container back to ``{name: ndarray}`` plus the dims dict."""
    obj = json.loads(text)
    if obj.get("format") != FORMAT_NAME:
        raise ConfigurationError("not a rowamp instance container")
    arrays = {k: _decode(v) for k, v in obj["arrays"].items()}
    return arrays, obj["dims"]
