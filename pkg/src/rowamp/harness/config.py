"""Experiment configuration: JSON schema, validation and materialization.

A config file is a JSON object::

    {
      "name": "fig4",
      "system": {"L": 128, "N": 256, "M": 8},
      "prior": {"type": "bernoulli-gaussian", "rho": 0.15,
                "covariance": {"kind": "uniform-outer", "trace": 1.0, "seed": 7}},
      "channel": {"type": "awgn", "snr_db": 10,
                  "covariance": {"kind": "uniform-outer", "seed": 8}},
      "solver": {"max_iters": 50, "damping": 0.7, "tol": 1e-8},
      "estimators": ["ep", "ep-diagonal", "ls"],
      "analysis": {"se": false, "replica": false, "mi": false},
      "sweep": {"snr_db": [5, 10], "rho": [0.1], "L": [128], "bits": [3]},
      "trials": 10,
      "seed": 0,
      "mc_samples": 20000,
      "resample_covariance": false
    }

Quantized channels use ``{"type": "quantized", "bits": 3, "snr_db": 10}``
(or ``"noise_var"`` instead of ``"snr_db"``; optional ``"clip"``).
Covariance seeds default to the experiment seed; with
``resample_covariance`` each trial draws fresh random covariances.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..channels import AwgnRowChannel, QuantizedRowChannel
from ..ep import SolverOptions
from ..model import COVARIANCE_KINDS, ConfigurationError, SystemConfig, make_covariance, noise_trace_for_snr
from ..priors import BernoulliGaussianPrior, GaussianPrior

ESTIMATORS = ("ep", "ep-diagonal", "ls")
SWEEP_AXES = ("snr_db", "rho", "L", "bits")


@dataclass
class ExperimentConfig:
    name: str
    system: SystemConfig
    prior_spec: dict
    channel_spec: dict
    solver: SolverOptions = field(default_factory=SolverOptions)
    estimators: tuple = ("ep",)
    se: bool = False
    replica: bool = False
    mi: bool = False
    sweep: dict = field(default_factory=dict)
    trials: int = 1
    seed: int = 0
    mc_samples: int = 20_000
    resample_covariance: bool = False
    output: str = "."

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not (self.estimators or self.se or self.replica or self.mi):
            raise ConfigurationError("enable at least one estimator or analysis")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ConfigurationError(f"unknown estimator(s) {sorted(bad)}")
        bad = set(self.sweep) - set(SWEEP_AXES)
        if bad:
            raise ConfigurationError(f"unknown sweep axis {sorted(bad)}")

    @property
    def digest(self):
        return config_digest(self.to_dict())

    def to_dict(self):
        return {
            "name": self.name,
            "system": {"L": self.system.L, "N": self.system.N, "M": self.system.M},
            "prior": self.prior_spec,
            "channel": self.channel_spec,
            "solver": {k: v for k, v in asdict(self.solver).items() if k != "diagonal"},
            "estimators": list(self.estimators),
            "analysis": {"se": self.se, "replica": self.replica, "mi": self.mi},
            "sweep": self.sweep,
            "trials": self.trials,
            "seed": self.seed,
            "mc_samples": self.mc_samples,
            "resample_covariance": self.resample_covariance,
        }

    def axis_points(self):
        """Cartesian product of the sweep axes as a list of dicts (fixed order)."""
        points = [{}]
        for axis in SWEEP_AXES:
            values = self.sweep.get(axis)
            if not values:
                continue
            points = [dict(p, **{axis: v}) for p in points for v in values]
        return points

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def config_digest(obj):
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _require(obj, key, where):
    if key not in obj:
        raise ConfigurationError(f"missing {where}.{key}")
    return obj[key]


def _covariance(spec, M, trace, seed):
    spec = spec or {"kind": "scaled-identity"}
    kind = spec.get("kind", "scaled-identity")
    if kind not in COVARIANCE_KINDS:
        raise ConfigurationError(f"unknown covariance kind {kind!r}")
    rng = np.random.default_rng(spec.get("seed", seed))
    return make_covariance(kind, M, spec.get("trace", trace), rng)


def build_prior(spec, M, seed=0, rho=None):
    kind = _require(spec, "type", "prior")
    sx = _covariance(spec.get("covariance"), M, 1.0, seed)
    if kind == "gaussian":
        return GaussianPrior(sx)
    if kind == "bernoulli-gaussian":
        r = spec.get("rho") if rho is None else rho
        if r is None or not 0.0 <= r <= 1.0:
            raise ConfigurationError("bernoulli-gaussian prior needs rho in [0, 1]")
        return BernoulliGaussianPrior(float(r), sx)
    raise ConfigurationError(f"unknown prior type {kind!r}")


def build_channel(spec, prior, alpha, seed=0, snr_db=None, bits=None):
    """Materialize a channel; ``snr_db`` sets Tr(Sigma_w) by the design formula."""
    kind = _require(spec, "type", "channel")
    M = prior.M
    snr = spec.get("snr_db") if snr_db is None else snr_db
    signal = float(np.real(np.trace(prior.covariance)))
    if kind == "awgn":
        if snr is None:
            cov = spec.get("covariance") or {}
            if "trace" not in cov:
                raise ConfigurationError("awgn channel needs snr_db or covariance.trace")
            return AwgnRowChannel(_covariance(cov, M, cov["trace"], seed + 1))
        trace = noise_trace_for_snr(snr, signal, alpha)
        return AwgnRowChannel(_covariance(spec.get("covariance"), M, trace, seed + 1))
    if kind == "quantized":
        b = spec.get("bits") if bits is None else bits
        if b is None or int(b) < 1:
            raise ConfigurationError("quantized channel needs bits >= 1")
        if snr is not None:
            noise_var = noise_trace_for_snr(snr, signal, alpha) / M
        else:
            noise_var = _require(spec, "noise_var", "channel")
        clip = spec.get("clip")
        if clip is None:
            # 3 standard deviations of each real part of z, whose covariance is Xi_x / alpha
            zvar = np.mean(np.real(np.diag(prior.covariance))) / alpha
            clip = 3.0 * np.sqrt(zvar / 2.0)
        return QuantizedRowChannel(int(b), float(clip), float(noise_var), M)
    raise ConfigurationError(f"unknown channel type {kind!r}")


def build_system(cfg, point=None, trial=None):
    """SystemConfig for one sweep point; fresh covariances per trial if requested."""
    point = point or {}
    L = int(point.get("L", cfg.system.L))
    N, M = cfg.system.N, cfg.system.M
    cov_seed = cfg.seed
    if cfg.resample_covariance and trial is not None:
        cov_seed = 10_000 + cfg.seed + trial
    prior_spec = _reseed(cfg.prior_spec, cov_seed, cfg.resample_covariance and trial is not None)
    channel_spec = _reseed(cfg.channel_spec, cov_seed + 1, cfg.resample_covariance and trial is not None)
    prior = build_prior(prior_spec, M, cov_seed, point.get("rho"))
    channel = build_channel(channel_spec, prior, L / N, cov_seed, point.get("snr_db"), point.get("bits"))
    return SystemConfig(L, N, M, prior, channel, seed=cfg.seed)


def _reseed(spec, seed, force):
    cov = spec.get("covariance")
    if not force or not cov:
        return spec
    return dict(spec, covariance=dict(cov, seed=seed))


def parse_config(obj, output="."):
    """Validate a decoded JSON object and return an :class:`ExperimentConfig`."""
    if not isinstance(obj, dict):
        raise ConfigurationError("config must be a JSON object")
    system = _require(obj, "system", "config")
    try:
        L, N, M = int(system["L"]), int(system["N"]), int(system["M"])
    except (KeyError, TypeError, ValueError):
        raise ConfigurationError("system needs integer L, N and M") from None
    prior_spec = dict(_require(obj, "prior", "config"))
    channel_spec = dict(_require(obj, "channel", "config"))
    seed = int(obj.get("seed", 0))
    prior = build_prior(prior_spec, M, seed)
    channel = build_channel(channel_spec, prior, L / N, seed)
    solver_kw = obj.get("solver", {})
    unknown = set(solver_kw) - {"max_iters", "damping", "tol", "jitter"}
    if unknown:
        raise ConfigurationError(f"unknown solver option(s) {sorted(unknown)}")
    try:
        solver = SolverOptions(**solver_kw)
    except (TypeError, ValueError) as err:
        raise ConfigurationError(str(err)) from None
    analysis = obj.get("analysis", {})
    sweep = {k: list(v) for k, v in obj.get("sweep", {}).items()}
    return ExperimentConfig(
        name=str(obj.get("name", "experiment")),
        system=SystemConfig(L, N, M, prior, channel, seed=seed),
        prior_spec=prior_spec,
        channel_spec=channel_spec,
        solver=solver,
        estimators=tuple(obj.get("estimators", ["ep"])),
        se=bool(analysis.get("se", False)),
        replica=bool(analysis.get("replica", False)),
        mi=bool(analysis.get("mi", False)),
        sweep=sweep,
        trials=int(obj.get("trials", 1)),
        seed=seed,
        mc_samples=int(obj.get("mc_samples", 20_000)),
        resample_covariance=bool(obj.get("resample_covariance", False)),
        output=output,
    )


def load_config(path, output="."):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"invalid JSON in {path}: {err}") from None
    return parse_config(obj, output)
