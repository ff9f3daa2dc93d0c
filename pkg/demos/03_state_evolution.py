# State evolution predicts the per-iteration NMSE of undamped EP without
# running it.  Here we put the two curves side by side.

# %%
import numpy as np

from rowamp import (
    AwgnRowChannel,
    BernoulliGaussianPrior,
    MCOptions,
    SolverOptions,
    SystemConfig,
    ep_run,
    generate_instance,
    make_covariance,
    state_evolution,
)
from rowamp.analysis import se_nmse_db
from rowamp.model import noise_trace_for_snr

L, N, M, rho, snr, T = 128, 256, 2, 0.1, 10.0, 10
rng = np.random.default_rng(7)
Sx = make_covariance("uniform-outer-plus-2I", M, 1.0, rng)
Sw = make_covariance("uniform-outer-plus-2I", M, noise_trace_for_snr(snr, rho, L / N), rng)
prior, channel = BernoulliGaussianPrior(rho, Sx), AwgnRowChannel(Sw)

# %% prediction
se = se_nmse_db(state_evolution(L / N, prior, channel, T, MCOptions(n_prior=50_000)), prior)[1:]

# %% simulation, errors pooled over trials
err, sig = np.zeros(T), 0.0
for k in range(20):
    inst = generate_instance(SystemConfig(L, N, M, prior, channel), seed=k)
    errs = []
    ep_run(inst, prior, channel, SolverOptions(max_iters=T, damping=1.0, tol=0.0),
           callback=lambda st: errs.append(np.sum(np.abs(st.xhat - inst.X) ** 2)))
    err += errs
    sig += np.sum(np.abs(inst.X) ** 2)
emp = 10 * np.log10(err / sig)

print(" t    EP (dB)   SE (dB)")
for t in range(T):
    print(f"{t + 1:2d}  {emp[t]:8.2f}  {se[t]:8.2f}")
