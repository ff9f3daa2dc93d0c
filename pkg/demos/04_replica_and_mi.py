# The replica fixed point gives the asymptotic MMSE and, for Gaussian noise,
# the mutual information.  For a Gaussian input the latter can be checked
# against log det on actual matrices.

# %%
from rowamp.harness.figures import fig7_point

print("snr_dB  replica  exact(mean of 10 H)")
for snr in (-5.0, 0.0, 5.0, 10.0):
    mi, exact, se = fig7_point(snr, L=32, N=32, M=2, trials=10)
    print(f"{snr:6.1f}  {mi:7.2f}  {exact:7.2f} +- {se:.2f}")

# %% sparse prior: branch selection by free energy
import numpy as np

from rowamp import AwgnRowChannel, BernoulliGaussianPrior, MCOptions, ReplicaOptions, replica_fixed_point

prior = BernoulliGaussianPrior(0.1, np.eye(2))
sol = replica_fixed_point(0.5, prior, AwgnRowChannel(0.01 * np.eye(2)), ReplicaOptions(mc=MCOptions(n_prior=5000)))
print(f"branch {sol.start}, mse per entry {sol.mse:.4g}, free energy {sol.free_energy:.4f} +- {sol.free_energy_stderr:.1e}")
