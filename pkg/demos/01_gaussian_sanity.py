# Gaussian prior, Gaussian noise: EP should land exactly on the joint
# linear-MMSE estimate, which we can write down with one big solve.

# %%
import numpy as np

from rowamp import AwgnRowChannel, GaussianPrior, SolverOptions, SystemConfig, ep_run, generate_instance, make_covariance

rng = np.random.default_rng(0)
L, N, M = 12, 8, 3
Sx = make_covariance("uniform-outer-plus-2I", M, 1.0, rng)
Sw = make_covariance("uniform-outer-plus-2I", M, 0.1, rng)
prior, channel = GaussianPrior(Sx), AwgnRowChannel(Sw)
inst = generate_instance(SystemConfig(L, N, M, prior, channel), seed=1)

# %% EP, run to a tight tolerance
Xhat, Qx, traj = ep_run(inst, prior, channel, SolverOptions(max_iters=500, tol=1e-12))
print("iterations:", len(traj.nmse_db))

# %% brute force: stack rows, vec(Y) = (H kron I_M) vec(X) + vec(W)
A = np.kron(inst.H, np.eye(M))
Cx = np.kron(np.eye(N), Sx)
Cw = np.kron(np.eye(L), Sw)
G = Cx @ A.conj().T @ np.linalg.inv(A @ Cx @ A.conj().T + Cw)
X_lmmse = (G @ inst.Y.reshape(-1)).reshape(N, M)

rel = np.linalg.norm(Xhat - X_lmmse) ** 2 / np.linalg.norm(X_lmmse) ** 2
print(f"relative squared difference EP vs LMMSE: {rel:.2e}")
