import time

import numpy as np
import pytest

from rowamp.channels import AwgnRowChannel
from rowamp.ep import (
    IterationFailure,
    SolverOptions,
    diagonal_restriction,
    ep_init,
    ep_iteration,
    ep_run,
)
from rowamp.model import SystemConfig, UndefinedMetricError, generate_instance, make_covariance, nmse
from rowamp.priors import BernoulliGaussianPrior, GaussianPrior

from conftest import random_pd
from oracles import kron_lmmse


def bg_setup(L=64, N=128, M=2, rho=0.1, noise=1e-3, seed=0):
    Sx = make_covariance("uniform-outer-plus-2I", M, 1.0, np.random.default_rng(99))
    prior = BernoulliGaussianPrior(rho, Sx)
    ch = AwgnRowChannel(noise * np.eye(M))
    return generate_instance(SystemConfig(L, N, M, prior, ch), seed=seed), prior, ch


def test_options_defaults_and_validation():
    o = SolverOptions()
    assert (o.max_iters, o.damping, o.tol, o.jitter) == (50, 0.7, 1e-8, 1e-9)
    with pytest.raises(ValueError):
        SolverOptions(damping=0.0)
    with pytest.raises(ValueError):
        SolverOptions(max_iters=0)


def test_init():
    inst, prior, _ = bg_setup()
    st = ep_init(inst, prior)
    assert st.t == 1
    np.testing.assert_allclose(st.Qx, np.broadcast_to(0.1 * prior.sigma_x, st.Qx.shape))
    assert st.s.shape == (64, 2) and not np.any(st.s)
    g = GaussianPrior(np.eye(2))
    np.testing.assert_allclose(ep_init(inst, g).Qx[5], np.eye(2))


@pytest.mark.parametrize("seed", range(5))
def test_gaussian_matches_kron_lmmse(seed):
    rng = np.random.default_rng(seed)
    Sx, Sw = random_pd(rng, 2), random_pd(rng, 2, scale=0.3)
    prior, ch = GaussianPrior(Sx), AwgnRowChannel(Sw)
    inst = generate_instance(SystemConfig(8, 4, 2, prior, ch), seed=seed)
    Xh, _, _ = ep_run(inst, prior, ch, SolverOptions(max_iters=2000, tol=1e-13))
    ref = kron_lmmse(inst.H, inst.Y, Sx, Sw)
    assert np.linalg.norm(Xh - ref) ** 2 / np.linalg.norm(ref) ** 2 < 1e-6


def test_rho_zero_gives_zero_estimate():
    inst, _, ch = bg_setup(rho=0.0)
    prior = BernoulliGaussianPrior(0.0, np.eye(2))
    st = ep_iteration(ep_init(inst, prior), inst, prior, ch)
    assert not np.any(st.xhat)
    with pytest.raises(UndefinedMetricError):
        nmse(inst.X, st.xhat)


def test_stops_at_tolerance():
    inst, prior, ch = bg_setup()
    _, _, traj = ep_run(inst, prior, ch, SolverOptions(max_iters=200, tol=1e-6))
    assert len(traj) < 200
    rows = list(traj.rows())
    assert rows[0][0] == 1 and len(rows[0]) == 4


def test_damping_preserves_fixed_point():
    inst, prior, ch = bg_setup(noise=1e-3)
    a, _, ta = ep_run(inst, prior, ch, SolverOptions(damping=1.0, max_iters=500, tol=1e-12))
    b, _, tb = ep_run(inst, prior, ch, SolverOptions(damping=0.7, max_iters=500, tol=1e-12))
    assert len(ta) < 500 and len(tb) < 500
    assert abs(nmse(inst.X, a).nmse - nmse(inst.X, b).nmse) < 1e-6


def test_decreasing_nmse_and_psd_states():
    inst, prior, ch = bg_setup()
    seen = []

    def check(st):
        for Q in (st.Qx, st.Qs, st.Qz, st.Qr):
            assert np.linalg.eigvalsh(Q)[..., 0].min() >= -1e-12
        seen.append(st.t)

    _, _, traj = ep_run(inst, prior, ch, SolverOptions(max_iters=20), callback=check)
    assert seen[0] == 2
    assert traj.nmse_db[-1] < traj.nmse_db[0] - 10


def test_converged_state_is_stationary():
    inst, prior, ch = bg_setup()
    opts = SolverOptions(max_iters=500, tol=1e-10)
    Xh, _, traj = ep_run(inst, prior, ch, opts)
    states = []
    ep_run(inst, prior, ch, SolverOptions(max_iters=len(traj) + 1, tol=0.0), callback=states.append)
    d = abs(nmse(inst.X, states[-1].xhat).nmse - nmse(inst.X, Xh).nmse) / nmse(inst.X, Xh).nmse
    assert d < 10 * opts.tol


def test_permutation_equivariance():
    inst, prior, ch = bg_setup(L=32, N=64)
    opts = SolverOptions(max_iters=15)
    Xh, _, _ = ep_run(inst, prior, ch, opts)
    rng = np.random.default_rng(3)
    pn, pl = rng.permutation(64), rng.permutation(32)
    inst.H = inst.H[pl][:, pn]
    inst.Y = inst.Y[pl]
    inst.X = inst.X[pn]
    Xp, _, _ = ep_run(inst, prior, ch, opts)
    np.testing.assert_allclose(Xp, Xh[pn], atol=1e-10)


def test_diagonal_restriction_examples(rng):
    np.testing.assert_array_equal(diagonal_restriction(np.eye(3)), np.eye(3))
    np.testing.assert_array_equal(diagonal_restriction(np.ones((3, 3))), np.eye(3))
    A = random_pd(rng, 4)
    D = diagonal_restriction(A)
    np.testing.assert_array_equal(np.diag(D), np.diag(A))
    assert np.linalg.eigvalsh(D)[0] >= 0
    assert np.count_nonzero(D - np.diag(np.diag(D))) == 0


def test_failure_carries_index_and_trajectory():
    prior = GaussianPrior(np.eye(2))
    ch = AwgnRowChannel(0.1 * np.eye(2))
    inst = generate_instance(SystemConfig(8, 4, 2, prior, ch))
    inst.H[3, 1] = np.nan
    with pytest.raises(IterationFailure) as info:
        ep_run(inst, prior, ch)
    assert info.value.index == 3
    assert info.value.trajectory is not None


def _iteration_seconds(N, reps=5):
    inst, prior, ch = bg_setup(L=256, N=N, M=4)
    st = ep_init(inst, prior)
    st = ep_iteration(st, inst, prior, ch)
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        ep_iteration(st, inst, prior, ch)
        best = min(best, time.perf_counter() - t0)
    return best


def test_cost_roughly_linear_in_n():
    t1 = _iteration_seconds(512)
    t2 = _iteration_seconds(1024)
    assert t2 < 3 * t1
