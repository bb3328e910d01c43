import numpy as np
import pytest

from conftest import desk_config, desk_instance, random_aux, zero_beamformers

from irscf.rate import (
    AuxiliaryState,
    BeamformerSet,
    avg_sum_rate_mc,
    deterministic_covariance,
    deterministic_rate,
    effective_channel,
    effective_channels,
    expectation_closed_form,
    expectation_monte_carlo,
    instant_sum_rate,
    interference_covariance,
    signal_covariance,
)
from irscf.scenario import ChannelEstimate, SystemConfig, default_placement, generate_channels, sample_csi_error
from irscf.optim import init_beamformers, update_U, update_Y


# ---------------------------------------------------------------- channels


def test_effective_channel_alpha_zero_is_direct():
    cfg, est, bf = desk_instance(0, alpha=0.0)
    H = effective_channel(est, bf.theta, 0, 0)
    assert np.array_equal(H, est.D_hat[0][0])


def test_effective_channel_no_irs_links():
    cfg, est, bf = desk_instance(1)
    for r in range(cfg.R):
        for k in range(cfg.K):
            est.G_hat[r][k][:] = 0.0
    for k in range(cfg.K):
        est.G_hat_k[k][:] = 0.0
    H = effective_channel(est, bf.theta, 1, 1)
    assert np.allclose(H, est.D_hat[1][1])


def test_effective_channel_blockwise_oracle():
    # H^H = D^H + sum_r G_rk^H Theta_r S_lr, computed per IRS block
    cfg, est, bf = desk_instance(2)
    l, k = 1, 0
    H = effective_channel(est, bf.theta, l, k)
    HH = est.D_hat[l][k].conj().T.copy()
    for r in range(cfg.R):
        Th_r = np.diag(bf.theta[r * cfg.N : (r + 1) * cfg.N])
        HH = HH + est.G_hat[r][k].conj().T @ Th_r @ est.S_hat[l][r]
    assert np.allclose(H.conj().T, HH, rtol=1e-12)


# ---------------------------------------------------------- covariance, rate


def test_interference_covariance_zero_W():
    cfg, est, _ = desk_instance(3)
    bf = zero_beamformers(cfg)
    V = interference_covariance(est, None, bf, 0)
    assert np.allclose(V, cfg.sigma2 * np.eye(cfg.M_U))


def test_interference_covariance_single_user_no_error():
    cfg, est, bf = desk_instance(4, K=1, kappa2_D=0.0, kappa2_G=0.0, kappa2_S=0.0)
    V = interference_covariance(est, None, bf, 0)
    assert np.allclose(V, cfg.sigma2 * np.eye(cfg.M_U))


def test_interference_covariance_noise_floor():
    cfg, est, bf = desk_instance(5)
    rng = np.random.default_rng(50)
    err = sample_csi_error(est, rng)
    V = interference_covariance(est, err, bf, 1)
    w = np.linalg.eigvalsh(0.5 * (V + V.conj().T))
    assert np.all(w >= cfg.sigma2 * (1 - 1e-9))


def test_instant_rate_zero_W():
    cfg, est, _ = desk_instance(6)
    bf = zero_beamformers(cfg)
    assert instant_sum_rate(est, None, bf) == 0.0


def test_instant_rate_nonnegative():
    for seed in range(5):
        cfg, est, bf = desk_instance(seed)
        err = sample_csi_error(est, np.random.default_rng(seed + 100))
        assert instant_sum_rate(est, err, bf) >= 0.0


def test_instant_rate_siso_single_user():
    # scalar reduction: log(1 + |h w|^2 / sigma^2)
    cfg = SystemConfig(L=1, R=1, K=1, M_B=1, M_U=1, N=1, N_h=1, d=1, alpha=0.0,
                       kappa2_D=0.0, kappa2_G=0.0, kappa2_S=0.0)
    rng = np.random.default_rng(7)
    est = generate_channels(cfg, default_placement(cfg, rng), rng)
    bf = init_beamformers(cfg, rng)
    h = est.D_hat[0][0][0, 0]
    w = bf.W[0][0][0, 0]
    expected = np.log(1.0 + abs(h * w) ** 2 / cfg.sigma2)
    assert instant_sum_rate(est, None, bf) == pytest.approx(expected, rel=1e-12)


def test_instant_rate_determinant_identity_oracle():
    # independent route via the explicit SINR matrix sum_l H^H W W^H H V^{-1}
    cfg, est, bf = desk_instance(8)
    err = sample_csi_error(est, np.random.default_rng(80))
    total = 0.0
    for k in range(cfg.K):
        V = interference_covariance(est, err, bf, k)
        S = signal_covariance(est, bf, k)
        gamma = S @ np.linalg.inv(V)
        total += np.log(np.abs(np.linalg.det(np.eye(cfg.M_U) + gamma)))
    assert instant_sum_rate(est, err, bf) == pytest.approx(total, rel=1e-9)


# -------------------------------------------------------------- MC average


def test_avg_rate_zero_error_equals_instant():
    cfg, est, bf = desk_instance(9, kappa2_D=0.0, kappa2_G=0.0, kappa2_S=0.0)
    mean, se = avg_sum_rate_mc(est, bf, np.random.default_rng(0), 16)
    assert mean == pytest.approx(instant_sum_rate(est, None, bf), rel=1e-12)
    assert se == pytest.approx(0.0, abs=1e-13)


def test_avg_rate_single_sample_has_no_se():
    cfg, est, bf = desk_instance(10)
    mean, se = avg_sum_rate_mc(est, bf, np.random.default_rng(1), 1)
    assert se is None


def test_avg_rate_seed_stability():
    cfg, est, bf = desk_instance(11)
    m1, s1 = avg_sum_rate_mc(est, bf, np.random.default_rng(101), 20000)
    m2, s2 = avg_sum_rate_mc(est, bf, np.random.default_rng(202), 20000)
    assert abs(m1 - m2) <= 3.0 * np.hypot(s1, s2)


def test_avg_rate_matches_per_sample_path():
    # batched MC agrees with the scalar path on the same error draws
    cfg, est, bf = desk_instance(12)
    rng = np.random.default_rng(123)
    n = 64
    mean, _ = avg_sum_rate_mc(est, bf, np.random.default_rng(55), n)
    acc = 0.0
    rng2 = np.random.default_rng(66)
    for _ in range(n):
        err = sample_csi_error(est, rng2)
        acc += instant_sum_rate(est, err, bf)
    # different draws, same distribution: agree loosely
    assert mean == pytest.approx(acc / n, rel=0.2)


# ---------------------------------------------------- expectation closed form


def test_expectation_zero_kappa():
    cfg, est, bf = desk_instance(13, kappa2_D=0.0, kappa2_G=0.0, kappa2_S=0.0)
    aux = random_aux(cfg, np.random.default_rng(2))
    assert expectation_closed_form(est, bf, aux) == 0.0


def test_expectation_alpha_zero_keeps_only_direct_term():
    cfg, est, bf = desk_instance(14, alpha=0.0)
    aux = random_aux(cfg, np.random.default_rng(3))
    val = expectation_closed_form(est, bf, aux)
    manual = 0.0
    for k in range(cfg.K):
        Mk = aux.Y[k] @ aux.U_bar(k) @ aux.Y[k].conj().T
        trM = np.trace(Mk).real
        for l in range(cfg.L):
            trW = sum(np.sum(np.abs(W) ** 2) for W in bf.W[l])
            manual += est.delta2_D[l, k] * trM * trW
    assert val == pytest.approx(manual, rel=1e-12)


def test_expectation_monte_carlo_oracle_light():
    cfg, est, bf = desk_instance(15)
    aux = random_aux(cfg, np.random.default_rng(4))
    cf = expectation_closed_form(est, bf, aux)
    mc, se = expectation_monte_carlo(est, bf, aux, np.random.default_rng(5), 20000)
    assert abs(cf - mc) <= max(0.02 * abs(cf), 3.0 * se)


def test_expectation_phase_invariant_bitwise():
    cfg, est, bf = desk_instance(16)
    aux = random_aux(cfg, np.random.default_rng(6))
    rng = np.random.default_rng(7)
    vals = []
    for _ in range(10):
        th = cfg.alpha * np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.RN))
        vals.append(expectation_closed_form(est, BeamformerSet(bf.W, th), aux))
    assert all(v == vals[0] for v in vals)


def test_expectation_monotone_in_kappa():
    cfg, est, bf = desk_instance(17)
    aux = random_aux(cfg, np.random.default_rng(8))
    base = expectation_closed_form(est, bf, aux)
    for field in ("kappa2_D", "kappa2_G", "kappa2_S"):
        cfg2 = cfg.replace(**{field: 0.05})
        est2 = ChannelEstimate(cfg2, est.D_hat, est.G_hat, est.S_hat)
        assert expectation_closed_form(est2, bf, aux) >= base


# --------------------------------------------------- deterministic covariance


def test_deterministic_covariance_trivials():
    cfg, est, bf = desk_instance(18, K=1, kappa2_D=0.0, kappa2_G=0.0, kappa2_S=0.0)
    V, V_leave = deterministic_covariance(est, bf, 0)
    S = signal_covariance(est, bf, 0)
    assert np.allclose(V, S + cfg.sigma2 * np.eye(cfg.M_U), rtol=1e-12)
    assert np.allclose(V_leave, cfg.sigma2 * np.eye(cfg.M_U), rtol=1e-9, atol=1e-20)


def test_deterministic_covariance_zero_W():
    cfg, est, _ = desk_instance(19)
    bf = zero_beamformers(cfg)
    V, V_leave = deterministic_covariance(est, bf, 1)
    assert np.allclose(V, cfg.sigma2 * np.eye(cfg.M_U))
    assert np.allclose(V_leave, cfg.sigma2 * np.eye(cfg.M_U))


def test_deterministic_covariance_positive_definite():
    for seed in range(5):
        cfg, est, bf = desk_instance(seed + 20)
        for k in range(cfg.K):
            V, V_leave = deterministic_covariance(est, bf, k)
            assert np.min(np.linalg.eigvalsh(V)) >= cfg.sigma2 * (1 - 1e-9)
            assert np.min(np.linalg.eigvalsh(V_leave)) >= cfg.sigma2 * (1 - 1e-9)


def test_deterministic_covariance_is_mean_of_sampled():
    # V_full - S_own is the mean of the sampled interference covariance
    cfg, est, bf = desk_instance(21)
    k = 0
    V, _ = deterministic_covariance(est, bf, k)
    S = signal_covariance(est, bf, k)
    rng = np.random.default_rng(9)
    n = 4000
    acc = np.zeros((cfg.M_U, cfg.M_U), dtype=complex)
    for _ in range(n):
        err = sample_csi_error(est, rng)
        acc += interference_covariance(est, err, bf, k)
    mean_V = acc / n
    assert np.allclose(mean_V + S, V, rtol=0.05)


def test_deterministic_rate_positive_and_finite():
    for seed in range(3):
        cfg, est, bf = desk_instance(seed + 25)
        r = deterministic_rate(est, bf)
        assert np.isfinite(r) and r > 0
