import numpy as np
import pytest

from irscf.rate import AuxiliaryState, BeamformerSet
from irscf.scenario import SystemConfig, default_placement, generate_channels
from irscf.optim import init_beamformers


def desk_config(**kw):
    """Small instance used throughout: 2 APs, 2 IRSs with 4 PSs each, 2 UEs."""
    base = dict(L=2, R=2, K=2, M_B=2, M_U=2, N=4, N_h=2, d=2,
                kappa2_D=0.01, kappa2_G=0.01, kappa2_S=0.01)
    base.update(kw)
    return SystemConfig(**base)


def desk_instance(seed, **kw):
    """(config, estimate, feasible random beamformers) for one seed."""
    cfg = desk_config(**kw)
    rng = np.random.default_rng(seed)
    est = generate_channels(cfg, default_placement(cfg, rng), rng)
    bf = init_beamformers(cfg, rng)
    return cfg, est, bf


def random_aux(cfg, rng, scale=0.3):
    """Random auxiliary state with Hermitian PSD weights."""
    Ld = cfg.L * cfg.d
    Y = [
        rng.standard_normal((cfg.M_U, Ld)) + 1j * rng.standard_normal((cfg.M_U, Ld))
        for _ in range(cfg.K)
    ]
    U = []
    for _ in range(cfg.K):
        B = rng.standard_normal((Ld, Ld)) + 1j * rng.standard_normal((Ld, Ld))
        U.append(scale * (B @ B.conj().T))
    return AuxiliaryState(U, Y)


def zero_beamformers(cfg, theta=None):
    W = [[np.zeros((cfg.M_B, cfg.d), dtype=complex) for _ in range(cfg.K)] for _ in range(cfg.L)]
    if theta is None:
        theta = cfg.alpha * np.ones(cfg.RN, dtype=complex)
    return BeamformerSet(W, theta)
