"""Network scenario generation: geometry, path loss, fading, CSI error model.

Conventions:
  * all powers in watts, all distances in meters, linear units internally
  * every random draw takes an explicit numpy Generator (no global RNG state)
  * direct AP-UE links are Rayleigh, IRS-related links are Rician
  * the additive CSI error on each channel has i.i.d. CN(0, delta^2) entries
    with delta^2 = kappa^2 * ||vec(estimate)||^2 (stacked matrices for the
    IRS-related links, per direct link otherwise)
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SystemConfig",
    "Placement",
    "ChannelEstimate",
    "ErrorSample",
    "dbm_to_watt",
    "db_to_linear",
    "path_loss",
    "steering_ula",
    "steering_upa",
    "default_placement",
    "generate_channels",
    "sample_csi_error",
]


def dbm_to_watt(x_dbm):
    return 10.0 ** (x_dbm / 10.0) * 1e-3


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


@dataclass
class SystemConfig:
    """All scalar parameters of the simulated network.

    Defaults follow the reference urban micro setup: six APs and three
    IRSs serving four UEs, 0.1 W per AP, -90 dBm noise, -30 dB gain at
    the 1 m reference distance.
    """

    L: int = 6            # APs
    R: int = 3            # IRSs
    K: int = 4            # UEs
    M_B: int = 4          # transmit antennas per AP
    M_U: int = 2          # receive antennas per UE
    N: int = 20           # phase shifters per IRS
    N_h: int = 10         # horizontal PSs (N_v = N / N_h)
    d: int = 0            # streams per (AP, UE) link; 0 means "use M_U"
    alpha: float = 1.0    # reflecting efficiency in [0, 1]
    P_max: float = 0.1    # per-AP power budget [W]
    sigma2_dbm: float = -90.0
    kappa2_D: float = 0.001
    kappa2_G: float = 0.001
    kappa2_S: float = 0.001
    beta_G: float = 3.0   # Rician factor, IRS-UE links (linear)
    beta_S: float = 3.0   # Rician factor, AP-IRS links (linear)
    C0_dB: float = -30.0  # reference path gain at d0
    d0: float = 1.0
    p_D: float = 3.75     # path loss exponent, direct links
    p_S: float = 2.2      # path loss exponent, AP-IRS links
    p_G: float = 2.2      # path loss exponent, IRS-UE links
    b: int = 0            # phase resolution bits; 0 = continuous
    chi: float = 100.0    # UE cluster center abscissa [m]
    eps_bcd: float = 1e-4
    eps_aso: float = 1e-9
    eps_bisect: float = 1e-10
    max_iters: int = 200
    mc_samples: int = 1000

    def __post_init__(self):
        if self.d == 0:
            self.d = self.M_U
        self.validate()

    def validate(self):
        for name in ("L", "R", "K", "M_B", "M_U", "N", "N_h", "d"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.d > min(self.M_B, self.M_U):
            raise ValueError(f"d={self.d} exceeds min(M_B, M_U)")
        if self.N % self.N_h != 0:
            raise ValueError(f"N_h={self.N_h} must divide N={self.N}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        for name in ("kappa2_D", "kappa2_G", "kappa2_S"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {v}")
        if self.P_max <= 0:
            raise ValueError(f"P_max must be positive, got {self.P_max}")
        if self.beta_G < 0 or self.beta_S < 0:
            raise ValueError("Rician factors must be nonnegative")
        if self.b < 0:
            raise ValueError(f"b must be >= 0, got {self.b}")
        return self

    @property
    def N_v(self):
        return self.N // self.N_h

    @property
    def sigma2(self):
        """Noise power in watts."""
        return dbm_to_watt(self.sigma2_dbm)

    @property
    def C0(self):
        """Reference path gain, linear."""
        return db_to_linear(self.C0_dB)

    @property
    def RN(self):
        """Total number of phase shifters across all IRSs."""
        return self.R * self.N

    def replace(self, **kw):
        """Copy with some fields overridden (re-validated)."""
        from dataclasses import replace as _replace

        return _replace(self, **kw)


@dataclass
class Placement:
    """3-D positions of all nodes, in meters."""

    ap_positions: np.ndarray   # (L, 3)
    irs_positions: np.ndarray  # (R, 3)
    ue_positions: np.ndarray   # (K, 3)


def default_placement(config, rng):
    """Default network layout.

    APs sit on a line at y=0 (height 3 m), IRSs on a line at y=100 near the
    UE area (height 6 m), and the UEs are drawn uniformly in a disc of
    radius 10 m centered at (chi, 100) at height 1.5 m.
    """
    L, R, K = config.L, config.R, config.K
    ap_x = np.linspace(0.0, 200.0, L) if L > 1 else np.array([100.0])
    aps = np.column_stack([ap_x, np.zeros(L), np.full(L, 3.0)])
    irs_x = np.linspace(50.0, 150.0, R) if R > 1 else np.array([100.0])
    irss = np.column_stack([irs_x, np.full(R, 100.0), np.full(R, 6.0)])
    # uniform in disc: radius via sqrt, angle uniform
    rad = 10.0 * np.sqrt(rng.uniform(size=K))
    ang = rng.uniform(0.0, 2.0 * np.pi, size=K)
    ues = np.column_stack(
        [config.chi + rad * np.cos(ang), 100.0 + rad * np.sin(ang), np.full(K, 1.5)]
    )
    return Placement(aps, irss, ues)


def path_loss(distance, exponent, C0_dB=-30.0, d0=1.0):
    """Distance-dependent large-scale power gain C0 * (d/d0)^(-p), linear."""
    if np.any(np.asarray(distance) <= 0):
        raise ValueError(f"distance must be positive, got {distance}")
    return db_to_linear(C0_dB) * (distance / d0) ** (-exponent)


def steering_ula(count, angle):
    """Half-wavelength ULA steering vector, broadside at angle = 0."""
    n = np.arange(count)
    return np.exp(1j * np.pi * n * np.sin(angle))


def steering_upa(N_h, N_v, azimuth, elevation):
    """Half-wavelength UPA steering vector.

    Kronecker product of the vertical and horizontal ULA factors; the
    horizontal index varies fastest.
    """
    a_h = np.exp(1j * np.pi * np.arange(N_h) * np.cos(elevation) * np.sin(azimuth))
    a_v = np.exp(1j * np.pi * np.arange(N_v) * np.sin(elevation))
    return np.kron(a_v, a_h)


def _direction(src, dst):
    """(azimuth, elevation, distance) of dst as seen from src."""
    delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    dist = float(np.linalg.norm(delta))
    azimuth = float(np.arctan2(delta[1], delta[0]))
    elevation = float(np.arcsin(np.clip(delta[2] / dist, -1.0, 1.0)))
    return azimuth, elevation, dist


def _ula_angle(src, dst):
    """Broadside-referenced angle for an x-axis ULA at src looking at dst."""
    delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    dist = float(np.linalg.norm(delta))
    return float(np.arcsin(np.clip(delta[0] / dist, -1.0, 1.0)))


def _crandn(rng, *shape):
    """CN(0, 1) i.i.d. entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass
class ChannelEstimate:
    """Estimated channel set with stacked forms and error variances.

    D_hat[l][k] : (M_B, M_U)  direct AP l -> UE k
    G_hat[r][k] : (N, M_U)    IRS r -> UE k
    S_hat[l][r] : (N, M_B)    AP l -> IRS r
    G_hat_k[k]  : (R*N, M_U)  row-stack of G_hat[:, k]
    S_hat_l[l]  : (R*N, M_B)  row-stack of S_hat[l, :]
    delta2_*    : per-entry CSI error variances
    """

    config: SystemConfig
    D_hat: list
    G_hat: list
    S_hat: list
    G_hat_k: list = field(default=None)
    S_hat_l: list = field(default=None)
    delta2_D: np.ndarray = field(default=None)
    delta2_G: np.ndarray = field(default=None)
    delta2_S: np.ndarray = field(default=None)

    def __post_init__(self):
        cfg = self.config
        if self.G_hat_k is None:
            self.G_hat_k = [
                np.vstack([self.G_hat[r][k] for r in range(cfg.R)]) for k in range(cfg.K)
            ]
        if self.S_hat_l is None:
            self.S_hat_l = [
                np.vstack([self.S_hat[l][r] for r in range(cfg.R)]) for l in range(cfg.L)
            ]
        if self.delta2_D is None:
            self.delta2_D = np.array(
                [
                    [cfg.kappa2_D * np.sum(np.abs(self.D_hat[l][k]) ** 2) for k in range(cfg.K)]
                    for l in range(cfg.L)
                ]
            )
        if self.delta2_G is None:
            self.delta2_G = np.array(
                [cfg.kappa2_G * np.sum(np.abs(self.G_hat_k[k]) ** 2) for k in range(cfg.K)]
            )
        if self.delta2_S is None:
            self.delta2_S = np.array(
                [cfg.kappa2_S * np.sum(np.abs(self.S_hat_l[l]) ** 2) for l in range(cfg.L)]
            )


@dataclass
class ErrorSample:
    """One realization of the additive CSI errors (same shapes as estimates)."""

    D_bar: list   # [l][k] (M_B, M_U)
    G_bar: list   # [r][k] (N, M_U)
    S_bar: list   # [l][r] (N, M_B)
    G_bar_k: list  # [k] (R*N, M_U)
    S_bar_l: list  # [l] (R*N, M_B)


def generate_channels(config, placement, rng):
    """Draw one realization of the estimated channels.

    Direct channels are Rayleigh: i.i.d. CN(0, pl) entries. IRS-related
    channels are Rician with LOS components built from the array steering
    vectors of the actual geometry:

        sqrt(pl) * (sqrt(beta/(1+beta)) * LOS + sqrt(1/(1+beta)) * NLOS)
    """
    cfg = config
    aps, irss, ues = placement.ap_positions, placement.irs_positions, placement.ue_positions

    D_hat = []
    for l in range(cfg.L):
        row = []
        for k in range(cfg.K):
            dist = np.linalg.norm(aps[l] - ues[k])
            pl = path_loss(dist, cfg.p_D, cfg.C0_dB, cfg.d0)
            row.append(np.sqrt(pl) * _crandn(rng, cfg.M_B, cfg.M_U))
        D_hat.append(row)

    G_hat = []
    for r in range(cfg.R):
        row = []
        for k in range(cfg.K):
            dist = np.linalg.norm(irss[r] - ues[k])
            pl = path_loss(dist, cfg.p_G, cfg.C0_dB, cfg.d0)
            az, el, _ = _direction(irss[r], ues[k])
            a_irs = steering_upa(cfg.N_h, cfg.N_v, az, el)
            a_ue = steering_ula(cfg.M_U, _ula_angle(ues[k], irss[r]))
            los = np.outer(a_irs, a_ue.conj())
            nlos = _crandn(rng, cfg.N, cfg.M_U)
            w_los = np.sqrt(cfg.beta_G / (1.0 + cfg.beta_G))
            w_nlos = np.sqrt(1.0 / (1.0 + cfg.beta_G))
            row.append(np.sqrt(pl) * (w_los * los + w_nlos * nlos))
        G_hat.append(row)

    S_hat = []
    for l in range(cfg.L):
        row = []
        for r in range(cfg.R):
            dist = np.linalg.norm(aps[l] - irss[r])
            pl = path_loss(dist, cfg.p_S, cfg.C0_dB, cfg.d0)
            az, el, _ = _direction(irss[r], aps[l])
            a_irs = steering_upa(cfg.N_h, cfg.N_v, az, el)
            a_ap = steering_ula(cfg.M_B, _ula_angle(aps[l], irss[r]))
            los = np.outer(a_irs, a_ap.conj())
            nlos = _crandn(rng, cfg.N, cfg.M_B)
            w_los = np.sqrt(cfg.beta_S / (1.0 + cfg.beta_S))
            w_nlos = np.sqrt(1.0 / (1.0 + cfg.beta_S))
            row.append(np.sqrt(pl) * (w_los * los + w_nlos * nlos))
        S_hat.append(row)

    return ChannelEstimate(cfg, D_hat, G_hat, S_hat)


def sample_csi_error(estimate, rng):
    """Draw one CSI error realization.

    Entries are i.i.d. CN(0, delta^2) with the variance of the channel they
    perturb; the stacked IRS-link errors share one variance per stack.
    """
    cfg = estimate.config
    D_bar = [
        [
            np.sqrt(estimate.delta2_D[l, k]) * _crandn(rng, cfg.M_B, cfg.M_U)
            for k in range(cfg.K)
        ]
        for l in range(cfg.L)
    ]
    G_bar_k = [
        np.sqrt(estimate.delta2_G[k]) * _crandn(rng, cfg.RN, cfg.M_U) for k in range(cfg.K)
    ]
    S_bar_l = [
        np.sqrt(estimate.delta2_S[l]) * _crandn(rng, cfg.RN, cfg.M_B) for l in range(cfg.L)
    ]
    G_bar = [
        [G_bar_k[k][r * cfg.N : (r + 1) * cfg.N] for k in range(cfg.K)] for r in range(cfg.R)
    ]
    S_bar = [
        [S_bar_l[l][r * cfg.N : (r + 1) * cfg.N] for r in range(cfg.R)] for l in range(cfg.L)
    ]
    return ErrorSample(D_bar, G_bar, S_bar, G_bar_k, S_bar_l)
