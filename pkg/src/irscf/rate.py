"""Objective evaluation: effective channels, SINR, sum-rate, and the
deterministic surrogate of the average rate under CSI errors.

Rates are natural-log (nats) internally; convert with :func:`nats_to_bits`
only at reporting time.

Stream convention: AP l sends d independent streams to UE k through
W[l][k], so user k receives L*d parallel streams in total. The auxiliary
receive filters Y[k] are therefore (M_U, L*d) and the rate weights U[k]
are (L*d, L*d); the l-th column block of Y[k] is the filter for the
streams coming from AP l.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BeamformerSet",
    "AuxiliaryState",
    "nats_to_bits",
    "effective_channel",
    "effective_channels",
    "error_channel",
    "interference_covariance",
    "instant_sum_rate",
    "avg_sum_rate_mc",
    "expectation_monte_carlo",
    "expectation_closed_form",
    "deterministic_covariance",
    "deterministic_rate",
    "surrogate_f1",
]

LN2 = float(np.log(2.0))

# fixed Monte Carlo chunk so the draw stream (and hence the result for a
# given seed) does not depend on available memory
_MC_CHUNK = 4096


def nats_to_bits(x):
    return x / LN2


@dataclass
class BeamformerSet:
    """Active beamformers W[l][k] of shape (M_B, d) and the phase vector
    theta of length R*N with |theta_n| = alpha."""

    W: list
    theta: np.ndarray

    @property
    def Theta(self):
        """Block-diagonal reflection matrix (diagonal, since each block is)."""
        return np.diag(self.theta)

    def per_ap_power(self):
        return np.array([sum(np.sum(np.abs(Wlk) ** 2) for Wlk in row) for row in self.W])

    def copy(self):
        return BeamformerSet(
            [[Wlk.copy() for Wlk in row] for row in self.W], self.theta.copy()
        )

    def validate(self, config, tol=1e-8):
        mod_err = np.max(np.abs(np.abs(self.theta) - config.alpha)) if self.theta.size else 0.0
        if mod_err > 1e-10:
            raise ValueError(f"phase modulus deviates from alpha by {mod_err:.2e}")
        powers = self.per_ap_power()
        if np.any(powers > config.P_max * (1.0 + tol)):
            raise ValueError(f"per-AP power exceeds budget: {powers}")
        return self


@dataclass
class AuxiliaryState:
    """Receive filters Y[k] (M_U, L*d) and rate weights U[k] (L*d, L*d)."""

    U: list
    Y: list

    def U_bar(self, k):
        return np.eye(self.U[k].shape[0]) + self.U[k]


def effective_channel(estimate, theta, l, k):
    """Estimated effective channel H_hat[l][k] (M_B, M_U), direct plus the
    IRS-cascaded part: H^H = D^H + G_k^H Theta S_l."""
    Hc = estimate.D_hat[l][k].copy()
    if theta is not None and theta.size and np.any(theta):
        Hc = Hc + estimate.S_hat_l[l].conj().T @ (
            theta.conj()[:, None] * estimate.G_hat_k[k]
        )
    return Hc


def effective_channels(estimate, theta):
    """All estimated effective channels as a [l][k] nested list."""
    cfg = estimate.config
    return [
        [effective_channel(estimate, theta, l, k) for k in range(cfg.K)]
        for l in range(cfg.L)
    ]


def error_channel(estimate, error, theta, l, k):
    """CSI error part of the actual channel (M_B, M_U)."""
    cfg = estimate.config
    Hb = error.D_bar[l][k].copy()
    if theta is not None and theta.size and np.any(theta):
        thc = theta.conj()[:, None]
        Hb = Hb + estimate.S_hat_l[l].conj().T @ (thc * error.G_bar_k[k])
        Hb = Hb + error.S_bar_l[l].conj().T @ (
            thc * (estimate.G_hat_k[k] + error.G_bar_k[k])
        )
    return Hb


def _gram(W_row):
    """Sum of W W^H over a list of beamformers (M_B, M_B)."""
    G = None
    for Wlk in W_row:
        G = Wlk @ Wlk.conj().T if G is None else G + Wlk @ Wlk.conj().T
    return G


def signal_covariance(estimate, beamformers, k, Hhat=None):
    """Own-signal covariance sum_l (H^H W_lk)(H^H W_lk)^H, shape (M_U, M_U)."""
    cfg = estimate.config
    S = np.zeros((cfg.M_U, cfg.M_U), dtype=complex)
    for l in range(cfg.L):
        H = Hhat[l][k] if Hhat is not None else effective_channel(estimate, beamformers.theta, l, k)
        T = H.conj().T @ beamformers.W[l][k]
        S += T @ T.conj().T
    return S


def stacked_signal(estimate, beamformers, k, Hhat=None):
    """Horizontal stack [H_1k^H W_1k, ..., H_Lk^H W_Lk], shape (M_U, L*d)."""
    cfg = estimate.config
    blocks = []
    for l in range(cfg.L):
        H = Hhat[l][k] if Hhat is not None else effective_channel(estimate, beamformers.theta, l, k)
        blocks.append(H.conj().T @ beamformers.W[l][k])
    return np.hstack(blocks)


def interference_covariance(estimate, error_sample, beamformers, k, Hhat=None):
    """Covariance of effective interference plus noise at UE k (M_U, M_U).

    Estimated-channel interference from other users' streams, plus the
    error-channel contribution of every stream, plus noise.
    """
    cfg = estimate.config
    V = cfg.sigma2 * np.eye(cfg.M_U, dtype=complex)
    for l in range(cfg.L):
        H = Hhat[l][k] if Hhat is not None else effective_channel(estimate, beamformers.theta, l, k)
        for i in range(cfg.K):
            if i == k:
                continue
            T = H.conj().T @ beamformers.W[l][i]
            V += T @ T.conj().T
        if error_sample is not None:
            Hb = error_channel(estimate, error_sample, beamformers.theta, l, k)
            for i in range(cfg.K):
                T = Hb.conj().T @ beamformers.W[l][i]
                V += T @ T.conj().T
    return V


def _logdet_psd(A):
    """log|A| for a Hermitian positive definite matrix."""
    sign, ld = np.linalg.slogdet(A)
    return ld


def instant_sum_rate(estimate, error_sample, beamformers):
    """Instantaneous sum-rate sum_k log|I + Gamma_k| in nats, computed via
    log|V + S| - log|V| (no explicit inverse)."""
    cfg = estimate.config
    Hhat = effective_channels(estimate, beamformers.theta)
    total = 0.0
    for k in range(cfg.K):
        V = interference_covariance(estimate, error_sample, beamformers, k, Hhat=Hhat)
        S = signal_covariance(estimate, beamformers, k, Hhat=Hhat)
        total += _logdet_psd(V + S) - _logdet_psd(V)
    return float(total)


def _draw_error_hbar_batch(estimate, theta, rng, batch):
    """Draw `batch` CSI error realizations and return the error channels
    H_bar as a nested list [l][k] of (batch, M_B, M_U) arrays.

    Draw order is fixed (D by (l, k), then G by k, then S by l) so results
    are reproducible for a given generator state.
    """
    cfg = estimate.config
    scale = 1.0 / np.sqrt(2.0)

    def crandn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * scale

    Db = [
        [np.sqrt(estimate.delta2_D[l, k]) * crandn(batch, cfg.M_B, cfg.M_U) for k in range(cfg.K)]
        for l in range(cfg.L)
    ]
    Gb = [np.sqrt(estimate.delta2_G[k]) * crandn(batch, cfg.RN, cfg.M_U) for k in range(cfg.K)]
    Sb = [np.sqrt(estimate.delta2_S[l]) * crandn(batch, cfg.RN, cfg.M_B) for l in range(cfg.L)]

    use_irs = theta is not None and theta.size and np.any(theta)
    thc = theta.conj()[:, None] if use_irs else None

    Hbar = []
    for l in range(cfg.L):
        ShH = estimate.S_hat_l[l].conj().T
        row = []
        for k in range(cfg.K):
            Hb = Db[l][k]
            if use_irs:
                SbH = Sb[l].conj().transpose(0, 2, 1)
                Hb = (
                    Hb
                    + ShH @ (thc * Gb[k])
                    + SbH @ (thc * (estimate.G_hat_k[k] + Gb[k]))
                )
            row.append(Hb)
        Hbar.append(row)
    return Hbar


def avg_sum_rate_mc(estimate, beamformers, rng, samples):
    """Monte Carlo average of the instantaneous sum-rate over CSI error
    draws. Returns (mean, std_error); std_error is None for samples == 1.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    cfg = estimate.config
    Hhat = effective_channels(estimate, beamformers.theta)
    grams = [_gram(beamformers.W[l]) for l in range(cfg.L)]
    # error-free part of V_k and the own-signal covariances are fixed
    base_V = []
    sig = []
    for k in range(cfg.K):
        base_V.append(interference_covariance(estimate, None, beamformers, k, Hhat=Hhat))
        sig.append(signal_covariance(estimate, beamformers, k, Hhat=Hhat))

    rates = np.empty(samples)
    done = 0
    while done < samples:
        batch = min(_MC_CHUNK, samples - done)
        Hbar = _draw_error_hbar_batch(estimate, beamformers.theta, rng, batch)
        total = np.zeros(batch)
        for k in range(cfg.K):
            X = np.zeros((batch, cfg.M_U, cfg.M_U), dtype=complex)
            for l in range(cfg.L):
                Hb = Hbar[l][k]
                X += Hb.conj().transpose(0, 2, 1) @ grams[l] @ Hb
            V = base_V[k][None, :, :] + X
            total += np.linalg.slogdet(V + sig[k][None, :, :])[1] - np.linalg.slogdet(V)[1]
        rates[done : done + batch] = total
        done += batch

    mean = float(np.mean(rates))
    if samples == 1:
        return mean, None
    return mean, float(np.std(rates, ddof=1) / np.sqrt(samples))


def _weighted_filter_outer(aux, k):
    """M_k = Y_k (I + U_k) Y_k^H, Hermitian (M_U, M_U)."""
    Yk = aux.Y[k]
    M = Yk @ aux.U_bar(k) @ Yk.conj().T
    return 0.5 * (M + M.conj().T)


def expectation_monte_carlo(estimate, beamformers, aux, rng, samples):
    """Monte Carlo estimate of the error-channel quadratic term

        E{ sum_k Tr((I+U_k) Y_k^H sum_{l,i} Hbar^H W_li W_li^H Hbar Y_k) }

    by direct sampling of the CSI errors. Validation oracle for
    :func:`expectation_closed_form`; shares nothing with it but the error
    model itself. Returns (mean, std_error).
    """
    cfg = estimate.config
    grams = [_gram(beamformers.W[l]) for l in range(cfg.L)]
    M = [_weighted_filter_outer(aux, k) for k in range(cfg.K)]

    vals = np.empty(samples)
    done = 0
    while done < samples:
        batch = min(_MC_CHUNK, samples - done)
        Hbar = _draw_error_hbar_batch(estimate, beamformers.theta, rng, batch)
        total = np.zeros(batch)
        for k in range(cfg.K):
            for l in range(cfg.L):
                Hb = Hbar[l][k]
                total += np.einsum(
                    "bpu,pq,bqv,vu->b", Hb.conj(), grams[l], Hb, M[k]
                ).real
        vals[done : done + batch] = total
        done += batch

    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / np.sqrt(samples)) if samples > 1 else None
    return mean, se


def expectation_closed_form(estimate, beamformers, aux):
    """Closed form of the expected error-channel quadratic term.

    Four contributions per (k, l): direct-error, IRS-UE error, AP-IRS
    error, and the doubly-faded cross term. Depends on the phase shifts
    only through |theta_n|^2 = alpha^2, never on their phases.
    """
    cfg = estimate.config
    a2 = cfg.alpha**2
    total = 0.0
    trW = [sum(np.sum(np.abs(Wlk) ** 2) for Wlk in beamformers.W[l]) for l in range(cfg.L)]
    trSWS = [
        sum(np.sum(np.abs(estimate.S_hat_l[l] @ Wlk) ** 2) for Wlk in beamformers.W[l])
        for l in range(cfg.L)
    ]
    for k in range(cfg.K):
        Mk = _weighted_filter_outer(aux, k)
        trM = float(np.trace(Mk).real)
        trGMG = float(np.einsum("nu,uv,nv->", estimate.G_hat_k[k], Mk, estimate.G_hat_k[k].conj()).real)
        for l in range(cfg.L):
            d2D = estimate.delta2_D[l, k]
            d2G = estimate.delta2_G[k]
            d2S = estimate.delta2_S[l]
            total += d2D * trM * trW[l]
            total += a2 * d2G * trM * trSWS[l]
            total += a2 * d2S * trGMG * trW[l]
            total += cfg.RN * a2 * d2S * d2G * trM * trW[l]
    return float(total)


def deterministic_covariance(estimate, beamformers, k, Hhat=None):
    """Deterministic-equivalent covariance at UE k.

    Returns (V_full, V_leave): the expected signal-plus-interference-plus-
    noise covariance with the CSI error terms replaced by their means, and
    the same with the own-signal part removed.
    """
    cfg = estimate.config
    if Hhat is None:
        Hhat = effective_channels(estimate, beamformers.theta)
    a2 = cfg.alpha**2

    J = np.zeros((cfg.M_U, cfg.M_U), dtype=complex)
    S_own = np.zeros((cfg.M_U, cfg.M_U), dtype=complex)
    scal = 0.0
    gram_coef = 0.0
    for l in range(cfg.L):
        trW = 0.0
        trSWS = 0.0
        for i in range(cfg.K):
            Wli = beamformers.W[l][i]
            T = Hhat[l][k].conj().T @ Wli
            J += T @ T.conj().T
            if i == k:
                S_own += T @ T.conj().T
            trW += float(np.sum(np.abs(Wli) ** 2))
            trSWS += float(np.sum(np.abs(estimate.S_hat_l[l] @ Wli) ** 2))
        d2D = estimate.delta2_D[l, k]
        d2G = estimate.delta2_G[k]
        d2S = estimate.delta2_S[l]
        scal += (d2D + a2 * cfg.RN * d2G * d2S) * trW + a2 * d2G * trSWS
        gram_coef += a2 * d2S * trW

    Gk = estimate.G_hat_k[k]
    V = J + scal * np.eye(cfg.M_U) + gram_coef * (Gk.conj().T @ Gk) + cfg.sigma2 * np.eye(cfg.M_U)
    V = 0.5 * (V + V.conj().T)
    V_leave = V - 0.5 * (S_own + S_own.conj().T)
    return V, V_leave


def deterministic_rate(estimate, beamformers, Hhat=None):
    """Deterministic-equivalent sum-rate sum_k [log|V| - log|V - S_k|] in
    nats; equals sum_k log|I + U_k| at the inner optimum of the filters."""
    cfg = estimate.config
    if Hhat is None:
        Hhat = effective_channels(estimate, beamformers.theta)
    total = 0.0
    for k in range(cfg.K):
        V, V_leave = deterministic_covariance(estimate, beamformers, k, Hhat=Hhat)
        total += _logdet_psd(V) - _logdet_psd(V_leave)
    return float(total)


def _logdet_herm(A):
    """log|A| via eigenvalues of the hermitized matrix; -inf if not PD."""
    w = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
    if np.any(w <= 0):
        return -np.inf
    return float(np.sum(np.log(w)))


def surrogate_f1(estimate, beamformers, aux, Hhat=None):
    """Surrogate objective: the fractional-programming transform of the
    average sum-rate with the CSI-error expectation in closed form.

    Concave in each block (filters, weights, beamformers, phases) with the
    others fixed; every solver update step maximizes it exactly.
    """
    cfg = estimate.config
    if Hhat is None:
        Hhat = effective_channels(estimate, beamformers.theta)
    total = 0.0
    for k in range(cfg.K):
        Uk = aux.U[k]
        Ub = aux.U_bar(k)
        Yk = aux.Y[k]
        T = stacked_signal(estimate, beamformers, k, Hhat=Hhat)
        J = np.zeros((cfg.M_U, cfg.M_U), dtype=complex)
        for l in range(cfg.L):
            for i in range(cfg.K):
                Tli = Hhat[l][k].conj().T @ beamformers.W[l][i]
                J += Tli @ Tli.conj().T
        total += _logdet_herm(Ub)
        total -= float(np.trace(Uk).real)
        total += 2.0 * float(np.trace(Ub @ (Yk.conj().T @ T)).real)
        total -= float(np.trace(Ub @ (Yk.conj().T @ J @ Yk)).real)
        total -= cfg.sigma2 * float(np.trace(Ub @ (Yk.conj().T @ Yk)).real)
    total -= expectation_closed_form(estimate, beamformers, aux)
    return float(total)
