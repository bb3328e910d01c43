"""Block coordinate descent solver for the robust joint beamforming design.

One outer iteration updates, in order: the receive filters Y, the rate
weights U, the per-AP transmit beamformers W (Lagrangian bisection), and
the IRS phase vector theta (element-wise coordinate ascent). Each step is
the exact maximizer of the surrogate objective over its block, so the
surrogate trace is non-decreasing with continuous phases.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .matops import hadamard, vecd
from .rate import (
    AuxiliaryState,
    BeamformerSet,
    deterministic_covariance,
    deterministic_rate,
    effective_channels,
    stacked_signal,
    surrogate_f1,
    _gram,
    _weighted_filter_outer,
)

__all__ = [
    "ThetaSubproblem",
    "SolverTrace",
    "update_Y",
    "update_U",
    "build_A",
    "update_W",
    "build_theta_subproblem",
    "aso_optimize",
    "project_discrete",
    "init_beamformers",
    "run_bcd",
]


@dataclass
class ThetaSubproblem:
    """Data of the reduced phase-shift problem
    max_theta  -theta^H Zcal theta + 2 Re{theta^H omega},  |theta_n| = alpha.

    Zcal = Z o Q^T is Hermitian PSD (Hadamard product of PSD factors);
    omega = vecd(E - C). Z, Q, C, E are cached for diagnostics.
    """

    Zcal: np.ndarray
    omega: np.ndarray
    Z: np.ndarray
    Q: np.ndarray
    C: np.ndarray
    E: np.ndarray

    def objective(self, theta):
        """rho(theta), real by construction."""
        quad = np.real(theta.conj() @ (self.Zcal @ theta))
        lin = 2.0 * np.real(theta.conj() @ self.omega)
        return float(-quad + lin)


@dataclass
class SolverTrace:
    """Per-iteration audit trail of one solver run."""

    f1: list = field(default_factory=list)
    rate_det: list = field(default_factory=list)       # deterministic-equivalent rate
    per_ap_power: list = field(default_factory=list)   # (L,) arrays
    rho: list = field(default_factory=list)            # theta-subproblem objective (None if no IRS step)
    bisect_residual: list = field(default_factory=list)  # max |g_l| over APs with lambda > 0
    modulus_error: list = field(default_factory=list)  # max ||theta_n| - alpha|
    n_iters: int = 0
    converged: bool = False
    wall_time: float = 0.0


def update_Y(estimate, beamformers, Hhat=None):
    """MMSE receive filters: Y_k = V_k^{-1} [H_1k^H W_1k, ..., H_Lk^H W_Lk]."""
    cfg = estimate.config
    if Hhat is None:
        Hhat = effective_channels(estimate, beamformers.theta)
    Y = []
    for k in range(cfg.K):
        V, _ = deterministic_covariance(estimate, beamformers, k, Hhat=Hhat)
        T = stacked_signal(estimate, beamformers, k, Hhat=Hhat)
        try:
            Y.append(np.linalg.solve(V, T))
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"receive-filter update: covariance solve failed for UE {k}") from exc
    return Y


def update_U(estimate, beamformers, Y=None, Hhat=None):
    """Rate weights from the leave-own-signal covariance:
    U_k = T_k^H (V_k - T_k T_k^H)^{-1} T_k, Hermitian PSD.

    Evaluated at the preceding filter optimum, this is the exact maximizer
    of the surrogate over U (Y enters only through that optimality).
    """
    cfg = estimate.config
    if Hhat is None:
        Hhat = effective_channels(estimate, beamformers.theta)
    U = []
    for k in range(cfg.K):
        _, V_leave = deterministic_covariance(estimate, beamformers, k, Hhat=Hhat)
        T = stacked_signal(estimate, beamformers, k, Hhat=Hhat)
        try:
            Uk = T.conj().T @ np.linalg.solve(V_leave, T)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"rate-weight update: covariance solve failed for UE {k}") from exc
        U.append(0.5 * (Uk + Uk.conj().T))
    return U


def build_A(estimate, aux, l, Hhat=None):
    """Quadratic coefficient of AP l's beamforming subproblem (M_B, M_B),
    Hermitian PSD: signal term plus the three CSI-error trace terms."""
    cfg = estimate.config
    if Hhat is None:
        raise ValueError("build_A requires the effective channels (pass Hhat)")
    a2 = cfg.alpha**2
    A = np.zeros((cfg.M_B, cfg.M_B), dtype=complex)
    scal = 0.0
    gram_coef = 0.0
    Sl = estimate.S_hat_l[l]
    for k in range(cfg.K):
        Mk = _weighted_filter_outer(aux, k)
        H = Hhat[l][k]
        A += H @ Mk @ H.conj().T
        trM = float(np.trace(Mk).real)
        trGMG = float(
            np.einsum("nu,uv,nv->", estimate.G_hat_k[k], Mk, estimate.G_hat_k[k].conj()).real
        )
        d2D = estimate.delta2_D[l, k]
        d2G = estimate.delta2_G[k]
        d2S = estimate.delta2_S[l]
        scal += (d2D + a2 * cfg.RN * d2G * d2S) * trM
        scal += a2 * d2S * trGMG
        gram_coef += a2 * d2G * trM
    A += scal * np.eye(cfg.M_B)
    if gram_coef:
        A += gram_coef * (Sl.conj().T @ Sl)
    return 0.5 * (A + A.conj().T)


def _power_of_lambda(lam, eigvals, Bt_sq):
    """sum_k ||(Lambda + lam I)^{-1} B_k||_F^2 given eigenbasis data.

    Bt_sq[k] holds |Q^H B_k|^2 row sums per eigenvalue. Zero eigenvalue
    with nonzero coefficient at lam = 0 gives infinite power.
    """
    denom = (eigvals + lam) ** 2
    num = Bt_sq
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(num > 0, num / denom, 0.0)
    if np.any((denom == 0) & (num > 0)):
        return np.inf
    return float(np.sum(terms))


def update_W(estimate, aux, config, Hhat=None, eps_g=None, eps_lambda=None, max_iter=200):
    """Per-AP beamformer update via the KKT system and bisection on the
    power multiplier (one independent problem per AP).

    W_lk(lambda) = (A_l + lambda I)^{-1} H_lk (Y_k U_bar_k)_l-block.
    lambda_l = 0 if the unconstrained solution is feasible, otherwise the
    root of g_l(lambda) = power_l(lambda) - P_max found by bisection.

    Returns (W, infos) where infos[l] records lambda, the residual
    g_l(lambda), the iteration count and the resulting power.
    """
    cfg = estimate.config
    if Hhat is None:
        raise ValueError("update_W requires the effective channels (pass Hhat)")
    if eps_g is None:
        eps_g = config.eps_bisect
    if eps_lambda is None:
        eps_lambda = config.eps_bisect
    P = config.P_max
    d = cfg.d

    # linear coefficients: block l of Y_k U_bar_k against H_lk
    PY = [aux.Y[k] @ aux.U_bar(k) for k in range(cfg.K)]

    W = [[None] * cfg.K for _ in range(cfg.L)]
    infos = []
    for l in range(cfg.L):
        A = build_A(estimate, aux, l, Hhat=Hhat)
        B = [Hhat[l][k] @ PY[k][:, l * d : (l + 1) * d] for k in range(cfg.K)]

        eigvals, Qv = np.linalg.eigh(A)
        eigvals = np.maximum(eigvals, 0.0)
        Bt = [Qv.conj().T @ Bk for Bk in B]
        # per-eigenvalue squared coefficient mass, summed over users/streams
        Bt_sq = np.zeros(cfg.M_B)
        for Btk in Bt:
            Bt_sq += np.sum(np.abs(Btk) ** 2, axis=1)

        def w_of(lam):
            # eigendirections with no linear coefficient get weight 0 (the
            # minimum-norm solution; limit of a vanishing diagonal ridge)
            denom = eigvals + lam
            with np.errstate(divide="ignore"):
                inv = np.where(Bt_sq > 0.0, 1.0 / denom, 0.0)
            return [Qv @ (inv[:, None] * Btk) for Btk in Bt]

        g0 = _power_of_lambda(0.0, eigvals, Bt_sq) - P
        if g0 <= 0.0:
            for k, Wk in enumerate(w_of(0.0)):
                W[l][k] = Wk
            infos.append({"lam": 0.0, "g": g0, "iters": 0, "power": g0 + P})
            continue

        lam_lb = 0.0
        lam_ub = float(np.sqrt(Bt_sq.sum() / P))
        it_guard = 0
        while _power_of_lambda(lam_ub, eigvals, Bt_sq) - P > 0.0:
            lam_ub *= 2.0
            it_guard += 1
            if it_guard > 200:
                raise RuntimeError(f"bisection bracket failure for AP {l}")

        lam = lam_ub
        g = _power_of_lambda(lam, eigvals, Bt_sq) - P
        iters = 0
        while iters < max_iter:
            mid = 0.5 * (lam_lb + lam_ub)
            gm = _power_of_lambda(mid, eigvals, Bt_sq) - P
            iters += 1
            if abs(gm) <= eps_g:
                lam, g = mid, gm
                break
            if gm <= 0.0:
                lam_ub = mid
            else:
                lam_lb = mid
            lam, g = lam_ub, _power_of_lambda(lam_ub, eigvals, Bt_sq) - P
            if lam_ub - lam_lb <= eps_lambda * max(1.0, lam_ub):
                break
        for k, Wk in enumerate(w_of(lam)):
            W[l][k] = Wk
        infos.append({"lam": lam, "g": g, "iters": iters, "power": g + P})
    return W, infos


def build_theta_subproblem(estimate, aux, W):
    """Reduce the phase-shift block of the surrogate to quadratic form.

    With M_k = Y_k U_bar_k Y_k^H and the per-AP beamformer Grams
    G_l = sum_i W_li W_li^H:

        Z = sum_k G_k M_k G_k^H          (IRS-UE side)
        Q = sum_l S_l G_l S_l^H          (AP-IRS side)
        E = sum_{k,l} G_k (Y_k U_bar_k)_l W_lk^H S_l^H
        C = sum_{k,l} G_k M_k D_lk^H G_l S_l^H

    The subproblem data (Zcal, omega) carry no CSI-error statistics: the
    expectation term of the surrogate is phase-independent.
    """
    cfg = estimate.config
    d = cfg.d
    RN = cfg.RN
    Z = np.zeros((RN, RN), dtype=complex)
    Q = np.zeros((RN, RN), dtype=complex)
    E = np.zeros((RN, RN), dtype=complex)
    C = np.zeros((RN, RN), dtype=complex)

    grams = [_gram(W[l]) for l in range(cfg.L)]
    for l in range(cfg.L):
        Sl = estimate.S_hat_l[l]
        Q += Sl @ grams[l] @ Sl.conj().T
    for k in range(cfg.K):
        Gk = estimate.G_hat_k[k]
        Mk = _weighted_filter_outer(aux, k)
        PY = aux.Y[k] @ aux.U_bar(k)
        Z += Gk @ Mk @ Gk.conj().T
        for l in range(cfg.L):
            Sl = estimate.S_hat_l[l]
            E += Gk @ PY[:, l * d : (l + 1) * d] @ W[l][k].conj().T @ Sl.conj().T
            C += Gk @ Mk @ estimate.D_hat[l][k].conj().T @ grams[l] @ Sl.conj().T
    Z = 0.5 * (Z + Z.conj().T)
    Q = 0.5 * (Q + Q.conj().T)
    Zcal = hadamard(Z, Q.T)
    omega = vecd(E - C)
    return ThetaSubproblem(Zcal=Zcal, omega=omega, Z=Z, Q=Q, C=C, E=E)


def aso_optimize(subproblem, theta_init, alpha, eps=1e-9, max_sweeps=1000, record=None):
    """Element-wise coordinate ascent on the phase-shift subproblem.

    Sweeps n = 1..R*N in ascending order, setting each coefficient to
    alpha * exp(j * arg(mu_n)) with mu_n = omega_n - sum_{m != n} Zcal_nm
    theta_m (the exact per-element maximizer; a zero mu leaves the element
    unchanged). Repeats until the objective changes by at most eps.

    `record`, if a list, receives the objective value after every single
    element update (for monotonicity audits).
    """
    Zc = subproblem.Zcal
    om = subproblem.omega
    n_el = om.size
    theta = theta_init.astype(complex).copy()
    if alpha == 0.0 or n_el == 0:
        return np.zeros(n_el, dtype=complex)

    s = Zc @ theta
    rho_prev = subproblem.objective(theta)
    for _ in range(max_sweeps):
        for n in range(n_el):
            mu = om[n] - (s[n] - Zc[n, n] * theta[n])
            if mu != 0.0:
                new = alpha * mu / abs(mu)
                diff = new - theta[n]
                if diff != 0.0:
                    s = s + Zc[:, n] * diff
                    theta[n] = new
            if record is not None:
                record.append(subproblem.objective(theta))
        rho = subproblem.objective(theta)
        if abs(rho - rho_prev) <= eps:
            break
        rho_prev = rho
    return theta


def project_discrete(theta, b, alpha):
    """Snap each phase to the nearest point of {2 pi g / 2^b}, preserving
    the modulus alpha; distance measured on the circle."""
    if b < 1:
        raise ValueError(f"b must be >= 1, got {b}")
    levels = 2**b
    step = 2.0 * np.pi / levels
    g = np.round(np.angle(theta) / step).astype(int) % levels
    return alpha * np.exp(1j * g * step)


def init_beamformers(config, rng):
    """Feasible random start: full-power CSCG beamformers per AP, uniform
    random phases at modulus alpha (snapped to the grid when b >= 1)."""
    cfg = config
    W = []
    for l in range(cfg.L):
        row = [
            (rng.standard_normal((cfg.M_B, cfg.d)) + 1j * rng.standard_normal((cfg.M_B, cfg.d)))
            for _ in range(cfg.K)
        ]
        power = sum(np.sum(np.abs(Wlk) ** 2) for Wlk in row)
        scale = np.sqrt(cfg.P_max / power)
        W.append([scale * Wlk for Wlk in row])
    phases = rng.uniform(0.0, 2.0 * np.pi, size=cfg.RN)
    theta = cfg.alpha * np.exp(1j * phases)
    if cfg.alpha == 0.0:
        theta = np.zeros(cfg.RN, dtype=complex)
    elif cfg.b >= 1:
        theta = project_discrete(theta, cfg.b, cfg.alpha)
    return BeamformerSet(W, theta)


def run_bcd(estimate, config, init, eps=None, max_iters=None):
    """Alternating solver over (Y, U, W, theta).

    Stops when the deterministic-equivalent rate changes by less than eps
    between consecutive iterations, or after max_iters. With b >= 1 each
    phase update is projected to the discrete grid and accepted only if it
    does not decrease the deterministic-equivalent rate. With alpha = 0 the
    phase step is skipped entirely.

    Returns (BeamformerSet, AuxiliaryState, SolverTrace).
    """
    cfg = estimate.config
    if eps is None:
        eps = config.eps_bcd
    if max_iters is None:
        max_iters = config.max_iters

    t0 = time.perf_counter()
    bf = init.copy()
    trace = SolverTrace()
    if max_iters == 0:
        aux = AuxiliaryState(
            update_U(estimate, bf), update_Y(estimate, bf)
        )
        trace.wall_time = time.perf_counter() - t0
        return bf, aux, trace

    Hhat = effective_channels(estimate, bf.theta)
    use_irs = cfg.alpha > 0.0 and cfg.RN > 0
    rate_prev = None
    aux = None

    for it in range(max_iters):
        try:
            Y = update_Y(estimate, bf, Hhat=Hhat)
            U = update_U(estimate, bf, Y, Hhat=Hhat)
            aux = AuxiliaryState(U, Y)

            rate_det = 0.0
            for k in range(cfg.K):
                w = np.linalg.eigvalsh(np.eye(U[k].shape[0]) + U[k])
                rate_det += float(np.sum(np.log(np.maximum(w, 1e-300))))

            Wnew, winfos = update_W(estimate, aux, config, Hhat=Hhat)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"solver aborted at iteration {it}: {exc}") from exc
        bf.W = Wnew

        rho_val = None
        if use_irs:
            sub = build_theta_subproblem(estimate, aux, bf.W)
            theta_cont = aso_optimize(sub, bf.theta, cfg.alpha, eps=config.eps_aso)
            if cfg.b >= 1:
                cand = project_discrete(theta_cont, cfg.b, cfg.alpha)
                Hh_cand = effective_channels(estimate, cand)
                r_cand = deterministic_rate(estimate, BeamformerSet(bf.W, cand), Hhat=Hh_cand)
                r_prev = deterministic_rate(estimate, BeamformerSet(bf.W, bf.theta), Hhat=Hhat)
                if r_cand >= r_prev:
                    bf.theta = cand
                    Hhat = Hh_cand
            else:
                bf.theta = theta_cont
                Hhat = effective_channels(estimate, bf.theta)
            rho_val = sub.objective(bf.theta)
        f1_val = surrogate_f1(estimate, bf, aux, Hhat=Hhat)

        if not np.isfinite(f1_val) or not np.isfinite(rate_det):
            raise RuntimeError(
                f"solver aborted at iteration {it}: non-finite objective "
                f"(f1={f1_val}, rate={rate_det})"
            )

        trace.f1.append(f1_val)
        trace.rate_det.append(rate_det)
        trace.per_ap_power.append(bf.per_ap_power())
        trace.rho.append(rho_val)
        lam_res = [abs(info["g"]) for info in winfos if info["lam"] > 0.0]
        trace.bisect_residual.append(max(lam_res) if lam_res else 0.0)
        trace.modulus_error.append(
            float(np.max(np.abs(np.abs(bf.theta) - cfg.alpha))) if bf.theta.size else 0.0
        )
        trace.n_iters = it + 1

        if rate_prev is not None and abs(rate_det - rate_prev) < eps:
            trace.converged = True
            break
        rate_prev = rate_det

    trace.wall_time = time.perf_counter() - t0
    return bf, aux, trace
