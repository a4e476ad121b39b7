"""Iterative fractional-programming (quadratic transform) solver.

The sum-rate objective is a sum of ``log2(1 + A/B)`` terms.  Each ratio is
replaced by its quadratic transform (complex form for cellular links, real
form for D2D receive directions), which is concave in the beamformers and
D2D amplitudes once the auxiliary variables are fixed.  The outer loop
alternates the closed-form auxiliary update with an inner concave solve.

Inner solve.  D2D powers are handled through amplitudes ``s = sqrt(p)``; the
transformed arguments are concave quadratics in ``(V, s)``.  Each inner step
maximizes the weighted surrogate ``sum_k w_k t_k(V, s)`` with
``w_k = 1/(1 + t_k)`` at the current point (same gradient as the inner
objective), which separates into one ridge problem per BS and a clamp per
transceiver.  The step towards that maximizer is then backtracked on the
feasible segment until the inner objective increases sufficiently.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np

from . import metrics
from .metrics import NoiseModel

LN2 = np.log(2.0)


@dataclass(frozen=True)
class AuxiliaryVars:
    q_c: np.ndarray  # (B, M) complex
    q_d: np.ndarray  # (K,) real


@dataclass(frozen=True)
class SolverConfig:
    P_c: float
    P_d: float
    epsilon: float = 1e-5
    max_outer_iters: int = 200
    max_inner_iters: int = 500
    # inner stop: surrogate gain <= min(inner_tol * (1 + |objective|), epsilon / 100)
    inner_tol: float = 1e-6
    constraint_mode: str = "power"  # "power" | "qos"
    gamma_c: float = 1.0
    gamma_d: float = 1.0
    numerator: str = "partner"
    barrier_weight: float = 1e-3
    qos_attempts: int = 2

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not (self.P_c > 0 and self.P_d > 0):
            raise ValueError("P_c and P_d must be positive")
        if self.constraint_mode not in ("power", "qos"):
            raise ValueError(f"unknown constraint_mode {self.constraint_mode!r}")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class SolveResult:
    V: np.ndarray
    p: np.ndarray
    objective_trace: list
    final_sum_rate: float
    converged: bool
    iterations: int
    status: str = "converged"  # converged | max_iters | infeasible
    inner_warnings: int = 0
    qos_violations: int = 0
    sinr_cellular: np.ndarray = field(default=None, repr=False)
    sinr_d2d: np.ndarray = field(default=None, repr=False)


# ----------------------------------------------------------------------------
# quadratic transforms


def quadratic_transform_real(a, B, q):
    """``2 q a - q^2 B``; equals ``a^2 / B`` at ``q = a / B``."""
    return 2.0 * q * a - q * q * B


def quadratic_transform_complex(a, B, q):
    """``2 Re(conj(q) a) - |q|^2 B``; equals ``|a|^2 / B`` at ``q = a / B``."""
    return 2.0 * np.real(np.conj(q) * a) - np.abs(q) ** 2 * B


def _log2_1p(t):
    """log2(1 + t), -inf where the argument is not positive."""
    arg = 1.0 + np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(arg > 0, np.log2(np.where(arg > 0, arg, 1.0)), -np.inf)
    return out


def update_aux(channels, V, p, noise: NoiseModel, numerator: str = "partner") -> AuxiliaryVars:
    t = metrics.link_terms(channels, V, p, noise, numerator)
    q_c = t.cell_signal / (t.cell_interference + noise.sigma2)
    q_d = t.d2d_amplitude / (t.d2d_interference + t.self_interference + noise.sigma2)
    return AuxiliaryVars(q_c, q_d)


def transformed_objective(channels, V, p, aux: AuxiliaryVars, noise: NoiseModel,
                          numerator: str = "partner") -> float:
    t = metrics.link_terms(channels, V, p, noise, numerator)
    f_c = _log2_1p(quadratic_transform_complex(
        t.cell_signal, t.cell_interference + noise.sigma2, aux.q_c))
    f_d = _log2_1p(quadratic_transform_real(
        t.d2d_amplitude, t.d2d_interference + t.self_interference + noise.sigma2, aux.q_d))
    return float((f_c.sum() + f_d.sum()) / channels.num_cells)


# ----------------------------------------------------------------------------
# noise-normalized working problem


class _Problem:
    """Precomputed, noise-normalized arrays for one solve.

    Amplitudes are divided by ``sigma`` so the noise power is 1; every SINR
    and rate is unchanged.  Beamformers are handled in an orthonormal basis
    of the span of each BS's outgoing channels (``V = basis @ W``): components
    outside that span reach no receiver and only cost power.
    """

    def __init__(self, channels, noise: NoiseModel, config: SolverConfig, p_max):
        ch = channels.scaled(1.0 / np.sqrt(noise.sigma2))
        self.config = config
        self.beta = noise.beta / noise.sigma2  # residual SI power in noise units per watt
        B, M, A = ch.num_cells, ch.users_per_cell, ch.num_antennas
        K = ch.num_transceivers
        self.B, self.M, self.A, self.K = B, M, A, K
        self.P_c = float(config.P_c)
        self.p_max = np.asarray(p_max, dtype=float)
        self.s_max = np.sqrt(self.p_max)
        self.idx_b, self.idx_m = np.meshgrid(np.arange(B), np.arange(M), indexing="ij")

        H = np.concatenate([ch.g_cc.reshape(B, B * M, A), ch.g_cd], axis=1)  # rows g_k^T
        _, sv, Vh = np.linalg.svd(H, full_matrices=False)
        rank = int(max(1, (sv > 1e-10 * sv[:, :1]).sum(axis=1).max()))
        self.basis = np.swapaxes(Vh[:, :rank, :], 1, 2)  # (B, A, r), orthonormal columns
        bc = self.basis.conj()
        # reduced channels: basis^H g
        self.H = np.einsum("lar,lka->lkr", bc, H)  # (B, R, r)
        # conj-transposed blocks so that W @ Ht gives g^H w for every receiver
        self.Ht_cc = np.ascontiguousarray(np.swapaxes(self.H[:, :B * M], 1, 2).conj())
        self.Ht_cd = np.ascontiguousarray(np.swapaxes(self.H[:, B * M:], 1, 2).conj())
        self.g_own = self.H[:, :B * M].reshape(B, B, M, rank)[self.idx_b, self.idx_b, self.idx_m]
        self.own_index = self.idx_b * M + self.idx_m  # flat cellular receiver of (l, j)

        self.gdc2 = (np.abs(ch.g_dc) ** 2).reshape(K, B * M)
        self.gdd_int = metrics.d2d_interference_gains(ch)
        self.src = metrics.desired_source(ch, config.numerator)
        self.d_amp = np.abs(ch.g_dd[ch.partner, np.arange(K)]) if K else np.zeros(0)

        # receivers whose desired transmitter may be active
        self.active_d = self.p_max[self.src] > 0 if K else np.zeros(0, dtype=bool)
        self.qos = config.constraint_mode == "qos"

    def to_reduced(self, V):
        return np.einsum("lar,lma->lmr", self.basis.conj(), np.asarray(V, dtype=complex))

    def to_full(self, W):
        return np.einsum("lar,lmr->lma", self.basis, W)

    # --- signal terms (W: reduced beamformers, s: D2D amplitudes) -------------
    def terms(self, W, s):
        B, M = self.B, self.M
        Y = (W @ self.Ht_cc).reshape(B, M, B, M)  # Y[l, j, b, m] = g_cc[l,b,m]^H w[l,j]
        pw = Y.real ** 2 + Y.imag ** 2
        sig = Y[self.idx_b, self.idx_m, self.idx_b, self.idx_m]
        pw[self.idx_b, self.idx_m, self.idx_b, self.idx_m] = 0.0
        p = s * s
        I_c = pw.sum(axis=(0, 1))
        if self.K:
            I_c = I_c + (p @ self.gdc2).reshape(B, M)
            Z = W @ self.Ht_cd
            I_d = (Z.real ** 2 + Z.imag ** 2).sum(axis=(0, 1)) + p @ self.gdd_int
            amp = s[self.src] * self.d_amp
            D_d = I_d + self.beta * p + 1.0
        else:
            amp = D_d = np.zeros(0)
        return sig, I_c + 1.0, amp, D_d

    def aux(self, W, s):
        sig, D_c, amp, D_d = self.terms(W, s)
        return sig / D_c, amp / D_d

    def transformed(self, W, s, q_c, q_d):
        sig, D_c, amp, D_d = self.terms(W, s)
        t_c = 2.0 * np.real(np.conj(q_c) * sig) - np.abs(q_c) ** 2 * D_c
        t_d = 2.0 * q_d * amp - q_d * q_d * D_d
        return t_c, t_d

    def objective_from_t(self, t_c, t_d):
        """Inner objective: rate terms plus the QoS barrier in qos mode."""
        f = (_log2_1p(t_c).sum() + _log2_1p(t_d).sum()) / self.B
        if self.qos and np.isfinite(f):
            cfg = self.config
            slack_c = t_c - cfg.gamma_c
            slack_d = t_d[self.active_d] - cfg.gamma_d
            if np.any(slack_c <= 0) or np.any(slack_d <= 0):
                return -np.inf
            f += cfg.barrier_weight * (np.log(slack_c).sum() + np.log(slack_d).sum())
        return float(f)

    def weights(self, t_c, t_d):
        """d objective / d t_k at the current point."""
        w_c = 1.0 / (self.B * LN2 * (1.0 + t_c))
        w_d = 1.0 / (self.B * LN2 * (1.0 + t_d))
        if self.qos:
            mu = self.config.barrier_weight
            w_c = w_c + mu / (t_c - self.config.gamma_c)
            act = self.active_d
            w_d = w_d.copy()
            w_d[act] += mu / (t_d[act] - self.config.gamma_d)
        return w_c, w_d

    def sum_rate(self, W, s):
        sig, D_c, amp, D_d = self.terms(W, s)
        r = np.log2(1.0 + np.abs(sig) ** 2 / D_c).sum() + np.log2(1.0 + amp * amp / D_d).sum()
        return float(r / self.B)

    def outer_objective(self, W, s):
        """Inner objective at the optimal auxiliaries (rate, plus barrier in qos mode)."""
        q_c, q_d = self.aux(W, s)
        return self.objective_from_t(*self.transformed(W, s, q_c, q_d))

    # --- surrogate maximization -----------------------------------------------
    def surrogate_argmax(self, q_c, q_d, w_c, w_d, W, s):
        B, M, K = self.B, self.M, self.K
        # beamformers: per-BS ridge problems sharing one power multiplier
        r_c = (w_c * np.abs(q_c) ** 2).reshape(B * M)
        r_d = w_d * q_d * q_d
        r = np.concatenate([r_c, r_d])
        kappa = w_c * q_c  # linear term of v_lj is kappa_lj * g_own[l, j]
        Hw = np.swapaxes(self.H, 1, 2) * r[None, None, :]
        Q = Hw @ self.H.conj()  # (B, A, A): sum over all receivers of r_k g_k g_k^H
        Q = 0.5 * (Q + np.conj(np.swapaxes(Q, -1, -2)))
        W_new = _ridge_shared(Q, self.g_own, r_c.reshape(B, M), kappa, self.P_c)
        if W_new is None:
            # own-user terms removed explicitly, one eigendecomposition per user
            wts = np.broadcast_to(r, (B, M, r.size)).copy()
            wts[self.idx_b, self.idx_m, self.own_index] = 0.0
            Hw = np.swapaxes(self.H, 1, 2)[:, None, :, :] * wts[:, :, None, :]
            Q_own = Hw @ self.H.conj()[:, None, :, :]
            Q_own = 0.5 * (Q_own + np.conj(np.swapaxes(Q_own, -1, -2)))
            W_new = _ridge_per_user(Q_own, kappa[..., None] * self.g_own, self.P_c)

        if K:
            lin = np.bincount(self.src, weights=2.0 * w_d * q_d * self.d_amp, minlength=K)
            quad = self.gdc2 @ r_c + self.gdd_int @ r_d + self.beta * r_d
            with np.errstate(divide="ignore", invalid="ignore"):
                s_new = np.where(quad > 0, lin / (2.0 * np.where(quad > 0, quad, 1.0)),
                                 np.where(lin > 0, self.s_max, s))
            s_new = np.clip(s_new, 0.0, self.s_max)
        else:
            s_new = s
        return W_new, s_new

    def solve_inner(self, q_c, q_d, W, s):
        """Maximize the transformed objective for fixed auxiliaries.

        Returns ``(W, s, objective, warned)``.
        """
        cfg = self.config
        t_c, t_d = self.transformed(W, s, q_c, q_d)
        f = self.objective_from_t(t_c, t_d)
        warned = False
        for _ in range(cfg.max_inner_iters):
            w_c, w_d = self.weights(t_c, t_d)
            G0 = (w_c * t_c).sum() + (w_d * t_d).sum()
            W_hat, s_hat = self.surrogate_argmax(q_c, q_d, w_c, w_d, W, s)
            dW, ds = W_hat - W, s_hat - s
            tau = 1.0
            tc1, td1 = self.transformed(W_hat, s_hat, q_c, q_d)
            gain = (w_c * tc1).sum() + (w_d * td1).sum() - G0
            if not gain > min(cfg.inner_tol * (1.0 + abs(f)), 1e-2 * cfg.epsilon):
                break
            accepted = False
            for _ in range(40):
                if tau < 1.0:
                    W_try, s_try = W + tau * dW, s + tau * ds
                    tc1, td1 = self.transformed(W_try, s_try, q_c, q_d)
                else:
                    W_try, s_try = W_hat, s_hat
                f_try = self.objective_from_t(tc1, td1)
                if f_try >= f + 1e-4 * tau * gain:
                    accepted = True
                    break
                tau *= 0.5
            # the surrogate overshoots when users trade power; keep halving
            # while that still improves so the iterates do not zig-zag
            while accepted and tau > 1e-6:
                W_h, s_h = W + 0.5 * tau * dW, s + 0.5 * tau * ds
                tc_h, td_h = self.transformed(W_h, s_h, q_c, q_d)
                f_h = self.objective_from_t(tc_h, td_h)
                if not f_h > f_try:
                    break
                tau *= 0.5
                W_try, s_try, f_try, tc1, td1 = W_h, s_h, f_h, tc_h, td_h
            if not accepted or f_try <= f:
                warned = not accepted
                break
            W, s, f, t_c, t_d = W_try, s_try, f_try, tc1, td1
        else:
            warned = True
        return self._project(W, s) + (f, warned)

    def _project(self, W, s):
        # guard against round-off drift outside the feasible set
        pw = (np.abs(W) ** 2).sum(axis=(1, 2))
        over = pw > self.P_c
        if np.any(over):
            W = W * np.where(over, np.sqrt(self.P_c / np.where(over, pw, 1.0)), 1.0)[:, None, None]
        return W, np.clip(s, 0.0, self.s_max)


def _newton_multiplier(power_and_slope, P_c, lam0, hi, need):
    """Solve ``power(lam) = P_c`` for every BS flagged in ``need``.

    Newton on ``1/sqrt(power) - 1/sqrt(P_c)`` (concave, increasing) from the
    left, safeguarded by the bracket ``[lo, hi]``.
    """
    lam = np.where(need, lam0, 0.0)
    lo = np.zeros_like(lam)
    for _ in range(60):
        pw, dpw = power_and_slope(lam)
        done = ~need | (np.abs(pw / P_c - 1.0) < 1e-11) | (hi - lo <= 1e-15 * hi)
        if np.all(done):
            break
        lo = np.where(pw > P_c, np.maximum(lo, lam), lo)
        hi = np.where(pw < P_c, np.minimum(hi, lam), hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            phi = 1.0 / np.sqrt(pw) - 1.0 / np.sqrt(P_c)
            step = lam - phi / (-dpw / (2.0 * pw ** 1.5))
        ok = np.isfinite(step) & (step > lo) & (step < hi)
        lam = np.where(done, lam, np.where(ok, step, 0.5 * (lo + hi)))
    return np.where(need, lam, 0.0)


def _ridge_shared(Q, g, r, kappa, P_c, min_den=1e-6):
    """Per-BS ridge solve using one eigendecomposition per BS.

    User ``j`` of BS ``l`` maximizes ``2Re(conj(kappa_lj) g_lj^H v) - v^H
    (Q_l - r_lj g_lj g_lj^H) v``; the rank-one removal is applied with the
    Sherman-Morrison identity in the eigenbasis of ``Q_l``.  Returns None when
    the downdate is too ill-conditioned to trust.
    """
    e, U = np.linalg.eigh(Q)  # (B, A), (B, A, A)
    top = e.max(axis=1)
    if np.any(e.min(axis=1) <= 1e-12 * np.maximum(top, 1e-300)):
        return None
    gh = np.einsum("bai,bma->bmi", U.conj(), g)
    a2 = np.abs(gh) ** 2
    k2 = np.abs(kappa) ** 2

    def sums(lam):
        inv = 1.0 / (e + lam[:, None])[:, None, :]
        S1 = (a2 * inv).sum(-1)
        S2 = (a2 * inv ** 2).sum(-1)
        S3 = (a2 * inv ** 3).sum(-1)
        return S1, S2, S3, 1.0 - r * S1

    def power_and_slope(lam):
        S1, S2, S3, den = sums(lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            pw = k2 * S2 / den ** 2
            dpw = -2.0 * k2 * (S3 / den ** 2 + r * S2 ** 2 / den ** 3)
        return pw.sum(-1), dpw.sum(-1)

    lam = np.zeros(Q.shape[0])
    den0 = sums(lam)[3]
    if np.any(den0 < min_den):
        return None
    need = power_and_slope(lam)[0] > P_c
    if np.any(need):
        # for lam >= top every den >= 1/2, so power(hi) <= P_c
        hi = top + 2.0 * np.sqrt((k2 * a2.sum(-1)).sum(-1) / P_c)
        lam = _newton_multiplier(power_and_slope, P_c, lam, hi, need)
    den = sums(lam)[3]
    if np.any(den < min_den):
        return None
    coef = (kappa / den)[..., None] * gh / (e + lam[:, None])[:, None, :]
    V = np.einsum("bai,bmi->bma", U, coef)
    return _clip_bs_power(V, P_c)


def _clip_bs_power(V, P_c):
    pw = (np.abs(V) ** 2).sum(axis=(1, 2))
    over = pw > P_c
    if np.any(over):
        V = V * np.where(over, np.sqrt(P_c / np.where(over, pw, 1.0)), 1.0)[:, None, None]
    return V


def _ridge_per_user(Q, c, P_c):
    """For each BS l maximize ``sum_j 2Re(c_lj^H v_lj) - v_lj^H Q_lj v_lj``
    subject to ``sum_j |v_lj|^2 <= P_c``; ``v_lj = (Q_lj + lam_l I)^{-1} c_lj``.
    """
    e, U = np.linalg.eigh(Q)  # (B,M,A), (B,M,A,A)
    e = np.maximum(e, 0.0)
    ch = np.einsum("bmai,bma->bmi", U.conj(), c)
    c2 = np.abs(ch) ** 2
    tiny = 1e-14 * np.maximum(e.max(axis=(1, 2), initial=0.0), 1.0)

    def power_and_slope(lam):
        den = e + lam[:, None, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            pw = np.where(c2 > 0, c2 / den ** 2, 0.0).sum(axis=(1, 2))
            dpw = np.where(c2 > 0, -2.0 * c2 / den ** 3, 0.0).sum(axis=(1, 2))
        return pw, dpw

    lam = np.zeros(Q.shape[0])
    singular = np.any((e <= tiny[:, None, None]) & (c2 > 0), axis=(1, 2))
    need = singular | (power_and_slope(lam)[0] > P_c)
    if np.any(need):
        hi = np.sqrt(c2.sum(axis=(1, 2)) / P_c)  # power(hi) <= P_c
        lam = _newton_multiplier(power_and_slope, P_c, np.where(singular, 1e-12 * hi, 0.0),
                                 hi, need)
    den = e + lam[:, None, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(c2 > 0, ch / den, 0.0)
    return _clip_bs_power(np.einsum("bmai,bmi->bma", U, coef), P_c)


# ----------------------------------------------------------------------------
# public driver


def initialize(channels, config: SolverConfig, rng: np.random.Generator | None = None, p_max=None):
    """Matched-filter beams at equal per-user power and full D2D power."""
    B, M, A = channels.num_cells, channels.users_per_cell, channels.num_antennas
    idx_b, idx_m = np.meshgrid(np.arange(B), np.arange(M), indexing="ij")
    g = channels.g_cc[idx_b, idx_b, idx_m]
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    zero = norm[..., 0] == 0
    if np.any(zero):
        rng = rng if rng is not None else np.random.default_rng(0)
        fallback = rng.standard_normal((B, M, A)) + 1j * rng.standard_normal((B, M, A))
        g = np.where(zero[..., None], fallback, g)
        norm = np.linalg.norm(g, axis=-1, keepdims=True)
    V = g / norm * np.sqrt(config.P_c / M)
    if p_max is None:
        p = np.full(channels.num_transceivers, float(config.P_d))
    else:
        p = np.asarray(p_max, dtype=float).copy()
    return V, p


def solve_inner(channels, aux: AuxiliaryVars, noise: NoiseModel, config: SolverConfig, V, p,
                p_max=None):
    """One inner concave solve at fixed auxiliaries; returns ``(V, p, warned)``."""
    if p_max is None:
        p_max = np.full(channels.num_transceivers, float(config.P_d))
    prob = _Problem(channels, noise, config, p_max)
    sigma = np.sqrt(noise.sigma2)
    # auxiliaries scale with 1/sigma under noise normalization
    q_c = np.asarray(aux.q_c) * sigma
    q_d = np.asarray(aux.q_d) * sigma
    W0, s0 = prob.to_reduced(V), np.sqrt(np.asarray(p, float))
    W, s1, _, warned = prob.solve_inner(q_c, q_d, W0, s0)
    if np.array_equal(W, W0) and np.array_equal(s1, s0):
        return np.array(V, dtype=complex), np.array(p, dtype=float), warned  # no step taken
    return prob.to_full(W), np.minimum(s1 * s1, prob.p_max), warned


def run_fp(channels, noise: NoiseModel, config: SolverConfig, p_max=None,
           rng: np.random.Generator | None = None, init=None) -> SolveResult:
    """Alternate auxiliary updates and inner solves until the objective stalls.

    ``p_max`` optionally overrides the per-transceiver power cap (zero caps
    silence a transceiver, as in the half-duplex slots).  ``objective_trace``
    holds the objective at optimal auxiliaries (the network sum-rate in power
    mode) for the initial point and after every outer iteration.  ``init``
    replaces the matched-filter starting point with a feasible ``(V, p)``.
    """
    if p_max is None:
        p_max = np.full(channels.num_transceivers, float(config.P_d))
    p_max = np.minimum(np.asarray(p_max, dtype=float), config.P_d)
    V, p = initialize(channels, config, rng, p_max) if init is None else init

    if config.constraint_mode == "qos":
        return _run_qos(channels, noise, config, p_max, V, p, rng)
    prob = _Problem(channels, noise, config, p_max)
    return _iterate(prob, channels, noise, config, V, np.sqrt(p))


def _iterate(prob, channels, noise, config, V, s, status_if_stalled="max_iters"):
    W = prob.to_reduced(V)
    f = prob.outer_objective(W, s)
    trace = [f]
    converged = False
    warnings_count = 0
    it = 0
    for it in range(1, config.max_outer_iters + 1):
        q_c, q_d = prob.aux(W, s)
        W, s, _, warned = prob.solve_inner(q_c, q_d, W, s)
        warnings_count += int(warned)
        f_new = prob.outer_objective(W, s)
        trace.append(f_new)
        if abs(f_new - f) <= config.epsilon:
            converged = True
            break
        f = f_new
    p = np.minimum(s * s, prob.p_max)
    return _finish(channels, noise, config, prob.to_full(W), p, trace, converged, it,
                   "converged" if converged else status_if_stalled, warnings_count)


def _finish(channels, noise, config, V, p, trace, converged, iterations, status, warns):
    sc, sd = metrics.sinrs(channels, V, p, noise, config.numerator)
    active = (np.asarray(p)[metrics.desired_source(channels, config.numerator)] > 0
              if channels.num_transceivers else np.zeros(0, dtype=bool))
    violations = int(np.sum(sc < config.gamma_c) + np.sum(sd[active] < config.gamma_d))
    return SolveResult(
        V=V, p=p, objective_trace=[float(x) for x in trace],
        final_sum_rate=metrics.network_sum_rate(channels, V, p, noise, config.numerator),
        converged=converged, iterations=iterations, status=status,
        inner_warnings=warns, qos_violations=violations, sinr_cellular=sc, sinr_d2d=sd,
    )


def _strictly_qos_feasible(channels, noise, config, V, p, p_max):
    sc, sd = metrics.sinrs(channels, V, p, noise, config.numerator)
    src = metrics.desired_source(channels, config.numerator)
    active = p_max[src] > 0 if channels.num_transceivers else np.zeros(0, dtype=bool)
    return bool(np.all(sc > config.gamma_c) and np.all(sd[active] > config.gamma_d))


def _run_qos(channels, noise, config, p_max, V0, p0, rng):
    """QoS mode: barrier on the transformed SINR constraints.

    Needs a strictly feasible start; tries the initial point, then the
    power-only optimum, before reporting infeasibility.
    """
    from dataclasses import replace

    base = replace(config, constraint_mode="power")
    fallback = None
    for attempt in range(config.qos_attempts):
        if attempt == 0:
            V, p = V0, p0
        elif fallback is None:
            fallback = _iterate(_Problem(channels, noise, base, p_max), channels, noise, base,
                                V0, np.sqrt(p0))
            V, p = fallback.V, fallback.p
        else:
            break
        if _strictly_qos_feasible(channels, noise, config, V, p, p_max):
            prob = _Problem(channels, noise, config, p_max)
            return _iterate(prob, channels, noise, config, V, np.sqrt(p))
    if fallback is None:
        fallback = _iterate(_Problem(channels, noise, base, p_max), channels, noise, base, V0,
                            np.sqrt(p0))
    warnings.warn("no strictly QoS-feasible starting point found", RuntimeWarning, stacklevel=3)
    fallback.converged = False
    fallback.status = "infeasible"
    return fallback
