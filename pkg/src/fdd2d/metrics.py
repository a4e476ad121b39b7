"""SINR, link rate and network sum-rate evaluation for an operating point.

Beamformers ``V`` are complex arrays of shape ``(B, M, A)`` and D2D powers
``p`` are real arrays of shape ``(2BN,)`` in watts.

The D2D desired signal at receiver ``n`` arrives from its partner ``n'``.
By default its power is the partner's transmit power ``P_{n'}`` while the
residual self-interference uses the receiver's own power ``beta * P_n``.
``numerator="own"`` reproduces the literal reading that uses ``P_n`` for
both.
"""
from dataclasses import dataclass

import numpy as np

NUMERATOR_MODES = ("partner", "own")


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float
    beta: float = 0.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")


@dataclass(frozen=True)
class LinkTerms:
    """Per-receiver signal and interference components."""

    cell_signal: np.ndarray  # (B, M) complex, g_cc[b,b,m]^H v[b,m]
    cell_interference: np.ndarray  # (B, M)
    d2d_amplitude: np.ndarray  # (K,) sqrt(P_src) |g_dd[n', n]|
    d2d_interference: np.ndarray  # (K,) cellular-to-D2D + other D2D
    self_interference: np.ndarray  # (K,) beta * P_n


def desired_source(channels, numerator: str = "partner") -> np.ndarray:
    """Index of the transceiver whose power scales receiver n's desired signal."""
    if numerator == "partner":
        return channels.partner
    if numerator == "own":
        return np.arange(channels.num_transceivers)
    raise ValueError(f"numerator must be one of {NUMERATOR_MODES}, got {numerator!r}")


def d2d_interference_gains(channels) -> np.ndarray:
    """``|g_dd[j, n]|^2`` with the self and partner entries removed."""
    G = np.abs(channels.g_dd) ** 2
    K = channels.num_transceivers
    G[np.arange(K), np.arange(K)] = 0.0
    G[channels.partner, np.arange(K)] = 0.0
    return G


def _check_dims(channels, V, p):
    B, M, A = channels.num_cells, channels.users_per_cell, channels.num_antennas
    V = np.asarray(V)
    p = np.asarray(p, dtype=float)
    if V.shape != (B, M, A):
        raise ValueError(f"beamformers must have shape {(B, M, A)}, got {V.shape}")
    if p.shape != (channels.num_transceivers,):
        raise ValueError(f"power vector must have shape ({channels.num_transceivers},), got {p.shape}")
    return V, p


def link_terms(channels, V, p, noise: NoiseModel, numerator: str = "partner") -> LinkTerms:
    V, p = _check_dims(channels, V, p)
    B, M = channels.num_cells, channels.users_per_cell
    K = channels.num_transceivers

    # Y[l, j, b, m] = g_cc[l, b, m]^H v[l, j]
    Y = np.einsum("lbma,lja->ljbm", channels.g_cc.conj(), V)
    bs_pow = np.abs(Y) ** 2
    idx_b, idx_m = np.meshgrid(np.arange(B), np.arange(M), indexing="ij")
    signal = Y[idx_b, idx_m, idx_b, idx_m]
    bs_pow[idx_b, idx_m, idx_b, idx_m] = 0.0
    cell_int = bs_pow.sum(axis=(0, 1))
    if K:
        cell_int = cell_int + np.einsum("k,kbm->bm", p, np.abs(channels.g_dc) ** 2)

    if K:
        Z = np.einsum("lna,lja->ljn", channels.g_cd.conj(), V)
        d2d_int = (np.abs(Z) ** 2).sum(axis=(0, 1)) + p @ d2d_interference_gains(channels)
        src = desired_source(channels, numerator)
        amp = np.sqrt(p[src]) * np.abs(channels.g_dd[channels.partner, np.arange(K)])
        si = noise.beta * p
    else:
        d2d_int = amp = si = np.zeros(0)
    return LinkTerms(signal, cell_int, amp, d2d_int, si)


def sinrs(channels, V, p, noise: NoiseModel, numerator: str = "partner"):
    """All SINRs at once: ``(cellular (B, M), d2d (K,))``."""
    t = link_terms(channels, V, p, noise, numerator)
    cell = np.abs(t.cell_signal) ** 2 / (t.cell_interference + noise.sigma2)
    d2d = t.d2d_amplitude ** 2 / (t.d2d_interference + t.self_interference + noise.sigma2)
    return cell, d2d


def cellular_interference(channels, V, p, b: int, m: int) -> float:
    # noise does not enter the interference sum
    t = link_terms(channels, V, p, NoiseModel(1.0))
    return float(t.cell_interference[b, m])


def cellular_sinr(channels, V, p, noise: NoiseModel, b: int, m: int) -> float:
    return float(sinrs(channels, V, p, noise)[0][b, m])


def d2d_sinr(channels, V, p, noise: NoiseModel, n: int, numerator: str = "partner") -> float:
    if not 0 <= n < channels.num_transceivers:
        raise ValueError(f"transceiver {n} has no partner in this channel set")
    return float(sinrs(channels, V, p, noise, numerator)[1][n])


def rate(sinr):
    return np.log2(1.0 + np.asarray(sinr))


def link_rates(channels, V, p, noise: NoiseModel, numerator: str = "partner"):
    """Cellular rates ``(B, M)`` and FD link rates ``(B*N,)`` in bit/s/Hz.

    Link ``i`` joins transceivers ``first[i]`` and ``partner[first[i]]``; its
    rate sums both receive directions.
    """
    cell, d2d = sinrs(channels, V, p, noise, numerator)
    first = link_heads(channels)
    d2d_rate = rate(d2d)
    return rate(cell), d2d_rate[first] + d2d_rate[channels.partner[first]]


def link_heads(channels) -> np.ndarray:
    K = channels.num_transceivers
    return np.flatnonzero(np.arange(K) < channels.partner)


def network_sum_rate(channels, V, p, noise: NoiseModel, numerator: str = "partner") -> float:
    """Per-cell average of all cellular and D2D link rates."""
    cell, d2d = link_rates(channels, V, p, noise, numerator)
    return float((cell.sum() + d2d.sum()) / channels.num_cells)


def per_bs_power(V) -> np.ndarray:
    return (np.abs(np.asarray(V)) ** 2).sum(axis=(1, 2))


def is_feasible(V, p, P_c: float, p_max, tol: float = 1e-9) -> bool:
    """Power constraints only: per-BS sum power and per-transceiver box."""
    p = np.asarray(p)
    ok_bs = np.all(per_bs_power(V) <= P_c * (1 + tol))
    ok_p = np.all(p >= 0) and np.all(p <= np.asarray(p_max) * (1 + tol))
    return bool(ok_bs and ok_p)
