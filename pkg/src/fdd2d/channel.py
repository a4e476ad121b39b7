"""Fading channel synthesis.

BS links use the finite-angular-dimension ULA model ``h = A_steer @ h_hat``
with ``h_hat ~ CN(0, I_P)``; links between single-antenna nodes are scalar
Rayleigh.  Composite gains carry the amplitude ``sqrt(L)`` so that
``E|g|^2 = L``.
"""
from dataclasses import dataclass

import numpy as np

from .topology import NetworkScenario, clamped_path_loss


@dataclass(frozen=True)
class SteeringConfig:
    num_antennas: int
    angular_dims: int
    antenna_spacing: float = 0.3

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be >= 1")
        if not 1 <= self.angular_dims <= self.num_antennas:
            raise ValueError("angular_dims must lie in [1, num_antennas]")
        if not self.antenna_spacing > 0:
            raise ValueError("antenna_spacing must be positive")

    @classmethod
    def half_angular(cls, num_antennas: int, antenna_spacing: float = 0.3) -> "SteeringConfig":
        """``P = A/2`` (at least one angular dimension)."""
        return cls(num_antennas, max(1, num_antennas // 2), antenna_spacing)


@dataclass(frozen=True)
class ChannelSet:
    """All composite gains of one drop.

    Index conventions: ``g_cc[l, b, m]`` BS ``l`` to cellular user ``m`` of
    cell ``b``; ``g_cd[b, n]`` BS ``b`` to D2D transceiver ``n``;
    ``g_dc[j, b, m]`` transceiver ``j`` to user ``(b, m)``; ``g_dd[j, n]``
    transceiver ``j`` to transceiver ``n`` (diagonal unused, stored as 0).
    """

    g_cc: np.ndarray  # (B, B, M, A)
    g_cd: np.ndarray  # (B, K, A)
    g_dc: np.ndarray  # (K, B, M)
    g_dd: np.ndarray  # (K, K)
    partner: np.ndarray  # (K,)

    @property
    def num_cells(self) -> int:
        return self.g_cc.shape[0]

    @property
    def users_per_cell(self) -> int:
        return self.g_cc.shape[2]

    @property
    def num_antennas(self) -> int:
        return self.g_cc.shape[3]

    @property
    def num_transceivers(self) -> int:
        return len(self.partner)

    @property
    def links_per_cell(self) -> int:
        return self.num_transceivers // (2 * self.num_cells)

    def without_d2d(self) -> "ChannelSet":
        B, A = self.num_cells, self.num_antennas
        M = self.users_per_cell
        return ChannelSet(
            g_cc=self.g_cc,
            g_cd=np.zeros((B, 0, A), dtype=complex),
            g_dc=np.zeros((0, B, M), dtype=complex),
            g_dd=np.zeros((0, 0), dtype=complex),
            partner=np.zeros(0, dtype=int),
        )

    def scaled(self, factor: float) -> "ChannelSet":
        """Every amplitude multiplied by ``factor``."""
        return ChannelSet(self.g_cc * factor, self.g_cd * factor, self.g_dc * factor,
                          self.g_dd * factor, self.partner)


def steering_vector(phi: float, A: int, w: float, P: int) -> np.ndarray:
    k = np.arange(A)
    return np.exp(-2j * np.pi * w * k * np.sin(phi)) / np.sqrt(P)


def steering_matrix(config: SteeringConfig) -> np.ndarray:
    """A x P matrix whose columns point at ``-pi/2 + p*pi/P``, p = 0..P-1."""
    P = config.angular_dims
    phis = -np.pi / 2 + np.arange(P) * np.pi / P
    return np.column_stack([
        steering_vector(phi, config.num_antennas, config.antenna_spacing, P) for phi in phis
    ])


def sample_complex_gaussian(rng: np.random.Generator, size=None) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian, unit variance."""
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return (re + 1j * im) / np.sqrt(2.0)


def sample_scalar_channel(rng: np.random.Generator, size=None):
    return sample_complex_gaussian(rng, size)


def sample_bs_channel(steering: np.ndarray, rng: np.random.Generator, count: int | None = None):
    """One (or ``count``) BS channel vectors ``steering @ h_hat``.

    With ``count`` the result has shape ``(count, A)``.
    """
    P = steering.shape[1]
    if count is None:
        return steering @ sample_complex_gaussian(rng, P)
    return (steering @ sample_complex_gaussian(rng, (P, count))).T


def _bs_channels(steering, shape, rng):
    # A == 1: omnidirectional BS, ordinary scalar fading
    if steering is None:
        return sample_complex_gaussian(rng, shape + (1,))
    n = int(np.prod(shape))
    return sample_bs_channel(steering, rng, n).reshape(shape + (steering.shape[0],))


def build_channel_set(scenario: NetworkScenario, config: SteeringConfig, rng: np.random.Generator,
                      C: float, alpha: float) -> ChannelSet:
    """Draw one block-fading realization for every directed link of ``scenario``.

    Each link family comes from its own child stream of ``rng`` so that the
    cellular channels of a drop do not depend on how many D2D links it has.
    """
    B, M = scenario.num_cells, scenario.users_per_cell
    K = len(scenario.partner)
    A = config.num_antennas
    steering = steering_matrix(config) if A > 1 else None
    rng_cc, rng_cd, rng_dc, rng_dd = rng.spawn(4)

    amp_cc = np.sqrt(clamped_path_loss(scenario.bs_to_cellular(), C, alpha))
    g_cc = amp_cc[..., None] * _bs_channels(steering, (B, B, M), rng_cc)

    if K == 0:
        empty = ChannelSet(g_cc, np.zeros((B, 0, A), complex), np.zeros((0, B, M), complex),
                           np.zeros((0, 0), complex), np.zeros(0, dtype=int))
        return empty

    amp_cd = np.sqrt(clamped_path_loss(scenario.bs_to_d2d(), C, alpha))
    g_cd = amp_cd[..., None] * _bs_channels(steering, (B, K), rng_cd)

    amp_dc = np.sqrt(clamped_path_loss(scenario.d2d_to_cellular(), C, alpha))
    g_dc = amp_dc * sample_scalar_channel(rng_dc, (K, B, M))

    d = scenario.d2d_to_d2d()
    np.fill_diagonal(d, 1.0)
    g_dd = np.sqrt(clamped_path_loss(d, C, alpha)) * sample_scalar_channel(rng_dd, (K, K))
    np.fill_diagonal(g_dd, 0.0)
    return ChannelSet(g_cc, g_cd, g_dc, g_dd, np.asarray(scenario.partner, dtype=int))
