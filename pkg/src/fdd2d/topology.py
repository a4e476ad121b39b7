"""Cell geometry, node drops and distance-based path loss.

Cells are pointy-top hexagons described by their circumradius (center to
vertex).  Adjacent centers are therefore ``sqrt(3) * radius`` apart.
"""
from dataclasses import dataclass

import numpy as np

MIN_DISTANCE = 1.0  # meters; path loss is evaluated at max(d, MIN_DISTANCE)


@dataclass(frozen=True)
class CellLayout:
    cell_centers: np.ndarray  # (B, 2)
    cell_radius: float

    @property
    def num_cells(self) -> int:
        return len(self.cell_centers)


@dataclass(frozen=True)
class NetworkScenario:
    """One random drop of cellular users and D2D transceivers.

    D2D transceivers ``0 .. B*N-1`` are the first ends of each link (cell
    major order) and ``B*N .. 2*B*N-1`` their partners, so that
    ``partner[n] = (n + B*N) % (2*B*N)``.
    """

    layout: CellLayout
    cellular_positions: np.ndarray  # (B, M, 2)
    d2d_positions: np.ndarray  # (2BN, 2)
    partner: np.ndarray  # (2BN,) int
    d2d_cell: np.ndarray  # (2BN,) cell index the link was dropped in
    link_distance: float

    @property
    def num_cells(self) -> int:
        return self.layout.num_cells

    @property
    def users_per_cell(self) -> int:
        return self.cellular_positions.shape[1]

    @property
    def links_per_cell(self) -> int:
        return len(self.partner) // (2 * self.num_cells)

    def without_d2d(self) -> "NetworkScenario":
        """Same drop with every D2D transceiver removed."""
        return NetworkScenario(
            layout=self.layout,
            cellular_positions=self.cellular_positions,
            d2d_positions=np.zeros((0, 2)),
            partner=np.zeros(0, dtype=int),
            d2d_cell=np.zeros(0, dtype=int),
            link_distance=self.link_distance,
        )

    # distances ------------------------------------------------------------
    def bs_to_cellular(self) -> np.ndarray:
        """(B_tx, B, M) distances from every BS to every cellular user."""
        c = self.layout.cell_centers
        diff = self.cellular_positions[None, :, :, :] - c[:, None, None, :]
        return np.linalg.norm(diff, axis=-1)

    def bs_to_d2d(self) -> np.ndarray:
        """(B, 2BN) distances from every BS to every D2D transceiver."""
        c = self.layout.cell_centers
        diff = self.d2d_positions[None, :, :] - c[:, None, :]
        return np.linalg.norm(diff, axis=-1)

    def d2d_to_cellular(self) -> np.ndarray:
        """(2BN, B, M) distances from every D2D transceiver to every cellular user."""
        diff = self.cellular_positions[None, :, :, :] - self.d2d_positions[:, None, None, :]
        return np.linalg.norm(diff, axis=-1)

    def d2d_to_d2d(self) -> np.ndarray:
        """(2BN, 2BN) distances between D2D transceivers (zero diagonal)."""
        diff = self.d2d_positions[None, :, :] - self.d2d_positions[:, None, :]
        return np.linalg.norm(diff, axis=-1)


def hex_radius_for_area(characteristic_radius: float) -> float:
    """Circumradius of the hexagon with area ``pi * characteristic_radius**2``."""
    return characteristic_radius * np.sqrt(2.0 * np.pi / (3.0 * np.sqrt(3.0)))


def generate_layout(num_cells: int, cell_radius: float) -> CellLayout:
    if int(num_cells) != num_cells or num_cells < 1:
        raise ValueError(f"num_cells must be a positive integer, got {num_cells!r}")
    if not cell_radius > 0:
        raise ValueError(f"cell_radius must be positive, got {cell_radius!r}")
    num_cells = int(num_cells)
    if num_cells == 1:
        return CellLayout(np.zeros((1, 2)), float(cell_radius))

    # hexagonal lattice of cell centers, filled outwards from the centroid of
    # a triangle of mutually adjacent cells
    spacing = np.sqrt(3.0) * cell_radius
    e1 = spacing * np.array([1.0, 0.0])
    e2 = spacing * np.array([0.5, np.sqrt(3.0) / 2.0])
    k = int(np.ceil(np.sqrt(num_cells))) + 2
    ij = np.array([(i, j) for i in range(-k, k + 1) for j in range(-k, k + 1)], dtype=float)
    pts = ij[:, :1] * e1 + ij[:, 1:] * e2
    origin = (e1 + e2) / 3.0
    rel = pts - origin
    dist = np.round(np.linalg.norm(rel, axis=1), 9)
    ang = np.mod(np.arctan2(rel[:, 1], rel[:, 0]) - np.pi / 2, 2 * np.pi)
    order = np.lexsort((np.round(ang, 9), dist))
    centers = rel[order[:num_cells]]
    return CellLayout(centers, float(cell_radius))


def in_hexagon(points: np.ndarray, center, radius: float) -> np.ndarray:
    """Containment test for a pointy-top hexagon of circumradius ``radius``."""
    rel = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    apothem = radius * np.sqrt(3.0) / 2.0
    inside = np.ones(rel.shape[:-1], dtype=bool)
    for theta in (0.0, np.pi / 3, 2 * np.pi / 3):
        proj = rel[..., 0] * np.cos(theta) + rel[..., 1] * np.sin(theta)
        inside &= np.abs(proj) <= apothem * (1 + 1e-12)
    return inside


def _uniform_in_hexagon(n: int, center, radius: float, rng: np.random.Generator) -> np.ndarray:
    # rejection sampling from the bounding box; acceptance ratio ~0.65
    half_w = radius * np.sqrt(3.0) / 2.0
    out = np.empty((0, 2))
    while len(out) < n:
        need = n - len(out)
        batch = int(need * 1.6) + 8
        cand = rng.uniform((-half_w, -radius), (half_w, radius), size=(batch, 2))
        cand = cand[in_hexagon(cand, (0.0, 0.0), radius)]
        out = np.concatenate([out, cand[:need]])
    return out + np.asarray(center, dtype=float)


def drop_cellular_users(layout: CellLayout, M: int, rng: np.random.Generator) -> np.ndarray:
    """Returns (B, M, 2) positions, uniform within each cell's hexagon."""
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M!r}")
    return np.stack([
        _uniform_in_hexagon(int(M), c, layout.cell_radius, rng) for c in layout.cell_centers
    ])


def drop_d2d_pairs(layout: CellLayout, N: int, link_distance: float, rng: np.random.Generator):
    """Drop ``N`` D2D links per cell.

    The first transceiver of each link is uniform in its cell; its partner sits
    at exactly ``link_distance`` in a uniformly random direction (possibly
    outside the cell).  Returns ``(positions, partner, cell_index)``.
    """
    if int(N) != N or N < 0:
        raise ValueError(f"N must be a non-negative integer, got {N!r}")
    if not link_distance > 0:
        raise ValueError(f"link_distance must be positive, got {link_distance!r}")
    N = int(N)
    B = layout.num_cells
    if N == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    first = np.concatenate([
        _uniform_in_hexagon(N, c, layout.cell_radius, rng) for c in layout.cell_centers
    ])
    theta = rng.uniform(0.0, 2 * np.pi, size=B * N)
    second = first + link_distance * np.column_stack([np.cos(theta), np.sin(theta)])
    positions = np.concatenate([first, second])
    L = B * N
    partner = (np.arange(2 * L) + L) % (2 * L)
    cells = np.tile(np.repeat(np.arange(B), N), 2)
    return positions, partner, cells


def drop_scenario(layout: CellLayout, M: int, N: int, link_distance: float,
                  rng: np.random.Generator) -> NetworkScenario:
    # independent child streams keep cellular positions identical across N
    cell_rng, d2d_rng = rng.spawn(2)
    users = drop_cellular_users(layout, M, cell_rng)
    pos, partner, cells = drop_d2d_pairs(layout, N, link_distance, d2d_rng)
    return NetworkScenario(layout, users, pos, partner, cells, float(link_distance))


def path_loss(distance, C: float, alpha: float):
    """Linear power gain ``C * d**(-alpha)``.

    Raises for non-positive distances; callers clamp at ``MIN_DISTANCE`` first.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss undefined at non-positive distance")
    out = C * d ** (-alpha)
    return out if out.ndim else float(out)


def clamped_path_loss(distance, C: float, alpha: float):
    return path_loss(np.maximum(distance, MIN_DISTANCE), C, alpha)
