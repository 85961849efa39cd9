"""Monte Carlo estimation of the curvature-penalty weighting.

For samples (v, b) from the first-layer initializer, let s = v/||v|| and
xi = -b/||v||.  The weighting of the function-space penalty is

    g_s(r) = p(s) * g_{xi|s}(r) * E[ ||v||^2 | xi = r, s ],

tabulated on a direction grid times a uniform position grid via a binned
product-kernel density estimate plus Nadaraya-Watson averaging.  The constant
gbar integrates s -> g_s(0) over the direction grid.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from ridgegam.rsn import InitDistribution
from ridgegam.sphere import SpherePartition, fibonacci_sphere

SUPPORT_MASS = 0.999
EPS_FLOOR_REL = 1e-8


class DegenerateWeightingError(RuntimeError):
    """The estimated weighting table vanishes everywhere."""


@dataclass(frozen=True)
class WeightGrid:
    """Tabulated weighting over a direction x position grid."""

    d: int
    directions: np.ndarray    # (nd, d) unit vectors
    dir_weights: np.ndarray   # (nd,) quadrature weights on the sphere
    positions: np.ndarray     # (J,) uniform grid
    g_table: np.ndarray       # (nd, J) estimated g_s(r)
    p_dir: np.ndarray         # (nd,) direction density (pmf for d=1)
    joint: np.ndarray         # (nd, J) density p(s) * g_{xi|s}(r)
    gbar: float
    support: np.ndarray       # (nd, 2) per-direction [C_l, C_u]
    n_samples: int
    bandwidth: tuple
    seed: int

    @property
    def h_pos(self) -> float:
        return float(self.positions[1] - self.positions[0])

    def g_at(self, dir_index: int, r) -> np.ndarray:
        """Linear interpolation of g along positions, 0 outside the grid."""
        return np.interp(np.asarray(r, dtype=float), self.positions,
                         self.g_table[dir_index], left=0.0, right=0.0)

    def eps_floor(self) -> float:
        return EPS_FLOOR_REL * float(self.g_table.max())

    def to_json(self) -> str:
        return json.dumps({
            "d": self.d,
            "directions": self.directions.tolist(),
            "dir_weights": self.dir_weights.tolist(),
            "positions": self.positions.tolist(),
            "g_table": self.g_table.tolist(),
            "p_dir": self.p_dir.tolist(),
            "gbar": self.gbar,
            "support": self.support.tolist(),
            "n_samples": self.n_samples,
            "bandwidth": list(self.bandwidth),
            "seed": self.seed,
        })

    def g_table_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["direction_index", "r", "g"])
            for i in range(self.directions.shape[0]):
                for j, r in enumerate(self.positions):
                    writer.writerow([i, repr(float(r)),
                                     repr(float(self.g_table[i, j]))])


@dataclass(frozen=True)
class CellWeights:
    """Per-cell discrete weighting for the finite-direction additive model."""

    positions: np.ndarray    # (J,)
    g_check: np.ndarray      # (m, J): g(center, r) * cell probability mass
    masses: np.ndarray       # (m,) probability mass of each cell
    support: np.ndarray      # (m, 2)
    gbar_check: float
    empty: np.ndarray        # (m,) bool, cells with no direction mass

    @property
    def h_pos(self) -> float:
        return float(self.positions[1] - self.positions[0])

    def g_at(self, cell: int, r) -> np.ndarray:
        return np.interp(np.asarray(r, dtype=float), self.positions,
                         self.g_check[cell], left=0.0, right=0.0)

    def eps_floor(self) -> float:
        return EPS_FLOOR_REL * float(self.g_check.max())

    def to_json(self) -> str:
        return json.dumps({
            "positions": self.positions.tolist(),
            "g_check": self.g_check.tolist(),
            "masses": self.masses.tolist(),
            "support": self.support.tolist(),
            "gbar_check": self.gbar_check,
            "empty": self.empty.tolist(),
        })


def direction_grid(d: int, nd: int):
    """Deterministic direction grid and sphere quadrature weights."""
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
        return dirs, np.array([1.0, 1.0])
    if d == 2:
        theta = (np.arange(nd) + 0.5) * 2.0 * np.pi / nd
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
        return dirs, np.full(nd, 2.0 * np.pi / nd)
    if d == 3:
        dirs = fibonacci_sphere(nd)
        return dirs, np.full(nd, 4.0 * np.pi / nd)
    raise ValueError("only d in {1, 2, 3} supported")


def _silverman(x: np.ndarray) -> float:
    # Robust spread (std vs IQR/1.34) so heavy-tailed samples do not
    # oversmooth the bulk of the distribution.
    q1, q3 = np.quantile(x, [0.25, 0.75])
    sigma = min(float(np.std(x)), (q3 - q1) / 1.34)
    return 1.06 * sigma * x.size ** (-0.2)


def _dir_kernel(d: int, dirs: np.ndarray, dir_weights: np.ndarray,
                h_dir: float) -> np.ndarray:
    """Column-normalized smoothing kernel between direction-grid nodes."""
    nd = dirs.shape[0]
    if d == 1:
        return np.eye(2)
    if d == 2:
        theta = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2.0 * np.pi)
        diff = theta[:, None] - theta[None, :]
        diff = np.mod(diff + np.pi, 2.0 * np.pi) - np.pi
        K = np.exp(-0.5 * (diff / h_dir) ** 2)
    else:
        cosang = np.clip(dirs @ dirs.T, -1.0, 1.0)
        psi = np.arccos(cosang)
        K = np.exp(-0.5 * (psi / h_dir) ** 2)
    norm = dir_weights @ K  # integral of each column over the sphere grid
    return K / norm[None, :]


def _pos_kernel(positions: np.ndarray, h: float) -> np.ndarray:
    diff = positions[:, None] - positions[None, :]
    K = np.exp(-0.5 * (diff / h) ** 2)
    h_pos = positions[1] - positions[0]
    return K / (h_pos * K.sum(axis=0))[None, :]


def estimate_weighting(init: InitDistribution, d: int, dir_grid: int = 64,
                       pos_grid: int = 128, n_samples: int = 200_000,
                       bandwidth: tuple | None = None) -> WeightGrid:
    """Tabulate g_s(r), the direction density and gbar from MC samples."""
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    rng = np.random.default_rng(init.seed)
    V, b = init.draw(rng, n_samples, d)
    vnorm = np.linalg.norm(V, axis=1)
    keep = vnorm > 0
    V, b, vnorm = V[keep], b[keep], vnorm[keep]
    if vnorm.size == 0:
        raise DegenerateWeightingError("degenerate weighting")
    S = V / vnorm[:, None]
    xi = -b / vnorm
    v2 = vnorm ** 2

    dirs, dir_weights = direction_grid(d, dir_grid)
    nd = dirs.shape[0]

    # Quantile clip plus a robust IQR cap: kink positions -b/|v| are heavy
    # tailed, and letting rare outliers set the span would leave too few
    # nodes where the bulk of the mass sits.  Samples beyond the grid are
    # binned into the end nodes so total mass is preserved.
    lo, hi = np.quantile(xi, [0.0005, 0.9995])
    q1, med, q3 = np.quantile(xi, [0.25, 0.5, 0.75])
    iqr = max(q3 - q1, 1e-12)
    lo = max(lo, med - 10.0 * iqr)
    hi = min(hi, med + 10.0 * iqr)
    margin = 0.05 * (hi - lo) + 1e-12
    positions = np.linspace(lo - margin, hi + margin, pos_grid)
    h_pos_cell = positions[1] - positions[0]

    if bandwidth is None:
        h_r = max(_silverman(xi), h_pos_cell)
        if d == 1:
            h_dir = 0.0
        elif d == 2:
            theta = np.mod(np.arctan2(S[:, 1], S[:, 0]), 2.0 * np.pi)
            h_dir = max(_silverman(theta), 2.0 * np.pi / nd)
        else:
            h_dir = max(1.06 * S.shape[0] ** (-0.2), 2.0 * np.sqrt(np.pi / nd))
    else:
        h_dir, h_r = bandwidth

    # nearest-node binning
    if d == 1:
        di = np.where(S[:, 0] > 0, 0, 1)
    elif d == 2:
        theta = np.mod(np.arctan2(S[:, 1], S[:, 0]), 2.0 * np.pi)
        di = np.minimum((theta // (2.0 * np.pi / nd)).astype(int), nd - 1)
    else:
        di = np.argmax(S @ dirs.T, axis=1)
    pi = np.clip(np.rint((xi - positions[0]) / h_pos_cell).astype(int),
                 0, pos_grid - 1)
    flat = di * pos_grid + pi
    H = np.bincount(flat, minlength=nd * pos_grid).reshape(nd, pos_grid)
    Hv = np.bincount(flat, weights=v2,
                     minlength=nd * pos_grid).reshape(nd, pos_grid)

    Kd = _dir_kernel(d, dirs, dir_weights, h_dir)
    Kr = _pos_kernel(positions, h_r)
    denom = Kd @ H.astype(float) @ Kr.T
    joint = denom / S.shape[0]
    num = Kd @ Hv @ Kr.T
    with np.errstate(divide="ignore", invalid="ignore"):
        e2 = np.where(denom > 0, num / np.maximum(denom, 1e-300), 0.0)
    g_table = joint * e2
    if not np.any(g_table > 0):
        raise DegenerateWeightingError("degenerate weighting")

    p_dir = joint.sum(axis=1) * h_pos_cell

    # per-direction support: smallest interval holding SUPPORT_MASS of the
    # smoothed conditional mass, padded by one grid cell
    support = np.zeros((nd, 2))
    for i in range(nd):
        mass = joint[i]
        tot = mass.sum()
        if tot <= 0:
            support[i] = [np.nan, np.nan]
            continue
        cum = np.cumsum(mass) / tot
        a = int(np.searchsorted(cum, (1.0 - SUPPORT_MASS) / 2.0))
        z = int(np.searchsorted(cum, 1.0 - (1.0 - SUPPORT_MASS) / 2.0))
        a = max(a - 1, 0)
        z = min(z + 1, pos_grid - 1)
        support[i] = [positions[a], positions[z]]

    g0 = np.array([np.interp(0.0, positions, g_table[i]) for i in range(nd)])
    gbar_val = float(dir_weights @ g0)
    if gbar_val <= 0:
        raise DegenerateWeightingError("gbar must be positive")

    return WeightGrid(d=d, directions=dirs, dir_weights=dir_weights,
                      positions=positions, g_table=g_table, p_dir=p_dir,
                      joint=joint, gbar=gbar_val, support=support,
                      n_samples=n_samples, bandwidth=(h_dir, h_r),
                      seed=init.seed)


def gbar(grid: WeightGrid) -> float:
    """Quadrature of s -> g_s(0) over the direction grid."""
    g0 = np.array([np.interp(0.0, grid.positions, grid.g_table[i])
                   for i in range(grid.directions.shape[0])])
    val = float(grid.dir_weights @ g0)
    if val <= 0:
        raise DegenerateWeightingError("gbar must be positive")
    return val


def mass_check(grid: WeightGrid) -> float:
    """Double quadrature of the estimated joint density (should be ~1)."""
    return float(grid.dir_weights @ grid.joint.sum(axis=1) * grid.h_pos)


def cell_weights(grid: WeightGrid, partition: SpherePartition) -> CellWeights:
    """Discrete weighting per partition cell.

    For cell center c: g_check_c(r) = g(c, r) * P[s in cell], where
    g(c, r) = g_table(c, r) / p(c) strips the direction density off the
    tabulated weighting.
    """
    if partition.d != grid.d:
        raise ValueError("partition and grid dimension mismatch")
    idx = partition.assign(grid.directions)
    m = partition.m
    J = grid.positions.size
    g_check = np.zeros((m, J))
    masses = np.zeros(m)
    support = np.full((m, 2), np.nan)
    empty = np.zeros(m, dtype=bool)
    nearest = partition.centers @ grid.directions.T  # (m, nd)
    for c in range(m):
        members = np.flatnonzero(idx == c)
        if members.size == 0:
            empty[c] = True
            continue
        masses[c] = float(grid.p_dir[members] @ grid.dir_weights[members])
        i_star = int(np.argmax(nearest[c]))
        if grid.p_dir[i_star] <= 0 or masses[c] <= 0:
            empty[c] = True
            continue
        g_check[c] = grid.g_table[i_star] / grid.p_dir[i_star] * masses[c]
        support[c] = grid.support[i_star]
    gbar_check = float(sum(np.interp(0.0, grid.positions, g_check[c])
                           for c in range(m)))
    if gbar_check <= 0:
        raise DegenerateWeightingError("gbar_check must be positive")
    return CellWeights(positions=grid.positions.copy(), g_check=g_check,
                       masses=masses, support=support,
                       gbar_check=gbar_check, empty=empty)
