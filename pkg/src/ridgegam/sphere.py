"""Partitions of the unit sphere S^{d-1} into disjoint cells.

d=1 is the two-point sphere {+1, -1}, d=2 the circle (equal half-open arcs),
d=3 uses a Fibonacci lattice with nearest-center cells.  Each partition knows
its cell centers, surface measures and mesh size (maximal Euclidean distance
of a cell point from its center).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ridgegam.rsn import RsnParams, kink_geometry

GOLDEN_RATIO = (1.0 + np.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class SpherePartition:
    d: int                 # ambient dimension (sphere lives in R^d)
    centers: np.ndarray    # (m, d) unit vectors
    measures: np.ndarray   # (m,) surface measures of the cells
    mesh: float            # max_j sup_{s in cell j} ||s - center_j||

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    def assign(self, S: np.ndarray) -> np.ndarray:
        """Cell index for each row of S (unit vectors)."""
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if self.d == 1:
            # cells {+1} -> 0, {-1} -> 1
            return np.where(S[:, 0] > 0, 0, 1)
        if self.d == 2:
            theta = np.mod(np.arctan2(S[:, 1], S[:, 0]), 2.0 * np.pi)
            return np.minimum((theta // (2.0 * np.pi / self.m)).astype(int),
                              self.m - 1)
        # nearest center by maximal inner product; argmax keeps lowest index
        return np.argmax(S @ self.centers.T, axis=1)

    def summary_json(self) -> str:
        return json.dumps({
            "d": self.d,
            "centers": self.centers.tolist(),
            "measures": self.measures.tolist(),
            "mesh": self.mesh,
        })


def partition_pm1() -> SpherePartition:
    """S^0 = {+1, -1} with counting measure."""
    centers = np.array([[1.0], [-1.0]])
    return SpherePartition(d=1, centers=centers,
                           measures=np.array([1.0, 1.0]), mesh=0.0)


def partition_circle(m: int) -> SpherePartition:
    """m equal half-open arcs of the circle, centers at arc midpoints."""
    if m < 1:
        raise ValueError("m must be >= 1")
    mid = (np.arange(m) + 0.5) * 2.0 * np.pi / m
    centers = np.column_stack([np.cos(mid), np.sin(mid)])
    measures = np.full(m, 2.0 * np.pi / m)
    mesh = 2.0 * np.sin(np.pi / (2.0 * m))
    return SpherePartition(d=2, centers=centers, measures=measures, mesh=mesh)


def fibonacci_sphere(m: int) -> np.ndarray:
    """m roughly equidistributed points on S^2."""
    k = np.arange(m)
    z = 1.0 - (2.0 * k + 1.0) / m
    theta = 2.0 * np.pi * k / GOLDEN_RATIO
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def partition_fibonacci(m: int, n_mc: int = 100_000,
                        seed: int = 0) -> SpherePartition:
    """Fibonacci-lattice centers on S^2 with nearest-center cells.

    Surface measures and mesh are Monte Carlo estimates.
    """
    if m < 4:
        raise ValueError("m must be >= 4")
    centers = fibonacci_sphere(m)
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(n_mc, 3))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    idx = np.argmax(P @ centers.T, axis=1)
    counts = np.bincount(idx, minlength=m)
    measures = 4.0 * np.pi * counts / n_mc
    dist = np.linalg.norm(P - centers[idx], axis=1)
    mesh = float(dist.max())
    return SpherePartition(d=3, centers=centers, measures=measures, mesh=mesh)


def snap_directions(params: RsnParams, partition: SpherePartition) -> RsnParams:
    """Replace each kink direction by its cell center, keeping norms and kinks.

    The snapped network has v_k := center(cell(s_k)) * ||v_k||, the same
    biases, and W reset to zero for retraining.
    """
    geo = kink_geometry(params)
    idx = partition.assign(geo.s)
    V_snapped = partition.centers[idx] * geo.vnorm[:, None]
    return RsnParams(params.n, params.d, params.d_out, V_snapped,
                     params.b.copy(), np.zeros_like(params.W),
                     link=params.link, seed=params.seed)
