"""Additive spline models with a weighted second-difference penalty.

A profile function per direction is represented by node values on a shared
uniform position grid.  The fit minimizes

    sum_i loss(y_i, linkinv( sum_c phi_c(<s_c, x_i>) ))
    + lam * gbar * sum_c h * sum_j |D2 phi_c(r_j)|^2 / max(g_c(r_j), eps)

over node values, subject to the class constraints: phi_c vanishes left of
its weighting support and has zero second difference outside it (affine
continuation to the right).  Eliminating the constrained nodes leaves a
sparse, strictly convex quadratic for the squared loss.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.linalg import spsolve

from ridgegam.rsn import IDENTITY, LinkKind
from ridgegam.sphere import SpherePartition
from ridgegam.train import DatasetLoss, _loss_and_grad
from ridgegam.weighting import CellWeights, WeightGrid

MIN_SUPPORT_NODES = 8


class GridTooCoarseError(ValueError):
    pass


@dataclass
class ProfileSet:
    """Per-direction profile functions on a shared uniform position grid."""

    directions: np.ndarray    # (m, d)
    positions: np.ndarray     # (J+1,) uniform grid
    phi: np.ndarray           # (m, J+1, d_out) node values
    supp: np.ndarray          # (m, 2) weighting support per direction
    lam: float
    gbar_used: float
    eps: float
    dir_coeffs: np.ndarray | None = None  # quadrature weights; None = sum

    @property
    def h(self) -> float:
        return float(self.positions[1] - self.positions[0])

    @property
    def m(self) -> int:
        return self.directions.shape[0]

    def coeffs(self) -> np.ndarray:
        if self.dir_coeffs is None:
            return np.ones(self.m)
        return self.dir_coeffs

    def profile_values(self, c: int, t: np.ndarray) -> np.ndarray:
        """Piecewise-linear evaluation with linear right-extrapolation."""
        return _interp_linear(self.positions, self.phi[c], np.asarray(t, float))

    def profile_slopes(self, c: int, t: np.ndarray) -> np.ndarray:
        r = self.positions
        h = self.h
        k = np.clip(np.floor((np.asarray(t, float) - r[0]) / h).astype(int),
                    0, r.size - 2)
        return (self.phi[c][k + 1] - self.phi[c][k]) / h

    def to_csv(self, path) -> None:
        d_out = self.phi.shape[2]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["direction_index", "r"]
                            + [f"phi_{j}" for j in range(d_out)])
            for c in range(self.m):
                for j, r in enumerate(self.positions):
                    writer.writerow([c, repr(float(r))]
                                    + [repr(float(v)) for v in self.phi[c, j]])


def _interp_linear(r: np.ndarray, nodes: np.ndarray, t: np.ndarray):
    h = r[1] - r[0]
    k = np.clip(np.floor((t - r[0]) / h).astype(int), 0, r.size - 2)
    w = (t - r[k]) / h
    return nodes[k] + w[..., None] * (nodes[k + 1] - nodes[k])


@dataclass
class AgamSolution:
    """Solved additive model: profiles plus objective decomposition."""

    profiles: ProfileSet
    link: LinkKind
    objective: float
    loss: float
    penalty: float
    iterations: int = 0
    converged: bool = True

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return eval_agam(self, X)

    def grad(self, X: np.ndarray) -> np.ndarray:
        """Jacobians (m, d_out, d); left-continuous segment convention."""
        X = np.atleast_2d(np.asarray(X, float))
        p = self.profiles
        coeff = p.coeffs()
        d = p.directions.shape[1]
        d_out = p.phi.shape[2]
        Z = np.zeros((X.shape[0], d_out))
        J = np.zeros((X.shape[0], d_out, d))
        for c in range(p.m):
            t = X @ p.directions[c]
            Z += coeff[c] * p.profile_values(c, t)
            sl = p.profile_slopes(c, t)          # (mpts, d_out)
            J += coeff[c] * sl[:, :, None] * p.directions[c][None, None, :]
        dz = self.link.inverse_deriv(Z)          # (mpts, d_out)
        return dz[:, :, None] * J

    def summary_json(self) -> str:
        return json.dumps({
            "objective": self.objective,
            "loss": self.loss,
            "penalty": self.penalty,
            "lambda": self.profiles.lam,
            "gbar_used": self.profiles.gbar_used,
            "n_directions": int(self.profiles.m),
            "grid_step": self.profiles.h,
            "iterations": self.iterations,
            "converged": self.converged,
        })


def eval_agam(sol: AgamSolution, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    p = sol.profiles
    coeff = p.coeffs()
    Z = 0.0
    for c in range(p.m):
        t = X @ p.directions[c]
        Z = Z + coeff[c] * p.profile_values(c, t)
    return sol.link.inverse(Z)


def _cell_structure(r: np.ndarray, supp_lo: float, supp_hi: float):
    """Node index ranges for one direction.

    Returns (zero_end, free_lo, free_hi) with nodes <= zero_end fixed at 0,
    free nodes in [free_lo, free_hi], and nodes > free_hi affine in the last
    two free nodes.
    """
    tol = 1e-12 * max(1.0, abs(supp_lo), abs(supp_hi))
    a = int(np.searchsorted(r, supp_lo - tol)) - 1   # last node < supp_lo
    b = int(np.searchsorted(r, supp_hi + tol, side="right")) - 1
    a = max(a, 0)
    b = min(b, r.size - 2)
    # zero second difference at node a forces phi[a+1] = 0 as well
    return a + 1, a + 2, b + 1


def _build_direction_matrices(r: np.ndarray, gvals: np.ndarray, supp, eps: float):
    """Elimination basis B, penalized second-difference operator and weights."""
    J1 = r.size
    h = float(r[1] - r[0])
    zero_end, lo, hi = _cell_structure(r, supp[0], supp[1])
    if hi < lo:
        raise GridTooCoarseError("grid too coarse")
    nf = hi - lo + 1
    rows, cols, vals = [], [], []
    for j in range(lo, hi + 1):
        rows.append(j); cols.append(j - lo); vals.append(1.0)
    for j in range(hi + 1, J1):
        t = j - hi
        rows.append(j); cols.append(nf - 1); vals.append(1.0 + t)
        if nf >= 2:
            rows.append(j); cols.append(nf - 2); vals.append(-float(t))
    B = sp.csr_matrix((vals, (rows, cols)), shape=(J1, nf))

    # penalized nodes: inside the weighting support, interior to the grid
    pen = np.arange(max(zero_end, 1), min(hi - 1, J1 - 2) + 1)
    pen = pen[(r[pen] >= supp[0] - 1e-12) & (r[pen] <= supp[1] + 1e-12)]
    if pen.size < MIN_SUPPORT_NODES - 2:
        raise GridTooCoarseError("grid too coarse")
    D = sp.csr_matrix(
        (np.tile([1.0, -2.0, 1.0], pen.size) / h ** 2,
         (np.repeat(np.arange(pen.size), 3),
          np.stack([pen - 1, pen, pen + 1], axis=1).ravel())),
        shape=(pen.size, J1))
    trap = np.ones(pen.size)
    trap[0] = trap[-1] = 0.5
    wpen = h * trap / np.maximum(gvals[pen], eps)
    return B, D, wpen, (zero_end, lo, hi)


def _data_matrix(t: np.ndarray, r: np.ndarray) -> sp.csr_matrix:
    """Linear interpolation of data projections onto grid nodes (sparse)."""
    h = float(r[1] - r[0])
    J1 = r.size
    k = np.clip(np.floor((t - r[0]) / h).astype(int), 0, J1 - 2)
    w = (t - r[k]) / h
    rows = np.repeat(np.arange(t.size), 2)
    cols = np.stack([k, k + 1], axis=1).ravel()
    vals = np.stack([1.0 - w, w], axis=1).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(t.size, J1))


def _prepare(dataset: DatasetLoss, partition: SpherePartition,
             weights: CellWeights, lam: float, grid_step: float | None):
    if lam <= 0:
        raise ValueError("lambda must be positive")
    X, Y = dataset.X, dataset.Y
    h = float(grid_step) if grid_step is not None else weights.h_pos
    active = np.flatnonzero(~weights.empty)
    if active.size == 0:
        raise ValueError("no active directions")
    centers = partition.centers
    T = X @ centers.T if X.shape[0] else np.zeros((0, partition.m))
    lo_candidates = [weights.support[c, 0] for c in active]
    hi_candidates = [weights.support[c, 1] for c in active]
    t_lo = float(T.min()) if T.size else min(lo_candidates)
    t_hi = float(T.max()) if T.size else max(hi_candidates)
    r_lo = min(min(lo_candidates), t_lo) - 2.0 * h
    r_hi = max(max(hi_candidates), t_hi) + 2.0 * h
    J = int(np.ceil((r_hi - r_lo) / h)) + 1
    r = r_lo + h * np.arange(J + 1)
    eps = weights.eps_floor()
    return active, T, r, eps, h


def solve_agam(dataset: DatasetLoss, partition: SpherePartition,
               weights: CellWeights, lam: float,
               grid_step: float | None = None,
               link: LinkKind = IDENTITY,
               max_iter: int = 2000) -> AgamSolution:
    """Fit the finite-direction additive model.

    Squared loss with identity link is solved directly through the sparse
    stationarity system; convex losses with the logit link go through L-BFGS
    on the same eliminated variables.
    """
    active, T, r, eps, h = _prepare(dataset, partition, weights, lam, grid_step)
    X, Y = dataset.X, dataset.Y
    N = X.shape[0]
    d_out = Y.shape[1]
    gbar_used = weights.gbar_check

    blocks = []
    for c in active:
        gvals = weights.g_at(c, r)
        B, D, wpen, struct = _build_direction_matrices(
            r, gvals, weights.support[c], eps)
        A = _data_matrix(T[:, c], r) @ B if N else sp.csr_matrix((0, B.shape[1]))
        DB = D @ B
        P = DB.T @ sp.diags(lam * gbar_used * wpen) @ DB
        blocks.append((c, B, DB, wpen, A, P))

    Adata = sp.hstack([blk[4] for blk in blocks], format="csr") \
        if N else sp.csr_matrix((0, sum(b[1].shape[1] for b in blocks)))
    Pmat = sp.block_diag([blk[5] for blk in blocks], format="csr")
    nf = Pmat.shape[0]

    iterations = 0
    converged = True
    if link.name == "identity" and dataset.loss_kind == "squared":
        M = (Adata.T @ Adata + Pmat).tocsc()
        Z = np.zeros((nf, d_out))
        for comp in range(d_out):
            rhs = Adata.T @ Y[:, comp] if N else np.zeros(nf)
            Z[:, comp] = spsolve(M, rhs)
    else:
        # _loss_and_grad works on the pre-link predictor (cross-entropy
        # applies the sigmoid internally)
        def objective(zflat):
            Zl = zflat.reshape(nf, d_out)
            pred = Adata @ Zl
            val, dpred = _loss_and_grad(dataset.loss_kind, pred, Y)
            grad = Adata.T @ dpred + 2.0 * (Pmat @ Zl)
            val += float(np.sum(Zl * (Pmat @ Zl)))
            return val, grad.ravel()

        res = minimize(objective, np.zeros(nf * d_out), jac=True,
                       method="L-BFGS-B",
                       options={"maxiter": max_iter, "gtol": 1e-7, "ftol": 0.0})
        Z = res.x.reshape(nf, d_out)
        iterations = int(res.nit)
        converged = bool(res.success)

    # reconstruct full node values for every partition cell
    phi = np.zeros((partition.m, r.size, d_out))
    supp_full = np.array(weights.support, dtype=float, copy=True)
    offset = 0
    for c, B, DB, wpen, A, P in blocks:
        nf_c = B.shape[1]
        phi[c] = B @ Z[offset:offset + nf_c]
        offset += nf_c

    profiles = ProfileSet(directions=partition.centers.copy(), positions=r,
                          phi=phi, supp=supp_full, lam=lam,
                          gbar_used=gbar_used, eps=eps)
    pen = penalty_agam(profiles, weights)
    sol = AgamSolution(profiles=profiles, link=link, objective=0.0,
                       loss=0.0, penalty=pen,
                       iterations=iterations, converged=converged)
    if N:
        loss_val, _ = _loss_and_grad(dataset.loss_kind, _prelink(sol, X), Y)
    else:
        loss_val = 0.0
    sol.loss = float(loss_val)
    sol.objective = sol.loss + lam * pen
    return sol


def _prelink(sol: AgamSolution, X: np.ndarray) -> np.ndarray:
    p = sol.profiles
    coeff = p.coeffs()
    Z = 0.0
    for c in range(p.m):
        Z = Z + coeff[c] * p.profile_values(c, X @ p.directions[c])
    return Z


def _penalty_tables(profiles: ProfileSet, gtab_at, eps: float) -> np.ndarray:
    """Shared quadrature for both penalties (per-direction contributions)."""
    r = profiles.positions
    h = profiles.h
    out = np.zeros(profiles.m)
    for c in range(profiles.m):
        lo_hi = profiles.supp[c]
        if not np.all(np.isfinite(lo_hi)):
            continue
        gvals = gtab_at(c, r)
        pen_nodes = np.arange(1, r.size - 1)
        mask = (r[pen_nodes] >= lo_hi[0] - 1e-12) & \
               (r[pen_nodes] <= lo_hi[1] + 1e-12)
        pen_nodes = pen_nodes[mask]
        if pen_nodes.size == 0:
            continue
        d2 = (profiles.phi[c][pen_nodes - 1] - 2.0 * profiles.phi[c][pen_nodes]
              + profiles.phi[c][pen_nodes + 1]) / h ** 2
        q = np.sum(d2 * d2, axis=1) / np.maximum(gvals[pen_nodes], eps)
        trap = np.ones(pen_nodes.size)
        trap[0] = trap[-1] = 0.5
        out[c] = h * float(trap @ q)
    return out


def penalty_agam(profiles: ProfileSet, weights: CellWeights) -> float:
    """Discrete weighted curvature penalty (without the lambda factor)."""
    contrib = _penalty_tables(
        profiles, lambda c, r: weights.g_at(c, r), weights.eps_floor())
    return float(weights.gbar_check * contrib.sum())


def penalty_igam(profiles: ProfileSet, grid: WeightGrid) -> float:
    """Continuous-direction penalty by double quadrature.

    ``profiles.directions`` must match the weighting grid's directions.
    """
    if profiles.m != grid.directions.shape[0]:
        raise ValueError("profiles must live on the weighting direction grid")
    contrib = _penalty_tables(
        profiles, lambda c, r: grid.g_at(c, r), grid.eps_floor())
    return float(grid.gbar * (grid.dir_weights @ contrib))


def agam_from_igam(dir_profiles: ProfileSet, partition: SpherePartition,
                   ) -> ProfileSet:
    """Discretize direction-continuum profiles to one profile per cell.

    phi_check_c(r) = phi*_c(r) * mu(U(c)), with phi* read at the profile
    direction nearest to the cell center.
    """
    nearest = np.argmax(partition.centers @ dir_profiles.directions.T, axis=1)
    phi = dir_profiles.phi[nearest] * partition.measures[:, None, None]
    supp = dir_profiles.supp[nearest]
    return ProfileSet(directions=partition.centers.copy(),
                      positions=dir_profiles.positions.copy(), phi=phi,
                      supp=supp, lam=dir_profiles.lam,
                      gbar_used=dir_profiles.gbar_used,
                      eps=dir_profiles.eps)


def igam_from_agam(cell_profiles: ProfileSet, partition: SpherePartition,
                   directions: np.ndarray,
                   dir_weights: np.ndarray | None = None) -> ProfileSet:
    """Piecewise-constant lift of cell profiles onto a direction grid.

    phi_tilde_s(r) = phi_check_{cell(s)}(r) / mu(U(cell(s))).
    """
    directions = np.atleast_2d(np.asarray(directions, float))
    idx = partition.assign(directions)
    phi = cell_profiles.phi[idx] / partition.measures[idx, None, None]
    supp = cell_profiles.supp[idx]
    return ProfileSet(directions=directions,
                      positions=cell_profiles.positions.copy(), phi=phi,
                      supp=supp, lam=cell_profiles.lam,
                      gbar_used=cell_profiles.gbar_used,
                      eps=cell_profiles.eps, dir_coeffs=dir_weights)
