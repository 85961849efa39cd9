"""Outer-layer trainers for a fixed random feature map.

All trainers work on the feature matrix ``F`` (m, n) and targets ``Y``
(m, d_out).  The squared loss is the plain sum ``sum_i ||y_i - W phi_i||^2``
(no 1/m factor), and gradient flow/descent starts at W = 0.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ridgegam.rsn import _sigmoid


class StepSizeError(RuntimeError):
    """Euler steps diverged: the loss keeps growing."""


@dataclass
class TrainReport:
    W_star: np.ndarray
    objective_value: float
    loss_value: float
    penalty_value: float
    lambda_tilde: float
    iterations: int = 0
    converged: bool = True
    loss_curve: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "W_star": self.W_star.tolist(),
            "objective_value": self.objective_value,
            "loss_value": self.loss_value,
            "penalty_value": self.penalty_value,
            "lambda_tilde": self.lambda_tilde,
            "iterations": self.iterations,
            "converged": self.converged,
        })

    def loss_curve_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss"])
            for step, loss in enumerate(self.loss_curve):
                writer.writerow([step, repr(loss)])


def squared_loss(F: np.ndarray, Y: np.ndarray, W: np.ndarray) -> float:
    R = Y - F @ W.T
    return float(np.sum(R * R))


def ridge_solve(F: np.ndarray, Y: np.ndarray, lambda_tilde: float) -> TrainReport:
    """Closed-form minimizer of ``sum_i ||y_i - W phi_i||^2 + lt ||W||_F^2``.

    Solves the normal system in whichever Gram dimension (m or n) is smaller.
    """
    F = np.asarray(F, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if lambda_tilde <= 0.0:
        raise ValueError("lambda_tilde must be positive")
    if not np.all(np.isfinite(F)):
        raise ValueError("non-finite features")
    m, n = F.shape
    if m == 0:
        Wt = np.zeros((n, Y.shape[1]))
    elif m <= n:
        # dual path: W^T = F^T (F F^T + lt I)^{-1} Y
        G = F @ F.T
        G[np.diag_indices_from(G)] += lambda_tilde
        Wt = F.T @ np.linalg.solve(G, Y)
    else:
        G = F.T @ F
        G[np.diag_indices_from(G)] += lambda_tilde
        Wt = np.linalg.solve(G, F.T @ Y)
    W = Wt.T
    loss = squared_loss(F, Y, W)
    pen = lambda_tilde * float(np.sum(W * W))
    return TrainReport(W_star=W, objective_value=loss + pen, loss_value=loss,
                       penalty_value=pen, lambda_tilde=lambda_tilde)


def _gram_eig(F: np.ndarray):
    """Eigendecomposition of the smaller Gram matrix.

    Returns (lam, U, coef) with ``F^T Y``-projections computable as
    ``coef @ Y``; see gradient_flow_exact.
    """
    m, n = F.shape
    if m <= n:
        lam, U = np.linalg.eigh(F @ F.T)          # (m,), (m, m)
        basis = F.T @ U                            # columns F^T u_j, norm^2 = lam_j
        return lam, basis, U.T
    lam, Q = np.linalg.eigh(F.T @ F)               # (n,), (n, n)
    return lam, Q, Q.T @ F.T


def gradient_flow_exact(F: np.ndarray, Y: np.ndarray, T: float) -> np.ndarray:
    """Exact time-T solution of ``dW/dt = -grad squared loss``, W(0) = 0.

    In the Gram eigenbasis each coefficient follows
    ``(1 - exp(-2 lam T)) / lam`` times the data projection; the null space
    stays at zero.  Returns W of shape (d_out, n).
    """
    F = np.asarray(F, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if T < 0:
        raise ValueError("T must be >= 0")
    m, n = F.shape
    if m == 0 or T == 0:
        return np.zeros((Y.shape[1], n))
    lam, basis, proj = _gram_eig(F)
    lam = np.clip(lam, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(lam > 1e-300, -np.expm1(-2.0 * lam * T) / lam, 2.0 * T)
    if m <= n:
        # basis columns are F^T u_j with squared norm lam_j; the projection of
        # F^T Y onto the j-th eigenvector of F^T F equals (u_j^T Y) per unit
        # column, so the lam_j in gain cancels one factor of the column norm.
        coeffs = gain[:, None] * (proj @ Y)        # (m, d_out)
        Wt = basis @ coeffs
    else:
        coeffs = gain[:, None] * (proj @ Y)
        Wt = basis @ coeffs
    return Wt.T


def gradient_descent(F: np.ndarray, Y: np.ndarray, gamma: float, tau: int,
                     record_loss: bool = True) -> TrainReport:
    """tau explicit Euler steps of size gamma on the squared loss from W = 0."""
    F = np.asarray(F, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    n = F.shape[1]
    Wt = np.zeros((n, Y.shape[1]))
    curve = []
    FtY = F.T @ Y
    G = F.T @ F if n <= F.shape[0] else None
    for _ in range(int(tau)):
        if G is None:
            grad = 2.0 * (F.T @ (F @ Wt) - FtY)
        else:
            grad = 2.0 * (G @ Wt - FtY)
        Wt = Wt - gamma * grad
        if record_loss:
            loss = squared_loss(F, Y, Wt.T)
            curve.append(loss)
            # divergence heuristic: loss grew more than 10x over the last
            # 10 steps, and did so monotonically
            if len(curve) > 10 and curve[-1] > 10.0 * curve[-11] and \
                    all(a < b for a, b in zip(curve[-11:-1], curve[-10:])):
                raise StepSizeError("step size too large")
    W = Wt.T
    loss = squared_loss(F, Y, W)
    return TrainReport(W_star=W, objective_value=loss, loss_value=loss,
                       penalty_value=0.0, lambda_tilde=0.0,
                       iterations=int(tau), loss_curve=curve)


def early_stopping_lambda(T: float) -> float:
    """Penalty level calibrated so ridge mimics flow stopped at time T."""
    return 1.0 / (2.0 * (np.e - 1.0) * T)


@dataclass(frozen=True)
class DatasetLoss:
    """Finite-sum training loss over (X, Y) pairs."""

    X: np.ndarray
    Y: np.ndarray
    loss_kind: str = "squared"  # or "cross_entropy_binary"

    def __post_init__(self):
        object.__setattr__(self, "X", np.atleast_2d(np.asarray(self.X, float)))
        object.__setattr__(self, "Y", np.atleast_2d(np.asarray(self.Y, float)))
        if self.loss_kind not in ("squared", "cross_entropy_binary"):
            raise ValueError(f"unknown loss {self.loss_kind!r}")

    @property
    def m(self) -> int:
        return self.X.shape[0]


def _loss_and_grad(kind: str, Z: np.ndarray, Y: np.ndarray):
    """Loss and d(loss)/dZ for pre-link predictions Z."""
    if kind == "squared":
        R = Z - Y
        return float(np.sum(R * R)), 2.0 * R
    # binary cross-entropy through the logit link: prediction sigmoid(Z)
    P = _sigmoid(Z)
    eps = 1e-12
    val = -float(np.sum(Y * np.log(P + eps) + (1 - Y) * np.log(1 - P + eps)))
    return val, P - Y


def general_loss_ridge(F: np.ndarray, dataset: DatasetLoss, lambda_tilde: float,
                       max_iter: int = 2000, gtol: float = 1e-7) -> TrainReport:
    """Iterative ridge for convex per-sample losses (L-BFGS on W)."""
    F = np.asarray(F, dtype=float)
    Y = dataset.Y
    if lambda_tilde <= 0:
        raise ValueError("lambda_tilde must be positive")
    n = F.shape[1]
    d_out = Y.shape[1]
    if dataset.m == 0:
        W = np.zeros((d_out, n))
        return TrainReport(W_star=W, objective_value=0.0, loss_value=0.0,
                           penalty_value=0.0, lambda_tilde=lambda_tilde)

    def objective(wflat):
        W = wflat.reshape(d_out, n)
        Z = F @ W.T
        val, dZ = _loss_and_grad(dataset.loss_kind, Z, Y)
        val += lambda_tilde * float(np.sum(W * W))
        grad = dZ.T @ F + 2.0 * lambda_tilde * W
        return val, grad.ravel()

    res = minimize(objective, np.zeros(d_out * n), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": gtol, "ftol": 0.0})
    W = res.x.reshape(d_out, n)
    Z = F @ W.T
    loss, _ = _loss_and_grad(dataset.loss_kind, Z, Y)
    pen = lambda_tilde * float(np.sum(W * W))
    converged = bool(np.linalg.norm(objective(res.x)[1]) <= gtol * (1 + np.linalg.norm(res.x)) or res.success)
    return TrainReport(W_star=W, objective_value=loss + pen, loss_value=loss,
                       penalty_value=pen, lambda_tilde=lambda_tilde,
                       iterations=int(res.nit), converged=converged)
