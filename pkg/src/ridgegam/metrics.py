"""Grid-based W^{1,inf} distance over a compact box, and loss evaluation.

Functions are wrapped so that both the network and the additive models expose
``f(X) -> (m, d_out)`` values and ``f.grad(X) -> (m, d_out, d)`` Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ridgegam.rsn import RsnParams, forward, gradients
from ridgegam.train import DatasetLoss, _loss_and_grad


@dataclass(frozen=True)
class EvalGrid:
    """Deterministic evaluation lattice over an axis-aligned box."""

    lo: np.ndarray
    hi: np.ndarray
    resolution: int = 32

    def __post_init__(self):
        object.__setattr__(self, "lo", np.atleast_1d(np.asarray(self.lo, float)))
        object.__setattr__(self, "hi", np.atleast_1d(np.asarray(self.hi, float)))
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("invalid box")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")

    @property
    def d(self) -> int:
        return self.lo.size

    def points(self) -> np.ndarray:
        axes = [np.linspace(self.lo[i], self.hi[i], self.resolution)
                for i in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def refined(self, factor: int = 2) -> "EvalGrid":
        return EvalGrid(self.lo, self.hi, self.resolution * factor)


class RsnFunction:
    """Evaluable wrapper around network parameters."""

    def __init__(self, params: RsnParams, W: np.ndarray | None = None):
        self.params = params if W is None else params.with_weights(W)

    def __call__(self, X):
        return forward(self.params, X)

    def grad(self, X):
        return gradients(self.params, X)


class ZeroFunction:
    def __init__(self, d: int, d_out: int):
        self.d, self.d_out = d, d_out

    def __call__(self, X):
        return np.zeros((np.atleast_2d(X).shape[0], self.d_out))

    def grad(self, X):
        return np.zeros((np.atleast_2d(X).shape[0], self.d_out, self.d))


@dataclass
class FuncWrapper:
    value_fn: callable
    grad_fn: callable = None
    fd_step: float = 1e-6

    def __call__(self, X):
        return np.atleast_2d(self.value_fn(np.atleast_2d(X)))

    def grad(self, X):
        X = np.atleast_2d(X)
        if self.grad_fn is not None:
            return self.grad_fn(X)
        h = self.fd_step
        d = X.shape[1]
        cols = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            cols.append((self(X + e) - self(X - e)) / (2 * h))
        return np.stack(cols, axis=2)


def sobolev_distance(f, g, grid: EvalGrid) -> float:
    """max over components of sup|f-g| and sup|d_i f - d_i g| on the grid."""
    X = grid.points()
    dv = np.abs(np.atleast_2d(f(X)) - np.atleast_2d(g(X)))
    dj = np.abs(f.grad(X) - g.grad(X))
    return float(max(dv.max(initial=0.0), dj.max(initial=0.0)))


def sobolev_norm(f, grid: EvalGrid) -> float:
    return sobolev_distance(f, ZeroFunction(grid.d, _d_out(f, grid)), grid)


def _d_out(f, grid: EvalGrid) -> int:
    return np.atleast_2d(f(grid.lo[None, :])).shape[1]


def loss_eval(dataset: DatasetLoss, f) -> float:
    """Training loss of an arbitrary evaluable function."""
    if dataset.m == 0:
        return 0.0
    pred = np.atleast_2d(f(dataset.X))
    if dataset.loss_kind == "squared":
        val, _ = _loss_and_grad("squared", pred, dataset.Y)
        return val
    # cross-entropy expects the pre-link predictor; recover it from the
    # probabilities the wrapped model emits
    p = np.clip(pred, 1e-12, 1 - 1e-12)
    return float(-np.sum(dataset.Y * np.log(p)
                         + (1 - dataset.Y) * np.log(1 - p)))
