"""Randomized shallow ReLU networks with a frozen random first layer.

The model is ``f(x) = linkinv( sum_k w_k * relu(b_k + <v_k, x>) )`` where the
inner weights ``v_k`` and biases ``b_k`` are sampled once and never trained.
Only the outer weight matrix ``W`` is free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MAX_RESAMPLE_ATTEMPTS = 100


class DegenerateInitializerError(RuntimeError):
    """Raised when the initializer keeps producing zero inner-weight rows."""


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class LinkKind:
    """Invertible link applied after the additive predictor.

    ``identity`` leaves the predictor untouched; ``logit`` maps it through the
    sigmoid (so outputs live in (0, 1), scalar output only).
    """

    name: str = "identity"

    def __post_init__(self):
        if self.name not in ("identity", "logit"):
            raise ValueError(f"unknown link {self.name!r}")

    def inverse(self, z: np.ndarray) -> np.ndarray:
        if self.name == "identity":
            return z
        return _sigmoid(z)

    def inverse_deriv(self, z: np.ndarray) -> np.ndarray:
        if self.name == "identity":
            return np.ones_like(z)
        p = _sigmoid(z)
        return p * (1.0 - p)


IDENTITY = LinkKind("identity")
LOGIT = LinkKind("logit")


@dataclass(frozen=True)
class InitDistribution:
    """I.i.d. law of the first-layer pairs ``(v_k, b_k)``.

    kind "uniform_cube": every entry of v and b uniform on [-c, c].
    kind "gaussian": entries of v are N(0, sigma_v^2), b is N(0, sigma_b^2).
    kind "custom": ``sampler(rng, n, d) -> (V, b)``.
    """

    kind: str = "uniform_cube"
    c: float = 0.05
    sigma_v: float = 1.0
    sigma_b: float = 1.0
    seed: int = 0
    sampler: Callable | None = field(default=None, compare=False)

    def draw(self, rng: np.random.Generator, n: int, d: int):
        if self.kind == "uniform_cube":
            V = rng.uniform(-self.c, self.c, size=(n, d))
            b = rng.uniform(-self.c, self.c, size=n)
        elif self.kind == "gaussian":
            V = rng.normal(0.0, self.sigma_v, size=(n, d))
            b = rng.normal(0.0, self.sigma_b, size=n)
        elif self.kind == "custom":
            if self.sampler is None:
                raise ValueError("custom init requires a sampler")
            V, b = self.sampler(rng, n, d)
            V = np.asarray(V, dtype=float)
            b = np.asarray(b, dtype=float)
        else:
            raise ValueError(f"unknown init kind {self.kind!r}")
        return V, b


@dataclass
class RsnParams:
    """Parameters of a randomized shallow ReLU network."""

    n: int
    d: int
    d_out: int
    V: np.ndarray  # (n, d) random inner weights
    b: np.ndarray  # (n,) random biases
    W: np.ndarray  # (d_out, n) trainable outer weights
    link: LinkKind = IDENTITY
    seed: int | None = None

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        if self.V.shape != (self.n, self.d):
            raise ValueError("V has wrong shape")
        if self.b.shape != (self.n,):
            raise ValueError("b has wrong shape")
        if self.W.shape != (self.d_out, self.n):
            raise ValueError("W has wrong shape")

    def with_weights(self, W: np.ndarray) -> "RsnParams":
        W = np.asarray(W, dtype=float)
        if W.shape != (self.d_out, self.n):
            raise ValueError("W has wrong shape")
        return RsnParams(self.n, self.d, self.d_out, self.V, self.b, W,
                         link=self.link, seed=self.seed)

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n, "d": self.d, "d_out": self.d_out,
            "V": self.V.tolist(), "b": self.b.tolist(), "W": self.W.tolist(),
            "link": self.link.name, "seed": self.seed,
        })

    @staticmethod
    def from_json(text: str) -> "RsnParams":
        obj = json.loads(text)
        return RsnParams(
            n=obj["n"], d=obj["d"], d_out=obj["d_out"],
            V=np.array(obj["V"], dtype=float),
            b=np.array(obj["b"], dtype=float),
            W=np.array(obj["W"], dtype=float),
            link=LinkKind(obj["link"]),
            seed=obj.get("seed"),
        )


@dataclass(frozen=True)
class KinkGeometry:
    """Per-neuron kink positions and unit directions.

    ``xi[k] = -b[k] / ||v_k||`` is the signed normal distance of neuron k's
    ReLU hyperplane from the origin, ``s[k] = v_k / ||v_k||`` its unit normal.
    """

    xi: np.ndarray     # (n,)
    s: np.ndarray      # (n, d)
    vnorm: np.ndarray  # (n,)


def sample_rsn(n: int, d: int, d_out: int, init: InitDistribution,
               link: LinkKind = IDENTITY) -> RsnParams:
    """Draw a network with W = 0, deterministically from ``init.seed``."""
    if n < 1 or d < 1 or d_out < 1:
        raise ValueError("n, d, d_out must be >= 1")
    rng = np.random.default_rng(init.seed)
    V, b = init.draw(rng, n, d)
    for _ in range(MAX_RESAMPLE_ATTEMPTS):
        bad = np.flatnonzero(np.all(V == 0.0, axis=1))
        if bad.size == 0:
            break
        Vr, br = init.draw(rng, bad.size, d)
        V[bad], b[bad] = Vr, br
    else:
        raise DegenerateInitializerError("degenerate initializer")
    W = np.zeros((d_out, n))
    return RsnParams(n, d, d_out, V, b, W, link=link, seed=init.seed)


def features(params: RsnParams, X: np.ndarray) -> np.ndarray:
    """Hidden-layer activations, shape (m, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        return np.zeros((0, params.n))
    pre = X @ params.V.T + params.b
    return np.maximum(pre, 0.0)


def forward(params: RsnParams, X: np.ndarray) -> np.ndarray:
    """Network outputs, shape (m, d_out)."""
    phi = features(params, X)
    return params.link.inverse(phi @ params.W.T)


def kink_geometry(params: RsnParams) -> KinkGeometry:
    vnorm = np.linalg.norm(params.V, axis=1)
    if np.any(vnorm == 0.0):
        raise ValueError("zero inner weight")
    return KinkGeometry(xi=-params.b / vnorm, s=params.V / vnorm[:, None],
                        vnorm=vnorm)


def gradient(params: RsnParams, x: np.ndarray) -> np.ndarray:
    """Almost-everywhere Jacobian at a single point, shape (d_out, d).

    The ReLU derivative is the indicator of the open half-line, so exactly at
    a kink the neuron contributes zero.
    """
    x = np.asarray(x, dtype=float).reshape(params.d)
    pre = params.V @ x + params.b
    active = pre > 0.0
    J_pre = params.W[:, active] @ params.V[active]  # (d_out, d)
    z = params.W @ np.maximum(pre, 0.0)
    return params.link.inverse_deriv(z)[:, None] * J_pre


def gradients(params: RsnParams, X: np.ndarray) -> np.ndarray:
    """Jacobians at many points, shape (m, d_out, d)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pre = X @ params.V.T + params.b          # (m, n)
    act = (pre > 0.0).astype(float)
    # J[i] = W @ diag(act[i]) @ V
    J = np.einsum("ok,ik,kd->iod", params.W, act, params.V)
    z = np.maximum(pre, 0.0) @ params.W.T    # (m, d_out)
    return params.link.inverse_deriv(z)[:, :, None] * J
