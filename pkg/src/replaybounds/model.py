"""Small classifiers with exact gradients.

Parameters live in one flat float64 vector. Layouts:

    linear: W (C x D), b (C)
    mlp:    W1 (H x D), b1 (H), W2 (C x H), b2 (C)

Training uses the clipped, rescaled cross-entropy min(CE, clip) / clip,
which lies in [0, 1]; bounds are evaluated with the 0-1 loss.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .numerics import RngStream


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "linear"
    input_dim: int = 2
    classes: int = 2
    hidden_dim: int = 0
    activation: str = "relu"
    surrogate_clip: float = 4.0

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1 or self.classes < 1:
            raise ValueError("dimensions must be >= 1")
        if self.kind == "mlp" and self.hidden_dim < 1:
            raise ValueError("mlp needs hidden_dim >= 1")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.surrogate_clip > 0:
            raise ValueError("surrogate_clip must be positive")

    @property
    def num_params(self) -> int:
        D, C, H = self.input_dim, self.classes, self.hidden_dim
        if self.kind == "linear":
            return C * D + C
        return H * D + H + C * H + C


@dataclass(frozen=True, eq=False)
class Params:
    spec: ModelSpec
    theta: np.ndarray

    def __post_init__(self):
        if self.theta.shape != (self.spec.num_params,):
            raise ValueError(f"theta has shape {self.theta.shape}, spec needs ({self.spec.num_params},)")

    def to_bytes(self) -> bytes:
        """JSON spec header (length-prefixed, little-endian u32) followed by float64 LE values."""
        header = json.dumps(asdict(self.spec), sort_keys=True).encode("utf-8")
        return struct.pack("<I", len(header)) + header + self.theta.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Params":
        (hlen,) = struct.unpack_from("<I", data, 0)
        spec = ModelSpec(**json.loads(data[4:4 + hlen].decode("utf-8")))
        theta = np.frombuffer(data[4 + hlen:], dtype="<f8").astype(float)
        return cls(spec, theta)


def _unpack(spec: ModelSpec, theta: np.ndarray):
    D, C, H = spec.input_dim, spec.classes, spec.hidden_dim
    if spec.kind == "linear":
        return theta[:C * D].reshape(C, D), theta[C * D:]
    o = 0
    W1 = theta[o:o + H * D].reshape(H, D); o += H * D
    b1 = theta[o:o + H]; o += H
    W2 = theta[o:o + C * H].reshape(C, H); o += C * H
    b2 = theta[o:o + C]
    return W1, b1, W2, b2


def init_params(spec: ModelSpec, rng: RngStream) -> Params:
    """Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    g = rng.generator()
    theta = np.zeros(spec.num_params)
    parts = _unpack(spec, theta)
    weights = parts[0::2]
    for W in weights:
        bound = np.sqrt(6.0 / W.shape[1])
        W[...] = g.uniform(-bound, bound, size=W.shape)
    return Params(spec, theta)


def _act(spec, a):
    return np.maximum(a, 0.0) if spec.activation == "relu" else np.tanh(a)


def forward(params: Params, features: np.ndarray) -> np.ndarray:
    """Logits for one feature vector (shape (D,)) or a batch (shape (B, D))."""
    spec = params.spec
    X = np.asarray(features, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != spec.input_dim:
        raise ValueError(f"feature dimension {X.shape[1]} != model input_dim {spec.input_dim}")
    if spec.kind == "linear":
        W, b = _unpack(spec, params.theta)
        z = X @ W.T + b
    else:
        W1, b1, W2, b2 = _unpack(spec, params.theta)
        z = _act(spec, X @ W1.T + b1) @ W2.T + b2
    return z[0] if single else z


def predict(params: Params, features: np.ndarray) -> np.ndarray:
    """Argmax class; ties go to the larger class index."""
    z = np.atleast_2d(forward(params, features))
    return z.shape[1] - 1 - np.argmax(z[:, ::-1], axis=1)


def _cross_entropy(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return lse - z[np.arange(len(y)), y]


def losses(params: Params, features: np.ndarray, labels: np.ndarray, kind: str = "zero_one") -> np.ndarray:
    """Per-sample losses in [0, 1] for a batch."""
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if kind == "zero_one":
        return (predict(params, X) != y).astype(float)
    if kind == "surrogate":
        clip = params.spec.surrogate_clip
        return np.minimum(_cross_entropy(forward(params, X), y), clip) / clip
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_eval(params: Params, features: np.ndarray, label: int, kind: str = "zero_one") -> float:
    return float(losses(params, features, np.array([label]), kind)[0])


def grad_batch(params: Params, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Negative mean gradient of the surrogate loss over the batch (so the update is W + eta * G)."""
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=np.int64)
    B = len(y)
    if B == 0:
        raise ValueError("empty batch")
    return -_surrogate_grad(params.spec, params.theta, X, y) / B


def _surrogate_grad(spec: ModelSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sum over the batch of d(surrogate)/d(theta)."""
    clip = spec.surrogate_clip
    B = len(y)
    rows = np.arange(B)
    if spec.kind == "linear":
        W, b = _unpack(spec, theta)
        z = X @ W.T + b
    else:
        W1, b1, W2, b2 = _unpack(spec, theta)
        a = X @ W1.T + b1
        h = _act(spec, a)
        z = h @ W2.T + b2
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    se = e.sum(axis=1, keepdims=True)
    ce = zmax[:, 0] + np.log(se[:, 0]) - z[rows, y]
    dz = e / se
    dz[rows, y] -= 1.0
    dz *= ((ce < clip) / clip)[:, None]
    if spec.kind == "linear":
        return np.concatenate([(dz.T @ X).ravel(), dz.sum(axis=0)])
    dh = dz @ W2
    da = dh * (a > 0) if spec.activation == "relu" else dh * (1.0 - h * h)
    return np.concatenate([(da.T @ X).ravel(), da.sum(axis=0), (dz.T @ h).ravel(), dz.sum(axis=0)])


def per_sample_grads(params: Params, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """(B, d) matrix of per-sample negative surrogate gradients."""
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=np.int64)
    return np.stack([-_surrogate_grad(params.spec, params.theta, X[i:i + 1], y[i:i + 1]) for i in range(len(y))])


def kink_margin(params: Params, features: np.ndarray, labels: np.ndarray) -> float:
    """Distance from the nearest non-differentiable point of the surrogate, in parameter units.

    Counts ReLU preactivations (scaled by the input size) and the clip point
    of the cross-entropy; inf for smooth models far from the clip.
    """
    spec = params.spec
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=np.int64)
    ce = _cross_entropy(forward(params, X), y)
    margin = float(np.min(np.abs(ce - spec.surrogate_clip)))
    if spec.kind == "mlp" and spec.activation == "relu":
        W1, b1, _, _ = _unpack(spec, params.theta)
        a = X @ W1.T + b1
        scale = 1.0 + np.abs(X).sum(axis=1, keepdims=True)
        margin = min(margin, float(np.min(np.abs(a) / scale)))
    return margin


def fd_gradient_check(params: Params, features: np.ndarray, labels: np.ndarray, eps: float = 1e-4,
                      absolute: bool = False) -> float:
    """Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8).

    With absolute=True the denominator is dropped.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-6, 1e-3]")
    analytic = -grad_batch(params, features, labels)  # gradient of the mean surrogate
    theta = params.theta
    fd = np.empty_like(theta)
    for i in range(len(theta)):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += eps
        tm[i] -= eps
        fp = losses(Params(params.spec, tp), features, labels, "surrogate").mean()
        fm = losses(Params(params.spec, tm), features, labels, "surrogate").mean()
        fd[i] = (fp - fm) / (2 * eps)
    err = np.abs(analytic - fd)
    if absolute:
        return float(err.max())
    return float(np.max(err / (np.abs(analytic) + 1e-8)))
