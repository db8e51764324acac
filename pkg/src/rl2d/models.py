"""Score models ``x -> h(x, .)`` and their checkpoint format.

Checkpoints are plain text so they diff cleanly and round-trip exactly
(every float is written with 17 significant digits)::

    rl2d-model 1
    kind linear
    n 3
    d 10
    array weights 4 10
    <4 rows of 10 values>
    array bias 4
    <1 row of 4 values>

The one-hidden-layer model adds ``width`` and stores ``w1 b1 w2 b2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DeferralError

FORMAT_VERSION = 1


@dataclass
class LinearDeferralModel:
    """``h(x) = weights @ x + bias`` with ``n + 1`` output rows."""

    weights: np.ndarray
    bias: np.ndarray

    kind = "linear"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DeferralError("weights must be (n+1, d) and bias (n+1,)")
        if self.weights.shape[0] < 3:
            raise DeferralError("need n + 1 >= 3 output rows")

    @classmethod
    def init(cls, n: int, d: int, rng: np.random.Generator, std: float = 0.01):
        return cls(rng.normal(0.0, std, size=(n + 1, d)), np.zeros(n + 1))

    @property
    def n(self) -> int:
        return self.weights.shape[0] - 1

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def scores(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights.T + self.bias

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(X), axis=-1) + 1

    def scaled(self, alpha: float) -> "LinearDeferralModel":
        return LinearDeferralModel(alpha * self.weights, alpha * self.bias)

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias])

    def set_params(self, flat: np.ndarray) -> None:
        k = self.weights.size
        self.weights = flat[:k].reshape(self.weights.shape).copy()
        self.bias = flat[k:].copy()

    def backward(self, X, grad_scores) -> np.ndarray:
        """Parameter gradient given ``d loss / d scores`` of shape ``(B, n+1)``."""
        gw = grad_scores.T @ np.asarray(X, dtype=float)
        gb = grad_scores.sum(axis=0)
        return np.concatenate([gw.ravel(), gb])

    def copy(self) -> "LinearDeferralModel":
        return LinearDeferralModel(self.weights.copy(), self.bias.copy())

    def arrays(self) -> dict:
        return {"weights": self.weights, "bias": self.bias}


@dataclass
class MLPDeferralModel:
    """One hidden tanh layer: ``h(x) = w2 @ tanh(w1 @ x + b1) + b2``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    kind = "mlp"

    @classmethod
    def init(cls, n: int, d: int, width: int, rng: np.random.Generator, std: float = 0.01):
        w1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(width, d))
        w2 = rng.normal(0.0, std, size=(n + 1, width))
        return cls(w1, np.zeros(width), w2, np.zeros(n + 1))

    @property
    def n(self) -> int:
        return self.w2.shape[0] - 1

    @property
    def d(self) -> int:
        return self.w1.shape[1]

    @property
    def width(self) -> int:
        return self.w1.shape[0]

    def _hidden(self, X):
        return np.tanh(np.asarray(X, dtype=float) @ self.w1.T + self.b1)

    def scores(self, X) -> np.ndarray:
        return self._hidden(X) @ self.w2.T + self.b2

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(X), axis=-1) + 1

    def get_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (self.w1, self.b1, self.w2, self.b2)])

    def set_params(self, flat: np.ndarray) -> None:
        out, pos = [], 0
        for a in (self.w1, self.b1, self.w2, self.b2):
            out.append(flat[pos : pos + a.size].reshape(a.shape).copy())
            pos += a.size
        self.w1, self.b1, self.w2, self.b2 = out

    def backward(self, X, grad_scores) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        z = self._hidden(X)
        gw2 = grad_scores.T @ z
        gb2 = grad_scores.sum(axis=0)
        gz = (grad_scores @ self.w2) * (1.0 - z**2)
        gw1 = gz.T @ X
        gb1 = gz.sum(axis=0)
        return np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])

    def copy(self) -> "MLPDeferralModel":
        return MLPDeferralModel(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def arrays(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


Model = LinearDeferralModel | MLPDeferralModel


def save_checkpoint(model: Model, path) -> None:
    lines = [f"rl2d-model {FORMAT_VERSION}", f"kind {model.kind}", f"n {model.n}", f"d {model.d}"]
    if model.kind == "mlp":
        lines.append(f"width {model.width}")
    for name, arr in model.arrays().items():
        rows = np.atleast_2d(arr)
        lines.append(f"array {name} " + " ".join(str(s) for s in arr.shape))
        lines.extend(" ".join(f"{v:.17g}" for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> Model:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split() != ["rl2d-model", str(FORMAT_VERSION)]:
        raise DeferralError(f"{path}: not an rl2d checkpoint (version {FORMAT_VERSION})")
    header, arrays, i = {}, {}, 1
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if not parts:
            continue
        if parts[0] != "array":
            header[parts[0]] = parts[1]
            continue
        name, shape = parts[1], tuple(int(s) for s in parts[2:])
        nrows = shape[0] if len(shape) == 2 else 1
        values = [float(v) for row in lines[i : i + nrows] for v in row.split()]
        i += nrows
        arrays[name] = np.array(values).reshape(shape)
    kind = header.get("kind")
    if kind == "linear":
        model = LinearDeferralModel(arrays["weights"], arrays["bias"])
    elif kind == "mlp":
        model = MLPDeferralModel(arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"])
    else:
        raise DeferralError(f"{path}: unknown model kind {kind!r}")
    if model.n != int(header["n"]) or model.d != int(header["d"]):
        raise DeferralError(f"{path}: header n/d do not match stored arrays")
    return model
