"""Deferral loss, comp-sum surrogates, RL2D and the baseline surrogates.

Every function is vectorised: ``scores`` has shape ``(..., n + 1)`` and ``y``
and ``c`` broadcast against the leading axes.  Passing a single score vector
with scalar ``y``/``c`` returns a Python float.

Softmax quantities are always formed in log space (score minus log-sum-exp)
so that masses close to 1 keep full relative precision in ``Psi``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DeferralError, PsiSpec, check_scores, is_binary

__all__ = [
    "LossSpec",
    "ce_baseline",
    "ce_gradient",
    "comp_sum_gradient",
    "comp_sum_loss",
    "deferral_loss",
    "general_baseline",
    "general_gradient",
    "log_softmax",
    "modified_comp_sum_gradient",
    "modified_comp_sum_loss",
    "ova_baseline",
    "ova_gradient",
    "parse_loss",
    "rl2d_gradient",
    "rl2d_loss",
    "rs_baseline",
    "rs_gradient",
]


def log_softmax(h: np.ndarray) -> np.ndarray:
    z = h - h.max(axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def _logsumexp(h: np.ndarray) -> np.ndarray:
    m = h.max(axis=-1)
    return m + np.log(np.sum(np.exp(h - m[..., None]), axis=-1))


def _prepare(scores, y, c=None, *, allow_defer_label=False, binary=False):
    h = check_scores(scores)
    n = h.shape[-1] - 1
    scalar = h.ndim == 1 and np.ndim(y) == 0 and (c is None or np.ndim(c) == 0)
    y = np.asarray(y)
    if not np.issubdtype(y.dtype, np.integer):
        if np.any(y != np.round(y)):
            raise DeferralError("labels must be integers")
        y = y.astype(int)
    top = n + 1 if allow_defer_label else n
    if np.any(y < 1) or np.any(y > top):
        raise DeferralError(f"label out of range 1..{top}")
    lead = np.broadcast_shapes(h.shape[:-1], y.shape, () if c is None else np.shape(c))
    h = np.broadcast_to(h, lead + (n + 1,))
    y = np.broadcast_to(y, lead)
    if c is not None:
        c = np.broadcast_to(np.asarray(c, dtype=float), lead)
        if np.any(~np.isfinite(c)) or np.any(c < 0) or np.any(c > 1):
            raise DeferralError("cost must lie in [0, 1]")
        if binary and not is_binary(c):
            raise DeferralError(
                "this baseline is only defined for expert-error (binary) costs"
            )
    return h, y, c, n, scalar


def _out(value, scalar):
    return float(value) if scalar else value


def _take(a: np.ndarray, y0: np.ndarray) -> np.ndarray:
    return np.take_along_axis(a, y0[..., None], axis=-1)[..., 0]


def _onehot(y0: np.ndarray, size: int) -> np.ndarray:
    return (np.arange(size) == y0[..., None]).astype(float)


# ---------------------------------------------------------------------------
# target loss
# ---------------------------------------------------------------------------


def deferral_loss(scores, y, c):
    """0/1 error when predicting a label, cost ``c`` when deferring."""
    h, y, c, n, scalar = _prepare(scores, y, c)
    pred = np.argmax(h, axis=-1) + 1
    defer = pred == n + 1
    value = np.where(defer, c, (pred != y).astype(float))
    return _out(value, scalar)


# ---------------------------------------------------------------------------
# comp-sum family
# ---------------------------------------------------------------------------


def _log_mass_single(h, y0):
    return _take(log_softmax(h), y0)


def _log_mass_pair(h, y0):
    hy = _take(h, y0)
    return np.logaddexp(hy, h[..., -1]) - _logsumexp(h)


def comp_sum_loss(psi: PsiSpec, scores, y):
    """``Psi(softmax_y(scores))`` over all ``n + 1`` entries; ``y`` may be ``n + 1``."""
    h, y, _, _, scalar = _prepare(scores, y, allow_defer_label=True)
    return _out(psi.from_log(_log_mass_single(h, y - 1)), scalar)


def modified_comp_sum_loss(psi: PsiSpec, scores, y):
    """``Psi`` of the joint softmax mass of label ``y`` and the deferral label."""
    h, y, _, _, scalar = _prepare(scores, y)
    return _out(psi.from_log(_log_mass_pair(h, y - 1)), scalar)


def rl2d_loss(psi: PsiSpec, scores, y, c):
    """Cost-weighted mixture ``c * comp_sum + (1 - c) * modified_comp_sum``."""
    h, y, c, _, scalar = _prepare(scores, y, c)
    y0 = y - 1
    value = c * psi.from_log(_log_mass_single(h, y0)) + (1.0 - c) * psi.from_log(
        _log_mass_pair(h, y0)
    )
    return _out(value, scalar)


def comp_sum_gradient(psi: PsiSpec, scores, y):
    h, y, _, _, scalar = _prepare(scores, y, allow_defer_label=True)
    y0 = y - 1
    ls = log_softmax(h)
    s = np.exp(ls)
    g = psi.dlog(_take(ls, y0))[..., None] * (_onehot(y0, h.shape[-1]) - s)
    return g


def modified_comp_sum_gradient(psi: PsiSpec, scores, y):
    h, y, _, _, _ = _prepare(scores, y)
    return _modified_grad(psi, h, y - 1)


def _modified_grad(psi, h, y0):
    ls = log_softmax(h)
    s = np.exp(ls)
    hy = _take(h, y0)
    hd = h[..., -1]
    pair = np.logaddexp(hy, hd)
    # softmax restricted to the pair {y, n+1}
    w = np.zeros_like(h)
    np.put_along_axis(w, y0[..., None], np.exp(hy - pair)[..., None], axis=-1)
    w[..., -1] = np.exp(hd - pair)
    log_t = pair - _logsumexp(h)
    return psi.dlog(log_t)[..., None] * (w - s)


def rl2d_gradient(psi: PsiSpec, scores, y, c):
    """Analytic gradient of :func:`rl2d_loss` with respect to all ``n + 1`` scores."""
    h, y, c, _, _ = _prepare(scores, y, c)
    y0 = y - 1
    ls = log_softmax(h)
    s = np.exp(ls)
    g_single = psi.dlog(_take(ls, y0))[..., None] * (_onehot(y0, h.shape[-1]) - s)
    return c[..., None] * g_single + (1.0 - c[..., None]) * _modified_grad(psi, h, y0)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


def ce_baseline(scores, y, c):
    """Cross-entropy deferral surrogate; expert-error costs only."""
    h, y, c, _, scalar = _prepare(scores, y, c, binary=True)
    ls = log_softmax(h)
    value = -_take(ls, y - 1) - (1.0 - c) * ls[..., -1]
    return _out(value, scalar)


def ce_gradient(scores, y, c):
    h, y, c, n, _ = _prepare(scores, y, c, binary=True)
    s = np.exp(log_softmax(h))
    defer = np.zeros(n + 1)
    defer[-1] = 1.0
    return (s - _onehot(y - 1, n + 1)) + (1.0 - c)[..., None] * (s - defer)


def _logistic(t):
    # log(1 + exp(-t))
    return np.logaddexp(0.0, -t)


def _sigmoid(t):
    return np.exp(-np.logaddexp(0.0, -t))


def ova_baseline(scores, y, c):
    """One-vs-all deferral surrogate with the logistic loss as the binary loss."""
    h, y, c, n, scalar = _prepare(scores, y, c, binary=True)
    mask = _onehot(y - 1, n + 1).astype(bool)
    hd = h[..., -1]
    value = (
        _logistic(_take(h, y - 1))
        + np.sum(np.where(mask, 0.0, _logistic(-h)), axis=-1)
        + (1.0 - c) * (_logistic(hd) - _logistic(-hd))
    )
    return _out(value, scalar)


def ova_gradient(scores, y, c):
    h, y, c, n, _ = _prepare(scores, y, c, binary=True)
    mask = _onehot(y - 1, n + 1).astype(bool)
    # d/dt log(1+e^{-t}) = -sigmoid(-t);  d/dt log(1+e^{t}) = sigmoid(t)
    g = np.where(mask, -_sigmoid(-h), _sigmoid(h))
    # log(1+e^{-t}) - log(1+e^{t}) = -t
    g[..., -1] -= 1.0 - c
    return g


def rs_baseline(scores, y, c):
    """``-2 log((e^{h_y} + (1 - c) e^{h_{n+1}}) / sum_j e^{h_j})``; binary costs only."""
    h, y, c, _, scalar = _prepare(scores, y, c, binary=True)
    hy = _take(h, y - 1)
    with np.errstate(divide="ignore"):
        num = np.logaddexp(hy, h[..., -1] + np.log1p(-c))
    return _out(-2.0 * (num - _logsumexp(h)), scalar)


def rs_gradient(scores, y, c):
    h, y, c, _, _ = _prepare(scores, y, c, binary=True)
    s = np.exp(log_softmax(h))
    hy = _take(h, y - 1)
    with np.errstate(divide="ignore"):
        hd = h[..., -1] + np.log1p(-c)
    num = np.logaddexp(hy, hd)
    w = np.zeros_like(h)
    np.put_along_axis(w, (y - 1)[..., None], np.exp(hy - num)[..., None], axis=-1)
    w[..., -1] = np.exp(hd - num)
    return -2.0 * (w - s)


def general_baseline(psi: PsiSpec, scores, y, c):
    """``comp_sum(y) + (1 - c) * comp_sum(n + 1)``; any cost in [0, 1]."""
    h, y, c, _, scalar = _prepare(scores, y, c)
    ls = log_softmax(h)
    value = psi.from_log(_take(ls, y - 1)) + (1.0 - c) * psi.from_log(ls[..., -1])
    return _out(value, scalar)


def general_gradient(psi: PsiSpec, scores, y, c):
    h, y, c, n, _ = _prepare(scores, y, c)
    ls = log_softmax(h)
    s = np.exp(ls)
    y0 = y - 1
    g = psi.dlog(_take(ls, y0))[..., None] * (_onehot(y0, n + 1) - s)
    defer = np.zeros(n + 1)
    defer[-1] = 1.0
    g_defer = psi.dlog(ls[..., -1])[..., None] * (defer - s)
    return g + (1.0 - c)[..., None] * g_defer


# ---------------------------------------------------------------------------
# loss selector
# ---------------------------------------------------------------------------

_KINDS = ("rl2d", "ce", "ova", "rs", "general")
_BINARY_ONLY = frozenset({"ce", "ova", "rs"})


@dataclass(frozen=True)
class LossSpec:
    """Selects one surrogate; ``psi`` is used by ``rl2d`` and ``general`` only."""

    kind: str = "rl2d"
    psi: PsiSpec = PsiSpec.gce(0.7)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DeferralError(f"unknown loss {self.kind!r}; choose from {_KINDS}")

    @property
    def binary_only(self) -> bool:
        return self.kind in _BINARY_ONLY

    @property
    def name(self) -> str:
        if self.kind in ("rl2d", "general"):
            return f"{self.kind}:{self.psi.name}"
        return self.kind

    def value(self, scores, y, c):
        if self.kind == "rl2d":
            return rl2d_loss(self.psi, scores, y, c)
        if self.kind == "general":
            return general_baseline(self.psi, scores, y, c)
        return {"ce": ce_baseline, "ova": ova_baseline, "rs": rs_baseline}[self.kind](
            scores, y, c
        )

    def gradient(self, scores, y, c):
        if self.kind == "rl2d":
            return rl2d_gradient(self.psi, scores, y, c)
        if self.kind == "general":
            return general_gradient(self.psi, scores, y, c)
        return {"ce": ce_gradient, "ova": ova_gradient, "rs": rs_gradient}[self.kind](
            scores, y, c
        )


def parse_loss(text: str, q: float = 0.7) -> LossSpec:
    """Parse ``rl2d:gce0.7``, ``rl2d:mae``, ``general:log``, ``ce``, ``ova``, ``rs``."""
    from .core import parse_psi

    kind, _, psi = text.strip().lower().partition(":")
    if kind in ("rl2d", "general"):
        return LossSpec(kind, parse_psi(psi or "gce", q))
    if psi:
        raise DeferralError(f"loss {kind!r} takes no psi")
    return LossSpec(kind)
