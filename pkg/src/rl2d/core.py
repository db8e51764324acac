"""Shared value types for learning to defer.

Labels are 1-based everywhere in the public API: classes are ``1..n`` and the
deferral action is ``n + 1``.  Score vectors therefore have ``n + 1`` entries
and the last entry is the deferral score.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


class DeferralError(ValueError):
    """Raised when an input violates a documented precondition."""


# ---------------------------------------------------------------------------
# scores and predictions
# ---------------------------------------------------------------------------


def check_scores(scores, n: int | None = None) -> np.ndarray:
    """Validate augmented score vector(s) and return them as a float array.

    Accepts a single vector of shape ``(n + 1,)`` or a batch ``(..., n + 1)``.
    """
    arr = np.asarray(scores, dtype=float)
    if arr.ndim == 0:
        raise DeferralError("scores must be at least one-dimensional")
    if arr.shape[-1] < 3:
        raise DeferralError(
            f"scores need n + 1 >= 3 entries (n >= 2 labels), got {arr.shape[-1]}"
        )
    if n is not None and arr.shape[-1] != n + 1:
        raise DeferralError(f"expected {n + 1} scores for n={n}, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise DeferralError("scores must be finite")
    return arr


def predict(scores) -> np.ndarray | int:
    """Index (1-based) of the highest score; ties go to the lowest index.

    ``n + 1`` means defer.  Works on a single vector or a batch.
    """
    arr = check_scores(scores)
    # np.argmax returns the first maximal index, which is the tie-break we want
    pred = np.argmax(arr, axis=-1) + 1
    if arr.ndim == 1:
        return int(pred)
    return pred


# ---------------------------------------------------------------------------
# the Psi transform
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PsiSpec:
    """Non-increasing transform ``Psi: [0, 1] -> [0, inf]`` of a softmax mass.

    ``kind`` is one of ``"log"`` (``-log t``), ``"gce"``
    (``(1 - t**q) / q``) or ``"mae"`` (``1 - t``).
    """

    kind: str = "log"
    q: float = 0.7

    def __post_init__(self):
        if self.kind not in ("log", "gce", "mae"):
            raise DeferralError(f"unknown psi kind {self.kind!r}")
        if self.kind == "gce" and not (0.0 < self.q < 1.0):
            raise DeferralError(f"gce exponent q must lie in (0, 1), got {self.q}")

    @classmethod
    def log(cls) -> "PsiSpec":
        return cls("log")

    @classmethod
    def gce(cls, q: float = 0.7) -> "PsiSpec":
        return cls("gce", q)

    @classmethod
    def mae(cls) -> "PsiSpec":
        return cls("mae")

    @property
    def name(self) -> str:
        return f"gce{self.q:g}" if self.kind == "gce" else self.kind

    def __call__(self, t):
        """Evaluate Psi at probability mass ``t``."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.from_log(np.log(t))

    def from_log(self, log_t):
        """Evaluate Psi given ``log t``; accurate when ``t`` is close to 1."""
        log_t = np.asarray(log_t, dtype=float)
        if self.kind == "log":
            return -log_t
        if self.kind == "gce":
            return -np.expm1(self.q * log_t) / self.q
        return -np.expm1(log_t)

    def dlog(self, log_t):
        """Derivative of Psi with respect to ``log t`` (that is ``t * Psi'(t)``)."""
        log_t = np.asarray(log_t, dtype=float)
        if self.kind == "log":
            return -np.ones_like(log_t)
        if self.kind == "gce":
            return -np.exp(self.q * log_t)
        return -np.exp(log_t)

    @property
    def at_two_thirds(self) -> float:
        return float(self(2.0 / 3.0))


def parse_psi(name: str, q: float = 0.7) -> PsiSpec:
    """Build a PsiSpec from a short name such as ``log``, ``gce``, ``gce0.5``, ``mae``."""
    name = name.strip().lower()
    if name.startswith("gce"):
        rest = name[3:]
        return PsiSpec.gce(float(rest) if rest else q)
    if name in ("log", "mae"):
        return PsiSpec(name)
    raise DeferralError(f"unknown psi {name!r}")


# ---------------------------------------------------------------------------
# deferral costs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpertError:
    """``c(x, y) = 1[g(x) != y]``."""

    name = "expert"


@dataclass(frozen=True)
class AffineExpertError:
    """``c(x, y) = alpha * 1[g(x) != y] + beta``, restricted so costs stay in [0, 1]."""

    alpha: float
    beta: float = 0.0
    name = "affine"

    def __post_init__(self):
        if not self.alpha > 0:
            raise DeferralError(f"alpha must be > 0, got {self.alpha}")
        if not self.beta >= 0:
            raise DeferralError(f"beta must be >= 0, got {self.beta}")
        if self.alpha + self.beta > 1.0:
            raise DeferralError(
                f"alpha + beta must be <= 1 to keep costs in [0, 1], got {self.alpha + self.beta}"
            )


@dataclass(frozen=True)
class ExplicitTable:
    """Per-example, per-label costs read from a table (rows indexed by example)."""

    table: np.ndarray | None = field(default=None, compare=False)
    name = "table"


CostSpec = Union[ExpertError, AffineExpertError, ExplicitTable]


def parse_cost(text: str) -> CostSpec:
    """Parse ``expert``, ``table`` or ``affine:ALPHA,BETA``."""
    text = text.strip().lower()
    if text == "expert":
        return ExpertError()
    if text == "table":
        return ExplicitTable()
    if text.startswith("affine"):
        _, _, args = text.partition(":")
        try:
            alpha, beta = (float(v) for v in args.split(","))
        except ValueError:
            raise DeferralError(f"affine cost needs 'affine:ALPHA,BETA', got {text!r}") from None
        return AffineExpertError(alpha, beta)
    raise DeferralError(f"unknown cost mode {text!r}")


def cost_of(spec: CostSpec, y, expert_pred=None, row=None):
    """Deferral cost for true label(s) ``y`` (1-based).

    ``expert_pred`` is needed by the expert-error modes and ``row`` (the
    per-label cost row, or a batch of rows) by :class:`ExplicitTable`.
    Scalars in, scalar out; arrays broadcast.
    """
    y_arr = np.asarray(y)
    if isinstance(spec, (ExpertError, AffineExpertError)):
        if expert_pred is None:
            raise DeferralError(f"{spec.name} cost needs the expert prediction")
        wrong = (np.asarray(expert_pred) != y_arr).astype(float)
        out = wrong if isinstance(spec, ExpertError) else spec.alpha * wrong + spec.beta
    elif isinstance(spec, ExplicitTable):
        if row is None:
            raise DeferralError("table cost needs the per-label cost row")
        rows = np.asarray(row, dtype=float)
        if rows.ndim == 1:
            out = rows[y_arr - 1]
        else:
            out = np.take_along_axis(rows, (np.atleast_1d(y_arr) - 1)[:, None], axis=1)[:, 0]
    else:
        raise DeferralError(f"unsupported cost spec {spec!r}")
    out = np.asarray(out, dtype=float)
    if np.any(~np.isfinite(out)) or np.any(out < 0) or np.any(out > 1):
        raise DeferralError("costs must lie in [0, 1]")
    return float(out) if out.ndim == 0 else out


def is_binary(c) -> bool:
    c = np.asarray(c, dtype=float)
    return bool(np.all((c == 0.0) | (c == 1.0)))


# ---------------------------------------------------------------------------
# single-input conditional problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CondInstance:
    """Label distribution ``p`` and per-label costs ``c`` at a fixed input.

    Derived quantities follow the usual reparameterisation: ``q_y = p_y c_y``
    is the label mass that deferral cannot recover and ``p_defer`` is the
    mass recovered by deferring.
    """

    p: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if p.ndim != 1 or p.shape != c.shape:
            raise DeferralError("p and c must be 1-d vectors of equal length")
        if p.size < 2:
            raise DeferralError("need n >= 2 labels")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DeferralError("p must be a probability vector (sum within 1e-12)")
        if np.any(c < 0) or np.any(c > 1):
            raise DeferralError("costs must lie in [0, 1]")
        p.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.p.size

    @property
    def q(self) -> np.ndarray:
        return self.p * self.c

    @property
    def p_defer(self) -> float:
        return float(np.sum(self.p - self.q))

    @property
    def y_max(self) -> int:
        """Most likely label (1-based, lowest index on ties)."""
        return int(np.argmax(self.p)) + 1

    def mass_of(self, prediction: int) -> float:
        """``p_h``: the label mass collected by a prediction in ``1..n+1``."""
        if prediction == self.n + 1:
            return self.p_defer
        return float(self.p[prediction - 1])

    def to_dict(self) -> dict:
        return {"n": self.n, "p": self.p.tolist(), "c": self.c.tolist()}
