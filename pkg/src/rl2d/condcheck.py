"""Conditional (single-input) errors, regrets and numerical bound certification.

For a fixed input the label distribution ``p`` and costs ``c`` are collected
in a :class:`~rl2d.core.CondInstance`.  The deferral regret has a closed
form; the surrogate's best-in-class value is approximated by a multi-start
local search over the full score space (last score pinned to 0, which loses
nothing because every loss here is shift invariant).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import CondInstance, DeferralError, PsiSpec, check_scores, is_binary
from .losses import LossSpec, deferral_loss, rl2d_loss

# ---------------------------------------------------------------------------
# deferral loss: closed forms
# ---------------------------------------------------------------------------


def _scores_for(inst: CondInstance, scores) -> np.ndarray:
    h = check_scores(scores)
    if h.shape[-1] != inst.n + 1:
        raise DeferralError(
            f"instance has n={inst.n} but scores have {h.shape[-1]} entries"
        )
    return h


def _mass(inst: CondInstance, h: np.ndarray) -> np.ndarray:
    masses = np.append(inst.p, inst.p_defer)
    return masses[np.argmax(h, axis=-1)]


def cond_error_deferral(inst: CondInstance, scores):
    """Expected deferral loss under ``p``: ``1 - p_h``."""
    h = _scores_for(inst, scores)
    out = 1.0 - _mass(inst, h)
    return float(out) if h.ndim == 1 else out


def best_deferral_mass(inst: CondInstance) -> float:
    return max(float(inst.p.max()), inst.p_defer)


def cond_regret_deferral(inst: CondInstance, scores):
    """``max(p_ymax, p_defer) - p_h``; zero exactly for a best prediction."""
    h = _scores_for(inst, scores)
    out = best_deferral_mass(inst) - _mass(inst, h)
    return float(out) if h.ndim == 1 else out


def enumerated_cond_error_deferral(inst: CondInstance, prediction: int | None = None):
    """Brute-force conditional deferral error of a fixed prediction.

    Averages the pointwise deferral loss over labels; shares nothing with the
    closed form above.  With ``prediction=None`` returns the errors of all
    ``n + 1`` predictions.
    """
    n = inst.n
    preds = np.arange(1, n + 2) if prediction is None else np.array([prediction])
    scores = np.zeros((preds.size, n, n + 1))
    scores[np.arange(preds.size), :, preds - 1] = 1.0
    labels = np.arange(1, n + 1)
    per_label = deferral_loss(scores, labels, inst.c)
    out = per_label @ inst.p
    return out if prediction is None else float(out[0])


# ---------------------------------------------------------------------------
# surrogate conditional error
# ---------------------------------------------------------------------------


def _check_compatible(loss: LossSpec, inst: CondInstance):
    if loss.binary_only and not is_binary(inst.c):
        raise DeferralError(f"{loss.name} requires expert-error (binary) costs")


def cond_error_surrogate(loss: LossSpec, inst: CondInstance, scores):
    """``sum_y p_y * loss(scores, y, c_y)`` for one score vector or a batch."""
    _check_compatible(loss, inst)
    h = _scores_for(inst, scores)
    labels = np.arange(1, inst.n + 1)
    per_label = loss.value(h[..., None, :], labels, inst.c)
    out = per_label @ inst.p
    return float(out) if h.ndim == 1 else out


def cond_gradient_surrogate(loss: LossSpec, inst: CondInstance, scores) -> np.ndarray:
    _check_compatible(loss, inst)
    h = _scores_for(inst, scores)
    labels = np.arange(1, inst.n + 1)
    g = loss.gradient(h[..., None, :], labels, inst.c)
    return np.einsum("...yj,y->...j", g, inst.p)


# ---------------------------------------------------------------------------
# best-in-class surrogate value
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptConfig:
    """Inner-minimisation settings.

    ``bound`` confines each free score to ``[-bound, bound]``; ``gtol`` is the
    projected-gradient tolerance of each local run and ``loose_gtol`` the
    level above which a run that hit ``max_iter`` is flagged.
    """

    restarts: int = 8
    max_iter: int = 2000
    ftol: float = 1e-15
    gtol: float = 1e-11
    loose_gtol: float = 1e-6
    bound: float = 40.0
    init_std: float = 3.0
    vertex_scale: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 8:
            raise DeferralError("need at least 8 restarts")


@dataclass
class BestInClass:
    value: float
    scores: np.ndarray
    converged: bool
    start_values: list = field(default_factory=list)


def _starts(inst: CondInstance, cfg: OptConfig, rng: np.random.Generator):
    n = inst.n
    yield np.zeros(n)
    # one-hot at the prediction that is optimal for the deferral loss
    masses = np.append(inst.p, inst.p_defer)
    k = int(np.argmax(masses))
    if k == n:
        yield np.full(n, -cfg.vertex_scale)
    else:
        v = np.zeros(n)
        v[k] = cfg.vertex_scale
        yield v
    for _ in range(cfg.restarts - 2):
        yield np.clip(rng.normal(0.0, cfg.init_std, size=n), -cfg.bound, cfg.bound)


def best_in_class_surrogate(
    loss: LossSpec, inst: CondInstance, config: OptConfig | None = None
) -> BestInClass:
    """Approximate ``inf_h`` of the conditional surrogate error.

    The returned value is attained by the returned scores, so it is an upper
    bound on the true infimum.
    """
    cfg = config or OptConfig()
    _check_compatible(loss, inst)
    n = inst.n
    labels = np.arange(1, n + 1)
    tiled = np.zeros((n, n + 1))

    def fun(z):
        tiled[:, :n] = z
        val = loss.value(tiled, labels, inst.c) @ inst.p
        grad = np.einsum("yj,y->j", loss.gradient(tiled, labels, inst.c), inst.p)
        return float(val), grad[:n]

    rng = np.random.default_rng(cfg.seed)
    bounds = [(-cfg.bound, cfg.bound)] * n
    best_val, best_z, best_ok = math.inf, None, False
    start_values = []
    for z0 in _starts(inst, cfg, rng):
        res = minimize(
            fun,
            z0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": cfg.max_iter, "ftol": cfg.ftol, "gtol": cfg.gtol},
        )
        val = float(res.fun)
        start_values.append(val)
        if val < best_val:
            best_val, best_z = val, np.asarray(res.x, dtype=float)
            pg = _projected_grad(res.jac, res.x, cfg.bound)
            best_ok = bool(res.success) or pg <= cfg.loose_gtol
    scores = np.append(best_z, 0.0)
    return BestInClass(best_val, scores, best_ok, start_values)


def _projected_grad(g, x, bound) -> float:
    g = np.asarray(g, dtype=float).copy()
    g[(x <= -bound) & (g > 0)] = 0.0
    g[(x >= bound) & (g < 0)] = 0.0
    return float(np.max(np.abs(g))) if g.size else 0.0


def grid_best_in_class(
    loss: LossSpec,
    inst: CondInstance,
    lo: float = -10.0,
    hi: float = 10.0,
    step: float = 0.25,
    keep: int = 8,
    levels: int = 10,
    shrink: float = 4.0,
) -> tuple[float, np.ndarray]:
    """Derivative-free oracle: dense grid on ``[lo, hi]^n`` then local grid zooms.

    The last score is pinned at 0.  The ``keep`` best coarse cells are each
    refined by repeatedly re-gridding a shrinking window around the incumbent.
    Only practical for small ``n`` (the coarse grid has ``((hi-lo)/step+1)^n``
    points).
    """
    n = inst.n
    axis = np.arange(lo, hi + step / 2, step)
    pts = np.array(list(itertools.product(axis, repeat=n)))
    vals = _eval_pinned(loss, inst, pts)
    order = np.argsort(vals)[:keep]
    best_val, best_z = float(vals[order[0]]), pts[order[0]]
    offsets = np.array(list(itertools.product(np.linspace(-1.0, 1.0, 9), repeat=n)))
    for idx in order:
        z, v, width = pts[idx], float(vals[idx]), step
        for _ in range(levels):
            cand = np.clip(z + width * offsets, lo, hi)
            cv = _eval_pinned(loss, inst, cand)
            j = int(np.argmin(cv))
            if cv[j] <= v:
                z, v = cand[j], float(cv[j])
            width /= shrink
        if v < best_val:
            best_val, best_z = v, z
    return best_val, np.append(best_z, 0.0)


def _eval_pinned(loss, inst, z):
    h = np.concatenate([z, np.zeros((z.shape[0], 1))], axis=1)
    return cond_error_surrogate(loss, inst, h)


# ---------------------------------------------------------------------------
# Gamma transforms and bound checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaSpec:
    """Concave transform linking surrogate regret to deferral regret.

    ``sqrt(2 t)`` for log, ``sqrt(2 (n+1)^q t)`` for gce(q), ``(n+1) t`` for mae.
    """

    psi: PsiSpec
    n: int

    @property
    def needs_expert_error_costs(self) -> bool:
        return self.psi.kind in ("log", "gce")

    def __call__(self, t):
        return gamma_transform(self, t)


def gamma_transform(gamma: GammaSpec, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DeferralError("gamma is defined for t >= 0")
    kind = gamma.psi.kind
    if kind == "log":
        out = np.sqrt(2.0 * t_arr)
    elif kind == "gce":
        out = np.sqrt(2.0 * (gamma.n + 1) ** gamma.psi.q * t_arr)
    else:
        out = (gamma.n + 1) * t_arr
    return float(out) if out.ndim == 0 else out


def is_expert_error_costs(c) -> bool:
    """True when ``c_y = 1[g != y]`` for some expert label ``g`` (exactly one zero)."""
    c = np.asarray(c, dtype=float)
    return is_binary(c) and int(np.sum(c == 0.0)) == 1


@dataclass
class RegretReport:
    instance: CondInstance
    scores: np.ndarray
    loss: str
    deferral_regret: float
    surrogate_regret: float
    raw_surrogate_regret: float
    cond_error: float
    best_in_class: float
    gamma_of_surrogate: float
    satisfied: bool
    slack_used: float
    inner_tol: float
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            **self.instance.to_dict(),
            "scores": np.asarray(self.scores).tolist(),
            "loss": self.loss,
            "deferral_regret": self.deferral_regret,
            "surrogate_regret": self.surrogate_regret,
            "raw_surrogate_regret": self.raw_surrogate_regret,
            "cond_error": self.cond_error,
            "best_in_class": self.best_in_class,
            "gamma_of_surrogate": self.gamma_of_surrogate,
            "satisfied": self.satisfied,
            "slack_used": self.slack_used,
            "inner_tol": self.inner_tol,
            "converged": self.converged,
        }


def check_regret_bound(
    inst: CondInstance,
    scores,
    psi: PsiSpec,
    gamma: GammaSpec | None = None,
    slack: float = 1e-3,
    inner_tol: float = 1e-6,
    best: BestInClass | None = None,
    opt: OptConfig | None = None,
) -> RegretReport:
    """Check ``deferral_regret <= Gamma(surrogate_regret + inner_tol) + slack`` for RL2D.

    Pass ``best`` to reuse a best-in-class value across many score vectors of
    the same instance.
    """
    gamma = gamma or GammaSpec(psi, inst.n)
    if gamma.n != inst.n or gamma.psi != psi:
        raise DeferralError("gamma spec does not match the instance / psi")
    if gamma.needs_expert_error_costs and not is_expert_error_costs(inst.c):
        raise DeferralError(
            f"the {psi.name} bound holds for expert-error costs only; use mae for general costs"
        )
    loss = LossSpec("rl2d", psi)
    h = _scores_for(inst, scores)
    if best is None:
        best = best_in_class_surrogate(loss, inst, opt)
    dreg = cond_regret_deferral(inst, h)
    cond = cond_error_surrogate(loss, inst, h)
    raw = cond - best.value
    # the approximate infimum is one-sided; a lower evaluated point just tightens it
    cstar = min(best.value, cond)
    sreg = max(cond - cstar, 0.0)
    g = gamma_transform(gamma, sreg + inner_tol)
    return RegretReport(
        instance=inst,
        scores=h,
        loss=loss.name,
        deferral_regret=float(dreg),
        surrogate_regret=float(sreg),
        raw_surrogate_regret=float(raw),
        cond_error=float(cond),
        best_in_class=float(cstar),
        gamma_of_surrogate=float(g),
        satisfied=bool(dreg <= g + slack),
        slack_used=slack,
        inner_tol=inner_tol,
        converged=best.converged,
    )


# ---------------------------------------------------------------------------
# minimizability gap along the scaling family
# ---------------------------------------------------------------------------


def scaling_gap_curve(psi: PsiSpec, witness_scores, y, c, alphas, weights=None) -> np.ndarray:
    """Mean RL2D loss of ``alpha * witness`` for each ``alpha``.

    The witness must incur zero deferral loss on every support point; on such
    inputs the curve decays to 0 as ``alpha`` grows.
    """
    h = check_scores(witness_scores)
    if h.ndim == 1:
        h = h[None, :]
    y = np.atleast_1d(np.asarray(y))
    c = np.broadcast_to(np.asarray(c, dtype=float), y.shape)
    bad = np.flatnonzero(deferral_loss(h, y, c) != 0.0)
    if bad.size:
        i = int(bad[0])
        raise DeferralError(
            f"witness is not zero-error on {bad.size} support point(s); first at index {i} "
            f"(label {int(y[i])}, cost {float(c[i]):g}, scores {h[i].tolist()})"
        )
    w = np.full(y.shape, 1.0 / y.size) if weights is None else np.asarray(weights, float)
    if weights is not None:
        w = w / w.sum()
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas < 0) or np.any(np.diff(alphas) <= 0):
        raise DeferralError("alphas must be non-negative and strictly increasing")
    return np.array([float(rl2d_loss(psi, a * h, y, c) @ w) for a in alphas])


def random_instance(
    rng: np.random.Generator, n: int, costs: str = "expert"
) -> CondInstance:
    """Dirichlet(1) label distribution with expert-error or uniform costs."""
    p = rng.dirichlet(np.ones(n))
    p = p / p.sum()
    if costs == "expert":
        g = rng.integers(1, n + 1)
        c = (np.arange(1, n + 1) != g).astype(float)
    elif costs == "uniform":
        c = rng.uniform(0.0, 1.0, size=n)
    else:
        raise DeferralError(f"unknown cost distribution {costs!r}")
    return CondInstance(p, c)
