"""Property and oracle suites behind ``rl2d verify``.

Each suite returns a :class:`SuiteResult`; ``passed`` is true iff no
violation was found.  ``records`` holds line-delimited report rows and
``counterexamples`` the subset that failed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .condcheck import (
    GammaSpec,
    OptConfig,
    best_in_class_surrogate,
    check_regret_bound,
    cond_regret_deferral,
    enumerated_cond_error_deferral,
    cond_error_deferral,
    grid_best_in_class,
    random_instance,
    scaling_gap_curve,
)
from .core import DeferralError, PsiSpec
from .data import SyntheticConfig, gen_realizable
from .losses import (
    LossSpec,
    comp_sum_gradient,
    comp_sum_loss,
    deferral_loss,
    modified_comp_sum_gradient,
    modified_comp_sum_loss,
    rl2d_loss,
    rs_baseline,
)
from .train import relative_error

ALL_PSI = (PsiSpec.log(), PsiSpec.gce(0.7), PsiSpec.mae())
GAP_ALPHAS = (0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checked: int
    violations: int
    max_dev: float
    seconds: float
    details: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    counterexamples: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "suite": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "violations": self.violations,
            "max_dev": self.max_dev,
            "seconds": round(self.seconds, 3),
            **self.details,
        }


def _draw_batch(rng, n, size, score_std=3.0):
    h = rng.normal(0.0, score_std, size=(size, n + 1))
    y = rng.integers(1, n + 1, size=size)
    c = rng.uniform(0.0, 1.0, size=size)
    return h, y, c


def domination(draws: int = 100_000, seed: int = 0, slack: float = 1e-12, ns=(2, 3, 5)):
    """``deferral_loss <= rl2d_loss / Psi(2/3)`` for every Psi on random inputs."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    per_n = np.full(len(ns), draws // len(ns))
    per_n[: draws - per_n.sum()] += 1
    checked, bad, worst = 0, [], -np.inf
    for n, size in zip(ns, per_n):
        h, y, c = _draw_batch(rng, n, int(size))
        ldef = deferral_loss(h, y, c)
        for psi in ALL_PSI:
            bound = rl2d_loss(psi, h, y, c) / psi.at_two_thirds
            dev = ldef - bound
            worst = max(worst, float(dev.max()))
            checked += dev.size
            for i in np.flatnonzero(dev > slack):
                bad.append({"n": int(n), "psi": psi.name, "scores": h[i].tolist(),
                            "y": int(y[i]), "c": float(c[i]), "excess": float(dev[i])})
    return SuiteResult("domination", not bad, checked, len(bad), worst,
                       time.perf_counter() - t0, {"slack": slack}, list(bad), list(bad))


def lemma(instances: int = 10_000, seed: int = 0, tol: float = 1e-12, ns=(2, 3, 4, 5)):
    """Closed-form conditional error of the deferral loss vs enumeration over predictions."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    costs = ("expert", "uniform")
    checked, bad, worst = 0, [], 0.0
    for k in range(instances):
        n = ns[k % len(ns)]
        inst = random_instance(rng, n, costs[(k // len(ns)) % 2])
        eye = np.eye(n + 1)
        closed = cond_error_deferral(inst, eye)
        brute = enumerated_cond_error_deferral(inst)
        # the regret identity: excess over the best prediction
        reg_closed = cond_regret_deferral(inst, eye)
        reg_brute = brute - brute.min()
        dev = float(max(np.max(np.abs(closed - brute)), np.max(np.abs(reg_closed - reg_brute))))
        worst = max(worst, dev)
        checked += n + 1
        if dev > tol:
            bad.append({**inst.to_dict(), "deviation": dev})
    return SuiteResult("lemma", not bad, checked, len(bad), worst,
                       time.perf_counter() - t0, {"tolerance": tol}, list(bad), list(bad))


def bounds(
    instances: int = 500,
    scores_per_instance: int = 20,
    seed: int = 0,
    slack: float = 1e-3,
    inner_tol: float = 1e-6,
    ns=(2, 3),
    psis=ALL_PSI,
    grid_n: int = 2,
    grid_tol: float = 1e-4,
    score_std: float = 3.0,
    opt: OptConfig | None = None,
):
    """Certify ``deferral_regret <= Gamma(surrogate_regret) + slack`` for RL2D.

    Log and gce are checked on expert-error costs, mae on uniform costs.  At
    ``n == grid_n`` the multi-start best-in-class value is cross-checked
    against the grid oracle; a disagreement above ``grid_tol`` is a violation.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    opt = opt or OptConfig(seed=seed)
    records, bad = [], []
    checked, worst, grid_worst, unconverged = 0, -np.inf, 0.0, 0
    per_cell = {}
    for psi in psis:
        loss = LossSpec("rl2d", psi)
        costs = "uniform" if psi.kind == "mae" else "expert"
        for n in ns:
            gamma = GammaSpec(psi, n)
            cell = per_cell.setdefault(f"{psi.name}/n={n}", {"checked": 0, "violations": 0,
                                                              "max_excess": -np.inf})
            for i in range(instances):
                inst = random_instance(rng, n, costs)
                best = best_in_class_surrogate(
                    loss, inst, OptConfig(**{**opt.__dict__, "seed": int(rng.integers(2**31))})
                )
                unconverged += not best.converged
                if n == grid_n:
                    gval, gz = grid_best_in_class(loss, inst)
                    gdev = abs(gval - best.value)
                    grid_worst = max(grid_worst, gdev)
                    if gdev > grid_tol:
                        row = {**inst.to_dict(), "loss": loss.name, "kind": "grid-disagreement",
                               "multistart": best.value, "grid": gval, "grid_scores": gz.tolist()}
                        bad.append(row)
                        records.append(row)
                for _ in range(scores_per_instance):
                    h = rng.normal(0.0, score_std, size=n + 1)
                    rep = check_regret_bound(inst, h, psi, gamma, slack, inner_tol, best=best)
                    excess = rep.deferral_regret - rep.gamma_of_surrogate
                    row = {**rep.to_dict(), "kind": "bound", "excess": excess}
                    records.append(row)
                    checked += 1
                    cell["checked"] += 1
                    cell["max_excess"] = max(cell["max_excess"], excess)
                    worst = max(worst, excess)
                    if not rep.satisfied:
                        cell["violations"] += 1
                        bad.append(row)
    details = {"slack": slack, "inner_tol": inner_tol, "grid_max_dev": grid_worst,
               "grid_tol": grid_tol, "unconverged": unconverged, "cells": per_cell}
    return SuiteResult("bounds", not bad, checked, len(bad), worst,
                       time.perf_counter() - t0, details, records, bad)


def rs_identity(draws: int = 10_000, seed: int = 0, tol: float = 1e-9, ns=(2, 3, 5)):
    """``rs_baseline == 2 * rl2d_loss(log)`` on binary costs."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    bad, worst, checked = [], 0.0, 0
    for k, n in enumerate(ns):
        size = draws // len(ns) + (k < draws % len(ns))
        h, y, _ = _draw_batch(rng, n, size)
        c = rng.integers(0, 2, size=size).astype(float)
        dev = np.abs(rs_baseline(h, y, c) - 2.0 * rl2d_loss(PsiSpec.log(), h, y, c))
        worst = max(worst, float(dev.max()))
        checked += size
        for i in np.flatnonzero(dev > tol):
            bad.append({"n": n, "scores": h[i].tolist(), "y": int(y[i]), "c": float(c[i]),
                        "deviation": float(dev[i])})
    return SuiteResult("rs-identity", not bad, checked, len(bad), worst,
                       time.perf_counter() - t0, {"tolerance": tol}, list(bad), list(bad))


def _gradient_targets():
    out = []
    for kind in ("rl2d", "general"):
        for psi in ALL_PSI:
            spec = LossSpec(kind, psi)
            out.append((spec.name, spec.value, spec.gradient, False))
    for kind in ("ce", "ova", "rs"):
        spec = LossSpec(kind)
        out.append((spec.name, spec.value, spec.gradient, True))
    for psi in ALL_PSI:
        out.append((f"comp:{psi.name}", lambda h, y, c, p=psi: comp_sum_loss(p, h, y),
                    lambda h, y, c, p=psi: comp_sum_gradient(p, h, y), False))
        out.append((f"modified:{psi.name}", lambda h, y, c, p=psi: modified_comp_sum_loss(p, h, y),
                    lambda h, y, c, p=psi: modified_comp_sum_gradient(p, h, y), False))
    return out


def gradcheck(points: int = 1000, seed: int = 0, tol: float = 1e-5, step: float = 1e-5,
              ns=(2, 3, 5)):
    """Analytic score gradients vs central differences, per point and per loss."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    bad, worst, checked, per_loss = [], 0.0, 0, {}
    for name, value, grad, binary in _gradient_targets():
        lw = 0.0
        for k in range(points):
            n = ns[k % len(ns)]
            h = rng.normal(0.0, 3.0, size=n + 1)
            y = int(rng.integers(1, n + 1))
            c = float(rng.integers(0, 2)) if binary else float(rng.uniform())
            g = np.asarray(grad(h, y, c))
            fd = np.empty(n + 1)
            for j in range(n + 1):
                e = np.zeros(n + 1)
                e[j] = step
                fd[j] = (value(h + e, y, c) - value(h - e, y, c)) / (2 * step)
            err = relative_error(g, fd)
            lw = max(lw, err)
            checked += 1
            if err > tol:
                bad.append({"loss": name, "scores": h.tolist(), "y": y, "c": c,
                            "analytic": g.tolist(), "numeric": fd.tolist(), "rel_error": err})
        per_loss[name] = lw
        worst = max(worst, lw)
    return SuiteResult("gradcheck", not bad, checked, len(bad), worst,
                       time.perf_counter() - t0, {"tolerance": tol, "step": step,
                                                  "per_loss": per_loss}, list(bad), list(bad))


def gap(seed: int = 0, alphas=GAP_ALPHAS, tol: float = 1e-3, config: SyntheticConfig | None = None):
    """Scaled-witness RL2D loss must be non-increasing in alpha and <= tol at the end."""
    t0 = time.perf_counter()
    cfg = config or SyntheticConfig(n=3, d=10, samples=14286, margin=0.5, seed=seed)
    ds, witness = gen_realizable(cfg)
    h, y, c = witness.scores(ds.X), ds.y, ds.costs()
    records, bad, worst = [], [], 0.0
    for psi in ALL_PSI:
        curve = scaling_gap_curve(psi, h, y, c, alphas)
        rises = np.diff(curve)
        ok = bool(np.all(rises <= 0.0) and curve[-1] <= tol)
        row = {"psi": psi.name, "alphas": list(alphas), "curve": curve.tolist(),
               "max_rise": float(rises.max()), "final": float(curve[-1]), "ok": ok}
        records.append(row)
        worst = max(worst, float(curve[-1]))
        if not ok:
            bad.append(row)
    return SuiteResult("gap", not bad, len(ALL_PSI), len(bad), worst,
                       time.perf_counter() - t0, {"tolerance": tol, "points": ds.m}, records, bad)


SUITES = {
    "domination": domination,
    "lemma": lemma,
    "bounds": bounds,
    "rs-identity": rs_identity,
    "gap": gap,
    "gradcheck": gradcheck,
}


def run_suite(name: str, **params) -> SuiteResult:
    if name not in SUITES:
        raise DeferralError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name](**params)
