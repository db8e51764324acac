"""Acceptance criteria, one test per criterion, at the stated sizes and tolerances.

Each test records a PASS/FAIL line that the terminal summary prints after the run.
"""

import time

import numpy as np
import pytest

from rl2d import suites
from rl2d.core import PsiSpec
from rl2d.data import SyntheticConfig, gen_realizable
from rl2d.losses import LossSpec, deferral_loss
from rl2d.metrics import cmd_evaluate, evaluate_scores
from rl2d.train import Adam, TrainConfig, train

REALIZABLE = SyntheticConfig(n=3, d=10, samples=14286, margin=0.5, seed=0)
RL2D = [LossSpec("rl2d", p) for p in (PsiSpec.log(), PsiSpec.gce(0.7), PsiSpec.mae())]
DIAGNOSTIC = [LossSpec("ce"), LossSpec("ova")]
BUDGET = TrainConfig(epochs=200, batch_size=128, optimizer=Adam(1e-3), seed=0)


@pytest.fixture(scope="module")
def realizable():
    return gen_realizable(REALIZABLE)


@pytest.fixture(scope="module")
def trained(realizable):
    ds, _ = realizable
    out = {}
    for loss in RL2D + DIAGNOSTIC:
        cfg = TrainConfig(loss=loss, epochs=BUDGET.epochs, batch_size=BUDGET.batch_size,
                          optimizer=BUDGET.optimizer, seed=BUDGET.seed)
        out[loss.name] = train(ds, cfg)
    return out


def test_domination(criterion):
    res = suites.domination(draws=100_000, seed=0, slack=1e-12)
    ok = res.passed and res.seconds < 10.0
    criterion(1, "domination of the deferral loss", ok,
              f"{res.checked} checks (10^5 draws x 3 psi), violations={res.violations}, "
              f"max excess={res.max_dev:.3g}, {res.seconds:.2f}s (limit 10s)")
    assert ok


def test_lemma_oracle(criterion):
    res = suites.lemma(instances=10_000, seed=0, tol=1e-12)
    ok = res.passed and res.max_dev <= 1e-12 and res.seconds < 5.0
    criterion(2, "closed-form conditional deferral regret vs enumeration", ok,
              f"10^4 instances, max |dev|={res.max_dev:.3g} (tol 1e-12), {res.seconds:.2f}s (limit 5s)")
    assert ok


def _bound_detail(res):
    cells = ", ".join(f"{k}: {v['violations']}/{v['checked']} (max excess {v['max_excess']:.3g})"
                      for k, v in res.details["cells"].items())
    return (f"violations={res.violations} [{cells}], grid agreement max "
            f"{res.details['grid_max_dev']:.2g} (tol 1e-4), {res.seconds:.0f}s")


def test_bound_log_gce_expert_costs(criterion):
    res = suites.bounds(instances=500, scores_per_instance=20, seed=0, slack=1e-3,
                        psis=(PsiSpec.log(), PsiSpec.gce(0.7)))
    ok = res.passed and res.details["grid_max_dev"] <= 1e-4 and res.seconds < 600
    criterion(3, "regret bound, log and gce(0.7), expert-error costs", ok, _bound_detail(res))
    assert ok, res.counterexamples[:3]


def test_bound_mae_general_costs(criterion):
    res = suites.bounds(instances=500, scores_per_instance=20, seed=0, slack=1e-3,
                        psis=(PsiSpec.mae(),))
    ok = res.passed and res.details["grid_max_dev"] <= 1e-4
    criterion(4, "regret bound, mae, uniform costs", ok, _bound_detail(res))
    assert ok, res.counterexamples[:3]


def test_rs_identity(criterion):
    res = suites.rs_identity(draws=10_000, seed=0, tol=1e-9)
    criterion(5, "rs equals twice rl2d(log) on binary costs", res.passed,
              f"10^4 draws, max |dev|={res.max_dev:.3g} (tol 1e-9)")
    assert res.passed


def test_gradients(criterion):
    res = suites.gradcheck(points=1000, seed=0, tol=1e-5, step=1e-5)
    worst = max(res.details["per_loss"], key=res.details["per_loss"].get)
    criterion(6, "analytic gradients vs central differences", res.passed,
              f"{len(res.details['per_loss'])} losses x 10^3 points, max rel err "
              f"{res.max_dev:.3g} ({worst}) (tol 1e-5)")
    assert res.passed


def test_realizable_consistency(criterion, realizable, trained):
    ds, witness = realizable
    X, y, c = ds.part("test")
    witness_loss = float(np.max(deferral_loss(witness.scores(ds.X), ds.y, ds.costs())))
    errs = {name: cmd_evaluate(model, ds, "test").mean_deferral_loss
            for name, (model, _) in trained.items()}
    gating = {s.name: errs[s.name] for s in RL2D}
    ok = witness_loss == 0.0 and all(e <= 0.01 for e in gating.values())
    shown = ", ".join(f"{k}={v:.4f}" for k, v in gating.items())
    diag = ", ".join(f"{s.name}={errs[s.name]:.4f}" for s in DIAGNOSTIC)
    criterion(7, "realizable consistency within 200 epochs", ok,
              f"{len(ds.splits['train'])} train points, witness max loss={witness_loss}, "
              f"test error {shown} (limit 0.01); diagnostic {diag}")
    assert ok


def test_gap_vanishes(criterion, realizable):
    ds, witness = realizable
    h, y, c = witness.scores(ds.X), ds.y, ds.costs()
    from rl2d.condcheck import scaling_gap_curve

    lines, ok = [], True
    for psi in (PsiSpec.log(), PsiSpec.gce(0.7), PsiSpec.mae()):
        curve = scaling_gap_curve(psi, h, y, c, suites.GAP_ALPHAS)
        mono = bool(np.all(np.diff(curve) <= 0.0))
        ok &= mono and curve[-1] <= 1e-3
        lines.append(f"{psi.name}: non-increasing={mono}, at 64 {curve[-1]:.3g}")
    criterion(8, "scaled-witness gap vanishes", ok, "; ".join(lines) + " (limit 1e-3)")
    assert ok


def test_metric_identities(criterion, realizable, trained):
    ds, witness = realizable
    models = [witness] + [m for m, _ in trained.values()]
    worst, exact, count = 0.0, True, 0
    for model in models:
        for split in ("train", "val", "test"):
            rep = cmd_evaluate(model, ds, split)
            exact &= rep.system_accuracy == 1.0 - rep.mean_deferral_loss
            worst = max(worst, abs(rep.reconstructed_loss() - rep.mean_deferral_loss))
            count += 1
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 300))
        rep = evaluate_scores(rng.normal(0, 2, (m, n + 1)), rng.integers(1, n + 1, m),
                              rng.uniform(size=m))
        exact &= rep.system_accuracy == 1.0 - rep.mean_deferral_loss
        worst = max(worst, abs(rep.reconstructed_loss() - rep.mean_deferral_loss))
        count += 1
    ok = exact and worst <= 1e-12
    criterion(9, "metric identities", ok,
              f"{count} evaluations, system acc = 1 - mean loss exactly: {exact}, "
              f"reconstruction max |dev|={worst:.3g} (tol 1e-12)")
    assert ok
