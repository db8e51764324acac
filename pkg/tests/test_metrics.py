import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rl2d.core import DeferralError
from rl2d.data import DeferralDataset, split_indices
from rl2d.metrics import cmd_evaluate, evaluate_scores
from rl2d.models import LinearDeferralModel


class TestEvaluate:
    def test_always_defer_expert_right(self):
        h = np.tile([0.0, 0.0, 0.0, 1.0], (5, 1))
        rep = evaluate_scores(h, [1, 2, 3, 1, 2], np.zeros(5))
        assert rep.system_accuracy == 1.0
        assert rep.coverage == 0.0
        assert rep.accepted_accuracy is None

    def test_perfect_classifier(self):
        y = np.array([1, 2, 3, 3])
        h = np.eye(4)[y - 1] * 5
        rep = evaluate_scores(h, y, np.ones(4))
        assert (rep.system_accuracy, rep.coverage, rep.accepted_accuracy) == (1.0, 1.0, 1.0)

    def test_counts(self):
        h = np.array([[1.0, 0, 0, 0], [1.0, 0, 0, 0], [0, 0, 0, 1.0], [0, 0, 0, 1.0]])
        rep = evaluate_scores(h, [1, 2, 1, 2], [1.0, 1.0, 0.25, 0.5])
        assert rep.accepted == 2 and rep.accepted_correct == 1 and rep.deferred == 2
        assert rep.accepted_accuracy == 0.5
        assert rep.mean_deferral_loss == pytest.approx((1 + 0.25 + 0.5) / 4)

    def test_empty(self):
        with pytest.raises(DeferralError):
            evaluate_scores(np.zeros((0, 3)), np.zeros(0, int), np.zeros(0))

    def test_dimension_mismatch(self):
        ds = DeferralDataset(np.zeros((10, 2)), np.ones(10, int), 2, expert=np.ones(10, int),
                             splits=split_indices(10, 0))
        model = LinearDeferralModel(np.zeros((3, 5)), np.zeros(3))
        with pytest.raises(DeferralError, match="d=5"):
            cmd_evaluate(model, ds)

    @given(seed=st.integers(0, 2**31), n=st.integers(2, 6), m=st.integers(1, 60))
    @settings(max_examples=100)
    def test_identities(self, seed, n, m):
        rng = np.random.default_rng(seed)
        h = rng.normal(0, 1, size=(m, n + 1))
        y = rng.integers(1, n + 1, m)
        c = rng.uniform(size=m)
        rep = evaluate_scores(h, y, c)
        assert rep.system_accuracy == 1.0 - rep.mean_deferral_loss
        assert abs(rep.reconstructed_loss() - rep.mean_deferral_loss) <= 1e-12
        assert rep.coverage == rep.accepted / rep.total
