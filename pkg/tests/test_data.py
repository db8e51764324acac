import numpy as np
import pytest

from rl2d.core import AffineExpertError, DeferralError, ExpertError, ExplicitTable
from rl2d.data import (
    DeferralDataset,
    SyntheticConfig,
    gen_realizable,
    load_csv,
    split_indices,
    write_csv,
)
from rl2d.losses import deferral_loss

SMALL = SyntheticConfig(n=3, d=5, samples=600, seed=4)


@pytest.fixture(scope="module")
def small():
    return gen_realizable(SMALL)


class TestGenerator:
    def test_witness_zero_on_every_split(self, small):
        ds, witness = small
        for split in ("train", "val", "test"):
            X, y, c = ds.part(split)
            assert np.all(deferral_loss(witness.scores(X), y, c) == 0.0)

    def test_same_seed_same_data(self, small):
        ds2, w2 = gen_realizable(SMALL)
        ds, w = small
        assert np.array_equal(ds.X, ds2.X) and np.array_equal(ds.y, ds2.y)
        assert np.array_equal(ds.expert, ds2.expert)
        assert np.array_equal(w.weights, w2.weights)

    def test_different_seed_differs(self, small):
        ds2, _ = gen_realizable(SyntheticConfig(n=3, d=5, samples=600, seed=5))
        assert not np.array_equal(small[0].X, ds2.X)

    def test_margin_respected(self, small):
        ds, witness = small
        s = np.sort(witness.scores(ds.X), axis=1)
        assert np.all(s[:, -1] - s[:, -2] >= SMALL.margin)

    def test_defer_region_has_correct_expert(self, small):
        ds, witness = small
        defer = witness.predict(ds.X) == ds.n + 1
        assert defer.any()
        assert np.all(ds.expert[defer] == ds.y[defer])

    def test_class_region_expert_sometimes_wrong(self, small):
        ds, witness = small
        pred = witness.predict(ds.X)
        cls = pred <= ds.n
        assert np.all(pred[cls] == ds.y[cls])
        wrong = np.mean(ds.expert[cls] != ds.y[cls])
        assert 0.35 < wrong < 0.65

    def test_no_defer_region(self):
        ds, witness = gen_realizable(SyntheticConfig(n=3, d=5, samples=300, defer_fraction=0.0))
        assert np.all(witness.predict(ds.X) <= ds.n)
        # the witness never defers, so its loss ignores every cost
        for cost in (ExpertError(), AffineExpertError(0.5, 0.5)):
            assert np.all(deferral_loss(witness.scores(ds.X), ds.y, ds.costs(cost)) == 0.0)

    def test_acceptance_size(self):
        ds, _ = gen_realizable(SyntheticConfig(n=3, d=10, samples=14286, margin=0.5))
        assert len(ds.splits["train"]) == 10_000

    def test_rejection_budget(self, monkeypatch):
        import rl2d.data as data

        real = data.witness_margin
        # centres (single vectors) pass, sampled points never reach the margin
        monkeypatch.setattr(data, "witness_margin",
                            lambda s: real(s) if np.ndim(s) == 1 else np.zeros(len(s)))
        with pytest.raises(DeferralError, match="rejection sampling kept 0/50"):
            gen_realizable(SyntheticConfig(n=3, d=5, samples=50))

    def test_unplaceable_centre(self):
        with pytest.raises(DeferralError, match="cluster centre"):
            gen_realizable(SyntheticConfig(n=3, d=2, samples=50, margin=10.0))

    @pytest.mark.parametrize("kw", [{"margin": 0.0}, {"defer_fraction": 1.5}, {"n": 1}])
    def test_bad_config(self, kw):
        with pytest.raises(DeferralError):
            SyntheticConfig(**kw)

    def test_expert_cost_consistency(self, small):
        ds, _ = small
        c = ds.costs(ExpertError())
        assert set(np.unique(c)) <= {0.0, 1.0}
        assert np.array_equal(c, (ds.expert != ds.y).astype(float))


class TestSplits:
    def test_disjoint_and_covering(self):
        s = split_indices(101, seed=3)
        allidx = np.concatenate([s["train"], s["val"], s["test"]])
        assert np.array_equal(np.sort(allidx), np.arange(101))
        assert len(s["train"]) == 70 and len(s["val"]) == 10

    def test_deterministic(self):
        a, b = split_indices(50, 1), split_indices(50, 1)
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_overlapping_splits_rejected(self):
        with pytest.raises(DeferralError):
            DeferralDataset(np.zeros((3, 1)), [1, 2, 1], 2, expert=[1, 1, 1],
                            splits={"train": [0, 1], "test": [1, 2]})


def _write(path, text):
    path.write_text(text)
    return path


class TestCSV:
    def test_expert_file(self, tmp_path):
        rows = ["f0,f1,f2,f3,label,expert"]
        rng = np.random.default_rng(0)
        for i in range(10):
            rows.append(",".join(f"{v:.3f}" for v in rng.normal(size=4)) + f",{i % 3 + 1},1")
        ds = load_csv(_write(tmp_path / "a.csv", "\n".join(rows) + "\n"))
        assert ds.n == 3 and ds.d == 4 and ds.m == 10
        assert isinstance(ds.default_cost, ExpertError)
        assert sum(len(v) for v in ds.splits.values()) == 10

    def test_cost_table_file(self, tmp_path):
        text = "x,label,cost_1,cost_2\n0.5,1,0.1,0.9\n1.5,2,0.3,0.37\n"
        ds = load_csv(_write(tmp_path / "b.csv", text))
        assert isinstance(ds.default_cost, ExplicitTable)
        assert ds.costs().tolist() == [0.1, 0.37]

    def test_malformed_row(self, tmp_path):
        text = "f0,label,expert\n1.0,1,2\nabc,2,1\n"
        with pytest.raises(DeferralError, match=r"row 3 column 'f0'"):
            load_csv(_write(tmp_path / "c.csv", text))

    def test_label_out_of_range(self, tmp_path):
        text = "f0,label,expert\n1.0,1,2\n2.0,0,1\n"
        with pytest.raises(DeferralError, match="row 3 column 'label'"):
            load_csv(_write(tmp_path / "d.csv", text), n=2)

    def test_missing_column(self, tmp_path):
        with pytest.raises(DeferralError, match="missing column"):
            load_csv(_write(tmp_path / "e.csv", "f0,expert\n1,1\n"))

    def test_no_expert_info(self, tmp_path):
        with pytest.raises(DeferralError, match="expert"):
            load_csv(_write(tmp_path / "f.csv", "f0,label\n1,1\n"))

    def test_wrong_field_count(self, tmp_path):
        with pytest.raises(DeferralError, match="row 2"):
            load_csv(_write(tmp_path / "g.csv", "f0,label,expert\n1,1\n"))

    def test_round_trip(self, tmp_path, small):
        ds, _ = small
        write_csv(ds, tmp_path / "rt.csv")
        back = load_csv(tmp_path / "rt.csv")
        assert np.array_equal(back.X, ds.X)
        assert np.array_equal(back.y, ds.y)
        assert np.array_equal(back.expert, ds.expert)
        for k in ds.splits:
            assert np.array_equal(back.splits[k], ds.splits[k])

    def test_seeded_split_without_column(self, tmp_path, small):
        ds, _ = small
        write_csv(ds, tmp_path / "ns.csv", with_split=False)
        a = load_csv(tmp_path / "ns.csv", seed=7)
        b = load_csv(tmp_path / "ns.csv", seed=7)
        assert all(np.array_equal(a.splits[k], b.splits[k]) for k in a.splits)
