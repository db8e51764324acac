import json

import pytest

from rl2d.cli import compare, main
from rl2d.core import AffineExpertError
from rl2d.data import SyntheticConfig, gen_realizable
from rl2d.train import Adam, TrainConfig

SYNTH = ["--samples", "700", "--d", "5"]


def _jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestCommands:
    def test_gen_train_evaluate(self, tmp_path, capsys):
        assert main(["gen-data", "--samples", "700", "--d", "5", "--out", str(tmp_path / "g")]) == 0
        data = str(tmp_path / "g" / "data.csv")
        assert main(["train", "--data", data, "--psi", "log", "--epochs", "5", "--lr", "0.01",
                     "--out", str(tmp_path / "t")]) == 0
        rows = _jsonl(tmp_path / "t" / "metrics.jsonl")
        assert [r["split"] for r in rows] == ["val", "test"]
        assert rows[0]["loss"] == "rl2d:log"
        assert (tmp_path / "t" / "history.csv").read_text().startswith("epoch,")
        capsys.readouterr()
        assert main(["evaluate", "--model", str(tmp_path / "t" / "model.ckpt"), "--data", data]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["system_accuracy"] == rows[1]["system_accuracy"]

    def test_witness_scores_perfectly(self, tmp_path, capsys):
        main(["gen-data", *SYNTH, "--out", str(tmp_path)])
        capsys.readouterr()
        main(["evaluate", "--model", str(tmp_path / "witness.ckpt"),
              "--data", str(tmp_path / "data.csv")])
        assert json.loads(capsys.readouterr().out)["system_accuracy"] == 1.0

    def test_verify_exit_codes(self, tmp_path):
        assert main(["verify", "lemma", "--size", "100", "--out", str(tmp_path)]) == 0
        summary = _jsonl(tmp_path / "summary.jsonl")[0]
        assert summary["passed"] and summary["violations"] == 0
        assert (tmp_path / "lemma-counterexamples.jsonl").read_text() == ""

    def test_verify_bounds_writes_reports(self, tmp_path):
        code = main(["verify", "bounds", "--size", "2", "--scores", "3", "--out", str(tmp_path)])
        rows = _jsonl(tmp_path / "bounds.jsonl")
        bound_rows = [r for r in rows if r["kind"] == "bound"]
        assert len(bound_rows) == 2 * 3 * 2 * 3
        bad = _jsonl(tmp_path / "bounds-counterexamples.jsonl") if code else []
        assert code == (1 if bad else 0)

    def test_unknown_suite(self):
        with pytest.raises(SystemExit):
            main(["verify", "nonsense"])

    def test_bad_cost_reports_error(self, capsys):
        assert main(["train", *SYNTH, "--cost", "affine:0.9,0.5", "--epochs", "1"]) == 2
        assert "alpha + beta" in capsys.readouterr().err

    def test_compare_table(self, tmp_path, capsys):
        assert main(["compare", *SYNTH, "--epochs", "2", "--seeds", "0", "1",
                     "--losses", "rl2d:mae", "ce", "--out", str(tmp_path)]) == 0
        rows = _jsonl(tmp_path / "compare.jsonl")
        assert [r["loss"] for r in rows] == ["rl2d:mae", "ce"]
        assert all(r["ok"] == 2 for r in rows)
        assert "rl2d:mae" in capsys.readouterr().out


class TestCompare:
    def test_error_isolation(self):
        ds, _ = gen_realizable(SyntheticConfig(n=3, d=4, samples=500))
        cost = AffineExpertError(0.5, 0.2)
        rows = compare(ds, ["ce", "rl2d:mae"], [0],
                       lambda loss, seed: TrainConfig(loss=loss, cost=cost, epochs=1, seed=seed))
        assert rows[0]["ok"] == 0 and "binary" in rows[0]["errors"][0]["error"]
        assert rows[1]["ok"] == 1

    def test_single_cell(self):
        ds, _ = gen_realizable(SyntheticConfig(n=3, d=4, samples=500))
        rows = compare(ds, ["rl2d:log"], [3], lambda loss, seed: TrainConfig(loss=loss, epochs=1))
        assert len(rows) == 1 and rows[0]["system_accuracy_std"] == 0.0

    def test_six_losses_realizable(self):
        ds, _ = gen_realizable(SyntheticConfig(n=3, d=10, samples=3000, seed=1))
        losses = ["ce", "ova", "rs", "general:gce0.7", "rl2d:gce0.7", "rl2d:mae"]
        rows = compare(ds, losses, [0, 1, 2],
                       lambda loss, seed: TrainConfig(loss=loss, epochs=40, seed=seed,
                                                      optimizer=Adam(0.01)))
        assert len(rows) == 6
        for r in rows:
            if r["loss"].startswith("rl2d"):
                assert r["system_accuracy_mean"] >= 0.99, r["loss"]
