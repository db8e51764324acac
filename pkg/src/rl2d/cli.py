"""``rl2d`` command line: train, evaluate, compare, verify, gen-data."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import DeferralError, parse_cost, parse_psi
from .data import SyntheticConfig, gen_realizable, load_csv, write_csv
from .losses import LossSpec, parse_loss
from .metrics import cmd_evaluate
from .models import load_checkpoint, save_checkpoint
from .suites import SUITES, run_suite
from .train import SGD, Adam, TrainConfig, TrainingError, train

DEFAULT_COMPARE = ("ce", "ova", "rs", "general:gce0.7", "rl2d:gce0.7", "rl2d:mae")

# which keyword each suite uses for --size
SIZE_PARAM = {
    "domination": "draws",
    "lemma": "instances",
    "bounds": "instances",
    "rs-identity": "draws",
    "gradcheck": "points",
}


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _dumps(row) -> str:
    return json.dumps(row, default=_jsonable, sort_keys=True)


def _write_jsonl(path: Path, rows, mode="w") -> None:
    with path.open(mode) as fh:
        for row in rows:
            fh.write(_dumps(row) + "\n")


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _add_data_args(p):
    g = p.add_argument_group("data (a CSV via --data, else a synthetic realizable set)")
    g.add_argument("--data", help="CSV dataset; see the README for the layout")
    g.add_argument("--n", type=int, default=3, help="number of classes")
    g.add_argument("--d", type=int, default=10, help="feature dimension")
    g.add_argument("--samples", type=int, default=14286)
    g.add_argument("--margin", type=float, default=0.5)
    g.add_argument("--defer-fraction", type=float, default=0.25)
    g.add_argument("--clusters", type=int, default=2, help="clusters per region")
    g.add_argument("--data-seed", type=int, default=0)


def _add_train_args(p):
    p.add_argument("--psi", default="gce", choices=["log", "gce", "mae"])
    p.add_argument("--q", type=float, default=0.7, help="gce exponent")
    p.add_argument("--cost", default=None, help="expert | affine:ALPHA,BETA | table")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--optimizer", default="adam", choices=["adam", "sgd"])
    p.add_argument("--momentum", type=float, default=0.0, help="sgd only")
    p.add_argument("--hidden", type=int, default=None, help="one tanh hidden layer of this width")


def _dataset(args):
    if args.data:
        return load_csv(args.data, seed=args.data_seed)
    cfg = SyntheticConfig(
        n=args.n, d=args.d, samples=args.samples, margin=args.margin,
        defer_fraction=args.defer_fraction, clusters_per_region=args.clusters,
        seed=args.data_seed,
    )
    return gen_realizable(cfg)[0]


def _loss(text: str, args) -> LossSpec:
    # a bare "rl2d"/"general" takes its psi from --psi/--q
    if text in ("rl2d", "general"):
        return LossSpec(text, parse_psi(args.psi, args.q))
    return parse_loss(text, args.q)


def _train_config(args, loss: LossSpec, seed: int) -> TrainConfig:
    opt = Adam(args.lr) if args.optimizer == "adam" else SGD(args.lr, args.momentum)
    cost = parse_cost(args.cost) if args.cost else None
    return TrainConfig(loss=loss, cost=cost, optimizer=opt, epochs=args.epochs,
                       batch_size=args.batch_size, seed=seed, hidden=args.hidden)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = SyntheticConfig(
        n=args.n, d=args.d, samples=args.samples, margin=args.margin,
        defer_fraction=args.defer_fraction, clusters_per_region=args.clusters, seed=args.seed,
    )
    ds, witness = gen_realizable(cfg)
    out = _out_dir(args) or Path(".")
    write_csv(ds, out / "data.csv")
    save_checkpoint(witness, out / "witness.ckpt")
    print(_dumps({"examples": ds.m, "n": ds.n, "d": ds.d, "data": str(out / "data.csv"),
                  "witness": str(out / "witness.ckpt")}))
    return 0


def cmd_train(args) -> int:
    ds = _dataset(args)
    loss = _loss(args.loss, args)
    config = _train_config(args, loss, args.seed)
    model, history = train(ds, config)
    cost = config.cost
    reports = [cmd_evaluate(model, ds, split, cost, seed=args.seed, loss=loss.name)
               for split in ("val", "test")]
    out = _out_dir(args)
    if out is not None:
        save_checkpoint(model, out / "model.ckpt")
        history.write_csv(out / "history.csv")
        _write_jsonl(out / "metrics.jsonl", [r.to_dict() for r in reports], mode="a")
    for r in reports:
        print(_dumps(r.to_dict()))
    return 0


def cmd_evaluate_cli(args) -> int:
    model = load_checkpoint(args.model)
    ds = _dataset(args)
    cost = parse_cost(args.cost) if args.cost else None
    rep = cmd_evaluate(model, ds, args.split, cost, seed=args.seed, loss=args.label)
    out = _out_dir(args)
    if out is not None:
        _write_jsonl(out / "metrics.jsonl", [rep.to_dict()], mode="a")
    print(_dumps(rep.to_dict()))
    return 0


def compare(ds, losses, seeds, make_config) -> list[dict]:
    """Train and test every (loss, seed) cell; a failing cell becomes an error entry."""
    rows = []
    for text in losses:
        cells, errors = [], []
        for seed in seeds:
            try:
                loss = text if isinstance(text, LossSpec) else parse_loss(text)
                config = make_config(loss, seed)
                model, _ = train(ds, config)
                cells.append(cmd_evaluate(model, ds, "test", config.cost, seed=seed,
                                          loss=loss.name))
            except (DeferralError, TrainingError) as exc:
                errors.append({"seed": seed, "error": str(exc)})
        name = text.name if isinstance(text, LossSpec) else text
        row = {"loss": name, "seeds": len(seeds), "ok": len(cells), "errors": errors,
               "cells": [c.to_dict() for c in cells]}
        for key in ("system_accuracy", "coverage"):
            vals = np.array([getattr(c, key) for c in cells], dtype=float)
            row[f"{key}_mean"] = float(vals.mean()) if vals.size else None
            row[f"{key}_std"] = float(vals.std()) if vals.size else None
        acc = [c.accepted_accuracy for c in cells if c.accepted_accuracy is not None]
        row["accepted_accuracy_mean"] = float(np.mean(acc)) if acc else None
        rows.append(row)
    return rows


def _fmt(mean, std) -> str:
    return "error" if mean is None else f"{100 * mean:6.2f} ± {100 * std:4.2f}"


def cmd_compare(args) -> int:
    ds = _dataset(args)
    losses = args.losses or list(DEFAULT_COMPARE)
    rows = compare(ds, losses, args.seeds, lambda loss, seed: _train_config(args, loss, seed))
    out = _out_dir(args)
    if out is not None:
        _write_jsonl(out / "compare.jsonl", rows)
    print(f"{'loss':<16} {'system acc %':>16} {'coverage %':>16}  errors")
    for r in rows:
        print(f"{r['loss']:<16} {_fmt(r['system_accuracy_mean'], r['system_accuracy_std']):>16} "
              f"{_fmt(r['coverage_mean'], r['coverage_std']):>16}  {len(r['errors'])}")
    return 0


def cmd_verify(args) -> int:
    params = {"seed": args.seed}
    if args.size is not None:
        if args.suite not in SIZE_PARAM:
            raise DeferralError(f"suite {args.suite!r} takes no --size")
        params[SIZE_PARAM[args.suite]] = args.size
    if args.suite == "bounds":
        params["slack"] = args.slack
        if args.scores is not None:
            params["scores_per_instance"] = args.scores
    elif args.slack_given:
        raise DeferralError("--slack applies to the bounds suite only")
    result = run_suite(args.suite, **params)
    out = _out_dir(args)
    if out is not None:
        _write_jsonl(out / f"{args.suite}.jsonl", result.records)
        _write_jsonl(out / f"{args.suite}-counterexamples.jsonl", result.counterexamples)
        _write_jsonl(out / "summary.jsonl", [result.summary()], mode="a")
    print(_dumps(result.summary()))
    return 0 if result.passed else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rl2d", description="Learning-to-defer surrogates")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--loss", default="rl2d", help="rl2d | general | ce | ova | rs | rl2d:mae ...")
    p.add_argument("--out", help="directory for model.ckpt, history.csv, metrics.jsonl")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on one split")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--cost", default=None)
    p.add_argument("--seed", type=int, default=None, help="recorded in the report")
    p.add_argument("--label", default=None, help="loss name recorded in the report")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate_cli)

    p = sub.add_parser("compare", help="losses x seeds table")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--losses", nargs="+", default=None)
    p.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run a property suite; exit 0 iff no violations")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--size", type=int, default=None, help="draws / instances / points")
    p.add_argument("--scores", type=int, default=None, help="score vectors per instance (bounds)")
    p.add_argument("--slack", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-data", help="write a synthetic realizable dataset and its witness")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--samples", type=int, default=14286)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--defer-fraction", type=float, default=0.25)
    p.add_argument("--clusters", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "verify":
        args.slack_given = args.slack is not None
        if args.slack is None:
            args.slack = 1e-3
    try:
        return args.func(args)
    except (DeferralError, TrainingError) as exc:
        print(f"rl2d {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
