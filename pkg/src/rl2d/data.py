"""Deferral datasets: a synthetic realizable generator and CSV ingestion.

CSV layout (header row required)::

    f0,f1,...,label,expert[,split]
    f0,f1,...,label,cost_1,...,cost_n[,split]

Feature columns are numeric, ``label`` and ``expert`` are integers in
``1..n``, optional ``cost_y`` columns give the cost of deferring when the true
label is ``y`` and an optional ``split`` column holds ``train``/``val``/``test``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CostSpec, DeferralError, ExpertError, ExplicitTable, cost_of
from .losses import deferral_loss
from .models import LinearDeferralModel

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)


@dataclass
class DeferralDataset:
    """Features, 1-based labels, expert predictions or a cost table, and splits."""

    X: np.ndarray
    y: np.ndarray
    n: int
    expert: np.ndarray | None = None
    cost_table: np.ndarray | None = None
    splits: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        m = self.y.shape[0]
        if self.X.ndim != 2 or self.X.shape[0] != m:
            raise DeferralError("X must be (m, d) with one row per label")
        if not np.all(np.isfinite(self.X)):
            raise DeferralError("features must be finite")
        if self.n < 2 or np.any(self.y < 1) or np.any(self.y > self.n):
            raise DeferralError(f"labels must lie in 1..{self.n}")
        if self.expert is None and self.cost_table is None:
            raise DeferralError("need expert predictions or a cost table")
        if self.expert is not None:
            self.expert = np.asarray(self.expert, dtype=int)
            if self.expert.shape != (m,) or np.any(self.expert < 1) or np.any(self.expert > self.n):
                raise DeferralError(f"expert predictions must lie in 1..{self.n}")
        if self.cost_table is not None:
            self.cost_table = np.asarray(self.cost_table, dtype=float)
            t = self.cost_table
            if t.shape != (m, self.n) or np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > 1):
                raise DeferralError("cost table must be (m, n) with entries in [0, 1]")
        if self.splits:
            self.splits = {k: np.asarray(v, dtype=int) for k, v in self.splits.items()}
            allidx = np.concatenate([self.splits[k] for k in SPLITS if k in self.splits])
            if allidx.size != m or np.unique(allidx).size != m:
                raise DeferralError("splits must be disjoint and cover every example")

    @property
    def m(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def default_cost(self) -> CostSpec:
        return ExpertError() if self.expert is not None else ExplicitTable()

    def costs(self, spec: CostSpec | None = None, idx=None) -> np.ndarray:
        """``c(x_i, y_i)`` for every example (or the rows in ``idx``)."""
        spec = spec or self.default_cost
        sel = slice(None) if idx is None else idx
        if isinstance(spec, ExplicitTable):
            if self.cost_table is None:
                raise DeferralError("dataset has no cost table")
            return cost_of(spec, self.y[sel], row=self.cost_table[sel])
        expert = None if self.expert is None else self.expert[sel]
        return cost_of(spec, self.y[sel], expert_pred=expert)

    def part(self, split: str, spec: CostSpec | None = None):
        """``(X, y, c)`` for one split."""
        if split not in self.splits:
            raise DeferralError(f"dataset has no {split!r} split")
        idx = self.splits[split]
        return self.X[idx], self.y[idx], self.costs(spec, idx)


def split_indices(m: int, seed: int, fractions=SPLIT_FRACTIONS) -> dict:
    """Seeded shuffle cut into train/val/test at the given fractions."""
    perm = np.random.default_rng(seed).permutation(m)
    n_train = int(fractions[0] * m)
    n_val = int(fractions[1] * m)
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train : n_train + n_val]),
        "test": np.sort(perm[n_train + n_val :]),
    }


# ---------------------------------------------------------------------------
# synthetic realizable data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 3
    d: int = 10
    clusters_per_region: int = 2
    cluster_std: float = 1.0
    center_scale: float = 3.0
    samples: int = 2000
    defer_fraction: float = 0.25
    expert_error_rate: float = 0.5
    margin: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.d < 1 or self.samples < 1 or self.clusters_per_region < 1:
            raise DeferralError("need n >= 2, d >= 1, samples >= 1, clusters_per_region >= 1")
        if not (0.0 <= self.defer_fraction <= 1.0 and 0.0 <= self.expert_error_rate <= 1.0):
            raise DeferralError("fractions must lie in [0, 1]")
        if not self.margin > 0:
            raise DeferralError("margin must be > 0")
        if not (self.cluster_std > 0 and self.center_scale > 0):
            raise DeferralError("cluster_std and center_scale must be > 0")


def witness_margin(scores: np.ndarray) -> np.ndarray:
    top2 = np.sort(scores, axis=-1)[..., -2:]
    return top2[..., 1] - top2[..., 0]


def gen_realizable(config: SyntheticConfig) -> tuple[DeferralDataset, LinearDeferralModel]:
    """Clustered data on which a random linear witness has zero deferral loss.

    Each cluster is tied to one region of the witness (a class or the deferral
    action) and only points that land in their cluster's region with score
    margin at least ``config.margin`` are kept.  In class regions the label is
    the region and the expert errs with probability ``expert_error_rate``; in
    the deferral region the label is uniform and the expert is always right.
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    n, d = cfg.n, cfg.d
    witness = LinearDeferralModel(rng.normal(size=(n + 1, d)), np.zeros(n + 1))

    regions = [r for r in range(1, n + 1) for _ in range(cfg.clusters_per_region)]
    defer_clusters = cfg.clusters_per_region if cfg.defer_fraction > 0 else 0
    regions += [n + 1] * defer_clusters
    centers = np.array([_center_in_region(witness, r, cfg, rng) for r in regions])
    regions = np.array(regions)
    class_ids = np.flatnonzero(regions <= n)
    defer_ids = np.flatnonzero(regions == n + 1)

    budget = 100 * cfg.samples
    drawn = 0
    kept_X, kept_r = [], []
    total = 0
    while total < cfg.samples:
        if drawn >= budget:
            raise DeferralError(
                f"rejection sampling kept {total}/{cfg.samples} points after {drawn} draws; "
                "loosen margin or cluster_std"
            )
        k = min(max(2 * (cfg.samples - total), 256), budget - drawn)
        drawn += k
        from_defer = rng.random(k) < cfg.defer_fraction if defer_ids.size else np.zeros(k, bool)
        cid = np.where(
            from_defer,
            defer_ids[rng.integers(0, max(defer_ids.size, 1), k)] if defer_ids.size else 0,
            class_ids[rng.integers(0, class_ids.size, k)],
        )
        pts = centers[cid] + rng.normal(0.0, cfg.cluster_std, size=(k, d))
        s = witness.scores(pts)
        ok = (np.argmax(s, axis=1) + 1 == regions[cid]) & (witness_margin(s) >= cfg.margin)
        kept_X.append(pts[ok])
        kept_r.append(regions[cid][ok])
        total += int(ok.sum())
    X = np.concatenate(kept_X)[: cfg.samples]
    region = np.concatenate(kept_r)[: cfg.samples]

    m = X.shape[0]
    y = np.where(region <= n, region, rng.integers(1, n + 1, m))
    wrong = rng.random(m) < cfg.expert_error_rate
    # a uniformly chosen label different from y
    other = (y - 1 + rng.integers(1, n, m)) % n + 1
    expert = np.where((region <= n) & wrong, other, y)

    data = DeferralDataset(
        X,
        y,
        n,
        expert=expert,
        splits=split_indices(m, cfg.seed),
        meta={"source": "synthetic", "config": cfg.__dict__.copy()},
    )
    loss = deferral_loss(witness.scores(X), y, data.costs())
    if np.any(loss != 0.0):
        raise AssertionError("witness must have zero deferral loss on generated data")
    return data, witness


def _center_in_region(witness, region, cfg, rng, tries: int = 10000):
    for _ in range(tries):
        c = rng.normal(0.0, cfg.center_scale, size=cfg.d)
        s = witness.scores(c)
        if np.argmax(s) + 1 == region and witness_margin(s) >= 2 * cfg.margin:
            return c
    raise DeferralError(f"could not place a cluster centre in region {region}")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def load_csv(
    path,
    features: list[str] | None = None,
    label: str = "label",
    expert: str = "expert",
    cost_prefix: str = "cost_",
    split_column: str = "split",
    n: int | None = None,
    seed: int = 0,
) -> DeferralDataset:
    """Read a deferral dataset; see the module docstring for the layout.

    Without a split column the rows are shuffled with ``seed`` and cut 70/10/20.
    """
    path = Path(path)
    if not path.exists():
        raise DeferralError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DeferralError(f"{path}: empty file") from None
        rows = [(i, r) for i, r in enumerate(reader, start=2) if any(v.strip() for v in r)]

    col = {name: j for j, name in enumerate(header)}
    if label not in col:
        raise DeferralError(f"{path}: missing column {label!r}")
    cost_cols = sorted(
        (h for h in header if h.startswith(cost_prefix)),
        key=lambda h: _cost_index(h, cost_prefix, path),
    )
    has_expert = expert in col
    if not has_expert and not cost_cols:
        raise DeferralError(f"{path}: need an {expert!r} column or {cost_prefix}1..n columns")
    if features is None:
        reserved = {label, expert, split_column, *cost_cols}
        features = [h for h in header if h not in reserved]
    for name in features:
        if name not in col:
            raise DeferralError(f"{path}: missing column {name!r}")
    if not features:
        raise DeferralError(f"{path}: no feature columns")

    X = np.empty((len(rows), len(features)))
    y = np.empty(len(rows), dtype=int)
    g = np.empty(len(rows), dtype=int) if has_expert else None
    table = np.empty((len(rows), len(cost_cols))) if cost_cols else None
    split_of = []
    for k, (line, row) in enumerate(rows):
        if len(row) != len(header):
            raise DeferralError(
                f"{path}: row {line} has {len(row)} fields, header has {len(header)}"
            )
        for j, name in enumerate(features):
            X[k, j] = _num(row[col[name]], float, path, line, name)
        y[k] = _num(row[col[label]], int, path, line, label)
        if has_expert:
            g[k] = _num(row[col[expert]], int, path, line, expert)
        for j, name in enumerate(cost_cols):
            table[k, j] = _num(row[col[name]], float, path, line, name)
        if split_column in col:
            split_of.append(row[col[split_column]].strip().lower())

    if n is None:
        n = len(cost_cols) if cost_cols else int(max(y.max(initial=0), g.max(initial=0)))
    if cost_cols and len(cost_cols) != n:
        raise DeferralError(f"{path}: expected {n} cost columns, found {len(cost_cols)}")
    for name, arr in ((label, y), (expert, g)):
        if arr is None:
            continue
        bad = np.flatnonzero((arr < 1) | (arr > n))
        if bad.size:
            line = rows[int(bad[0])][0]
            raise DeferralError(f"{path}: row {line} column {name!r}: value out of range 1..{n}")
    if table is not None:
        bad = np.argwhere((table < 0) | (table > 1))
        if bad.size:
            line = rows[int(bad[0][0])][0]
            raise DeferralError(f"{path}: row {line} column {cost_cols[bad[0][1]]!r}: cost outside [0, 1]")

    if split_of:
        unknown = sorted(set(split_of) - set(SPLITS))
        if unknown:
            raise DeferralError(f"{path}: unknown split values {unknown}")
        split_arr = np.array(split_of)
        splits = {s: np.flatnonzero(split_arr == s) for s in SPLITS}
    else:
        splits = split_indices(len(rows), seed)
    return DeferralDataset(
        X, y, n, expert=g, cost_table=table, splits=splits,
        meta={"source": str(path), "features": list(features)},
    )


def _cost_index(name, prefix, path):
    try:
        return int(name[len(prefix):])
    except ValueError:
        raise DeferralError(f"{path}: bad cost column name {name!r}") from None


def _num(text, kind, path, line, column):
    try:
        value = kind(text.strip())
    except ValueError:
        raise DeferralError(f"{path}: row {line} column {column!r}: cannot parse {text!r}") from None
    if kind is float and not np.isfinite(value):
        raise DeferralError(f"{path}: row {line} column {column!r}: non-finite value")
    return value


def write_csv(dataset: DeferralDataset, path, with_split: bool = True) -> None:
    """Write ``dataset`` in the layout :func:`load_csv` reads."""
    feats = [f"f{j}" for j in range(dataset.d)]
    header = feats + ["label"]
    if dataset.expert is not None:
        header.append("expert")
    if dataset.cost_table is not None:
        header += [f"cost_{k}" for k in range(1, dataset.n + 1)]
    split_of = None
    if with_split and dataset.splits:
        header.append("split")
        split_of = np.empty(dataset.m, dtype=object)
        for name, idx in dataset.splits.items():
            split_of[idx] = name
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(dataset.m):
            row = [f"{v:.17g}" for v in dataset.X[i]] + [int(dataset.y[i])]
            if dataset.expert is not None:
                row.append(int(dataset.expert[i]))
            if dataset.cost_table is not None:
                row += [f"{v:.17g}" for v in dataset.cost_table[i]]
            if split_of is not None:
                row.append(split_of[i])
            w.writerow(row)
