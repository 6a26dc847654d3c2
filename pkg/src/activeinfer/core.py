"""Data model and dataset plumbing.

Pools are immutable column stores of examples: covariates, optional true
labels, optional model predictions (point value, class probabilities,
predicted error magnitude). CSV ingestion reports 1-based line numbers on
parse failures. All randomness flows through seeded, stream-addressed
generators so that runs are reproducible.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParseError

_X_COL = re.compile(r"^x(\d+)$")


@dataclass(frozen=True)
class Example:
    """One pool item.

    x      covariate vector
    y      true label, if known
    f      model prediction for the label
    probs  predicted class probabilities (classification only)
    err    predicted magnitude of the prediction error, nonnegative
    """

    x: np.ndarray
    y: float | None = None
    f: float | None = None
    probs: np.ndarray | None = None
    err: float | None = None


@dataclass(frozen=True)
class Budget:
    """Expected number of labels to collect out of a pool of size n."""

    n_b: float
    n: int

    def __post_init__(self):
        if not (0 < self.n_b <= self.n):
            raise DataError(f"budget must satisfy 0 < n_b <= n, got n_b={self.n_b}, n={self.n}")

    @property
    def rate(self) -> float:
        return self.n_b / self.n


@dataclass(frozen=True)
class RngSpec:
    """Seeded, stream-addressed randomness.

    Identical (seed, stream) pairs produce identical draw sequences;
    distinct streams are statistically independent.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))

    def with_stream(self, stream: int) -> "RngSpec":
        return RngSpec(self.seed, stream)


def _lock(a):
    a = np.asarray(a)
    a.flags.writeable = False
    return a


class Pool:
    """Immutable collection of examples, stored column-wise.

    Missing per-item values are NaN internally. Arrays are locked after
    construction so pools can be shared across concurrent trials.
    """

    def __init__(self, x, y=None, f=None, probs=None, err=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.ndim != 2:
            raise DataError("covariates must form a 2-D array")
        n = x.shape[0]
        if n < 1:
            raise DataError("a pool needs at least one example")
        if not np.all(np.isfinite(x)):
            raise DataError("covariates must be finite")

        def col(v, name):
            if v is None:
                return None
            v = np.asarray(v, dtype=float).reshape(-1)
            if v.shape[0] != n:
                raise DataError(f"{name} has {v.shape[0]} entries for {n} examples")
            return v

        self.x = _lock(x)
        self.y = None if y is None else _lock(col(y, "y"))
        self.f = None if f is None else _lock(col(f, "f"))
        self.err = None if err is None else _lock(col(err, "err"))
        if probs is not None:
            probs = np.asarray(probs, dtype=float)
            if probs.ndim != 2 or probs.shape[0] != n:
                raise DataError("probs must be an (n, K) array")
            if probs.shape[1] < 2:
                raise DataError("probs needs at least two classes")
            present = ~np.any(np.isnan(probs), axis=1)
            block = probs[present]
            if block.size:
                if np.any(block < -1e-9) or np.any(block > 1 + 1e-9):
                    raise DataError("probabilities must lie in [0, 1]")
                sums = block.sum(axis=1)
                if np.any(np.abs(sums - 1.0) > 1e-9):
                    bad = int(np.argmax(np.abs(sums - 1.0)))
                    raise DataError(f"class probabilities must sum to 1 (off by {sums[bad] - 1.0:.2e})")
            self.probs = _lock(probs)
        else:
            self.probs = None
        if self.err is not None:
            known = self.err[~np.isnan(self.err)]
            if np.any(known < 0):
                raise DataError("err must be nonnegative")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def example(self, i: int) -> Example:
        def opt(a):
            if a is None or np.isnan(a[i]):
                return None
            return float(a[i])

        probs = None
        if self.probs is not None and not np.any(np.isnan(self.probs[i])):
            probs = self.probs[i]
        return Example(x=self.x[i], y=opt(self.y), f=opt(self.f), probs=probs, err=opt(self.err))

    @property
    def examples(self) -> list:
        return [self.example(i) for i in range(self.n)]

    def subset(self, idx) -> "Pool":
        idx = np.asarray(idx)

        def take(a):
            return None if a is None else a[idx]

        return Pool(self.x[idx], take(self.y), take(self.f), take(self.probs), take(self.err))

    def replace(self, **cols) -> "Pool":
        base = dict(x=self.x, y=self.y, f=self.f, probs=self.probs, err=self.err)
        base.update(cols)
        return Pool(**base)


@dataclass(frozen=True)
class PoolSchema:
    """Column naming for CSV ingestion.

    x_cols=None autodetects columns named x0, x1, ... in index order.
    prob_cols=None autodetects prob0, prob1, ...
    """

    x_cols: tuple[str, ...] | None = None
    y_col: str = "y"
    f_col: str = "f"
    err_col: str = "err"
    prob_cols: tuple[str, ...] | None = None


def _detect(header, schema):
    if schema.x_cols is not None:
        x_cols = list(schema.x_cols)
        for c in x_cols:
            if c not in header:
                raise DataError(f"covariate column {c!r} not found in header")
    else:
        found = sorted(
            ((int(m.group(1)), c) for c in header if (m := _X_COL.match(c))),
        )
        x_cols = [c for _, c in found]
        if not x_cols:
            raise DataError("no covariate columns found (expected x0, x1, ... or an explicit schema)")
    if schema.prob_cols is not None:
        prob_cols = list(schema.prob_cols)
    else:
        found = sorted(
            ((int(c[4:]), c) for c in header if c.startswith("prob") and c[4:].isdigit()),
        )
        prob_cols = [c for _, c in found]
    return x_cols, prob_cols


def load_pool(path, schema: PoolSchema | None = None) -> Pool:
    """Read a pool from a headered CSV file.

    Empty cells mean "missing". Malformed cells raise ParseError carrying
    the 1-based file line number.
    """
    schema = schema or PoolSchema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=1) if row and not row[0].startswith("#")]
    if not rows:
        raise ParseError("empty file", line=1)
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    idx = {name: i for i, name in enumerate(header)}
    x_cols, prob_cols = _detect(header, schema)

    def cell(row, name, lineno):
        i = idx.get(name)
        if i is None or i >= len(row):
            return None
        raw = row[i].strip()
        if raw == "":
            return None
        try:
            return float(raw)
        except ValueError:
            raise ParseError(f"could not parse {raw!r} in column {name!r}", line=lineno) from None

    n = len(rows) - 1
    if n < 1:
        raise ParseError("no data rows", line=header_line)
    x = np.empty((n, len(x_cols)))
    y = np.full(n, np.nan)
    f = np.full(n, np.nan)
    err = np.full(n, np.nan)
    probs = np.full((n, len(prob_cols)), np.nan) if prob_cols else None
    have = {"y": False, "f": False, "err": False, "probs": False}
    for r, (lineno, row) in enumerate(rows[1:]):
        if len(row) > len(header):
            raise ParseError(f"row has {len(row)} cells for {len(header)} columns", line=lineno)
        for c, name in enumerate(x_cols):
            v = cell(row, name, lineno)
            if v is None:
                raise ParseError(f"missing covariate {name!r}", line=lineno)
            x[r, c] = v
        for key, col, arr in (("y", schema.y_col, y), ("f", schema.f_col, f), ("err", schema.err_col, err)):
            v = cell(row, col, lineno)
            if v is not None:
                arr[r] = v
                have[key] = True
        if probs is not None:
            vals = [cell(row, name, lineno) for name in prob_cols]
            if any(v is not None for v in vals):
                if any(v is None for v in vals):
                    raise ParseError("partially filled probability columns", line=lineno)
                probs[r] = vals
                have["probs"] = True
    try:
        return Pool(
            x,
            y if have["y"] else None,
            f if have["f"] else None,
            probs if have["probs"] else None,
            err if have["err"] else None,
        )
    except DataError as e:
        raise DataError(f"{path}: {e}") from e


def save_pool(pool: Pool, path) -> None:
    """Write a pool to CSV with canonical column names (x0..xD, y, f, prob*, err)."""
    header = [f"x{i}" for i in range(pool.dim)]
    cols = [pool.x[:, i] for i in range(pool.dim)]
    for name, arr in (("y", pool.y), ("f", pool.f)):
        if arr is not None:
            header.append(name)
            cols.append(arr)
    if pool.probs is not None:
        for k in range(pool.probs.shape[1]):
            header.append(f"prob{k}")
            cols.append(pool.probs[:, k])
    if pool.err is not None:
        header.append("err")
        cols.append(pool.err)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in range(pool.n):
            writer.writerow(["" if np.isnan(v) else repr(float(v)) for v in (c[r] for c in cols)])


def attach_predictions(pool: Pool, preds) -> Pool:
    """Return a pool with prediction columns attached.

    preds may be a CSV path (columns f / prob* / err, default names), a
    bare array of point predictions, or a mapping with keys among
    {"f", "probs", "err"}. Attaching twice overwrites.
    """
    if isinstance(preds, (str,)) or hasattr(preds, "__fspath__"):
        other = load_pool(preds, PoolSchema(x_cols=()))
        updates = {}
        if other.f is not None:
            updates["f"] = other.f
        if other.probs is not None:
            updates["probs"] = other.probs
        if other.err is not None:
            updates["err"] = other.err
        if not updates:
            raise DataError(f"{preds}: no prediction columns found")
        m = other.n
    elif isinstance(preds, dict):
        updates = {k: np.asarray(v, dtype=float) for k, v in preds.items()}
        bad = set(updates) - {"f", "probs", "err"}
        if bad:
            raise DataError(f"unknown prediction keys: {sorted(bad)}")
        if not updates:
            raise DataError("no prediction columns given")
        m = len(next(iter(updates.values())))
    else:
        updates = {"f": np.asarray(preds, dtype=float)}
        m = len(updates["f"])
    if m != pool.n:
        raise DataError(f"predictions have {m} rows but the pool has {pool.n}")
    return pool.replace(**updates)


def split_pool(pool: Pool, fraction: float, rng: RngSpec) -> tuple[Pool, Pool]:
    """Randomly partition a pool; the first part gets round(fraction * n) items."""
    if pool.n < 2:
        raise DataError("need at least two examples to split")
    if not (0 < fraction < 1):
        raise DataError(f"fraction must lie in (0, 1), got {fraction}")
    k = int(round(fraction * pool.n))
    perm = rng.generator().permutation(pool.n)
    return pool.subset(perm[:k]), pool.subset(perm[k:])
