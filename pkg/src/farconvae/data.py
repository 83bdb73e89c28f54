"""Dataset ingestion, stratified splits, counterfactual pairing, sensitive-label
corruption, and a synthetic spurious-correlation generator.

Feature matrices are ordered continuous-block-first; ``x_cont_dim`` marks the
boundary. Sensitive and target columns are binary. Every randomized operation
takes an explicit seed or generator and is bit-reproducible.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

__all__ = [
    "ColumnSpec",
    "TabularSchema",
    "Dataset",
    "PairedDataset",
    "PairBatch",
    "Standardizer",
    "load_schema",
    "load_tabular",
    "save_tabular",
    "concat_datasets",
    "fit_standardizer",
    "standardize_splits",
    "build_counterfactual_pairs",
    "self_paired",
    "corrupt_sensitive",
    "make_synthetic_spurious",
    "split",
]

COLUMN_KINDS = ("continuous", "binary", "categorical")
PAIR_MATCHED = 0
PAIR_S_FLIP = 1
PAIR_SELF = 2


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise ValueError(f"column {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class TabularSchema:
    """Column descriptors plus which columns hold the sensitive attribute and
    the prediction target. Matches the JSON sidecar layout."""

    columns: tuple[ColumnSpec, ...]
    sensitive: str
    target: str

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names in schema")
        by_name = {c.name: c for c in self.columns}
        for role, name in (("sensitive", self.sensitive), ("target", self.target)):
            if name not in by_name:
                raise ValueError(f"{role} column {name!r} not present in schema")
            if by_name[name].kind != "binary":
                raise ValueError(f"{role} column {name!r} must be binary")
        if self.sensitive == self.target:
            raise ValueError("sensitive and target must be different columns")

    def feature_columns(self) -> list[ColumnSpec]:
        return [c for c in self.columns if c.name not in (self.sensitive, self.target)]


def load_schema(path: str) -> TabularSchema:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        columns = tuple(ColumnSpec(c["name"], c["kind"]) for c in raw["columns"])
        return TabularSchema(columns=columns, sensitive=raw["sensitive"], target=raw["target"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed schema file {path}: {exc}") from exc


@dataclass
class Dataset:
    """Numeric dataset: X [n, x_dim] float64 with continuous columns first,
    S [n, 1] binary float, Y [n] int class indices."""

    X: np.ndarray
    S: np.ndarray
    Y: np.ndarray
    feature_names: list[str]
    x_cont_dim: int
    sensitive_name: str = "s"
    target_name: str = "y"
    standardized: bool = False

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.S = np.asarray(self.S, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.int64)
        if self.X.ndim != 2 or self.S.ndim != 2 or self.Y.ndim != 1:
            raise ValueError("X and S must be 2-D, Y 1-D")
        if not (self.X.shape[0] == self.S.shape[0] == self.Y.shape[0]):
            raise ValueError("X, S, Y row counts differ")
        if self.S.shape[1] != 1:
            raise ValueError("exactly one sensitive column is supported")
        if len(self.feature_names) != self.X.shape[1]:
            raise ValueError("feature_names length must match X columns")
        if not 0 <= self.x_cont_dim <= self.X.shape[1]:
            raise ValueError("x_cont_dim out of range")
        if not np.all((self.S == 0.0) | (self.S == 1.0)):
            raise ValueError("S must be binary 0/1")
        if not np.all((self.Y == 0) | (self.Y == 1)):
            raise ValueError("Y must be binary class indices")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def x_dim(self) -> int:
        return self.X.shape[1]

    def take(self, indices: np.ndarray) -> "Dataset":
        return replace(self, X=self.X[indices], S=self.S[indices], Y=self.Y[indices])


def concat_datasets(datasets: list[Dataset]) -> Dataset:
    first = datasets[0]
    for d in datasets[1:]:
        if d.feature_names != first.feature_names or d.x_cont_dim != first.x_cont_dim:
            raise ValueError("datasets have incompatible schemas")
    return replace(
        first,
        X=np.concatenate([d.X for d in datasets], axis=0),
        S=np.concatenate([d.S for d in datasets], axis=0),
        Y=np.concatenate([d.Y for d in datasets], axis=0),
    )


# -- CSV ingestion ---------------------------------------------------------------


def _parse_binary(series: pd.Series, name: str) -> np.ndarray:
    values = sorted(series.unique())
    if len(values) > 2:
        raise ValueError(f"column {name!r}: expected at most 2 distinct values, found {len(values)}")
    if len(values) == 1:
        warnings.warn(f"column {name!r} is constant; mapping to 0")
        return np.zeros(len(series), dtype=np.float64)
    if set(values) == {"0", "1"}:
        mapping = {"0": 0.0, "1": 1.0}
    else:
        mapping = {values[0]: 0.0, values[1]: 1.0}
    return series.map(mapping).to_numpy(dtype=np.float64)


def load_tabular(path: str, schema: TabularSchema | str) -> Dataset:
    """Read a header CSV against a schema.

    Continuous columns parse as floats, binary columns map their two sorted
    values to 0/1, categorical columns one-hot expand (one column per sorted
    value, named ``col=value``). Missing or unparseable cells raise with the
    row and column identified. Feature order is continuous columns first,
    then binary and one-hot columns in schema order.
    """
    if isinstance(schema, str):
        schema = load_schema(schema)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    frame.columns = [c.strip() for c in frame.columns]
    for col in schema.columns:
        if col.name not in frame.columns:
            raise ValueError(f"missing column {col.name!r} in {path}")
    for col in schema.columns:
        series = frame[col.name].str.strip()
        blank = series == ""
        if blank.any():
            row = int(np.argmax(blank.to_numpy()))
            raise ValueError(f"missing value at row {row}, column {col.name!r}")
        frame[col.name] = series

    def parse_continuous(series: pd.Series, name: str) -> np.ndarray:
        converted = pd.to_numeric(series, errors="coerce")
        bad = converted.isna()
        if bad.any():
            row = int(np.argmax(bad.to_numpy()))
            raise ValueError(
                f"unparseable cell at row {row}, column {name!r}: {series.iloc[row]!r}"
            )
        return converted.to_numpy(dtype=np.float64)

    cont_blocks: list[np.ndarray] = []
    cont_names: list[str] = []
    bin_blocks: list[np.ndarray] = []
    bin_names: list[str] = []
    for col in schema.feature_columns():
        if col.kind == "continuous":
            cont_blocks.append(parse_continuous(frame[col.name], col.name))
            cont_names.append(col.name)
        elif col.kind == "binary":
            bin_blocks.append(_parse_binary(frame[col.name], col.name))
            bin_names.append(col.name)
        else:
            values = sorted(frame[col.name].unique())
            for v in values:
                bin_blocks.append((frame[col.name] == v).to_numpy(dtype=np.float64))
                bin_names.append(f"{col.name}={v}")

    s = _parse_binary(frame[schema.sensitive], schema.sensitive)
    y = _parse_binary(frame[schema.target], schema.target)
    n = len(frame)
    blocks = cont_blocks + bin_blocks
    X = np.column_stack(blocks) if blocks else np.zeros((n, 0))
    return Dataset(
        X=X,
        S=s.reshape(-1, 1),
        Y=y.astype(np.int64),
        feature_names=cont_names + bin_names,
        x_cont_dim=len(cont_names),
        sensitive_name=schema.sensitive,
        target_name=schema.target,
    )


def save_tabular(dataset: Dataset, csv_path: str, schema_path: str) -> None:
    """Write a Dataset back to CSV + JSON schema so load_tabular round-trips.

    All feature columns are emitted as continuous/binary per x_cont_dim
    (one-hot groups are not re-collapsed)."""
    frame = pd.DataFrame(dataset.X, columns=dataset.feature_names)
    frame[dataset.sensitive_name] = dataset.S[:, 0].astype(np.int64)
    frame[dataset.target_name] = dataset.Y
    frame.to_csv(csv_path, index=False)
    columns = [
        {"name": name, "kind": "continuous" if i < dataset.x_cont_dim else "binary"}
        for i, name in enumerate(dataset.feature_names)
    ]
    columns.append({"name": dataset.sensitive_name, "kind": "binary"})
    columns.append({"name": dataset.target_name, "kind": "binary"})
    payload = {
        "columns": columns,
        "sensitive": dataset.sensitive_name,
        "target": dataset.target_name,
    }
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


# -- standardization ----------------------------------------------------------------


@dataclass
class Standardizer:
    """Per-column location/scale for the continuous block, fit on train only."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, dataset: Dataset) -> Dataset:
        c = len(self.mean)
        if c != dataset.x_cont_dim:
            raise ValueError("standardizer does not match dataset's continuous block")
        if c == 0:
            return replace(dataset, standardized=True)
        X = dataset.X.copy()
        X[:, :c] = (X[:, :c] - self.mean) / self.std
        return replace(dataset, X=X, standardized=True)


def fit_standardizer(train: Dataset) -> Standardizer:
    c = train.x_cont_dim
    block = train.X[:, :c]
    mean = block.mean(axis=0) if c else np.zeros(0)
    std = block.std(axis=0) if c else np.zeros(0)
    # constant columns pass through unscaled
    std = np.where(std < 1e-12, 1.0, std)
    return Standardizer(mean=mean, std=std)


def standardize_splits(
    train: Dataset, valid: Dataset, test: Dataset
) -> tuple[Dataset, Dataset, Dataset, Standardizer]:
    stats = fit_standardizer(train)
    return stats.apply(train), stats.apply(valid), stats.apply(test), stats


# -- counterfactual pairing ------------------------------------------------------------


@dataclass
class PairedDataset:
    """Rows aligned with counterfactual partners: same y, opposite s.

    pair_source is PAIR_MATCHED where a real opposite-s neighbor was found
    and PAIR_S_FLIP where the fallback (same x, flipped s) was used.
    """

    base: Dataset
    X_cf: np.ndarray
    S_cf: np.ndarray
    pair_source: np.ndarray

    def __post_init__(self):
        if not (self.base.n == len(self.X_cf) == len(self.S_cf) == len(self.pair_source)):
            raise ValueError("pair arrays must align with the base dataset")
        real = self.pair_source != PAIR_SELF
        if np.any(self.S_cf[real] == self.base.S[real]):
            raise ValueError("every pair must have opposite sensitive values")

    @property
    def n(self) -> int:
        return self.base.n

    def batch(self, indices: np.ndarray) -> "PairBatch":
        return PairBatch(
            x=self.base.X[indices],
            s=self.base.S[indices],
            y=self.base.Y[indices].astype(np.float64).reshape(-1, 1),
            x_t=self.X_cf[indices],
            s_t=self.S_cf[indices],
        )


@dataclass
class PairBatch:
    """Mini-batch view of a PairedDataset; y is shared by both members."""

    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    x_t: np.ndarray
    s_t: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _nearest_in(candidates_X: np.ndarray, queries_X: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Index (into candidates) of the Euclidean-nearest candidate per query.

    First occurrence wins on exact distance ties, so candidates must be in
    ascending original-row order for lowest-index tie-breaking.
    """
    cand_sq = (candidates_X**2).sum(axis=1)
    out = np.empty(len(queries_X), dtype=np.int64)
    for start in range(0, len(queries_X), chunk):
        q = queries_X[start : start + chunk]
        d2 = (q**2).sum(axis=1)[:, None] + cand_sq[None, :] - 2.0 * (q @ candidates_X.T)
        out[start : start + chunk] = np.argmin(d2, axis=1)
    return out


def build_counterfactual_pairs(
    dataset: Dataset, strategy: str = "matched_neighbor", seed: int = 0
) -> PairedDataset:
    """Pair every row with a same-y, opposite-s partner.

    matched_neighbor: nearest row by Euclidean distance on X within the
    same-y/opposite-s stratum; rows with no such stratum fall back to s_flip.
    s_flip: keep x, flip s. Fully deterministic; ``seed`` is accepted for
    interface stability but unused.
    """
    del seed
    if dataset.n == 0:
        raise ValueError("cannot pair an empty dataset")
    if strategy not in ("matched_neighbor", "s_flip"):
        raise ValueError(f"unknown pairing strategy {strategy!r}")
    X_cf = dataset.X.copy()
    S_cf = 1.0 - dataset.S
    source = np.full(dataset.n, PAIR_S_FLIP, dtype=np.int8)
    if strategy == "matched_neighbor":
        s = dataset.S[:, 0]
        for y_val in (0, 1):
            for s_val in (0.0, 1.0):
                query_idx = np.flatnonzero((dataset.Y == y_val) & (s == s_val))
                cand_idx = np.flatnonzero((dataset.Y == y_val) & (s == 1.0 - s_val))
                if len(query_idx) == 0 or len(cand_idx) == 0:
                    continue
                nearest = _nearest_in(dataset.X[cand_idx], dataset.X[query_idx])
                partner = cand_idx[nearest]
                X_cf[query_idx] = dataset.X[partner]
                S_cf[query_idx] = dataset.S[partner]
                source[query_idx] = PAIR_MATCHED
    return PairedDataset(base=dataset, X_cf=X_cf, S_cf=S_cf, pair_source=source)


def self_paired(dataset: Dataset) -> PairedDataset:
    """Pair every row with itself (pair_source PAIR_SELF).

    Diagnostic construction: with the contrastive and swap terms switched
    off, training on self-pairs reduces to a conditional beta-VAE.
    """
    if dataset.n == 0:
        raise ValueError("cannot pair an empty dataset")
    return PairedDataset(
        base=dataset,
        X_cf=dataset.X.copy(),
        S_cf=dataset.S.copy(),
        pair_source=np.full(dataset.n, PAIR_SELF, dtype=np.int8),
    )


# -- sensitive-attribute corruption --------------------------------------------------------


def corrupt_sensitive(dataset: Dataset, epsilon: float, seed: int) -> Dataset:
    """Flip s on exactly round(epsilon * n) uniformly chosen rows."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    k = int(round(epsilon * dataset.n))
    if k == 0:
        return replace(dataset)
    rng = np.random.default_rng(seed)
    rows = rng.choice(dataset.n, size=k, replace=False)
    S = dataset.S.copy()
    S[rows] = 1.0 - S[rows]
    return replace(dataset, S=S)


# -- synthetic spurious-correlation data -----------------------------------------------------


def make_synthetic_spurious(
    n: int,
    corr_train: float,
    corr_test: float,
    seed: int,
    core_dim: int = 6,
    core_shift: float = 0.7,
    spur_dim: int = 8,
    spur_scale: float = 1.0,
    n_test: int | None = None,
) -> tuple[Dataset, Dataset]:
    """Two-environment dataset where s is spuriously tied to y.

    The core block is drawn from y-dependent Gaussian clusters N(+-core_shift, I)
    and is the only stable signal. The spurious block is deterministically
    (2s-1)*spur_scale in every column. s agrees with y with probability
    corr_train in the train split and corr_test in the test split.
    """
    if n < 100:
        raise ValueError("n must be at least 100")
    for name, v in (("corr_train", corr_train), ("corr_test", corr_test)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    rng = np.random.default_rng(seed)
    names = [f"core_{i}" for i in range(core_dim)] + [f"spur_{i}" for i in range(spur_dim)]

    def draw(m: int, corr: float) -> Dataset:
        y = rng.integers(0, 2, size=m)
        agree = rng.random(m) < corr
        s_vals = np.where(agree, y, 1 - y).astype(np.float64)
        core = core_shift * (2.0 * y - 1.0)[:, None] + rng.standard_normal((m, core_dim))
        spur = np.repeat(spur_scale * (2.0 * s_vals - 1.0)[:, None], spur_dim, axis=1)
        return Dataset(
            X=np.concatenate([core, spur], axis=1),
            S=s_vals.reshape(-1, 1),
            Y=y,
            feature_names=list(names),
            x_cont_dim=core_dim + spur_dim,
        )

    return draw(n, corr_train), draw(n_test if n_test is not None else n, corr_test)


# -- stratified split --------------------------------------------------------------------


def _largest_remainder(total: int, fractions: np.ndarray) -> np.ndarray:
    ideal = total * fractions
    counts = np.floor(ideal).astype(np.int64)
    short = total - counts.sum()
    order = np.argsort(-(ideal - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def split(
    dataset: Dataset, fractions: tuple[float, ...], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint, exhaustive (train, valid, test) split stratified by (y, s).

    Split sizes match largest-remainder apportionment of the fractions
    exactly; per-stratum allocations are then nudged to meet them while
    staying as proportional as possible. Deterministic per seed.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    if len(fractions) != 3:
        raise ValueError("need exactly three fractions (train, valid, test)")
    if np.any(fractions < 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must be non-negative and sum to 1")
    rng = np.random.default_rng(seed)
    targets = _largest_remainder(dataset.n, fractions)

    strata: list[np.ndarray] = []
    s = dataset.S[:, 0]
    for y_val in (0, 1):
        for s_val in (0.0, 1.0):
            idx = np.flatnonzero((dataset.Y == y_val) & (s == s_val))
            if len(idx):
                strata.append(idx)
    n_splits_used = int((targets > 0).sum())
    for idx in strata:
        if 0 < len(idx) < n_splits_used:
            warnings.warn(
                f"stratum of size {len(idx)} is smaller than the number of splits; "
                "it cannot appear in every split"
            )

    # per-stratum largest-remainder, then fix global totals by moving single
    # rows where the proportional distortion is smallest
    ideals = [len(idx) * fractions for idx in strata]
    allocs = [_largest_remainder(len(idx), fractions) for idx in strata]
    column_sums = np.sum(allocs, axis=0)
    while not np.array_equal(column_sums, targets):
        over = int(np.argmax(column_sums - targets))
        under = int(np.argmin(column_sums - targets))
        best_g, best_score = -1, -np.inf
        for g in range(len(strata)):
            if allocs[g][over] == 0:
                continue
            score = (allocs[g][over] - ideals[g][over]) - (allocs[g][under] - ideals[g][under])
            if score > best_score:
                best_g, best_score = g, score
        allocs[best_g][over] -= 1
        allocs[best_g][under] += 1
        column_sums = np.sum(allocs, axis=0)

    parts: list[list[np.ndarray]] = [[], [], []]
    for idx, alloc in zip(strata, allocs):
        shuffled = idx[rng.permutation(len(idx))]
        a, b = int(alloc[0]), int(alloc[0] + alloc[1])
        parts[0].append(shuffled[:a])
        parts[1].append(shuffled[a:b])
        parts[2].append(shuffled[b:])

    def collect(chunks: list[np.ndarray]) -> Dataset:
        idx = np.sort(np.concatenate(chunks)) if chunks else np.zeros(0, dtype=np.int64)
        return dataset.take(idx)

    return collect(parts[0]), collect(parts[1]), collect(parts[2])
