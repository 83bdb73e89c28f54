"""Evaluation: label accuracy, linear sensitive-attribute probes, MRG,
noise sweeps, ablations, and embedding export.

The experiment harness here owns the full pipeline (split, standardize,
corrupt, pair, auxiliary classifier, train, evaluate) so the CLI, sweeps,
and tests all run the exact same code path.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, replace
from typing import Any

import numpy as np

from .autodiff import Tensor, collect_grads, transpose, zero_grads
from .data import (
    Dataset,
    PairedDataset,
    build_counterfactual_pairs,
    concat_datasets,
    corrupt_sensitive,
    load_tabular,
    make_synthetic_spurious,
    split,
    standardize_splits,
)
from .distributions import bernoulli_nll
from .losses import LossBreakdown
from .model import FarconModel, encode_mean, predict_logits
from .nn import Mlp
from .training import (
    AdamState,
    FarconConfig,
    adam_step,
    predict_aux,
    train_aux_classifier,
    train_farcon,
)

__all__ = [
    "MetricsReport",
    "ExperimentResult",
    "encode_dataset",
    "linear_probe",
    "mrg",
    "run_experiment",
    "noise_sweep",
    "ablation_run",
    "aggregate_metrics",
    "export_embeddings",
]

RANDOM_GUESS_BINARY = 50.0


@dataclass
class MetricsReport:
    """Headline percentages for one trained model."""

    y_accuracy: float
    s_probe_accuracy: float
    mrg: float
    random_guess_s: float
    majority_rate_s: float
    seed: int
    config_fingerprint: str
    aux_val_accuracy: float | None = None

    def __post_init__(self):
        for name in ("y_accuracy", "s_probe_accuracy", "mrg", "random_guess_s", "majority_rate_s"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} must be a percentage in [0, 100], got {v}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def mrg(s_acc_model: float, s_acc_random_guess: float) -> float:
    """Matching with random guess: 100 - |random_guess - model|, in percent."""
    for v in (s_acc_model, s_acc_random_guess):
        if not 0.0 <= v <= 100.0:
            raise ValueError(f"accuracies must be in [0, 100], got {v}")
    return 100.0 - abs(s_acc_random_guess - s_acc_model)


def encode_dataset(
    model: FarconModel,
    dataset: Dataset,
    y_source: str = "aux_classifier",
    aux: Mlp | None = None,
    latent: str = "zx",
) -> np.ndarray:
    """Posterior-mean embeddings of a dataset, [n, latent_dim].

    y_source picks the encoder's y input: 'true_y' uses the labels,
    'aux_classifier' uses hard predictions of the auxiliary model, and
    'constant' feeds 0.5 everywhere.
    """
    if y_source == "true_y":
        y_in = dataset.Y.astype(np.float64).reshape(-1, 1)
    elif y_source == "aux_classifier":
        if aux is None:
            raise ValueError("y_source='aux_classifier' requires an aux model")
        y_in = predict_aux(aux, dataset.X)
    elif y_source == "constant":
        y_in = np.full((dataset.n, 1), 0.5)
    else:
        raise ValueError(f"unknown y_source {y_source!r}")
    return encode_mean(model, dataset.X, dataset.S, y_in, latent=latent)


def _stratified_80_20(labels: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        cut = int(round(0.8 * len(idx)))
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    return np.concatenate(train_idx), np.concatenate(test_idx)


def linear_probe(embeddings: np.ndarray, labels: np.ndarray, seed: int = 0) -> float:
    """Held-out accuracy (%) of an intercept-free logistic probe.

    Embeddings are standardized with probe-train statistics; the probe is a
    single weight vector trained full-batch by Adam with L2 weight decay for
    200 epochs from zero init; accuracy is measured on a stratified 20%
    holdout. Without an intercept, an uninformative representation scores
    near the 50% random-guess rate rather than the majority rate.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if embeddings.ndim != 2 or len(embeddings) != len(labels):
        raise ValueError("embeddings must be [n, d] aligned with labels")
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) == 1:
        warnings.warn("probe labels are single-class; returning 100")
        return 100.0
    if len(classes) != 2:
        raise ValueError("probe supports binary labels only")
    if counts.min() < 10:
        raise ValueError("need at least 10 rows per class to probe")

    rng = np.random.default_rng(seed)
    train_idx, test_idx = _stratified_80_20(labels, rng)
    mean = embeddings[train_idx].mean(axis=0)
    std = embeddings[train_idx].std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    Z_train = (embeddings[train_idx] - mean) / std
    Z_test = (embeddings[test_idx] - mean) / std
    y_train = (labels[train_idx] == classes[1]).astype(np.float64).reshape(-1, 1)
    y_test = (labels[test_idx] == classes[1]).astype(np.int64)

    w = Tensor(np.zeros((1, Z_train.shape[1])), requires_grad=True, name="probe.weight")
    state = AdamState.initialize([w])
    inv_n = 1.0 / len(Z_train)
    Zt = Tensor(Z_train)
    for _ in range(200):
        zero_grads([w])
        logits = Zt @ transpose(w)
        loss = bernoulli_nll(logits, y_train) * inv_n
        loss.backward()
        adam_step([w], collect_grads([w]), state, lr=0.1, weight_decay=1e-3)
    pred = (Z_test @ w.data.reshape(-1) > 0.0).astype(np.int64)
    return float((pred == y_test).mean()) * 100.0


def export_embeddings(embeddings: np.ndarray, labels_y: np.ndarray, labels_s: np.ndarray, path: str) -> None:
    """CSV with columns z_0..z_{d-1}, y, s; floats keep full precision."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels_y = np.asarray(labels_y).reshape(-1)
    labels_s = np.asarray(labels_s).reshape(-1)
    if not (len(embeddings) == len(labels_y) == len(labels_s)):
        raise ValueError("embeddings and label lengths differ")
    d = embeddings.shape[1] if embeddings.ndim == 2 else 0
    header = ",".join([f"z_{i}" for i in range(d)] + ["y", "s"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row, y, s in zip(embeddings, labels_y, labels_s):
            cells = [format(v, ".17g") for v in row] + [str(int(y)), str(int(s))]
            fh.write(",".join(cells) + "\n")


# -- experiment harness -------------------------------------------------------------


@dataclass
class PreparedData:
    """Splits after standardization, plus the paired (possibly corrupted) train set."""

    train: Dataset
    valid: Dataset
    test: Dataset
    paired: PairedDataset
    train_corrupted: Dataset


@dataclass
class ExperimentResult:
    metrics: MetricsReport
    model: FarconModel
    aux: Mlp | None
    history: list[LossBreakdown]
    data: PreparedData


def _load_splits(config: FarconConfig) -> tuple[Dataset, Dataset, Dataset]:
    if config.data is None:
        raise ValueError("config has no data section")
    d = config.data
    if d.kind == "tabular":
        full = load_tabular(d.csv, d.schema)
        return split(full, d.fractions, seed=[config.seed, 2])
    pool, test = make_synthetic_spurious(d.n, d.corr_train, d.corr_test, seed=[config.seed, 5])
    f0, f1 = d.fractions[0], d.fractions[1]
    total = f0 + f1
    train, valid, _ = split(pool, (f0 / total, f1 / total, 0.0), seed=[config.seed, 2])
    return train, valid, test


def prepare_data(config: FarconConfig, epsilon: float = 0.0) -> PreparedData:
    """Split, standardize on train, corrupt the train sensitive column at
    rate epsilon, and build counterfactual pairs."""
    train, valid, test = _load_splits(config)
    train, valid, test, _ = standardize_splits(train, valid, test)
    corrupted = corrupt_sensitive(train, epsilon, seed=[config.seed, 6])
    paired = build_counterfactual_pairs(corrupted, strategy=config.pairing, seed=config.seed)
    return PreparedData(train=train, valid=valid, test=test, paired=paired, train_corrupted=corrupted)


def evaluate_model(
    model: FarconModel,
    config: FarconConfig,
    data: PreparedData,
    aux: Mlp | None,
    aux_val_accuracy: float | None,
) -> MetricsReport:
    """Test-set label accuracy plus a sensitive probe over the clean, fully
    encoded dataset (train + valid + test with uncorrupted s)."""
    y_source = "constant" if config.y_input_mode == "constant" else "aux_classifier"
    if y_source == "constant":
        y_in_test = np.full((data.test.n, 1), 0.5)
    else:
        y_in_test = predict_aux(aux, data.test.X)
    logits = predict_logits(model, data.test.X, data.test.S, y_in_test)
    y_acc = float(((logits > 0.0).astype(np.int64) == data.test.Y).mean()) * 100.0

    everything = concat_datasets([data.train, data.valid, data.test])
    embeddings = encode_dataset(model, everything, y_source=y_source, aux=aux)
    s_labels = everything.S[:, 0]
    s_probe = linear_probe(embeddings, s_labels, seed=[config.seed, 4])
    majority = float(max(s_labels.mean(), 1.0 - s_labels.mean())) * 100.0
    return MetricsReport(
        y_accuracy=y_acc,
        s_probe_accuracy=s_probe,
        mrg=mrg(s_probe, RANDOM_GUESS_BINARY),
        random_guess_s=RANDOM_GUESS_BINARY,
        majority_rate_s=majority,
        seed=config.seed,
        config_fingerprint=config.fingerprint(),
        aux_val_accuracy=aux_val_accuracy,
    )


def run_experiment(config: FarconConfig, epsilon: float = 0.0) -> ExperimentResult:
    """Full pipeline for one (config, corruption rate) cell."""
    data = prepare_data(config, epsilon)
    aux = None
    aux_acc = None
    if config.y_input_mode == "label":
        aux, aux_acc = train_aux_classifier(config, data.train_corrupted, data.valid)
    model, history = train_farcon(config, data.paired, data.valid)
    metrics = evaluate_model(model, config, data, aux, aux_acc)
    return ExperimentResult(metrics=metrics, model=model, aux=aux, history=history, data=data)


def noise_sweep(
    config: FarconConfig, epsilons: list[float], seeds: list[int]
) -> list[dict[str, Any]]:
    """Retrain per (epsilon, seed) with the train s column corrupted at rate
    epsilon; evaluation always uses the clean data."""
    rows = []
    for seed in seeds:
        for eps in epsilons:
            cfg = replace(config, seed=seed)
            result = run_experiment(cfg, epsilon=eps)
            rows.append({"epsilon": float(eps), "seed": int(seed), "metrics": result.metrics})
    return rows


ABLATION_COMBOS = (
    ("both_off", False, False),
    ("dc", True, False),
    ("sr", False, True),
    ("dc_sr", True, True),
)


def ablation_run(config: FarconConfig) -> dict[str, MetricsReport]:
    """Train the four on/off combinations of the contrastive and swap terms.

    Toggles multiply the configured alpha/gamma, so the base config should
    carry nonzero values for both."""
    out: dict[str, MetricsReport] = {}
    for name, use_dc, use_sr in ABLATION_COMBOS:
        weights = replace(
            config.weights,
            alpha=config.weights.alpha if use_dc else 0.0,
            gamma=config.weights.gamma if use_sr else 0.0,
        )
        result = run_experiment(replace(config, weights=weights))
        out[name] = result.metrics
    return out


def aggregate_metrics(reports: list[MetricsReport]) -> dict[str, Any]:
    """Per-seed list plus mean/std of every numeric field."""
    numeric = ("y_accuracy", "s_probe_accuracy", "mrg", "random_guess_s", "majority_rate_s")
    return {
        "per_seed": [r.to_dict() for r in reports],
        "mean": {k: float(np.mean([getattr(r, k) for r in reports])) for k in numeric},
        "std": {k: float(np.std([getattr(r, k) for r in reports])) for k in numeric},
    }
