"""Optimization: Adam with decoupled weight decay, KLD-weight annealing,
the auxiliary label classifier, and the paired training loop."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from .autodiff import NumericError, Tensor, collect_grads, zero_grads
from .data import Dataset, PairedDataset
from .distributions import bernoulli_nll
from .losses import LossBreakdown, LossWeights, total_loss
from .model import FarconModel, ModelDims, predict_logits
from .nn import Mlp

__all__ = [
    "DataConfig",
    "FarconConfig",
    "AdamState",
    "TrainingDivergedError",
    "adam_step",
    "beta_schedule",
    "train_aux_classifier",
    "train_farcon",
]


@dataclass(frozen=True)
class DataConfig:
    """Where training data comes from: a CSV+schema pair or the synthetic
    spurious-correlation generator."""

    kind: str = "synthetic"
    csv: str | None = None
    schema: str | None = None
    n: int = 4000
    corr_train: float = 0.9
    corr_test: float = 0.1
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.kind not in ("tabular", "synthetic"):
            raise ValueError(f"data kind must be 'tabular' or 'synthetic', got {self.kind!r}")
        if self.kind == "tabular" and (not self.csv or not self.schema):
            raise ValueError("tabular data requires both csv and schema paths")
        if self.kind == "synthetic":
            if self.n < 100:
                raise ValueError("synthetic n must be at least 100")
            for name in ("corr_train", "corr_test"):
                v = getattr(self, name)
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{name} must be in [0, 1]")
        f = np.asarray(self.fractions, dtype=np.float64)
        if len(f) != 3 or np.any(f < 0) or abs(f.sum() - 1.0) > 1e-9:
            raise ValueError("fractions must be three non-negative values summing to 1")
        object.__setattr__(self, "fractions", tuple(float(v) for v in self.fractions))


@dataclass(frozen=True)
class FarconConfig:
    """Full training configuration; serializes to/from JSON field-for-field."""

    zx_dim: int = 8
    zs_dim: int | None = None
    hidden_dim: int = 64
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 100
    batch_size: int = 64
    beta_anneal_fraction: float = 0.1
    seed: int = 0
    pairing: str = "matched_neighbor"
    y_input_mode: str = "label"
    early_stop_patience: int = 30
    aux_epochs: int = 100
    data: DataConfig | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.zx_dim < 1 or (self.zs_dim is not None and self.zs_dim < 1):
            raise ValueError("latent dims must be positive")
        if not 0.0 <= self.beta_anneal_fraction <= 1.0:
            raise ValueError("beta_anneal_fraction must be in [0, 1]")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.pairing not in ("matched_neighbor", "s_flip"):
            raise ValueError(f"unknown pairing strategy {self.pairing!r}")
        if self.y_input_mode not in ("label", "constant"):
            raise ValueError(f"y_input_mode must be 'label' or 'constant', got {self.y_input_mode!r}")
        if self.early_stop_patience < 1 or self.aux_epochs < 1:
            raise ValueError("early_stop_patience and aux_epochs must be at least 1")

    @property
    def zs_dim_resolved(self) -> int:
        return self.zx_dim if self.zs_dim is None else self.zs_dim

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        if self.data is not None:
            out["data"]["fractions"] = list(self.data.fractions)
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "FarconConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "weights" in kwargs and isinstance(kwargs["weights"], dict):
            w = kwargs["weights"]
            bad = set(w) - set(LossWeights.__dataclass_fields__)
            if bad:
                raise ValueError(f"unknown weights keys: {sorted(bad)}")
            kwargs["weights"] = LossWeights(**w)
        if kwargs.get("data") is not None and isinstance(kwargs["data"], dict):
            d = dict(kwargs["data"])
            bad = set(d) - set(DataConfig.__dataclass_fields__)
            if bad:
                raise ValueError(f"unknown data keys: {sorted(bad)}")
            if "fractions" in d:
                d["fractions"] = tuple(d["fractions"])
            kwargs["data"] = DataConfig(**d)
        return cls(**kwargs)

    def to_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str) -> "FarconConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# -- optimizer -----------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def initialize(cls, params: list[Tensor]) -> "AdamState":
        return cls(
            m={p.name: np.zeros_like(p.data) for p in params},
            v={p.name: np.zeros_like(p.data) for p in params},
        )


def adam_step(
    params: list[Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[Tensor], AdamState]:
    """One bias-corrected Adam update with decoupled weight decay.

    Weight decay is applied additively as theta -= lr * wd * theta, outside
    the adaptive term. Updates parameters and state in place and returns them.
    """
    state.step += 1
    t = state.step
    for p in params:
        g = grads[p.name]
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape mismatch for {p.name!r}")
        m = state.m[p.name]
        v = state.v[p.name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data -= lr * (m_hat / (np.sqrt(v_hat) + eps))
        if weight_decay:
            p.data -= lr * weight_decay * p.data
    return params, state


def beta_schedule(epoch: int, total_epochs: int, target_beta: float, anneal_fraction: float) -> float:
    """Linear ramp from 0 to target_beta over the first
    ceil(anneal_fraction * total_epochs) epochs, constant afterwards."""
    if not 0 <= epoch < total_epochs:
        raise ValueError("epoch must satisfy 0 <= epoch < total_epochs")
    ramp = math.ceil(anneal_fraction * total_epochs)
    if ramp == 0 or epoch >= ramp:
        return float(target_beta)
    return float(target_beta) * epoch / ramp


# -- auxiliary label classifier ----------------------------------------------------


def _binary_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    pred = (logits.reshape(-1) > 0.0).astype(np.int64)
    return float((pred == labels.reshape(-1).astype(np.int64)).mean())


def train_aux_classifier(
    config: FarconConfig, train: Dataset, valid: Dataset | None = None
) -> tuple[Mlp, float]:
    """Train the x->y classifier that supplies the encoder's y input at eval time.

    One hidden layer (64 relu units), Adam with the config's lr/weight decay,
    early stopping on validation accuracy (training accuracy when no
    validation rows are given). Returns (model, best accuracy).
    """
    rng = np.random.default_rng([config.seed, 1])
    mlp = Mlp.initialize([train.x_dim, 64, 1], ["relu", "identity"], rng, "aux")
    params = mlp.parameters()
    state = AdamState.initialize(params)
    use_valid = valid is not None and valid.n > 0
    monitor_X, monitor_Y = (valid.X, valid.Y) if use_valid else (train.X, train.Y)

    def monitor_accuracy() -> float:
        logits = mlp(Tensor(monitor_X)).data
        return _binary_accuracy(logits, monitor_Y)

    best_acc = -1.0
    best_params = [p.data.copy() for p in params]
    stale = 0
    targets = train.Y.astype(np.float64).reshape(-1, 1)
    for _ in range(config.aux_epochs):
        order = rng.permutation(train.n)
        for start in range(0, train.n, config.batch_size):
            idx = order[start : start + config.batch_size]
            zero_grads(params)
            logits = mlp(Tensor(train.X[idx]))
            loss = bernoulli_nll(logits, targets[idx]) * (1.0 / len(idx))
            loss.backward()
            adam_step(params, collect_grads(params), state, config.lr, config.weight_decay)
        acc = monitor_accuracy()
        if acc > best_acc:
            best_acc = acc
            best_params = [p.data.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break
    for p, data in zip(params, best_params):
        p.data = data
    return mlp, best_acc


def predict_aux(mlp: Mlp, X: np.ndarray) -> np.ndarray:
    """Hard label predictions of the auxiliary classifier, shape [n, 1] float."""
    logits = mlp(Tensor(X)).data
    return (logits > 0.0).astype(np.float64).reshape(-1, 1)


# -- paired training loop ------------------------------------------------------------


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite; carries the last finite epoch's model."""

    def __init__(self, component: str, epoch: int, model: FarconModel):
        self.component = component
        self.epoch = epoch
        self.model = model
        super().__init__(f"training diverged at epoch {epoch}: non-finite {component}")


def _first_nonfinite(breakdown: LossBreakdown) -> str | None:
    for name, value in vars(breakdown).items():
        if not np.isfinite(value):
            return name
    return None


def encoder_y_input(config: FarconConfig, y: np.ndarray) -> np.ndarray:
    """Encoder y column during training: true labels, or 0.5 in constant mode."""
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    if config.y_input_mode == "constant":
        return np.full_like(y, 0.5)
    return y


def _mean_breakdown(items: list[LossBreakdown]) -> LossBreakdown:
    fields = list(vars(items[0]))
    return LossBreakdown(**{f: float(np.mean([getattr(b, f) for b in items])) for f in fields})


def _validation_accuracy(model: FarconModel, config: FarconConfig, valid: Dataset) -> float:
    y_in = encoder_y_input(config, valid.Y.astype(np.float64))
    logits = predict_logits(model, valid.X, valid.S, y_in)
    return _binary_accuracy(logits, valid.Y)


def train_farcon(
    config: FarconConfig,
    paired: PairedDataset,
    valid: Dataset | None = None,
) -> tuple[FarconModel, list[LossBreakdown]]:
    """Minimize the composite objective over shuffled pair mini-batches.

    The KLD weight follows beta_schedule. When validation data is given,
    training stops after ``early_stop_patience`` epochs without a new best
    validation y-accuracy and the best parameters are restored. Runs are
    deterministic per config seed. A non-finite loss aborts with
    TrainingDivergedError carrying the last finite epoch's model.
    """
    train = paired.base
    dims = ModelDims(
        x_dim=train.x_dim,
        x_cont_dim=train.x_cont_dim,
        s_dim=train.S.shape[1],
        zx_dim=config.zx_dim,
        zs_dim=config.zs_dim_resolved,
        hidden_dim=config.hidden_dim,
    )
    rng = np.random.default_rng(config.seed)
    model = FarconModel.initialize(dims, rng)
    params = model.parameters()
    state = AdamState.initialize(params)

    use_valid = valid is not None and valid.n > 0
    best_acc = -1.0
    best_params = [p.data.copy() for p in params]
    stale = 0
    last_good = [p.data.copy() for p in params]
    history: list[LossBreakdown] = []

    for epoch in range(config.epochs):
        beta = beta_schedule(epoch, config.epochs, config.weights.beta, config.beta_anneal_fraction)
        weights = replace(config.weights, beta=beta)
        order = rng.permutation(train.n)
        batch_breakdowns: list[LossBreakdown] = []
        for start in range(0, train.n, config.batch_size):
            batch = paired.batch(order[start : start + config.batch_size])
            y_in = encoder_y_input(config, batch.y)
            zero_grads(params)
            try:
                outputs = model.forward_pair(
                    Tensor(batch.x), Tensor(batch.s), Tensor(y_in),
                    Tensor(batch.x_t), Tensor(batch.s_t), Tensor(y_in),
                    rng,
                )
                loss, breakdown = total_loss(
                    outputs, batch.x, batch.s, batch.y, batch.x_t, batch.s_t,
                    weights, train.x_cont_dim,
                )
            except NumericError as exc:
                for p, data in zip(params, last_good):
                    p.data = data
                raise TrainingDivergedError(exc.primitive, epoch, model) from exc
            bad = _first_nonfinite(breakdown)
            if bad is not None:
                for p, data in zip(params, last_good):
                    p.data = data
                raise TrainingDivergedError(bad, epoch, model)
            loss.backward()
            adam_step(params, collect_grads(params), state, config.lr, config.weight_decay)
            batch_breakdowns.append(breakdown)
        history.append(_mean_breakdown(batch_breakdowns))
        last_good = [p.data.copy() for p in params]
        if use_valid:
            acc = _validation_accuracy(model, config, valid)
            if acc > best_acc:
                best_acc = acc
                best_params = [p.data.copy() for p in params]
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    break
    if use_valid:
        for p, data in zip(params, best_params):
            p.data = data
    return model, history
