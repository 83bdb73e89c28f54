"""Built-in experiment configurations.

adult/german expect the normalized UCI CSVs produced by
scripts/fetch_uci_data.py under data/. The synthetic presets need no files.
``synthetic`` carries the contrastive term only; ``synthetic_sr`` adds
swap-reconstruction and is the base config for ablations.
"""

from __future__ import annotations

from .losses import LossWeights
from .training import DataConfig, FarconConfig

__all__ = ["PRESET_NAMES", "get_preset"]


def _adult() -> FarconConfig:
    return FarconConfig(
        zx_dim=15,
        hidden_dim=64,
        weights=LossWeights(alpha=1.0, beta=0.2, gamma=1.0, kernel="gaussian"),
        lr=1e-3,
        weight_decay=1e-4,
        epochs=300,
        batch_size=64,
        beta_anneal_fraction=0.1,
        seed=0,
        pairing="matched_neighbor",
        y_input_mode="label",
        data=DataConfig(kind="tabular", csv="data/adult.csv", schema="data/adult.schema.json"),
    )


def _german() -> FarconConfig:
    return FarconConfig(
        zx_dim=5,
        hidden_dim=64,
        weights=LossWeights(alpha=1.0, beta=0.2, gamma=1.0, kernel="gaussian"),
        lr=1e-3,
        weight_decay=1e-4,
        epochs=300,
        batch_size=64,
        beta_anneal_fraction=0.1,
        seed=0,
        pairing="matched_neighbor",
        y_input_mode="label",
        data=DataConfig(kind="tabular", csv="data/german.csv", schema="data/german.schema.json"),
    )


def _synthetic() -> FarconConfig:
    return FarconConfig(
        zx_dim=8,
        hidden_dim=64,
        weights=LossWeights(alpha=1.0, beta=0.2, gamma=0.0, kernel="student_t"),
        lr=1e-3,
        weight_decay=1e-4,
        epochs=100,
        batch_size=64,
        beta_anneal_fraction=0.1,
        seed=0,
        pairing="matched_neighbor",
        y_input_mode="constant",
        data=DataConfig(kind="synthetic", n=4000, corr_train=0.9, corr_test=0.1),
    )


def _synthetic_sr() -> FarconConfig:
    return FarconConfig(
        zx_dim=8,
        hidden_dim=64,
        weights=LossWeights(alpha=0.5, beta=0.2, gamma=0.5, kernel="student_t"),
        lr=7e-4,
        weight_decay=1e-4,
        epochs=100,
        batch_size=64,
        beta_anneal_fraction=0.1,
        seed=0,
        pairing="matched_neighbor",
        y_input_mode="constant",
        data=DataConfig(kind="synthetic", n=4000, corr_train=0.9, corr_test=0.1),
    )


_BUILDERS = {
    "adult": _adult,
    "german": _german,
    "synthetic": _synthetic,
    "synthetic_sr": _synthetic_sr,
}

PRESET_NAMES = tuple(_BUILDERS)


def get_preset(name: str) -> FarconConfig:
    key = name.replace("-", "_")
    if key not in _BUILDERS:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    return _BUILDERS[key]()
