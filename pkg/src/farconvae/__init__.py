"""Disentangled fair representation learning.

A paired conditional VAE splits each observation into a task latent z_x and
a sensitive latent z_s, trained with a distributional contrastive loss over
counterfactual pairs plus swap-reconstruction. The package ships the
estimator facade (FarconVAE), the functional training/evaluation pipeline,
and a CLI (``farconvae``).
"""

from .autodiff import FiniteDiffReport, NumericError, Tensor, finite_diff_check, loss_and_grads
from .data import (
    Dataset,
    PairBatch,
    PairedDataset,
    TabularSchema,
    build_counterfactual_pairs,
    corrupt_sensitive,
    load_tabular,
    make_synthetic_spurious,
    split,
)
from .distributions import (
    DiagGaussian,
    StandardPrior,
    bernoulli_nll,
    gaussian_nll,
    kl_diag_gaussian,
    kl_to_standard_prior,
    reparameterize,
    symmetrized_kl,
)
from .estimator import FarconVAE
from .evaluation import (
    MetricsReport,
    ablation_run,
    encode_dataset,
    export_embeddings,
    linear_probe,
    mrg,
    noise_sweep,
    run_experiment,
)
from .losses import (
    LossBreakdown,
    LossWeights,
    distributional_contrastive,
    elbo_loss,
    kernel_similarity,
    swap_recon_loss,
    total_loss,
    verify_propositions,
)
from .model import FarconModel, ModelDims, PairOutputs, load_checkpoint, save_checkpoint
from .nn import Mlp
from .presets import get_preset
from .training import (
    AdamState,
    FarconConfig,
    TrainingDivergedError,
    adam_step,
    beta_schedule,
    train_aux_classifier,
    train_farcon,
)

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "NumericError",
    "FiniteDiffReport",
    "finite_diff_check",
    "loss_and_grads",
    "DiagGaussian",
    "StandardPrior",
    "kl_diag_gaussian",
    "symmetrized_kl",
    "kl_to_standard_prior",
    "reparameterize",
    "bernoulli_nll",
    "gaussian_nll",
    "FarconModel",
    "ModelDims",
    "PairOutputs",
    "save_checkpoint",
    "load_checkpoint",
    "LossWeights",
    "LossBreakdown",
    "elbo_loss",
    "kernel_similarity",
    "distributional_contrastive",
    "swap_recon_loss",
    "total_loss",
    "verify_propositions",
    "Dataset",
    "PairedDataset",
    "PairBatch",
    "TabularSchema",
    "load_tabular",
    "build_counterfactual_pairs",
    "corrupt_sensitive",
    "make_synthetic_spurious",
    "split",
    "FarconConfig",
    "AdamState",
    "TrainingDivergedError",
    "adam_step",
    "beta_schedule",
    "train_aux_classifier",
    "train_farcon",
    "MetricsReport",
    "encode_dataset",
    "linear_probe",
    "mrg",
    "run_experiment",
    "noise_sweep",
    "ablation_run",
    "export_embeddings",
    "FarconVAE",
    "Mlp",
    "get_preset",
    "__version__",
]
