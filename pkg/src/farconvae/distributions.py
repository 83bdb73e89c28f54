"""Diagonal Gaussians, closed-form KL divergences, and likelihood terms.

All divergence functions reduce over the trailing (dimension) axis, so
batched inputs [batch, dim] give per-row results [batch] and 1-D inputs
give scalars.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor

__all__ = [
    "LOG_VAR_MIN",
    "LOG_VAR_MAX",
    "DiagGaussian",
    "StandardPrior",
    "kl_diag_gaussian",
    "symmetrized_kl",
    "kl_to_standard_prior",
    "reparameterize",
    "bernoulli_nll",
    "gaussian_nll",
]

# keeps exp(log_var) within [4.5e-5, 2.2e4]
LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


class DiagGaussian:
    """Diagonal Gaussian with mean and clamped log-variance tensors.

    Shapes are [batch, dim] or [dim]; mu and log_var must match. The
    log-variance is clamped to [LOG_VAR_MIN, LOG_VAR_MAX] at construction
    (gradient passes through inside the bounds).
    """

    def __init__(self, mu: Tensor, log_var: Tensor):
        mu = mu if isinstance(mu, Tensor) else Tensor(mu)
        log_var = log_var if isinstance(log_var, Tensor) else Tensor(log_var)
        if mu.data.shape != log_var.data.shape:
            raise ValueError(
                f"mu shape {mu.data.shape} does not match log_var shape {log_var.data.shape}"
            )
        self.mu = mu
        self.log_var = log_var.clip(LOG_VAR_MIN, LOG_VAR_MAX)

    @property
    def dim(self) -> int:
        return self.mu.data.shape[-1]

    def var(self) -> Tensor:
        return self.log_var.exp()


class StandardPrior:
    """N(0, I) in ``dim`` dimensions."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def as_gaussian(self) -> DiagGaussian:
        return DiagGaussian(Tensor(np.zeros(self.dim)), Tensor(np.zeros(self.dim)))


def _last_axis_sum(t: Tensor) -> Tensor:
    return t.sum(axis=t.data.ndim - 1)


def kl_diag_gaussian(p: DiagGaussian, q: DiagGaussian) -> Tensor:
    """KL(p || q), summed over dimensions.

    0.5 * sum(log(var_q/var_p) + (var_p + (mu_p - mu_q)^2)/var_q - 1)
    """
    if isinstance(q, StandardPrior):
        q = q.as_gaussian()
    if isinstance(p, StandardPrior):
        p = p.as_gaussian()
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    var_p = p.var()
    var_q = q.var()
    diff = p.mu - q.mu
    inner = (q.log_var - p.log_var) + (var_p + diff * diff) / var_q - 1.0
    return _last_axis_sum(inner) * 0.5


def symmetrized_kl(p: DiagGaussian, q: DiagGaussian) -> Tensor:
    """Average of the two one-way divergences; symmetric in its arguments."""
    return (kl_diag_gaussian(p, q) + kl_diag_gaussian(q, p)) * 0.5


def kl_to_standard_prior(p: DiagGaussian) -> Tensor:
    """KL(p || N(0, I)) = 0.5 * sum(var + mu^2 - 1 - log_var)."""
    inner = p.var() + p.mu * p.mu - 1.0 - p.log_var
    return _last_axis_sum(inner) * 0.5


def reparameterize(p: DiagGaussian, noise: np.ndarray) -> Tensor:
    """Differentiable sample mu + exp(log_var / 2) * noise.

    ``noise`` is plain standard-normal data with the same shape as mu; the
    caller owns the generator so runs stay reproducible.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != p.mu.data.shape:
        raise ValueError(f"noise shape {noise.shape} does not match mu shape {p.mu.data.shape}")
    return p.mu + (p.log_var * 0.5).exp() * Tensor(noise)


def bernoulli_nll(logits: Tensor, target) -> Tensor:
    """Negative Bernoulli log-likelihood, summed over all elements.

    Computed in logit space as softplus(l) - t*l per element, which never
    overflows and never takes log(0). Targets must be exactly 0 or 1.
    """
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    t = np.asarray(target, dtype=np.float64)
    if t.shape != logits.data.shape:
        raise ValueError(f"target shape {t.shape} does not match logits shape {logits.data.shape}")
    if not np.all((t == 0.0) | (t == 1.0)):
        raise ValueError("bernoulli targets must be 0 or 1")
    return (logits.softplus() - logits * Tensor(t)).sum()


def gaussian_nll(mean: Tensor, target) -> Tensor:
    """Unit-variance Gaussian NLL up to constants: 0.5 * sum((mean - target)^2)."""
    mean = mean if isinstance(mean, Tensor) else Tensor(mean)
    t = np.asarray(target, dtype=np.float64)
    if t.shape != mean.data.shape:
        raise ValueError(f"target shape {t.shape} does not match mean shape {mean.data.shape}")
    diff = mean - Tensor(t)
    return (diff * diff).sum() * 0.5
