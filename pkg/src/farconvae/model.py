"""Two-branch conditional VAE that splits latents into task and sensitive parts.

One shared encoder body feeds two posterior heads: q(z_x | x, s, y) for the
task-relevant latent and q(z_s | x, s, y) for the sensitive latent. A shared
decoder body feeds reconstruction heads for x and s, and a separate predictor
maps z_x alone to the label logit, so label information can only flow
through z_x.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor, cols, concat
from .distributions import DiagGaussian, reparameterize
from .nn import Mlp

__all__ = [
    "ModelDims",
    "FarconModel",
    "PairOutputs",
    "encode_mean",
    "predict_logits",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelDims:
    """Sizes of the model's interfaces.

    x columns are ordered continuous-block-first: the first ``x_cont_dim``
    decoder outputs are Gaussian means, the rest Bernoulli logits.
    """

    x_dim: int
    x_cont_dim: int
    s_dim: int
    zx_dim: int
    zs_dim: int
    hidden_dim: int = 64
    y_dim: int = 1

    def __post_init__(self):
        if self.x_dim < 1 or self.s_dim < 1 or self.zx_dim < 1 or self.zs_dim < 1:
            raise ValueError("all dims must be positive")
        if not 0 <= self.x_cont_dim <= self.x_dim:
            raise ValueError("x_cont_dim must lie in [0, x_dim]")
        if self.hidden_dim < 1 or self.y_dim != 1:
            raise ValueError("hidden_dim must be positive and y_dim must be 1")


@dataclass
class PairOutputs:
    """Everything the loss needs from one forward pass over an aligned pair.

    Fields with the ``_t`` suffix belong to the counterfactual member. The
    ``swap_*`` fields are decodes of the swapped latent combinations:
    (z_x_t, z_s) aimed at the original observation and (z_x, z_s_t) aimed
    at the counterfactual one.
    """

    qzx: DiagGaussian
    qzs: DiagGaussian
    qzx_t: DiagGaussian
    qzs_t: DiagGaussian
    z_x: Tensor
    z_s: Tensor
    z_x_t: Tensor
    z_s_t: Tensor
    x_params: Tensor
    s_logits: Tensor
    x_params_t: Tensor
    s_logits_t: Tensor
    y_logits: Tensor
    y_logits_t: Tensor
    swap_x_params: Tensor
    swap_s_logits: Tensor
    swap_x_params_t: Tensor
    swap_s_logits_t: Tensor


class FarconModel:
    def __init__(
        self,
        dims: ModelDims,
        encoder_body: Mlp,
        encoder_head_x: Mlp,
        encoder_head_s: Mlp,
        decoder_body: Mlp,
        decoder_head_x: Mlp,
        decoder_head_s: Mlp,
        predictor_y: Mlp,
    ):
        self.dims = dims
        self.encoder_body = encoder_body
        self.encoder_head_x = encoder_head_x
        self.encoder_head_s = encoder_head_s
        self.decoder_body = decoder_body
        self.decoder_head_x = decoder_head_x
        self.decoder_head_s = decoder_head_s
        self.predictor_y = predictor_y

    @classmethod
    def initialize(cls, dims: ModelDims, rng: np.random.Generator) -> "FarconModel":
        """One hidden layer (relu) for encoder and decoder bodies, linear heads,
        and a single-linear-layer label predictor."""
        enc_in = dims.x_dim + dims.s_dim + dims.y_dim
        dec_in = dims.zx_dim + dims.zs_dim
        h = dims.hidden_dim
        return cls(
            dims=dims,
            encoder_body=Mlp.initialize([enc_in, h], ["relu"], rng, "encoder_body"),
            encoder_head_x=Mlp.initialize([h, 2 * dims.zx_dim], ["identity"], rng, "encoder_head_x"),
            encoder_head_s=Mlp.initialize([h, 2 * dims.zs_dim], ["identity"], rng, "encoder_head_s"),
            decoder_body=Mlp.initialize([dec_in, h], ["relu"], rng, "decoder_body"),
            decoder_head_x=Mlp.initialize([h, dims.x_dim], ["identity"], rng, "decoder_head_x"),
            decoder_head_s=Mlp.initialize([h, dims.s_dim], ["identity"], rng, "decoder_head_s"),
            predictor_y=Mlp.initialize([dims.zx_dim, 1], ["identity"], rng, "predictor_y"),
        )

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for module in (
            self.encoder_body,
            self.encoder_head_x,
            self.encoder_head_s,
            self.decoder_body,
            self.decoder_head_x,
            self.decoder_head_s,
            self.predictor_y,
        ):
            out.extend(module.parameters())
        return out

    # -- forward pieces ------------------------------------------------------

    def encode(self, x: Tensor, s: Tensor, y: Tensor) -> tuple[DiagGaussian, DiagGaussian]:
        """Posteriors (q(z_x|x,s,y), q(z_s|x,s,y)); head outputs split as
        [mu, log_var] down the column axis."""
        h = self.encoder_body(concat([x, s, y], axis=1))
        zx_raw = self.encoder_head_x(h)
        zs_raw = self.encoder_head_s(h)
        k, m = self.dims.zx_dim, self.dims.zs_dim
        qzx = DiagGaussian(cols(zx_raw, 0, k), cols(zx_raw, k, 2 * k))
        qzs = DiagGaussian(cols(zs_raw, 0, m), cols(zs_raw, m, 2 * m))
        return qzx, qzs

    def decode(self, z_x: Tensor, z_s: Tensor) -> tuple[Tensor, Tensor]:
        """(x_params, s_logits). The first x_cont_dim columns of x_params are
        Gaussian means, the remaining columns Bernoulli logits."""
        h = self.decoder_body(concat([z_x, z_s], axis=1))
        return self.decoder_head_x(h), self.decoder_head_s(h)

    def predict_y(self, z_x: Tensor) -> Tensor:
        return self.predictor_y(z_x)

    def forward_pair(
        self, x, s, y, x_t, s_t, y_t, rng: np.random.Generator, sample: bool = True
    ) -> PairOutputs:
        """Full pass over an aligned pair batch.

        Reparameterization noise is drawn from ``rng`` in a fixed order
        (z_x, z_s, z_x_t, z_s_t) so runs are replayable. With sample=False
        the posterior means stand in for the samples and ``rng`` is not
        consumed, which keeps deterministic evaluation passes from
        perturbing a live training noise stream.
        """
        qzx, qzs = self.encode(x, s, y)
        qzx_t, qzs_t = self.encode(x_t, s_t, y_t)
        if sample:
            z_x = reparameterize(qzx, rng.standard_normal(qzx.mu.shape))
            z_s = reparameterize(qzs, rng.standard_normal(qzs.mu.shape))
            z_x_t = reparameterize(qzx_t, rng.standard_normal(qzx_t.mu.shape))
            z_s_t = reparameterize(qzs_t, rng.standard_normal(qzs_t.mu.shape))
        else:
            z_x, z_s = qzx.mu, qzs.mu
            z_x_t, z_s_t = qzx_t.mu, qzs_t.mu
        x_params, s_logits = self.decode(z_x, z_s)
        x_params_t, s_logits_t = self.decode(z_x_t, z_s_t)
        swap_x_params, swap_s_logits = self.decode(z_x_t, z_s)
        swap_x_params_t, swap_s_logits_t = self.decode(z_x, z_s_t)
        return PairOutputs(
            qzx=qzx,
            qzs=qzs,
            qzx_t=qzx_t,
            qzs_t=qzs_t,
            z_x=z_x,
            z_s=z_s,
            z_x_t=z_x_t,
            z_s_t=z_s_t,
            x_params=x_params,
            s_logits=s_logits,
            x_params_t=x_params_t,
            s_logits_t=s_logits_t,
            y_logits=self.predict_y(z_x),
            y_logits_t=self.predict_y(z_x_t),
            swap_x_params=swap_x_params,
            swap_s_logits=swap_s_logits,
            swap_x_params_t=swap_x_params_t,
            swap_s_logits_t=swap_s_logits_t,
        )


def encode_mean(
    model: FarconModel,
    X: np.ndarray,
    S: np.ndarray,
    y_in: np.ndarray,
    latent: str = "zx",
    chunk: int = 4096,
) -> np.ndarray:
    """Posterior means of q(z_x|x,s,y) (or q(z_s|...) with latent='zs') as a
    plain [n, dim] array; batched, no gradients kept."""
    if latent not in ("zx", "zs"):
        raise ValueError(f"latent must be 'zx' or 'zs', got {latent!r}")
    X = np.asarray(X, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    y_in = np.asarray(y_in, dtype=np.float64).reshape(-1, 1)
    dim = model.dims.zx_dim if latent == "zx" else model.dims.zs_dim
    out = np.empty((X.shape[0], dim))
    for start in range(0, X.shape[0], chunk):
        stop = min(start + chunk, X.shape[0])
        qzx, qzs = model.encode(Tensor(X[start:stop]), Tensor(S[start:stop]), Tensor(y_in[start:stop]))
        out[start:stop] = (qzx if latent == "zx" else qzs).mu.data
    return out


def predict_logits(model: FarconModel, X: np.ndarray, S: np.ndarray, y_in: np.ndarray) -> np.ndarray:
    """Label logits from the posterior-mean task latent, shape [n]."""
    zx = encode_mean(model, X, S, y_in, latent="zx")
    return model.predict_y(Tensor(zx)).data.reshape(-1)


def save_checkpoint(model: FarconModel, path: str) -> None:
    """Write dims plus named parameter arrays as JSON (exact float64 round trip)."""
    params = {
        p.name: {"shape": list(p.data.shape), "data": p.data.reshape(-1).tolist()}
        for p in model.parameters()
    }
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "dims": asdict(model.dims),
        "params": params,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(path: str) -> FarconModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version: {version!r}")
    dims = ModelDims(**payload["dims"])
    model = FarconModel.initialize(dims, np.random.default_rng(0))
    loaded = payload["params"]
    for p in model.parameters():
        if p.name not in loaded:
            raise ValueError(f"checkpoint is missing parameter {p.name!r}")
        entry = loaded[p.name]
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if arr.shape != p.data.shape:
            raise ValueError(
                f"checkpoint parameter {p.name!r} has shape {arr.shape}, expected {p.data.shape}"
            )
        p.data = arr
    extra = set(loaded) - {p.name for p in model.parameters()}
    if extra:
        raise ValueError(f"checkpoint has unexpected parameters: {sorted(extra)}")
    return model
