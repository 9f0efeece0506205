"""Voxel variational autoencoder built on tensor_nn.

Encoder: four residual downsampling blocks
    y = leaky_relu(batchnorm(conv3d_{k4,s2,p1}(x)) + shortcut(x))
where the shortcut is a stride-2 1x1x1 convolution (realized as subsample
then 1x1x1 conv, which is the same map). After the last block the activation
is flattened and two linear heads produce mu and logvar.

Decoder: linear from the latent back to the bottleneck volume, then four
residual upsampling blocks
    y = conv_transpose3d_{k4,s2,p1}(leaky_relu(batchnorm(x))) + up_shortcut(x)
with up_shortcut = nearest-neighbor x2 then 1x1x1 conv, and finally a 1x1x1
convolution to one channel followed by a sigmoid.

The number of blocks is len(channel ladder) - 1 (default 4); the resolution
must be divisible by 2^blocks. All arithmetic is float64; checkpoints store
float32 (format VAEC, see save_checkpoint).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import tensor_nn as nn
from .errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    NumericError,
)
from .voxelizer import grid_iou, read_voxl_matrix


@dataclass(frozen=True)
class VaeConfig:
    resolution: int = 32
    latent_dim: int = 128
    encoder_channels: tuple = (1, 32, 64, 128, 256)
    decoder_channels: tuple = (256, 128, 64, 32, 16)
    kernel: int = 4
    stride: int = 2
    padding: int = 1
    negative_slope: float = 0.2
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.encoder_channels[0] != 1:
            raise ConfigurationError("encoder must start from 1 input channel")
        if len(self.decoder_channels) != len(self.encoder_channels):
            raise ConfigurationError("encoder and decoder ladders must mirror in depth")
        if self.decoder_channels[0] != self.encoder_channels[-1]:
            raise ConfigurationError(
                "decoder must start at the encoder's bottleneck channel count"
            )
        blocks = self.num_blocks
        if blocks < 1:
            raise ConfigurationError("need at least one block")
        if self.resolution % (1 << blocks) != 0 or self.resolution >> blocks < 1:
            raise ConfigurationError(
                f"resolution {self.resolution} not divisible by 2^{blocks} blocks"
            )

    @property
    def num_blocks(self) -> int:
        return len(self.encoder_channels) - 1

    @property
    def bottleneck_spatial(self) -> int:
        return self.resolution >> self.num_blocks

    @property
    def bottleneck_size(self) -> int:
        return self.encoder_channels[-1] * self.bottleneck_spatial**3

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "latent_dim": self.latent_dim,
            "encoder_channels": list(self.encoder_channels),
            "decoder_channels": list(self.decoder_channels),
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
            "negative_slope": self.negative_slope,
            "bn_eps": self.bn_eps,
            "bn_momentum": self.bn_momentum,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VaeConfig":
        d = dict(d)
        d["encoder_channels"] = tuple(d["encoder_channels"])
        d["decoder_channels"] = tuple(d["decoder_channels"])
        return cls(**d)


# channel ladders for the documented presets
PAPER_CHANNELS = ((1, 32, 64, 128, 256), (256, 128, 64, 32, 16))
DESK_CHANNELS = ((1, 16, 32, 64, 128), (128, 64, 32, 16, 8))
TINY_CHANNELS = ((1, 4, 8, 16, 32), (32, 16, 8, 4, 4))


@dataclass
class EncoderOutput:
    mu: np.ndarray
    logvar: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 240
    learning_rate: float = 5e-5  # the published learning rate is truncated; exponent is a guess
    kld_weight: float = 1.0
    split_fraction: float = 0.8
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigurationError("split_fraction must lie strictly inside (0, 1)")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2 (batchnorm)")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "kld_weight": self.kld_weight,
            "split_fraction": self.split_fraction,
            "patience": self.patience,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class LossBreakdown:
    epoch: int
    train_total: float
    train_recon: float
    train_kld: float
    val_total: float
    val_recon: float
    val_kld: float

    CSV_HEADER = "epoch,train_total,train_recon,train_kld,val_total,val_recon,val_kld"

    def csv_row(self) -> str:
        vals = [
            self.train_total, self.train_recon, self.train_kld,
            self.val_total, self.val_recon, self.val_kld,
        ]
        return ",".join([str(self.epoch)] + [f"{v:.9g}" for v in vals])


def write_losses_csv(path, history: list[LossBreakdown]) -> None:
    lines = [LossBreakdown.CSV_HEADER] + [h.csv_row() for h in history]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class Vae:
    """Model = config + named parameter arrays + batchnorm running stats."""

    def __init__(self, config: VaeConfig, params: dict, bn_stats: dict, metadata=None):
        self.config = config
        self.params = params
        self.bn_stats = bn_stats
        self.metadata = metadata or {}

    # -- construction -------------------------------------------------------

    # Start posteriors nearly deterministic (sigma ~ 0.14): with the unit
    # sigma a zero bias gives, early latents are noise, the decoder learns to
    # ignore them, and training stalls at the dataset-mean shape. The KLD
    # term re-inflates variances once the latent carries signal.
    LOGVAR_BIAS_INIT = -4.0

    @classmethod
    def build(cls, config: VaeConfig, seed: int) -> "Vae":
        """Fresh model; weights ~ N(0, gain^2 / fan_in) with
        gain^2 = 2 / (1 + negative_slope^2), biases zero (except the
        log-variance head, see LOGVAR_BIAS_INIT), drawn in a fixed parameter
        order from one seeded PCG64 stream."""
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
        gain = np.sqrt(2.0 / (1.0 + config.negative_slope**2))
        k = config.kernel
        params: dict[str, np.ndarray] = {}
        bn_stats: dict[str, np.ndarray] = {}

        def conv_w(name, cout, cin, kk):
            fan_in = cin * kk**3
            params[name] = rng.standard_normal((cout, cin, kk, kk, kk)) * (
                gain / np.sqrt(fan_in)
            )

        def tconv_w(name, cin, cout, kk):
            fan_in = cin * kk**3
            params[name] = rng.standard_normal((cin, cout, kk, kk, kk)) * (
                gain / np.sqrt(fan_in)
            )

        def linear_w(name, rows, cols):
            params[name] = rng.standard_normal((rows, cols)) * (gain / np.sqrt(cols))

        enc = config.encoder_channels
        for i in range(config.num_blocks):
            cin, cout = enc[i], enc[i + 1]
            conv_w(f"enc{i}.conv.w", cout, cin, k)
            params[f"enc{i}.conv.b"] = np.zeros(cout)
            conv_w(f"enc{i}.sc.w", cout, cin, 1)
            params[f"enc{i}.sc.b"] = np.zeros(cout)
            params[f"enc{i}.bn.gamma"] = np.ones(cout)
            params[f"enc{i}.bn.beta"] = np.zeros(cout)
            bn_stats[f"enc{i}.bn.rm"] = np.zeros(cout)
            bn_stats[f"enc{i}.bn.rv"] = np.ones(cout)

        flat = config.bottleneck_size
        linear_w("fc_mu.w", config.latent_dim, flat)
        params["fc_mu.b"] = np.zeros(config.latent_dim)
        linear_w("fc_logvar.w", config.latent_dim, flat)
        params["fc_logvar.b"] = np.full(config.latent_dim, cls.LOGVAR_BIAS_INIT)

        dec = config.decoder_channels
        dflat = dec[0] * config.bottleneck_spatial**3
        linear_w("dec_fc.w", dflat, config.latent_dim)
        params["dec_fc.b"] = np.zeros(dflat)
        for i in range(config.num_blocks):
            cin, cout = dec[i], dec[i + 1]
            params[f"dec{i}.bn.gamma"] = np.ones(cin)
            params[f"dec{i}.bn.beta"] = np.zeros(cin)
            bn_stats[f"dec{i}.bn.rm"] = np.zeros(cin)
            bn_stats[f"dec{i}.bn.rv"] = np.ones(cin)
            tconv_w(f"dec{i}.tconv.w", cin, cout, k)
            params[f"dec{i}.tconv.b"] = np.zeros(cout)
            conv_w(f"dec{i}.sc.w", cout, cin, 1)
            params[f"dec{i}.sc.b"] = np.zeros(cout)
        conv_w("head.w", 1, dec[-1], 1)
        params["head.b"] = np.zeros(1)
        return cls(config, params, bn_stats, {"seed": int(seed)})

    def layer_specs(self) -> list[nn.LayerSpec]:
        """Architecture descriptor (kinds + hyperparameters, no tensors)."""
        c = self.config
        specs = []
        conv_h = {"kernel": c.kernel, "stride": c.stride, "padding": c.padding}
        for i in range(c.num_blocks):
            specs += [
                nn.LayerSpec("conv3d", {**conv_h, "block": f"enc{i}"}),
                nn.LayerSpec("batchnorm3d", {"eps": c.bn_eps, "momentum": c.bn_momentum}),
                nn.LayerSpec("add", {"shortcut": "subsample+1x1x1"}),
                nn.LayerSpec("leaky_relu", {"negative_slope": c.negative_slope}),
            ]
        specs += [
            nn.LayerSpec("reshape", {"to": [c.bottleneck_size]}),
            nn.LayerSpec("linear", {"out": c.latent_dim, "head": "mu"}),
            nn.LayerSpec("linear", {"out": c.latent_dim, "head": "logvar"}),
            nn.LayerSpec("linear", {"out": self.params["dec_fc.w"].shape[0]}),
            nn.LayerSpec("reshape", {"to": [c.decoder_channels[0]] + [c.bottleneck_spatial] * 3}),
        ]
        for i in range(c.num_blocks):
            specs += [
                nn.LayerSpec("batchnorm3d", {"eps": c.bn_eps, "momentum": c.bn_momentum}),
                nn.LayerSpec("leaky_relu", {"negative_slope": c.negative_slope}),
                nn.LayerSpec("conv_transpose3d", {**conv_h, "block": f"dec{i}"}),
                nn.LayerSpec("add", {"shortcut": "upsample+1x1x1"}),
            ]
        specs += [nn.LayerSpec("conv3d", {"kernel": 1, "stride": 1, "padding": 0}),
                  nn.LayerSpec("sigmoid")]
        return specs

    # -- forward / backward -------------------------------------------------

    def _check_input(self, grids: np.ndarray):
        r = self.config.resolution
        if grids.ndim != 5 or grids.shape[1] != 1 or grids.shape[2:] != (r, r, r):
            raise DimensionError(
                f"expected grids [B,1,{r},{r},{r}], got {grids.shape}"
            )

    def encode_forward(self, x: np.ndarray, training: bool):
        """x is [B,1,R,R,R]; returns (mu, logvar, cache); cache None in eval."""
        self._check_input(x)
        c = self.config
        p = self.params
        cache = {"blocks": []} if training else None
        h = nn.to_channels_last(x)
        for i in range(c.num_blocks):
            pre = h
            win = nn.cl_gather_windows(h, c.kernel, c.stride, c.padding) if training else None
            main = nn.cl_conv3d(
                h, p[f"enc{i}.conv.w"], p[f"enc{i}.conv.b"],
                stride=c.stride, padding=c.padding, _win=win,
            )
            bn, bn_cache, rm, rv = nn.cl_batchnorm3d(
                main,
                p[f"enc{i}.bn.gamma"], p[f"enc{i}.bn.beta"],
                self.bn_stats[f"enc{i}.bn.rm"], self.bn_stats[f"enc{i}.bn.rv"],
                training, eps=c.bn_eps, momentum=c.bn_momentum,
            )
            if training:
                self.bn_stats[f"enc{i}.bn.rm"] = rm
                self.bn_stats[f"enc{i}.bn.rv"] = rv
            sub = pre[:, :: c.stride, :: c.stride, :: c.stride, :]
            short = nn.cl_conv3d(sub, p[f"enc{i}.sc.w"], p[f"enc{i}.sc.b"], stride=1, padding=0)
            summed = bn + short
            h = nn.leaky_relu(summed, c.negative_slope)
            if training:
                cache["blocks"].append(
                    {"pre": pre, "sub": sub, "win": win,
                     "bn_cache": bn_cache, "summed": summed}
                )
        B = h.shape[0]
        flat = h.reshape(B, -1)
        mu = nn.linear(flat, p["fc_mu.w"], p["fc_mu.b"])
        logvar = nn.linear(flat, p["fc_logvar.w"], p["fc_logvar.b"])
        if training:
            cache["flat"] = flat
            cache["h_shape"] = h.shape
        return mu, logvar, cache

    def encode_backward(self, cache, grad_mu, grad_logvar) -> dict:
        c = self.config
        p = self.params
        grads: dict[str, np.ndarray] = {}
        g_flat_mu, grads["fc_mu.w"], grads["fc_mu.b"] = nn.linear_backward(
            grad_mu, cache["flat"], p["fc_mu.w"]
        )
        g_flat_lv, grads["fc_logvar.w"], grads["fc_logvar.b"] = nn.linear_backward(
            grad_logvar, cache["flat"], p["fc_logvar.w"]
        )
        g = (g_flat_mu + g_flat_lv).reshape(cache["h_shape"])
        for i in reversed(range(c.num_blocks)):
            blk = cache["blocks"][i]
            g_sum = nn.leaky_relu_backward(g, blk["summed"], c.negative_slope)
            # shortcut branch
            g_sub, grads[f"enc{i}.sc.w"], grads[f"enc{i}.sc.b"] = nn.cl_conv3d_backward(
                g_sum, blk["sub"], p[f"enc{i}.sc.w"], stride=1, padding=0
            )
            g_pre_short = np.zeros_like(blk["pre"])
            g_pre_short[:, :: c.stride, :: c.stride, :: c.stride, :] = g_sub
            # main branch
            g_main, g_gamma, g_beta = nn.cl_batchnorm3d_backward(g_sum, blk["bn_cache"])
            grads[f"enc{i}.bn.gamma"] = g_gamma
            grads[f"enc{i}.bn.beta"] = g_beta
            g_pre_main, grads[f"enc{i}.conv.w"], grads[f"enc{i}.conv.b"] = nn.cl_conv3d_backward(
                g_main, blk["pre"], p[f"enc{i}.conv.w"],
                stride=c.stride, padding=c.padding, _win=blk["win"],
            )
            g = g_pre_main + g_pre_short
        return grads

    def decode_forward(self, z: np.ndarray, training: bool = False):
        """Returns (probabilities [B,R,R,R,1] channels-last, cache)."""
        c = self.config
        p = self.params
        if z.ndim != 2 or z.shape[1] != c.latent_dim:
            raise DimensionError(
                f"latent must be [B,{c.latent_dim}], got {z.shape}"
            )
        if not np.all(np.isfinite(z)):
            raise NumericError("latent contains nonfinite values")
        cache = {"z": z, "blocks": []} if training else None
        B = z.shape[0]
        flat = nn.linear(z, p["dec_fc.w"], p["dec_fc.b"])
        m = c.bottleneck_spatial
        h = flat.reshape(B, m, m, m, c.decoder_channels[0])
        for i in range(c.num_blocks):
            pre = h
            bn, bn_cache, rm, rv = nn.cl_batchnorm3d(
                h,
                p[f"dec{i}.bn.gamma"], p[f"dec{i}.bn.beta"],
                self.bn_stats[f"dec{i}.bn.rm"], self.bn_stats[f"dec{i}.bn.rv"],
                training, eps=c.bn_eps, momentum=c.bn_momentum,
            )
            if training:
                self.bn_stats[f"dec{i}.bn.rm"] = rm
                self.bn_stats[f"dec{i}.bn.rv"] = rv
            act = nn.leaky_relu(bn, c.negative_slope)
            main = nn.cl_conv_transpose3d(
                act, p[f"dec{i}.tconv.w"], p[f"dec{i}.tconv.b"],
                stride=c.stride, padding=c.padding,
            )
            up = _upsample2(pre)
            short = nn.cl_conv3d(up, p[f"dec{i}.sc.w"], p[f"dec{i}.sc.b"], stride=1, padding=0)
            h = main + short
            if training:
                cache["blocks"].append(
                    {"pre": pre, "bn_cache": bn_cache, "bn_out": bn, "act": act, "up": up}
                )
        logits = nn.cl_conv3d(h, p["head.w"], p["head.b"], stride=1, padding=0)
        probs = nn.sigmoid(logits)
        if training:
            cache["pre_head"] = h
            cache["probs"] = probs
        return probs, cache

    def decode_backward(self, cache, grad_probs):
        c = self.config
        p = self.params
        grads: dict[str, np.ndarray] = {}
        g_logits = nn.sigmoid_backward(grad_probs, cache["probs"])
        g, grads["head.w"], grads["head.b"] = nn.cl_conv3d_backward(
            g_logits, cache["pre_head"], p["head.w"], stride=1, padding=0
        )
        for i in reversed(range(c.num_blocks)):
            blk = cache["blocks"][i]
            # shortcut branch
            g_up, grads[f"dec{i}.sc.w"], grads[f"dec{i}.sc.b"] = nn.cl_conv3d_backward(
                g, blk["up"], p[f"dec{i}.sc.w"], stride=1, padding=0
            )
            B, D, H, W, C = blk["pre"].shape
            g_pre_short = g_up.reshape(B, D, 2, H, 2, W, 2, C).sum(axis=(2, 4, 6))
            # main branch
            g_act, grads[f"dec{i}.tconv.w"], grads[f"dec{i}.tconv.b"] = (
                nn.cl_conv_transpose3d_backward(
                    g, blk["act"], p[f"dec{i}.tconv.w"],
                    stride=c.stride, padding=c.padding,
                )
            )
            g_bn = nn.leaky_relu_backward(g_act, blk["bn_out"], c.negative_slope)
            g_pre_main, g_gamma, g_beta = nn.cl_batchnorm3d_backward(g_bn, blk["bn_cache"])
            grads[f"dec{i}.bn.gamma"] = g_gamma
            grads[f"dec{i}.bn.beta"] = g_beta
            g = g_pre_main + g_pre_short
        g_flat = g.reshape(g.shape[0], -1)
        g_z, grads["dec_fc.w"], grads["dec_fc.b"] = nn.linear_backward(
            g_flat, cache["z"], p["dec_fc.w"]
        )
        return g_z, grads

    # -- public inference ---------------------------------------------------

    def encode(self, grids: np.ndarray, mode: str = "eval") -> EncoderOutput:
        training = _parse_mode(mode)
        mu, logvar, _ = self.encode_forward(_as_float_batch(grids), training)
        return EncoderOutput(mu=mu, logvar=logvar)

    def decode(self, z: np.ndarray, mode: str = "eval") -> np.ndarray:
        """Probabilities [B,1,R,R,R] in (0,1)."""
        training = _parse_mode(mode)
        probs, _ = self.decode_forward(np.asarray(z, dtype=np.float64), training)
        return nn.to_channels_first(probs)

    def extract_features(self, grids: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Row i = encoder mean of vessel i (eval mode, no sampling)."""
        grids = _as_float_batch(grids)
        rows = []
        for start in range(0, grids.shape[0], batch_size):
            out = self.encode(grids[start : start + batch_size], mode="eval")
            rows.append(out.mu)
        return np.concatenate(rows, axis=0)

    def reconstruction_iou(self, grids: np.ndarray, batch_size: int = 32) -> float:
        """Mean IoU of thresholded eval-mode reconstructions against inputs."""
        grids = np.asarray(grids)
        if grids.ndim == 5:
            grids = grids[:, 0]
        vals = []
        for start in range(0, grids.shape[0], batch_size):
            chunk = grids[start : start + batch_size]
            out = self.encode(chunk, mode="eval")
            probs = self.decode(out.mu, mode="eval")
            binar = (probs[:, 0] >= 0.5).astype(np.uint8)
            for i in range(chunk.shape[0]):
                vals.append(grid_iou(binar[i], chunk[i]))
        return float(np.mean(vals))

    def clone_params(self) -> tuple[dict, dict]:
        return (
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.bn_stats.items()},
        )


def _upsample2(x):
    """Nearest-neighbor x2 along the three spatial axes (channels last)."""
    B, D, H, W, C = x.shape
    expanded = np.broadcast_to(
        x[:, :, None, :, None, :, None, :], (B, D, 2, H, 2, W, 2, C)
    )
    return np.ascontiguousarray(expanded).reshape(B, 2 * D, 2 * H, 2 * W, C)


def _parse_mode(mode: str) -> bool:
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"mode must be 'train' or 'eval', got {mode!r}")
    return mode == "train"


def _as_float_batch(grids: np.ndarray) -> np.ndarray:
    grids = np.asarray(grids)
    if grids.ndim == 4:  # [N,R,R,R] -> [N,1,R,R,R]
        grids = grids[:, None]
    return grids.astype(np.float64, copy=False)


def reparameterize(out: EncoderOutput, seed) -> np.ndarray:
    """z = mu + exp(0.5 logvar) * eps with eps ~ N(0, I) from the seeded RNG."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    eps = rng.standard_normal(out.mu.shape)
    return out.mu + np.exp(0.5 * out.logvar) * eps


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint, exhaustive train/validation split by seeded shuffle."""
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError("split fraction must lie inside (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    perm = rng.permutation(n)
    n_train = int(round(fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    return perm[:n_train], perm[n_train:]


def loss_and_grads(model: Vae, x: np.ndarray, eps: np.ndarray, kld_weight: float):
    """One training forward/backward. eps is the reparameterization noise.

    Returns (total, recon, kld, grads). Reconstruction is the per-sample sum
    of squared voxel errors averaged over the batch; KLD is the per-sample
    sum over latent dims averaged over the batch.
    """
    mu, logvar, enc_cache = model.encode_forward(x, training=True)
    kld, g_mu_kld, g_lv_kld = nn.kld_loss(mu, logvar)
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * eps
    probs, dec_cache = model.decode_forward(z, training=True)
    target = nn.to_channels_last(x)
    recon, g_probs = nn.mse_loss(probs, target, reduction="sum_per_sample_mean_batch")
    total = recon + kld_weight * kld
    g_z, grads = model.decode_backward(dec_cache, g_probs)
    g_mu = g_z + kld_weight * g_mu_kld
    g_lv = g_z * (0.5 * sigma * eps) + kld_weight * g_lv_kld
    enc_grads = model.encode_backward(enc_cache, g_mu, g_lv)
    grads.update(enc_grads)
    return total, recon, kld, grads


def _eval_losses(model: Vae, data: np.ndarray, idx: np.ndarray,
                 batch_size: int, kld_weight: float):
    """Eval-mode losses with z = mu (deterministic validation)."""
    tot = rec = kld = 0.0
    n = 0
    for start in range(0, len(idx), batch_size):
        chunk = idx[start : start + batch_size]
        x = _as_float_batch(data[chunk])
        mu, logvar, _ = model.encode_forward(x, training=False)
        k, _, _ = nn.kld_loss(mu, logvar)
        probs, _ = model.decode_forward(mu, training=False)
        r, _ = nn.mse_loss(
            probs, nn.to_channels_last(x), reduction="sum_per_sample_mean_batch"
        )
        w = len(chunk)
        tot += (r + kld_weight * k) * w
        rec += r * w
        kld += k * w
        n += w
    return tot / n, rec / n, kld / n


def train(dataset, config: TrainConfig, vae_config: VaeConfig,
          progress=None) -> tuple[Vae, list[LossBreakdown]]:
    """Train on a VOXL file path or an occupancy array [N,R,R,R].

    Early-stops when validation total loss fails to improve for
    config.patience epochs and returns the best-validation model. The
    returned model's metadata records the split, best epoch, and history.
    """
    data = read_voxl_matrix(dataset) if isinstance(dataset, (str, bytes)) or hasattr(dataset, "__fspath__") else np.asarray(dataset)
    n = data.shape[0]
    if n < 2 * config.batch_size:
        raise ConfigurationError(
            f"dataset of {n} vessels is smaller than 2x batch_size={config.batch_size}"
        )
    if data.shape[1:] != (vae_config.resolution,) * 3:
        raise ConfigurationError(
            f"dataset resolution {data.shape[1:]} does not match model "
            f"resolution {vae_config.resolution}"
        )
    train_idx, val_idx = split_indices(n, config.split_fraction, config.seed)
    model = Vae.build(vae_config, seed=config.seed)
    state = nn.AdamState.for_params(model.params, learning_rate=config.learning_rate)
    loop_rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 2]))

    history: list[LossBreakdown] = []
    best_val = np.inf
    best_epoch = -1
    best_snapshot = None
    since_best = 0
    for epoch in range(1, config.epochs + 1):
        order = loop_rng.permutation(train_idx)
        totals, recons, klds = [], [], []
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            if len(chunk) < 2:
                continue  # batchnorm needs 2+; a trailing singleton is dropped
            x = _as_float_batch(data[chunk])
            eps = loop_rng.standard_normal((len(chunk), vae_config.latent_dim))
            total, recon, kld, grads = loss_and_grads(model, x, eps, config.kld_weight)
            if not np.isfinite(total):
                raise NumericError(
                    f"nonfinite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            nn.adam_step(model.params, grads, state)
            totals.append(total)
            recons.append(recon)
            klds.append(kld)
        val_total, val_recon, val_kld = _eval_losses(
            model, data, val_idx, config.batch_size, config.kld_weight
        )
        entry = LossBreakdown(
            epoch=epoch,
            train_total=float(np.mean(totals)),
            train_recon=float(np.mean(recons)),
            train_kld=float(np.mean(klds)),
            val_total=val_total,
            val_recon=val_recon,
            val_kld=val_kld,
        )
        history.append(entry)
        if progress is not None:
            progress(entry)
        if val_total < best_val:
            best_val = val_total
            best_epoch = epoch
            best_snapshot = model.clone_params()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    if best_snapshot is not None:
        model.params, model.bn_stats = best_snapshot
    model.metadata = {
        "seed": config.seed,
        "epochs_run": len(history),
        "best_epoch": best_epoch,
        "train_size": int(len(train_idx)),
        "val_size": int(len(val_idx)),
        "train_config": config.to_dict(),
        "loss_history": [
            [h.epoch, h.train_total, h.train_recon, h.train_kld,
             h.val_total, h.val_recon, h.val_kld]
            for h in history
        ],
    }
    return model, history


# -- checkpoint I/O ---------------------------------------------------------
#
# VAEC file: magic 'VAEC', u32 header length, UTF-8 JSON header
# {version, config, manifest, metadata}, then the tensors as concatenated
# little-endian float32 blobs in manifest order.

CHECKPOINT_MAGIC = b"VAEC"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: Vae, path) -> None:
    names = sorted(model.params) + sorted(model.bn_stats)
    lookup = {**model.params, **model.bn_stats}
    manifest = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(lookup[name], dtype="<f4")
        blob = arr.tobytes()
        manifest.append(
            {
                "name": name,
                "shape": list(lookup[name].shape),
                "dtype": "f32",
                "offset": offset,
                "length": len(blob),
                "kind": "param" if name in model.params else "bn_stat",
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "manifest": manifest,
        "metadata": model.metadata,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, expect_config: VaeConfig | None = None) -> Vae:
    from pathlib import Path

    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a VAEC checkpoint")
    (header_len,) = struct.unpack_from("<I", raw, 4)
    if len(raw) < 8 + header_len:
        raise DataError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable checkpoint header: {exc}") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {header.get('version')}")
    config = VaeConfig.from_dict(header["config"])
    if expect_config is not None and config != expect_config:
        raise ConfigurationError(
            f"checkpoint config {config} does not match expected {expect_config}"
        )
    blob_base = 8 + header_len
    params: dict[str, np.ndarray] = {}
    bn_stats: dict[str, np.ndarray] = {}
    for entry in header["manifest"]:
        start = blob_base + entry["offset"]
        end = start + entry["length"]
        if end > len(raw):
            raise DataError(f"{path}: truncated tensor {entry['name']!r}")
        arr = np.frombuffer(raw[start:end], dtype="<f4").astype(np.float64)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape)):
            raise DataError(
                f"{path}: tensor {entry['name']!r} length {arr.size} does not match shape {shape}"
            )
        arr = arr.reshape(shape)
        (params if entry["kind"] == "param" else bn_stats)[entry["name"]] = arr
    model = Vae(config, params, bn_stats, header.get("metadata", {}))
    _validate_shapes(model)
    return model


def _validate_shapes(model: Vae) -> None:
    reference = Vae.build(model.config, seed=0)
    for name, arr in reference.params.items():
        if name not in model.params:
            raise DataError(f"checkpoint missing parameter {name!r}")
        if model.params[name].shape != arr.shape:
            raise ConfigurationError(
                f"parameter {name!r} has shape {model.params[name].shape}, "
                f"config implies {arr.shape}"
            )
    for name, arr in reference.bn_stats.items():
        if name not in model.bn_stats:
            raise DataError(f"checkpoint missing running stat {name!r}")
        if model.bn_stats[name].shape != arr.shape:
            raise ConfigurationError(
                f"running stat {name!r} has shape {model.bn_stats[name].shape}, "
                f"config implies {arr.shape}"
            )
