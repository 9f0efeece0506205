"""Minimal dense-tensor engine: the layers a voxel VAE needs, nothing more.

Every operation is a pure function on float64 numpy arrays with an explicit,
hand-derived backward. Convolutions are evaluated as one big matrix product
over gathered windows (BLAS does the summation; kernel-window innermost,
channels outer), so results are bit-stable across runs at a fixed BLAS
thread count.

Public layout conventions (the `conv3d`, `conv_transpose3d`, `batchnorm3d`
entry points):
  activations  [B, C, D, H, W]
  conv3d weights           [Cout, Cin, k, k, k]
  conv_transpose3d weights [Cin, Cout, k, k, k]

Internally the hot path keeps activations channels-last [B, D, H, W, C]
(`cl_*` functions) because window gathers and 1x1x1 convolutions then need
no transposed copies; the public entry points convert at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, DomainError, NumericError

LAYER_KINDS = (
    "conv3d",
    "conv_transpose3d",
    "batchnorm3d",
    "leaky_relu",
    "linear",
    "sigmoid",
    "reshape",
    "add",
)


@dataclass
class LayerSpec:
    """Architecture descriptor for one layer: kind, hyperparameters, tensors."""

    kind: str
    hyper: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)  # name -> np.ndarray

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise DomainError(f"unknown layer kind {self.kind!r}")


def to_channels_last(x):
    """[B,C,D,H,W] -> contiguous [B,D,H,W,C]."""
    return np.ascontiguousarray(np.moveaxis(x, 1, -1))


def to_channels_first(x):
    """[B,D,H,W,C] -> contiguous [B,C,D,H,W]."""
    return np.ascontiguousarray(np.moveaxis(x, -1, 1))


def conv3d_out_size(size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride != 0:
        raise DimensionError(
            f"conv3d needs (size + 2*padding - k) divisible by stride; "
            f"got size={size}, k={k}, stride={stride}, padding={padding}"
        )
    return span // stride + 1


def _check_cl(x, name="input"):
    if x.ndim != 5:
        raise DimensionError(f"{name} must be 5-D, got shape {x.shape}")


def _pointwise(k, stride, padding):
    return k == 1 and stride == 1 and padding == 0


# --- channels-last core -----------------------------------------------------


def cl_gather_windows(x, k: int, stride: int, padding: int) -> np.ndarray:
    """Contiguous [B, D', H', W', C, k, k, k] window tensor, GEMM-ready.

    This is the expensive copy of a convolution; forward and backward share
    one gather when the caller keeps the result.
    """
    p = padding
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (p, p), (0, 0))) if p else x
    win = sliding_window_view(xp, (k, k, k), axis=(1, 2, 3))
    win = win[:, ::stride, ::stride, ::stride]
    return np.ascontiguousarray(win)


def cl_conv3d(x, w, b=None, stride=1, padding=1, _win=None):
    """x [B,D,H,W,Cin], w [Cout,Cin,k,k,k] -> [B,D',H',W',Cout]."""
    _check_cl(x)
    cout, cin, k = w.shape[0], w.shape[1], w.shape[2]
    if x.shape[4] != cin:
        raise DimensionError(f"input has {x.shape[4]} channels, weights expect {cin}")
    out_spatial = tuple(conv3d_out_size(s, k, stride, padding) for s in x.shape[1:4])
    if _pointwise(k, stride, padding) and _win is None:
        y = x @ w[:, :, 0, 0, 0].T
    else:
        win = _win if _win is not None else cl_gather_windows(x, k, stride, padding)
        y = win.reshape(-1, cin * k**3) @ w.reshape(cout, cin * k**3).T
        y = y.reshape((x.shape[0],) + out_spatial + (cout,))
    if b is not None:
        y += b
    return y


def cl_conv3d_backward(grad_y, x, w, stride=1, padding=1, _win=None):
    cout, cin, k = w.shape[0], w.shape[1], w.shape[2]
    grad_b = grad_y.sum(axis=(0, 1, 2, 3))
    if _pointwise(k, stride, padding) and _win is None:
        w00 = w[:, :, 0, 0, 0]
        grad_x = grad_y @ w00
        grad_w = grad_y.reshape(-1, cout).T @ x.reshape(-1, cin)
        return grad_x, np.ascontiguousarray(grad_w.reshape(w.shape)), grad_b
    win = _win if _win is not None else cl_gather_windows(x, k, stride, padding)
    rows = grad_y.reshape(-1, cout)
    grad_w = (rows.T @ win.reshape(rows.shape[0], cin * k**3)).reshape(w.shape)
    grad_x = cl_conv_transpose3d(grad_y, w, None, stride=stride, padding=padding)
    return grad_x, np.ascontiguousarray(grad_w), grad_b


def _transpose_out_sizes(spatial, k, stride, padding):
    out = [stride * (n - 1) + k - 2 * padding for n in spatial]
    if min(out) < 1:
        raise DimensionError(
            f"conv_transpose3d output would be empty for spatial {tuple(spatial)} "
            f"(k={k}, s={stride}, p={padding})"
        )
    return tuple(out)


def cl_conv_transpose3d(x, w, b=None, stride=1, padding=1):
    """x [B,D,H,W,Cin], w [Cin,Cout,k,k,k] -> [B,Do,Ho,Wo,Cout]."""
    _check_cl(x)
    cin, cout, k = w.shape[0], w.shape[1], w.shape[2]
    if x.shape[4] != cin:
        raise DimensionError(f"input has {x.shape[4]} channels, weights expect {cin}")
    out_sizes = _transpose_out_sizes(x.shape[1:4], k, stride, padding)
    if _pointwise(k, stride, padding):
        y = x @ w[:, :, 0, 0, 0]
    elif stride == 2 and k % 2 == 0:
        y = _cl_conv_transpose3d_s2(x, w, padding, out_sizes)
    else:
        y = _cl_conv_transpose3d_scatter(x, w, stride, padding, out_sizes)
    if b is not None:
        y += b
    return y


def _cl_conv_transpose3d_scatter(x, w, s, p, out_sizes):
    """Reference scatter-accumulate path, any stride."""
    B, D, H, W, cin = x.shape
    cout, k = w.shape[1], w.shape[2]
    # [B,D,H,W,k,k,k,Cout]
    wk = np.ascontiguousarray(w.transpose(0, 2, 3, 4, 1)).reshape(cin, -1)
    contrib = (x.reshape(-1, cin) @ wk).reshape(B, D, H, W, k, k, k, cout)
    full = np.zeros(
        (B, s * (D - 1) + k, s * (H - 1) + k, s * (W - 1) + k, cout), dtype=x.dtype
    )
    for a, bb, c in product(range(k), repeat=3):
        full[
            :,
            a : a + s * (D - 1) + 1 : s,
            bb : bb + s * (H - 1) + 1 : s,
            c : c + s * (W - 1) + 1 : s,
            :,
        ] += contrib[:, :, :, :, a, bb, c, :]
    return np.ascontiguousarray(
        full[
            :,
            p : p + out_sizes[0],
            p : p + out_sizes[1],
            p : p + out_sizes[2],
            :,
        ]
    )


def _phase_geometry(out_size, in_size, k, p):
    """Per-parity output slots of a stride-2 transposed conv along one axis.

    Output o = 2d + a - p splits by parity r = o mod 2 into runs of
    ceil((out - r) / 2) positions, each a (k/2)-tap stride-1 correlation of
    the input with kernel taps a = 2m + (r+p) mod 2 in reversed order,
    reading the input window that starts at j = q + (r+p)//2 - (k/2 - 1).
    """
    kh = k // 2
    phases = []
    for r in (0, 1):
        phases.append(
            {
                "r": r,
                "count": (out_size - r + 1) // 2,
                "alpha": (r + p) % 2,
                "j0": (r + p) // 2 - (kh - 1),
            }
        )
    live = [ph for ph in phases if ph["count"] > 0]
    j_min = min(ph["j0"] for ph in live)
    j_max = max(ph["j0"] + ph["count"] - 1 for ph in live)
    pad_left = max(0, -j_min)
    pad_right = max(0, (j_max + kh - 1) - (in_size - 1))
    return phases, j_min, j_max, pad_left, pad_right


def _cl_conv_transpose3d_s2(x, w, p, out_sizes):
    """Stride-2 fast path: one stacked-phase GEMM plus interleaved writes."""
    B, D, H, W, cin = x.shape
    cout, k = w.shape[1], w.shape[2]
    kh = k // 2
    geo = [_phase_geometry(out_sizes[i], x.shape[1 + i], k, p) for i in range(3)]
    pads = [(g[3], g[4]) for g in geo]
    xp = np.pad(x, ((0, 0), pads[0], pads[1], pads[2], (0, 0)))
    win = sliding_window_view(xp, (kh, kh, kh), axis=(1, 2, 3))
    starts = [geo[i][1] + pads[i][0] for i in range(3)]
    counts = [geo[i][2] - geo[i][1] + 1 for i in range(3)]
    win = win[
        :,
        starts[0] : starts[0] + counts[0],
        starts[1] : starts[1] + counts[1],
        starts[2] : starts[2] + counts[2],
    ]
    win = np.ascontiguousarray(win)  # [B,Jd,Jh,Jw,Cin,kh,kh,kh]
    phase_list = list(product(geo[0][0], geo[1][0], geo[2][0]))
    kernels = []
    for pd, ph, pw in phase_list:
        sub = w[:, :, pd["alpha"] :: 2, ph["alpha"] :: 2, pw["alpha"] :: 2]
        kernels.append(sub[:, :, ::-1, ::-1, ::-1])  # tap order matches windows
    # [Cin, kh, kh, kh, P*Cout]
    stacked = np.stack(kernels, axis=0).transpose(1, 3, 4, 5, 0, 2)
    stacked = np.ascontiguousarray(stacked).reshape(cin * kh**3, len(kernels) * cout)
    yw = (win.reshape(-1, cin * kh**3) @ stacked).reshape(
        B, counts[0], counts[1], counts[2], len(phase_list), cout
    )
    y = np.empty((B,) + out_sizes + (cout,), dtype=x.dtype)
    for idx, (pd, ph, pw) in enumerate(phase_list):
        if min(pd["count"], ph["count"], pw["count"]) == 0:
            continue
        od = pd["j0"] - geo[0][1]
        oh = ph["j0"] - geo[1][1]
        ow = pw["j0"] - geo[2][1]
        y[:, pd["r"] :: 2, ph["r"] :: 2, pw["r"] :: 2, :] = yw[
            :,
            od : od + pd["count"],
            oh : oh + ph["count"],
            ow : ow + pw["count"],
            idx,
            :,
        ]
    return y


def cl_conv_transpose3d_backward(grad_y, x, w, stride=1, padding=1):
    cin, cout, k = w.shape[0], w.shape[1], w.shape[2]
    grad_b = grad_y.sum(axis=(0, 1, 2, 3))
    if _pointwise(k, stride, padding):
        w00 = w[:, :, 0, 0, 0]
        grad_x = grad_y @ w00.T
        grad_w = x.reshape(-1, cin).T @ grad_y.reshape(-1, cout)
        return grad_x, np.ascontiguousarray(grad_w.reshape(w.shape)), grad_b
    # Adjoint of scatter is gather: one window tensor serves both gradients.
    win = cl_gather_windows(grad_y, k, stride, padding)  # [B,D,H,W,Cout,k,k,k]
    rows = win.reshape(-1, cout * k**3)
    grad_x = (rows @ w.reshape(cin, cout * k**3).T).reshape(x.shape)
    grad_w = (x.reshape(-1, cin).T @ rows).reshape(w.shape)
    return grad_x, np.ascontiguousarray(grad_w), grad_b


def cl_batchnorm3d(x, gamma, beta, running_mean, running_var, training,
                   eps=1e-5, momentum=0.1):
    """Per-channel normalization over (B, D, H, W); channels last."""
    axes = (0, 1, 2, 3)
    if training:
        n = x.size // x.shape[4]
        if n < 2:
            raise DomainError(
                "batchnorm3d train mode needs at least 2 elements per channel"
            )
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)  # biased
        ivar = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean) * ivar
        y = gamma * xhat + beta
        new_rm = (1.0 - momentum) * running_mean + momentum * mean
        new_rv = (1.0 - momentum) * running_var + momentum * var
        return y, (xhat, gamma, ivar), new_rm, new_rv
    ivar = 1.0 / np.sqrt(running_var + eps)
    y = gamma * ((x - running_mean) * ivar) + beta
    return y, None, running_mean, running_var


def cl_batchnorm3d_backward(grad_y, cache):
    xhat, gamma, ivar = cache
    axes = (0, 1, 2, 3)
    grad_gamma = (grad_y * xhat).sum(axis=axes)
    grad_beta = grad_y.sum(axis=axes)
    mean_gy = grad_y.mean(axis=axes)
    mean_gy_xhat = (grad_y * xhat).mean(axis=axes)
    grad_x = (gamma * ivar) * (grad_y - mean_gy - xhat * mean_gy_xhat)
    return grad_x, grad_gamma, grad_beta


# --- public channels-first operations ---------------------------------------


def _check_conv_weights(w, layout):
    if w.ndim != 5 or w.shape[2] != w.shape[3] or w.shape[3] != w.shape[4]:
        raise DimensionError(f"weights must be {layout}, got {w.shape}")


def _check_bias(b, cout):
    if b is not None and b.shape != (cout,):
        raise DimensionError(f"bias must be [{cout}], got {b.shape}")


def conv3d(x, w, b=None, stride=1, padding=1):
    """Cross-correlation over 3-D windows plus bias; x [B,Cin,D,H,W]."""
    _check_cl(x)
    _check_conv_weights(w, "[Cout,Cin,k,k,k]")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"input has {x.shape[1]} channels, weights expect {w.shape[1]}")
    _check_bias(b, w.shape[0])
    return to_channels_first(cl_conv3d(to_channels_last(x), w, b, stride, padding))


def conv3d_backward(grad_y, x, w, stride=1, padding=1):
    """Gradients of conv3d w.r.t. (input, weights, bias)."""
    gx, gw, gb = cl_conv3d_backward(
        to_channels_last(grad_y), to_channels_last(x), w, stride, padding
    )
    return to_channels_first(gx), gw, gb


def conv_transpose3d(x, w, b=None, stride=1, padding=1):
    """Transposed convolution (gradient-of-conv scatter semantics)."""
    _check_cl(x)
    _check_conv_weights(w, "[Cin,Cout,k,k,k]")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"input has {x.shape[1]} channels, weights expect {w.shape[0]}")
    _check_bias(b, w.shape[1])
    return to_channels_first(
        cl_conv_transpose3d(to_channels_last(x), w, b, stride, padding)
    )


def conv_transpose3d_backward(grad_y, x, w, stride=1, padding=1):
    """Gradients of conv_transpose3d w.r.t. (input, weights, bias)."""
    gx, gw, gb = cl_conv_transpose3d_backward(
        to_channels_last(grad_y), to_channels_last(x), w, stride, padding
    )
    return to_channels_first(gx), gw, gb


def batchnorm3d(x, gamma, beta, running_mean, running_var, training,
                eps=1e-5, momentum=0.1):
    """Per-channel normalization over (B, D, H, W).

    Train mode uses biased batch statistics and folds them into the running
    stats via running <- (1 - momentum) * running + momentum * batch.
    Returns (y, cache, new_running_mean, new_running_var); cache feeds the
    backward pass and is None in eval mode.
    """
    _check_cl(x)
    C = x.shape[1]
    for arr, name in ((gamma, "gamma"), (beta, "beta"),
                      (running_mean, "running_mean"), (running_var, "running_var")):
        if arr.shape != (C,):
            raise DimensionError(f"{name} must have shape [{C}], got {arr.shape}")
    y, cache, rm, rv = cl_batchnorm3d(
        to_channels_last(x), gamma, beta, running_mean, running_var,
        training, eps=eps, momentum=momentum,
    )
    return to_channels_first(y), cache, rm, rv


def batchnorm3d_backward(grad_y, cache):
    """Exact backward through train-mode normalization (channels-first)."""
    gx, ggamma, gbeta = cl_batchnorm3d_backward(to_channels_last(grad_y), cache)
    return to_channels_first(gx), ggamma, gbeta


def leaky_relu(x, negative_slope=0.2):
    if negative_slope < 0:
        raise DomainError(f"negative_slope must be >= 0, got {negative_slope}")
    return np.where(x >= 0, x, negative_slope * x)


def leaky_relu_backward(grad_y, x, negative_slope=0.2):
    return np.where(x >= 0, grad_y, negative_slope * grad_y)


def sigmoid(x):
    # split on sign to avoid exp overflow
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(grad_y, y):
    """Backward given the forward *output* y."""
    return grad_y * y * (1.0 - y)


def linear(x, w, b=None):
    """Affine map x @ w.T + b for x [B, n], w [m, n], b [m]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"linear shapes inconsistent: x {x.shape}, w {w.shape}"
        )
    y = x @ w.T
    if b is not None:
        if b.shape != (w.shape[0],):
            raise DimensionError(f"bias must be [{w.shape[0]}], got {b.shape}")
        y = y + b
    return y


def linear_backward(grad_y, x, w):
    grad_x = grad_y @ w
    grad_w = grad_y.T @ x
    grad_b = grad_y.sum(axis=0)
    return grad_x, grad_w, grad_b


def mse_loss(prediction, target, reduction="mean_all"):
    """Squared error; returns (loss, grad_prediction).

    mean_all: mean over every element. sum_per_sample_mean_batch: sum over
    each sample's elements, then mean over the batch axis 0.
    """
    if prediction.shape != target.shape:
        raise DimensionError(
            f"shape mismatch: {prediction.shape} vs {target.shape}"
        )
    diff = prediction - target
    if reduction == "mean_all":
        loss = float(np.mean(diff * diff))
        grad = 2.0 * diff / diff.size
    elif reduction == "sum_per_sample_mean_batch":
        B = prediction.shape[0]
        loss = float(np.sum(diff * diff) / B)
        grad = 2.0 * diff / B
    else:
        raise DomainError(f"unknown reduction {reduction!r}")
    return loss, grad


def kld_loss(mu, logvar):
    """KL(q || N(0, I)) summed over dims, averaged over the batch.

    Returns (loss, grad_mu, grad_logvar).
    """
    if mu.shape != logvar.shape:
        raise DimensionError(f"shape mismatch: {mu.shape} vs {logvar.shape}")
    B = mu.shape[0]
    ev = np.exp(logvar)
    loss = float(np.mean(-0.5 * np.sum(1.0 + logvar - mu * mu - ev, axis=1)))
    grad_mu = mu / B
    grad_logvar = (ev - 1.0) / (2.0 * B)
    return loss, grad_mu, grad_logvar


@dataclass
class AdamState:
    """Bias-corrected Adam moments for a named parameter set."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, learning_rate: float, **kw) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kw)
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
        return state

    def to_arrays(self) -> dict:
        """Flat name -> array mapping for serialization."""
        out = {f"adam.m.{k}": v for k, v in self.m.items()}
        out.update({f"adam.v.{k}": v for k, v in self.v.items()})
        return out


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One in-place Adam update over every named parameter."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"nonfinite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        params[name] -= state.learning_rate * mhat / (np.sqrt(vhat) + state.eps)
