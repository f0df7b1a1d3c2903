"""Layer operations on NCHW tensors, each with its input-gradient rule."""

from __future__ import annotations

import numpy as np

from .params import LayerParams
from .tensor import ShapeError, Tensor, make_result

NORM_EPS = 1e-5


def _require_4d(x: Tensor, name: str) -> None:
    if x.data.ndim != 4:
        raise ShapeError(f"{name}: expected [B,C,H,W] input, got shape {x.shape}")


def conv2d(x: Tensor, params: LayerParams, stride: int = 1, padding: int = None) -> Tensor:
    """2-d cross-correlation with kernel ``params.weight`` of shape [Cout, Cin, k, k].

    ``padding`` defaults to ``k // 2``, which preserves extents at stride 1.
    """
    _require_4d(x, "conv2d")
    w = params.weight
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv2d: kernel must be [Cout,Cin,k,k], got {w.shape}")
    cout, cin, k, _ = w.shape
    if k not in (1, 3):
        raise ShapeError(f"conv2d: kernel extent must be 1 or 3, got {k}")
    B, C, H, W = x.shape
    if C != cin:
        raise ShapeError(
            f"conv2d: input has {C} channels but kernel expects {cin} (kernel shape {w.shape})"
        )
    if padding is None:
        padding = k // 2
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d: input {x.shape} too small for kernel {k}, padding {padding}")

    xt = x.data.transpose(0, 2, 3, 1)
    if padding:
        xt = np.pad(xt, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    rows = B * Ho * Wo
    # per-tap matrices must be contiguous or matmul bypasses BLAS
    w_fwd = np.ascontiguousarray(w.transpose(2, 3, 1, 0))
    w_bwd = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
    out = np.zeros((rows, cout))
    for i in range(k):
        for j in range(k):
            patch = xt[:, i : i + stride * (Ho - 1) + 1 : stride, j : j + stride * (Wo - 1) + 1 : stride, :]
            out += np.ascontiguousarray(patch).reshape(rows, cin) @ w_fwd[i, j]
    out += params.bias
    out = out.reshape(B, Ho, Wo, cout).transpose(0, 3, 1, 2)

    padded_shape = xt.shape

    def backward(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(rows, cout)
        gx = np.zeros(padded_shape)
        for i in range(k):
            for j in range(k):
                contrib = (gt @ w_bwd[i, j]).reshape(B, Ho, Wo, cin)
                gx[:, i : i + stride * (Ho - 1) + 1 : stride, j : j + stride * (Wo - 1) + 1 : stride, :] += contrib
        if padding:
            gx = gx[:, padding : padding + H, padding : padding + W, :]
        return (gx.transpose(0, 3, 1, 2),)

    return make_result(out, (x,), backward, "conv2d")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return make_result(np.where(mask, x.data, 0.0), (x,), backward, "relu")


def _window_sum3x3(a: np.ndarray) -> np.ndarray:
    H, W = a.shape[2:]
    p = np.pad(a, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros(a.shape)
    for i in range(3):
        for j in range(3):
            out += p[:, :, i : i + H, j : j + W]
    return out


def avgpool3x3(x: Tensor) -> Tensor:
    """3x3 mean pooling, stride 1, zero padding 1, fixed divisor 9."""
    _require_4d(x, "avgpool3x3")

    def backward(g):
        # the zero-padded all-ones window sum is self-adjoint
        return (_window_sum3x3(g) / 9.0,)

    return make_result(_window_sum3x3(x.data) / 9.0, (x,), backward, "avgpool3x3")


def avgpool2x2(x: Tensor) -> Tensor:
    """2x2 mean pooling with stride 2; spatial extents must be even."""
    _require_4d(x, "avgpool2x2")
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"avgpool2x2: spatial extents must be even, got {H}x{W}")
    out = x.data.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))

    def backward(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0,)

    return make_result(out, (x,), backward, "avgpool2x2")


def batchnorm_train(x: Tensor, params: LayerParams, eps: float = NORM_EPS) -> Tensor:
    """Per-channel standardization with batch statistics, then affine."""
    _require_4d(x, "batchnorm_train")
    C = x.shape[1]
    if params.weight.shape != (C,) or params.bias.shape != (C,):
        raise ShapeError(f"batchnorm_train: params for {params.weight.shape} channels, input has {C}")
    axes = (0, 2, 3)
    mean = x.data.mean(axis=axes, keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    gamma = params.weight.reshape(1, C, 1, 1)
    out = xhat * gamma + params.bias.reshape(1, C, 1, 1)

    def backward(g):
        gh = g * gamma
        gx = inv_std * (
            gh - gh.mean(axis=axes, keepdims=True) - xhat * (gh * xhat).mean(axis=axes, keepdims=True)
        )
        return (gx,)

    return make_result(out, (x,), backward, "batchnorm_train")


def linear(x: Tensor, params: LayerParams) -> Tensor:
    """Row-wise affine map ``x @ W.T + b`` with W of shape [K, F]."""
    w = params.weight
    if x.data.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")

    def backward(g):
        return (g @ w,)

    return make_result(x.data @ w.T + params.bias, (x,), backward, "linear")


def global_avg_pool(x: Tensor) -> Tensor:
    _require_4d(x, "global_avg_pool")
    B, C, H, W = x.shape

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (H * W), (B, C, H, W)),)

    return make_result(x.data.mean(axis=(2, 3)), (x,), backward, "global_avg_pool")
