"""
Differentiable building blocks on N x C x H x W tensors: convolution (im2col),
leaky ReLU, nearest-neighbour upsampling, channel concatenation, trace
compositing, L1 reductions, and wrappers turning linear operators (projector,
FBP) into graph nodes.
"""
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.errors import ShapeError
from app.nn.tensor import Tensor, as_tensor, make_result


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1,
                   padding: int = 0) -> Tuple[np.ndarray, tuple]:
    '''
    Zero-padded 2-D cross-correlation.

    Args:
        x (np.ndarray): Input, N x C x H x W.
        w (np.ndarray): Weights, O x C x k x k.
        b (np.ndarray): Bias, O.
        stride (int): Step between output samples.
        padding (int): Zero padding on each side.
    Returns:
        Tuple[np.ndarray, tuple]: Output N x O x Ho x Wo and the cache for
        `conv2d_backward`.
    '''
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and weights")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, weights expect {w.shape[1]}")
    k = w.shape[2]
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + b[None, :, None, None]
    return np.ascontiguousarray(out), (windows, w, x.shape, stride, padding)


def conv2d_backward(grad_out: np.ndarray, cache: tuple) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    '''
    Gradients of `conv2d_forward` with respect to input, weights and bias.
    '''
    windows, w, x_shape, stride, padding = cache
    n, c, h, wd = x_shape
    k = w.shape[2]
    ho, wo = grad_out.shape[2:]
    dw = np.tensordot(grad_out, windows, axes=([0, 2, 3], [0, 2, 3]))
    db = grad_out.sum(axis=(0, 2, 3))
    # col2im: scatter each kernel tap back onto the padded input
    dcols = np.tensordot(grad_out, w, axes=([1], [0]))  # N x Ho x Wo x C x k x k
    dxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, padding:padding + h, padding:padding + wd]
    return dx, dw, db


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    out, cache = conv2d_forward(x.values, w.values, b.values, stride, padding)

    def backward(g):
        return conv2d_backward(g, cache)

    return make_result(out, (x, w, b), backward)


def leaky_relu(x: Tensor, negative_slope: float = 0.2) -> Tensor:
    slope = np.where(x.values >= 0, 1.0, negative_slope)
    return make_result(x.values * slope, (x,), lambda g: (g * slope,))


def upsample_nearest(x: Tensor, size: Tuple[int, int]) -> Tensor:
    '''
    Nearest-neighbour x2 upsampling cropped to `size` (the skip feature's H, W).
    '''
    h, w = x.shape[2:]
    out_h, out_w = size
    if out_h > 2 * h or out_w > 2 * w:
        raise ShapeError(f"Cannot upsample {h}x{w} to {out_h}x{out_w}")
    out = x.values.repeat(2, axis=2).repeat(2, axis=3)[:, :, :out_h, :out_w]

    def backward(g):
        full = np.zeros(x.shape[:2] + (2 * h, 2 * w))
        full[:, :, :out_h, :out_w] = g
        return (full.reshape(x.shape[:2] + (h, 2, w, 2)).sum(axis=(3, 5)),)

    return make_result(out, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.values for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))

    return make_result(out, tensors, backward)


def max_pool2(mask: np.ndarray) -> np.ndarray:
    '''
    2x2 max pooling in ceil mode: odd trailing rows/columns form their own window.
    Used for the trace-mask pyramid, which carries no gradient.
    '''
    n, c, h, w = mask.shape
    ph, pw = h + h % 2, w + w % 2
    padded = np.full((n, c, ph, pw), -np.inf)
    padded[:, :, :h, :w] = mask
    return padded.reshape(n, c, ph // 2, 2, pw // 2, 2).max(axis=(3, 5))


def mask_pyramid(mask: np.ndarray, levels: int) -> list:
    pyramid = [np.asarray(mask, dtype=np.float64)]
    for _ in range(levels - 1):
        pyramid.append(max_pool2(pyramid[-1]))
    return pyramid


def where(condition: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    '''
    Select `a` where `condition` holds and `b` elsewhere.
    '''
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(condition, dtype=bool)
    out = np.where(cond, a.values, b.values)
    return make_result(out, (a, b), lambda g: (np.where(cond, g, 0.0), np.where(cond, 0.0, g)))


def mean_abs(x: Tensor, weight: Optional[np.ndarray] = None) -> Tensor:
    '''
    Mean absolute value, optionally over the pixels where `weight` is nonzero.
    The subgradient at zero is 0.
    '''
    if weight is None:
        weight = np.ones(x.shape)
    weight = np.broadcast_to(np.asarray(weight, dtype=np.float64), x.shape)
    total = weight.sum()
    if total <= 0:
        raise ShapeError("mean_abs over an empty selection")
    out = np.sum(np.abs(x.values) * weight) / total
    return make_result(np.asarray(out), (x,), lambda g: (g * np.sign(x.values) * weight / total,))


def linear_map(x: Tensor, forward: Callable[[np.ndarray], np.ndarray],
               adjoint: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    '''
    Apply a linear operator on 2-D arrays to each N x 1 x H x W sample.

    Args:
        x (Tensor): Input batch with a single channel.
        forward (Callable): The operator.
        adjoint (Callable): Its transpose, used for the backward pass.
    Returns:
        Tensor: N x 1 x H' x W'.
    '''
    if x.values.ndim != 4 or x.shape[1] != 1:
        raise ShapeError("linear_map expects an N x 1 x H x W tensor")
    out = np.stack([forward(sample[0])[None] for sample in x.values])

    def backward(g):
        return (np.stack([adjoint(sample[0])[None] for sample in g]),)

    return make_result(out, (x,), backward)
