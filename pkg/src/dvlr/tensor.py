"""Dense float64 tensor primitives with hand-derived gradients.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. Every function here is pure: inputs are never modified and no module
state is touched, so the functions may be called from several threads at once.

Matrix products and convolutions accumulate strictly left to right over the
inner dimension (``s = 0; s += a[i, 0] * b[0, j]; s += a[i, 1] * b[1, j]; ...``),
so results are bit-identical to a naive triple loop. BLAS is deliberately not
used: its blocked/FMA kernels reorder the sum.
"""

from __future__ import annotations

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from .errors import ConfigError, DataError, DimensionError

Tensor = NDArray[np.float64]

POOL = 2


def as_tensor(x) -> Tensor:
    """Return ``x`` as a C-contiguous float64 array (no copy when possible)."""
    return np.ascontiguousarray(x, dtype=np.float64)


@numba.njit(cache=True, nogil=True)
def _matmul_kernel(a, b, out):
    m, k = a.shape
    n = b.shape[1]
    for i in range(m):
        for j in range(n):
            out[i, j] = 0.0
        for p in range(k):
            x = a[i, p]
            for j in range(n):
                out[i, j] += x * b[p, j]


@numba.njit(cache=True, nogil=True)
def _matmul_kernel_rows4(a, b, out):
    # four output rows share each load of b[p, :]; per-element order is unchanged
    m, k = a.shape
    n = b.shape[1]
    out[:, :] = 0.0
    i = 0
    while i + 4 <= m:
        for p in range(k):
            x0, x1, x2, x3 = a[i, p], a[i + 1, p], a[i + 2, p], a[i + 3, p]
            for j in range(n):
                bj = b[p, j]
                out[i, j] += x0 * bj
                out[i + 1, j] += x1 * bj
                out[i + 2, j] += x2 * bj
                out[i + 3, j] += x3 * bj
        i += 4
    while i < m:
        for p in range(k):
            x = a[i, p]
            for j in range(n):
                out[i, j] += x * b[p, j]
        i += 1


# below this inner size the single-row kernel is faster
_ROWS4_MIN_K = 64


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product ``a @ b`` with left-to-right accumulation over ``k``."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = np.empty((a.shape[0], b.shape[1]), dtype=np.float64)
    if a.shape[1] >= _ROWS4_MIN_K:
        _matmul_kernel_rows4(a, b, out)
    else:
        _matmul_kernel(a, b, out)
    return out


def _check_same_shape(op: str, x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise DimensionError(f"{op}: shape {x.shape} does not match {y.shape}")


def relu_forward(x: Tensor) -> Tensor:
    return np.maximum(as_tensor(x), 0.0)


def relu_backward(x: Tensor, upstream: Tensor) -> Tensor:
    """Pass ``upstream`` through where ``x > 0``; zero elsewhere (including x == 0)."""
    x = as_tensor(x)
    upstream = as_tensor(upstream)
    _check_same_shape("relu_backward", x, upstream)
    return np.where(x > 0.0, upstream, 0.0)


def _conv_shapes(x: np.ndarray, k: np.ndarray, bias: np.ndarray | None = None):
    if x.ndim != 4 or k.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-d input and kernel, got {x.shape} and {k.shape}")
    n, c, h, w = x.shape
    f, kc, kh, kw = k.shape
    if kc != c:
        raise DimensionError(f"conv2d: input {x.shape} has {c} channels, kernel {k.shape} expects {kc}")
    if kh > h or kw > w:
        raise DimensionError(f"conv2d: kernel {k.shape} larger than input {x.shape}")
    if bias is not None and bias.shape != (f,):
        raise DimensionError(f"conv2d: bias {bias.shape} does not match {f} filters")
    return n, c, h, w, f, kh, kw, h - kh + 1, w - kw + 1


def im2col(x: Tensor, kh: int, kw: int) -> Tensor:
    """Rows are output positions (n, i, j); columns are (c, u, v) row-major."""
    n, c = x.shape[:2]
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # n, c, oh, ow, kh, kw
    oh, ow = win.shape[2:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * kh * kw)


def conv2d_forward(x: Tensor, k: Tensor, bias: Tensor, return_cols: bool = False):
    """Valid, stride-1 cross-correlation: ``out[n,f,i,j] = sum(x-window * k[f]) + bias[f]``.

    The bias is added after the window sum, as in a direct loop. With
    ``return_cols`` the im2col matrix is returned too, for reuse in backward.
    """
    x, k, bias = as_tensor(x), as_tensor(k), as_tensor(bias)
    n, c, h, w, f, kh, kw, oh, ow = _conv_shapes(x, k, bias)
    cols = im2col(x, kh, kw)
    out = matmul(cols, np.ascontiguousarray(k.reshape(f, -1).T))
    out += bias
    out = np.ascontiguousarray(out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2))
    return (out, cols) if return_cols else out


@numba.njit(cache=True, nogil=True)
def _col2im_kernel(d_cols, d_x):
    n, oh, ow, c, kh, kw = d_cols.shape
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                for ch in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            d_x[b, ch, i + u, j + v] += d_cols[b, i, j, ch, u, v]


def conv2d_backward(x: Tensor, k: Tensor, upstream: Tensor, cols: Tensor | None = None,
                    need_dx: bool = True) -> tuple[Tensor | None, Tensor, Tensor]:
    """Gradients ``(d_x, d_kernel, d_bias)`` of a valid stride-1 convolution.

    ``cols`` may carry the im2col matrix from the forward pass. With
    ``need_dx=False`` the input gradient is skipped and returned as None.
    """
    x, k, upstream = as_tensor(x), as_tensor(k), as_tensor(upstream)
    n, c, h, w, f, kh, kw, oh, ow = _conv_shapes(x, k)
    if upstream.shape != (n, f, oh, ow):
        raise DimensionError(f"conv2d_backward: upstream {upstream.shape}, expected {(n, f, oh, ow)}")
    g = np.ascontiguousarray(upstream.transpose(0, 2, 3, 1)).reshape(n * oh * ow, f)
    if cols is None:
        cols = im2col(x, kh, kw)
    elif cols.shape != (n * oh * ow, c * kh * kw):
        raise DimensionError(f"conv2d_backward: cols {cols.shape} do not match input {x.shape}")
    d_k = matmul(np.ascontiguousarray(g.T), cols).reshape(k.shape)
    d_bias = g.sum(axis=0)
    if not need_dx:
        return None, d_k, d_bias
    d_cols = matmul(g, np.ascontiguousarray(k.reshape(f, -1))).reshape(n, oh, ow, c, kh, kw)
    d_x = np.zeros_like(x)
    _col2im_kernel(d_cols, d_x)
    return d_x, d_k, d_bias


def maxpool2d(x: Tensor) -> tuple[Tensor, np.ndarray]:
    """2x2 max pooling with stride 2.

    Returns the pooled tensor and, per output cell, the flat row-major index
    (0..3) of the winning element inside its window. Ties go to the first
    maximal element.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"maxpool2d: expected 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    if h % POOL or w % POOL:
        raise DimensionError(f"maxpool2d: spatial dims of {x.shape} must be even")
    win = x.reshape(n, c, h // POOL, POOL, w // POOL, POOL).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // POOL, w // POOL, POOL * POOL)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2d_backward(upstream: Tensor, argmax: np.ndarray, input_shape: tuple[int, ...]) -> Tensor:
    upstream = as_tensor(upstream)
    if upstream.shape != argmax.shape:
        raise DimensionError(f"maxpool2d_backward: upstream {upstream.shape} vs indices {argmax.shape}")
    n, c, h, w = input_shape
    if (h // POOL, w // POOL) != upstream.shape[2:] or (n, c) != upstream.shape[:2]:
        raise DimensionError(f"maxpool2d_backward: {upstream.shape} does not pool {tuple(input_shape)}")
    win = np.zeros(upstream.shape + (POOL * POOL,), dtype=np.float64)
    np.put_along_axis(win, argmax[..., None], upstream[..., None], axis=-1)
    win = win.reshape(n, c, h // POOL, w // POOL, POOL, POOL).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(win).reshape(n, c, h, w)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> tuple[Tensor, Tensor]:
    """Inverted dropout. Returns ``(output, mask)`` where ``output = x * mask``.

    In training mode each mask entry is 0 with probability ``rate`` and
    ``1 / (1 - rate)`` otherwise. In eval mode the input is returned unchanged
    with an all-ones mask and ``rng`` is not consumed.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training:
        return x, np.ones_like(x)
    keep = rng.random(x.shape) >= rate
    mask = keep * (1.0 / (1.0 - rate))
    return x * mask, mask


def dropout_backward(upstream: Tensor, mask: Tensor) -> Tensor:
    upstream = as_tensor(upstream)
    _check_same_shape("dropout_backward", upstream, mask)
    return upstream * mask


def softmax(logits: Tensor) -> Tensor:
    logits = as_tensor(logits)
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> tuple[float, Tensor]:
    """Mean cross-entropy of row-wise softmax and its gradient w.r.t. ``logits``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"softmax_cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n, k = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    rows = np.arange(n)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


def argmax_rows(logits: Tensor) -> np.ndarray:
    """Per-row argmax; ties resolve to the lowest index."""
    return np.argmax(as_tensor(logits), axis=1)
