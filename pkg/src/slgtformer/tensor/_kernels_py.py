"""Pure numpy implementations of the fused row kernels.

Every function takes 2-D C-contiguous float64 arrays laid out as
``(rows, features)`` and returns freshly allocated arrays.  The compiled
module ``_ckernels`` exposes exactly the same functions.
"""

import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    e /= e.sum(axis=1, keepdims=True)
    return e


def softmax_rows_backward(y, gy):
    dot = (gy * y).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def layer_norm_rows(x, gain, bias, eps):
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    return xhat * gain + bias, xhat, rstd[:, 0].copy()


def layer_norm_rows_backward(gy, xhat, rstd, gain):
    ggain = (gy * xhat).sum(axis=0)
    gbias = gy.sum(axis=0)
    gxhat = gy * gain
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = (gxhat - m1 - xhat * m2) * rstd[:, None]
    return gx, ggain, gbias


def gelu(x):
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_backward(x, gy):
    x2 = x * x
    th = np.tanh(_GELU_C * (x + _GELU_A * x2 * x))
    dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x2)
    return gy * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner)
