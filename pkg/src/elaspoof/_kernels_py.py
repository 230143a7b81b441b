"""Pure numpy kernels; the fallback when the compiled extension is absent.

Accumulation order matches ``_ckernels.pyx`` exactly so both backends give
bit-identical results.

Layouts: images are NHWC, im2col columns are ``[B, OH, OW, kh, kw, C]``,
pooling argmax values are flat spatial indices ``row * W + col``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, stride):
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # win: [B, OH, OW, C, kh, kw]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def col2im(cols, height, width, stride):
    B, OH, OW, kh, kw, C = cols.shape
    dx = np.zeros((B, height, width, C), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            dx[:, u:u + stride * (OH - 1) + 1:stride, v:v + stride * (OW - 1) + 1:stride, :] += cols[:, :, :, u, v, :]
    return dx


def maxpool_forward(x, ph, pw, stride):
    B, H, W, C = x.shape
    win = sliding_window_view(x, (ph, pw), axis=(1, 2))[:, ::stride, ::stride]
    OH, OW = win.shape[1], win.shape[2]
    flat = win.reshape(B, OH, OW, C, ph * pw)
    k = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, k[..., None], axis=-1)[..., 0]
    rows = np.arange(OH)[None, :, None, None] * stride + k // pw
    cols = np.arange(OW)[None, None, :, None] * stride + k % pw
    return np.ascontiguousarray(out), (rows * W + cols).astype(np.int64)


def maxpool_backward(argmax, grad_out, height, width, overlapping):
    B, OH, OW, C = grad_out.shape
    grad_in = np.zeros((B, height * width, C), dtype=np.float64)
    b_idx = np.broadcast_to(np.arange(B)[:, None, None, None], argmax.shape)
    c_idx = np.broadcast_to(np.arange(C)[None, None, None, :], argmax.shape)
    if overlapping:
        np.add.at(grad_in, (b_idx, argmax, c_idx), grad_out)
    else:
        grad_in[b_idx, argmax, c_idx] = grad_out
    return grad_in.reshape(B, height, width, C)
