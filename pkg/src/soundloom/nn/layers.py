"""Forward/backward passes for the layers the models need.

Functional style: each forward returns (output, cache), each backward takes
(d_output, cache) and returns gradients in the same order as its inputs.
All ops are dtype-preserving so the gradient checker can run them in float64.
Layout conventions: images are [N, C, H, W], sequences are [T, N, D].
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


# ---------------------------------------------------------------- dense

def dense_forward(x, w, b):
    # x: [N, D_in], w: [D_in, D_out], b: [D_out]
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: input {x.shape} incompatible with weight {w.shape}")
    out = x @ w + b
    return out, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    dx = dout @ w.T
    dw = x.T @ dout
    db = dout.sum(axis=0)
    return dx, dw, db


# ---------------------------------------------------------------- activations

def relu_forward(x):
    out = np.maximum(x, 0)
    return out, (x > 0)


def relu_backward(dout, cache):
    return dout * cache


def sigmoid(x):
    # Numerically stable in both tails.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_forward(x):
    out = sigmoid(x)
    return out, out


def sigmoid_backward(dout, cache):
    return dout * cache * (1.0 - cache)


def tanh_forward(x):
    out = np.tanh(x)
    return out, out


def tanh_backward(dout, cache):
    return dout * (1.0 - cache * cache)


def dropout_forward(x, rate: float, rng: np.random.Generator):
    """Inverted dropout; scale kept activations by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    if rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(dout, cache):
    return dout if cache is None else dout * cache


# ---------------------------------------------------------------- conv2d

def conv2d_output_dim(size: int, kernel: int, stride: int) -> int:
    if size < kernel:
        raise ShapeError(f"conv2d: spatial dim {size} smaller than kernel {kernel}")
    return (size - kernel) // stride + 1


def _im2col(x, kernel: int, stride: int):
    n, c, h, w = x.shape
    oh = conv2d_output_dim(h, kernel, stride)
    ow = conv2d_output_dim(w, kernel, stride)
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, oh, ow, kernel, kernel),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )
    # [N, OH, OW, C*k*k]
    return view.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh, ow, c * kernel * kernel)


def _col2im(dcols, x_shape, kernel: int, stride: int):
    n, c, h, w = x_shape
    oh, ow = dcols.shape[1], dcols.shape[2]
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    dcols = dcols.reshape(n, oh, ow, c, kernel, kernel)
    for i in range(kernel):
        for j in range(kernel):
            dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx


def conv2d_forward(x, w, b, stride: int):
    # x: [N, Cin, H, W], w: [Cout, Cin, k, k], b: [Cout]
    n, cin, h, wd = x.shape
    cout, cin_w, k, _ = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input channels {x.shape} vs kernel {w.shape}")
    oh = conv2d_output_dim(h, k, stride)
    ow = conv2d_output_dim(wd, k, stride)
    cols = _im2col(x, k, stride)
    out = cols.reshape(-1, cin * k * k) @ w.reshape(cout, -1).T + b
    out = out.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2)
    return out, (cols, x.shape, w, stride)


def conv2d_backward(dout, cache):
    cols, x_shape, w, stride = cache
    n, cout, oh, ow = dout.shape
    k = w.shape[2]
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, cout)
    dw = (dflat.T @ cols.reshape(dflat.shape[0], -1)).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w.reshape(cout, -1)).reshape(n, oh, ow, -1)
    dx = _col2im(dcols, x_shape, k, stride)
    return dx, dw, db


# ---------------------------------------------------------------- transposed conv2d

def conv_transpose2d_output_dim(size: int, kernel: int, stride: int,
                                output_padding: int = 0) -> int:
    if output_padding >= stride and output_padding > 0:
        raise ShapeError(f"output_padding {output_padding} must be < stride {stride}")
    return (size - 1) * stride + kernel + output_padding


def conv_transpose2d_forward(x, w, b, stride: int, output_padding: int = 0):
    # x: [N, Cin, H, W], w: [Cin, Cout, k, k], b: [Cout]
    n, cin, h, wd = x.shape
    cin_w, cout, k, _ = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv_transpose2d: input channels {x.shape} vs kernel {w.shape}")
    oh = conv_transpose2d_output_dim(h, k, stride, output_padding)
    ow = conv_transpose2d_output_dim(wd, k, stride, output_padding)
    xt = x.transpose(0, 2, 3, 1).reshape(-1, cin)          # [N*H*W, Cin]
    cols = (xt @ w.reshape(cin, -1)).reshape(n, h, wd, cout, k, k)
    out = np.zeros((n, cout, oh, ow), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * h:stride, j:j + stride * wd:stride] += \
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    out += b[None, :, None, None]
    return out, (x, w, stride, output_padding)


def conv_transpose2d_backward(dout, cache):
    x, w, stride, _ = cache
    n, cin, h, wd = x.shape
    cout, k = w.shape[1], w.shape[2]
    # Gather the strided windows of dout that each input position painted.
    dcols = np.empty((n, h, wd, cout, k, k), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dcols[:, :, :, :, i, j] = \
                dout[:, :, i:i + stride * h:stride, j:j + stride * wd:stride] \
                .transpose(0, 2, 3, 1)
    dflat = dcols.reshape(n * h * wd, -1)                  # [N*H*W, Cout*k*k]
    xt = x.transpose(0, 2, 3, 1).reshape(-1, cin)
    dw = (xt.T @ dflat).reshape(w.shape)
    dx = (dflat @ w.reshape(cin, -1).T).reshape(n, h, wd, cin).transpose(0, 3, 1, 2)
    db = dout.sum(axis=(0, 2, 3))
    return dx, dw, db


# ---------------------------------------------------------------- embedding

def embedding_forward(ids, table):
    # ids: int array [T, N] (or any shape); table: [V, D]
    if ids.min() < 0 or ids.max() >= table.shape[0]:
        raise ShapeError(f"embedding: id out of range for table {table.shape}")
    return table[ids], (ids, table.shape)


def embedding_backward(dout, cache):
    ids, table_shape = cache
    dtable = np.zeros(table_shape, dtype=dout.dtype)
    np.add.at(dtable, ids.reshape(-1), dout.reshape(-1, table_shape[1]))
    return dtable


# ---------------------------------------------------------------- LSTM

def lstm_step(x_t, h_prev, c_prev, wx, wh, b):
    """Single LSTM cell step. Gate order: input, forget, cell, output.

    x_t: [N, D], h_prev/c_prev: [N, H], wx: [D, 4H], wh: [H, 4H], b: [4H].
    """
    if x_t.shape[1] != wx.shape[0] or h_prev.shape[1] != wh.shape[0]:
        raise ShapeError(
            f"lstm_step: x {x_t.shape}, h {h_prev.shape} vs wx {wx.shape}, wh {wh.shape}")
    hid = wh.shape[0]
    gates = x_t @ wx + h_prev @ wh + b
    i = sigmoid(gates[:, :hid])
    f = sigmoid(gates[:, hid:2 * hid])
    g = np.tanh(gates[:, 2 * hid:3 * hid])
    o = sigmoid(gates[:, 3 * hid:])
    c_t = f * c_prev + i * g
    tc = np.tanh(c_t)
    h_t = o * tc
    cache = (x_t, h_prev, c_prev, i, f, g, o, tc)
    return h_t, c_t, cache


def lstm_step_backward(dh, dc, cache, wx, wh):
    """Backward for one step. dh/dc are gradients flowing into h_t/c_t."""
    x_t, h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc_total = dc + dh * o * (1.0 - tc * tc)
    di = dc_total * g
    df = dc_total * c_prev
    dg = dc_total * i
    dc_prev = dc_total * f
    d_gates = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f),
         dg * (1.0 - g * g), do * o * (1.0 - o)], axis=1)
    dx = d_gates @ wx.T
    dh_prev = d_gates @ wh.T
    dwx = x_t.T @ d_gates
    dwh = h_prev.T @ d_gates
    db = d_gates.sum(axis=0)
    return dx, dh_prev, dc_prev, dwx, dwh, db


def lstm_forward(x_seq, wx, wh, b, mask=None, h0=None, c0=None):
    """Run an LSTM over a [T, N, D] sequence.

    mask: optional [T, N] of {0,1}; positions with 0 leave the state frozen,
    so the final state of a padded sequence equals the state at its length.
    Returns (h_seq [T, N, H], h_T, c_T, cache).
    """
    t_len, n, _ = x_seq.shape
    hid = wh.shape[0]
    h = np.zeros((n, hid), dtype=x_seq.dtype) if h0 is None else h0
    c = np.zeros((n, hid), dtype=x_seq.dtype) if c0 is None else c0
    h_seq = np.empty((t_len, n, hid), dtype=x_seq.dtype)
    caches = []
    for t in range(t_len):
        h_new, c_new, cache = lstm_step(x_seq[t], h, c, wx, wh, b)
        if mask is not None:
            m = mask[t][:, None]
            h = m * h_new + (1.0 - m) * h
            c = m * c_new + (1.0 - m) * c
        else:
            m = None
            h, c = h_new, c_new
        caches.append((cache, m, h_new, c_new))
        h_seq[t] = h
    return h_seq, h, c, (caches, wx, wh, x_seq.shape)


def lstm_backward(dh_seq, dh_last, dc_last, cache):
    """Backward through time.

    dh_seq: [T, N, H] gradients on every emitted state (zeros allowed),
    dh_last/dc_last: gradients on the final state. Returns
    (dx_seq, dwx, dwh, db, dh0, dc0).
    """
    caches, wx, wh, x_shape = cache
    t_len, n, _ = x_shape
    hid = wh.shape[0]
    dtype = dh_seq.dtype
    dx_seq = np.zeros(x_shape, dtype=dtype)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hid, dtype=dtype)
    dh = dh_last.copy() if dh_last is not None else np.zeros((n, hid), dtype=dtype)
    dc = dc_last.copy() if dc_last is not None else np.zeros((n, hid), dtype=dtype)
    for t in range(t_len - 1, -1, -1):
        step_cache, m, _, _ = caches[t]
        dh = dh + dh_seq[t]
        if m is not None:
            dh_step = dh * m
            dc_step = dc * m
            dh_carry = dh * (1.0 - m)
            dc_carry = dc * (1.0 - m)
        else:
            dh_step, dc_step = dh, dc
            dh_carry = dc_carry = 0.0
        dx, dh_prev, dc_prev, g_wx, g_wh, g_b = \
            lstm_step_backward(dh_step, dc_step, step_cache, wx, wh)
        dx_seq[t] = dx
        dwx += g_wx
        dwh += g_wh
        db += g_b
        dh = dh_prev + dh_carry
        dc = dc_prev + dc_carry
    return dx_seq, dwx, dwh, db, dh, dc
