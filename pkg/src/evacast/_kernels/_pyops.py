"""Pure-NumPy implementations of the hot training kernels.

This is the fallback backend; `evacast._kernels._speedups` provides the
compiled equivalents. All step kernels work in place on caller-allocated
float64 C-contiguous buffers; the gate column layout is [input, forget,
candidate, output], each block of width H. Transcendentals go through
NumPy's SIMD ufuncs in both backends, so results differ only by rounding
of the fused arithmetic.
"""

import numpy as np


def _sigmoid_inplace(x: np.ndarray) -> None:
    np.negative(x, out=x)
    np.exp(x, out=x)
    x += 1.0
    np.reciprocal(x, out=x)


def lstm_step_forward(zbar: np.ndarray, c_prev: np.ndarray, c_out: np.ndarray,
                      tc_out: np.ndarray, h_out: np.ndarray) -> None:
    """Activate gate pre-activations in place and advance the cell state.

    `zbar` (B, 4H) holds pre-activations on input and activated i|f|g|o
    gates on return; c/tanh(c)/h are written to the provided buffers.
    """
    h_n = c_prev.shape[1]
    _sigmoid_inplace(zbar[:, :2 * h_n])
    np.tanh(zbar[:, 2 * h_n:3 * h_n], out=zbar[:, 2 * h_n:3 * h_n])
    _sigmoid_inplace(zbar[:, 3 * h_n:])
    i = zbar[:, :h_n]
    f = zbar[:, h_n:2 * h_n]
    g = zbar[:, 2 * h_n:3 * h_n]
    o = zbar[:, 3 * h_n:]
    np.multiply(f, c_prev, out=c_out)
    np.multiply(i, g, out=h_out)          # h_out as scratch
    c_out += h_out
    np.tanh(c_out, out=tc_out)
    np.multiply(o, tc_out, out=h_out)


def lstm_step_backward(d_h: np.ndarray, d_c: np.ndarray, gates: np.ndarray,
                       c_prev: np.ndarray, tanh_c: np.ndarray,
                       dz_out: np.ndarray) -> None:
    """Backward through one cell update.

    Writes gate pre-activation gradients to `dz_out` and replaces `d_c`
    with the gradient on the previous cell state, both in place.
    """
    h_n = d_h.shape[1]
    i = gates[:, :h_n]
    f = gates[:, h_n:2 * h_n]
    g = gates[:, 2 * h_n:3 * h_n]
    o = gates[:, 3 * h_n:]
    dzi = dz_out[:, :h_n]
    dzf = dz_out[:, h_n:2 * h_n]
    dzg = dz_out[:, 2 * h_n:3 * h_n]
    dzo = dz_out[:, 3 * h_n:]
    # dc_total = d_c + d_h * o * (1 - tanh_c^2), built in dzi as scratch
    np.multiply(tanh_c, tanh_c, out=dzi)
    np.subtract(1.0, dzi, out=dzi)
    dzi *= o
    dzi *= d_h
    d_c += dzi
    np.multiply(d_c, g, out=dzi)
    dzi *= i
    np.subtract(dzi, dzi * i, out=dzi)    # dc*g*i*(1-i)
    np.multiply(d_c, c_prev, out=dzf)
    dzf *= f
    np.subtract(dzf, dzf * f, out=dzf)
    np.multiply(d_c, i, out=dzg)
    np.subtract(dzg, dzg * g * g, out=dzg)
    np.multiply(d_h, tanh_c, out=dzo)
    dzo *= o
    np.subtract(dzo, dzo * o, out=dzo)
    d_c *= f


def rnn_step_forward(zbar: np.ndarray, h_out: np.ndarray) -> None:
    np.tanh(zbar, out=h_out)


def rnn_step_backward(d_h: np.ndarray, h: np.ndarray, dz_out: np.ndarray) -> None:
    np.multiply(h, h, out=dz_out)
    np.subtract(1.0, dz_out, out=dz_out)
    dz_out *= d_h


def relu_forward(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def relu_backward(d_a: np.ndarray, a: np.ndarray) -> np.ndarray:
    return d_a * (a > 0.0)


def adam_update(param: np.ndarray, grad: np.ndarray, m: np.ndarray,
                v: np.ndarray, t: int, lr: float, beta1: float, beta2: float,
                eps: float) -> None:
    """One bias-corrected Adam step, in place on (param, m, v)."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
