"""Pure-numpy implementations of the hot numerical kernels.

This is the fallback backend; `attnwalk._core` is the compiled equivalent.
Both expose the same functions over C-contiguous float64 arrays, and
`attnwalk.kernels` picks one at import time. Shapes follow the convention
(B, dim) with B the episode batch.

LSTM gate layout along the last axis of the packed weight/gate arrays is
[input, forget, candidate, output], each of width H.
"""

from __future__ import annotations

import numpy as np


def backend_name() -> str:
    return "python"


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x @ w.T + b for x (B, in), w (out, in), b (out,)."""
    return x @ w.T + b


def linear_input_grad(dy: np.ndarray, w: np.ndarray) -> np.ndarray:
    """dx = dy @ w."""
    return dy @ w


def accumulate_param_grads(x: np.ndarray, dy: np.ndarray, dw: np.ndarray, db: np.ndarray) -> None:
    """dw += dy.T @ x, db += dy.sum(0), in place."""
    dw += dy.T @ x
    db += dy.sum(axis=0)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """dx given post-activation y = relu(x)."""
    return np.where(y > 0.0, dy, 0.0)


def lstm_forward(
    xh: np.ndarray, c_prev: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One LSTM step on the concatenated input xh = [x, h_prev].

    xh (B, S+H), c_prev (B, H), w (4H, S+H), b (4H,). Returns
    (h, c, gates) where gates (B, 4H) holds the activated gate values.
    """
    hidden = c_prev.shape[1]
    z = xh @ w.T + b
    gates = np.empty_like(z)
    gates[:, : 2 * hidden] = 1.0 / (1.0 + np.exp(-z[:, : 2 * hidden]))
    gates[:, 2 * hidden : 3 * hidden] = np.tanh(z[:, 2 * hidden : 3 * hidden])
    gates[:, 3 * hidden :] = 1.0 / (1.0 + np.exp(-z[:, 3 * hidden :]))
    i = gates[:, :hidden]
    f = gates[:, hidden : 2 * hidden]
    g = gates[:, 2 * hidden : 3 * hidden]
    o = gates[:, 3 * hidden :]
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, gates


def lstm_gate_grads(
    c_prev: np.ndarray,
    gates: np.ndarray,
    c_new: np.ndarray,
    dh: np.ndarray,
    dc: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise part of the LSTM backward step.

    Returns (dz, dc_prev) with dz (B, 4H) the gradient at the gate
    pre-activations; the caller maps dz through the weight matrix.
    """
    hidden = c_prev.shape[1]
    i = gates[:, :hidden]
    f = gates[:, hidden : 2 * hidden]
    g = gates[:, 2 * hidden : 3 * hidden]
    o = gates[:, 3 * hidden :]
    tanh_c = np.tanh(c_new)
    do = dh * tanh_c
    dct = dc + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.empty_like(gates)
    dz[:, :hidden] = dct * g * i * (1.0 - i)
    dz[:, hidden : 2 * hidden] = dct * c_prev * f * (1.0 - f)
    dz[:, 2 * hidden : 3 * hidden] = dct * i * (1.0 - g * g)
    dz[:, 3 * hidden :] = do * o * (1.0 - o)
    dc_prev = dct * f
    return dz, dc_prev


def softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def all_finite(x: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(x)))


def adam_step(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    """In-place Adam update with bias correction; t is the 1-based step."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    p -= lr * m_hat / (np.sqrt(v_hat) + eps)
