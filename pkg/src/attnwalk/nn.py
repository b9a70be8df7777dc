"""Dense neural primitives with exact analytic gradients.

Everything is float64. Layers own their parameter and gradient arrays;
backward calls accumulate into the gradient arrays and callers zero them
once per update. The heavy array math is delegated to the selected kernel
backend (`attnwalk.kernels`).
"""

from __future__ import annotations

import logging

import numpy as np

from attnwalk import kernels
from attnwalk.rng import stream

logger = logging.getLogger(__name__)


def uniform_init(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator | None) -> np.ndarray:
    if rng is None:
        return np.zeros(shape)
    scale = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-scale, scale, size=shape)


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise ValueError(f"{what}: expected length {dim}, got {x.shape[0]}")
        return np.ascontiguousarray(x[None, :]), True
    if x.ndim == 2:
        if x.shape[1] != dim:
            raise ValueError(f"{what}: expected width {dim}, got {x.shape[1]}")
        return np.ascontiguousarray(x), False
    raise ValueError(f"{what}: expected 1-D or 2-D input")


class LinearLayer:
    """y = W x + b with W of shape (out_dim, in_dim)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weights = uniform_init((out_dim, in_dim), in_dim, rng)
        self.bias = np.zeros(out_dim)
        self.d_weights = np.zeros_like(self.weights)
        self.d_bias = np.zeros_like(self.bias)

    def forward(self, x: np.ndarray) -> np.ndarray:
        xb, single = _as_batch(x, self.in_dim, "linear input")
        y = kernels.linear_forward(xb, self.weights, self.bias)
        return y[0] if single else y

    def backward(self, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Accumulate parameter grads for the pass y = Wx + b; return dL/dx."""
        xb, single = _as_batch(x, self.in_dim, "linear input")
        ub, _ = _as_batch(upstream, self.out_dim, "linear upstream")
        if ub.shape[0] != xb.shape[0]:
            raise ValueError("linear backward: batch sizes of x and upstream differ")
        kernels.accumulate_param_grads(xb, ub, self.d_weights, self.d_bias)
        dx = kernels.linear_input_grad(ub, self.weights)
        return dx[0] if single else dx

    def zero_grad(self) -> None:
        self.d_weights[:] = 0.0
        self.d_bias[:] = 0.0


class LstmCell:
    """Standard forget-gate LSTM cell over the concatenated input [x, h_prev].

    Gate blocks are packed row-wise as [input, forget, candidate, output] in
    a single (4H, S+H) weight matrix. The forget-gate bias starts at 1.0.
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator | None = None):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        fan_in = input_dim + hidden_dim
        self.weights = uniform_init((4 * hidden_dim, fan_in), fan_in, rng)
        self.bias = np.zeros(4 * hidden_dim)
        self.bias[hidden_dim : 2 * hidden_dim] = 1.0
        self.d_weights = np.zeros_like(self.weights)
        self.d_bias = np.zeros_like(self.bias)

    def step(
        self, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, tuple]:
        """Returns (h, c, cache); cache feeds backward_step."""
        xb, single = _as_batch(x, self.input_dim, "lstm input")
        hb, _ = _as_batch(h_prev, self.hidden_dim, "lstm h_prev")
        cb, _ = _as_batch(c_prev, self.hidden_dim, "lstm c_prev")
        if not (xb.shape[0] == hb.shape[0] == cb.shape[0]):
            raise ValueError("lstm step: batch sizes differ")
        xh = np.concatenate([xb, hb], axis=1)
        h, c, gates = kernels.lstm_forward(xh, cb, self.weights, self.bias)
        cache = (xh, cb, gates, c)
        if single:
            return h[0], c[0], cache
        return h, c, cache

    def backward_step(
        self, cache: tuple, dh: np.ndarray, dc: np.ndarray | None = None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (dx, dh_prev, dc_prev) and accumulates weight grads."""
        xh, c_prev, gates, c_new = cache
        dhb, single = _as_batch(dh, self.hidden_dim, "lstm dh")
        if dc is None:
            dcb = np.zeros_like(dhb)
        else:
            dcb, _ = _as_batch(dc, self.hidden_dim, "lstm dc")
        dz, dc_prev = kernels.lstm_gate_grads(c_prev, gates, c_new, dhb, dcb)
        kernels.accumulate_param_grads(xh, dz, self.d_weights, self.d_bias)
        dxh = kernels.linear_input_grad(dz, self.weights)
        dx = dxh[:, : self.input_dim]
        dh_prev = dxh[:, self.input_dim :]
        if single:
            return dx[0], dh_prev[0], dc_prev[0]
        return dx, dh_prev, dc_prev

    def zero_grad(self) -> None:
        self.d_weights[:] = 0.0
        self.d_bias[:] = 0.0


def lstm_run(
    cell: LstmCell, xs: np.ndarray, h0: np.ndarray, c0: np.ndarray
) -> tuple[np.ndarray, np.ndarray, list[tuple]]:
    """Unroll the cell over xs (T, ...); equivalent to sequential step calls."""
    h, c = h0, c0
    hs, cs, caches = [], [], []
    for x in xs:
        h, c, cache = cell.step(x, h, c)
        hs.append(h)
        cs.append(c)
        caches.append(cache)
    return np.asarray(hs), np.asarray(cs), caches


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax of a vector."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax: input must be finite")
    if z.ndim != 1:
        raise ValueError("softmax: expected a vector; use kernels.softmax_rows for batches")
    return kernels.softmax_rows(np.ascontiguousarray(z[None, :]))[0]


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max()
    return z - (m + np.log(np.exp(z - m).sum()))


def cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """loss = -log softmax(logits)[label]; grad = softmax(logits) - onehot."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"cross_entropy: label {label} out of range for {logits.shape[0]} classes")
    logp = log_softmax(logits)
    grad = np.exp(logp)
    grad[label] -= 1.0
    return float(-logp[label]), grad


def mse(pred: float, target: float) -> tuple[float, float]:
    """loss = (pred - target)^2; gradient wrt pred."""
    diff = float(pred) - float(target)
    return diff * diff, 2.0 * diff


class Adam:
    """Adam over named (param, grad) array pairs, using the kernel backend.

    Moment accumulators mirror parameter shapes; the step counter advances
    once per successful update. A non-finite gradient anywhere skips the
    whole update and logs a warning.
    """

    def __init__(
        self,
        blocks: list[tuple[str, np.ndarray, np.ndarray]],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.blocks = list(blocks)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p, _ in self.blocks}
        self.v = {name: np.zeros_like(p) for name, p, _ in self.blocks}

    def update(self, lr: float) -> bool:
        """Apply one Adam step; returns False if skipped on non-finite grads."""
        for name, param, grad in self.blocks:
            if param.shape != grad.shape:
                raise ValueError(f"adam: shape mismatch for block {name}")
            if not kernels.all_finite(grad.reshape(-1)):
                logger.warning("adam: non-finite gradient in block %s; update skipped", name)
                return False
        self.t += 1
        for name, param, grad in self.blocks:
            kernels.adam_step(
                param.reshape(-1),
                np.ascontiguousarray(grad.reshape(-1)),
                self.m[name].reshape(-1),
                self.v[name].reshape(-1),
                self.t,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
            )
        return True


def grad_check(
    fn,
    blocks: list[np.ndarray],
    seed: int,
    samples_per_block: int = 10,
    step: float = 1e-5,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``fn() -> (loss, grads)`` must be deterministic and read the parameter
    arrays in ``blocks`` by reference; ``grads`` is aligned with ``blocks``.
    Probes ``samples_per_block`` coordinates per block and returns the max
    relative error |a - f| / max(|a|, |f|, 1e-4). The floor keeps
    finite-difference roundoff on near-zero coordinates from registering
    as relative error.
    """
    _, grads = fn()
    rng = stream(seed, "gradcheck")
    max_err = 0.0
    for block, grad in zip(blocks, grads):
        flat = block.reshape(-1)
        n = min(samples_per_block, flat.size)
        idxs = rng.choice(flat.size, size=n, replace=False)
        for idx in idxs:
            orig = flat[idx]
            flat[idx] = orig + step
            loss_plus, _ = fn()
            flat[idx] = orig - step
            loss_minus, _ = fn()
            flat[idx] = orig
            fd = (loss_plus - loss_minus) / (2.0 * step)
            a = grad.reshape(-1)[idx]
            err = abs(a - fd) / max(abs(a), abs(fd), 1e-4)
            max_err = max(max_err, err)
    return max_err
