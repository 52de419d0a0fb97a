"""Dense numeric core: parameters, activations, the LSTM cell, Adam, dropout.

Everything is plain float64 numpy. Tensors are numpy arrays; a Parameter wraps
a value array together with its gradient and Adam moment buffers. The LSTM cell
follows the standard four-gate formulation

    g = tanh(Wgx x + Wgh h + bg)        candidate
    i = sigma(Wix x + Wih h + bi)       input gate
    f = sigma(Wfx x + Wfh h + bf)       forget gate
    o = sigma(Wox x + Woh h + bo)       output gate
    c' = g * i + c * f
    h' = tanh(c') * o
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingDiverged, UsageError


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; seed may be an int or a sequence."""
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# Activations and log-space helpers
# ---------------------------------------------------------------------------


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def activation(kind: str, v):
    """Elementwise activation; kind is one of sigmoid / tanh / relu."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown activation kind: {kind!r}") from None
    return fn(v)


def log_sigmoid(x):
    """log(sigma(x)), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    return -np.logaddexp(0.0, -x)


def softmax(v):
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v)
    e = np.exp(shifted)
    return e / e.sum()


def log_softmax(v):
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v)
    return shifted - np.log(np.exp(shifted).sum())


def log_softmax_rows(m):
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def log_sum_exp(values) -> float:
    """log(sum(exp(values))); tolerates -inf entries, -inf iff all are -inf."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return -np.inf
    hi = values.max()
    if hi == -np.inf:
        return -np.inf
    return float(hi + np.log(np.exp(values - hi).sum()))


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass
class Parameter:
    """A trainable array with gradient and Adam moment buffers."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def uniform_init(rng: np.random.Generator, shape, scale: float = 0.08) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


@dataclass
class LstmState:
    """Hidden and cell vectors of one LSTM step."""

    h: np.ndarray
    c: np.ndarray

    @staticmethod
    def zeros(hidden_dim: int) -> "LstmState":
        return LstmState(np.zeros(hidden_dim), np.zeros(hidden_dim))


class LstmParams:
    """Per-gate weight matrices and biases of one LSTM cell.

    Input weights are (H, E), recurrent weights (H, H), biases (H,). The forget
    gate bias is initialised to 1.0 to stabilise early training; all other
    biases start at zero.
    """

    GATES = ("g", "i", "f", "o")

    def __init__(self, name: str, input_dim: int, hidden_dim: int,
                 rng: np.random.Generator):
        self.name = name
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        for gate in self.GATES:
            wx = Parameter(f"{name}.w_{gate}x", uniform_init(rng, (hidden_dim, input_dim)))
            wh = Parameter(f"{name}.w_{gate}h", uniform_init(rng, (hidden_dim, hidden_dim)))
            bias = np.full(hidden_dim, 1.0) if gate == "f" else np.zeros(hidden_dim)
            b = Parameter(f"{name}.b_{gate}", bias)
            setattr(self, f"w_{gate}x", wx)
            setattr(self, f"w_{gate}h", wh)
            setattr(self, f"b_{gate}", b)

    def parameters(self) -> list[Parameter]:
        out = []
        for gate in self.GATES:
            out += [getattr(self, f"w_{gate}x"), getattr(self, f"w_{gate}h"),
                    getattr(self, f"b_{gate}")]
        return out


def lstm_cell_math(params: LstmParams, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """Forward pass of one LSTM step; returns (h', c', internals for backward)."""
    pre_g = params.w_gx.value @ x + params.w_gh.value @ h + params.b_g.value
    pre_i = params.w_ix.value @ x + params.w_ih.value @ h + params.b_i.value
    pre_f = params.w_fx.value @ x + params.w_fh.value @ h + params.b_f.value
    pre_o = params.w_ox.value @ x + params.w_oh.value @ h + params.b_o.value
    g = np.tanh(pre_g)
    i = sigmoid(pre_i)
    f = sigmoid(pre_f)
    o = sigmoid(pre_o)
    c_new = g * i + c * f
    tanh_c = np.tanh(c_new)
    h_new = tanh_c * o
    return h_new, c_new, (g, i, f, o, tanh_c)


def lstm_step(params: LstmParams, x_t: np.ndarray, prev: LstmState) -> LstmState:
    """One deterministic LSTM step on plain arrays."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (params.input_dim,):
        raise ConfigError(
            f"lstm_step: input has shape {x_t.shape}, expected ({params.input_dim},)")
    if prev.h.shape != (params.hidden_dim,) or prev.c.shape != (params.hidden_dim,):
        raise ConfigError(
            f"lstm_step: state dims {prev.h.shape}/{prev.c.shape} do not match "
            f"hidden_dim {params.hidden_dim}")
    h_new, c_new, _ = lstm_cell_math(params, x_t, prev.h, prev.c)
    return LstmState(h_new, c_new)


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------


def clip_gradients(params: list[Parameter], max_norm: float = 5.0) -> float:
    """Scale all gradients so the global L2 norm is at most max_norm.

    Returns the applied factor (1.0 when no clipping happened).
    """
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad * p.grad))
    norm = np.sqrt(total)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    factor = max_norm / norm
    for p in params:
        p.grad *= factor
    return factor


def adam_step(params: list[Parameter], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, step_count: int = 1):
    """One Adam update with bias correction; gradients are zeroed afterwards."""
    if step_count < 1:
        raise UsageError("adam_step: step_count starts at 1")
    bc1 = 1.0 - beta1 ** step_count
    bc2 = 1.0 - beta2 ** step_count
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingDiverged(f"non-finite gradient in parameter {p.name!r}")
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * p.grad
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * (p.grad * p.grad)
        m_hat = p.adam_m / bc1
        v_hat = p.adam_v / bc2
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad[...] = 0.0


def dropout_mask(length: int, rate: float, rng: np.random.Generator,
                 training: bool = True) -> np.ndarray:
    """Inverted dropout mask: zeros with probability rate, else 1/(1-rate).

    In evaluation mode (training=False) or at rate 0 the mask is all ones, so
    no rescaling is ever needed at inference time.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return np.ones(length)
    keep = rng.random(length) >= rate
    return keep.astype(np.float64) / (1.0 - rate)
