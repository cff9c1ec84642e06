"""Forward pass and backpropagation through time.

The batch kernels keep the batch axis last and loop over time, so each
step is a handful of vectorized numpy calls; the single-sequence functions
(:func:`forward`, :func:`backward`) are thin wrappers with a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .params import Gradients, LstmParameters

BCE_EPS = 1e-7


def sigmoid(x):
    """Logistic function, safe for large ``|x|``."""
    return expit(x)


@dataclass
class CellState:
    s: np.ndarray  # cell memory
    h: np.ndarray  # hidden output

    @classmethod
    def zeros(cls, m: int, batch: int | None = None) -> "CellState":
        shape = (m,) if batch is None else (batch, m)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class DropoutMasks:
    """Inverted-dropout masks, held fixed over a whole sequence.

    Survivors carry ``1/(1-p)``; with dropout off both masks are all ones.
    """

    input_mask: np.ndarray
    recurrent_mask: np.ndarray

    @classmethod
    def ones(cls, n: int, m: int, batch: int | None = None) -> "DropoutMasks":
        lead = () if batch is None else (batch,)
        return cls(np.ones(lead + (n,)), np.ones(lead + (m,)))

    @classmethod
    def sample(cls, rng: np.random.Generator, n: int, m: int, dropout: float,
               recurrent_dropout: float, batch: int | None = None) -> "DropoutMasks":
        lead = () if batch is None else (batch,)
        return cls(_mask(rng, lead + (n,), dropout), _mask(rng, lead + (m,), recurrent_dropout))


def _mask(rng, shape, rate):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


@dataclass
class GateValues:
    forget: np.ndarray
    input: np.ndarray
    output: np.ndarray
    candidate: np.ndarray


def cell_step(params: LstmParameters, x_t, prev: CellState,
              masks: DropoutMasks | None = None, return_gates: bool = False):
    """Advance one timestep.

    ``x_t`` has shape ``(n,)`` (or ``(batch, n)`` with matching ``prev``).
    Returns the new :class:`CellState`, plus the gate activations when
    ``return_gates`` is set.
    """
    m, n = params.m, params.n
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim == 0:
        x_t = x_t.reshape(1)
    if x_t.shape[-1] != n:
        raise ValueError(f"input has {x_t.shape[-1]} features, parameters expect n={n}")
    if prev.s.shape[-1] != m or prev.h.shape[-1] != m:
        raise ValueError(f"state width {prev.s.shape[-1]}/{prev.h.shape[-1]} does not match m={m}")
    if masks is not None:
        x_t = x_t * masks.input_mask
        h_prev = prev.h * masks.recurrent_mask
    else:
        h_prev = prev.h
    z = x_t @ params.stacked_w().T + h_prev @ params.stacked_u().T + params.stacked_b()
    f = sigmoid(z[..., :m])
    i = sigmoid(z[..., m:2 * m])
    o = sigmoid(z[..., 2 * m:3 * m])
    g = np.tanh(z[..., 3 * m:])
    s = f * prev.s + i * g
    h = o * np.tanh(s)
    state = CellState(s, h)
    if return_gates:
        return state, GateValues(f, i, o, g)
    return state


@dataclass
class ForwardCache:
    """Everything :func:`backward_batch` needs.

    Arrays are feature-major with the batch axis last, e.g. ``f`` is
    ``(T, m, B)``, so per-timestep slices are contiguous. ``stacked_in[t]``
    holds ``[masked h_{t-1}; masked x_t; 1]`` so one product with
    ``[U | W | b]`` gives all gate pre-activations.
    """

    stacked_in: np.ndarray  # (T, m + n + 1, B)
    s: np.ndarray           # cell states s_0..s_T, (T+1, m, B)
    h_T: np.ndarray         # final hidden state, (m, B)
    gates: np.ndarray       # [f; i; o; candidate] activations, (T, 4m, B)
    tanh_s: np.ndarray      # (T, m, B)
    recurrent_mask: np.ndarray  # (m, B)
    prediction: np.ndarray      # (B,)

    @property
    def m(self) -> int:
        return self.s.shape[1]

    @property
    def h_in(self):
        return self.stacked_in[:, :self.m]

    @property
    def x_tilde(self):
        return self.stacked_in[:, self.m:-1]

    @property
    def f(self):
        return self.gates[:, :self.m]

    @property
    def i(self):
        return self.gates[:, self.m:2 * self.m]

    @property
    def o(self):
        return self.gates[:, 2 * self.m:3 * self.m]

    @property
    def g(self):
        return self.gates[:, 3 * self.m:]


def _as_batch(X, n: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[..., None]
    if X.ndim != 3 or X.shape[2] != n:
        raise ValueError(f"expected inputs of shape (batch, T, {n}), got {X.shape}")
    if X.shape[1] < 1:
        raise ValueError("sequence must contain at least one timestep")
    return X


class Workspace:
    """Reusable scratch arrays for repeated batches of the same shape.

    A cache produced with a workspace is only valid until the next forward
    call that uses the same workspace.
    """

    def __init__(self):
        self._buffers: dict[str, np.ndarray] = {}

    def get(self, name: str, shape: tuple[int, ...], dtype) -> np.ndarray:
        buf = self._buffers.get(name)
        if buf is None or buf.shape != shape or buf.dtype != dtype:
            buf = np.empty(shape, dtype=dtype)
            self._buffers[name] = buf
        return buf


def _empty(workspace: Workspace | None, name: str, shape, dtype) -> np.ndarray:
    if workspace is None:
        return np.empty(shape, dtype=dtype)
    return workspace.get(name, shape, dtype)


def _joint_weights(params: LstmParameters) -> np.ndarray:
    """``[U | W | b]`` with sigmoid rows halved.

    sigmoid(z) = (1 + tanh(z/2)) / 2, so one tanh call covers all four blocks.
    """
    m = params.m
    joint = np.hstack([params.stacked_u(), params.stacked_w(), params.stacked_b()[:, None]])
    joint[:3 * m] *= 0.5
    return joint


def forward_batch(params: LstmParameters, X, masks: DropoutMasks | None = None,
                  state0: CellState | None = None, dtype=np.float64,
                  workspace: Workspace | None = None) -> tuple[np.ndarray, ForwardCache]:
    """Run a batch of sequences ``X`` of shape ``(B, T, n)`` (or ``(B, T)``).

    ``masks`` holds per-sequence masks of shape ``(B, n)`` and ``(B, m)``
    (or unbatched, broadcast to every sequence). ``dtype`` sets the compute
    precision; predictions are always returned as float64.
    """
    m, n = params.m, params.n
    X = _as_batch(X, n)
    B, T, _ = X.shape
    if masks is None:
        masks = DropoutMasks.ones(n, m, batch=B)
    in_mask = np.broadcast_to(masks.input_mask, (B, n)).T
    rec_mask = np.ascontiguousarray(np.broadcast_to(masks.recurrent_mask, (B, m)).T)
    if state0 is None:
        state0 = CellState.zeros(m, batch=B)

    joint = _joint_weights(params).astype(dtype)
    rec_mask = rec_mask.astype(dtype)
    stacked_in = _empty(workspace, "stacked_in", (T, m + n + 1, B), dtype)
    stacked_in[:, m:m + n] = np.transpose(X, (1, 2, 0)) * in_mask
    stacked_in[:, m + n] = 1.0

    s = _empty(workspace, "s", (T + 1, m, B), dtype)
    s[0] = np.broadcast_to(state0.s, (B, m)).T
    h = np.ascontiguousarray(np.broadcast_to(state0.h, (B, m)).T, dtype=dtype)
    gates = _empty(workspace, "gates", (T, 4 * m, B), dtype)
    tanh_s = _empty(workspace, "tanh_s", (T, m, B), dtype)
    for t in range(T):
        inp = stacked_in[t]
        np.multiply(h, rec_mask, out=inp[:m])
        a = gates[t]
        np.matmul(joint, inp, out=a)
        np.tanh(a, out=a)
        sg = a[:3 * m]
        sg += 1.0
        sg *= 0.5
        st = s[t + 1]
        np.multiply(a[:m], s[t], out=st)
        st += a[m:2 * m] * a[3 * m:]
        np.tanh(st, out=tanh_s[t])
        h = a[2 * m:3 * m] * tanh_s[t]

    prediction = sigmoid(params.w_out @ h.astype(np.float64) + params.b_out)
    cache = ForwardCache(stacked_in=stacked_in, s=s, h_T=h, gates=gates,
                         tanh_s=tanh_s, recurrent_mask=rec_mask, prediction=prediction)
    return prediction, cache


def forward(params: LstmParameters, sequence, masks: DropoutMasks | None = None,
            s0: CellState | None = None) -> tuple[float, ForwardCache]:
    """Run one sequence (shape ``(T,)`` or ``(T, n)``) and return its prediction."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[:, None]
    if seq.shape[0] < 1:
        raise ValueError("sequence must contain at least one timestep")
    bmasks = None
    if masks is not None:
        bmasks = DropoutMasks(np.reshape(masks.input_mask, (1, -1)),
                              np.reshape(masks.recurrent_mask, (1, -1)))
    bstate = None
    if s0 is not None:
        bstate = CellState(np.reshape(s0.s, (1, -1)), np.reshape(s0.h, (1, -1)))
    pred, cache = forward_batch(params, seq[None], bmasks, bstate)
    return float(pred[0]), cache


def bce_loss(prediction, label):
    """Binary cross-entropy on predictions clamped to ``[eps, 1 - eps]``."""
    p = np.clip(prediction, BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(label, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(loss) if np.ndim(loss) == 0 else loss


def backward_batch(params: LstmParameters, X, y, cache: ForwardCache) -> Gradients:
    """Gradients of the batch-mean BCE loss with respect to every block."""
    m, n = params.m, params.n
    X = _as_batch(X, n)
    B, T, _ = X.shape
    if cache.stacked_in.shape != (T, m + n + 1, B):
        got = cache.stacked_in.shape
        raise ValueError(f"cache was built for {got[2]} sequences of length {got[0]}, got {B} of length {T}")
    y = np.broadcast_to(np.asarray(y, dtype=np.float64), (B,))

    p = cache.prediction
    # no gradient through the clamp
    live = (p > BCE_EPS) & (p < 1.0 - BCE_EPS)
    dlogit = np.where(live, p - y, 0.0) / B
    d_w_out = cache.h_T.astype(np.float64) @ dlogit
    d_b_out = dlogit.sum()

    # Always float64 here: decaying BPTT signals would hit float32 subnormals,
    # which are very slow on x86.
    f64 = np.float64
    UT = params.stacked_u().T.copy()
    rec_mask = cache.recurrent_mask.astype(f64)
    djoint = np.zeros((4 * m, m + n + 1))
    dz = np.empty((4 * m, B))
    dh = np.outer(params.w_out, dlogit)
    ds = np.zeros((m, B))
    for t in range(T - 1, -1, -1):
        a = cache.gates[t].astype(f64, copy=False)
        f, i, o, g = a[:m], a[m:2 * m], a[2 * m:3 * m], a[3 * m:]
        c = cache.tanh_s[t].astype(f64, copy=False)
        ds += dh * o * (1.0 - c * c)
        np.multiply(ds * cache.s[t], f * (1.0 - f), out=dz[:m])
        np.multiply(ds * g, i * (1.0 - i), out=dz[m:2 * m])
        np.multiply(dh * c, o * (1.0 - o), out=dz[2 * m:3 * m])
        np.multiply(ds * i, 1.0 - g * g, out=dz[3 * m:])
        ds *= f
        djoint += dz @ cache.stacked_in[t].T.astype(f64, copy=False)
        dh = UT @ dz
        dh *= rec_mask

    dU, dW, db = djoint[:, :m], djoint[:, m:m + n], djoint[:, m + n]
    return Gradients(
        w_forget=dW[:m], w_input=dW[m:2 * m], w_output=dW[2 * m:3 * m], w_candidate=dW[3 * m:],
        u_forget=dU[:m], u_input=dU[m:2 * m], u_output=dU[2 * m:3 * m], u_candidate=dU[3 * m:],
        b_forget=db[:m], b_input=db[m:2 * m], b_output=db[2 * m:3 * m], b_candidate=db[3 * m:],
        w_out=d_w_out, b_out=d_b_out,
    )


def backward(params: LstmParameters, sequence, label, masks: DropoutMasks | None,
             cache: ForwardCache) -> Gradients:
    """Gradients of the single-sequence loss. ``masks`` must be those used in
    the matching :func:`forward` call."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[:, None]
    if masks is not None and not np.array_equal(
            np.reshape(masks.recurrent_mask, (-1, 1)), cache.recurrent_mask):
        raise ValueError("dropout masks differ from those used in the forward pass")
    return backward_batch(params, seq[None], np.asarray([label]), cache)


def batch_loss(params: LstmParameters, X, y, masks: DropoutMasks | None = None) -> float:
    pred, _ = forward_batch(params, X, masks)
    return float(np.mean(bce_loss(pred, y)))
