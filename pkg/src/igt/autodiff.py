"""Define-by-run reverse-mode differentiation over float64 numpy arrays.

Operations executed while a :class:`Tape` is active, and that touch at least
one tensor with ``requires_grad``, are recorded together with a closure that
maps the output gradient to operand gradients. ``Tape.backward`` replays the
records in reverse and frees them.

    >>> w = Tensor([[1.0, 2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_all(w)
    >>> tape.backward(loss)[w]
    array([[1., 1.]])
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np

from .errors import CheckpointError, NumericFaultError, ShapeError, StaleTapeError

_state = threading.local()


def _active_tape() -> Optional["Tape"]:
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    """A float64 array plus the flag that makes operations on it recorded."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records operations executed inside its ``with`` block."""

    def __init__(self):
        self.records: list = []
        self.consumed = False

    def __enter__(self):
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def record(self, out: Tensor, parents: tuple, backward_fn: Callable):
        if self.consumed:
            raise StaleTapeError("tape already consumed by backward(); start a new tape")
        self.records.append((out, parents, backward_fn))

    def backward(self, loss: Tensor) -> Dict[Tensor, np.ndarray]:
        """Gradients of scalar ``loss`` for every leaf tensor requiring grad.

        Leaves reached by the tape but not by the loss get zero arrays.
        """
        if self.consumed:
            raise StaleTapeError("backward() already called on this tape")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        produced = {id(out) for out, _, _ in self.records}
        leaves: Dict[int, Tensor] = {}
        for out, parents, fn in reversed(self.records):
            for p in parents:
                if isinstance(p, Tensor) and p.requires_grad and id(p) not in produced:
                    leaves[id(p)] = p
            g = grads.pop(id(out), None)
            if g is None:
                continue
            pgrads = fn(g)
            for p, pg in zip(parents, pgrads):
                if pg is None or not (isinstance(p, Tensor) and p.requires_grad):
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        result = {t: grads.get(k, np.zeros_like(t.data)) for k, t in leaves.items()}
        if id(loss) in grads and loss.requires_grad and id(loss) not in produced:
            result[loss] = grads[id(loss)]
        self.records = []
        self.consumed = True
        return result


def backward(tape: Tape, loss: Tensor) -> Dict[Tensor, np.ndarray]:
    return tape.backward(loss)


def _check(name: str, out: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NumericFaultError(f"{name} produced non-finite values")
    return out


def _make(name: str, out: np.ndarray, parents: tuple, fn: Callable) -> Tensor:
    _check(name, out)
    tape = _active_tape()
    if tape is not None and any(isinstance(p, Tensor) and p.requires_grad for p in parents):
        t = Tensor(out, requires_grad=True)
        tape.record(t, parents, fn)
        return t
    return Tensor(out)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(name, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


# ------------------------------------------------------------------- ops


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data
    return _make("matmul", A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    A, B = a.data, b.data
    return _make("mul", A * B, (a, b),
                 lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make("scale", a.data * c, (a,), lambda g: (g * c,))


class KinkRecorder:
    """Collects the active-unit masks of every ``relu`` evaluated inside the block.

    Finite differences are only meaningful when no mask changes between the
    perturbed evaluations; gradcheck uses this to reject straddling steps.
    """

    def __init__(self):
        self.masks: list = []

    def __enter__(self):
        _state.kinks = self
        return self

    def __exit__(self, *exc):
        _state.kinks = None
        return False


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    rec = getattr(_state, "kinks", None)
    if rec is not None:
        rec.masks.append(mask)
    return _make("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)
    return _make("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def row_softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        return (s * (g - np.sum(g * s, axis=-1, keepdims=True)),)

    return _make("row_softmax", s, (a,), fn)


LN_EPS = 1e-12


def layer_norm(x, gain=None, bias=None, eps: float = LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit (population) variance, then affine."""
    x = as_tensor(x)
    X = x.data
    mu = X.mean(axis=-1, keepdims=True)
    xc = X - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    parents = [x]
    G = B = None
    out = xhat
    if gain is not None:
        gain = as_tensor(gain)
        G = gain.data
        if G.shape[-1] != X.shape[-1]:
            raise ShapeError(f"layer_norm: gain shape {G.shape} vs input {X.shape}")
        out = out * G
        parents.append(gain)
    if bias is not None:
        bias = as_tensor(bias)
        B = bias.data
        if B.shape[-1] != X.shape[-1]:
            raise ShapeError(f"layer_norm: bias shape {B.shape} vs input {X.shape}")
        out = out + B
        parents.append(bias)

    def fn(g):
        gx = g * G if G is not None else g
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * np.mean(gx * xhat, axis=-1, keepdims=True))
        res = [dx]
        if G is not None:
            res.append(_unbroadcast(g * xhat, G.shape))
        if B is not None:
            res.append(_unbroadcast(g, B.shape))
        return tuple(res)

    return _make("layer_norm", out, tuple(parents), fn)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def fn(g):
        return tuple(
            np.take(g, np.arange(bounds[k], bounds[k + 1]), axis=axis) for k in range(len(ts))
        )

    return _make("concat", out, tuple(ts), fn)


def slice_rows(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    n = a.shape[0]
    if not 0 <= start <= stop <= n:
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for shape {a.shape}")

    def fn(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _make("slice_rows", a.data[start:stop].copy(), (a,), fn)


def gather_rows(a, index) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for shape {a.shape}")

    def fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make("gather_rows", a.data[idx], (a,), fn)


def scatter_add_rows(a, index, n_rows: int) -> Tensor:
    """``out[index[k]] += a[k]`` into an ``n_rows``-row zero matrix."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)
    if len(idx) != a.shape[0]:
        raise ShapeError(f"scatter_add_rows: {len(idx)} indices for shape {a.shape}")
    out = np.zeros((n_rows,) + a.shape[1:])
    np.add.at(out, idx, a.data)
    return _make("scatter_add_rows", out, (a,), lambda g: (g[idx],))


def segment_softmax(a, segment, n_segments: int) -> Tensor:
    """Softmax of the rows of ``a`` within groups sharing a segment id, per column."""
    a = as_tensor(a)
    seg = np.asarray(segment, dtype=np.int64)
    if len(seg) != a.shape[0]:
        raise ShapeError(f"segment_softmax: {len(seg)} segment ids for shape {a.shape}")
    X = a.data
    mx = np.full((n_segments,) + X.shape[1:], -np.inf)
    np.maximum.at(mx, seg, X)
    e = np.exp(X - mx[seg])
    den = np.zeros((n_segments,) + X.shape[1:])
    np.add.at(den, seg, e)
    s = e / den[seg]

    def fn(g):
        gs = g * s
        tot = np.zeros((n_segments,) + X.shape[1:])
        np.add.at(tot, seg, gs)
        return (gs - s * tot[seg],)

    return _make("segment_softmax", s, (a,), fn)


def sum_rows(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _make("sum_rows", a.data.sum(axis=0, keepdims=True), (a,),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_rows(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    n = shape[0]
    if n == 0:
        raise ShapeError("mean_rows of an empty matrix")
    return _make("mean_rows", a.data.mean(axis=0, keepdims=True), (a,),
                 lambda g: (np.broadcast_to(g / n, shape).copy(),))


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _make("sum_all", np.array(a.data.sum()), (a,),
                 lambda g: (np.full(shape, float(g)),))


def bce_with_logits(logits, targets, pos_weight: float = 1.0) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against {0,1} targets."""
    z = as_tensor(logits)
    y = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if y.shape != z.shape and y.size != z.data.size:
        raise ShapeError(f"bce_with_logits: logits {z.shape} vs targets {y.shape}")
    y = y.reshape(z.shape)
    Z = z.data
    # softplus(-z) = log(1 + e^-z), computed without overflow
    sp_neg = np.maximum(-Z, 0.0) + np.log1p(np.exp(-np.abs(Z)))
    sp_pos = sp_neg + Z
    loss = np.mean(pos_weight * y * sp_neg + (1.0 - y) * sp_pos)
    sig = _sigmoid(Z)
    n = Z.size

    def fn(g):
        return (g * (pos_weight * y * (sig - 1.0) + (1.0 - y) * sig) / n,)

    return _make("bce_with_logits", np.array(loss), (z,), fn)


def dropout(a, p: float, rng: Optional[np.random.Generator], training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    a = as_tensor(a)
    if not training or p <= 0.0:
        return a
    if rng is None:
        raise ValueError("dropout needs a seeded generator while training")
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return _make("dropout", a.data * keep, (a,), lambda g: (g * keep,))


# ------------------------------------------------------------ optimizer


@dataclass
class AdamState:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place on ``params``.

    Parameters missing from ``grads`` are treated as having zero gradient.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient {g.shape} vs parameter {p.shape} for {name}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


# ------------------------------------------------------------ checkpoints

_MAGIC = b"IGTC"
_VERSION = 1


def save_checkpoint(path, arrays: Dict[str, np.ndarray]) -> None:
    """Write named float64 arrays in the little-endian ``IGTC`` v1 layout."""
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<II", _VERSION, len(arrays))
    for name, arr in arrays.items():
        a = np.array(arr, dtype="<f8", order="C")  # keeps rank 0, unlike ascontiguousarray
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or a.ndim > 0xFF:
            raise CheckpointError(f"entry {name!r} too large for the format")
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<B", a.ndim)
        buf += struct.pack(f"<{a.ndim}Q", *a.shape)
        buf += a.tobytes(order="C")
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != _VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        off = 12
        out: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{rank}Q", data, off)
            off += 8 * rank
            size = int(np.prod(shape)) if rank else 1
            if off + 8 * size > len(data):
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
            off += 8 * size
    except struct.error:
        raise CheckpointError(f"{path}: truncated checkpoint") from None
    if off != len(data):
        raise CheckpointError(f"{path}: trailing bytes after {count} entries")
    return out


def save_adam_state(path, state: AdamState) -> None:
    arrays = {
        "step": np.array(float(state.step)),
        "hparams": np.array([state.lr, state.beta1, state.beta2, state.eps]),
    }
    for name in state.m:
        arrays[f"m.{name}"] = state.m[name]
        arrays[f"v.{name}"] = state.v[name]
    save_checkpoint(path, arrays)


def load_adam_state(path) -> AdamState:
    arrays = load_checkpoint(path)
    lr, b1, b2, eps = arrays["hparams"]
    st = AdamState(lr=float(lr), beta1=float(b1), beta2=float(b2), eps=float(eps),
                   step=int(arrays["step"].reshape(-1)[0]))
    for key, arr in arrays.items():
        if key.startswith("m."):
            st.m[key[2:]] = arr.copy()
        elif key.startswith("v."):
            st.v[key[2:]] = arr.copy()
    return st


# -------------------------------------------------------------- gradcheck


def central_difference(f: Callable[[], float], arr: np.ndarray, index, h: float = 1e-5) -> float:
    """(f(x+h) - f(x-h)) / 2h with ``arr[index]`` perturbed in place and restored."""
    old = arr[index]
    arr[index] = old + h
    fp = f()
    arr[index] = old - h
    fm = f()
    arr[index] = old
    return (fp - fm) / (2.0 * h)


def relative_error(analytic: float, numeric: float) -> float:
    denom = max(abs(analytic), abs(numeric))
    return 0.0 if denom == 0.0 else abs(analytic - numeric) / denom
