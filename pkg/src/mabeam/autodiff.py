"""Reverse-mode automatic differentiation on dense float64 arrays.

A Tensor wraps a numpy array plus the tape bookkeeping needed to pull
gradients back to Parameters.  The tape is rebuilt on every forward pass;
`inference_mode()` disables it entirely for rollout/eval hot paths.

The dispatchable primitive set is the one `apply_primitive` accepts.  A few
structural helpers (reshape, transpose, sum_axis, solve) live outside the
dispatch table; they exist because the attention blocks and the structured
beamformer need them.
"""

import struct
from contextlib import contextmanager

import numpy as np

MASK_NEG = -1e30  # additive surrogate for minus infinity in masked softmax

_tape_enabled = True


@contextmanager
def inference_mode():
    """Disable tape recording inside the block (forward values only)."""
    global _tape_enabled
    prev = _tape_enabled
    _tape_enabled = False
    try:
        yield
    finally:
        _tape_enabled = prev


def tape_enabled() -> bool:
    return _tape_enabled


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_bwd", "param")

    def __init__(self, data, parents=(), bwd=None, param=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._bwd = bwd
        self.param = param

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # Operator sugar over the primitives below.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(x) -> Tensor:
    """Leaf tensor that never receives gradients."""
    return Tensor(np.asarray(x, dtype=np.float64))


def _make(data, parents, bwd) -> Tensor:
    if not _tape_enabled:
        return Tensor(data)
    return Tensor(data, parents=parents, bwd=bwd)


def _accum(t: Tensor, g):
    # Tape gradients are complete before a node's backward runs and are never
    # written afterwards, so holding a reference (even to a view or to a
    # sibling's gradient) is safe; a second contribution allocates fresh.
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _sum_to_shape(g, shape):
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError(f"matmul: operands must be >=2-d, got {a.shape} and {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError as exc:
        raise ValueError(f"matmul: shapes {a.shape} and {b.shape} do not conform") from exc

    def bwd(g):
        _accum(a, _sum_to_shape(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        _accum(b, _sum_to_shape(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _make(out, (a, b), bwd)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ValueError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from exc

    def bwd(g):
        _accum(a, _sum_to_shape(g, a.data.shape))
        _accum(b, _sum_to_shape(g, b.data.shape))

    return _make(out, (a, b), bwd)


def multiply(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ValueError(
            f"elementwise-multiply: shapes {a.shape} and {b.shape} do not broadcast") from exc

    def bwd(g):
        _accum(a, _sum_to_shape(g * b.data, a.data.shape))
        _accum(b, _sum_to_shape(g * a.data, b.data.shape))

    return _make(out, (a, b), bwd)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def bwd(g):
        _accum(a, g * c)

    return _make(a.data * c, (a,), bwd)


def concat_last(tensors) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    lead = ts[0].data.shape[:-1]
    for t in ts[1:]:
        if t.data.shape[:-1] != lead:
            raise ValueError(
                "concat-last-axis: shapes "
                f"{ts[0].shape} and {t.shape} differ outside the last axis")
    out = np.concatenate([t.data for t in ts], axis=-1)
    widths = [t.data.shape[-1] for t in ts]

    def bwd(g):
        off = 0
        for t, w in zip(ts, widths):
            _accum(t, g[..., off:off + w])
            off += w

    return _make(out, tuple(ts), bwd)


def gather_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError(f"gather-rows: expected a 2-d tensor, got {a.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError(f"gather-rows: index out of range for {a.shape[0]} rows")
    out = a.data[idx]

    def bwd(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        _accum(a, acc)

    return _make(out, (a,), bwd)


def mean_axis(a, axis: int = 0) -> Tensor:
    a = as_tensor(a)
    n = a.data.shape[axis]
    out = a.data.mean(axis=axis)

    def bwd(g):
        _accum(a, np.broadcast_to(np.expand_dims(g / n, axis), a.data.shape))

    return _make(out, (a,), bwd)


def sum_axis(a, axis: int, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        ge = g if keepdims else np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(ge, a.data.shape))

    return _make(out, (a,), bwd)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def bwd(g):
        _accum(a, g * (a.data > 0.0))

    return _make(out, (a,), bwd)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - out * out))

    return _make(out, (a,), bwd)


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / a.data

    def bwd(g):
        _accum(a, -g * out * out)

    return _make(out, (a,), bwd)


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)

    def bwd(g):
        _accum(a, g / a.data)

    return _make(out, (a,), bwd)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def bwd(g):
        _accum(a, g / (2.0 * out))

    return _make(out, (a,), bwd)


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "elementwise-multiply": multiply,
    "scalar-scale": scale,
    "concat-last-axis": lambda *ts: concat_last(ts),
    "gather-rows": gather_rows,
    "mean-over-axis": mean_axis,
    "relu": relu,
    "tanh": tanh,
    "reciprocal": reciprocal,
    "log": log,
    "square-root": sqrt,
}


def apply_primitive(op_id: str, *inputs, **attrs) -> Tensor:
    """Dispatch by operation name; unknown names raise."""
    fn = _PRIMITIVES.get(op_id)
    if fn is None:
        raise ValueError(f"unknown primitive '{op_id}'")
    return fn(*inputs, **attrs)


# ---------------------------------------------------------------------------
# Structural helpers (outside the dispatch table)
# ---------------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(out, (a,), bwd)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = a.data.transpose(axes)

    def bwd(g):
        _accum(a, g.transpose(inv))

    return _make(out, (a,), bwd)


def solve(a, b) -> Tensor:
    """x with a @ x = b; gradients via the transposed system."""
    a, b = as_tensor(a), as_tensor(b)
    out = np.linalg.solve(a.data, b.data)

    def bwd(g):
        gb = np.linalg.solve(np.swapaxes(a.data, -1, -2), g)
        ga = -gb @ np.swapaxes(out, -1, -2)
        _accum(a, _sum_to_shape(ga, a.data.shape))
        _accum(b, _sum_to_shape(gb, b.data.shape))

    return _make(out, (a, b), bwd)


def fused_dense(xs, weights, bias, relu_out: bool = True) -> Tensor:
    """sum_i xs[i] @ weights[i] + bias, optionally through relu, as one node.

    Each x is (..., d_i) with broadcast-compatible leading shapes; weights are
    (d_i, h) and bias (h,).  One of the inputs must already carry the full
    broadcast shape, which every caller in this package satisfies.  Fusing the
    chain avoids materializing the intermediate sums on large edge tensors.
    """
    xs = [as_tensor(x) for x in xs]
    ws = [as_tensor(w) for w in weights]
    b = as_tensor(bias)
    h = ws[0].data.shape[1]
    flats, parts, leads = [], [], []
    for x, w in zip(xs, ws):
        lead = x.data.shape[:-1]
        flat = x.data.reshape(-1, x.data.shape[-1])
        flats.append(flat)
        parts.append((flat @ w.data).reshape(lead + (h,)))
        leads.append(lead)
    full = np.broadcast_shapes(*leads) + (h,)
    base = next((i for i, p in enumerate(parts) if p.shape == full), None)
    out = parts[base] if base is not None else np.zeros(full)
    for i, p in enumerate(parts):
        if i != base:
            out += p
    out += b.data
    if relu_out:
        np.maximum(out, 0.0, out=out)

    def bwd(g):
        gz = g * (out > 0.0) if relu_out else g
        for x, w, flat, lead in zip(xs, ws, flats, leads):
            gx = _sum_to_shape(gz, lead + (h,))
            gflat = gx.reshape(-1, h)
            _accum(x, (gflat @ w.data.T).reshape(x.data.shape))
            _accum(w, flat.T @ gflat)
        _accum(b, _sum_to_shape(gz, b.data.shape))

    return _make(out, tuple(xs) + tuple(ws) + (b,), bwd)


def masked_softmax(logits, mask) -> Tensor:
    """Softmax over the last axis restricted to mask-true positions.

    Masked positions get probability exactly 0; at least one position per
    row must be unmasked.
    """
    logits = as_tensor(logits)
    m = np.broadcast_to(np.asarray(mask, dtype=bool), logits.data.shape)
    if not m.any(axis=-1).all():
        raise ValueError("masked softmax: no feasible choice")
    z = np.where(m, logits.data, MASK_NEG)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    p[~m] = 0.0

    def bwd(g):
        gl = p * (g - (g * p).sum(axis=-1, keepdims=True))
        _accum(logits, gl)

    return _make(p, (logits,), bwd)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(param) into every Parameter on the tape.

    Repeated calls on the same root add their contributions.
    """
    if root.data.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")
    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    for t in topo:
        t.grad = None
    root.grad = np.ones_like(root.data)
    for t in reversed(topo):
        if t.grad is None:
            continue
        if t._bwd is not None:
            t._bwd(t.grad)
        if t.param is not None:
            t.param.grad += t.grad.reshape(t.param.grad.shape)


# ---------------------------------------------------------------------------
# Parameters, optimizer, checkpoints
# ---------------------------------------------------------------------------

class Parameter:
    """Named trainable array with gradient and Adam moment buffers."""

    __slots__ = ("name", "value", "grad", "m1", "m2", "step")

    def __init__(self, name: str, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m1 = np.zeros_like(self.value)
        self.m2 = np.zeros_like(self.value)
        self.step = 0

    def tensor(self) -> Tensor:
        """Leaf tensor sharing this parameter's memory."""
        return Tensor(self.value, param=self)


class ParameterStore:
    """Ordered name -> Parameter map; iteration follows insertion order."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def create(self, name: str, value) -> Parameter:
        if name in self._params:
            raise ValueError(f"parameter '{name}' already exists")
        p = Parameter(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def n_values(self) -> int:
        return sum(p.value.size for p in self)

    def zero_grads(self) -> None:
        for p in self:
            p.grad[...] = 0.0

    def grad_norm(self) -> float:
        total = 0.0
        for p in self:
            total += float((p.grad * p.grad).sum())
        return float(np.sqrt(total))

    def clip_grad_norm(self, cap: float) -> float:
        norm = self.grad_norm()
        if norm > cap > 0.0:
            f = cap / norm
            for p in self:
                p.grad *= f
        return norm

    def load_from(self, other: "ParameterStore") -> None:
        """Copy values/moments in place; names and shapes must match."""
        if self.names() != other.names():
            raise ValueError("parameter stores have different names")
        for mine, theirs in zip(self, other):
            if mine.value.shape != theirs.value.shape:
                raise ValueError(f"shape mismatch for '{mine.name}'")
            mine.value[...] = theirs.value
            mine.grad[...] = theirs.grad
            mine.m1[...] = theirs.m1
            mine.m2[...] = theirs.m2
            mine.step = theirs.step


def adam_step(store: ParameterStore, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Standard Adam with bias correction; zeroes gradients afterwards."""
    for p in store:
        if not np.isfinite(p.grad).all():
            raise FloatingPointError(f"non-finite gradient for parameter '{p.name}'")
        p.step += 1
        p.m1 *= beta1
        p.m1 += (1.0 - beta1) * p.grad
        p.m2 *= beta2
        p.m2 += (1.0 - beta2) * p.grad * p.grad
        mhat = p.m1 / (1.0 - beta1 ** p.step)
        vhat = p.m2 / (1.0 - beta2 ** p.step)
        p.value -= lr * mhat / (np.sqrt(vhat) + eps)
        p.grad[...] = 0.0


# Checkpoint layout (little-endian): magic "MACP", u32 version, u32 n_sections;
# each section: u32 name length, name bytes, u32 n_params; each parameter:
# u32 name length, name bytes, u32 ndim, u32 dims..., u64 step, then three
# float64 payloads (value, m1, m2).  Round-trips are bit-exact.

_MAGIC = b"MACP"


def save_checkpoint(path, stores: dict[str, ParameterStore]) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", 1, len(stores)))
        for sec_name, store in stores.items():
            raw = sec_name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", len(store)))
            for p in store:
                raw = p.name.encode()
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", p.value.ndim))
                fh.write(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
                fh.write(struct.pack("<Q", p.step))
                for arr in (p.value, p.m1, p.m2):
                    fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> dict[str, ParameterStore]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, n_sections = struct.unpack("<II", fh.read(8))
        if version != 1:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        out: dict[str, ParameterStore] = {}
        for _ in range(n_sections):
            (nlen,) = struct.unpack("<I", fh.read(4))
            sec_name = fh.read(nlen).decode()
            (n_params,) = struct.unpack("<I", fh.read(4))
            store = ParameterStore()
            for _ in range(n_params):
                (nlen,) = struct.unpack("<I", fh.read(4))
                pname = fh.read(nlen).decode()
                (ndim,) = struct.unpack("<I", fh.read(4))
                shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
                (step,) = struct.unpack("<Q", fh.read(8))
                count = int(np.prod(shape)) if shape else 1
                bufs = []
                for _ in range(3):
                    bufs.append(np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape))
                p = store.create(pname, bufs[0])
                p.m1[...] = bufs[1]
                p.m2[...] = bufs[2]
                p.step = step
            out[sec_name] = store
        return out
