"""Minimal dense tensor with reverse-mode autodiff on an explicit tape.

Values are numpy arrays (float64 by default, float32 available); the tape
records one forward pass and is reset explicitly.  Repeated backward calls
on the same tape accumulate into leaf gradients.
"""

from __future__ import annotations

import struct

import numpy as np

DEFAULT_DTYPE = np.float64

_TAPES: list["Tape"] = []


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class MissingGradientError(RuntimeError):
    """An optimizer step was asked for parameters that have no gradient."""


class Tape:
    """Records ops of one forward pass; reversed for backprop."""

    def __init__(self):
        self._ops = []            # (out, inputs, backward_fn)
        self._produced = set()    # ids of tensors created on this tape

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def __len__(self):
        return len(self._ops)

    def reset(self):
        self._ops.clear()
        self._produced.clear()


def _active_tape():
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """Dense n-d value, immutable after construction (data is not written by ops)."""

    __array_priority__ = 100  # keep numpy from hijacking reflected operators

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
        if not arr.flags["C_CONTIGUOUS"]:  # keep row-major without promoting 0-d
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all routed through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _make(data, inputs, backward_fn):
    """Create the op output and record it on the active tape."""
    out = Tensor(data, dtype=data.dtype)
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        out._tape = tape
        tape._ops.append((out, inputs, backward_fn))
        tape._produced.add(id(out))
    return out


def _unbroadcast(grad, shape):
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor):
    """Backpropagate from a scalar loss, adding dLoss/dLeaf into each leaf .grad.

    A second call on the same (un-reset) tape adds the same gradients again.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    tape = loss._tape
    if tape is None:
        raise RuntimeError("loss was not recorded on a tape (wrap the forward pass in `with Tape():`)")
    # per-walk accumulators for intermediates; leaves receive into .grad directly
    acc = {id(loss): np.ones_like(loss.data)}
    for out, inputs, fn in reversed(tape._ops):
        g = acc.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, fn(g)):
            if gi is None or not t.requires_grad:
                continue
            if id(t) in tape._produced:
                prev = acc.get(id(t))
                acc[id(t)] = gi if prev is None else prev + gi
            else:
                t.grad = gi.copy() if t.grad is None else t.grad + gi


# ----------------------------------------------------------------------------
# elementwise / reduction ops
# ----------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def neg(a):
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.data.shape),
                            _unbroadcast(g * a.data, b.data.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data / b.data, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.data.shape),
                            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)))


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a):
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = as_tensor(a)
    y = np.sqrt(a.data)
    return _make(y, (a,), lambda g: (g / (2.0 * y),))


def square(a):
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def sin(a):
    a = as_tensor(a)
    return _make(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a):
    a = as_tensor(a)
    return _make(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _make(np.asarray(y), (a,), bw)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ----------------------------------------------------------------------------
# shape ops
# ----------------------------------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    old = a.data.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.data.ndim)))
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def swapaxes(a, ax1, ax2):
    a = as_tensor(a)
    return _make(np.swapaxes(a.data, ax1, ax2), (a,),
                 lambda g: (np.swapaxes(g, ax1, ax2),))


def concat(tensors, axis=0):
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bw)


def gather(a, indices, axis=0):
    """Select rows along axis 0; differentiable w.r.t. the values (scatter-add)."""
    if axis != 0:
        raise ShapeError("gather supports axis=0 only; transpose first")
    a = as_tensor(a)
    idx = np.asarray(indices)
    y = a.data[idx]

    def bw(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx.reshape(-1), g.reshape((-1,) + a.data.shape[1:]))
        return (ga, None)

    return _make(y, (a, Tensor(idx.astype(np.float64))), bw)


# ----------------------------------------------------------------------------
# linear algebra / nn ops
# ----------------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner extents disagree: {a.data.shape} vs {b.data.shape}")
    try:
        y = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"matmul batch extents not broadcastable: {a.data.shape} vs {b.data.shape}") from e

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape))

    return _make(y, (a, b), bw)


def softmax(a, axis=-1):
    """Max-stabilized softmax; output sums to 1 along `axis`."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _make(y, (a,), bw)


def layer_norm(a, gain=None, bias=None, eps=1e-5):
    """Normalize over the last axis; optional learned gain/bias."""
    a = as_tensor(a)
    n = a.data.shape[-1]
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    inputs = [a]
    if gain is not None:
        gain = as_tensor(gain)
        inputs.append(gain)
    if bias is not None:
        bias = as_tensor(bias)
        inputs.append(bias)

    y = xhat
    if gain is not None:
        y = y * gain.data
    if bias is not None:
        y = y + bias.data

    def bw(g):
        gxhat = g * gain.data if gain is not None else g
        gx = inv / n * (n * gxhat
                        - gxhat.sum(axis=-1, keepdims=True)
                        - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True))
        grads = [gx]
        if gain is not None:
            grads.append(_unbroadcast(g * xhat, gain.data.shape))
        if bias is not None:
            grads.append(_unbroadcast(g, bias.data.shape))
        return tuple(grads)

    return _make(y, tuple(inputs), bw)


def bilinear_sample(grid, coords):
    """Sample grid (H, W, C) at coords (K, 2) given as (x, y) in grid units.

    Returns (values (K, C), out_of_view (K,) bool).  Out-of-view coordinates
    (outside [0, W-1] x [0, H-1]) yield a zero vector and a set flag instead
    of an error.  Differentiable w.r.t. grid and coords inside bounds.
    """
    grid, coords = as_tensor(grid), as_tensor(coords)
    if grid.data.ndim != 3 or coords.data.ndim != 2 or coords.data.shape[1] != 2:
        raise ShapeError(f"bilinear_sample expects grid (H,W,C) and coords (K,2), "
                         f"got {grid.data.shape} and {coords.data.shape}")
    H, W, C = grid.data.shape
    x = coords.data[:, 0]
    y = coords.data[:, 1]
    inside = (x >= 0) & (x <= W - 1) & (y >= 0) & (y <= H - 1) & np.isfinite(x) & np.isfinite(y)
    out_of_view = ~inside

    xs = np.clip(np.where(inside, x, 0.0), 0, W - 1)
    ys = np.clip(np.where(inside, y, 0.0), 0, H - 1)
    x0 = np.minimum(np.floor(xs), W - 2).astype(int) if W > 1 else np.zeros(len(xs), int)
    y0 = np.minimum(np.floor(ys), H - 2).astype(int) if H > 1 else np.zeros(len(ys), int)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = xs - x0
    fy = ys - y0

    c00 = grid.data[y0, x0]
    c01 = grid.data[y0, x1]
    c10 = grid.data[y1, x0]
    c11 = grid.data[y1, x1]
    w00 = ((1 - fx) * (1 - fy))[:, None]
    w01 = (fx * (1 - fy))[:, None]
    w10 = ((1 - fx) * fy)[:, None]
    w11 = (fx * fy)[:, None]
    vals = w00 * c00 + w01 * c01 + w10 * c10 + w11 * c11
    vals[out_of_view] = 0.0

    def bw(g):
        g = g.copy()
        g[out_of_view] = 0.0
        ggrid = np.zeros_like(grid.data)
        np.add.at(ggrid, (y0, x0), g * w00)
        np.add.at(ggrid, (y0, x1), g * w01)
        np.add.at(ggrid, (y1, x0), g * w10)
        np.add.at(ggrid, (y1, x1), g * w11)
        dvdx = ((c01 - c00) * (1 - fy)[:, None] + (c11 - c10) * fy[:, None])
        dvdy = ((c10 - c00) * (1 - fx)[:, None] + (c11 - c01) * fx[:, None])
        gcoords = np.stack([(g * dvdx).sum(axis=1), (g * dvdy).sum(axis=1)], axis=1)
        gcoords[out_of_view] = 0.0
        return (ggrid, gcoords)

    return _make(vals, (grid, coords), bw), out_of_view


# ----------------------------------------------------------------------------
# parameters, optimizer, checkpoints
# ----------------------------------------------------------------------------

class ParamStore:
    """Ordered, named parameter set with its init RNG and Adam state."""

    def __init__(self, seed=0, dtype=DEFAULT_DTYPE):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.rng = np.random.Generator(np.random.PCG64(self.seed))
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name, data):
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=True, dtype=self.dtype)
        self.params[name] = t
        return t

    def uniform(self, name, shape, lo, hi):
        return self.add(name, self.rng.uniform(lo, hi, size=shape))

    def linear_init(self, name, fan_in, shape):
        """uniform(-sqrt(1/fan_in), +sqrt(1/fan_in))"""
        b = np.sqrt(1.0 / fan_in)
        return self.uniform(name, shape, -b, b)

    def xavier_init(self, name, fan_in, fan_out, shape):
        b = np.sqrt(6.0 / (fan_in + fan_out))
        return self.uniform(name, shape, -b, b)

    def zeros(self, name, shape):
        return self.add(name, np.zeros(shape))

    def ones(self, name, shape):
        return self.add(name, np.ones(shape))

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params.keys())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def adam_step(params: ParamStore, grads=None, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, step=None):
    """One Adam update with bias correction; m/v state lives in the store.

    grads: optional mapping name -> ndarray; defaults to each param's .grad.
    """
    b1, b2 = betas
    if step is None:
        params.step += 1
        step = params.step
    else:
        params.step = step
    missing = []
    for name, p in params.params.items():
        g = grads.get(name) if grads is not None else p.grad
        if g is None:
            missing.append(name)
    if missing:
        raise MissingGradientError(f"no gradient for parameters: {', '.join(missing)}")
    for name, p in params.params.items():
        g = np.asarray(grads.get(name) if grads is not None else p.grad)
        m = params.adam_m.get(name)
        v = params.adam_v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        params.adam_m[name] = m
        params.adam_v[name] = v
        mhat = m / (1 - b1 ** step)
        vhat = v / (1 - b2 ** step)
        p.data = p.data - lr * mhat / (np.sqrt(vhat) + eps)
    return params


def gradcheck(closure, inputs, eps=1e-5):
    """Max over coordinates of |analytic - numeric| / max(1, |numeric|).

    closure maps the given input Tensors to a scalar Tensor; numeric gradients
    are central finite differences with step eps.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with Tape():
        out = closure(*inputs)
        backward(out)
    worst = 0.0
    for t in inputs:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = closure(*inputs).data.item()
            flat[i] = orig - eps
            lo = closure(*inputs).data.item()
            flat[i] = orig
            numeric = (hi - lo) / (2 * eps)
            err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


# checkpoint layout: magic, version u32, seed i64, dtype u8, count u32,
# then per entry: name_len u32, name utf-8, rank u32, extents u32*rank, raw LE data.
_CKPT_MAGIC = b"PKCK"
_CKPT_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_ADAM_M = "__adam_m__:"
_ADAM_V = "__adam_v__:"
_ADAM_STEP = "__adam_step__"


def save_checkpoint(params: ParamStore, path):
    entries = [(name, p.data) for name, p in params.params.items()]
    for name, m in params.adam_m.items():
        entries.append((_ADAM_M + name, m))
    for name, v in params.adam_v.items():
        entries.append((_ADAM_V + name, v))
    entries.append((_ADAM_STEP, np.array(float(params.step))))
    dt = _CODE_DTYPES[_DTYPE_CODES[params.dtype]]
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<IqBI", _CKPT_VERSION, params.seed, _DTYPE_CODES[params.dtype], len(entries)))
        for name, arr in entries:
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            for ext in arr.shape:
                f.write(struct.pack("<I", ext))
            f.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def load_checkpoint(path) -> ParamStore:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        version, seed, dcode, count = struct.unpack("<IqBI", f.read(17))
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        dt = _CODE_DTYPES[dcode]
        store = ParamStore(seed=seed, dtype=np.float64 if dcode == 0 else np.float32)
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            extents = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
            n = int(np.prod(extents)) if extents else 1
            arr = np.frombuffer(f.read(n * dt.itemsize), dtype=dt).reshape(extents).astype(store.dtype)
            if name == _ADAM_STEP:
                store.step = int(arr)
            elif name.startswith(_ADAM_M):
                store.adam_m[name[len(_ADAM_M):]] = arr.copy()
            elif name.startswith(_ADAM_V):
                store.adam_v[name[len(_ADAM_V):]] = arr.copy()
            else:
                store.add(name, arr)
    return store
