"""Minimal reverse-mode autodiff on numpy arrays.

A :class:`Tape` records primitive applications while it is active; calling
:meth:`Tape.backward` on a scalar loss accumulates gradients into every
reachable :class:`Parameter`.  The primitive set is exactly what the model
and losses need: element-wise arithmetic, reductions, matmul, shape ops,
1-D/2-D convolutions, framing/overlap-add, the wrapped-phase map, and the
principal-angle distance.

Sessions are single-owner: one tape and its tensors belong to one thread.
Forward math is plain numpy with sequential reductions, so results are
bit-identical across runs for identical inputs.
"""

from __future__ import annotations

import math

import numpy as np


class AutodiffError(ValueError):
    """Raised for shape mismatches and misuse of the tape."""


class Tensor:
    """A real-valued array plus a flag marking participation in gradients."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar -----------------------------------------------------
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

    def __pow__(self, p):
        return power(self, p)


class Parameter(Tensor):
    """Trainable tensor with an accumulated gradient buffer and stable name."""

    __slots__ = ("grad", "name")

    def __init__(self, data, name: str, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.grad = np.zeros_like(self.data)
        self.name = name

    def zero_grad(self):
        self.grad[...] = 0.0

    def astype(self, dtype) -> "Parameter":
        return Parameter(self.data.astype(dtype), self.name)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


_active_tape: "Tape | None" = None


class Tape:
    """Ordered record of primitive applications for one backward pass."""

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._outer: Tape | None = None

    def __enter__(self):
        global _active_tape
        self._outer = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._outer
        return False

    def __len__(self):
        return len(self._records)

    def backward(self, loss: Tensor):
        """Accumulate d(loss)/d(parameter) into every reachable Parameter."""
        if loss.size != 1:
            raise AutodiffError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        params: dict[int, Parameter] = {}
        if isinstance(loss, Parameter):
            params[id(loss)] = loss
        for out, inputs, vjp in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for t, gi in zip(inputs, vjp(g)):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if isinstance(t, Parameter):
                    params[key] = t
        for key, p in params.items():
            if key in grads:
                p.grad += grads[key]


class pause_tape:
    """Context manager suspending recording (for constant side computations)."""

    def __enter__(self):
        global _active_tape
        self._saved = _active_tape
        _active_tape = None
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._saved
        return False


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(out_data, inputs: tuple[Tensor, ...], make_vjp) -> Tensor:
    """Wrap a primitive result, recording it when a tape is active."""
    out = Tensor(out_data)
    if _active_tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _active_tape._records.append((out, inputs, make_vjp()))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(name: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise AutodiffError(
            f"{name}: shapes {a.shape} and {b.shape} do not broadcast"
        ) from None


# ---------------------------------------------------------------------------
# element-wise primitives
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _emit(
        a.data + b.data,
        (a, b),
        lambda: lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _emit(
        a.data - b.data,
        (a, b),
        lambda: lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def make():
        ad, bd = a.data, b.data
        need_a, need_b = a.requires_grad, b.requires_grad
        return lambda g: (
            _unbroadcast(g * bd, a.shape) if need_a else None,
            _unbroadcast(g * ad, b.shape) if need_b else None,
        )

    return _emit(a.data * b.data, (a, b), make)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out_data = a.data / b.data

    def make():
        ad, bd = a.data, b.data
        return lambda g: (
            _unbroadcast(g / bd, a.shape),
            _unbroadcast(-g * ad / (bd * bd), b.shape),
        )

    return _emit(out_data, (a, b), make)


def neg(a):
    a = as_tensor(a)
    return _emit(-a.data, (a,), lambda: lambda g: (-g,))


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return _emit(out_data, (a,), lambda: lambda g: (g * out_data,))


def log(a):
    a = as_tensor(a)
    return _emit(np.log(a.data), (a,), lambda: lambda g: (g / a.data,))


def absolute(a):
    a = as_tensor(a)
    return _emit(np.abs(a.data), (a,), lambda: lambda g: (g * np.sign(a.data),))


def cos(a):
    a = as_tensor(a)
    return _emit(np.cos(a.data), (a,), lambda: lambda g: (-g * np.sin(a.data),))


def sin(a):
    a = as_tensor(a)
    return _emit(np.sin(a.data), (a,), lambda: lambda g: (g * np.cos(a.data),))


def tanh(a):
    a = as_tensor(a)
    out_data = np.tanh(a.data)
    return _emit(out_data, (a,), lambda: lambda g: (g * (1.0 - out_data * out_data),))


def power(a, p: float):
    a = as_tensor(a)
    p = float(p)
    return _emit(
        a.data**p, (a,), lambda: lambda g: (g * p * a.data ** (p - 1.0),)
    )


def sqrt(a):
    return power(a, 0.5)


def leaky_relu(a, slope: float = 0.1):
    a = as_tensor(a)
    out_data = np.where(a.data >= 0, a.data, slope * a.data)

    def make():
        mask = np.where(a.data >= 0, 1.0, slope)
        return lambda g: (g * mask,)

    return _emit(out_data, (a,), make)


def relu(a):
    return leaky_relu(a, 0.0)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a):
    """GELU with the tanh approximation (smooth, finite-difference friendly)."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def make():
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        return lambda g: (g * local,)

    return _emit(out_data, (a,), make)


def wrapped_phase(r, i, eps: float = 1e-30):
    """Phase in (-pi, pi] of a pseudo-complex pair, gradient of arctan(i/r).

    The half-plane sign corrections are piecewise constant, so the gradient
    is the arctangent's: d/dr = -i / (r^2 + i^2), d/di = r / (r^2 + i^2).
    """
    r, i = as_tensor(r), as_tensor(i)
    _check_broadcast("wrapped_phase", r, i)
    rd, id_ = r.data, i.data
    sgn_i = np.where(id_ >= 0, 1.0, -1.0)
    sgn_r = np.where(rd >= 0, 1.0, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = np.arctan(id_ / rd) - 0.5 * np.pi * sgn_i * (sgn_r - 1.0)
    out_data = np.where((rd == 0) & (id_ == 0), 0.0, out_data)
    pi_val = out_data.dtype.type(np.pi)
    out_data = np.where(out_data == -pi_val, pi_val, out_data)

    def make():
        denom = rd * rd + id_ * id_ + eps
        return lambda g: (
            _unbroadcast(-g * id_ / denom, r.shape),
            _unbroadcast(g * rd / denom, i.shape),
        )

    return _emit(out_data, (r, i), make)


def anti_wrap(a):
    """Principal-value angular distance |x - 2*pi*round(x / 2*pi)|."""
    a = as_tensor(a)
    y = a.data / (2.0 * np.pi)
    wrapped = a.data - 2.0 * np.pi * np.trunc(y + np.copysign(0.5, y))
    return _emit(
        np.abs(wrapped), (a,), lambda: lambda g: (g * np.sign(wrapped),)
    )


def clamp_min(a, floor: float):
    """max(x, floor) built from relu; gradient passes where x > floor."""
    return relu(sub(a, floor)) + floor


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def _restore_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape).copy() if np.ndim(g) == 0 else np.full(shape, g)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims: bool = False):
    a = as_tensor(a)
    out_data = np.sum(a.data, axis=axis, keepdims=keepdims)
    return _emit(
        out_data,
        (a,),
        lambda: lambda g: (
            np.ascontiguousarray(_restore_reduced(g, a.shape, axis, keepdims)),
        ),
    )


def mean(a, axis=None, keepdims: bool = False):
    a = as_tensor(a)
    out_data = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.size if axis is None else a.shape[axis]

    def make():
        return lambda g: (
            np.ascontiguousarray(_restore_reduced(g, a.shape, axis, keepdims)) / count,
        )

    return _emit(out_data, (a,), make)


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise AutodiffError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def make():
        ad, bd = a.data, b.data
        need_a, need_b = a.requires_grad, b.requires_grad
        return lambda g: (
            g @ bd.T if need_a else None,
            ad.T @ g if need_b else None,
        )

    return _emit(a.data @ b.data, (a, b), make)


def reshape(a, shape):
    a = as_tensor(a)
    return _emit(
        a.data.reshape(shape), (a,), lambda: lambda g: (g.reshape(a.shape),)
    )


def transpose(a, axes=None):
    a = as_tensor(a)
    perm = tuple(axes) if axes is not None else tuple(range(a.ndim))[::-1]
    inv = tuple(np.argsort(perm))
    return _emit(
        np.transpose(a.data, perm), (a,), lambda: lambda g: (np.transpose(g, inv),)
    )


def concat(tensors, axis: int = 0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise AutodiffError("concat: need at least one tensor")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def make():
        return lambda g: tuple(np.split(g, splits, axis=axis))

    return _emit(out_data, tuple(tensors), make)


def slice_(a, key):
    """Basic (non-overlapping) slicing; gradient scatters into a zero array."""
    a = as_tensor(a)
    out_data = a.data[key]

    def make():
        def vjp(g):
            gx = np.zeros_like(a.data)
            gx[key] = g
            return (gx,)

        return vjp

    return _emit(out_data, (a,), make)


def pad(a, left: int, right: int, mode: str = "constant"):
    """Pad the last axis. Reflect mode requires pad widths < axis length."""
    a = as_tensor(a)
    n = a.shape[-1]
    if mode == "reflect" and max(left, right) >= n:
        raise AutodiffError(
            f"pad: reflect padding ({left},{right}) needs axis length > pad, got {n}"
        )
    widths = [(0, 0)] * (a.ndim - 1) + [(left, right)]
    out_data = np.pad(a.data, widths, mode=mode)

    def make():
        def vjp(g):
            core = g[..., left : left + n].copy()
            if mode == "reflect":
                if left:
                    core[..., 1 : left + 1] += g[..., :left][..., ::-1]
                if right:
                    core[..., n - 1 - right : n - 1] += g[..., -right:][..., ::-1]
            return (core,)

        return vjp

    return _emit(out_data, (a,), make)


# ---------------------------------------------------------------------------
# framing / overlap-add
# ---------------------------------------------------------------------------


def _gather_frames(x: np.ndarray, length: int, hop: int) -> np.ndarray:
    count = (x.shape[-1] - length) // hop + 1
    idx = np.arange(length)[None, :] + hop * np.arange(count)[:, None]
    return x[idx]


def _scatter_frames(fr: np.ndarray, hop: int) -> np.ndarray:
    count, length = fr.shape
    out = np.zeros((count - 1) * hop + length, dtype=fr.dtype)
    if length % hop == 0:
        groups = length // hop
        for g0 in range(groups):
            sub = fr[g0::groups]
            start = g0 * hop
            out[start : start + sub.size] += sub.reshape(-1)
    else:
        for t in range(count):
            out[t * hop : t * hop + length] += fr[t]
    return out


def frame(a, length: int, hop: int):
    """Slide a window over a 1-D signal: [T] -> [frames, length]."""
    a = as_tensor(a)
    if a.ndim != 1 or a.shape[0] < length:
        raise AutodiffError(f"frame: need 1-D input of length >= {length}, got {a.shape}")
    return _emit(
        _gather_frames(a.data, length, hop),
        (a,),
        lambda: lambda g: (_pad_to(_scatter_frames(g, hop), a.shape[0]),),
    )


def _pad_to(x: np.ndarray, n: int) -> np.ndarray:
    return x if x.shape[0] == n else np.pad(x, (0, n - x.shape[0]))


def overlap_add(a, hop: int):
    """Sum overlapping frames: [frames, length] -> [(frames-1)*hop + length]."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise AutodiffError(f"overlap_add: need [frames, length], got {a.shape}")
    length = a.shape[1]
    return _emit(
        _scatter_frames(a.data, hop),
        (a,),
        lambda: lambda g: (_gather_frames(g, length, hop),),
    )


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------


def conv1d(x, w, b=None, *, stride: int = 1, padding: int = 0, dilation: int = 1,
           groups: int = 1):
    """1-D convolution over [C_in, T] with weight [C_out, C_in/groups, K]."""
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(b) if b is not None else None
    if x.ndim != 2 or w.ndim != 3:
        raise AutodiffError(f"conv1d: need x[C,T], w[O,I,K], got {x.shape}, {w.shape}")
    c_in, t_in = x.shape
    c_out, c_per, k = w.shape
    if c_per * groups != c_in or c_out % groups:
        raise AutodiffError(
            f"conv1d: groups={groups} incompatible with x{x.shape}, w{w.shape}"
        )
    t_out = (t_in + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    if t_out <= 0:
        raise AutodiffError(f"conv1d: non-positive output length for input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (padding, padding)))
    span = stride * (t_out - 1) + 1
    depthwise = groups == c_in and c_per == 1

    out_data = np.zeros((c_out, t_out), dtype=xp.dtype)
    if b is not None:
        out_data += b.data[:, None]
    o_per = c_out // groups
    for j in range(k):
        seg = xp[:, dilation * j : dilation * j + span : stride]
        if depthwise:
            out_data += w.data[:, 0, j][:, None] * seg
        elif groups == 1:
            out_data += w.data[:, :, j] @ seg
        else:
            for gi in range(groups):
                out_data[gi * o_per : (gi + 1) * o_per] += (
                    w.data[gi * o_per : (gi + 1) * o_per, :, j]
                    @ seg[gi * c_per : (gi + 1) * c_per]
                )

    def make():
        wd = w.data.copy()
        need_x, need_w = x.requires_grad, w.requires_grad

        def vjp(g):
            gxp = np.zeros_like(xp) if need_x else None
            gw = np.zeros_like(wd) if need_w else None
            for j in range(k):
                seg = xp[:, dilation * j : dilation * j + span : stride]
                dst = gxp[:, dilation * j : dilation * j + span : stride] \
                    if need_x else None
                if depthwise:
                    if need_w:
                        gw[:, 0, j] = (g * seg).sum(axis=1)
                    if need_x:
                        dst += wd[:, 0, j][:, None] * g
                elif groups == 1:
                    if need_w:
                        gw[:, :, j] = g @ seg.T
                    if need_x:
                        dst += wd[:, :, j].T @ g
                else:
                    for gi in range(groups):
                        go = g[gi * o_per : (gi + 1) * o_per]
                        sc = slice(gi * c_per, (gi + 1) * c_per)
                        if need_w:
                            gw[gi * o_per : (gi + 1) * o_per, :, j] = go @ seg[sc].T
                        if need_x:
                            dst[sc] += wd[gi * o_per : (gi + 1) * o_per, :, j].T @ go
            gx = None
            if need_x:
                gx = gxp[:, padding : padding + t_in] if padding else gxp
            gb = g.sum(axis=1) if (b is not None and b.requires_grad) else None
            return (gx, gw, gb) if b is not None else (gx, gw)

        return vjp

    inputs = (x, w, b) if b is not None else (x, w)
    return _emit(out_data, inputs, make)


def conv2d(x, w, b=None, *, stride=(1, 1), padding=(0, 0)):
    """2-D convolution over [C_in, H, W] with weight [C_out, C_in, KH, KW]."""
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(b) if b is not None else None
    if x.ndim != 3 or w.ndim != 4:
        raise AutodiffError(f"conv2d: need x[C,H,W], w[O,I,KH,KW], got {x.shape}, {w.shape}")
    c_in, h_in, w_in = x.shape
    c_out, c_in_w, kh, kw = w.shape
    if c_in_w != c_in:
        raise AutodiffError(f"conv2d: channel mismatch x{x.shape} vs w{w.shape}")
    sh, sw = stride
    ph, pw = padding
    h_out = (h_in + 2 * ph - kh) // sh + 1
    w_out = (w_in + 2 * pw - kw) // sw + 1
    if h_out <= 0 or w_out <= 0:
        raise AutodiffError(f"conv2d: non-positive output size for input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw)))
    hspan = sh * (h_out - 1) + 1

    # im2col with a W-phase split so every copy is over a contiguous last
    # axis even for strided-W convs; one GEMM covers all taps.
    if sw > 1:
        phases = [np.ascontiguousarray(xp[:, :, r::sw]) for r in range(sw)]
    else:
        phases = [xp]

    def tap(i, j):
        ph_arr = phases[j % sw]
        off = j // sw
        return ph_arr[:, i : i + hspan : sh, off : off + w_out]

    cols = np.empty((c_in, kh, kw, h_out, w_out), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = tap(i, j)
    cols_mat = cols.reshape(c_in * kh * kw, h_out * w_out)
    out_data = (w.data.reshape(c_out, -1) @ cols_mat).reshape(c_out, h_out, w_out)
    if b is not None:
        out_data += b.data[:, None, None]

    def make():
        wd = w.data.copy()
        need_x, need_w = x.requires_grad, w.requires_grad

        def vjp(g):
            gflat = g.reshape(c_out, -1)
            gw = (gflat @ cols_mat.T).reshape(wd.shape) if need_w else None
            gx = None
            if need_x:
                gcols = (wd.reshape(c_out, -1).T @ gflat).reshape(cols.shape)
                gphases = [np.zeros_like(p) for p in phases]
                for i in range(kh):
                    for j in range(kw):
                        off = j // sw
                        gphases[j % sw][:, i : i + hspan : sh,
                                        off : off + w_out] += gcols[:, i, j]
                if sw > 1:
                    gxp = np.zeros_like(xp)
                    for r in range(sw):
                        gxp[:, :, r::sw] = gphases[r]
                else:
                    gxp = gphases[0]
                gx = gxp[:, ph : ph + h_in, pw : pw + w_in] if (ph or pw) else gxp
            gb = g.sum(axis=(1, 2)) if (b is not None and b.requires_grad) else None
            return (gx, gw, gb) if b is not None else (gx, gw)

        return vjp

    inputs = (x, w, b) if b is not None else (x, w)
    return _emit(out_data, inputs, make)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(f, params, eps: float = 1e-5, sample: int | None = None, seed: int = 0):
    """Max relative error of reverse-mode gradients vs central differences.

    ``f`` must be a deterministic closure over ``params`` returning a scalar
    Tensor; run it in 64-bit.  ``sample`` limits the check to that many
    randomly chosen parameter elements across all parameters.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    sizes = np.array([p.size for p in params])
    bounds = np.cumsum(sizes)
    total = int(bounds[-1])
    if sample is not None and sample < total:
        rng = np.random.default_rng(seed)
        flat = np.sort(rng.choice(total, size=sample, replace=False))
    else:
        flat = np.arange(total)
    coords = []
    for f_idx in flat:
        pi = int(np.searchsorted(bounds, f_idx, side="right"))
        coords.append((pi, int(f_idx - (bounds[pi - 1] if pi else 0))))

    worst = 0.0
    for pi, idx in coords:
        p = params[pi]
        orig = p.data.flat[idx]
        p.data.flat[idx] = orig + eps
        f_plus = float(f().data)
        p.data.flat[idx] = orig - eps
        f_minus = float(f().data)
        p.data.flat[idx] = orig
        numeric = (f_plus - f_minus) / (2.0 * eps)
        an = float(analytic[pi].flat[idx])
        rel = abs(an - numeric) / max(abs(an), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
