"""Minimal reverse-mode autodiff with the layer set the converter needs.

Tensors record the operations that produced them (the tape); backward()
replays the records in reverse topological order exactly once, accumulating
gradients additively. Convolutions are evaluated as one GEMM per kernel
offset, which keeps peak memory at O(activation) instead of O(im2col) and
feeds BLAS well-shaped matrices.

Default compute precision is float32; gradient checks run the same code in
float64 (dtype follows the input).
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np


class TrainingError(RuntimeError):
    """Non-finite gradients or other unrecoverable optimizer state."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (frozen-network passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-D value with optional gradient storage and tape record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Reverse-mode sweep from this (scalar) tensor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # small operator surface for composing losses
    def __add__(self, other):
        return add(self, other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.dtype)))

    __radd__ = __add__

    def __mul__(self, scalar):
        return scale(self, float(scalar))

    __rmul__ = __mul__

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def _make(data, parents, backward):
    """Wrap an op result, recording the tape entry only when needed."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


class Parameter:
    """Trainable tensor plus its Adam state (m, v, step count)."""

    __slots__ = ("tensor", "m", "v", "t", "name")

    def __init__(self, data, name=""):
        arr = np.asarray(data, dtype=np.float32)
        self.tensor = Tensor(arr, requires_grad=True)
        self.m = np.zeros_like(arr)
        self.v = np.zeros_like(arr)
        self.t = 0
        self.name = name

    @property
    def data(self):
        return self.tensor.data

    @data.setter
    def data(self, value):
        self.tensor.data = value

    @property
    def grad(self):
        return self.tensor.grad


def uniform_init(rng, shape, fan_in):
    """Centered uniform with fan-in scaling."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out, (a, b), backward)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def scale(a: Tensor, k: float) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(g * k)

    return _make(a.data * k, (a,), backward)


def concat_channels(tensors) -> Tensor:
    """Concatenate along axis 1 (channels)."""
    out = np.concatenate([t.data for t in tensors], axis=1)
    sizes = [t.data.shape[1] for t in tensors]

    def backward(g):
        start = 0
        for t, c in zip(tensors, sizes):
            if t.requires_grad:
                t._accumulate(g[:, start:start + c])
            start += c

    return _make(out, tuple(tensors), backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, slope * x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.where(mask, g, slope * g))

    return _make(out, (x,), backward)


def glu(x: Tensor) -> Tensor:
    """Gated linear unit over the channel axis: first half * sigmoid(second)."""
    c = x.data.shape[1]
    if c % 2:
        raise ValueError("glu needs an even channel count")
    h = c // 2
    lin = x.data[:, :h]
    sig = 1.0 / (1.0 + np.exp(-x.data[:, h:]))
    out = lin * sig

    def backward(g):
        if x.requires_grad:
            gx = np.empty_like(x.data)
            gx[:, :h] = g * sig
            gx[:, h:] = g * lin * sig * (1.0 - sig)
            x._accumulate(gx)

    return _make(out, (x,), backward)


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel standardization over (h, w) with affine."""
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gsh = gamma.data.reshape(1, -1, 1, 1)
    out = xhat * gsh + beta.data.reshape(1, -1, 1, 1)

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gh = g * gsh
            m1 = gh.mean(axis=(2, 3), keepdims=True)
            m2 = (gh * xhat).mean(axis=(2, 3), keepdims=True)
            x._accumulate(inv * (gh - m1 - xhat * m2))

    return _make(out, (x, gamma, beta), backward)


def spatial_mean(x: Tensor) -> Tensor:
    """Global average pool: (n, c, h, w) -> (n, c)."""
    n, c, h, w = x.data.shape
    out = x.data.mean(axis=(2, 3))

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape).copy())

    return _make(out, (x,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x (n, k) @ w (k, m) + b (m,)."""
    out = x.data @ w.data + b.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.T @ g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))

    return _make(out, (x, w, b), backward)


# ---------------------------------------------------------------------------
# convolution primitives (one GEMM per kernel offset)
# ---------------------------------------------------------------------------

def _conv_out_size(size, k, s, p):
    return (size + 2 * p - k) // s + 1


# Above this the im2col buffer falls back to one GEMM per kernel offset.
_COL_BYTES_LIMIT = 256 * 1024 ** 2


def _pad_hw(x, ph, pw):
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x


def _im2col(xp, kh, kw, sh, sw):
    """Padded (n,c,hp,wp) -> contiguous (n, c*kh*kw, oh*ow)."""
    from numpy.lib.stride_tricks import sliding_window_view

    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    n, c, oh, ow = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * kh * kw, oh * ow)


def _col_bytes(n, c, kh, kw, oh, ow, itemsize):
    return n * c * kh * kw * oh * ow * itemsize


def _conv_fwd_raw(x, w, stride, padding):
    """Plain conv forward on arrays. x (n,c,h,w), w (f,c,kh,kw) -> (n,f,oh,ow)."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    oh = _conv_out_size(h, kh, sh, ph)
    ow = _conv_out_size(wd, kw, sw, pw)
    if oh <= 0 or ow <= 0:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{wd} with padding {padding}")
    xp = _pad_hw(x, ph, pw)
    if _col_bytes(n, c, kh, kw, oh, ow, x.itemsize) <= _COL_BYTES_LIMIT:
        col = _im2col(xp, kh, kw, sh, sw)
        out = np.matmul(w.reshape(f, c * kh * kw), col)
    else:
        # offset-major contiguous weights keep matmul on the BLAS fast path
        wt = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
        out = np.zeros((n, f, oh * ow), dtype=x.dtype)
        for di in range(kh):
            for dj in range(kw):
                xs = xp[:, :, di:di + sh * (oh - 1) + 1:sh, dj:dj + sw * (ow - 1) + 1:sw]
                out += np.matmul(wt[di, dj], np.ascontiguousarray(xs).reshape(n, c, oh * ow))
    return out.reshape(n, f, oh, ow)


def _conv_bwd_data_raw(g, w, stride, padding, x_shape):
    """Adjoint of _conv_fwd_raw w.r.t. x (also the transposed-conv forward)."""
    n, c, h, wd = x_shape
    f, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    _, _, oh, ow = g.shape
    gm = np.ascontiguousarray(g).reshape(n, f, oh * ow)
    dxp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw), dtype=g.dtype)
    if _col_bytes(n, c, kh, kw, oh, ow, g.itemsize) <= _COL_BYTES_LIMIT:
        gcol = np.matmul(w.reshape(f, c * kh * kw).T, gm)
        gcol = gcol.reshape(n, c, kh, kw, oh, ow)
        for di in range(kh):
            for dj in range(kw):
                dxp[:, :, di:di + sh * (oh - 1) + 1:sh,
                    dj:dj + sw * (ow - 1) + 1:sw] += gcol[:, :, di, dj]
    else:
        wt = np.ascontiguousarray(w.transpose(2, 3, 1, 0))  # (kh, kw, c, f)
        for di in range(kh):
            for dj in range(kw):
                contrib = np.matmul(wt[di, dj], gm).reshape(n, c, oh, ow)
                dxp[:, :, di:di + sh * (oh - 1) + 1:sh,
                    dj:dj + sw * (ow - 1) + 1:sw] += contrib
    if ph or pw:
        return np.ascontiguousarray(dxp[:, :, ph:ph + h, pw:pw + wd])
    return dxp


def _conv_bwd_weight_raw(g, x, stride, padding, w_shape):
    """Adjoint of _conv_fwd_raw w.r.t. w."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w_shape
    sh, sw = stride
    ph, pw = padding
    _, _, oh, ow = g.shape
    xp = _pad_hw(x, ph, pw)
    if _col_bytes(n, c, kh, kw, oh, ow, x.itemsize) <= _COL_BYTES_LIMIT:
        col = _im2col(xp, kh, kw, sh, sw)
        gm = g.reshape(n, f, oh * ow)
        dw = np.zeros((f, c * kh * kw), dtype=g.dtype)
        for i in range(n):  # batch loop bounds transient memory
            dw += gm[i] @ col[i].T
        return dw.reshape(w_shape)
    g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(f, n * oh * ow)
    dw = np.empty(w_shape, dtype=g.dtype)
    for di in range(kh):
        for dj in range(kw):
            xs = xp[:, :, di:di + sh * (oh - 1) + 1:sh, dj:dj + sw * (ow - 1) + 1:sw]
            xs2 = np.ascontiguousarray(xs.transpose(1, 0, 2, 3)).reshape(c, n * oh * ow)
            dw[:, :, di, dj] = g2 @ xs2.T
    return dw


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride=(1, 1), padding=(0, 0)) -> Tensor:
    """Strided 2-D convolution (cross-correlation), NCHW layout.

    out_h = floor((h + 2*ph - kh) / sh) + 1, likewise for width.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weight")
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(f"channel mismatch: input {x.data.shape[1]}, weight {w.data.shape[1]}")
    out = _conv_fwd_raw(x.data, w.data, stride, padding)
    if b is not None:
        out += b.data.reshape(1, -1, 1, 1)

    x_shape, w_shape = x.data.shape, w.data.shape

    def backward(g):
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            w._accumulate(_conv_bwd_weight_raw(g, x.data, stride, padding, w_shape))
        if x.requires_grad:
            x._accumulate(_conv_bwd_data_raw(g, w.data, stride, padding, x_shape))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, backward)


def conv2d_transpose(x: Tensor, w: Tensor, b: Tensor | None, stride=(1, 1),
                     padding=(0, 0), output_padding=(0, 0)) -> Tensor:
    """Transposed convolution, the adjoint of conv2d with matching settings.

    Weight layout (in_channels, out_channels, kh, kw);
    out_h = (h - 1)*sh - 2*ph + kh + oph.
    """
    if x.data.shape[1] != w.data.shape[0]:
        raise ValueError(f"channel mismatch: input {x.data.shape[1]}, weight {w.data.shape[0]}")
    sh, sw = stride
    oph, opw = output_padding
    if oph >= sh or opw >= sw:
        raise ValueError("output_padding must be smaller than stride")
    n, cin, h, wd = x.data.shape
    _, cout, kh, kw = w.data.shape
    ph, pw = padding
    hout = (h - 1) * sh - 2 * ph + kh + oph
    wout = (wd - 1) * sw - 2 * pw + kw + opw
    if hout <= 0 or wout <= 0:
        raise ValueError("transposed conv output collapses to zero size")

    # forward(convT) == backward-data of a conv (hout,wout)->(h,wd)
    out = _conv_bwd_data_raw(x.data, w.data, stride, padding, (n, cout, hout, wout))
    if b is not None:
        out += b.data.reshape(1, -1, 1, 1)

    def backward(g):
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            w._accumulate(_convT_bwd_weight(g, x.data, w.data.shape, stride, padding))
        if x.requires_grad:
            x._accumulate(_conv_fwd_raw(g, w.data, stride, padding))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, backward)


def _convT_bwd_weight(g, x, w_shape, stride, padding):
    """dW for conv2d_transpose: pair input x against padded output grad g."""
    cin, cout, kh, kw = w_shape
    n, _, h, wd = x.shape
    sh, sw = stride
    ph, pw = padding
    gp = _pad_hw(g, ph, pw)
    if _col_bytes(n, cout, kh, kw, h, wd, g.itemsize) <= _COL_BYTES_LIMIT:
        gcol = _im2col(gp, kh, kw, sh, sw)  # (n, cout*kh*kw, h*wd)
        xm = x.reshape(n, cin, h * wd)
        dw = np.zeros((cin, cout * kh * kw), dtype=g.dtype)
        for i in range(n):
            dw += xm[i] @ gcol[i].T
        return dw.reshape(w_shape)
    x2 = np.ascontiguousarray(x.transpose(1, 0, 2, 3)).reshape(cin, n * h * wd)
    dw = np.empty(w_shape, dtype=g.dtype)
    for di in range(kh):
        for dj in range(kw):
            gs = gp[:, :, di:di + sh * (h - 1) + 1:sh, dj:dj + sw * (wd - 1) + 1:sw]
            gs2 = np.ascontiguousarray(gs.transpose(1, 0, 2, 3)).reshape(cout, n * h * wd)
            dw[:, :, di, dj] = x2 @ gs2.T
    return dw


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def lsgan_d(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    """0.5*E[(real-1)^2] + 0.5*E[fake^2]."""
    dr = real_scores.data - 1.0
    out = 0.5 * np.mean(dr * dr) + 0.5 * np.mean(fake_scores.data ** 2)

    def backward(g):
        if real_scores.requires_grad:
            real_scores._accumulate(g * dr / dr.size)
        if fake_scores.requires_grad:
            fake_scores._accumulate(g * fake_scores.data / fake_scores.data.size)

    return _make(np.asarray(out, dtype=real_scores.dtype), (real_scores, fake_scores), backward)


def lsgan_g(fake_scores: Tensor) -> Tensor:
    """0.5*E[(fake-1)^2]."""
    df = fake_scores.data - 1.0
    out = 0.5 * np.mean(df * df)

    def backward(g):
        if fake_scores.requires_grad:
            fake_scores._accumulate(g * df / df.size)

    return _make(np.asarray(out, dtype=fake_scores.dtype), (fake_scores,), backward)


def cross_entropy(logits: Tensor, classes) -> Tensor:
    """Mean negative log-likelihood of integer classes under softmax(logits)."""
    classes = np.asarray(classes, dtype=np.int64).reshape(-1)
    n, k = logits.data.shape
    if classes.shape[0] != n:
        raise ValueError("class vector length must match batch size")
    if classes.min() < 0 or classes.max() >= k:
        raise ValueError(f"class index out of range for {k} classes")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    soft = ez / ez.sum(axis=1, keepdims=True)
    nll = -np.mean(np.log(soft[np.arange(n), classes] + 1e-38))

    def backward(g):
        if logits.requires_grad:
            d = soft.copy()
            d[np.arange(n), classes] -= 1.0
            logits._accumulate(g * d / n)

    return _make(np.asarray(nll, dtype=logits.dtype), (logits,), backward)


def l1(x: Tensor, y: Tensor) -> Tensor:
    """Mean absolute difference."""
    if x.data.shape != y.data.shape:
        raise ValueError("l1 operands must share a shape")
    d = x.data - y.data
    out = np.mean(np.abs(d))
    sign = np.sign(d)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * sign / d.size)
        if y.requires_grad:
            y._accumulate(-g * sign / d.size)

    return _make(np.asarray(out, dtype=x.dtype), (x, y), backward)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def adam_step(params, lr, beta1=0.5, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update in place; increments each step count."""
    for p in params:
        g = p.tensor.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter '{p.name}'")
        p.t += 1
        p.m += (1.0 - beta1) * (g - p.m)
        p.v += (1.0 - beta2) * (g * g - p.v)
        mhat = p.m / (1.0 - beta1 ** p.t)
        vhat = p.v / (1.0 - beta2 ** p.t)
        p.tensor.data -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.tensor.data.dtype)


def zero_grads(params):
    for p in params:
        p.tensor.grad = None


# ---------------------------------------------------------------------------
# parameterized layers
# ---------------------------------------------------------------------------

class Conv2d:
    def __init__(self, cin, cout, kernel, stride=(1, 1), padding=(0, 0), rng=None, name=""):
        kh, kw = kernel
        fan_in = cin * kh * kw
        self.w = Parameter(uniform_init(rng, (cout, cin, kh, kw), fan_in), name=f"{name}.w")
        self.b = Parameter(np.zeros(cout, dtype=np.float32), name=f"{name}.b")
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return conv2d(x, self.w.tensor, self.b.tensor, self.stride, self.padding)

    def params(self):
        return [self.w, self.b]


class ConvTranspose2d:
    def __init__(self, cin, cout, kernel, stride=(1, 1), padding=(0, 0),
                 output_padding=(0, 0), rng=None, name=""):
        kh, kw = kernel
        fan_in = cin * kh * kw
        self.w = Parameter(uniform_init(rng, (cin, cout, kh, kw), fan_in), name=f"{name}.w")
        self.b = Parameter(np.zeros(cout, dtype=np.float32), name=f"{name}.b")
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding

    def __call__(self, x):
        return conv2d_transpose(x, self.w.tensor, self.b.tensor, self.stride,
                                self.padding, self.output_padding)

    def params(self):
        return [self.w, self.b]


class InstanceNorm:
    def __init__(self, channels, name=""):
        self.gamma = Parameter(np.ones(channels, dtype=np.float32), name=f"{name}.gamma")
        self.beta = Parameter(np.zeros(channels, dtype=np.float32), name=f"{name}.beta")

    def __call__(self, x):
        return instance_norm(x, self.gamma.tensor, self.beta.tensor)

    def params(self):
        return [self.gamma, self.beta]


class Linear:
    def __init__(self, cin, cout, rng=None, name=""):
        self.w = Parameter(uniform_init(rng, (cin, cout), cin), name=f"{name}.w")
        self.b = Parameter(np.zeros(cout, dtype=np.float32), name=f"{name}.b")

    def __call__(self, x):
        return linear(x, self.w.tensor, self.b.tensor)

    def params(self):
        return [self.w, self.b]


# ---------------------------------------------------------------------------
# checkpoint chunk (STCK v1)
# ---------------------------------------------------------------------------

_STCK_MAGIC = b"STCK"
_STCK_VERSION = 1


def save_stck(path, params):
    """Write named parameters with shapes, f32 payloads and Adam state."""
    import struct as _struct

    with open(path, "wb") as fh:
        fh.write(_STCK_MAGIC)
        fh.write(_struct.pack("<II", _STCK_VERSION, len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            arr = np.ascontiguousarray(p.tensor.data, dtype="<f4")
            fh.write(_struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(_struct.pack("<B", arr.ndim))
            fh.write(_struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(_struct.pack("<I", p.t))
            fh.write(arr.tobytes())
            fh.write(np.ascontiguousarray(p.m, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(p.v, dtype="<f4").tobytes())


def load_stck(path):
    """Read an STCK v1 file into a dict name -> Parameter."""
    import struct as _struct

    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _STCK_MAGIC:
        raise ValueError(f"{path}: not an STCK file")
    version, count = _struct.unpack("<II", data[4:12])
    if version != _STCK_VERSION:
        raise ValueError(f"{path}: unsupported STCK version {version}")
    pos = 12
    out = {}
    for _ in range(count):
        (nlen,) = _struct.unpack("<H", data[pos:pos + 2]); pos += 2
        name = data[pos:pos + nlen].decode("utf-8"); pos += nlen
        (ndim,) = _struct.unpack("<B", data[pos:pos + 1]); pos += 1
        shape = _struct.unpack(f"<{ndim}I", data[pos:pos + 4 * ndim]); pos += 4 * ndim
        (t,) = _struct.unpack("<I", data[pos:pos + 4]); pos += 4
        size = int(np.prod(shape)) if ndim else 1
        nb = 4 * size
        val = np.frombuffer(data[pos:pos + nb], dtype="<f4").reshape(shape).copy(); pos += nb
        m = np.frombuffer(data[pos:pos + nb], dtype="<f4").reshape(shape).copy(); pos += nb
        v = np.frombuffer(data[pos:pos + nb], dtype="<f4").reshape(shape).copy(); pos += nb
        p = Parameter(val, name=name)
        p.m, p.v, p.t = m, v, t
        out[name] = p
    return out
