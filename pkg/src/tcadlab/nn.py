"""Minimal trainable layer engine with exact backpropagation.

Fixed layer menu (3x3/1x1 convolution, group normalization, swish, 2x
nearest-neighbor upsampling, 2x2 mean-pool downsampling, fully connected),
Adam, mean-squared-error, and a per-node Gaussian negative log-likelihood
whose variance output is parameterized as log(sigma^2).  Everything is
float64; every layer's backward is checked against central finite
differences in the test suite.

Tensors are plain numpy arrays shaped (batch, channels, height, width) for
spatial layers and (batch, features) for dense layers.
"""

from __future__ import annotations

import io
import json

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import NumericFailure


class Param:
    """A trainable array and its accumulated gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _require_finite(x: np.ndarray, where: str):
    if not np.all(np.isfinite(x)):
        raise NumericFailure(f"non-finite values after {where}")


class Layer:
    """Base class: forward caches what backward needs; backward accumulates
    parameter gradients and returns the gradient w.r.t. its input."""

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _im2col(x: np.ndarray, k: int, p: int) -> np.ndarray:
    """(B, C*k*k, H*W) column tensor of kxk patches (stride 1).

    For k=1/p=0 this is a free reshape; otherwise one cache-friendly copy
    (each (c, ki, kj) slab is a contiguous-row shifted view of the image).
    """
    b, c, h, w = x.shape
    if k == 1 and p == 0:
        return x.reshape(b, c, h * w)
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    h_out = h + 2 * p - k + 1
    w_out = w + 2 * p - k + 1
    sb, sc, sh, sw = xp.strides
    win = as_strided(xp, shape=(b, c, k, k, h_out, w_out),
                     strides=(sb, sc, sh, sw, sh, sw), writeable=False)
    return win.reshape(b, c * k * k, h_out * w_out)


class Conv2d(Layer):
    """Cross-correlation with bias, stride 1, as a cached-im2col batched
    GEMM.  Default 3x3 with padding 1; kernel 1 with padding 0 is used for
    heads and skip projections."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 3, pad: int | None = None,
                 rng: np.random.Generator | None = None, name: str = "conv",
                 zero_init: bool = False):
        if pad is None:
            pad = (kernel - 1) // 2
        self.c_in, self.c_out, self.kernel, self.pad = c_in, c_out, kernel, pad
        fan_in = c_in * kernel * kernel
        if zero_init:
            w = np.zeros((c_out, c_in, kernel, kernel))
        else:
            if rng is None:
                raise ValueError("Conv2d needs an rng unless zero_init")
            w = kaiming_uniform(rng, (c_out, c_in, kernel, kernel), fan_in)
        self.w = Param(f"{name}.w", w)
        self.b = Param(f"{name}.b", np.zeros(c_out))
        self._col = None
        self._shape = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train=True):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ValueError(
                f"conv2d expects (B, {self.c_in}, H, W), got {x.shape}")
        b, _, h, w = x.shape
        col = _im2col(x, self.kernel, self.pad)
        y = np.matmul(self.w.value.reshape(self.c_out, -1), col)
        y += self.b.value[None, :, None]
        if train:
            self._col, self._shape = col, x.shape
        return y.reshape(b, self.c_out, h, w)

    def backward(self, dy):
        b, _, h, w = self._shape
        k = self.kernel
        dyf = dy.reshape(b, self.c_out, h * w)
        self.w.grad += np.matmul(dyf, self._col.transpose(0, 2, 1)).sum(axis=0) \
                         .reshape(self.w.value.shape)
        self.b.grad += dyf.sum(axis=(0, 2))
        # dx: correlate dy with the spatially flipped, channel-transposed kernel
        dcol = _im2col(dy, k, k - 1 - self.pad)
        wrot = self.w.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        dx = np.matmul(wrot.reshape(self.c_in, -1), dcol)
        return dx.reshape(b, self.c_in, h, w)


class GroupNorm(Layer):
    """Per-(sample, group) standardization followed by a per-channel affine."""

    EPS = 1e-5

    def __init__(self, channels: int, groups: int, name: str = "gn"):
        if channels % groups != 0:
            raise ValueError(f"groups ({groups}) must divide channels ({channels})")
        self.channels, self.groups = channels, groups
        self.gamma = Param(f"{name}.gamma", np.ones(channels))
        self.beta = Param(f"{name}.beta", np.zeros(channels))
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x, train=True):
        b, c, h, w = x.shape
        g = self.groups
        xg = x.reshape(b, g, -1)
        mu = xg.mean(axis=2, keepdims=True)
        var = xg.var(axis=2, keepdims=True)
        invstd = 1.0 / np.sqrt(var + self.EPS)
        xhat = ((xg - mu) * invstd).reshape(b, c, h, w)
        y = xhat * self.gamma.value[None, :, None, None] + self.beta.value[None, :, None, None]
        if train:
            self._cache = (xhat, invstd, x.shape)
        return y

    def backward(self, dy):
        xhat, invstd, shape = self._cache
        b, c, h, w = shape
        g = self.groups
        self.gamma.grad += (dy * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += dy.sum(axis=(0, 2, 3))
        dxhat = (dy * self.gamma.value[None, :, None, None]).reshape(b, g, -1)
        xh = xhat.reshape(b, g, -1)
        n = dxhat.shape[2]
        s1 = dxhat.sum(axis=2, keepdims=True)
        s2 = (dxhat * xh).sum(axis=2, keepdims=True)
        dx = invstd / n * (n * dxhat - s1 - xh * s2)
        return dx.reshape(b, c, h, w)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp never overflows after the clip, and the clip is exact for |x| < 700
    return 1.0 / (1.0 + np.exp(-np.clip(x, -700.0, 700.0)))


class Swish(Layer):
    """f(x) = x * sigmoid(x)."""

    def __init__(self):
        self._cache = None

    def forward(self, x, train=True):
        s = sigmoid(x)
        if train:
            self._cache = (x, s)
        return x * s

    def backward(self, dy):
        x, s = self._cache
        return dy * (s * (1.0 + x * (1.0 - s)))


class Upsample2x(Layer):
    """Nearest-neighbor upsampling: doubles both spatial dimensions."""

    def forward(self, x, train=True):
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, dy):
        b, c, h, w = dy.shape
        return dy.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class Downsample2x(Layer):
    """2x2 mean-pool: halves both spatial dimensions (which must be even)."""

    def forward(self, x, train=True):
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"downsample2x needs even spatial dims, got {h}x{w}")
        return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(self, dy):
        return dy.repeat(2, axis=2).repeat(2, axis=3) * 0.25


class MeanPool(Layer):
    """Mean-pool by an integer factor per axis (used by the coordinate network)."""

    def __init__(self, factor: int):
        self.factor = factor

    def forward(self, x, train=True):
        f = self.factor
        b, c, h, w = x.shape
        if h % f or w % f:
            raise ValueError(f"mean-pool factor {f} does not divide {h}x{w}")
        return x.reshape(b, c, h // f, f, w // f, f).mean(axis=(3, 5))

    def backward(self, dy):
        f = self.factor
        return dy.repeat(f, axis=2).repeat(f, axis=3) / (f * f)


class Dense(Layer):
    """Affine map on (batch, features)."""

    def __init__(self, f_in: int, f_out: int, rng: np.random.Generator | None = None,
                 name: str = "fc", zero_init: bool = False):
        self.f_in, self.f_out = f_in, f_out
        if zero_init:
            w = np.zeros((f_out, f_in))
        else:
            if rng is None:
                raise ValueError("Dense needs an rng unless zero_init")
            w = kaiming_uniform(rng, (f_out, f_in), f_in)
        self.w = Param(f"{name}.w", w)
        self.b = Param(f"{name}.b", np.zeros(f_out))
        self._x = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train=True):
        if x.ndim != 2 or x.shape[1] != self.f_in:
            raise ValueError(f"dense expects (B, {self.f_in}), got {x.shape}")
        if train:
            self._x = x
        return x @ self.w.value.T + self.b.value

    def backward(self, dy):
        self.w.grad += dy.T @ self._x
        self.b.grad += dy.sum(axis=0)
        return dy @ self.w.value


class Sequential(Layer):
    def __init__(self, *layers: Layer):
        self.layers = list(layers)

    def params(self):
        return [p for l in self.layers for p in l.params()]

    def forward(self, x, train=True):
        for l in self.layers:
            x = l.forward(x, train=train)
        return x

    def backward(self, dy):
        for l in reversed(self.layers):
            dy = l.backward(dy)
        return dy


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


_LOGVAR_CLIP = 60.0


def gaussian_nll(y: np.ndarray, u: np.ndarray, log_var: np.ndarray):
    """Per-node Gaussian negative log-likelihood, averaged over all entries.

    loss = mean[ (y - u)^2 / (2 sigma^2) + log(sigma^2) / 2 ],
    sigma^2 = exp(log_var).  Returns (loss, dloss/du, dloss/dlog_var).
    """
    if not (y.shape == u.shape == log_var.shape):
        raise ValueError(f"shape mismatch {y.shape}, {u.shape}, {log_var.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(u)) and np.all(np.isfinite(log_var))):
        raise NumericFailure("gaussian_nll: non-finite inputs")
    lv = np.clip(log_var, -_LOGVAR_CLIP, _LOGVAR_CLIP)
    inv_var = np.exp(-lv)
    r = y - u
    n = y.size
    loss = float(np.mean(0.5 * r * r * inv_var + 0.5 * lv))
    du = -r * inv_var / n
    dlv = (0.5 - 0.5 * r * r * inv_var) / n
    dlv[log_var != lv] = 0.0
    return loss, du, dlv


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction; one moment pair per parameter."""

    def __init__(self, params: list[Param], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def adam_step(param: Param, state: Adam):
    """Single-parameter convenience wrapper used by tests."""
    state.step()
    return param.value


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(net, x, eps: float = 1e-5, n_coords: int = 200,
               seed: int = 0) -> float:
    """Max relative error of analytic gradients vs central finite
    differences over a random subset of coordinates.

    `net` must expose params(), forward(x, train=...), backward(dy); the
    scalar objective is a fixed random projection of the output.  Parameter
    coordinates are always sampled; when `x` is a single array, input
    coordinates are sampled too (this is what exercises parameter-free
    layers).
    """
    rng = np.random.default_rng(seed)
    y0 = net.forward(x, train=True)
    proj = rng.standard_normal(y0.shape)

    def objective():
        return float(np.sum(net.forward(x, train=False) * proj))

    params = net.params()
    for p in params:
        p.zero_grad()
    net.forward(x, train=True)
    dx = net.backward(proj.copy())

    check_input = isinstance(x, np.ndarray) and isinstance(dx, np.ndarray)
    coords = [("p", pi, fl) for pi, p in enumerate(params) for fl in range(p.value.size)]
    if check_input:
        coords += [("x", 0, fl) for fl in range(x.size)]
    if not coords:
        raise ValueError("nothing to check: no parameters and no input gradient")
    if len(coords) > n_coords:
        pick = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in pick]

    analytic = np.array([params[pi].grad.ravel()[fl] if kind == "p" else dx.ravel()[fl]
                         for kind, pi, fl in coords])
    numeric = np.empty_like(analytic)
    for i, (kind, pi, fl) in enumerate(coords):
        w = params[pi].value.ravel() if kind == "p" else x.ravel()
        old = w[fl]
        w[fl] = old + eps
        up = objective()
        w[fl] = old - eps
        dn = objective()
        w[fl] = old
        numeric[i] = (up - dn) / (2.0 * eps)

    # coordinates far below the dominant gradient scale are finite-difference
    # noise; the floor keeps them from masquerading as relative error while a
    # genuinely wrong backward (sign flip, dropped term) still shows as O(1)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)),
                       1e-3 * (np.abs(analytic).max() + 1e-300))
    return float(np.max(np.abs(analytic - numeric) / scale))


# ---------------------------------------------------------------------------
# Checkpoint file format RTC1: text header (config, metadata, tensor table)
# followed by little-endian float64 blocks in declaration order.
# ---------------------------------------------------------------------------

_RTC1_TAG = "RTC1"


def save_checkpoint(path, config: dict, meta: dict, tensors: list[tuple[str, np.ndarray]]):
    buf = io.BytesIO()
    head = [_RTC1_TAG,
            "config " + json.dumps(config, sort_keys=True),
            "meta " + json.dumps(meta, sort_keys=True),
            f"tensors {len(tensors)}"]
    for name, arr in tensors:
        dims = " ".join(str(d) for d in arr.shape)
        head.append(f"tensor {name} {arr.ndim} {dims}".rstrip())
    head.append("end")
    buf.write(("\n".join(head) + "\n").encode("ascii"))
    for _, arr in tensors:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    text_end = raw.index(b"\nend\n") + 5
    lines = raw[:text_end].decode("ascii").splitlines()
    if lines[0] != _RTC1_TAG:
        raise ValueError(f"not an RTC1 checkpoint: {lines[0]!r}")
    config = meta = None
    specs = []
    for line in lines[1:]:
        if line.startswith("config "):
            config = json.loads(line[7:])
        elif line.startswith("meta "):
            meta = json.loads(line[5:])
        elif line.startswith("tensor "):
            toks = line.split()
            name, ndim = toks[1], int(toks[2])
            shape = tuple(int(t) for t in toks[3:3 + ndim])
            specs.append((name, shape))
    tensors = {}
    off = text_end
    for name, shape in specs:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape)
        tensors[name] = arr.copy()
        off += n * 8
    return config, meta, tensors
