"""Minimal reverse-mode automatic differentiation on numpy arrays.

Each Tensor records its parents and a vector-Jacobian closure; backward()
walks the graph once in reverse topological order. Gradients are retained on
leaf tensors (those created directly rather than by an operation); graph
intermediates only propagate. float64 is the training default; float32
arrays pass through untouched for inference use.
"""

from __future__ import annotations

import base64
import math
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "tensor",
    "no_grad",
    "set_debug_check_finite",
    "add", "sub", "mul", "div", "neg", "power", "exp", "log", "sqrt",
    "clamp_min", "safe_log", "maximum", "minimum",
    "tsum", "tmean", "matmul", "transpose", "reshape", "concat",
    "broadcast_to", "gelu", "sigmoid", "softmax", "log_softmax",
    "dropout", "batch_norm", "layer_norm", "scaled_dot_attention",
    "cross_entropy", "kl_divergence",
    "conv1d_dilated",
    "gradient_check", "gradient_check_at",
    "save_checkpoint", "load_checkpoint",
]

LOG_FLOOR = 1e-12

_grad_enabled = True
_debug_check_finite = False


def set_debug_check_finite(flag: bool) -> None:
    """Toggle forward-pass finiteness assertions (slow; for debugging)."""
    global _debug_check_finite
    _debug_check_finite = bool(flag)


@contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data) -> np.ndarray:
    a = np.asarray(data)
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float64)
    return a


class Tensor:
    """An n-dimensional value participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None

    # -- introspection ------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    # -- autodiff -----------------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        order = _topo_order(self)
        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in order:
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                # Leaf: this is where gradients are retained.
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __pow__(self, p): return power(self, p)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, key): return take(self, key)

    def sum(self, axis=None, keepdims=False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return tmean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)
    def transpose(self, axes=None): return transpose(self, axes)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Reverse topological order (root first), iterative to spare the stack."""
    post: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            post.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    post.reverse()
    return post


def _ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    if _debug_check_finite and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values in forward pass")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the parent shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    return _make(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    return _make(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    return _make(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    return _make(
        a.data / b.data, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = _ensure(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def power(a, p: float) -> Tensor:
    a = _ensure(a)
    p = float(p)
    return _make(a.data**p, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def sqrt(a) -> Tensor:
    return power(a, 0.5)


def exp(a) -> Tensor:
    a = _ensure(a)
    out_data = np.exp(a.data)
    return _make(out_data, (a,), lambda g: (g * out_data,))


def log(a) -> Tensor:
    a = _ensure(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def clamp_min(a, floor: float) -> Tensor:
    a = _ensure(a)
    mask = a.data > floor
    return _make(np.maximum(a.data, floor), (a,), lambda g: (g * mask,))


def safe_log(a, floor: float = LOG_FLOOR) -> Tensor:
    """log with the argument floored, so zero probabilities stay finite."""
    return log(clamp_min(a, floor))


def maximum(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    take_a = a.data >= b.data  # ties route the gradient to the first argument
    return _make(
        np.maximum(a.data, b.data), (a, b),
        lambda g: (_unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)),
    )


def minimum(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    take_a = a.data <= b.data
    return _make(
        np.minimum(a.data, b.data), (a, b),
        lambda g: (_unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)),
    )


# --- reductions ----------------------------------------------------------------

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _ensure(a)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _ensure(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a.shape).copy(),)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), vjp)


# --- shape manipulation --------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product with stacked (batched) leading dimensions."""
    a, b = _ensure(a), _ensure(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have at least 2 dimensions")

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(np.matmul(a.data, b.data), (a, b), vjp)


def transpose(a, axes=None) -> Tensor:
    a = _ensure(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def reshape(a, shape) -> Tensor:
    a = _ensure(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_ensure(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), vjp)


def broadcast_to(a, shape) -> Tensor:
    a = _ensure(a)
    return _make(
        np.ascontiguousarray(np.broadcast_to(a.data, shape)),
        (a,),
        lambda g: (_unbroadcast(g, a.shape),),
    )


def take(a, key) -> Tensor:
    """Indexing/slicing; gradients scatter-add back into place."""
    a = _ensure(a)

    def vjp(g):
        gx = np.zeros_like(a.data)
        np.add.at(gx, key, g)
        return (gx,)

    return _make(a.data[key], (a,), vjp)


# --- nonlinearities ------------------------------------------------------------

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(a) -> Tensor:
    """GeLU, tanh approximation (deterministic across platforms)."""
    a = _ensure(a)
    x = a.data
    x2 = x * x
    u = x2 * _GELU_A
    u += 1.0
    u *= x
    u *= _GELU_C
    t = np.tanh(u)
    out = t + 1.0
    out *= x
    out *= 0.5

    def vjp(g):
        du = x2 * (3.0 * _GELU_A * _GELU_C)
        du += _GELU_C
        dy = 1.0 - t * t
        dy *= x * du
        dy += 1.0 + t
        dy *= 0.5
        return (g * dy,)

    return _make(out, (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _ensure(a)
    y = 1.0 / (1.0 + np.exp(-a.data))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def softmax(a, axis: int = -1) -> Tensor:
    a = _ensure(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        gy = g * y
        return (gy - y * gy.sum(axis=axis, keepdims=True),)

    return _make(y, (a,), vjp)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _ensure(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def vjp(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), vjp)


def dropout(a, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; the identity outside training mode."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    a = _ensure(a)
    if not training or p == 0.0:
        return a
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    mask = mask.astype(a.dtype)
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


# --- normalization -------------------------------------------------------------

def batch_norm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Normalize over every axis but the feature (last) axis.

    In training mode the batch statistics are used and the returned running
    stats are updated copies; in inference mode the running stats are used
    and returned unchanged.
    """
    x = _ensure(x)
    axes = tuple(range(x.ndim - 1))
    if training:
        mu = tmean(x, axis=axes, keepdims=True)
        centered = sub(x, mu)
        var = tmean(mul(centered, centered), axis=axes, keepdims=True)
        xhat = div(centered, sqrt(add(var, eps)))
        n = x.size // x.shape[-1]
        bessel = n / (n - 1) if n > 1 else 1.0
        new_mean = (1 - momentum) * running_mean + momentum * mu.data.reshape(-1)
        new_var = (1 - momentum) * running_var + momentum * var.data.reshape(-1) * bessel
    else:
        xhat = div(sub(x, running_mean), np.sqrt(running_var + eps))
        new_mean, new_var = running_mean, running_var
    return add(mul(xhat, gamma), beta), new_mean, new_var


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis per position, then apply the learned affine.

    Fused into a single node with a hand-written VJP; this sits on the model
    hot path.
    """
    x, gamma, beta = _ensure(x), _ensure(gamma), _ensure(beta)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def vjp(g):
        n = xd.shape[-1]
        lead = tuple(range(g.ndim - 1))
        g_gamma = (g * xhat).sum(axis=lead) if g.ndim > 1 else g * xhat
        g_beta = g.sum(axis=lead) if g.ndim > 1 else g
        gx_hat = g * gamma.data
        gx = inv / n * (
            n * gx_hat
            - gx_hat.sum(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True)
        )
        return gx, _unbroadcast(g_gamma, gamma.shape), _unbroadcast(g_beta, beta.shape)

    return _make(out, (x, gamma, beta), vjp)


# --- attention -----------------------------------------------------------------

def scaled_dot_attention(q, k, v, n_heads: int, w_out=None) -> Tensor:
    """Multi-head scaled dot-product attention over pre-projected q/k/v.

    Inputs are (N, H) or (B, N, H); H must divide evenly into n_heads.
    Heads are concatenated and, when w_out is given, linearly projected.
    """
    q, k, v = _ensure(q), _ensure(k), _ensure(v)
    squeeze = q.ndim == 2
    if squeeze:
        q, k, v = (reshape(t, (1,) + t.shape) for t in (q, k, v))
    b, n_q, h = q.shape
    n_k = k.shape[1]
    if h % n_heads != 0:
        raise ValueError(f"hidden size {h} not divisible by {n_heads} heads")
    hd = h // n_heads

    def split(t, n):
        return transpose(reshape(t, (b, n, n_heads, hd)), (0, 2, 1, 3))

    qh, kh, vh = split(q, n_q), split(k, n_k), split(v, n_k)
    scores = mul(matmul(qh, transpose(kh, (0, 1, 3, 2))), 1.0 / math.sqrt(hd))
    attn = softmax(scores, axis=-1)
    out = matmul(attn, vh)  # (B, heads, N_q, hd)
    out = reshape(transpose(out, (0, 2, 1, 3)), (b, n_q, h))
    if w_out is not None:
        out = matmul(out, w_out)
    if squeeze:
        out = reshape(out, (n_q, out.shape[-1]))
    return out


# --- losses ---------------------------------------------------------------------

def cross_entropy(logits, targets: np.ndarray) -> Tensor:
    """Per-position cross-entropy against integer targets on the last axis."""
    logits = _ensure(logits)
    targets = np.asarray(targets, dtype=np.intp)
    if targets.shape != logits.shape[:-1]:
        raise ValueError(
            f"targets shape {targets.shape} must match logits {logits.shape[:-1]}"
        )
    onehot = np.eye(logits.shape[-1], dtype=logits.dtype)[targets]
    return neg(tsum(mul(log_softmax(logits, axis=-1), onehot), axis=-1))


def kl_divergence(p, q, axis: int = -1, floor: float = LOG_FLOOR) -> Tensor:
    """Pointwise KL(p || q) along an axis, with floored logs."""
    p, q = _ensure(p), _ensure(q)
    return tsum(mul(p, sub(safe_log(p, floor), safe_log(q, floor))), axis=axis)


# --- convolution ----------------------------------------------------------------

def conv1d_dilated(x, w, dilation: int = 1) -> Tensor:
    """Dilated 1-D cross-correlation, stride 1, symmetric zero same-padding.

    x is (T, C_in) or (B, T, C_in); w is (C_out, C_in, ksize) with odd ksize.
    The output keeps the temporal length.
    """
    x, w = _ensure(x), _ensure(w)
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    if w.ndim != 3:
        raise ValueError(f"kernel must be (C_out, C_in, ksize), got shape {w.shape}")
    c_out, c_in, ksize = w.shape
    if ksize % 2 != 1:
        raise ValueError(f"kernel size must be odd for exact same-padding, got {ksize}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or xd.shape[-1] != c_in:
        raise ValueError(f"input shape {x.shape} incompatible with kernel {w.shape}")
    bsz, t, _ = xd.shape
    pad = (ksize - 1) // 2 * dilation
    xp = np.pad(xd, ((0, 0), (pad, pad), (0, 0)))
    # im2col: one GEMM instead of one small GEMM per tap
    cols = np.empty((bsz, t, ksize * c_in), dtype=xd.dtype)
    for tap in range(ksize):
        cols[:, :, tap * c_in : (tap + 1) * c_in] = xp[:, tap * dilation : tap * dilation + t, :]
    w2 = w.data.transpose(2, 1, 0).reshape(ksize * c_in, c_out)
    out = (cols.reshape(-1, ksize * c_in) @ w2).reshape(bsz, t, c_out)

    def vjp(g):
        if squeeze:
            g = g[None]
        g2 = g.reshape(-1, c_out)
        gw2 = cols.reshape(-1, ksize * c_in).T @ g2
        gw = gw2.reshape(ksize, c_in, c_out).transpose(2, 1, 0)
        gcols = (g2 @ w2.T).reshape(bsz, t, ksize, c_in)
        gxp = np.zeros_like(xp)
        for tap in range(ksize):
            gxp[:, tap * dilation : tap * dilation + t, :] += gcols[:, :, tap, :]
        gx = gxp[:, pad : pad + t, :]
        return (gx[0] if squeeze else gx, np.ascontiguousarray(gw))

    return _make(out[0] if squeeze else out, (x, w), vjp)


# --- gradient checking -----------------------------------------------------------

def gradient_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> float:
    """Max relative error between reverse-mode and central finite differences.

    Every coordinate of x is perturbed. f must return a scalar tensor and
    x should hold float64 data.
    """
    return gradient_check_at(f, x, coords=None, eps=eps)


def gradient_check_at(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    coords: Sequence[int] | None,
    eps: float = 1e-6,
) -> float:
    """Like gradient_check but restricted to a subset of flat coordinates."""
    if not x.requires_grad:
        raise ValueError("gradient_check requires x.requires_grad")
    out = f(x)
    if out.size != 1:
        raise ValueError("gradient_check requires a scalar-valued function")
    x.grad = None
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad

    indices = range(x.data.size) if coords is None else coords
    analytic_flat = analytic.reshape(-1)
    worst = 0.0
    for i in indices:
        idx = np.unravel_index(i, x.data.shape)
        orig = x.data[idx]
        x.data[idx] = orig + eps
        f_plus = float(f(x).data)
        x.data[idx] = orig - eps
        f_minus = float(f(x).data)
        x.data[idx] = orig
        numeric = (f_plus - f_minus) / (2 * eps)
        a = analytic_flat[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


# --- checkpoint format ------------------------------------------------------------
#
# One parameter per line: name <TAB> shape <TAB> base64 payload, where shape
# is comma-separated dims ('' for a 0-d value) and the payload is the raw
# little-endian float64 buffer in row-major order.


def save_checkpoint(path: str | Path, named_arrays: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for name, arr in named_arrays.items():
            if "\t" in name or "\n" in name:
                raise ValueError(f"parameter name {name!r} contains separators")
            a = np.asarray(arr.data if isinstance(arr, Tensor) else arr, dtype=np.float64)
            shape = ",".join(str(d) for d in a.shape)
            payload = base64.b64encode(a.astype("<f8").tobytes(order="C")).decode("ascii")
            fh.write(f"{name}\t{shape}\t{payload}\n")


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                name, shape_tok, payload = line.split("\t")
            except ValueError:
                raise ValueError(f"checkpoint line {lineno}: expected 3 fields") from None
            shape = tuple(int(t) for t in shape_tok.split(",") if t)
            arr = np.frombuffer(base64.b64decode(payload), dtype="<f8").reshape(shape)
            out[name] = arr.astype(np.float64)
    return out
