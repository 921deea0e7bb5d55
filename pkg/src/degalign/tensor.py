"""Minimal dense-tensor reverse-mode autodiff engine.

Covers exactly the operations needed by the toy super-resolution network and
the feature-statistic alignment losses: matmul, same-padding convolution,
leaky ReLU, nearest-neighbour upsampling, elementwise arithmetic, reductions,
the random-Fourier cosine map and channel dropout. Everything is float64.

Design constraints:
    * no broadcasting except the convolution bias over channels
    * one backward pass per loss node; a second call raises
    * tensors are freely shareable read-only; graphs are single-threaded
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContractError,
    GraphStateError,
    ShapeMismatchError,
    UnsupportedConfigError,
)

__all__ = [
    "Tensor",
    "tensor",
    "matmul",
    "conv2d",
    "leaky_relu",
    "upsample_nearest",
    "channel_dropout",
    "rff_cos_map",
    "backward",
    "grad_check",
    "GradCheckReport",
]


class Tensor:
    """Dense float64 array with an optional gradient slot.

    Instances produced by the ops in this module carry closures that let
    :func:`backward` propagate gradients to every ``requires_grad`` leaf.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn",
                 "_backward_done")

    def __init__(self, data, requires_grad: bool = False, _parents=(),
                 _backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents)
        self._parents = tuple(_parents)
        self._backward_fn = _backward_fn
        self._backward_done = False

    # -- introspection -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return _add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return _add(self, _mul_scalar(_coerce(other), -1.0))

    def __rsub__(self, other):
        return _add(_coerce(other), _mul_scalar(self, -1.0))

    def __neg__(self):
        return _mul_scalar(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return _mul_scalar(self, float(other))
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return _mul_scalar(self, 1.0 / float(other))
        raise TypeError("tensor/tensor division is not part of the op set")

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape ops ----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _reshape(self, shape)

    def transpose(self):
        return _transpose2d(self)

    @property
    def T(self):
        return _transpose2d(self)

    def select0(self, index: int):
        return _select0(self, index)

    # -- reductions / elementwise -------------------------------------------

    def sum(self):
        return _sum(self)

    def mean(self):
        return _mul_scalar(_sum(self), 1.0 / self.size)

    def abs(self):
        return _abs(self)

    def cos(self):
        return _cos(self)

    def backward(self):
        backward(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad)


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _same_shape(a: Tensor, b: Tensor, opname: str):
    if a.shape != b.shape:
        raise ShapeMismatchError(
            f"{opname}: shapes {a.shape} and {b.shape} do not match")


# ---------------------------------------------------------------------------
# elementwise and shape primitives
# ---------------------------------------------------------------------------

def _add(a: Tensor, b: Tensor) -> Tensor:
    # same shapes, or one side a scalar; no other broadcasting
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeMismatchError(
            f"add: shapes {a.shape} and {b.shape} do not match")
    out = Tensor(a.data + b.data, _parents=(a, b))

    def _reduce(g, target: Tensor):
        if g.shape == target.data.shape:
            return g
        return np.asarray(g.sum()).reshape(target.data.shape)

    out._backward_fn = lambda g: (_reduce(g, a), _reduce(g, b))
    return out


def _mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    out = Tensor(a.data * b.data, _parents=(a, b))
    out._backward_fn = lambda g: (g * b.data, g * a.data)
    return out


def _mul_scalar(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c, _parents=(a,))
    out._backward_fn = lambda g: (g * c,)
    return out


def _sum(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum()), _parents=(a,))
    out._backward_fn = lambda g: (np.full(a.data.shape, float(g)),)
    return out


def _abs(a: Tensor) -> Tensor:
    out = Tensor(np.abs(a.data), _parents=(a,))
    out._backward_fn = lambda g: (g * np.sign(a.data),)
    return out


def _cos(a: Tensor) -> Tensor:
    out = Tensor(np.cos(a.data), _parents=(a,))
    out._backward_fn = lambda g: (-g * np.sin(a.data),)
    return out


def _reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape), _parents=(a,))
    out._backward_fn = lambda g: (g.reshape(a.data.shape),)
    return out


def _transpose2d(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"transpose expects a 2-D tensor, got {a.shape}")
    out = Tensor(a.data.T.copy(), _parents=(a,))
    out._backward_fn = lambda g: (g.T,)
    return out


def _select0(a: Tensor, index: int) -> Tensor:
    """Pick one slice along the leading axis; backward scatters into place."""
    out = Tensor(a.data[index], _parents=(a,))

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[index] = g
        return (ga,)

    out._backward_fn = bwd
    return out


# ---------------------------------------------------------------------------
# linear algebra / network ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard 2-D matrix product with the usual backward rules."""
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data, _parents=(a, b))
    out._backward_fn = lambda g: (g @ b.data.T, a.data.T @ g)
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor, padding: int | None = None) -> Tensor:
    """Same-padding 2-D cross-correlation.

    ``x`` is (C_in, H, W) or (B, C_in, H, W); ``w`` is (C_out, C_in, k, k)
    with odd k; ``b`` is (C_out,). Only padding = (k-1)/2 is supported, so
    spatial extents are preserved.
    """
    x, w, b = _coerce(x), _coerce(w), _coerce(b)
    squeeze = x.data.ndim == 3
    if x.data.ndim not in (3, 4) or w.data.ndim != 4 or b.data.ndim != 1:
        raise ShapeMismatchError(
            f"conv2d: bad ranks x={x.shape} w={w.shape} b={b.shape}")
    co, ci, k, k2 = w.shape
    if k != k2 or k % 2 == 0:
        raise UnsupportedConfigError(f"conv2d: kernel must be odd square, got {k}x{k2}")
    if padding is None:
        padding = (k - 1) // 2
    if padding != (k - 1) // 2:
        raise UnsupportedConfigError(
            f"conv2d: only same-padding {(k - 1) // 2} supported, got {padding}")
    xd = x.data[None] if squeeze else x.data
    bsz, cin, h, wd = xd.shape
    if cin != ci or b.shape[0] != co:
        raise ShapeMismatchError(
            f"conv2d: channel mismatch x={x.shape} w={w.shape} b={b.shape}")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # (B, C, H, W, k, k) windows, flattened to an im2col matrix
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * h * wd, ci * k * k)
    w2 = w.data.reshape(co, ci * k * k)
    out2 = cols @ w2.T + b.data
    outd = out2.reshape(bsz, h, wd, co).transpose(0, 3, 1, 2)
    out = Tensor(outd[0] if squeeze else outd, _parents=(x, w, b))

    def bwd(g):
        gd = g[None] if squeeze else g
        g2 = gd.transpose(0, 2, 3, 1).reshape(bsz * h * wd, co)
        gw = (g2.T @ cols).reshape(w.data.shape)
        gb = g2.sum(axis=0)
        gcols = (g2 @ w2).reshape(bsz, h, wd, ci, k, k)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + h, j:j + wd] += gcols[:, :, :, :, i, j].transpose(
                    0, 3, 1, 2)
        gx = gxp[:, :, padding:padding + h, padding:padding + wd]
        return (gx[0] if squeeze else gx, gw, gb)

    out._backward_fn = bwd
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """Elementwise max(x, slope*x); the subgradient at 0 is ``slope``."""
    if not 0.0 <= slope < 1.0:
        raise UnsupportedConfigError(f"leaky_relu: slope must be in [0,1), got {slope}")
    x = _coerce(x)
    mask = np.where(x.data > 0.0, 1.0, slope)
    out = Tensor(x.data * mask, _parents=(x,))
    out._backward_fn = lambda g: (g * mask,)
    return out


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate each pixel into a factor x factor block."""
    if factor < 1 or int(factor) != factor:
        raise UnsupportedConfigError(f"upsample factor must be a positive int, got {factor}")
    factor = int(factor)
    x = _coerce(x)
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeMismatchError(f"upsample_nearest expects (C,H,W) or (B,C,H,W), got {x.shape}")
    bsz, c, h, w = xd.shape
    outd = np.repeat(np.repeat(xd, factor, axis=2), factor, axis=3)
    out = Tensor(outd[0] if squeeze else outd, _parents=(x,))

    def bwd(g):
        gd = g[None] if squeeze else g
        gx = gd.reshape(bsz, c, h, factor, w, factor).sum(axis=(3, 5))
        return (gx[0] if squeeze else gx,)

    out._backward_fn = bwd
    return out


def channel_dropout(x: Tensor, keep_prob: float, rng: np.random.Generator) -> Tensor:
    """Zero whole channels independently with probability 1-keep_prob.

    Surviving channels are scaled by 1/keep_prob (inverted dropout), so the
    expected value of each entry is preserved. Callers must skip this op at
    inference time.
    """
    if not 0.0 < keep_prob <= 1.0:
        raise UnsupportedConfigError(
            f"channel_dropout: keep_prob must be in (0,1], got {keep_prob}")
    x = _coerce(x)
    if x.data.ndim == 3:
        mask = (rng.random(x.shape[0]) < keep_prob).astype(np.float64)
        mask = mask[:, None, None] / keep_prob
    elif x.data.ndim == 4:
        mask = (rng.random(x.shape[:2]) < keep_prob).astype(np.float64)
        mask = mask[:, :, None, None] / keep_prob
    else:
        raise ShapeMismatchError(
            f"channel_dropout expects (C,H,W) or (B,C,H,W), got {x.shape}")
    if keep_prob == 1.0:
        mask = np.ones_like(mask)
    out = Tensor(x.data * mask, _parents=(x,))
    out._backward_fn = lambda g: (g * mask,)
    return out


def rff_cos_map(x: Tensor, omegas: np.ndarray, phis: np.ndarray) -> Tensor:
    """Map each scalar entry of an (N, C) matrix through n cosine features.

    Output is (N, n*C), grouped feature-major: column k*C + c holds
    sqrt(2) * cos(omega_k * x[:, c] + phi_k).
    """
    x = _coerce(x)
    if x.data.ndim != 2:
        raise ShapeMismatchError(f"rff_cos_map expects an (N, C) matrix, got {x.shape}")
    omegas = np.asarray(omegas, dtype=np.float64)
    phis = np.asarray(phis, dtype=np.float64)
    n_feat = omegas.shape[0]
    nrow, ncol = x.shape
    arg = omegas[None, :, None] * x.data[:, None, :] + phis[None, :, None]
    outd = (math.sqrt(2.0) * np.cos(arg)).reshape(nrow, n_feat * ncol)
    out = Tensor(outd, _parents=(x,))

    def bwd(g):
        g3 = g.reshape(nrow, n_feat, ncol)
        gx = (-math.sqrt(2.0) * g3 * np.sin(arg) * omegas[None, :, None]).sum(axis=1)
        return (gx,)

    out._backward_fn = bwd
    return out


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    ``loss`` must be scalar. A second call on the same loss node raises
    :class:`GraphStateError`.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss._backward_done:
        raise GraphStateError("backward was already run on this tape")
    loss._backward_done = True

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and not node._parents:
            node.grad = g if node.grad is None else node.grad + g
        if node._backward_fn is None:
            continue
        parent_grads = node._backward_fn(g)
        for p, pg in zip(node._parents, parent_grads):
            if not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = np.asarray(pg, dtype=np.float64)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Per-coordinate comparison of reverse-mode and central-difference grads."""

    max_rel_err: float
    worst_index: tuple
    passed: bool
    tol: float
    failures: list = field(default_factory=list)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"grad_check {status}: max_rel_err={self.max_rel_err:.3e} "
                f"at {self.worst_index} (tol {self.tol:g})")


def grad_check(f, point: Tensor, step: float = 1e-5, tol: float = 1e-4,
               ) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar f against central differences.

    Relative error uses a unit floor: |a - n| / max(|a|, |n|, 1). Non-finite
    probe values are reported as failures naming the coordinate.
    """
    if step <= 0:
        raise ContractError("grad_check: step must be positive")
    leaf = Tensor(point.data.copy(), requires_grad=True)
    out = f(leaf)
    backward(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)

    base = point.data.copy()
    numeric = np.zeros_like(base)
    failures = []
    for idx in np.ndindex(base.shape):
        vals = []
        for sgn in (+1.0, -1.0):
            probe = base.copy()
            probe[idx] += sgn * step
            vals.append(f(Tensor(probe)).item())
        if not all(math.isfinite(v) for v in vals):
            failures.append(f"non-finite value at coordinate {idx}")
            continue
        numeric[idx] = (vals[0] - vals[1]) / (2.0 * step)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    rel = np.abs(analytic - numeric) / denom
    worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
    max_rel = float(rel[worst])
    if max_rel > tol:
        failures.append(
            f"coordinate {worst}: analytic {analytic[worst]:.9g} vs "
            f"numeric {numeric[worst]:.9g} (rel err {max_rel:.3e})")
    return GradCheckReport(max_rel_err=max_rel, worst_index=tuple(worst),
                           passed=not failures, tol=tol, failures=failures)
