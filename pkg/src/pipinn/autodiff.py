"""Derivative machinery.

Two services live here:

* forward propagation of second-order jets (value, first and diagonal second
  input-derivatives) through a dense network, used to build operator rows;
* a small reverse-mode tape over numpy arrays (:class:`Var`) used for exact
  parameter gradients of losses that contain jets, ridge solves and unrolled
  Picard iterations.

The jet code is written against the dispatch helpers (:func:`sin`,
:func:`stack`, ...) so the very same forward pass runs on plain arrays or on
tape variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import linalg
from .errors import DimensionMismatch, NonFiniteLoss, UnsupportedOperator


# --------------------------------------------------------------------------
# reverse-mode tape
# --------------------------------------------------------------------------

def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


class Var:
    """A node on the reverse-mode tape wrapping a float64 array."""

    __slots__ = ("value", "parents", "grad")
    __array_priority__ = 1000

    def __init__(self, value, parents: Sequence[tuple["Var", Callable]] = ()):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)
        self.grad = None

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return mean(self, axis=axis)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf."""
        order = _toposort(self)
        seed = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=np.float64)
        grads = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in node.parents:
                gp = vjp(g)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + gp
                else:
                    grads[key] = gp


def _toposort(root: Var) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _binary(a, b, out, vjp_a, vjp_b):
    parents = []
    if isinstance(a, Var):
        parents.append((a, vjp_a))
    if isinstance(b, Var):
        parents.append((b, vjp_b))
    return Var(out, parents) if parents else out


def add(a, b):
    av, bv = value_of(a), value_of(b)
    sa, sb = np.shape(av), np.shape(bv)
    return _binary(a, b, av + bv,
                   lambda g: _unbroadcast(g, sa),
                   lambda g: _unbroadcast(g, sb))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    sa, sb = np.shape(av), np.shape(bv)
    return _binary(a, b, av * bv,
                   lambda g: _unbroadcast(g * bv, sa),
                   lambda g: _unbroadcast(g * av, sb))


def div(a, b):
    av, bv = value_of(a), value_of(b)
    sa, sb = np.shape(av), np.shape(bv)
    out = av / bv
    return _binary(a, b, out,
                   lambda g: _unbroadcast(g / bv, sa),
                   lambda g: _unbroadcast(-g * out / bv, sb))


def neg(a):
    if not isinstance(a, Var):
        return -a
    return Var(-a.value, [(a, lambda g: -g)])


def power(a, p: float):
    if not isinstance(a, Var):
        return a ** p
    v = a.value
    if p == 2:
        return Var(v * v, [(a, lambda g: 2.0 * g * v)])
    return Var(v ** p, [(a, lambda g: g * p * v ** (p - 1))])


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av @ bv
    sa, sb = np.shape(av), np.shape(bv)

    def vjp_a(g):
        if bv.ndim == 1:
            ga = g[..., None] * bv
        elif av.ndim == 1:
            ga = bv @ g
        else:
            ga = g @ np.swapaxes(bv, -1, -2)
        return _unbroadcast(ga, sa)

    def vjp_b(g):
        if bv.ndim == 1:
            k = bv.shape[0]
            return (av * g[..., None]).reshape(-1, k).sum(axis=0)
        if av.ndim == 1:
            gb = np.multiply.outer(av, g)
        else:
            gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(gb, sb)

    return _binary(a, b, out, vjp_a, vjp_b)


def _unary(a, out, dfn):
    if not isinstance(a, Var):
        return out
    return Var(out, [(a, dfn)])


def sin(a):
    v = value_of(a)
    return _unary(a, np.sin(v), lambda g: g * np.cos(v))


def cos(a):
    v = value_of(a)
    return _unary(a, np.cos(v), lambda g: -g * np.sin(v))


def tanh(a):
    v = value_of(a)
    t = np.tanh(v)
    return _unary(a, t, lambda g: g * (1.0 - t * t))


def exp(a):
    v = value_of(a)
    e = np.exp(v)
    return _unary(a, e, lambda g: g * e)


def log(a):
    v = value_of(a)
    return _unary(a, np.log(v), lambda g: g / v)


def sqrt(a):
    v = value_of(a)
    s = np.sqrt(v)
    return _unary(a, s, lambda g: 0.5 * g / s)


def softplus(a):
    v = value_of(a)
    out = np.logaddexp(0.0, v)
    sig = 0.5 * (1.0 + np.tanh(0.5 * v))
    return _unary(a, out, lambda g: g * sig)


def vsum(a, axis=None, keepdims=False):
    v = value_of(a)
    out = v.sum(axis=axis, keepdims=keepdims)
    if not isinstance(a, Var):
        return out
    shape = v.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return Var(out, [(a, vjp)])


def mean(a, axis=None):
    v = value_of(a)
    n = v.size if axis is None else v.shape[axis]
    return vsum(a, axis=axis) * (1.0 / n)


def getitem(a, idx):
    v = value_of(a)
    out = v[idx]
    if not isinstance(a, Var):
        return out
    shape = v.shape
    fancy = isinstance(idx, (list, np.ndarray)) or (
        isinstance(idx, tuple) and any(isinstance(i, (list, np.ndarray)) for i in idx))
    if fancy and isinstance(idx, (list, np.ndarray)):
        arr = np.asarray(idx)
        # repeated row indices must accumulate; unique ones can be scattered
        if arr.dtype != bool and arr.ndim == 1 and len(np.unique(arr)) == len(arr):
            fancy = False

    def vjp(g):
        z = np.zeros(shape)
        if fancy:
            np.add.at(z, idx, g)
        else:
            z[idx] = g
        return z

    return Var(out, [(a, vjp)])


def transpose(a):
    v = value_of(a)
    return _unary(a, v.T, lambda g: g.T)


def reshape(a, *shape):
    v = value_of(a)
    old = v.shape
    return _unary(a, v.reshape(*shape), lambda g: g.reshape(old))


def concat(items: Sequence, axis: int = 0):
    vals = [value_of(x) for x in items]
    out = np.concatenate(vals, axis=axis)
    parents = []
    offset = 0
    ax = axis % out.ndim
    for x, v in zip(items, vals):
        n = v.shape[ax]
        if isinstance(x, Var):
            sl = [slice(None)] * out.ndim
            sl[ax] = slice(offset, offset + n)
            sl = tuple(sl)
            parents.append((x, lambda g, sl=sl: g[sl]))
        offset += n
    return Var(out, parents) if parents else out


def stack(items: Sequence, axis: int = 0):
    vals = [value_of(x) for x in items]
    out = np.stack(vals, axis=axis)
    parents = [(x, lambda g, i=i: np.take(g, i, axis=axis))
               for i, x in enumerate(items) if isinstance(x, Var)]
    return Var(out, parents) if parents else out


# --------------------------------------------------------------------------
# differentiable ridge solve
# --------------------------------------------------------------------------

def adjoint_ridge_solve(X, y, lambda_pi, w, w_bar, factor=None):
    """Cotangents of ``w = (lambda_pi*I + X^T X)^{-1} X^T y``.

    Given the cotangent ``w_bar`` of the solution, returns
    ``(X_bar, y_bar, lambda_bar)``.  ``factor`` is the lower Cholesky factor
    of the system matrix; it is recomputed when omitted.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    w_bar = np.asarray(w_bar, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],) or w.shape != (X.shape[1],) \
            or w_bar.shape != w.shape:
        raise DimensionMismatch(
            f"inconsistent shapes X{X.shape} y{y.shape} w{w.shape} w_bar{w_bar.shape}")
    if factor is None:
        A, _ = linalg.ridge_system(X, y, float(lambda_pi))
        factor = linalg.cholesky(A)
    s = linalg.cho_solve(factor, w_bar)
    Xs = X @ s
    X_bar = np.outer(y - X @ w, s) - np.outer(Xs, w)
    return X_bar, Xs, -float(s @ w)


def ridge_solve(X, y, lambda_pi):
    """Tape-aware ridge solve; any of the three inputs may be a :class:`Var`."""
    Xv, yv = value_of(X), value_of(y)
    lam = float(np.asarray(value_of(lambda_pi)))
    w, L = linalg.ridge_factor(Xv, yv, lam)
    if not any(isinstance(a, Var) for a in (X, y, lambda_pi)):
        return w

    cache = {}

    # the tape hands the same cotangent object to every parent's vjp
    def cotangents(g):
        if cache.get("g") is not g:
            cache["g"] = g
            cache["val"] = adjoint_ridge_solve(Xv, yv, lam, w, g, factor=L)
        return cache["val"]

    parents = []
    if isinstance(X, Var):
        parents.append((X, lambda g: cotangents(g)[0]))
    if isinstance(y, Var):
        parents.append((y, lambda g: cotangents(g)[1]))
    if isinstance(lambda_pi, Var):
        shape = lambda_pi.shape
        parents.append((lambda_pi, lambda g: np.full(shape, cotangents(g)[2])))
    return Var(w, parents)


# --------------------------------------------------------------------------
# parameter gradients
# --------------------------------------------------------------------------

@dataclass
class GradReport:
    """Loss value plus gradients aligned with the parameter ordering."""

    loss: float
    names: list
    grads: dict

    @property
    def flat(self) -> np.ndarray:
        if not self.names:
            return np.zeros(0)
        return np.concatenate([np.ravel(self.grads[n]) for n in self.names])


def grad_params(loss_program: Callable[[dict], Var], params: Mapping[str, np.ndarray]) -> GradReport:
    """Evaluate ``loss_program`` on tape copies of ``params`` and backpropagate.

    ``loss_program`` receives a dict of :class:`Var` keyed like ``params`` and
    must return a scalar.  Parameters that do not influence the loss get a
    zero gradient.
    """
    leaves = {k: Var(np.array(v, dtype=np.float64)) for k, v in params.items()}
    loss = loss_program(leaves)
    val = float(np.asarray(value_of(loss)))
    if not np.isfinite(val):
        raise NonFiniteLoss(f"loss evaluated to {val}")
    if isinstance(loss, Var):
        loss.backward()
    grads = {}
    for k, leaf in leaves.items():
        g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        grads[k] = np.asarray(g, dtype=np.float64).reshape(leaf.value.shape)
    return GradReport(loss=val, names=list(params), grads=grads)


# --------------------------------------------------------------------------
# jets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class JetSpec:
    """Which input-derivatives to carry: first derivatives along
    ``first_dirs`` and diagonal second derivatives along ``second_dirs``."""

    input_dim: int
    first_dirs: tuple = ()
    second_dirs: tuple = ()

    def __post_init__(self):
        first = tuple(int(i) for i in self.first_dirs)
        second = tuple((int(i), int(j)) for i, j in self.second_dirs)
        for i in first:
            if not 0 <= i < self.input_dim:
                raise ValueError(f"direction {i} out of range for input_dim {self.input_dim}")
        if len(set(first)) != len(first) or len(set(second)) != len(second):
            raise ValueError("duplicate jet directions")
        for i, j in second:
            if i != j:
                raise ValueError(f"only diagonal second derivatives are supported, got {(i, j)}")
            if i not in first:
                raise ValueError(f"second derivative along {i} needs first derivative along {i}")
        object.__setattr__(self, "first_dirs", first)
        object.__setattr__(self, "second_dirs", second)

    @property
    def n_components(self) -> int:
        return 1 + len(self.first_dirs) + len(self.second_dirs)

    def first_slot(self, i: int) -> int:
        return 1 + self.first_dirs.index(i)

    def second_slot(self, i: int) -> int:
        return 1 + len(self.first_dirs) + self.second_dirs.index((i, i))


@dataclass
class Jet:
    value: float
    first: dict = field(default_factory=dict)
    second: dict = field(default_factory=dict)


class JetBatch:
    """Jets of ``m`` features at ``P`` points.

    ``comps`` is a list of ``(P, m)`` arrays (or :class:`Var`): the value
    first, then the first derivatives in ``spec.first_dirs`` order, then the
    diagonal second derivatives.
    """

    def __init__(self, comps, spec: JetSpec):
        self.comps = list(comps)
        self.spec = spec
        self._rows = {}

    @property
    def value(self):
        return self.comps[0]

    def d(self, i: int):
        return self.comps[self.spec.first_slot(i)]

    def dd(self, i: int):
        return self.comps[self.spec.second_slot(i)]

    @property
    def width(self) -> int:
        return np.shape(value_of(self.comps[0]))[-1]

    def rows(self, idx) -> "JetBatch":
        """Row subset; repeated requests with the same index object are
        served from a cache (the components are never mutated)."""
        hit = self._rows.get(id(idx))
        if hit is not None and hit[0] is idx:
            return hit[1]
        sub = JetBatch([c[idx] for c in self.comps], self.spec)
        self._rows[id(idx)] = (idx, sub)
        return sub

    def numpy(self) -> np.ndarray:
        """All components stacked as a ``(C, P, m)`` array."""
        return np.stack([np.asarray(value_of(c)) for c in self.comps])

    def to_jets(self) -> list:
        """Per-feature :class:`Jet` objects for a single-point batch."""
        arr = self.numpy()
        if arr.shape[1] != 1:
            raise ValueError("to_jets needs a single-point batch")
        out = []
        for k in range(arr.shape[2]):
            first = {i: float(arr[self.spec.first_slot(i), 0, k]) for i in self.spec.first_dirs}
            second = {(i, i): float(arr[self.spec.second_slot(i), 0, k])
                      for i, _ in self.spec.second_dirs}
            out.append(Jet(float(arr[0, 0, k]), first, second))
        return out


def _sine_rule(z):
    s = sin(z)
    c = cos(z)
    return s, c, -s


def _tanh_rule(z):
    t = tanh(z)
    d1 = 1.0 - t * t
    return t, d1, -2.0 * t * d1


def _identity_rule(z):
    return z, 1.0, 0.0


ACTIVATIONS = {"sine": _sine_rule, "tanh": _tanh_rule, "identity": _identity_rule}


@dataclass
class DenseLayer:
    """``act(scale * (a @ weight + bias))``."""

    weight: object
    bias: object
    activation: str
    scale: float = 1.0


@dataclass
class Stack:
    """A network computation description: an input affine map
    ``(x - shift) / spread``, dense layers, and how the embedding is formed
    (``concat``: every hidden activation, deepest first; else last only)."""

    layers: list
    shift: np.ndarray
    spread: np.ndarray
    concat: bool = False


def _seed_jets(points: np.ndarray, stack_: Stack, spec: JetSpec) -> list:
    P, d = points.shape
    comps = [(points - stack_.shift) / stack_.spread]
    for i in spec.first_dirs:
        c = np.zeros((P, d))
        c[:, i] = 1.0 / stack_.spread[i]
        comps.append(c)
    comps.extend(np.zeros((P, d)) for _ in spec.second_dirs)
    return comps


def layer_jets(comps: list, layer: DenseLayer, spec: JetSpec) -> list:
    """Push jet components through one dense layer."""
    rule = ACTIVATIONS.get(layer.activation)
    if rule is None:
        raise UnsupportedOperator(f"no derivative rules for activation {layer.activation!r}")
    z = [matmul(c, layer.weight) for c in comps]
    z[0] = z[0] + layer.bias
    if layer.scale != 1.0:
        z = [zc * layer.scale for zc in z]
    f0, f1, f2 = rule(z[0])
    out = [f0]
    for i in spec.first_dirs:
        out.append(f1 * z[spec.first_slot(i)])
    for i, _ in spec.second_dirs:
        zi = z[spec.first_slot(i)]
        out.append(f1 * z[spec.second_slot(i)] + f2 * (zi * zi))
    return out


def forward_jets(stack_: Stack, points, spec: JetSpec) -> JetBatch:
    """Embedding jets for a batch of points (each component ``(P, width)``)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != spec.input_dim:
        raise DimensionMismatch(f"points have dim {points.shape[1]}, spec expects {spec.input_dim}")
    comps = _seed_jets(points, stack_, spec)
    hidden = []
    for layer in stack_.layers:
        comps = layer_jets(comps, layer, spec)
        hidden.append(comps)
    if stack_.concat:
        comps = [concat([h[c] for h in reversed(hidden)], axis=1)
                 for c in range(spec.n_components)]
    return JetBatch(comps, spec)


def propagate_jets(stack_: Stack, point, spec: JetSpec) -> list:
    """Per-feature jets of the embedding at a single point."""
    point = np.asarray(point, dtype=np.float64).reshape(1, -1)
    if point.shape[1] != spec.input_dim:
        raise DimensionMismatch(f"point has length {point.shape[1]}, spec expects {spec.input_dim}")
    return forward_jets(stack_, point, spec).to_jets()
