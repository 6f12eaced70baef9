"""Reverse-mode tape and second-order jets.

Every :class:`Var` holds a numpy array (0-d for scalars) so one tape node can
carry a whole batch of collocation points. Jets propagate value, first and
second directional derivatives with respect to one input coordinate; their
coefficients are ordinary tape nodes, so the loss built from them can be
differentiated with respect to the network parameters by :meth:`Tape.backward`.

Operands may be plain numbers or arrays. An op whose operands are all
constants is evaluated eagerly and never touches the tape.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "AutodiffError",
    "DomainError",
    "Var",
    "Tape",
    "Jet2",
    "jet_seed",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "square",
    "sin",
    "cos",
    "tanh",
    "exp",
    "matmul",
    "sum_all",
    "mean_all",
    "record_unary",
    "record_binary",
]


class AutodiffError(RuntimeError):
    """Misuse of the tape (foreign Var, non-scalar loss, ...)."""


class DomainError(ArithmeticError):
    def __init__(self, message, node_id=None):
        super().__init__(message if node_id is None else f"{message} (node {node_id})")
        self.node_id = node_id


class Var:
    __slots__ = ("tape", "idx", "value")
    __array_ufunc__ = None

    def __init__(self, tape, idx, value):
        self.tape = tape
        self.idx = idx
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(node={self.idx}, value={self.value!r})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return take(self, key)


class Tape:
    """Linear record of operations, swept in reverse by :meth:`backward`.

    A node is ``(parents, vjp)`` where ``vjp(upstream)`` returns one adjoint
    contribution per parent. Leaves registered with :meth:`param` are the
    coordinates :meth:`backward` reports gradients for.
    """

    def __init__(self):
        self._parents = []
        self._vjps = []
        self._params = []

    def __len__(self):
        return len(self._parents)

    def _push(self, value, parents=(), vjp=None):
        idx = len(self._parents)
        self._parents.append(parents)
        self._vjps.append(vjp)
        return Var(self, idx, value)

    def var(self, value):
        """A leaf that is not reported by :meth:`backward`."""
        return self._push(np.asarray(value, dtype=np.float64))

    def param(self, value):
        v = self.var(np.array(value, dtype=np.float64))
        self._params.append(v)
        return v

    @property
    def params(self):
        return tuple(self._params)

    def checkpoint(self):
        """Marker for :meth:`truncate`; lets a caller drop nodes recorded after it."""
        return len(self._parents)

    def truncate(self, marker):
        if marker < max((p.idx + 1 for p in self._params), default=0):
            raise AutodiffError("cannot truncate below a registered parameter")
        del self._parents[marker:]
        del self._vjps[marker:]

    def backward(self, loss):
        """Gradient of the scalar ``loss`` w.r.t. every registered parameter.

        Returns one flat float64 vector, parameters concatenated in
        registration order (each raveled C-order).
        """
        if not isinstance(loss, Var) or loss.tape is not self:
            raise AutodiffError("loss is not recorded on this tape")
        if loss.value.size != 1:
            raise AutodiffError(f"loss must be scalar, got shape {loss.value.shape}")
        adj = [None] * (loss.idx + 1)
        adj[loss.idx] = np.ones_like(loss.value)
        parents, vjps = self._parents, self._vjps
        for i in range(loss.idx, -1, -1):
            g = adj[i]
            if g is None or vjps[i] is None:
                continue
            for p, gp in zip(parents[i], vjps[i](g)):
                if gp is None:
                    continue
                adj[p] = gp if adj[p] is None else adj[p] + gp
        out = []
        for p in self._params:
            g = adj[p.idx] if p.idx < len(adj) else None
            out.append(np.zeros(p.value.size) if g is None else np.ravel(g).astype(np.float64))
        return np.concatenate(out) if out else np.zeros(0)


# -- helpers -----------------------------------------------------------------


def _val(x):
    return x.value if isinstance(x, Var) else x


def _is_zero(x):
    return not isinstance(x, Var) and np.ndim(x) == 0 and x == 0


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise AutodiffError("operands live on different tapes")
    return tape


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _elementwise(value, operands, partials):
    """Record an elementwise node with stored local partials."""
    tape = _tape_of(*operands)
    if tape is None:
        return value
    parents, locs, shapes = [], [], []
    for x, d in zip(operands, partials):
        if isinstance(x, Var):
            parents.append(x.idx)
            locs.append(d)
            shapes.append(x.value.shape)

    def vjp(g):
        return [_unbroadcast(g * d, s) for d, s in zip(locs, shapes)]

    return tape._push(value, tuple(parents), vjp)


# -- primitive ops -------------------------------------------------------------


def add(a, b):
    va, vb = _val(a), _val(b)
    out = va + vb
    if not isinstance(a, Var) and not isinstance(b, Var):
        return out
    tape = _tape_of(a, b)
    parents = tuple(x.idx for x in (a, b) if isinstance(x, Var))
    shapes = [x.value.shape for x in (a, b) if isinstance(x, Var)]
    return tape._push(out, parents, lambda g: [_unbroadcast(g, s) for s in shapes])


def sub(a, b):
    va, vb = _val(a), _val(b)
    out = va - vb
    if not isinstance(a, Var) and not isinstance(b, Var):
        return out
    tape = _tape_of(a, b)
    parents, signs, shapes = [], [], []
    for x, sgn in ((a, 1.0), (b, -1.0)):
        if isinstance(x, Var):
            parents.append(x.idx)
            signs.append(sgn)
            shapes.append(x.value.shape)
    return tape._push(
        out, tuple(parents), lambda g: [_unbroadcast(sgn * g, s) for sgn, s in zip(signs, shapes)]
    )


def mul(a, b):
    va, vb = _val(a), _val(b)
    return _elementwise(va * vb, (a, b), (vb, va))


def div(a, b):
    va, vb = np.asarray(_val(a), dtype=np.float64), np.asarray(_val(b), dtype=np.float64)
    if np.any(vb == 0.0):
        tape = _tape_of(a, b)
        raise DomainError("division by zero", len(tape) if tape is not None else None)
    inv = 1.0 / vb
    out = va * inv
    return _elementwise(out, (a, b), (inv, -out * inv))


def neg(a):
    return _elementwise(-_val(a), (a,), (-1.0,))


def square(a):
    va = _val(a)
    return _elementwise(va * va, (a,), (2.0 * va,))


def sin(a):
    va = _val(a)
    return _elementwise(np.sin(va), (a,), (np.cos(va),))


def cos(a):
    va = _val(a)
    return _elementwise(np.cos(va), (a,), (-np.sin(va),))


def tanh(a):
    t = np.tanh(_val(a))
    return _elementwise(t, (a,), (1.0 - t * t,))


def exp(a):
    e = np.exp(_val(a))
    return _elementwise(e, (a,), (e,))


def matmul(a, b):
    va, vb = _val(a), _val(b)
    out = va @ vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    parents, fns = [], []
    if isinstance(a, Var):
        parents.append(a.idx)
        fns.append(lambda g: g @ vb.T)
    if isinstance(b, Var):
        parents.append(b.idx)
        fns.append(lambda g: va.T @ g)
    return tape._push(out, tuple(parents), lambda g: [f(g) for f in fns])


def sum_all(a):
    va = _val(a)
    if not isinstance(a, Var):
        return np.sum(va)
    shape = va.shape
    return a.tape._push(np.sum(va), (a.idx,), lambda g: [np.broadcast_to(g, shape)])


def mean_all(a):
    va = _val(a)
    if not isinstance(a, Var):
        return np.mean(va)
    shape, n = va.shape, va.size
    return a.tape._push(np.mean(va), (a.idx,), lambda g: [np.full(shape, g / n)])


def take(a, key):
    """Basic indexing (slices, ints) with a scatter-add adjoint."""
    va = _val(a)
    if not isinstance(a, Var):
        return va[key]
    shape = va.shape

    def vjp(g):
        full = np.zeros(shape)
        full[key] += g
        return [full]

    return a.tape._push(va[key], (a.idx,), vjp)


def reshape(a, shape):
    va = _val(a)
    if not isinstance(a, Var):
        return np.reshape(va, shape)
    old = va.shape
    return a.tape._push(np.reshape(va, shape), (a.idx,), lambda g: [np.reshape(g, old)])


_UNARY = {"neg": neg, "square": square, "sin": sin, "cos": cos, "tanh": tanh, "exp": exp}
_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div, "matmul": matmul}


def record_unary(kind, x):
    try:
        return _UNARY[kind](x)
    except KeyError:
        raise ValueError(f"unknown unary op {kind!r}") from None


def record_binary(kind, a, b):
    try:
        return _BINARY[kind](a, b)
    except KeyError:
        raise ValueError(f"unknown binary op {kind!r}") from None


# -- jets ------------------------------------------------------------------------


def _mul0(a, b):
    # Structural zeros (scalar 0 constants) stay zero without touching the tape.
    return 0.0 if _is_zero(a) or _is_zero(b) else mul(a, b)


def _neg0(a):
    return 0.0 if _is_zero(a) else neg(a)


def _add0(a, b):
    if _is_zero(a):
        return b
    return a if _is_zero(b) else add(a, b)


class Jet2:
    """Truncated Taylor triple ``(v, d1, d2)`` along one input direction.

    Components are Vars or constant arrays/floats. Multiplying two jets uses
    Leibniz' rule; unary functions use the second-order chain rule
    ``(f(v), f'(v) d1, f'(v) d2 + f''(v) d1**2)``.
    """

    __slots__ = ("v", "d1", "d2")

    def __init__(self, v, d1=0.0, d2=0.0):
        self.v = v
        self.d1 = d1
        self.d2 = d2

    def __repr__(self):
        return f"Jet2({_val(self.v)!r}, {_val(self.d1)!r}, {_val(self.d2)!r})"

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Jet2) else Jet2(x, 0.0, 0.0)

    def __add__(self, other):
        o = Jet2._lift(other)
        return Jet2(add(self.v, o.v), _add0(self.d1, o.d1), _add0(self.d2, o.d2))

    __radd__ = __add__

    def __sub__(self, other):
        o = Jet2._lift(other)
        return Jet2(sub(self.v, o.v), _add0(self.d1, _neg0(o.d1)), _add0(self.d2, _neg0(o.d2)))

    def __rsub__(self, other):
        return Jet2._lift(other) - self

    def __neg__(self):
        return Jet2(neg(self.v), _neg0(self.d1), _neg0(self.d2))

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            return Jet2(mul(self.v, other), _mul0(self.d1, other), _mul0(self.d2, other))
        a, b = self, other
        d1 = _add0(_mul0(a.d1, b.v), _mul0(a.v, b.d1))
        d2 = _add0(_add0(_mul0(a.d2, b.v), _mul0(2.0, _mul0(a.d1, b.d1))), _mul0(a.v, b.d2))
        return Jet2(mul(a.v, b.v), d1, d2)

    __rmul__ = __mul__

    def __matmul__(self, w):
        """Right-multiply every component by a (constant or Var) matrix."""
        d1, d2 = (0.0 if _is_zero(c) else matmul(c, w) for c in (self.d1, self.d2))
        return Jet2(matmul(self.v, w), d1, d2)

    def _chain(self, f0, f1, f2):
        d1 = _mul0(f1, self.d1)
        d2 = _add0(_mul0(f1, self.d2), _mul0(f2, square(self.d1)))
        return Jet2(f0, d1, d2)

    def sin(self):
        s = sin(self.v)
        return self._chain(s, cos(self.v), neg(s))

    def cos(self):
        c = cos(self.v)
        return self._chain(c, neg(sin(self.v)), neg(c))

    def tanh(self):
        t = tanh(self.v)
        dt = sub(1.0, square(t))
        return self._chain(t, dt, mul(-2.0, mul(t, dt)))

    def exp(self):
        e = exp(self.v)
        return self._chain(e, e, e)

    def square(self):
        return self * self

    def values(self):
        """The three coefficients as plain arrays."""
        return tuple(np.asarray(_val(c), dtype=np.float64) for c in (self.v, self.d1, self.d2))


def jet_seed(x, direction):
    """Seed inputs for differentiation along coordinate ``direction``.

    ``x`` is a vector of input coordinates, or an ``(N, d)`` batch. The result
    is a list with one :class:`Jet2` per coordinate (batched columns when
    ``x`` is 2-D): the chosen coordinate gets ``(x_k, 1, 0)``, the rest
    ``(x_j, 0, 0)``.
    """
    x = np.asarray(x, dtype=np.float64)
    dim = x.shape[-1] if x.ndim else 1
    if not 0 <= direction < dim:
        raise IndexError(f"direction {direction} out of range for input dimension {dim}")
    if x.ndim <= 1:
        x = np.atleast_1d(x)
        return [Jet2(float(x[k]), 1.0 if k == direction else 0.0, 0.0) for k in range(dim)]
    ones, zeros = np.ones(x.shape[0]), np.zeros(x.shape[0])
    return [Jet2(x[:, k], ones if k == direction else zeros, zeros) for k in range(dim)]
