"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every differentiable computation is recorded on a :class:`Tape`.  Nodes are
appended in creation order, which is a valid topological order because an
operation can only consume nodes that already exist.  :meth:`Tape.backward`
sweeps the list once in reverse.

Complex quantities are carried as pairs of real :class:`Var` objects
``(re, im)`` so the tape itself stays real-valued.

Example
-------
>>> tape = Tape()
>>> x = tape.var([1.0, 2.0, 3.0])
>>> y = sum_(x * x)
>>> tape.backward(y)
>>> x.grad
array([2., 4., 6.])
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError

SQRT_EPS = 1e-12
TAYLOR_TOL = 1e-16
EXPM_THETA = 0.5


class Var:
    """A value on a tape together with its adjoint."""

    __slots__ = ("value", "_grad", "tape", "parents", "vjp", "index", "name")

    def __init__(self, value, tape, parents=(), vjp=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self._grad = None
        self.tape = tape
        self.parents = tuple(parents)
        self.vjp = vjp
        self.name = name
        self.index = -1

    @property
    def grad(self):
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.value.shape}, index={self.index})"

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

    def __getitem__(self, idx):
        return take(self, idx)


class Tape:
    """Ordered record of operations.  Single owner, not thread-safe."""

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def var(self, value, name=None):
        """Create a leaf variable."""
        return self._push(Var(value, self, name=name))

    def record(self, value, parents, vjp, name=None):
        """Append an operation node.

        ``vjp`` maps the output adjoint to a tuple of adjoints, one per
        parent (``None`` for parents that receive nothing).
        """
        return self._push(Var(value, self, parents, vjp, name))

    def _push(self, v):
        v.index = len(self.nodes)
        self.nodes.append(v)
        return v

    def zero_grad(self):
        for node in self.nodes:
            node._grad = None

    def backward(self, output):
        if not isinstance(output, Var) or output.tape is not self:
            raise ContractError("backward() needs a Var recorded on this tape")
        if output.value.size != 1:
            raise ContractError(f"backward() needs a scalar output, got shape {output.shape}")
        self.zero_grad()
        output._grad = np.ones_like(output.value)
        for node in reversed(self.nodes[: output.index + 1]):
            if node._grad is None or node.vjp is None:
                continue
            grads = node.vjp(node._grad)
            for parent, g in zip(node.parents, grads):
                if g is None:
                    continue
                g = np.asarray(g, dtype=np.float64)
                if g.shape != parent.value.shape:
                    raise ShapeError(
                        f"adjoint shape {g.shape} != value shape {parent.value.shape}"
                    )
                if parent._grad is None:
                    parent._grad = g.copy()
                else:
                    parent._grad += g


def backward(output):
    output.tape.backward(output)


# ---------------------------------------------------------------- helpers


def _tape_of(*args):
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ContractError("operands live on different tapes")
    if tape is None:
        raise ContractError("at least one operand must be a Var")
    return tape


def _val(a):
    return a.value if isinstance(a, Var) else np.asarray(a, dtype=np.float64)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(a, b, value, ga_fn, gb_fn):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    parents, fns = [], []
    for operand, operand_val, fn in ((a, av, ga_fn), (b, bv, gb_fn)):
        if isinstance(operand, Var):
            parents.append(operand)
            fns.append((fn, operand_val.shape))

    def vjp(g):
        return tuple(_unbroadcast(fn(g), shape) for fn, shape in fns)

    return tape.record(value, parents, vjp)


def _check_broadcast(a, b):
    try:
        np.broadcast_shapes(np.shape(a), np.shape(b))
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {np.shape(a)} with {np.shape(b)}") from exc


def _unary(x, value, dfn):
    tape = _tape_of(x)
    return tape.record(value, (x,), lambda g: (dfn(g),))


# ------------------------------------------------------------ elementwise


def add(a, b):
    av, bv = _val(a), _val(b)
    _check_broadcast(av, bv)
    return _binary(a, b, av + bv, lambda g: g, lambda g: g)


def sub(a, b):
    av, bv = _val(a), _val(b)
    _check_broadcast(av, bv)
    return _binary(a, b, av - bv, lambda g: g, lambda g: -g)


def mul(a, b):
    av, bv = _val(a), _val(b)
    _check_broadcast(av, bv)
    return _binary(a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def div(a, b):
    av, bv = _val(a), _val(b)
    _check_broadcast(av, bv)
    out = av / bv
    return _binary(a, b, out, lambda g: g / bv, lambda g: -g * out / bv)


def neg(x):
    return _unary(x, -x.value, lambda g: -g)


def abs_(x):
    """|x| with subgradient 0 at 0."""
    s = np.sign(x.value)
    return _unary(x, np.abs(x.value), lambda g: g * s)


def square(x):
    v = x.value
    return _unary(x, v * v, lambda g: 2.0 * g * v)


def sqrt(x, eps=SQRT_EPS):
    """sqrt(max(x, eps)); the clamped branch passes no gradient."""
    v = x.value
    live = v > eps
    out = np.sqrt(np.where(live, v, eps))
    return _unary(x, out, lambda g: np.where(live, 0.5 * g / out, 0.0))


def sigmoid(x):
    out = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _unary(x, out, lambda g: g * out * (1.0 - out))


def cos(x):
    v = x.value
    return _unary(x, np.cos(v), lambda g: -g * np.sin(v))


def sin(x):
    v = x.value
    return _unary(x, np.sin(v), lambda g: g * np.cos(v))


def min_with_constant(x, c):
    """Elementwise min(x, c); subgradient 0 where clipped."""
    passed = x.value < c
    return _unary(x, np.where(passed, x.value, c), lambda g: np.where(passed, g, 0.0))


# -------------------------------------------------------------- reductions


def sum_(x, axis=None):
    shape = x.value.shape
    out = x.value.sum(axis=axis)
    if axis is None:
        return _unary(x, out, lambda g: np.broadcast_to(g, shape).copy())
    return _unary(x, out, lambda g: np.broadcast_to(np.expand_dims(g, axis), shape).copy())


def mean(x, axis=None):
    n = x.value.size if axis is None else x.value.shape[axis]
    return sum_(x, axis) * (1.0 / n)


def rcumsum(x):
    """Reverse cumulative sum along the last axis: out[n] = sum(x[n:])."""
    out = np.flip(np.cumsum(np.flip(x.value, -1), axis=-1), -1)
    return _unary(x, out, lambda g: np.cumsum(g, axis=-1))


def window_sum(x, w):
    """Centred weighted moving sum of a 1-D Var with a constant odd window.

    ``out[n] = sum_j w[j] * x[n - nu + j]`` with zeros outside the signal.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or len(w) % 2 == 0:
        raise ContractError("window must be 1-D with odd length")
    if x.value.ndim != 1:
        raise ShapeError("window_sum expects a 1-D operand")
    nu = len(w) // 2
    n = len(x.value)
    # np.convolve flips its second argument; feed the reversed window to correlate.
    out = np.convolve(x.value, w[::-1], mode="full")[nu : nu + n]
    return _unary(x, out, lambda g: np.convolve(g, w, mode="full")[nu : nu + n])


# ----------------------------------------------------------- linear algebra


def dot(a, b):
    av, bv = _val(a), _val(b)
    if av.ndim != 1 or av.shape != bv.shape:
        raise ShapeError(f"dot needs equal 1-D shapes, got {av.shape} and {bv.shape}")
    return _binary(a, b, np.dot(av, bv), lambda g: g * bv, lambda g: g * av)


def matvec(m, v):
    mv, vv = _val(m), _val(v)
    if mv.ndim != 2 or vv.ndim != 1 or mv.shape[1] != vv.shape[0]:
        raise ShapeError(f"matvec shape mismatch {mv.shape} @ {vv.shape}")
    return _binary(m, v, mv @ vv, lambda g: np.outer(g, vv), lambda g: mv.T @ g)


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shape mismatch {av.shape} @ {bv.shape}")
    return _binary(a, b, av @ bv, lambda g: g @ bv.T, lambda g: av.T @ g)


def transpose(x):
    if x.value.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return _unary(x, x.value.T.copy(), lambda g: g.T)


# ------------------------------------------------------- structural ops


def reshape(x, shape):
    old = x.value.shape
    return _unary(x, x.value.reshape(shape), lambda g: g.reshape(old))


def take(x, idx):
    """x[idx] for any numpy index; repeated indices accumulate."""
    shape = x.value.shape

    def dfn(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return out

    return _unary(x, np.array(x.value[idx]), dfn)


def concat(xs, axis=-1):
    xs = list(xs)
    tape = _tape_of(*xs)
    vals = [_val(x) for x in xs]
    try:
        out = np.concatenate(vals, axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]
    parents = [x for x in xs if isinstance(x, Var)]
    is_var = [isinstance(x, Var) for x in xs]

    def vjp(g):
        pieces = np.split(g, bounds, axis=axis)
        return tuple(p for p, keep in zip(pieces, is_var) if keep)

    return tape.record(out, parents, vjp)


def stack(xs, axis=0):
    xs = list(xs)
    expanded = [reshape(x, np.expand_dims(x.value, axis).shape) if isinstance(x, Var)
                else np.expand_dims(np.asarray(x, dtype=np.float64), axis) for x in xs]
    return concat(expanded, axis=axis)


# --------------------------------------------------------------- spectral


def _check_pow2(k):
    if k < 1 or k & (k - 1):
        raise ContractError(f"transform length must be a power of two, got {k}")


def dft(x):
    """Unnormalised DFT along the last axis of a real Var -> (re, im)."""
    k = x.value.shape[-1]
    _check_pow2(k)
    spec = np.fft.fft(x.value, axis=-1)
    tape = x.tape
    re = tape.record(spec.real.copy(), (x,),
                     lambda g: (np.real(np.fft.ifft(g, axis=-1)) * k,))
    im = tape.record(spec.imag.copy(), (x,),
                     lambda g: (np.imag(np.fft.fft(g, axis=-1)),))
    return re, im


def idft(re, im, return_residue=False):
    """Real part of the inverse DFT of the complex pair ``(re, im)``.

    With ``return_residue`` the largest discarded imaginary magnitude is
    returned as well; it stays at rounding level only for conjugate-symmetric
    input.
    """
    rv, iv = _val(re), _val(im)
    if rv.shape != iv.shape:
        raise ShapeError(f"real/imag shapes differ: {rv.shape} vs {iv.shape}")
    k = rv.shape[-1]
    _check_pow2(k)
    full = np.fft.ifft(rv + 1j * iv, axis=-1)
    tape = _tape_of(re, im)
    parents = [p for p in (re, im) if isinstance(p, Var)]
    which = [isinstance(p, Var) for p in (re, im)]

    def vjp(g):
        spec = np.fft.fft(g, axis=-1) / k
        grads = (spec.real, spec.imag)
        return tuple(gr for gr, keep in zip(grads, which) if keep)

    out = tape.record(full.real.copy(), parents, vjp)
    if return_residue:
        return out, float(np.max(np.abs(full.imag))) if full.size else 0.0
    return out


# ---------------------------------------------------------- matrix exponential


def matrix_exp(m):
    """exp(M) by scaling and squaring of a truncated Taylor series.

    Every product is recorded so gradients flow back to ``M``.  The number
    of squarings is chosen from the current value and treated as constant.
    """
    mv = m.value
    if mv.ndim != 2 or mv.shape[0] != mv.shape[1]:
        raise ShapeError(f"matrix_exp needs a square matrix, got {mv.shape}")
    n = mv.shape[0]
    norm = np.abs(mv).sum(axis=0).max() if n else 0.0
    s = 0
    while norm / 2.0**s > EXPM_THETA:
        s += 1
    x = m * (1.0 / 2.0**s) if s else m
    eye = np.eye(n)
    result = x + eye
    term = x
    for k in range(2, 40):
        if np.abs(term.value).max(initial=0.0) < TAYLOR_TOL:
            break
        term = matmul(term, x) * (1.0 / k)
        result = result + term
    for _ in range(s):
        result = matmul(result, result)
    return result
