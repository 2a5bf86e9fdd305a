"""Reverse-mode automatic differentiation over numpy arrays.

A small tape engine specialized for FFT-based networks: every operation
records its parents and a vector-Jacobian product, and `Tensor.backward`
walks the tape in reverse topological order.

Complex convention: for a real-valued loss L and a complex intermediate z,
the stored gradient is dL/dRe(z) + i*dL/dIm(z). Under this convention the
pullback of a C-linear map A is its conjugate transpose, the elementwise
product w = a*b pulls back as g_a = conj(b)*g, and the pullback of the
unnormalized FFT is prod(N) times the normalized inverse FFT. Where a real
tensor feeds a complex op, the real part of the complex pullback is the
gradient.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from .errors import HermitianViolation

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the context (inference / warm-up)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- graph -----------------------------------------------------------

    def backward(self, seed=None):
        """Accumulate gradients of self (seeded with ones) into the leaves."""
        if seed is None:
            seed = np.ones_like(self.data)
        self.grad = np.asarray(seed)
        for node in reversed(_toposort(self)):
            if node._vjp is None or node.grad is None:
                continue
            contributions = node._vjp(node.grad)
            for parent, g in zip(node._parents, contributions):
                if g is None or not parent.requires_grad:
                    continue
                g = _match_dtype(g, parent.data)
                parent.grad = g if parent.grad is None else parent.grad + g
            if node._parents:
                node.grad = None  # free intermediate cotangents early

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def _toposort(root: Tensor) -> list[Tensor]:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def _match_dtype(g: np.ndarray, data: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(g) and not np.iscomplexobj(data):
        return np.ascontiguousarray(g.real)
    if np.iscomplexobj(data) and not np.iscomplexobj(g):
        return g.astype(np.complex128)
    return g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _node(data, parents, vjp) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=tuple(parents), vjp=vjp)
    return Tensor(data)


# -- arithmetic ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        ga = _unbroadcast(np.conjugate(b.data) * g, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(np.conjugate(a.data) * g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2D operands only")
    out = a.data @ b.data

    def vjp(g):
        ga = g @ np.conjugate(b.data).T if a.requires_grad else None
        gb = np.conjugate(a.data).T @ g if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), vjp)


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum()

    def vjp(g):
        return (np.broadcast_to(g, a.data.shape),)

    return _node(out, (a,), vjp)


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    return mul(sum_all(a), 1.0 / a.data.size)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    root = np.sqrt(a.data)

    def vjp(g):
        return (g / (2.0 * root),)

    return _node(root, (a,), vjp)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - t * t),)

    return _node(t, (a,), vjp)


def sin(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g * np.cos(a.data),)

    return _node(np.sin(a.data), (a,), vjp)


# -- shape manipulation ----------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _node(a.data.reshape(shape), (a,), vjp)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (np.transpose(g, inverse),)

    return _node(np.transpose(a.data, axes), (a,), vjp)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), vjp)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _node(a.data[idx], (a,), vjp)


# -- complex / spectral ops --------------------------------------------------


def to_complex(re, im) -> Tensor:
    re, im = as_tensor(re), as_tensor(im)

    def vjp(g):
        return np.ascontiguousarray(g.real), np.ascontiguousarray(g.imag)

    return _node(re.data + 1j * im.data, (re, im), vjp)


def conj(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (np.conjugate(g),)

    return _node(np.conjugate(a.data), (a,), vjp)


def real(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g.astype(np.complex128),)

    return _node(np.ascontiguousarray(a.data.real), (a,), vjp)


def flip_modes(a, axes) -> Tensor:
    """Index reversal k -> -k (mod N) along the given axes; self-inverse."""
    a = as_tensor(a)

    def rev(x):
        return np.roll(np.flip(x, axis=axes), shift=[1] * len(axes), axis=axes)

    def vjp(g):
        return (rev(g),)

    return _node(rev(a.data), (a,), vjp)


def fftn(a, axes) -> Tensor:
    a = as_tensor(a)
    scale = math.prod(a.data.shape[ax] for ax in axes)

    def vjp(g):
        return (scale * np.fft.ifftn(g, axes=axes),)

    return _node(np.fft.fftn(a.data, axes=axes), (a,), vjp)


def ifftn_real(a, axes, hermitian_rtol: float | None = 1e-8) -> Tensor:
    """Normalized inverse FFT followed by taking the real part.

    If hermitian_rtol is given, the discarded imaginary residue must stay
    below rtol * field RMS, else HermitianViolation is raised.
    """
    a = as_tensor(a)
    scale = math.prod(a.data.shape[ax] for ax in axes)
    u = np.fft.ifftn(a.data, axes=axes)
    if hermitian_rtol is not None:
        rms = math.sqrt(float(np.mean(np.abs(u) ** 2)))
        residue = float(np.max(np.abs(u.imag))) if u.size else 0.0
        if residue > hermitian_rtol * rms:
            raise HermitianViolation(
                f"imaginary residue {residue:.3e} exceeds {hermitian_rtol:.1e} * RMS {rms:.3e}"
            )

    def vjp(g):
        # adjoint of (real . ifftn): embed the real cotangent and push
        # through the forward transform with the inverse normalization
        return (np.fft.fftn(g.astype(np.complex128), axes=axes) / scale,)

    return _node(np.ascontiguousarray(u.real), (a,), vjp)
