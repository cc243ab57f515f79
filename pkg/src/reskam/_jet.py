"""
Truncated multivariate Taylor arithmetic ("jets").

A :class:`JetSpace` fixes the variables and the truncation. Variables are split into groups, each
with its own cap on the total degree of the group, so that (for instance) a Hamiltonian can be
expanded to degree 2 in the fast actions and degree 6 in the secular variables at the same time.

A :class:`Jet` holds the Taylor coefficients of one function per point of an optional batch, so the
same expansion can be carried out on a whole grid of angles at once::

    >>> space = JetSpace([(2, 4)])
    >>> x, y = space.variable(0, 0.5), space.variable(1)
    >>> f = (1 + x * y).sqrt()
    >>> f.derivative(1).value()
    0.25
"""

from __future__ import annotations

import itertools
import math
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

__all__ = ("JetSpace", "Jet")

Number = Union[int, float, complex, np.ndarray]

_PAIR_CHUNK = 1 << 22


def _binomials(alpha: float, count: int) -> List[float]:
    """
    Returns ``C(alpha, k)`` for ``k < count``; ``alpha`` may be any real, negative integers included.
    """
    out = [1.0]
    for k in range(1, count):
        out.append(out[-1] * (alpha - k + 1) / k)
    return out[:count]


class JetSpace:
    """
    The monomial basis of a truncated Taylor algebra.

    Args:
        groups: A sequence of ``(number of variables, degree cap)`` pairs.
    """

    def __init__(self, groups: Sequence[Tuple[int, int]]):
        assert groups, "at least one variable group must be specified."
        for size, cap in groups:
            assert size > 0 and cap >= 0, "variable groups must be non-empty with cap >= 0."
        self.groups: Tuple[Tuple[int, int], ...] = tuple((int(n), int(c)) for n, c in groups)
        self.nvars = sum(n for n, _ in self.groups)
        self.exponents = self._enumerate()
        self.size = len(self.exponents)
        self.degrees = self.exponents.sum(axis=1)
        self.max_degree = int(self.degrees.max())
        self._base = max(c for _, c in self.groups) + 1
        self._radix = self._base ** np.arange(self.nvars, dtype=np.int64)
        self._keys = self.exponents @ self._radix
        self._lookup = np.full(self._base**self.nvars, -1, dtype=np.int64)
        self._lookup[self._keys] = np.arange(self.size)

    def __repr__(self):
        return f"JetSpace({list(self.groups)}, size={self.size})"

    def __eq__(self, other):
        return isinstance(other, JetSpace) and self.groups == other.groups

    def __hash__(self):
        return hash(self.groups)

    def index(self, exponent: Sequence[int]) -> int:
        """
        Returns the position of a monomial, or -1 when it is truncated.
        """
        exponent = np.asarray(exponent, dtype=np.int64)
        if exponent.min() < 0 or not self._within(exponent[None])[0]:
            return -1
        return int(self._lookup[exponent @ self._radix])

    def zeros(self, batch_shape: Tuple[int, ...] = (), dtype=float) -> Jet:
        return Jet(self, np.zeros(batch_shape + (self.size,), dtype=dtype))

    def constant(self, value: Number, batch_shape: Tuple[int, ...] = ()) -> Jet:
        value = np.asarray(value)
        shape = np.broadcast_shapes(value.shape, batch_shape)
        c = np.zeros(shape + (self.size,), dtype=np.result_type(value, float))
        c[..., 0] = value
        return Jet(self, c)

    def variable(self, i: int, value: Number = 0.0, batch_shape: Tuple[int, ...] = ()) -> Jet:
        """
        Returns the jet of ``value + x_i``.
        """
        assert 0 <= i < self.nvars, f"{i} is not a valid variable index."
        jet = self.constant(value, batch_shape)
        position = self.index(np.eye(self.nvars, dtype=np.int64)[i])
        if position >= 0:
            jet.c[..., position] = 1.0
        return jet

    def from_coefficients(self, c: np.ndarray) -> Jet:
        c = np.asarray(c)
        assert c.shape[-1] == self.size, "coefficients do not match the space."
        return Jet(self, c)

    def embed(self, jet: Jet, variables: Sequence[int]) -> Jet:
        """
        Re-expresses a jet of another space in this one, mapping its variable ``v`` onto ``variables[v]``.

        Monomials beyond this space's caps are dropped.
        """
        source = jet.space
        assert len(variables) == source.nvars, "one target variable per source variable is required."
        exps = np.zeros((source.size, self.nvars), dtype=np.int64)
        exps[:, list(variables)] = source.exponents
        keep = self._within(exps)
        target = self._lookup[exps[keep] @ self._radix]
        out = np.zeros(jet.c.shape[:-1] + (self.size,), dtype=jet.c.dtype)
        out[..., target] = jet.c[..., keep]
        return Jet(self, out)

    def evaluate(self, c: np.ndarray, points: np.ndarray) -> np.ndarray:
        """
        Evaluates a batch-less coefficient vector as a polynomial at ``points`` of shape (P, nvars).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.monomials_at(points) @ c

    def monomials_at(self, points: np.ndarray) -> np.ndarray:
        powers = points[:, :, None] ** np.arange(self.max_degree + 1)
        values = np.ones((len(points), self.size))
        for v in range(self.nvars):
            values *= powers[:, v, self.exponents[:, v]]
        return values

    def _enumerate(self) -> np.ndarray:
        per_group = []
        for size, cap in self.groups:
            monomials = [
                e
                for e in itertools.product(range(cap + 1), repeat=size)
                if sum(e) <= cap
            ]
            monomials.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
            per_group.append(monomials)
        rows = [sum(parts, ()) for parts in itertools.product(*per_group)]
        rows.sort(key=sum)
        return np.array(rows, dtype=np.int64).reshape(len(rows), self.nvars)

    def _within(self, exps: np.ndarray) -> np.ndarray:
        ok = np.ones(len(exps), dtype=bool)
        start = 0
        for size, cap in self.groups:
            ok &= exps[:, start : start + size].sum(axis=1) <= cap
            start += size
        return ok

    @cached_property
    def _pairs(self) -> Tuple[np.ndarray, np.ndarray, sparse.csr_matrix]:
        left, right = np.meshgrid(np.arange(self.size), np.arange(self.size), indexing="ij")
        left, right = left.ravel(), right.ravel()
        ok = np.ones(len(left), dtype=bool)
        start = 0
        for size, cap in self.groups:
            group_degree = self.exponents[:, start : start + size].sum(axis=1)
            ok &= group_degree[left] + group_degree[right] <= cap
            start += size
        left, right = left[ok], right[ok]
        target = self._lookup[self._keys[left] + self._keys[right]]
        reduce = sparse.csr_matrix(
            (np.ones(len(left)), (target, np.arange(len(left)))),
            shape=(self.size, len(left)),
        )
        return left, right, reduce

    def _multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        left, right, reduce = self._pairs
        shape = np.broadcast_shapes(a.shape, b.shape)
        a = np.broadcast_to(a, shape).reshape(-1, self.size)
        b = np.broadcast_to(b, shape).reshape(-1, self.size)
        out = np.empty((len(a), self.size), dtype=np.result_type(a, b))
        rows = max(1, _PAIR_CHUNK // max(1, len(left)))
        for start in range(0, len(a), rows):
            stop = start + rows
            products = a[start:stop, left] * b[start:stop, right]
            out[start:stop] = (reduce @ products.T).T
        return out.reshape(shape)

    @cached_property
    def _derivative_maps(self) -> List[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
        maps = []
        for v in range(self.nvars):
            src = np.nonzero(self.exponents[:, v] > 0)[0]
            lowered = self.exponents[src].copy()
            lowered[:, v] -= 1
            dst = self._lookup[lowered @ self._radix]
            maps.append((src, dst, self.exponents[src, v].astype(float)))
        return maps


class Jet:
    """
    Truncated Taylor coefficients of a function, for every point of a batch.

    Args:
        space: The monomial basis.
        c: Coefficients of shape ``batch_shape + (space.size,)``.
    """

    __array_priority__ = 100
    __array_ufunc__ = None

    def __init__(self, space: JetSpace, c: np.ndarray):
        self.space = space
        self.c = c

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.c.shape[:-1]

    def value(self) -> np.ndarray:
        """
        Returns the constant term (the function value at the expansion point).
        """
        value = self.c[..., 0]
        return value.item() if value.ndim == 0 else value

    def coefficient(self, exponent: Sequence[int]):
        position = self.space.index(exponent)
        if position < 0:
            return 0.0
        value = self.c[..., position]
        return value.item() if value.ndim == 0 else value

    def copy(self) -> Jet:
        return Jet(self.space, self.c.copy())

    def real(self) -> Jet:
        return Jet(self.space, self.c.real.copy())

    def _coerce(self, other) -> Optional[Jet]:
        if isinstance(other, Jet):
            assert other.space == self.space, "jets belong to different spaces."
            return other
        return None

    def __add__(self, other) -> Jet:
        if (jet := self._coerce(other)) is not None:
            return Jet(self.space, self.c + jet.c)
        c = self.c + np.zeros_like(np.asarray(other))[..., None]
        c = c.astype(np.result_type(c, np.asarray(other)), copy=False)
        c[..., 0] += other
        return Jet(self.space, c)

    __radd__ = __add__

    def __neg__(self) -> Jet:
        return Jet(self.space, -self.c)

    def __sub__(self, other) -> Jet:
        return self + (-other)

    def __rsub__(self, other) -> Jet:
        return (-self) + other

    def __mul__(self, other) -> Jet:
        if (jet := self._coerce(other)) is not None:
            return Jet(self.space, self.space._multiply(self.c, jet.c))
        return Jet(self.space, self.c * np.asarray(other)[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other) -> Jet:
        if (jet := self._coerce(other)) is not None:
            return self * jet.reciprocal()
        return Jet(self.space, self.c / np.asarray(other)[..., None])

    def __rtruediv__(self, other) -> Jet:
        return self.reciprocal() * other

    def __pow__(self, alpha) -> Jet:
        if isinstance(alpha, int) and alpha >= 0:
            result = self.space.constant(1.0, self.batch_shape) if alpha == 0 else self
            for _ in range(alpha - 1):
                result = result * self
            return result
        c0 = self.c[..., 0]
        n = np.arange(self.space.max_degree + 1)
        derivs = [b * c0 ** (alpha - k) for k, b in zip(n, _binomials(alpha, len(n)))]
        return self.compose(derivs)

    def sqrt(self) -> Jet:
        return self**0.5

    def reciprocal(self) -> Jet:
        return self ** (-1)

    def sin(self) -> Jet:
        return self.sincos()[0]

    def cos(self) -> Jet:
        return self.sincos()[1]

    def sincos(self) -> Tuple[Jet, Jet]:
        c0 = self.c[..., 0]
        s, c = np.sin(c0), np.cos(c0)
        cycle_sin = [s, c, -s, -c]
        cycle_cos = [c, -s, -c, s]
        n = self.space.max_degree + 1
        powers = self._nilpotent_powers()
        fact = [math.factorial(k) for k in range(n)]
        sin = self._compose_with([cycle_sin[k % 4] / fact[k] for k in range(n)], powers)
        cos = self._compose_with([cycle_cos[k % 4] / fact[k] for k in range(n)], powers)
        return sin, cos

    def exp_i(self) -> Jet:
        """
        Returns the jet of exp(i f).
        """
        c0 = self.c[..., 0]
        base = np.exp(1j * c0)
        n = self.space.max_degree + 1
        return self.compose([base * (1j**k) / math.factorial(k) for k in range(n)])

    def exp(self) -> Jet:
        base = np.exp(self.c[..., 0])
        n = self.space.max_degree + 1
        return self.compose([base / math.factorial(k) for k in range(n)])

    def compose(self, derivs: Sequence[Number]) -> Jet:
        """
        Returns g(self) given the Taylor coefficients ``derivs[k] = g^(k)(c0) / k!`` at the constant term c0.
        """
        return self._compose_with(derivs, self._nilpotent_powers())

    def _nilpotent_powers(self) -> List[Jet]:
        delta = self.copy()
        delta.c[..., 0] = 0
        powers = [delta]
        for _ in range(self.space.max_degree - 1):
            powers.append(powers[-1] * delta)
        return powers

    def _compose_with(self, derivs: Sequence[Number], powers: List[Jet]) -> Jet:
        derivs = [np.asarray(d) for d in derivs]
        dtype = np.result_type(self.c, *derivs)
        out = np.zeros(self.c.shape, dtype=dtype)
        out[..., 0] = derivs[0]
        for k, power in enumerate(powers, start=1):
            if k >= len(derivs):
                break
            out += power.c * derivs[k][..., None]
        return Jet(self.space, out)

    def derivative(self, v: int) -> Jet:
        src, dst, factor = self.space._derivative_maps[v]
        out = np.zeros_like(self.c)
        out[..., dst] = self.c[..., src] * factor
        return Jet(self.space, out)

    def gradient(self) -> np.ndarray:
        """
        Returns the first derivatives at the expansion point, shape ``batch_shape + (nvars,)``.
        """
        eye = np.eye(self.space.nvars, dtype=np.int64)
        return np.stack([np.asarray(self.coefficient(e)) for e in eye], axis=-1)

    def hessian(self) -> np.ndarray:
        n = self.space.nvars
        out = np.zeros(self.batch_shape + (n, n), dtype=self.c.dtype)
        for i in range(n):
            for j in range(i, n):
                e = np.zeros(n, dtype=np.int64)
                e[i] += 1
                e[j] += 1
                value = np.asarray(self.coefficient(e))
                value = value * 2 if i == j else value
                out[..., i, j] = value
                out[..., j, i] = value
        return out

    def compose_linear(self, matrix: np.ndarray, shift: Optional[np.ndarray] = None) -> Jet:
        """
        Substitutes ``x = matrix @ z + shift`` into a batch-less polynomial jet.

        The space must consist of a single variable group so the degree truncation is preserved.
        """
        assert len(self.space.groups) == 1, "linear substitution needs a single variable group."
        assert self.c.ndim == 1, "linear substitution applies to batch-less jets."
        matrix = np.asarray(matrix)
        space = self.space
        dtype = np.result_type(self.c, matrix)
        zs = [space.variable(j).c.astype(dtype) for j in range(space.nvars)]
        one = space.constant(1.0).c.astype(dtype)
        shift = np.zeros(space.nvars) if shift is None else np.asarray(shift)
        bases = [
            Jet(space, shift[i] * one + sum(matrix[i, j] * zs[j] for j in range(space.nvars)))
            for i in range(space.nvars)
        ]
        cache = [[space.constant(1.0).c.astype(dtype), b.c] for b in bases]

        def power(i: int, k: int) -> np.ndarray:
            while len(cache[i]) <= k:
                cache[i].append(space._multiply(cache[i][-1], bases[i].c))
            return cache[i][k]

        out = np.zeros(space.size, dtype=dtype)
        for m, coefficient in enumerate(self.c):
            if coefficient == 0:
                continue
            term = None
            for i, k in enumerate(space.exponents[m]):
                if k == 0:
                    continue
                factor = power(i, int(k))
                term = factor if term is None else space._multiply(term, factor)
            out += coefficient * (term if term is not None else cache[0][0])
        return Jet(space, out)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.space.evaluate(self.c, points)

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> Jet:
        return Jet(self.space, func(self.c))
