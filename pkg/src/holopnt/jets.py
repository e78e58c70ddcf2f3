"""Truncated multivariate Taylor jets.

A jet of order ``K`` in ``M`` real variables stores the Taylor coefficients
``c_alpha`` of a function ``f(x0 + delta) = sum_alpha c_alpha delta**alpha``
for every multi-index ``|alpha| <= K``.  Coefficients are stacked along the
leading axis, so a matrix-valued jet is an array of shape ``(n_mon, r, c)``.

Monomials are ordered by total degree first, which makes every lower-order
truncation a prefix of the coefficient array.  Products, derivatives and
analytic functions of jets are exact up to the truncation order, which is
what lets the geometry module obtain curvature and its covariant
derivatives without nested finite differences.
"""

from __future__ import annotations

import itertools
from functools import cached_property, lru_cache
from math import comb, factorial

import numpy as np

_CHUNK = 4096


def _graded_exponents(nvars: int, order: int) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    for deg in range(order + 1):
        block = []
        for combo in itertools.combinations_with_replacement(range(nvars), deg):
            e = [0] * nvars
            for v in combo:
                e[v] += 1
            block.append(tuple(e))
        block.sort(reverse=True)
        out.extend(block)
    return out


class JetIndex:
    """Multi-index bookkeeping for jets in ``nvars`` variables up to ``order``."""

    def __init__(self, nvars: int, order: int):
        if nvars < 0 or order < 0:
            raise ValueError("nvars and order must be non-negative")
        self.nvars = nvars
        self.order = order
        exps = _graded_exponents(nvars, order)
        self.exps = np.array(exps, dtype=int).reshape(len(exps), nvars)
        self.degree = self.exps.sum(axis=1) if nvars else np.zeros(len(exps), int)
        self.pos = {e: i for i, e in enumerate(exps)}

    @property
    def size(self) -> int:
        return len(self.exps)

    def count(self, order: int) -> int:
        """Number of monomials of degree at most ``order``."""
        order = min(order, self.order)
        if order < 0:
            return 0
        return comb(self.nvars + order, order)

    @lru_cache(maxsize=None)
    def pairs(self, order: int):
        """Index triples (i, j, k) with exps[i] + exps[j] = exps[k], deg k <= order.

        Returned sorted by ``k`` together with the start of every k-segment.
        """
        n = self.count(order)
        I, J, K = [], [], []
        for i in range(n):
            ei = self.exps[i]
            di = self.degree[i]
            for j in range(self.count(order - di)):
                k = self.pos[tuple(ei + self.exps[j])]
                I.append(i)
                J.append(j)
                K.append(k)
        I = np.array(I, dtype=np.intp)
        J = np.array(J, dtype=np.intp)
        K = np.array(K, dtype=np.intp)
        perm = np.argsort(K, kind="stable")
        return I[perm], J[perm], K[perm]

    @lru_cache(maxsize=None)
    def shift(self, var: int, k: int, order: int):
        """(dst, src) with exps[src] = exps[dst] - k e_var, deg dst <= order."""
        dst, src = [], []
        for a in range(self.count(order)):
            e = self.exps[a]
            if e[var] >= k:
                f = e.copy()
                f[var] -= k
                dst.append(a)
                src.append(self.pos[tuple(f)])
        return np.array(dst, dtype=np.intp), np.array(src, dtype=np.intp)

    @lru_cache(maxsize=None)
    def deriv_map(self, var: int, order: int):
        """(src, factor) so that (d f / d x_var)[a] = factor[a] * f[src[a]].

        ``order`` is the valid order of ``f``; the result is valid to order-1.
        """
        n = self.count(order - 1)
        src = np.empty(n, dtype=np.intp)
        fac = np.empty(n)
        for a in range(n):
            e = self.exps[a].copy()
            e[var] += 1
            src[a] = self.pos[tuple(e)]
            fac[a] = e[var]
        return src, fac

    @cached_property
    def unit(self) -> np.ndarray:
        """Scalar jet of the constant 1."""
        u = np.zeros(self.size)
        u[0] = 1.0
        return u


# ---------------------------------------------------------------------------
# products and derivatives

def mul(index: JetIndex, X: np.ndarray, Y: np.ndarray, order: int,
        matrix: bool = True, top: bool = False) -> np.ndarray:
    """Jet product truncated at ``order``.

    ``matrix=True`` multiplies coefficient matrices over the trailing two
    axes (the monomial axis must come first); ``matrix=False`` multiplies
    elementwise with broadcasting.  ``top=True`` returns only the
    coefficients of degree exactly ``order``.
    """
    n = index.count(order)
    lo = index.count(order - 1) if top else 0
    I, J, K = index.pairs(order)
    if top:
        first = int(np.searchsorted(K, lo))
        I, J, K = I[first:], J[first:], K[first:] - lo
    Xn = X[:n]
    Yn = Y[:n]
    if matrix:
        shape = np.broadcast_shapes(Xn.shape[1:-2], Yn.shape[1:-2]) + (Xn.shape[-2], Yn.shape[-1])
    else:
        shape = np.broadcast_shapes(Xn.shape[1:], Yn.shape[1:])
    dtype = np.result_type(Xn.dtype, Yn.dtype)
    Z = np.zeros((n - lo,) + shape, dtype=dtype)
    # chunk so the gathered operands stay small
    per = int(np.prod(shape)) if shape else 1
    step = max(1, min(_CHUNK, (1 << 22) // max(per, 1)))
    for s in range(0, len(K), step):
        i, j, k = I[s:s + step], J[s:s + step], K[s:s + step]
        prod = Xn[i] @ Yn[j] if matrix else Xn[i] * Yn[j]
        starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
        Z[k[starts]] += np.add.reduceat(prod, starts, axis=0)
    return Z


def deriv(index: JetIndex, X: np.ndarray, var: int, order: int) -> np.ndarray:
    """Partial derivative of a jet valid to ``order``; result valid to order-1."""
    src, fac = index.deriv_map(var, order)
    f = fac.reshape((-1,) + (1,) * (X.ndim - 1))
    return X[src] * f


def commutator(index: JetIndex, X: np.ndarray, Y: np.ndarray, order: int) -> np.ndarray:
    return mul(index, X, Y, order) - mul(index, Y, X, order)


def dagger(X: np.ndarray) -> np.ndarray:
    """Coefficientwise conjugate transpose (variables are real)."""
    return np.conj(np.swapaxes(X, -1, -2))


# ---------------------------------------------------------------------------
# scalar jets

def variable(index: JetIndex, var: int, value: float) -> np.ndarray:
    u = np.zeros(index.size)
    u[0] = value
    if index.order >= 1:
        e = [0] * index.nvars
        e[var] = 1
        u[index.pos[tuple(e)]] = 1.0
    return u


def constant(index: JetIndex, value) -> np.ndarray:
    u = np.zeros(index.size, dtype=np.result_type(type(value), float))
    u[0] = value
    return u


def compose(index: JetIndex, u: np.ndarray, taylor: list) -> np.ndarray:
    """Evaluate ``sum_k taylor[k] * (u - u0)**k`` as a jet.

    ``taylor[k]`` is ``f^(k)(u0) / k!`` for the outer function ``f``.
    """
    v = u.copy()
    v[0] = 0
    out = np.zeros(index.size, dtype=np.result_type(u.dtype, complex))
    out[0] = taylor[0]
    power = index.unit.astype(out.dtype)
    for k in range(1, min(len(taylor), index.order + 1)):
        power = mul(index, power, v, index.order, matrix=False)
        out = out + taylor[k] * power
    return out


def scalar_exp(index: JetIndex, u: np.ndarray) -> np.ndarray:
    e0 = np.exp(u[0])
    return compose(index, u, [e0 / factorial(k) for k in range(index.order + 1)])


def scalar_cos(index: JetIndex, u: np.ndarray) -> np.ndarray:
    c, s = np.cos(u[0]), np.sin(u[0])
    cyc = [c, -s, -c, s]
    return compose(index, u, [cyc[k % 4] / factorial(k) for k in range(index.order + 1)])


def scalar_sin(index: JetIndex, u: np.ndarray) -> np.ndarray:
    c, s = np.cos(u[0]), np.sin(u[0])
    cyc = [s, c, -s, -c]
    return compose(index, u, [cyc[k % 4] / factorial(k) for k in range(index.order + 1)])


def scalar_power(index: JetIndex, u: np.ndarray, a: float) -> np.ndarray:
    """``u**a`` for real ``a``; ``u0`` must be non-zero unless ``a`` is a natural number."""
    u0 = complex(u[0])
    if float(a).is_integer() and a >= 0:
        out = index.unit.astype(complex)
        for _ in range(int(a)):
            out = mul(index, out, u, index.order, matrix=False)
        return out
    if u0 == 0:
        raise ZeroDivisionError("power of a jet with zero constant term")
    taylor = []
    for k in range(index.order + 1):
        coef = 1.0
        for m in range(k):
            coef *= (a - m) / (m + 1)
        taylor.append(coef * u0 ** (a - k))
    return compose(index, u, taylor)


# ---------------------------------------------------------------------------
# matrix functions

def inverse_sqrt_near_identity(index: JetIndex, M: np.ndarray, order: int) -> np.ndarray:
    """Jet of ``M**(-1/2)`` for a matrix jet with ``M[0] = I``.

    Uses the binomial series in ``X = M - I``; since ``X`` has no constant
    term, ``X**n`` vanishes beyond the truncation order.
    """
    d = M.shape[-1]
    X = M[: index.count(order)].copy()
    X[0] -= np.eye(d)
    out = np.zeros_like(X)
    out[0] = np.eye(d)
    power = out.copy()
    coef = 1.0
    for n in range(1, order + 1):
        coef *= (-0.5 - (n - 1)) / n
        power = mul(index, power, X, order)
        out = out + coef * power
    return out
