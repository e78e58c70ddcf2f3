"""Heisenberg-picture action of Gaussian unitaries on ladder operators.

Every generator used in the unitary words is at most quadratic in bosonic
ladder operators.  Writing ``xi = (a_1..a_n, a_1^+..a_n^+, 1)``, such a
generator is ``G = sum_lm Q_lm xi_l xi_m`` and ``[G, xi_j]`` is again
linear in ``xi``.  Conjugating ``G`` by any product of exponentials of such
generators therefore only needs small ``(2n+1) x (2n+1)`` matrices, and the
conjugated generator can be rebuilt as an exact operator expression.  This
removes Fock-cutoff error from frame derivatives of Gaussian words.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from .errors import ModelInputError
from .expr import (ANNIHILATE, CREATE, Ladder, Num, OperatorExpression,
                   OperatorTerm)


def _slot(f: Ladder, n: int) -> int:
    if not f.boson:
        raise ModelInputError("Gaussian generators may not contain two-level operators")
    return f.mode if f.kind == ANNIHILATE else n + f.mode


def quadratic_form(expr: OperatorExpression, n: int) -> np.ndarray:
    """Coefficient matrix ``Q`` of a numeric, at most quadratic expression."""
    Q = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
    c = 2 * n
    for t in expr.terms:
        val = t.coeff.evaluate({})
        fs = t.factors
        if len(fs) == 0:
            Q[c, c] += val
        elif len(fs) == 1:
            Q[_slot(fs[0], n), c] += val
        elif len(fs) == 2:
            Q[_slot(fs[0], n), _slot(fs[1], n)] += val
        else:
            raise ModelInputError("generator is not at most quadratic in ladder operators")
    return Q


def expression(Q: np.ndarray, n: int, drop: float = 1e-15) -> OperatorExpression:
    """Inverse of :func:`quadratic_form`."""
    def lad(k):
        return () if k == 2 * n else ((Ladder(ANNIHILATE, k),) if k < n else (Ladder(CREATE, k - n),))
    terms = []
    scale = max(np.max(np.abs(Q)), 1.0)
    for l in range(2 * n + 1):
        for m in range(2 * n + 1):
            v = Q[l, m]
            if abs(v) > drop * scale:
                terms.append(OperatorTerm(Num(complex(v)), lad(l) + lad(m)))
    return OperatorExpression(tuple(terms))


def symplectic_unit(n: int) -> np.ndarray:
    """``omega[m, j] = [xi_m, xi_j]``."""
    w = np.zeros((2 * n + 1, 2 * n + 1))
    for k in range(n):
        w[k, n + k] = 1.0
        w[n + k, k] = -1.0
    return w


def adjoint_matrix(Q: np.ndarray, n: int) -> np.ndarray:
    """``M`` with ``[G, xi_j] = sum_k M[j, k] xi_k``."""
    return ((Q + Q.T) @ symplectic_unit(n)).T


def conjugation_map(generators: list[np.ndarray], amounts: list[float], n: int) -> np.ndarray:
    """``T`` with ``R^+ xi_j R = sum_k T[j, k] xi_k`` for ``R = prod_l exp(t_l G_l)``.

    ``generators`` are quadratic-form matrices in product order (leftmost
    first) and ``amounts`` the exponents ``t_l``.
    """
    T = np.eye(2 * n + 1, dtype=complex)
    for Q, t in zip(generators, amounts):
        if t != 0:
            T = T @ expm(-t * adjoint_matrix(Q, n))
    return T


def conjugate_form(Q: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Quadratic form of ``R^+ G R`` given the conjugation map of ``R``."""
    return T.T @ Q @ T
