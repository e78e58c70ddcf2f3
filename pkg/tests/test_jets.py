import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from holopnt import jets

small = st.floats(-1.5, 1.5, allow_nan=False)


def taylor_eval(index, X, h):
    """Evaluate a scalar jet at offset h."""
    return sum(X[i] * np.prod(np.asarray(h) ** e) for i, e in enumerate(index.exps))


def test_index_counts():
    idx = jets.JetIndex(3, 4)
    assert idx.size == math.comb(7, 4)
    assert idx.count(0) == 1
    assert idx.count(1) == 4
    assert all(idx.degree[:-1] <= idx.degree[1:])


@given(small, small)
def test_exp_of_sum_is_product(x, y):
    idx = jets.JetIndex(2, 5)
    u = jets.variable(idx, 0, x)
    v = jets.variable(idx, 1, y)
    lhs = jets.scalar_exp(idx, u + v)
    rhs = jets.mul(idx, jets.scalar_exp(idx, u), jets.scalar_exp(idx, v), 5, matrix=False)
    assert np.allclose(lhs, rhs, atol=1e-12)


@given(small)
def test_sin_cos_identity(x):
    idx = jets.JetIndex(1, 6)
    u = jets.variable(idx, 0, x)
    s, c = jets.scalar_sin(idx, u), jets.scalar_cos(idx, u)
    one = jets.mul(idx, s, s, 6, matrix=False) + jets.mul(idx, c, c, 6, matrix=False)
    assert np.allclose(one, jets.constant(idx, 1.0), atol=1e-12)


def test_jet_matches_function_near_point():
    idx = jets.JetIndex(2, 6)
    x0, y0 = 0.3, -0.2
    u = jets.variable(idx, 0, x0)
    v = jets.variable(idx, 1, y0)
    f = jets.mul(idx, jets.scalar_sin(idx, u), jets.scalar_exp(idx, v), 6, matrix=False)
    h = (1e-2, -2e-2)
    exact = math.sin(x0 + h[0]) * math.exp(y0 + h[1])
    assert abs(taylor_eval(idx, f, h) - exact) < 1e-12


def test_derivative_of_product_rule():
    idx = jets.JetIndex(2, 4)
    u = jets.variable(idx, 0, 0.4)
    v = jets.variable(idx, 1, 1.1)
    f = jets.mul(idx, jets.scalar_sin(idx, u), jets.scalar_cos(idx, v), 4, matrix=False)
    df = jets.deriv(idx, f, 0, 4)
    expect = jets.mul(idx, jets.scalar_cos(idx, u), jets.scalar_cos(idx, v), 3, matrix=False)
    n = idx.count(3)
    assert np.allclose(df[:n], expect[:n], atol=1e-13)


def test_power_jet():
    idx = jets.JetIndex(1, 5)
    u = jets.variable(idx, 0, 2.0)
    p = jets.scalar_power(idx, u, -0.5)
    assert abs(taylor_eval(idx, p, [0.01]) - 2.01 ** -0.5) < 1e-13


def test_matrix_product_and_commutator():
    rng = np.random.default_rng(0)
    idx = jets.JetIndex(2, 3)
    X = rng.normal(size=(idx.size, 3, 3)) + 1j * rng.normal(size=(idx.size, 3, 3))
    Y = rng.normal(size=(idx.size, 3, 3))
    h = np.array([1e-3, 2e-3])
    Xh = sum(X[i] * np.prod(h ** e) for i, e in enumerate(idx.exps))
    Yh = sum(Y[i] * np.prod(h ** e) for i, e in enumerate(idx.exps))
    Z = jets.commutator(idx, X, Y, 3)
    Zh = sum(Z[i] * np.prod(h ** e) for i, e in enumerate(idx.exps))
    # truncation error is fourth order in h
    assert np.abs(Zh - (Xh @ Yh - Yh @ Xh)).max() < 1e-9


def test_inverse_sqrt_near_identity():
    rng = np.random.default_rng(1)
    idx = jets.JetIndex(1, 4)
    B = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    B = B + B.conj().T
    M = np.zeros((idx.size, 3, 3), dtype=complex)
    M[0] = np.eye(3)
    M[1] = B
    S = jets.inverse_sqrt_near_identity(idx, M, 4)
    errs = []
    for t in (1e-2, 5e-3):
        w, U = np.linalg.eigh(np.eye(3) + t * B)
        exact = (U / np.sqrt(w)) @ U.conj().T
        Sh = sum(S[i] * t ** i for i in range(idx.size))
        errs.append(np.abs(Sh - exact).max())
    # the first neglected term is fifth order
    assert errs[0] < 1e-7
    assert 4.5 < np.log2(errs[0] / errs[1]) < 5.5


def test_negative_sizes_rejected():
    with pytest.raises(ValueError):
        jets.JetIndex(-1, 2)
