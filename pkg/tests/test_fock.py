import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from holopnt import ModeSystem, ModelInputError, enumerate_graded, enumerate_layer, enumerate_truncated
from holopnt.errors import ConfigurationError
from holopnt.expr import is_number_conserving, parse_coefficient, parse_operator
from holopnt.fock import layer_dimension, operator_matrix


# -- expressions ------------------------------------------------------------

def test_coefficient_evaluation():
    c = parse_coefficient("2 cos(theta)^2 - i sin(phi)/2")
    v = c.evaluate({"theta": 0.3, "phi": 1.1})
    assert abs(v - (2 * math.cos(0.3) ** 2 - 0.5j * math.sin(1.1))) < 1e-15
    assert c.symbols() == {"theta", "phi"}


def test_hc_suffix_adds_conjugate():
    e = parse_operator("exp(i phi) a'(2) a(1) + H.c.")
    assert len(e.terms) == 2
    b = enumerate_layer(ModeSystem(2), 1)
    M = operator_matrix(e, b, {"phi": 0.7})
    assert np.allclose(M, M.conj().T)


def test_number_conservation_detection():
    assert is_number_conserving(parse_operator("a'(1) a(2) + n(3)"))
    assert not is_number_conserving(parse_operator("a'(1) a'(2) + a(1)"))


@pytest.mark.parametrize("text, col", [("a'(1) +* a(2)", 8), ("cos(theta", 10), ("a'(1) a(2) $", 12)])
def test_parse_errors_carry_column(text, col):
    with pytest.raises(ModelInputError) as exc:
        parse_operator(text)
    assert exc.value.column is not None
    assert abs(exc.value.column - col) <= 2


def test_unbound_parameter_rejected():
    b = enumerate_layer(ModeSystem(2), 1)
    with pytest.raises(ModelInputError):
        operator_matrix(parse_operator("g a'(1) a(2)"), b, {})


# -- bases ------------------------------------------------------------------

@given(st.integers(1, 4), st.integers(0, 5))
def test_layer_dimension_is_binomial(modes, N):
    b = enumerate_layer(ModeSystem(modes), N)
    assert b.dim == math.comb(N + modes - 1, N) == layer_dimension(ModeSystem(modes), N)
    assert all(sum(s) == N for s in b.states)


def test_layer_order_descending_lexicographic():
    b = enumerate_layer(ModeSystem(4), 2)
    assert b.states[0] == (2, 0, 0, 0)
    assert b.states[1] == (1, 1, 0, 0)
    assert b.states[-1] == (0, 0, 0, 2)
    assert list(b.states) == sorted(b.states, reverse=True)


def test_two_level_bits():
    b = enumerate_layer(ModeSystem(1, 1), 2)
    assert set(b.states) == {(2, 0), (1, 1)}
    assert b.label(b.index[(1, 1)]) == "|1;e>"


def test_graded_basis_contains_layers():
    sysm = ModeSystem(3)
    g = enumerate_graded(sysm, 3)
    assert g.dim == sum(math.comb(N + 2, N) for N in range(4))
    assert list(g.particle_numbers()) == sorted(g.particle_numbers())


def test_duplicate_states_rejected():
    from holopnt.fock import FockBasis
    with pytest.raises(ConfigurationError):
        FockBasis(ModeSystem(1), ((1,), (1,)))


def test_embed_roundtrip():
    sysm = ModeSystem(2)
    l2 = enumerate_layer(sysm, 2)
    g = enumerate_graded(sysm, 3)
    v = np.arange(l2.dim, dtype=complex)[:, None]
    w = g.embed(l2, v)
    assert np.array_equal(l2.embed(g, w), v)


# -- matrices ---------------------------------------------------------------

def test_number_operator_is_diagonal_occupation():
    b = enumerate_layer(ModeSystem(3), 3)
    M = operator_matrix(parse_operator("n(2)"), b)
    assert np.allclose(np.diag(M), [s[1] for s in b.states])
    assert np.allclose(M - np.diag(np.diag(M)), 0)


def test_canonical_commutator_on_truncated_space():
    b = enumerate_truncated(ModeSystem(1, cutoff=8))
    a = operator_matrix(parse_operator("a(1)"), b)
    ad = operator_matrix(parse_operator("a'(1)"), b)
    C = a @ ad - ad @ a
    # exact except in the top state of the truncation
    assert np.allclose(np.diag(C)[:-1], 1)
    assert np.allclose(a.conj().T, ad)


def test_graded_products_are_exact():
    sysm = ModeSystem(2)
    g = enumerate_graded(sysm, 3)
    M = operator_matrix(parse_operator("a(1) a'(1)"), g)
    N1 = operator_matrix(parse_operator("n(1)"), g)
    # a a^+ = n + 1 holds on every state, including the top layer
    assert np.allclose(M, N1 + np.eye(g.dim))


def test_sparse_matches_dense():
    b = enumerate_layer(ModeSystem(3), 2)
    e = parse_operator("0.3 a'(1) a(2) + 0.2 a'(3) a(3) a'(3) a(3) + H.c.")
    assert np.allclose(operator_matrix(e, b, sparse=True).toarray(), operator_matrix(e, b))


def test_spin_operators():
    b = enumerate_layer(ModeSystem(1, 1), 1)
    M = operator_matrix(parse_operator("a(1) sp(1)"), b)
    i_e, i_g = b.index[(0, 1)], b.index[(1, 0)]
    assert M[i_e, i_g] == 1
    assert np.count_nonzero(M) == 1


def test_mode_out_of_range():
    from holopnt.expr import check_modes
    with pytest.raises(ModelInputError):
        check_modes(parse_operator("a'(3) a(1)"), 2, 0)


def test_matrices_are_deterministic():
    b = enumerate_layer(ModeSystem(3), 3)
    e = parse_operator("cos(t) a'(1) a(2) + sin(t) a'(2) a(3) + H.c.")
    assert operator_matrix(e, b, {"t": 0.4}).tobytes() == operator_matrix(e, b, {"t": 0.4}).tobytes()
