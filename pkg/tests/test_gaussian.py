import numpy as np
import pytest
from scipy.linalg import expm

from holopnt import ModeSystem, enumerate_graded, enumerate_layer, enumerate_truncated, unitary_at
from holopnt import gaussian, jets
from holopnt.expr import parse_operator
from holopnt.fock import operator_matrix
from holopnt.spectral import _form_matrix, word_frame_jet


def random_form(rng, n, linear=True):
    size = 2 * n + 1
    Q = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    if not linear:
        Q[-1, :] = 0
        Q[:, -1] = 0
    return Q


def test_form_roundtrip(rng):
    Q = random_form(rng, 2, linear=False)
    again = gaussian.quadratic_form(gaussian.expression(Q, 2), 2)
    assert np.allclose(again, Q)


def test_form_matrix_keeps_both_linear_orderings(rng):
    """1 * xi_l and xi_l * 1 must both contribute (regression)."""
    n = 2
    basis = enumerate_graded(ModeSystem(n), 4)
    Q = random_form(rng, n)
    dense = operator_matrix(gaussian.expression(Q, n), basis)
    got = _form_matrix(Q, basis, n).toarray()
    assert np.abs(got - dense).max() < 1e-12


def test_adjoint_matrix_is_commutator(rng):
    n = 1
    basis = enumerate_graded(ModeSystem(n), 6)
    Q = random_form(rng, n)
    G = operator_matrix(gaussian.expression(Q, n), basis)
    M = gaussian.adjoint_matrix(Q, n)
    xi = [operator_matrix(parse_operator(t), basis) for t in ("a(1)", "a'(1)")] + [np.eye(basis.dim)]
    low = basis.particle_numbers() <= 3
    for j in range(3):
        lhs = G @ xi[j] - xi[j] @ G
        rhs = sum(M[j, k] * xi[k] for k in range(3))
        assert np.abs((lhs - rhs)[np.ix_(low, low)]).max() < 1e-12


@pytest.mark.parametrize("gen, n, cutoff", [
    ("0.3 a'(1) - 0.3 a(1)", 1, 60),
    ("0.2 a'(1) a'(1) - 0.2 a(1) a(1)", 1, 60),
    ("0.25 a'(1) a'(2) - 0.25 a(1) a(2)", 2, 30),
    ("0.4 i (a'(1) a(2) + a'(2) a(1))", 2, 30),
])
def test_conjugation_matches_dense(gen, n, cutoff, rng):
    big = enumerate_truncated(ModeSystem(n, cutoff=cutoff))
    R = expm(operator_matrix(parse_operator(gen), big))
    Q = random_form(rng, n)
    G = operator_matrix(gaussian.expression(Q, n), big)
    dense = R.conj().T @ G @ R
    T = gaussian.conjugation_map([gaussian.quadratic_form(parse_operator(gen), n)], [1.0], n)
    exact = operator_matrix(gaussian.expression(gaussian.conjugate_form(Q, T), n), big)
    low = np.flatnonzero(big.particle_numbers() <= 3)
    assert np.abs((dense - exact)[np.ix_(low, low)]).max() < 1e-8


def test_word_jet_matches_dense_differences(kerr2):
    rng = np.random.default_rng(12345)
    p = kerr2.random_point(rng)
    names = kerr2.parameter_names
    b0 = enumerate_graded(kerr2.system.with_cutoff(None), 1)
    psi0 = np.zeros((b0.dim, 1), complex)
    psi0[b0.index[(1, 0)], 0] = 1
    idx = jets.JetIndex(len(names), 1)
    J = word_frame_jet(kerr2, p, psi0, b0, idx, names)
    gb = enumerate_graded(kerr2.system.with_cutoff(None), 3)
    big = enumerate_truncated(kerr2.system.with_cutoff(24))
    V0 = unitary_at(kerr2, p, big)
    ps = big.embed(b0, psi0)
    for i, d in enumerate(names):
        # expm roundoff divided by 2h limits smaller steps
        h = 1e-4
        Vp = unitary_at(kerr2, p.moved([d], [h]), big)
        Vm = unitary_at(kerr2, p.moved([d], [-h]), big)
        fd = V0.conj().T @ (Vp - Vm) / (2 * h) @ ps
        e = tuple(1 if k == i else 0 for k in range(len(names)))
        jet = big.embed(gb, J[idx.pos[e]])
        assert np.abs(fd - jet).max() < 1e-6, d


def test_number_conserving_word_is_exact_on_layer(fcg4, rng):
    basis = enumerate_layer(fcg4.system, 2)
    p = fcg4.random_point(rng)
    names = fcg4.parameter_names
    idx = jets.JetIndex(len(names), 2)
    psi0 = np.eye(basis.dim)[:, :2].astype(complex)
    J = word_frame_jet(fcg4, p, psi0, basis, idx, names)
    V0 = unitary_at(fcg4, p, basis)
    h = np.zeros(len(names))
    h[0], h[3] = 1e-3, -2e-3
    q = p.moved(names, h)
    approx = sum(J[i] * np.prod(h ** e) for i, e in enumerate(idx.exps))
    exact = V0.conj().T @ unitary_at(fcg4, q, basis) @ psi0
    assert np.abs(approx - exact).max() < 1e-7
