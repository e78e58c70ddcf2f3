import numpy as np
import pytest
from hypothesis import given, strategies as st

from holopnt import (BlockSelector, ConfigurationError, FrameDegeneracyError, builtin,
                     enumerate_layer, hamiltonian_at, local_frame)
from holopnt.geometry import connection_at
from holopnt.spectral import eigen_blocks, family_across_layers, h0_families


def test_eigen_blocks_cluster_degenerate_values():
    H = np.diag([0.0, 1e-12, 1.0, 2.0, 2.0 + 1e-11])
    blocks = eigen_blocks(H, 1e-8)
    assert [b.dimension for b in blocks] == [2, 1, 2]
    for b in blocks:
        assert np.allclose(b.frame.conj().T @ b.frame, np.eye(b.dimension))


def test_lambda_families(lam):
    fams = family_across_layers(lam, lam.base_point(), 3, 1e-8)
    dark = next(f for f in fams if abs(f.eigenvalue) < 1e-9)
    assert dark.dimensions == (1, 1, 2, 2)
    assert dark.particle_numbers == (0, 1, 2, 3)
    assert [f.label for f in fams] == list(range(len(fams)))


def test_kerr_h0_families(kerr2):
    fams = {round(f.eigenvalue): f for f in h0_families(kerr2, 6, 1e-8)}
    assert (fams[0].degeneracy, fams[0].particles_needed) == (4, 2)
    assert (fams[2].degeneracy, fams[2].particles_needed) == (4, 3)
    assert (fams[12].degeneracy, fams[12].particles_needed) == (5, 6)


def test_selector_needs_one_key():
    with pytest.raises(ConfigurationError):
        BlockSelector((1,))
    with pytest.raises(ConfigurationError):
        BlockSelector((1,), eigenvalue=0.0, label=1)


def test_missing_eigenvalue(lam):
    with pytest.raises(ConfigurationError):
        local_frame(lam, lam.base_point(), BlockSelector((1,), eigenvalue=0.5))


@given(st.floats(0.2, 1.35), st.floats(0.0, 6.2))
def test_projector_frame_is_orthonormal_eigenframe(theta, phi):
    lam = builtin("lambda")
    f = local_frame(lam, lam.base_point(), BlockSelector((2,), eigenvalue=0.0))
    p = lam.base_point().replace(theta=theta, phi=phi)
    Psi = f.evaluate(p)
    H = hamiltonian_at(lam, p, f.basis)
    assert np.allclose(Psi.conj().T @ Psi, np.eye(2), atol=1e-12)
    assert np.abs(H @ Psi).max() < 1e-12


def test_word_gauge_reproduces_base_frame(fcg4):
    p = fcg4.named_point("kappa0")
    fw = local_frame(fcg4, p, BlockSelector((2,), eigenvalue=0.0), gauge="word")
    fp = local_frame(fcg4, p, BlockSelector((2,), eigenvalue=0.0))
    Pw = fw.evaluate(p) @ fw.evaluate(p).conj().T
    Pp = fp.evaluate(p) @ fp.evaluate(p).conj().T
    assert np.allclose(Pw, Pp, atol=1e-12)


def test_word_gauge_rejected_for_graph_models(lam):
    with pytest.raises(ConfigurationError):
        local_frame(lam, lam.base_point(), BlockSelector((1,), eigenvalue=0.0), gauge="word")


@pytest.mark.parametrize("name, layers, gauge", [
    ("lambda", (2,), None), ("tripod", (1,), None), ("fcg4", (2,), "word"), ("fcg4", (2,), "projector"),
])
def test_jet_connection_matches_differences(name, layers, gauge, rng):
    spec = builtin(name)
    base = spec.base_point()
    f = local_frame(spec, base, BlockSelector(layers, eigenvalue=0.0), gauge=gauge)
    from holopnt.geometry import jet_tensors
    A_jet = jet_tensors(f, 1, point=base).connection()
    A_fd = connection_at(f, base)
    for d in spec.parameter_names:
        assert np.abs(A_jet[d] - A_fd[d]).max() < 1e-8, d


def test_moving_eigenvalue_is_tracked_by_position():
    jc = builtin("jaynes_cummings")
    base = jc.base_point()
    f = local_frame(jc, base, BlockSelector((1,), label=1))
    far = base.replace(omega_a=0.8, kappa=0.05)
    Psi = f.evaluate(far)
    basis = enumerate_layer(jc.system, 1)
    w, U = np.linalg.eigh(hamiltonian_at(jc, far, basis))
    assert abs(abs(np.vdot(U[:, 1], Psi[:, 0])) - 1) < 1e-12


def test_gap_closing_raises():
    jc = builtin("jaynes_cummings")
    f = local_frame(jc, jc.base_point(), BlockSelector((1,), label=0))
    crossing = jc.base_point().replace(omega_a=jc.base_point()["omega_c"], kappa=0.0)
    with pytest.raises(FrameDegeneracyError):
        f.evaluate(crossing)
