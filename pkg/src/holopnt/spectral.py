"""Eigenspaces, families across Fock layers and smooth local eigenframes.

Two gauges are used for frames.  Projector transport maps a reference
matrix ``R`` through the eigenprojector, ``Psi(k) = P(k) R (R^+ P(k) R)^(-1/2)``;
with ``R`` the base frame this is anchored at the base point, with ``R`` a
set of basis states it fixes the phases of chosen components.  Isospectral
models also have the word gauge ``Psi(k) = V(k) Psi0`` with ``Psi0`` an
eigenframe of ``H0``.

Frame jets (Taylor coefficients in the parameter displacements) are what
the geometry module differentiates.  Word-gauge jets are exact: the word is
rewritten as ``V(k0 + d) = V(k0) prod_i exp(c_i d_i G~_i)`` with conjugated
generators ``G~_i`` that stay quadratic, so no Fock truncation enters.
Jets of projector frames come from the order-by-order solution of
``P^2 = P`` and ``[H, P] = 0`` around the base point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from . import gaussian, jets
from .errors import (ConfigurationError, FrameDegeneracyError, ModelInputError,
                     ReliabilityWarning)
from .expr import is_number_conserving
from .fock import (CompiledOperator, FockBasis, ModeSystem, compile_operator,
                   enumerate_graded, enumerate_layer, enumerate_truncated)
from .models import ModelSpec, ParameterPoint, h0_matrix, hamiltonian_at, unitary_at

DEFAULT_CLUSTER_TOL = 1e-9
GRAPH_CLUSTER_TOL = 1e-8


def default_cluster_tol(spec: ModelSpec) -> float:
    return DEFAULT_CLUSTER_TOL if spec.isospectral else GRAPH_CLUSTER_TOL


# ---------------------------------------------------------------------------
# blocks and families

@dataclass(frozen=True, eq=False)
class EigenspaceBlock:
    """Degenerate eigenspace; ``particle_number`` is None for multi-layer blocks."""

    eigenvalue: float
    particle_number: int | None
    frame: np.ndarray
    basis: FockBasis | None = None
    particles_needed: int | None = None

    @property
    def dimension(self) -> int:
        return self.frame.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.frame @ self.frame.conj().T


@dataclass(frozen=True, eq=False)
class EigenspaceFamily:
    eigenvalue: float
    blocks: tuple
    label: int = 0
    complete: bool = True

    @property
    def dimensions(self) -> tuple:
        return tuple(b.dimension for b in self.blocks)

    @property
    def particle_numbers(self) -> tuple:
        return tuple(b.particle_number for b in self.blocks)

    @property
    def degeneracy(self) -> int:
        return sum(self.dimensions)

    @property
    def particles_needed(self) -> int:
        return max(b.particles_needed if b.particles_needed is not None else b.particle_number
                   for b in self.blocks)


def _cluster(values: np.ndarray, tol: float) -> list[list[int]]:
    scale = tol * max(1.0, float(np.max(np.abs(values), initial=0.0)))
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        if groups and v - values[groups[-1][-1]] < scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    gaps = np.diff(values)
    near = gaps[(gaps >= scale) & (gaps < 10 * scale)]
    if near.size:
        warnings.warn(f"eigenvalue gap {near.min():.2e} within 10x of the cluster tolerance",
                      ReliabilityWarning, stacklevel=3)
    return groups


def eigen_blocks(matrix: np.ndarray, cluster_tol: float = DEFAULT_CLUSTER_TOL,
                 basis: FockBasis | None = None,
                 particle_number: int | None = None) -> list[EigenspaceBlock]:
    """Degenerate eigenspaces of a Hermitian matrix, sorted by eigenvalue."""
    H = np.asarray(matrix)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ConfigurationError("eigen_blocks needs a square matrix")
    if H.shape[0] == 0:
        return []
    if np.max(np.abs(H - H.conj().T)) > 1e-10:
        raise ConfigurationError("eigen_blocks needs a Hermitian matrix")
    w, U = np.linalg.eigh(0.5 * (H + H.conj().T))
    out = []
    for g in _cluster(w, cluster_tol):
        out.append(EigenspaceBlock(float(np.mean(w[g])), particle_number, U[:, g], basis))
    return out


def layers_basis(system: ModeSystem, layers: Sequence[int]) -> FockBasis:
    """Union of Fock layers, graded by particle number."""
    layers = sorted(set(int(n) for n in layers))
    if len(layers) == 1:
        return enumerate_layer(system, layers[0])
    states = tuple(s for n in layers for s in enumerate_layer(system, n).states)
    return FockBasis(system, states, "graded", max(layers))


def _merge(blocks: list[EigenspaceBlock], tol: float) -> list[list[EigenspaceBlock]]:
    blocks = sorted(blocks, key=lambda b: b.eigenvalue)
    groups: list[list[EigenspaceBlock]] = []
    for b in blocks:
        if groups and abs(b.eigenvalue - groups[-1][0].eigenvalue) < tol * max(1.0, abs(b.eigenvalue)):
            groups[-1].append(b)
        else:
            groups.append([b])
    return groups


def family_across_layers(spec: ModelSpec, params, N_max: int,
                         cluster_tol: float | None = None) -> list[EigenspaceFamily]:
    """Eigenspace families of a number-conserving model over layers 0..N_max."""
    if not spec.number_conserving:
        raise ConfigurationError("family_across_layers needs a number-conserving model")
    if N_max < 0:
        raise ConfigurationError("N_max must be non-negative")
    tol = cluster_tol if cluster_tol is not None else default_cluster_tol(spec)
    blocks = []
    for N in range(N_max + 1):
        basis = enumerate_layer(spec.system, N)
        H = hamiltonian_at(spec, params, basis)
        blocks.extend(eigen_blocks(H, tol, basis, N))
    fams = []
    for l, g in enumerate(_merge(blocks, tol)):
        g.sort(key=lambda b: b.particle_number)
        fams.append(EigenspaceFamily(float(np.mean([b.eigenvalue for b in g])), tuple(g), l))
    return fams


def h0_families(spec: ModelSpec, N_max: int, cluster_tol: float = DEFAULT_CLUSTER_TOL,
                margin: int = 2) -> list[EigenspaceFamily]:
    """Eigenspaces of ``H0`` found among states with at most ``N_max`` particles.

    ``H0`` must conserve particle number.  Layers up to ``N_max + margin``
    are examined; a family is marked complete when it has no content above
    ``N_max`` there, i.e. its dimension does not change when the cutoff is
    raised.  Families are labelled by ascending eigenvalue.  For words that
    do not conserve particle number each family is returned as a single
    block spanning all its layers.
    """
    s = spec.structure
    if s.h0 is None:
        raise ConfigurationError("h0_families needs an isospectral model")
    if not is_number_conserving(s.h0):
        raise ConfigurationError("H0 must conserve particle number")
    blocks = []
    for N in range(N_max + margin + 1):
        basis = enumerate_layer(spec.system, N)
        blocks.extend(eigen_blocks(h0_matrix(spec, basis), cluster_tol, basis, N))
    fams = []
    for g in _merge(blocks, cluster_tol):
        g.sort(key=lambda b: b.particle_number)
        complete = all(b.particle_number <= N_max for b in g)
        inside = [b for b in g if b.particle_number <= N_max]
        if not inside:
            continue
        ev = float(np.mean([b.eigenvalue for b in g]))
        if not spec.number_conserving:
            layers = [b.particle_number for b in inside]
            basis = layers_basis(spec.system, layers)
            frame = np.concatenate([basis.embed(b.basis, b.frame) for b in inside], axis=1)
            need = max(_support_particles(b) for b in inside)
            inside = [EigenspaceBlock(ev, None, frame, basis, need)]
        fams.append(EigenspaceFamily(ev, tuple(inside), 0, complete))
    return [EigenspaceFamily(f.eigenvalue, f.blocks, l, f.complete) for l, f in enumerate(fams)]


def _support_particles(block: EigenspaceBlock) -> int:
    """Largest particle number among basis states carrying weight in the block."""
    w = np.sum(np.abs(block.frame) ** 2, axis=1)
    Ns = block.basis.particle_numbers()
    return int(np.max(Ns[w > 1e-12], initial=0))


# ---------------------------------------------------------------------------
# frame fields

@dataclass(frozen=True)
class BlockSelector:
    """Choose an eigenspace: eigenvalue (or ascending label) on given layers.

    For number-conserving models ``layers`` lists particle numbers and the
    block is the eigenvalue cluster on their union.  For Gaussian words the
    block is the ``H0`` eigenspace among states with at most ``max(layers)``
    particles.
    """

    layers: tuple
    eigenvalue: float | None = None
    label: int | None = None

    def __post_init__(self):
        if (self.eigenvalue is None) == (self.label is None):
            raise ConfigurationError("give exactly one of eigenvalue and label")
        object.__setattr__(self, "layers", tuple(int(n) for n in self.layers))


def select_block(spec: ModelSpec, point, selector: BlockSelector,
                 cluster_tol: float | None = None) -> EigenspaceBlock:
    tol = cluster_tol if cluster_tol is not None else default_cluster_tol(spec)
    if spec.number_conserving:
        basis = layers_basis(spec.system, selector.layers)
        blocks = eigen_blocks(hamiltonian_at(spec, point, basis), tol, basis,
                              selector.layers[0] if len(selector.layers) == 1 else None)
    else:
        fams = h0_families(spec, max(selector.layers), tol)
        blocks = [f.blocks[0] for f in fams]
    if selector.label is not None:
        if not 0 <= selector.label < len(blocks):
            raise ConfigurationError(f"no eigenspace with label {selector.label}")
        return blocks[selector.label]
    best = min(blocks, key=lambda b: abs(b.eigenvalue - selector.eigenvalue))
    if abs(best.eigenvalue - selector.eigenvalue) > 1e-6 * max(1.0, abs(selector.eigenvalue)):
        raise ConfigurationError(f"no eigenvalue near {selector.eigenvalue}")
    return best


def _polar_inv_sqrt(M: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(0.5 * (M + M.conj().T))
    return (U / np.sqrt(w)) @ U.conj().T


class LocalFrameField:
    """Smooth orthonormal frame of one eigenspace around ``base_point``.

    ``gauge`` is ``"projector"`` (transport of ``reference``, default the base
    frame) or ``"word"`` (``V(k) Psi0`` for isospectral models).  The base
    frame is returned exactly at the base point in both gauges.
    """

    def __init__(self, spec: ModelSpec, base_point: ParameterPoint, block: EigenspaceBlock,
                 gauge: str = "projector", reference: np.ndarray | None = None,
                 cutoff: int | None = None, min_overlap: float = 1e-3):
        if gauge not in ("projector", "word"):
            raise ConfigurationError(f"unknown gauge {gauge!r}")
        if gauge == "word" and not spec.isospectral:
            raise ConfigurationError("the word gauge needs an isospectral model")
        self.spec = spec
        self.base_point = ParameterPoint(base_point)
        self.block = block
        self.gauge = gauge
        self.min_overlap = min_overlap
        self.basis = block.basis
        self.dimension = block.dimension
        self.eigenvalue = block.eigenvalue
        self._slot = None
        if gauge == "word":
            self.h0_frame = block.frame
            if spec.number_conserving:
                self.eval_basis = self.basis
            else:
                c = cutoff or spec.system.cutoff
                if c is None:
                    raise ConfigurationError("Gaussian words need a cutoff")
                self.eval_basis = enumerate_truncated(spec.system.with_cutoff(c))
            self._psi0_eval = self.eval_basis.embed(self.basis, self.h0_frame)
            V0 = unitary_at(spec, self.base_point, self.eval_basis)
            self.base_frame = V0 @ self._psi0_eval
            self.frame_basis = self.eval_basis
            self.reference = None
        else:
            if not spec.number_conserving:
                raise ConfigurationError("projector transport needs a number-conserving model")
            self.eval_basis = self.frame_basis = self.basis
            self.reference = block.frame if reference is None else np.asarray(reference, dtype=complex)
            if self.reference.shape != block.frame.shape:
                raise ConfigurationError("reference must have the shape of the frame")
            if reference is None:
                self.base_frame = block.frame.copy()
            else:
                self.base_frame = self._transport(block.projector, self.reference)

    @property
    def directions(self) -> tuple:
        return self.spec.parameter_names

    def _transport(self, P: np.ndarray, R: np.ndarray) -> np.ndarray:
        PR = P @ R
        M = R.conj().T @ PR
        smin = float(np.min(np.linalg.svd(M, compute_uv=False), initial=1.0))
        if smin < self.min_overlap:
            raise FrameDegeneracyError(f"projected reference lost rank (smallest overlap {smin:.2e})")
        return PR @ _polar_inv_sqrt(M)

    def projector(self, point) -> np.ndarray:
        """Eigenprojector of the block at ``point`` (projector gauge only)."""
        w, U = np.linalg.eigh(hamiltonian_at(self.spec, point, self.basis))
        inside = self._positions(w, point)
        return U[:, inside] @ U[:, inside].conj().T

    def _positions(self, w: np.ndarray, point) -> slice:
        """Slice of the ascending spectrum ``w`` that continues the block.

        The block keeps its position in the ordered spectrum, so eigenvalues
        that move along a path are followed until a gap to a neighbour closes.
        """
        if self._slot is None:
            w0 = np.linalg.eigvalsh(hamiltonian_at(self.spec, self.base_point, self.basis))
            # the d eigenvalues closest to the block value are contiguous in w0
            self._slot = int(np.min(np.argsort(np.abs(w0 - self.eigenvalue), kind="stable")[:self.dimension]))
        i0, d = self._slot, self.dimension
        inside = w[i0:i0 + d]
        spread = float(np.ptp(inside)) if d else 0.0
        gaps = []
        if i0 > 0:
            gaps.append(inside[0] - w[i0 - 1])
        if i0 + d < w.size:
            gaps.append(w[i0 + d] - inside[-1])
        if gaps and min(gaps) < max(10 * GRAPH_CLUSTER_TOL, 10 * spread):
            raise FrameDegeneracyError(f"eigenvalue gap closed at {point} (gap {min(gaps):.2e})")
        return slice(i0, i0 + d)

    def _track_eigenvalue(self, point) -> float:
        """Mean eigenvalue of the block continued to ``point``."""
        w = np.linalg.eigvalsh(hamiltonian_at(self.spec, point, self.basis))
        return float(np.mean(w[self._positions(w, point)]))

    def evaluate(self, point) -> np.ndarray:
        point = ParameterPoint(point)
        if point == self.base_point:
            return self.base_frame.copy()
        if self.gauge == "word":
            return unitary_at(self.spec, point, self.eval_basis) @ self._psi0_eval
        return self._transport(self.projector(point), self.reference)

    # -- jets --------------------------------------------------------------

    def jet(self, order: int, directions: Sequence[str] | None = None, point=None):
        """Taylor jet of the frame around ``point`` (default the base point).

        Returns ``(index, Psi)`` with ``Psi`` of shape ``(n_mon, D, d)`` on an
        internal basis.  Word-gauge jets reproduce ``V(k) Psi0`` exactly.
        Projector-gauge jets are re-anchored at ``point``: they agree with
        ``evaluate`` at ``point`` (so curvature tensors there coincide) but
        their connection differs away from the base point by a gauge term.
        """
        directions = tuple(directions) if directions is not None else self.directions
        point = self.base_point if point is None else ParameterPoint(point)
        index = jets.JetIndex(len(directions), order)
        if self.gauge == "word":
            return index, word_frame_jet(self.spec, point, self.h0_frame, self.basis, index, directions)
        frame = self.evaluate(point)
        return index, projector_frame_jet(self.spec, point, frame, self.basis, index, directions,
                                          self._track_eigenvalue(point))


def local_frame(spec: ModelSpec, base_point, selector: BlockSelector | EigenspaceBlock,
                gauge: str | None = None, reference=None, cluster_tol=None,
                cutoff: int | None = None) -> LocalFrameField:
    """Frame field of the selected block anchored at ``base_point``.

    The default gauge is projector transport for number-conserving models
    and the word gauge for Gaussian words.
    """
    base_point = ParameterPoint(base_point)
    if isinstance(selector, EigenspaceBlock):
        block = selector
    else:
        block = select_block(spec, base_point if spec.number_conserving else None, selector, cluster_tol)
    if gauge is None:
        gauge = "projector" if spec.number_conserving else "word"
    if gauge == "word" and spec.number_conserving and block.basis is not None:
        # re-express the block through H0 eigenvectors so that V(k0) Psi0 is the base frame
        block = _h0_block_for(spec, base_point, block)
    return LocalFrameField(spec, base_point, block, gauge, reference, cutoff)


def _h0_block_for(spec: ModelSpec, point, block: EigenspaceBlock) -> EigenspaceBlock:
    """``H0`` eigenframe whose image under ``V(point)`` spans ``block``."""
    V = unitary_at(spec, point, block.basis)
    psi0 = V.conj().T @ block.frame
    H0 = h0_matrix(spec, block.basis)
    resid = np.max(np.abs(H0 @ psi0 - block.eigenvalue * psi0), initial=0.0)
    if resid > 1e-8:
        raise ConfigurationError("block is not an isospectral image of an H0 eigenspace")
    return EigenspaceBlock(block.eigenvalue, block.particle_number, psi0, block.basis,
                           block.particles_needed)


# ---------------------------------------------------------------------------
# word-gauge jets

@lru_cache(maxsize=32)
def _monomial_matrices(basis: FockBasis, n: int):
    """Matrices of ``xi_l xi_m`` (ladder order l then m) on ``basis``."""
    size = 2 * n + 1
    Q = np.ones((size, size))
    expr = gaussian.expression(Q, n, drop=0.0)
    comp = CompiledOperator(expr, basis)
    mats = {}
    for term, m in zip(expr.terms, comp.term_matrices):
        key = tuple(gaussian._slot(f, n) for f in term.factors)
        key = key + (2 * n,) * (2 - len(key))
        mats[key] = m
    return mats


def _form_matrix(Q: np.ndarray, basis: FockBasis, n: int):
    mats = _monomial_matrices(basis, n)
    # 1 * xi_l and xi_l * 1 share the key (l, c)
    c = 2 * n
    Q = Q.copy()
    Q[:c, c] += Q[c, :c]
    Q[c, :c] = 0
    out = None
    scale = max(float(np.max(np.abs(Q))), 1.0)
    for (l, m), M in mats.items():
        v = Q[l, m]
        if abs(v) > 1e-15 * scale:
            out = v * M if out is None else out + v * M
    if out is None:
        return np.zeros((basis.dim, basis.dim), dtype=complex)
    return out.tocsr()


def word_frame_jet(spec: ModelSpec, point, psi0: np.ndarray, psi0_basis: FockBasis,
                   index: jets.JetIndex, directions: Sequence[str]) -> np.ndarray:
    """Exact jet of ``V(point + d) Psi0`` up to a fixed unitary ``V(point)``.

    The frame is represented as ``W(d) Psi0`` with ``W = V(point)^+ V(point + d)``;
    the connection and everything built from it are unchanged by the
    constant left factor.
    """
    s = spec.structure
    n = spec.system.bosons
    K = index.order
    els = s.elementaries
    slots = {name: i for i, name in enumerate(directions)}
    for name in directions:
        if name not in spec.parameter_names:
            raise ModelInputError(f"unknown direction {name}")
    if spec.number_conserving:
        basis = psi0_basis
    else:
        need = int(np.max(psi0_basis.particle_numbers()[np.sum(np.abs(psi0) ** 2, axis=1) > 0], initial=0))
        basis = enumerate_graded(spec.system.with_cutoff(None), need + 2 * K)
    J = np.zeros((index.size, basis.dim, psi0.shape[1]), dtype=complex)
    J[0] = basis.embed(psi0_basis, psi0)
    forms = [gaussian.quadratic_form(e.generator, n) for e in els]
    T = np.eye(2 * n + 1, dtype=complex)
    for i in range(len(els) - 1, -1, -1):
        e = els[i]
        if e.param in slots:
            Gt = _form_matrix(gaussian.conjugate_form(forms[i], T), basis, n)
            var = slots[e.param]
            new = J.copy()
            term = J
            for k in range(1, K + 1):
                # G~^k J / k!, shifted by k in the direction variable
                term = np.stack([Gt @ t for t in term]) if term.size else term
                dst, src = index.shift(var, k, K)
                new[dst] += (e.scale ** k / factorial(k)) * term[src]
            J = new
        t = e.scale * float(point[e.param])
        if t != 0:
            T = expm(-t * gaussian.adjoint_matrix(forms[i], n)) @ T
    return J


# ---------------------------------------------------------------------------
# projector-gauge jets

def hamiltonian_jet(spec: ModelSpec, point, basis: FockBasis, index: jets.JetIndex,
                    directions: Sequence[str]) -> np.ndarray:
    """Jet of ``H`` on a number-conserving basis, shape ``(n_mon, D, D)``."""
    s = spec.structure
    slots = {name: i for i, name in enumerate(directions)}
    H = np.zeros((index.size, basis.dim, basis.dim), dtype=complex)
    if s.expr is not None:
        H += compile_operator(s.expr, basis).jet(point, index, slots)
    if s.h0 is not None:
        if not spec.number_conserving:
            raise ConfigurationError("Hamiltonian jets need a number-conserving word")
        W = word_frame_jet(spec, point, np.eye(basis.dim, dtype=complex), basis, index, directions)
        V0 = unitary_at(spec, point, basis)
        H0 = h0_matrix(spec, basis)
        WH = W @ H0[None]
        inner = jets.mul(index, WH, jets.dagger(W), index.order)
        H += V0[None] @ inner @ V0.conj().T[None]
    return 0.5 * (H + jets.dagger(H))


def projector_frame_jet(spec: ModelSpec, point, frame: np.ndarray, basis: FockBasis,
                        index: jets.JetIndex, directions: Sequence[str],
                        eigenvalue: float) -> np.ndarray:
    """Jet of ``P(point + d) frame (frame^+ P frame)^(-1/2)``.

    Solved order by order for ``X = P frame (frame^+ P frame)^(-1)``, which
    obeys ``H X = X E`` with ``frame^+ X = 1``; only ``D x d`` products occur.
    The frame is then ``X (X^+ X)^(-1/2)``.
    """
    K = index.order
    Hj = hamiltonian_jet(spec, point, basis, index, directions)
    e, U = np.linalg.eigh(Hj[0])
    d = frame.shape[1]
    order = np.argsort(np.abs(e - eigenvalue), kind="stable")
    C, R = np.sort(order[:d]), np.sort(order[d:])
    if R.size and np.min(np.abs(e[R][:, None] - e[C][None, :])) < 10 * GRAPH_CLUSTER_TOL:
        raise FrameDegeneracyError(f"eigenvalue gap closed at {point}")
    # eigenbasis of H(point) with the block first
    perm = np.r_[C, R]
    U = U[:, perm]
    e = e[perm]
    Ht = U.conj().T[None] @ Hj @ U[None]
    D = basis.dim
    Y = np.zeros((index.size, D, d), dtype=complex)
    Y[0, :d, :] = np.eye(d)
    E = np.zeros((index.size, d, d), dtype=complex)
    E[0] = np.diag(e[:d])
    denom = e[d:, None] - e[None, :d]
    for k in range(1, K + 1):
        lo, hi = index.count(k - 1), index.count(k)
        HY = jets.mul(index, Ht, Y, k, top=True)
        E[lo:hi] = HY[:, :d, :]
        if R.size:
            YE = jets.mul(index, Y[:, d:, :], E, k, top=True)
            Y[lo:hi, d:, :] = (YE - HY[:, d:, :]) / denom[None]
    tail = Y[:, d:, :]
    S = jets.mul(index, jets.dagger(tail), tail, K)
    S[0] += np.eye(d)
    T = jets.inverse_sqrt_near_identity(index, S, K)
    Psi = U[None] @ jets.mul(index, Y, T, K)
    W = U[:, :d].conj().T @ frame
    return Psi @ W[None]
