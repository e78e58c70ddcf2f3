"""Fock bases and matrices of second-quantised operators.

Occupation states are plain tuples: boson occupations first, then one bit
per two-level system.  Within a layer of fixed particle number states are
listed in descending lexicographic order, e.g. for four modes and two
particles ``|2,0,0,0>, |1,1,0,0>, |1,0,1,0>, ..., |0,0,0,2>``.  Multi-layer
bases are graded by particle number and use the same order inside a layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import comb, sqrt
from typing import Iterator, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ModelInputError
from .expr import (ANNIHILATE, CREATE, LOWER, RAISE, OperatorExpression,
                   check_modes, is_number_conserving)

OccupationState = tuple  # tuple[int, ...]: boson occupations then two-level bits

__all__ = [
    "ModeSystem", "OccupationState", "FockBasis", "enumerate_layer",
    "enumerate_truncated", "enumerate_graded", "operator_matrix",
    "is_number_conserving", "CompiledOperator", "compile_operator",
]


@dataclass(frozen=True)
class ModeSystem:
    bosons: int
    two_levels: int = 0
    cutoff: int | None = None

    def __post_init__(self):
        if self.bosons < 0 or self.two_levels < 0 or self.bosons + self.two_levels < 1:
            raise ConfigurationError("a mode system needs at least one mode")
        if self.cutoff is not None and self.cutoff < 1:
            raise ConfigurationError("cutoff must be at least 1")

    @property
    def n_modes(self) -> int:
        return self.bosons + self.two_levels

    def with_cutoff(self, cutoff: int | None) -> "ModeSystem":
        return ModeSystem(self.bosons, self.two_levels, cutoff)

    def caps(self, cutoff: int | None) -> tuple:
        big = cutoff if cutoff is not None else None
        return (big,) * self.bosons + (1,) * self.two_levels


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Ordered list of occupation states.

    ``kind`` is ``"layer"`` (fixed N), ``"truncated"`` (per-boson cutoff;
    ladder products are products of truncated matrices) or ``"graded"``
    (all states with N <= max_particles; intermediate states of a ladder
    product are unrestricted, so matrix elements are exact).
    """

    system: ModeSystem
    states: tuple
    kind: str = "layer"
    particles: int | None = None
    index: Mapping = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        idx = {s: i for i, s in enumerate(self.states)}
        if len(idx) != len(self.states):
            raise ConfigurationError("basis states must be distinct")
        object.__setattr__(self, "index", idx)

    @property
    def dim(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)

    def __eq__(self, other):
        return (isinstance(other, FockBasis) and self.system == other.system
                and self.kind == other.kind and self.states == other.states)

    def __hash__(self):
        return hash((self.system, self.kind, self.particles, len(self.states),
                     self.states[:1], self.states[-1:]))

    def particle_numbers(self) -> np.ndarray:
        return np.array([sum(s) for s in self.states], dtype=int)

    def label(self, i: int) -> str:
        s = self.states[i]
        b = ",".join(str(x) for x in s[: self.system.bosons])
        t = "".join("e" if x else "g" for x in s[self.system.bosons:])
        return f"|{b}{';' + t if t else ''}>"

    def embed(self, other: "FockBasis", vectors: np.ndarray) -> np.ndarray:
        """Re-express column vectors given on ``other`` in this basis."""
        out = np.zeros((self.dim,) + vectors.shape[1:], dtype=vectors.dtype)
        for i, s in enumerate(other.states):
            j = self.index.get(s)
            if j is None:
                if np.any(vectors[i] != 0):
                    raise ConfigurationError(f"state {s} not contained in target basis")
                continue
            out[j] = vectors[i]
        return out


def _layer_states(caps: tuple, n: int) -> Iterator[tuple]:
    if not caps:
        if n == 0:
            yield ()
        return
    cap = caps[0]
    top = n if cap is None else min(n, cap)
    for k in range(top, -1, -1):
        for rest in _layer_states(caps[1:], n - k):
            yield (k,) + rest


def enumerate_layer(system: ModeSystem, particles: int) -> FockBasis:
    """All states with total particle number ``particles`` (cutoff ignored)."""
    if particles < 0:
        raise ConfigurationError("particle number must be non-negative")
    states = tuple(_layer_states(system.caps(None), particles))
    return FockBasis(system, states, "layer", particles)


def enumerate_truncated(system: ModeSystem) -> FockBasis:
    """All states with every boson occupation at most the cutoff, graded by N."""
    if system.cutoff is None:
        raise ConfigurationError("truncated enumeration needs a cutoff")
    caps = system.caps(system.cutoff)
    top = system.bosons * system.cutoff + system.two_levels
    states = tuple(s for n in range(top + 1) for s in _layer_states(caps, n))
    return FockBasis(system, states, "truncated", None)


def enumerate_graded(system: ModeSystem, max_particles: int) -> FockBasis:
    """All states with total particle number at most ``max_particles``."""
    caps = system.caps(None)
    states = tuple(s for n in range(max_particles + 1) for s in _layer_states(caps, n))
    return FockBasis(system, states, "graded", max_particles)


def layer_dimension(system: ModeSystem, particles: int) -> int:
    """Closed-form size of a layer, used as an independent check."""
    M, T = system.bosons, system.two_levels
    total = 0
    for e in range(min(T, particles) + 1):
        rest = particles - e
        nb = comb(rest + M - 1, rest) if M else int(rest == 0)
        total += comb(T, e) * nb
    return total


# ---------------------------------------------------------------------------
# matrices

def _apply(state: tuple, factors: tuple, nb: int, cutoff: int | None):
    """Apply a ladder product (right to left) to one state.

    Returns (amplitude, new_state) or None when the result vanishes.
    """
    occ = list(state)
    amp = 1.0
    for f in reversed(factors):
        k = f.mode if f.boson else nb + f.mode
        n = occ[k]
        if f.kind == CREATE:
            if cutoff is not None and n >= cutoff:
                return None
            amp *= sqrt(n + 1)
            occ[k] = n + 1
        elif f.kind == ANNIHILATE:
            if n == 0:
                return None
            amp *= sqrt(n)
            occ[k] = n - 1
        elif f.kind == RAISE:
            if n == 1:
                return None
            occ[k] = 1
        elif f.kind == LOWER:
            if n == 0:
                return None
            occ[k] = 0
    return amp, tuple(occ)


class CompiledOperator:
    """Operator expression bound to a basis: one sparse matrix per term.

    ``at(params)`` sums coefficient times term matrix; ``jet`` does the same
    with Taylor jets of the coefficients.
    """

    def __init__(self, expr: OperatorExpression, basis: FockBasis):
        system = basis.system
        check_modes(expr, system.bosons, system.two_levels)
        self.expr = expr
        self.basis = basis
        cutoff = system.cutoff if basis.kind == "truncated" else None
        nb = system.bosons
        D = basis.dim
        mats = []
        for term in expr.terms:
            rows, cols, vals = [], [], []
            for j, s in enumerate(basis.states):
                r = _apply(s, term.factors, nb, cutoff)
                if r is None:
                    continue
                amp, t = r
                i = basis.index.get(t)
                if i is None:
                    continue
                rows.append(i)
                cols.append(j)
                vals.append(amp)
            m = sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(D, D))
            mats.append(m)
        self.term_matrices = mats

    def coefficients(self, params: Mapping[str, float] | None) -> list[complex]:
        env = params if params is not None else {}
        return [t.coeff.evaluate(env) for t in self.expr.terms]

    def at_sparse(self, params=None) -> sp.csr_matrix:
        D = self.basis.dim
        out = sp.csr_matrix((D, D), dtype=complex)
        for c, m in zip(self.coefficients(params), self.term_matrices):
            if c != 0:
                out = out + c * m
        return out

    @cached_property
    def dense_terms(self) -> list[np.ndarray]:
        return [m.toarray() for m in self.term_matrices]

    def at(self, params=None) -> np.ndarray:
        D = self.basis.dim
        out = np.zeros((D, D), dtype=complex)
        terms = self.dense_terms if D <= 512 else (m.toarray() for m in self.term_matrices)
        for c, m in zip(self.coefficients(params), terms):
            if c != 0:
                out += c * m
        if self.expr.hermitian:
            defect = np.max(np.abs(out - out.conj().T), initial=0.0)
            if defect > 1e-12:
                raise ModelInputError(f"expression flagged Hermitian but matrix defect is {defect:.2e}")
        return out

    def jet(self, params, index, slots) -> np.ndarray:
        """Matrix jet of shape (n_mon, D, D)."""
        D = self.basis.dim
        out = np.zeros((index.size, D, D), dtype=complex)
        for term, m in zip(self.expr.terms, self.term_matrices):
            if m.nnz == 0:
                continue
            cj = term.coeff.jet(params, index, slots)
            nz = np.flatnonzero(cj)
            if nz.size == 0:
                continue
            dense = m.toarray()
            out[nz] += cj[nz, None, None] * dense[None]
        return out


@lru_cache(maxsize=256)
@lru_cache(maxsize=128)
def compile_operator(expr: OperatorExpression, basis: FockBasis) -> CompiledOperator:
    """Compiled form of ``expr`` on ``basis``; cached, so treat the result as read-only."""
    return CompiledOperator(expr, basis)


def operator_matrix(expr: OperatorExpression, basis: FockBasis,
                    params: Mapping[str, float] | None = None, sparse: bool = False):
    """Matrix of ``expr`` on ``basis`` with parameters bound from ``params``.

    States leaving a layer are dropped; on truncated bases creation past the
    cutoff gives zero.  Identical inputs give bit-identical matrices.
    """
    missing = expr.symbols() - set(params or {})
    if missing:
        raise ModelInputError(f"unbound parameter(s): {', '.join(sorted(missing))}")
    c = compile_operator(expr, basis)
    return c.at_sparse(params) if sparse else c.at(params)
