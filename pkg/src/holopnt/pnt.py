"""Particle-number threshold scans.

``D(n)`` is the largest holonomy-algebra rank that any eigenspace family
reaches using only content with at most ``n`` particles, and
``N_t = min{n : D(n) = D(N_max)}``.  For number-conserving models a family
is the set of per-layer eigenspaces sharing an eigenvalue, and its rank at
``n`` is that of the direct sum of the layers ``N <= n``.  For Gaussian
isospectral words a family is one ``H0`` eigenspace and enters ``D`` from
its ``particles_needed`` onwards.  Results are certified up to ``N_max``
only.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, FrameDegeneracyError, ReliabilityWarning
from .fock import enumerate_layer
from .geometry import (DEFAULT_RANK_TOL, RANK_FLOOR, TensorBuilder, span_ranks_at_point)
from .models import ModelSpec, ParameterPoint, hamiltonian_at
from .spectral import (DEFAULT_CLUSTER_TOL, EigenspaceBlock, EigenspaceFamily, LocalFrameField,
                       default_cluster_tol, eigen_blocks, family_across_layers, h0_families,
                       local_frame)

DEFAULT_SEED = 20240917
DEFAULT_SAMPLES = 3


@dataclass(frozen=True)
class ScanConfig:
    """Scan settings; ``samples`` random points are used besides the base point."""

    N_max: int = 4
    k_max: int = 3
    samples: int = DEFAULT_SAMPLES
    seed: int = DEFAULT_SEED
    cluster_tol: float | None = None
    rank_tol: float = DEFAULT_RANK_TOL
    floor: float = RANK_FLOOR
    cutoff: int | None = None
    min_degeneracy: int = 1

    def __post_init__(self):
        if self.N_max < 0 or self.k_max < 0 or self.samples < 0:
            raise ConfigurationError("N_max, k_max and samples must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EigenspaceReportRow:
    label: int
    eigenvalue: float
    degeneracy: int
    particles_needed: int
    dim_F: int
    dim_hol: int
    stagnation_order: int | None
    ranks_by_order: list
    attainment: list
    singular_values: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PntReport:
    rows: list
    N_t: int
    argmax_label: int | None
    D: list
    config: ScanConfig
    model: str = ""
    caveat: str = ""

    def to_dict(self) -> dict:
        return {"model": self.model, "N_t": self.N_t, "argmax_label": self.argmax_label,
                "D": list(self.D), "caveat": self.caveat, "config": self.config.to_dict(),
                "rows": [r.to_dict() for r in self.rows]}


def sample_points(spec: ModelSpec, config: ScanConfig) -> list[ParameterPoint]:
    """Named base point followed by ``config.samples`` seeded random points."""
    rng = np.random.default_rng(config.seed)
    return [spec.base_point()] + [spec.random_point(rng) for _ in range(config.samples)]


def _threshold(D: Sequence[int]) -> int:
    top = D[-1]
    return next(n for n, v in enumerate(D) if v == top)


# ---------------------------------------------------------------------------
# number-conserving models

class _LayerTracker:
    """Re-identifies a layer block at other points by its position in the spectrum."""

    def __init__(self, spec: ModelSpec, base: ParameterPoint, tol: float):
        self.spec, self.base, self.tol = spec, base, tol
        self._cache: dict = {}

    def blocks(self, N: int, point: ParameterPoint) -> list[EigenspaceBlock]:
        key = (N, point)
        if key not in self._cache:
            basis = enumerate_layer(self.spec.system, N)
            H = hamiltonian_at(self.spec, point, basis)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ReliabilityWarning)
                self._cache[key] = eigen_blocks(H, self.tol, basis, N)
        return self._cache[key]

    def frame(self, block: EigenspaceBlock, point: ParameterPoint) -> LocalFrameField:
        N = block.particle_number
        ref = self.blocks(N, self.base)
        pos = next(i for i, b in enumerate(ref) if abs(b.eigenvalue - block.eigenvalue) <= 1e-12
                   + self.tol * max(1.0, abs(block.eigenvalue)))
        here = self.blocks(N, point)
        if [b.dimension for b in here] != [b.dimension for b in ref]:
            raise FrameDegeneracyError(f"degeneracy pattern of layer {N} changes at {point}")
        return local_frame(self.spec, point, here[pos])


def _family_ranks(builders_by_point, layers, config):
    """Rank data of one family for every cumulative layer bound ``n``."""
    out = {}
    for n in range(config.N_max + 1):
        best = None
        dim_F = 0
        for builders in builders_by_point:
            use = [b for N, b in zip(layers, builders) if N <= n]
            if not use:
                continue
            ranks, s, stop = span_ranks_at_point(use, config.k_max, config.rank_tol, config.floor)
            dim_F = max(dim_F, ranks[0])
            key = (ranks[-1], ranks[0])
            if best is None or key > best[0]:
                best = (key, ranks, s, stop)
        out[n] = (dim_F, best)
    return out


def _pnt_conserving(spec: ModelSpec, config: ScanConfig) -> tuple[list, list]:
    tol = config.cluster_tol if config.cluster_tol is not None else default_cluster_tol(spec)
    points = sample_points(spec, config)
    base = points[0]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ReliabilityWarning)
        fams = family_across_layers(spec, base, config.N_max, tol)
    tracker = _LayerTracker(spec, base, tol)
    rows = []
    curves = []
    K = config.k_max + 2
    for fam in fams:
        if fam.degeneracy < config.min_degeneracy:
            continue
        flags = [str(w.message) for w in caught]
        layers = [b.particle_number for b in fam.blocks]
        builders_by_point = []
        for ip, pt in enumerate(points):
            try:
                bs = []
                for b in fam.blocks:
                    f = tracker.frame(b, pt) if ip else local_frame(spec, pt, b)
                    index, Psi = f.jet(K)
                    bs.append(TensorBuilder(index, Psi, f.directions))
                builders_by_point.append(bs)
            except FrameDegeneracyError as exc:
                flags.append(f"sample point {ip} skipped: {exc}")
        if not builders_by_point:
            raise FrameDegeneracyError(f"family {fam.label} degenerate at every sample point")
        data = _family_ranks(builders_by_point, layers, config)
        curve = [data[n][1][1][-1] if data[n][1] else 0 for n in range(config.N_max + 1)]
        dim_F, best = data[config.N_max]
        _, ranks, s, stop = best
        rows.append(EigenspaceReportRow(
            fam.label, fam.eigenvalue, fam.degeneracy, fam.particles_needed, dim_F, ranks[-1],
            stop, list(ranks), curve, [float(x) for x in s[: max(ranks[-1] + 2, 1)]], flags))
        curves.append(curve)
    return rows, curves


# ---------------------------------------------------------------------------
# Gaussian isospectral words

def _gaussian_rows(spec: ModelSpec, config: ScanConfig, families: Sequence[EigenspaceFamily]):
    points = sample_points(spec, config)
    rows = []
    for fam in families:
        flags = [] if fam.complete else [f"eigenspace extends beyond N_max = {config.N_max}"]
        block = fam.blocks[0]
        frame = local_frame(spec, points[0], block, cutoff=config.cutoff)
        per = []
        for ip, pt in enumerate(points):
            index, Psi = frame.jet(config.k_max + 2, point=pt)
            per.append(span_ranks_at_point([TensorBuilder(index, Psi, frame.directions)],
                                           config.k_max, config.rank_tol, config.floor))
        dim_F = max(r[0][0] for r in per)
        ranks, s, stop = max(per, key=lambda r: (r[0][-1], r[0][0]))
        need = fam.particles_needed
        curve = [ranks[-1] if n >= need else 0 for n in range(config.N_max + 1)]
        rows.append(EigenspaceReportRow(
            fam.label, fam.eigenvalue, fam.degeneracy, need, dim_F, ranks[-1], stop,
            list(ranks), curve, [float(x) for x in s[: ranks[-1] + 2]], flags))
    return rows


def _pnt_gaussian(spec: ModelSpec, config: ScanConfig):
    tol = config.cluster_tol if config.cluster_tol is not None else DEFAULT_CLUSTER_TOL
    fams = [f for f in h0_families(spec, config.N_max, tol) if f.degeneracy >= config.min_degeneracy]
    rows = _gaussian_rows(spec, config, fams)
    curves = [r.attainment for r, f in zip(rows, fams) if f.complete]
    return rows, curves


# ---------------------------------------------------------------------------

def _caveat(config: ScanConfig) -> str:
    return (f"N_t is certified only for particle numbers up to N_max = {config.N_max} "
            f"and derivative order k_max = {config.k_max}")


def pnt_scan(spec: ModelSpec, config: ScanConfig | None = None) -> PntReport:
    """Scan eigenspace families and return ``N_t`` with a per-family breakdown."""
    config = config or ScanConfig()
    if spec.number_conserving:
        rows, curves = _pnt_conserving(spec, config)
    else:
        if not spec.isospectral:
            raise ConfigurationError("PNT scans need a number-conserving or isospectral model")
        rows, curves = _pnt_gaussian(spec, config)
    if curves:
        D = [int(max(c[n] for c in curves)) for n in range(config.N_max + 1)]
    else:
        D = [0] * (config.N_max + 1)
    N_t = _threshold(D)
    argmax = None
    for r in rows:
        if r.attainment[N_t] == D[N_t] and D[N_t] > 0 and "extends" not in " ".join(r.flags):
            argmax = r.label
            break
    return PntReport(rows, N_t, argmax, D, config, spec.name, _caveat(config))


def composite_pnt(spec: ModelSpec, config: ScanConfig | None = None) -> PntReport:
    """PNT of a composite model, scanned directly on the tensor-product system."""
    if spec.kind != "composite" and not spec.parts:
        raise ConfigurationError("composite_pnt needs a composite model")
    return pnt_scan(spec, config)


def table_report(spec: ModelSpec, config: ScanConfig | None = None,
                 min_degeneracy: int = 5) -> list[EigenspaceReportRow]:
    """Table-I style rows: labels 0 and 1 plus every eigenspace with ``d >= min_degeneracy``."""
    if spec.number_conserving or not spec.isospectral:
        raise ConfigurationError("table_report needs a Gaussian isospectral model")
    config = config or ScanConfig(N_max=6)
    tol = config.cluster_tol if config.cluster_tol is not None else DEFAULT_CLUSTER_TOL
    fams = [f for f in h0_families(spec, config.N_max, tol)
            if f.label in (0, 1) or f.degeneracy >= min_degeneracy]
    missing = [f.label for f in fams if not f.complete]
    if missing:
        warnings.warn(f"eigenspaces {missing} extend beyond N_max = {config.N_max}", ReliabilityWarning)
    return _gaussian_rows(spec, config, fams)


def format_table(rows: Sequence[EigenspaceReportRow]) -> str:
    """Plain-text table in the column order l, eps, d, <= N, dim F, dim Hol."""
    head = f"{'l':>4} {'eps':>10} {'d':>4} {'<=N':>4} {'dimF':>5} {'dimHol':>7}"
    lines = [head]
    for r in rows:
        lines.append(f"{r.label:>4} {r.eigenvalue:>10.6g} {r.degeneracy:>4} {r.particles_needed:>4} "
                     f"{r.dim_F:>5} {r.dim_hol:>7}")
    return "\n".join(lines)


def format_csv(rows: Sequence[EigenspaceReportRow]) -> str:
    lines = ["l,eps,d,N,dim_F,dim_hol"]
    for r in rows:
        lines.append(f"{r.label},{r.eigenvalue:.12g},{r.degeneracy},{r.particles_needed},{r.dim_F},{r.dim_hol}")
    return "\n".join(lines)
