"""Connection, curvature, covariant derivatives and holonomy-algebra rank.

Conventions: ``A_mu = Psi^+ d_mu Psi``, i.e. ``(A_mu)_ab = <psi_a|d_mu psi_b>``,
``F_mn = d_m A_n - d_n A_m + [A_m, A_n]`` and ``nabla_s X = d_s X + [A_s, X]``.
Higher derivatives are stored outermost first: key ``(s2, s1)`` means
``nabla_s2 nabla_s1 F``.

The production path differentiates exact Taylor jets of the frame (see
``spectral``); the finite-difference routines below are independent
oracles with Richardson extrapolation, used for cross-checks and for the
connection in gauges that have no jet.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import jets
from .errors import (ConfigurationError, CutoffConvergenceError, FrameDegeneracyError,
                     ReliabilityWarning, StepSizeError)
from .fock import enumerate_truncated
from .models import ModelSpec, ParameterPoint, unitary_at
from .spectral import LocalFrameField

TAU_AH = 1e-7
DEFAULT_STEP = 1e-3
DEFAULT_RANK_TOL = 1e-6
RANK_FLOOR = 1e-9


@dataclass
class ConnectionField:
    directions: tuple
    components: dict
    at: ParameterPoint
    gauge: str = ""
    defect: float = 0.0

    def __getitem__(self, name):
        return self.components[name]


@dataclass
class CurvatureSet:
    """Curvature components and covariant derivatives at one point.

    ``components[(m, n)]`` holds ``F_mn`` for every ordered pair of distinct
    directions; ``derivatives[(sigmas, (m, n))]`` holds the covariant
    derivatives with ``sigmas`` outermost first.
    """

    directions: tuple
    components: dict
    at: ParameterPoint | None = None
    derivatives: dict = field(default_factory=dict)
    order: int = 0
    defect: float = 0.0
    warnings: list = field(default_factory=list)

    def __getitem__(self, key):
        if isinstance(key, tuple) and len(key) == 2 and isinstance(key[0], str):
            return self.components[key]
        return self.derivatives[key]

    def matrices(self, max_order: int | None = None) -> list[np.ndarray]:
        """Independent components: F for m < n and all derivatives of those."""
        k = self.order if max_order is None else max_order
        idx = {d: i for i, d in enumerate(self.directions)}
        out = [m for (a, b), m in self.components.items() if idx[a] < idx[b]]
        for (sig, (a, b)), m in self.derivatives.items():
            if idx[a] < idx[b] and len(sig) <= k:
                out.append(m)
        return out


@dataclass
class LieSpanResult:
    """Rank of the real span of a set of anti-Hermitian matrices."""

    matrices: int
    rank: int
    singular_values: np.ndarray
    stagnation_order: int | None = None
    sample_points: list = field(default_factory=list)
    ranks_by_order: list = field(default_factory=list)
    order: int = 0
    best_point: int = 0
    per_point: list = field(default_factory=list)
    notices: list = field(default_factory=list)

    @property
    def dim_F(self) -> int:
        return self.ranks_by_order[0] if self.ranks_by_order else self.rank


def _anti_hermitize(M: np.ndarray):
    defect = float(np.max(np.abs(M + np.conj(np.swapaxes(M, -1, -2))), initial=0.0))
    return 0.5 * (M - np.conj(np.swapaxes(M, -1, -2))), defect


# ---------------------------------------------------------------------------
# rank

def _vectors(mats) -> np.ndarray:
    mats = [np.asarray(m) for m in mats]
    if not mats:
        return np.zeros((0, 0))
    flat = np.stack([m.reshape(-1) for m in mats])
    return np.concatenate([flat.real, flat.imag], axis=1)


def span_rank(vectors: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL,
              floor: float = RANK_FLOOR) -> tuple[int, np.ndarray]:
    if vectors.size == 0:
        return 0, np.zeros(0)
    s = np.linalg.svd(vectors, compute_uv=False)
    if s.size == 0 or s[0] <= floor:
        return 0, s
    return int(np.sum(s > max(rank_tol * s[0], floor))), s


def lie_algebra_dimension(matrices: Sequence[np.ndarray], rank_tol: float = DEFAULT_RANK_TOL,
                          floor: float = RANK_FLOOR) -> LieSpanResult:
    """Rank of the real linear span; threshold ``rank_tol * s_max`` (absolute floor ``floor``)."""
    mats = list(matrices)
    if mats:
        shapes = {np.shape(m) for m in mats}
        if len(shapes) != 1:
            raise ConfigurationError("all matrices must have the same shape")
    r, s = span_rank(_vectors(mats), rank_tol, floor)
    return LieSpanResult(len(mats), r, s, ranks_by_order=[r])


# ---------------------------------------------------------------------------
# jet tensors

@dataclass
class JetTensors:
    """Values at the expansion point of A, F and nabla^k F from a frame jet.

    ``levels[k]`` has shape ``(M,)*k + (P, d, d)`` with P the pairs m < n.
    """

    directions: tuple
    pairs: list
    A: np.ndarray
    levels: list
    defect: float

    def curvature_set(self, at=None) -> CurvatureSet:
        comps = {}
        for p, (a, b) in enumerate(self.pairs):
            da, db = self.directions[a], self.directions[b]
            comps[(da, db)] = self.levels[0][p]
            comps[(db, da)] = -self.levels[0][p]
        ders = {}
        for k in range(1, len(self.levels)):
            L = self.levels[k]
            for sig in itertools.product(range(len(self.directions)), repeat=k):
                names = tuple(self.directions[s] for s in sig)
                for p, (a, b) in enumerate(self.pairs):
                    da, db = self.directions[a], self.directions[b]
                    ders[(names, (da, db))] = L[sig + (p,)]
                    ders[(names, (db, da))] = -L[sig + (p,)]
        return CurvatureSet(self.directions, comps, at, ders, len(self.levels) - 1, self.defect)

    def connection(self, at=None, gauge="") -> ConnectionField:
        return ConnectionField(self.directions, {d: self.A[i] for i, d in enumerate(self.directions)},
                               at, gauge, self.defect)


class TensorBuilder:
    """Lazy computation of nabla^k F values from a frame jet of order K."""

    def __init__(self, index: jets.JetIndex, Psi: np.ndarray, directions: Sequence[str]):
        self.index = index
        self.K = K = index.order
        self.directions = tuple(directions)
        M = len(self.directions)
        if K < 2:
            raise ConfigurationError("frame jets need order >= 2 for curvature")
        dPsi = np.stack([jets.deriv(index, Psi, v, K) for v in range(M)], axis=1)
        A = jets.mul(index, jets.dagger(Psi)[:, None], dPsi, K - 1)
        A, self.defect = _anti_hermitize(A)
        self.Ajet = A
        self.pairs = [(a, b) for a in range(M) for b in range(a + 1, M)]
        ia = np.array([a for a, _ in self.pairs], dtype=int)
        ib = np.array([b for _, b in self.pairs], dtype=int)
        n = index.count(K - 2)
        dA = np.stack([jets.deriv(index, A, v, K - 1) for v in range(M)], axis=1)  # (n, M, M, d, d)
        F = dA[:n, ia, ib] - dA[:n, ib, ia]
        F = F + jets.commutator(index, A[:, ia], A[:, ib], K - 2)
        F, dF = _anti_hermitize(F)
        self.defect = max(self.defect, dF)
        self._jets = [F]  # level k jet valid to K-2-k, stack (M,)*k + (P,)

    @property
    def max_level(self) -> int:
        return self.K - 2

    def level_jet(self, k: int) -> np.ndarray:
        if k > self.max_level:
            raise ConfigurationError(f"jet order {self.K} supports derivatives up to {self.max_level}")
        while len(self._jets) <= k:
            j = len(self._jets) - 1
            T = self._jets[j]
            valid = self.K - 2 - j
            M = len(self.directions)
            stack = T.shape[1:-2]
            dT = np.stack([jets.deriv(self.index, T, v, valid) for v in range(M)], axis=1)
            Ab = self.Ajet.reshape(self.Ajet.shape[:2] + (1,) * len(stack) + self.Ajet.shape[-2:])
            Tb = T[:, None]
            comm = jets.commutator(self.index, Ab, Tb, valid - 1)
            N, dN = _anti_hermitize(dT + comm)
            self.defect = max(self.defect, dN)
            self._jets.append(N)
        return self._jets[k]

    def level(self, k: int) -> np.ndarray:
        return self.level_jet(k)[0]

    def tensors(self, order: int) -> JetTensors:
        return JetTensors(self.directions, self.pairs, self.Ajet[0],
                          [self.level(k) for k in range(order + 1)], self.defect)


def jet_tensors(frame: LocalFrameField, order: int = 1, point=None,
                directions: Sequence[str] | None = None) -> JetTensors:
    """Connection, curvature and covariant derivatives up to ``order`` at a point."""
    directions = tuple(directions) if directions is not None else frame.directions
    index, Psi = frame.jet(order + 2, directions, point)
    return TensorBuilder(index, Psi, directions).tensors(order)


# ---------------------------------------------------------------------------
# holonomy-algebra dimension

def _block_vectors(level: np.ndarray) -> np.ndarray:
    d = level.shape[-1]
    flat = level.reshape(-1, d * d)
    return np.concatenate([flat.real, flat.imag], axis=1)


def span_ranks_at_point(builders: Sequence[TensorBuilder], k_max: int,
                        rank_tol: float = DEFAULT_RANK_TOL, floor: float = RANK_FLOOR,
                        patience: int = 2):
    """Ranks of {F, nabla F, ...} order by order for a direct sum of blocks.

    Returns ``(ranks_by_order, singular_values, stop_order)``.  Stops on
    saturation (``sum d_b^2``) or when the rank did not grow for
    ``patience`` consecutive orders.
    """
    cap = sum(b.Ajet.shape[-1] ** 2 for b in builders)
    rows = []
    ranks: list[int] = []
    s = np.zeros(0)
    stop = None
    for k in range(k_max + 1):
        rows.append(np.concatenate([_block_vectors(b.level(k)) for b in builders], axis=1))
        r, s = span_rank(np.concatenate(rows, axis=0), rank_tol, floor)
        ranks.append(r)
        if r >= cap:
            stop = k
            break
        if k >= patience and all(ranks[k - i] == ranks[k - i - 1] for i in range(patience)):
            stop = k
            break
    return ranks, s, stop


def holonomy_dimension(frames: Sequence[LocalFrameField] | LocalFrameField,
                       points: Sequence[ParameterPoint] | None = None, k_max: int = 3,
                       rank_tol: float = DEFAULT_RANK_TOL, floor: float = RANK_FLOOR,
                       directions: Sequence[str] | None = None,
                       frame_factory: Callable | None = None) -> LieSpanResult:
    """Max over sample points of rank{F, nabla F, ..., nabla^k_max F}.

    ``frames`` are the blocks of a direct sum (e.g. one per Fock layer).
    With ``frame_factory`` given, frames are rebuilt at every sample point
    (``frame_factory(point) -> list of frames``); otherwise jets are taken at
    each point from the given frame fields.  Points where a frame
    degenerates are skipped with a notice.
    """
    if isinstance(frames, LocalFrameField):
        frames = [frames]
    frames = list(frames)
    if points is None:
        points = [frames[0].base_point] if frames else []
    best = None
    per_point = []
    notices = []
    used = []
    for ip, pt in enumerate(points):
        try:
            fr = frame_factory(pt) if frame_factory is not None else frames
            builders = []
            for f in fr:
                dirs = tuple(directions) if directions is not None else f.directions
                index, Psi = f.jet(k_max + 2, dirs, pt)
                builders.append(TensorBuilder(index, Psi, dirs))
            ranks, s, stop = span_ranks_at_point(builders, k_max, rank_tol, floor)
        except FrameDegeneracyError as exc:
            notices.append(f"point {ip} skipped: {exc}")
            continue
        used.append(pt)
        per_point.append(ranks)
        key = (ranks[-1], ranks[0])
        if best is None or key > best[0]:
            best = (key, ranks, s, stop, ip)
    if best is None:
        if not points:
            return LieSpanResult(0, 0, np.zeros(0), None, [], [0], 0, 0, [], notices)
        raise FrameDegeneracyError("frame degenerate at every sample point")
    _, ranks, s, stop, ip = best
    dim_F = max(r[0] for r in per_point)
    ranks_out = list(ranks)
    ranks_out[0] = dim_F
    for k in range(1, len(ranks_out)):
        ranks_out[k] = max(ranks_out[k], ranks_out[k - 1])
    nmat = sum(len(b.pairs) * len(b.directions) ** k for k in range(len(ranks)) for b in builders[:1])
    return LieSpanResult(nmat, ranks_out[-1], s, stop, used, ranks_out, len(ranks) - 1, ip,
                         per_point, notices)


# ---------------------------------------------------------------------------
# finite-difference oracles

def _central(f: Callable, x: ParameterPoint, name: str, h: float, richardson: bool = True):
    def D(step):
        return (f(x.moved([name], [step])) - f(x.moved([name], [-step]))) / (2 * step)
    if not richardson:
        return D(h)
    return (4 * D(h / 2) - D(h)) / 3


def connection_at(frame: LocalFrameField, point, step: float = DEFAULT_STEP,
                  directions: Sequence[str] | None = None, richardson: bool = True,
                  tol: float = TAU_AH) -> ConnectionField:
    """``A_mu = Psi^+ d_mu Psi`` by central differences of the frame field."""
    point = ParameterPoint(point)
    directions = tuple(directions) if directions is not None else frame.directions
    psi = frame.evaluate(point)
    comps = {}
    defect = 0.0
    for d in directions:
        dpsi = _central(frame.evaluate, point, d, step, richardson)
        A, df = _anti_hermitize(psi.conj().T @ dpsi)
        defect = max(defect, df)
        comps[d] = A
    if defect > 10 * tol:
        raise StepSizeError(f"connection anti-Hermiticity defect {defect:.2e} at step {step}")
    return ConnectionField(directions, comps, point, frame.gauge, defect)


def connection_isospectral(spec: ModelSpec, h0_frame: np.ndarray, basis, point,
                           step: float = DEFAULT_STEP, directions: Sequence[str] | None = None,
                           cutoff: int | None = None, escalate: int = 4, tol: float = 1e-8,
                           max_escalations: int = 3) -> ConnectionField:
    """``A_mu = Psi0^+ V^+ d_mu V Psi0`` with ``d_mu V`` by central differences.

    For Gaussian words the Fock cutoff is raised by ``escalate`` until the
    entries change by less than ``tol``.
    """
    point = ParameterPoint(point)
    directions = tuple(directions) if directions is not None else spec.parameter_names

    def once(b):
        psi0 = b.embed(basis, h0_frame)
        V = unitary_at(spec, point, b)
        comps = {}
        defect = 0.0
        for d in directions:
            dV = _central(lambda q: unitary_at(spec, q, b), point, d, step)
            A, df = _anti_hermitize(psi0.conj().T @ V.conj().T @ dV @ psi0)
            comps[d] = A
            defect = max(defect, df)
        return comps, defect

    if spec.number_conserving:
        comps, defect = once(basis)
        return ConnectionField(directions, comps, point, "word", defect)
    c = cutoff or spec.system.cutoff
    if c is None:
        raise ConfigurationError("Gaussian words need a cutoff")
    prev, _ = once(enumerate_truncated(spec.system.with_cutoff(c)))
    for _ in range(max_escalations):
        c += escalate
        comps, defect = once(enumerate_truncated(spec.system.with_cutoff(c)))
        change = max(float(np.max(np.abs(comps[d] - prev[d]))) for d in directions)
        if change < tol:
            return ConnectionField(directions, comps, point, "word", defect)
        prev = comps
    raise CutoffConvergenceError(f"connection still changing by {change:.2e} at cutoff {c}")


def _curv_from(A: Mapping, dA: Mapping, directions) -> dict:
    out = {}
    for i, m in enumerate(directions):
        for n in directions[i + 1:]:
            F = dA[m][n] - dA[n][m] + A[m] @ A[n] - A[n] @ A[m]
            out[(m, n)] = F
            out[(n, m)] = -F
    return out


def curvature_at(sampler: Callable[[ParameterPoint], ConnectionField], point,
                 step: float = DEFAULT_STEP, directions: Sequence[str] | None = None,
                 richardson: bool = True) -> CurvatureSet:
    """``F_mn = d_m A_n - d_n A_m + [A_m, A_n]`` with ``d`` by central differences of ``sampler``."""
    point = ParameterPoint(point)
    conn = sampler(point)
    directions = tuple(directions) if directions is not None else conn.directions
    dA = {}
    for m in directions:
        def comp(q, m=m):
            c = sampler(q)
            return np.stack([c[n] for n in directions])
        stack = _central(comp, point, m, step, richardson)
        dA[m] = {n: stack[i] for i, n in enumerate(directions)}
    F = _curv_from(conn.components, dA, directions)
    defect = 0.0
    for k in F:
        F[k], df = _anti_hermitize(F[k])
        defect = max(defect, df)
    return CurvatureSet(directions, F, point, {}, 0, defect)


def covariant_derivatives(curvature_sampler: Callable[[ParameterPoint], CurvatureSet],
                          connection_sampler: Callable[[ParameterPoint], ConnectionField],
                          point, order: int = 1, step: float = DEFAULT_STEP,
                          rank_tol: float = DEFAULT_RANK_TOL, richardson: bool = True) -> CurvatureSet:
    """Nested ``nabla_s = d_s + [A_s, .]`` by central differences, up to ``order``.

    Cost grows like ``(4 M)^order`` curvature evaluations; intended as an
    oracle for low orders.  When the estimated difference noise exceeds the
    rank tolerance a reliability warning is attached.
    """
    point = ParameterPoint(point)
    base = curvature_sampler(point)
    directions = base.directions

    def tensor(q, k):
        """dict key -> matrix for all derivative keys of length k at q."""
        if k == 0:
            cs = curvature_sampler(q)
            return {((), p): m for p, m in cs.components.items()}
        lower = lambda x: tensor(x, k - 1)
        A = connection_sampler(q)
        low = lower(q)
        out = {}
        for s in directions:
            def f(x, s=s):
                t = lower(x)
                return np.stack([t[key] for key in sorted(low)])
            d = _central(f, q, s, step, richardson)
            for i, key in enumerate(sorted(low)):
                sig, p = key
                out[((s,) + sig, p)] = d[i] + A[s] @ low[key] - low[key] @ A[s]
        return out

    ders = {}
    notes = []
    defect = base.defect
    for k in range(1, order + 1):
        t = tensor(point, k)
        for key, m in t.items():
            m, df = _anti_hermitize(m)
            defect = max(defect, df)
            ders[key] = m
        noise = step ** (4 if richardson else 2) + 1e-16 / step ** k
        if noise > rank_tol:
            msg = f"order-{k} finite-difference noise estimate {noise:.1e} exceeds rank tolerance"
            notes.append(msg)
            warnings.warn(msg, ReliabilityWarning, stacklevel=2)
    return CurvatureSet(directions, base.components, point, ders, order, defect, notes)
