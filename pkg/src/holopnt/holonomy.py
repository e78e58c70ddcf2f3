"""Loop holonomies, the Lambda-scheme area phase and adiabatic cross-checks.

Ordering convention: for a loop cut into segments ``k = 1..K`` the holonomy
is ``U = E_K ... E_2 E_1`` with ``E_k = exp(A_k^T . dkappa_k)`` and ``A_k``
the connection at the segment midpoint, i.e. later segments multiply on the
left.  With ``(A)_ab = <psi_a|d psi_b>`` the transpose is the connection
written as ``<psi_b|d psi_a>``, so ``U`` is the exponential of the loop
integral of that form.  Physical parallel transport of coefficient vectors
is ``conj(U)``; every method below reports the same ``U``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import tomli
import tomli_w
from scipy.integrate import quad, solve_ivp
from scipy.linalg import expm
from shapely.geometry import LinearRing, LineString, Polygon

from .errors import (ConfigurationError, ConvergenceError, FrameDegeneracyError,
                     ModelInputError)
from .models import ModelSpec, ParameterPoint, hamiltonian_at
from .spectral import LocalFrameField, _polar_inv_sqrt

DEFAULT_SEGMENTS = 200
MAX_DOUBLINGS = 4
REFINE_TOL = 1e-6
FAIL_TOL = 1e-5
FD_STEP = 1e-4


@dataclass(frozen=True)
class ParameterLoop:
    """Closed piecewise-linear loop through ``waypoints``.

    ``segments_per_leg`` fixes the refinement; ``None`` spreads
    ``DEFAULT_SEGMENTS`` over the legs in proportion to their length.
    """

    waypoints: tuple
    segments_per_leg: int | None = None

    def __post_init__(self):
        pts = tuple(ParameterPoint(p) for p in self.waypoints)
        if len(pts) < 2:
            raise ModelInputError("a loop needs at least two waypoints")
        names = pts[0].names
        if any(p.names != names for p in pts):
            raise ModelInputError("all waypoints must bind the same parameters")
        if not np.array_equal(pts[0].array(), pts[-1].array()):
            raise ModelInputError("loop is not closed: first and last waypoint differ")
        distinct = {tuple(p.array()) for p in pts}
        if len(distinct) != 1 and len(distinct) < 3:
            raise ModelInputError("a non-constant loop needs at least three distinct waypoints")
        if self.segments_per_leg is not None and self.segments_per_leg < 1:
            raise ModelInputError("segments_per_leg must be positive")
        object.__setattr__(self, "waypoints", pts)

    @classmethod
    def closed(cls, points: Sequence, segments_per_leg: int | None = None) -> "ParameterLoop":
        """Build a loop from open waypoints by appending the first one."""
        pts = [ParameterPoint(p) for p in points]
        return cls(tuple(pts) + (pts[0],), segments_per_leg)

    @classmethod
    def rectangle(cls, base, a: str, b: str, a_range, b_range,
                  segments_per_leg: int | None = None) -> "ParameterLoop":
        """Rectangle in the (a, b) plane, ``b`` moved first along ``a = a_range[0]``."""
        base = ParameterPoint(base)
        (a0, a1), (b0, b1) = a_range, b_range
        corners = [(a0, b0), (a0, b1), (a1, b1), (a1, b0)]
        return cls.closed([base.replace(**{a: x, b: y}) for x, y in corners], segments_per_leg)

    @property
    def names(self) -> tuple:
        return self.waypoints[0].names

    @property
    def start(self) -> ParameterPoint:
        return self.waypoints[0]

    @property
    def is_constant(self) -> bool:
        return len({tuple(p.array()) for p in self.waypoints}) == 1

    def legs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        arr = [p.array() for p in self.waypoints]
        return [(arr[i], arr[i + 1]) for i in range(len(arr) - 1)]

    def length(self) -> float:
        return float(sum(np.linalg.norm(b - a) for a, b in self.legs()))

    def reversed(self) -> "ParameterLoop":
        return ParameterLoop(self.waypoints[::-1], self.segments_per_leg)

    def then(self, other: "ParameterLoop") -> "ParameterLoop":
        """``other`` after ``self``; both must start at the same point."""
        if self.start != other.start:
            raise ModelInputError("concatenated loops must share their base point")
        return ParameterLoop(self.waypoints + other.waypoints[1:], self.segments_per_leg)

    def nodes(self, scale: int = 1) -> np.ndarray:
        """Segment end points, shape ``(K + 1, n_params)``."""
        legs = self.legs()
        if self.segments_per_leg is not None:
            counts = [self.segments_per_leg * scale] * len(legs)
        else:
            lengths = np.array([np.linalg.norm(b - a) for a, b in legs])
            total = lengths.sum()
            share = lengths / total if total > 0 else np.full(len(legs), 1 / len(legs))
            counts = [max(1, int(math.ceil(DEFAULT_SEGMENTS * scale * s))) for s in share]
        out = [legs[0][0]]
        for (a, b), n in zip(legs, counts):
            t = np.arange(1, n + 1) / n
            out.extend(a + np.outer(t, b - a))
        return np.array(out)

    def point(self, values: np.ndarray) -> ParameterPoint:
        return ParameterPoint(zip(self.names, (float(v) for v in values)))

    def to_dict(self) -> dict:
        return {"waypoints": [p.to_dict() for p in self.waypoints],
                "segments_per_leg": self.segments_per_leg}


@dataclass
class HolonomyResult:
    unitary: np.ndarray
    method: str
    error_estimate: float
    base_point: ParameterPoint
    segments: int = 0
    notes: list = field(default_factory=list)

    @property
    def unitarity_defect(self) -> float:
        U = self.unitary
        return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])), initial=0.0))

    @property
    def eigenvalues(self) -> np.ndarray:
        w = np.linalg.eigvals(self.unitary)
        return w[np.lexsort((w.imag, w.real))]

    def phase(self) -> float:
        """``arg det U``, the Abelian phase for one-dimensional blocks."""
        return float(np.angle(np.linalg.det(self.unitary)))


def _check_names(frame: LocalFrameField, loop: ParameterLoop) -> None:
    missing = set(loop.names) - set(frame.spec.parameter_names)
    if missing:
        raise ModelInputError(f"loop binds unknown parameters {sorted(missing)}")


def _full_point(frame: LocalFrameField, loop: ParameterLoop, values) -> ParameterPoint:
    return frame.base_point.replace(**dict(zip(loop.names, (float(v) for v in values))))


_GAUSS = 0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6


def _directional_connection(frame: LocalFrameField, loop: ParameterLoop, x, u, step: float):
    """``A . u`` from the anti-Hermitian part of ``Psi(x - h u)^+ Psi(x + h u)``."""
    plus = frame.evaluate(_full_point(frame, loop, x + step * u))
    minus = frame.evaluate(_full_point(frame, loop, x - step * u))
    M = minus.conj().T @ plus
    return (M - M.conj().T) / (4 * step)


def _ordered_product(frame: LocalFrameField, loop: ParameterLoop, scale: int, step: float):
    """Fourth-order Magnus product over the segments of the refined loop."""
    nodes = loop.nodes(scale)
    d = frame.dimension
    U = np.eye(d, dtype=complex)
    for a, b in zip(nodes[:-1], nodes[1:]):
        delta = b - a
        norm = float(np.linalg.norm(delta))
        if norm == 0.0:
            continue
        u = delta / norm
        B1, B2 = (_directional_connection(frame, loop, a + g * delta, u, step).T for g in _GAUSS)
        omega = 0.5 * norm * (B1 + B2) - (math.sqrt(3) / 12) * norm ** 2 * (B1 @ B2 - B2 @ B1)
        U = expm(omega) @ U
    return U, len(nodes) - 1


def holonomy_ordered_exp(frame: LocalFrameField, loop: ParameterLoop, step: float = FD_STEP,
                         refine_tol: float = REFINE_TOL, max_doublings: int = MAX_DOUBLINGS,
                         fail_tol: float = FAIL_TOL) -> HolonomyResult:
    """Ordered product of fourth-order Magnus exponentials, refined by doubling.

    Raises :class:`ConvergenceError` when the doubling change is still above
    ``fail_tol`` at the finest level.
    """
    _check_names(frame, loop)
    start = _full_point(frame, loop, loop.start.array())
    if loop.is_constant:
        return HolonomyResult(np.eye(frame.dimension, dtype=complex), "ordered-exponential", 0.0, start)
    U, K = _ordered_product(frame, loop, 1, step)
    change = math.inf
    scale = 1
    for _ in range(max_doublings):
        scale *= 2
        V, K = _ordered_product(frame, loop, scale, step)
        change = float(np.max(np.abs(V - U)))
        U = V
        if change < refine_tol:
            break
    if change > fail_tol:
        raise ConvergenceError(f"ordered exponential changed by {change:.2e} at {K} segments")
    return HolonomyResult(U, "ordered-exponential", change, start, K)


def _transport(frame: LocalFrameField, loop: ParameterLoop, scale: int) -> tuple[np.ndarray, int]:
    nodes = loop.nodes(scale)
    psi0 = frame.evaluate(_full_point(frame, loop, nodes[0]))
    psi = psi0
    for x in nodes[1:]:
        P = frame.projector(_full_point(frame, loop, x))
        Ppsi = P @ psi
        M = psi.conj().T @ Ppsi
        if np.min(np.linalg.svd(M, compute_uv=False)) < frame.min_overlap:
            raise FrameDegeneracyError("transported frame lost rank along the loop")
        psi = Ppsi @ _polar_inv_sqrt(M)
    return np.conj(psi0.conj().T @ psi), len(nodes) - 1


def holonomy_projector_transport(frame: LocalFrameField, loop: ParameterLoop,
                                 refine_tol: float = REFINE_TOL,
                                 max_doublings: int = MAX_DOUBLINGS) -> HolonomyResult:
    """Discrete parallel transport by successive projection and polar orthonormalization.

    The overlap of the transported frame with the starting frame is the
    physical transport matrix; its complex conjugate is returned so the
    result is directly comparable with :func:`holonomy_ordered_exp`.
    """
    _check_names(frame, loop)
    if frame.gauge != "projector":
        raise ConfigurationError("projector transport needs a number-conserving frame")
    start = _full_point(frame, loop, loop.start.array())
    if loop.is_constant:
        return HolonomyResult(np.eye(frame.dimension, dtype=complex), "projector-transport", 0.0, start)
    U, K = _transport(frame, loop, 1)
    change = math.inf
    scale = 1
    for _ in range(max_doublings):
        scale *= 2
        V, K = _transport(frame, loop, scale)
        change = float(np.max(np.abs(V - U)))
        U = V
        if change < refine_tol:
            break
    return HolonomyResult(U, "projector-transport", change, start, K)


def commutator_defect(U1: HolonomyResult | np.ndarray, U2: HolonomyResult | np.ndarray) -> float:
    """Operator norm of ``U1 U2 - U2 U1``."""
    a = U1.unitary if isinstance(U1, HolonomyResult) else np.asarray(U1)
    b = U2.unitary if isinstance(U2, HolonomyResult) else np.asarray(U2)
    return float(np.linalg.norm(a @ b - b @ a, 2))


def loop_commutator_defect(frame: LocalFrameField, loop1: ParameterLoop,
                           loop2: ParameterLoop) -> float:
    """Commutator defect of the holonomies of two loops sharing a frame."""
    if dict(loop1.start) != dict(loop2.start):
        raise ConfigurationError("holonomies can only be compared for loops with a common base point")
    return commutator_defect(holonomy_ordered_exp(frame, loop1), holonomy_ordered_exp(frame, loop2))


# ---------------------------------------------------------------------------
# Lambda scheme: area and line integrals in the (theta, phi) chart

def _chart(loop_or_points, theta: str, phi: str) -> np.ndarray:
    if isinstance(loop_or_points, ParameterLoop):
        pts = loop_or_points.waypoints
        return np.array([[p[phi], p[theta]] for p in pts])
    arr = np.asarray(loop_or_points, dtype=float)
    return arr


def geometric_phase_area(loop, theta: str = "theta", phi: str = "phi") -> float:
    """Surface integral of ``sin(2 theta)`` over the region enclosed by the loop.

    Coordinates are ``x = phi`` and ``y = theta``; counterclockwise loops
    count positive.  The inner integral over ``phi`` is the exact chord
    length of the polygon and the outer one is adaptive quadrature.
    """
    xy = _chart(loop, theta, phi)
    ring_pts = xy[:-1] if np.array_equal(xy[0], xy[-1]) else xy
    if len({tuple(p) for p in ring_pts}) < 3:
        return 0.0
    ring = LinearRing(ring_pts)
    if not ring.is_simple:
        raise ModelInputError("loop is self-intersecting in the (theta, phi) chart")
    poly = Polygon(ring)
    if poly.area == 0.0:
        return 0.0
    sign = 1.0 if ring.is_ccw else -1.0
    x0, y0, x1, y1 = poly.bounds
    breaks = sorted({float(y) for y in ring_pts[:, 1]})

    def chord(y: float) -> float:
        return poly.intersection(LineString([(x0 - 1, y), (x1 + 1, y)])).length

    val, _ = quad(lambda y: math.sin(2 * y) * chord(y), y0, y1, points=breaks[1:-1] or None,
                  epsabs=1e-13, epsrel=1e-12, limit=200)
    return sign * val


def geometric_phase_line(loop, theta: str = "theta", phi: str = "phi") -> float:
    """``-i`` times the loop integral of ``A_phi = i cos^2 theta`` along straight legs."""
    xy = _chart(loop, theta, phi)
    total = 0.0
    for (xa, ya), (xb, yb) in zip(xy[:-1], xy[1:]):
        dx, dy = xb - xa, yb - ya
        if dx == 0.0:
            continue
        val, _ = quad(lambda t: math.cos(ya + t * dy) ** 2, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
        total += val * dx
    return total


# ---------------------------------------------------------------------------
# adiabatic evolution

def _ramp(s: float) -> float:
    """Smooth map [0, 1] -> [0, 1] with vanishing velocity at both ends."""
    return s - math.sin(2 * math.pi * s) / (2 * math.pi)


def _loop_position(loop: ParameterLoop, s: float) -> np.ndarray:
    """Point at time fraction ``s``: legs get time in proportion to their
    length and each is ramped, so the path stops at every corner."""
    legs = [(a, b) for a, b in loop.legs() if np.linalg.norm(b - a) > 0]
    lengths = np.array([np.linalg.norm(b - a) for a, b in legs])
    edges = np.concatenate([[0.0], np.cumsum(lengths) / lengths.sum()])
    k = min(int(np.searchsorted(edges, s, side="right")) - 1, len(legs) - 1)
    k = max(k, 0)
    f = (s - edges[k]) / (edges[k + 1] - edges[k])
    a, b = legs[k]
    return a + _ramp(min(max(f, 0.0), 1.0)) * (b - a)


def adiabatic_check(frame: LocalFrameField, loop: ParameterLoop, T: float,
                    rtol: float = 1e-9, atol: float = 1e-11) -> HolonomyResult:
    """Holonomy from slow Schroedinger evolution around the loop over time ``T``.

    Each base-frame column is evolved with ``i d psi/dt = H psi``, the
    dynamical phase ``exp(-i eps T)`` of the block eigenvalue is removed and
    the result is projected onto the starting frame.
    """
    _check_names(frame, loop)
    start = _full_point(frame, loop, loop.start.array())
    basis = frame.frame_basis
    psi0 = frame.evaluate(start)
    if loop.is_constant:
        return HolonomyResult(np.eye(frame.dimension, dtype=complex), "adiabatic", 0.0, start)

    def H(t):
        x = _loop_position(loop, t / T)
        return hamiltonian_at(frame.spec, _full_point(frame, loop, x), basis)

    D, d = psi0.shape

    def rhs(t, y):
        return (-1j * (H(t) @ y.reshape(D, d))).ravel()

    sol = solve_ivp(rhs, (0.0, T), psi0.ravel().astype(complex), method="DOP853",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise ConvergenceError(f"adiabatic integration failed: {sol.message}")
    psiT = sol.y[:, -1].reshape(D, d) * np.exp(1j * frame.eigenvalue * T)
    M = psi0.conj().T @ psiT
    leak = float(np.linalg.norm(psiT - psi0 @ M))
    res = HolonomyResult(np.conj(M), "adiabatic", leak, start, int(sol.t.size))
    res.notes.append(f"leakage out of the block {leak:.2e}")
    return res


# ---------------------------------------------------------------------------
# loop documents

LOOP_SCHEMA = "holopnt.loop/1"


def parse_loop(text: str, base: ParameterPoint | None = None) -> ParameterLoop:
    """Loop from a TOML document.

    Keys: ``waypoints`` (list of tables of parameter values), optional
    ``segments_per_leg``, optional ``close = true`` to append the first
    waypoint, optional ``schema``.  Parameters missing from a waypoint take
    their value from ``base``.
    """
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ModelInputError(f"malformed loop document: {exc.msg}", line=exc.lineno,
                              column=exc.colno) from None
    allowed = {"schema", "waypoints", "segments_per_leg", "close"}
    extra = set(data) - allowed
    if extra:
        raise ModelInputError(f"unknown loop keys {sorted(extra)}", path=sorted(extra)[0])
    if data.get("schema", LOOP_SCHEMA) != LOOP_SCHEMA:
        raise ModelInputError(f"unsupported loop schema {data['schema']!r}", path="schema")
    wps = data.get("waypoints")
    if not isinstance(wps, list) or not all(isinstance(w, dict) for w in wps):
        raise ModelInputError("waypoints must be a list of tables", path="waypoints")
    pts = []
    for i, w in enumerate(wps):
        for k, v in w.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ModelInputError(f"waypoint value {k} must be a number", path=f"waypoints[{i}].{k}")
        vals = {k: float(v) for k, v in w.items()}
        pts.append(base.replace(**vals) if base is not None else ParameterPoint(vals))
    if data.get("close", False):
        pts.append(pts[0])
    seg = data.get("segments_per_leg")
    if seg is not None and (isinstance(seg, bool) or not isinstance(seg, int)):
        raise ModelInputError("segments_per_leg must be an integer", path="segments_per_leg")
    return ParameterLoop(tuple(pts), seg)


def loop_document(loop: ParameterLoop) -> str:
    data = {"schema": LOOP_SCHEMA, "waypoints": [p.to_dict() for p in loop.waypoints]}
    if loop.segments_per_leg is not None:
        data["segments_per_leg"] = loop.segments_per_leg
    return tomli_w.dumps(data)
