"""Model zoo and the model document format.

A model is described by a small TOML document.  Exactly one of the
following top-level keys selects its kind::

    model = "lambda"                 # builtin, optional [options] table
    [graph]                          # coupled graph
    edge = [{i = 2, j = 1, amp = "cos(theta)", phase = "phi"}, ...]
    [isospectral]                    # H = V H0 V^+
    h0 = "n(1) + n(2) - n(4)"
    word = [{factor = "mixer", modes = [1, 2], params = ["theta1", "phi1"]}, ...]
    [jaynes_cummings]
    omega_a = "wa"; omega_c = "wc"; kappa = "g"
    [[compose]]                      # non-interacting union of sub-documents
    model = "lambda"; prefix = "a_"

plus ``system = {bosons, two_levels, cutoff}``, an optional ``name``, a
``[[parameters]]`` list (``name``, ``kind``, ``range``, ``base``) and
optional ``[points.<label>]`` tables of named parameter points.  Edge terms
are ``amp * exp(i*phase) a'(i) a(j) + H.c.``.  Word factors act in product
order (leftmost factor is applied last to a state):

* ``mixer`` (modes j, k; params theta, phi):
  ``Z(phi/2) exp(theta (a'_j a_k - a'_k a_j)) Z(phi/2)``, ``Z(x) = exp(i x (n_j - n_k))``
* ``displace`` (k; r, theta): ``exp(r e^{i theta} a'_k - h.c.)``
* ``squeeze`` (k; r, theta): ``exp(r e^{i theta} a'_k^2 - h.c.)``
* ``twomode_squeeze`` (j, k; r, theta): ``exp(r e^{i theta} a'_j a'_k - h.c.)``
* ``twomode_displace`` (j, k; r, theta): ``exp(r e^{i theta} a'_j a_k - h.c.)``
* ``exp`` (any modes; one param x, ``generator`` string G): ``exp(x G)``

Each factor is stored as a product of elementary exponentials
``exp(scale * p * G)`` with a numeric anti-Hermitian generator ``G``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import tomli
import tomli_w

from .errors import ConfigurationError, ModelInputError
from .expr import (RESERVED, OperatorExpression, check_modes, is_number_conserving,
                   parse_coefficient, parse_operator)
from .fock import FockBasis, ModeSystem, compile_operator, enumerate_graded, operator_matrix

KINDS = ("coupled_graph", "isospectral_mixer", "isospectral_gaussian",
         "jaynes_cummings", "composite")
FACTORS = {
    "mixer": (2, 2),
    "displace": (1, 2),
    "squeeze": (1, 2),
    "twomode_squeeze": (2, 2),
    "twomode_displace": (2, 2),
    "exp": (None, 1),
}
PARAM_KINDS = ("angle", "amplitude", "real")
TWO_PI = 2 * math.pi


# ---------------------------------------------------------------------------
# parameter points

class ParameterPoint(Mapping):
    """Immutable ordered map from parameter name to real value."""

    __slots__ = ("_names", "_values", "_index")

    def __init__(self, values=(), **kw):
        items = list(values.items() if isinstance(values, Mapping) else values) + list(kw.items())
        names = tuple(str(k) for k, _ in items)
        if len(set(names)) != len(names):
            raise ModelInputError("duplicate parameter name in point")
        vals = tuple(float(v) for _, v in items)
        for n, v in zip(names, vals):
            if not math.isfinite(v):
                raise ModelInputError(f"parameter {n} is not finite")
        self._names = names
        self._values = vals
        self._index = {n: i for i, n in enumerate(names)}

    def __getitem__(self, key):
        return self._values[self._index[key]]

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __eq__(self, other):
        if isinstance(other, ParameterPoint):
            return self._names == other._names and self._values == other._values
        return NotImplemented

    def __hash__(self):
        return hash((self._names, self._values))

    def __repr__(self):
        inner = ", ".join(f"{n}={v:.6g}" for n, v in zip(self._names, self._values))
        return f"ParameterPoint({inner})"

    @property
    def names(self) -> tuple:
        return self._names

    def array(self) -> np.ndarray:
        return np.array(self._values, dtype=float)

    def replace(self, **changes) -> "ParameterPoint":
        unknown = set(changes) - set(self._names)
        if unknown:
            raise ModelInputError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        return ParameterPoint([(n, changes.get(n, v)) for n, v in zip(self._names, self._values)])

    def moved(self, names: Sequence[str], delta) -> "ParameterPoint":
        """Point displaced by ``delta`` along ``names``."""
        vals = list(self._values)
        for n, d in zip(names, delta):
            vals[self._index[n]] += float(d)
        return ParameterPoint(zip(self._names, vals))

    def to_dict(self) -> dict:
        return dict(zip(self._names, self._values))


# ---------------------------------------------------------------------------
# spec data

@dataclass(frozen=True)
class ParamInfo:
    name: str
    kind: str = "real"
    low: float = 0.0
    high: float = TWO_PI
    base: float = 0.0

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    amp: str
    phase: str = "0"


@dataclass(frozen=True)
class WordFactor:
    factor: str
    modes: tuple
    params: tuple
    generator: str | None = None


@dataclass(frozen=True)
class Elementary:
    """``exp(scale * params[param] * generator)``."""

    param: str
    scale: float
    generator: OperatorExpression


@dataclass(frozen=True)
class Structure:
    """Flattened model: ``H = expr(k) + V(k) H0 V(k)^+`` with ``V`` a word."""

    system: ModeSystem
    expr: OperatorExpression | None
    h0: OperatorExpression | None
    elementaries: tuple

    @property
    def isospectral(self) -> bool:
        return self.expr is None and self.h0 is not None


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    system: ModeSystem
    parameters: tuple
    name: str = ""
    edges: tuple = ()
    h0: str | None = None
    word: tuple = ()
    jc: tuple | None = None
    parts: tuple = ()
    prefixes: tuple = ()
    points: tuple = ()
    builtin: str | None = field(default=None, compare=False)

    @property
    def parameter_names(self) -> tuple:
        return tuple(p.name for p in self.parameters)

    def param(self, name: str) -> ParamInfo:
        for p in self.parameters:
            if p.name == name:
                return p
        raise ModelInputError(f"unknown parameter {name}")

    @property
    def isospectral(self) -> bool:
        return self.structure.isospectral

    @property
    def number_conserving(self) -> bool:
        s = self.structure
        ok = True
        if s.expr is not None:
            ok &= is_number_conserving(s.expr)
        if s.h0 is not None:
            ok &= is_number_conserving(s.h0)
        return ok and all(is_number_conserving(e.generator) for e in s.elementaries)

    @cached_property
    def structure(self) -> Structure:
        return _structure(self)

    def base_point(self) -> ParameterPoint:
        if self.points:
            return self.named_point(self.points[0][0])
        return ParameterPoint([(p.name, p.base) for p in self.parameters])

    def named_point(self, label: str) -> ParameterPoint:
        for lab, vals in self.points:
            if lab == label:
                d = dict(vals)
                return ParameterPoint([(p.name, d.get(p.name, p.base)) for p in self.parameters])
        raise ModelInputError(f"no named point {label!r}")

    def random_point(self, rng: np.random.Generator) -> ParameterPoint:
        return ParameterPoint([(p.name, p.sample(rng)) for p in self.parameters])

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()


# ---------------------------------------------------------------------------
# elementary factors

def _gen(text: str) -> OperatorExpression:
    return parse_operator(text)


def factor_elementaries(f: WordFactor) -> list[Elementary]:
    m = f.modes
    if f.factor == "mixer":
        j, k = m
        theta, phi = f.params
        z = _gen(f"i n({j}) - i n({k})")
        return [Elementary(phi, 0.5, z),
                Elementary(theta, 1.0, _gen(f"a'({j}) a({k}) - a'({k}) a({j})")),
                Elementary(phi, 0.5, z)]
    if f.factor == "exp":
        return [Elementary(f.params[0], 1.0, _gen(f.generator))]
    r, theta = f.params
    if f.factor == "displace":
        (k,) = m
        rot, scale, g = f"i n({k})", 1.0, f"a'({k}) - a({k})"
    elif f.factor == "squeeze":
        (k,) = m
        rot, scale, g = f"i n({k})", 0.5, f"a'({k}) a'({k}) - a({k}) a({k})"
    elif f.factor == "twomode_squeeze":
        j, k = m
        rot, scale, g = f"i n({j})", 1.0, f"a'({j}) a'({k}) - a({j}) a({k})"
    elif f.factor == "twomode_displace":
        j, k = m
        rot, scale, g = f"i n({j})", 1.0, f"a'({j}) a({k}) - a({j}) a'({k})"
    else:
        raise ModelInputError(f"unknown factor {f.factor!r}")
    R = _gen(rot)
    return [Elementary(theta, scale, R), Elementary(r, 1.0, _gen(g)), Elementary(theta, -scale, R)]


def _graph_expr(edges: Sequence[Edge]) -> OperatorExpression:
    text = " + ".join(f"({e.amp}) exp(i*({e.phase})) a'({e.i}) a({e.j})" for e in edges)
    return parse_operator(text).with_hc() if edges else OperatorExpression((), True)


def _jc_expr(wa: str, wc: str, g: str) -> OperatorExpression:
    return parse_operator(f"({wa}) sp(1) sm(1) + ({wc}) n(1) + ({g}) (a'(1) sm(1) + a(1) sp(1))",
                          hermitian=True)


def _structure(spec: ModelSpec) -> Structure:
    if spec.kind == "coupled_graph":
        return Structure(spec.system, _graph_expr(spec.edges), None, ())
    if spec.kind == "jaynes_cummings":
        return Structure(spec.system, _jc_expr(*spec.jc), None, ())
    if spec.kind in ("isospectral_mixer", "isospectral_gaussian"):
        els = tuple(e for f in spec.word for e in factor_elementaries(f))
        return Structure(spec.system, None, parse_operator(spec.h0, hermitian=True), els)
    # composite
    expr = None
    h0 = None
    els: list[Elementary] = []
    ob = ot = 0
    for part, prefix in zip(spec.parts, spec.prefixes):
        s = part.structure
        mapping = {n: prefix + n for n in part.parameter_names}
        if s.expr is not None:
            e = s.expr.shifted(ob, ot).renamed(mapping)
            expr = e if expr is None else expr + e
        if s.h0 is not None:
            e = s.h0.shifted(ob, ot)
            h0 = e if h0 is None else h0 + e
            els.extend(Elementary(mapping[x.param], x.scale, x.generator.shifted(ob, ot))
                       for x in s.elementaries)
        ob += part.system.bosons
        ot += part.system.two_levels
    return Structure(spec.system, expr, h0, tuple(els))


# ---------------------------------------------------------------------------
# evaluation

def _check_basis(spec: ModelSpec, basis: FockBasis) -> None:
    if (basis.system.bosons, basis.system.two_levels) != (spec.system.bosons, spec.system.two_levels):
        raise ConfigurationError("basis does not belong to the model's mode system")


def _bind(spec: ModelSpec, params: Mapping[str, float]) -> Mapping[str, float]:
    missing = set(spec.parameter_names) - set(params)
    if missing:
        raise ModelInputError(f"unbound parameter(s): {', '.join(sorted(missing))}")
    return params


def elementary_matrix(e: Elementary, value: float, basis: FockBasis) -> np.ndarray:
    G = compile_operator(e.generator, basis).at()
    return sla.expm(e.scale * value * G)


def unitary_at(spec: ModelSpec, params: Mapping[str, float], basis: FockBasis) -> np.ndarray:
    """Matrix of the word ``V`` on ``basis``.

    On layers and for number-conserving words this is exactly unitary; on
    truncated bases Gaussian factors are exponentials of truncated
    generators and unitarity degrades only near the cutoff.
    """
    _check_basis(spec, basis)
    params = _bind(spec, params)
    s = spec.structure
    if s.h0 is None:
        raise ConfigurationError(f"model kind {spec.kind} has no parametrizing unitary")
    U = np.eye(basis.dim, dtype=complex)
    for e in s.elementaries:
        v = params[e.param]
        if v != 0:
            U = U @ elementary_matrix(e, v, basis)
    return U


def unitarity_defect(U: np.ndarray, basis: FockBasis, margin: int | None = None) -> float:
    """``max |U^+U - I|`` restricted to states with N <= cutoff - margin."""
    D = U.conj().T @ U - np.eye(U.shape[0])
    if margin is not None and basis.system.cutoff is not None:
        keep = basis.particle_numbers() <= basis.system.cutoff - margin
        D = D[np.ix_(keep, keep)]
    return float(np.max(np.abs(D), initial=0.0))


def h0_matrix(spec: ModelSpec, basis: FockBasis) -> np.ndarray:
    s = spec.structure
    if s.h0 is None:
        raise ConfigurationError("model has no base Hamiltonian")
    return compile_operator(s.h0, basis).at()


def hamiltonian_at(spec: ModelSpec, params: Mapping[str, float], basis: FockBasis) -> np.ndarray:
    """``H(k)`` on ``basis``: graph/JC terms plus ``V H0 V^+`` for isospectral parts."""
    _check_basis(spec, basis)
    params = _bind(spec, params)
    s = spec.structure
    H = np.zeros((basis.dim, basis.dim), dtype=complex)
    if s.expr is not None:
        H += operator_matrix(s.expr, basis, params)
    if s.h0 is not None:
        V = unitary_at(spec, params, basis)
        H += V @ h0_matrix(spec, basis) @ V.conj().T
    return 0.5 * (H + H.conj().T)


# ---------------------------------------------------------------------------
# composition

def compose(specs: Sequence[ModelSpec], prefixes: Sequence[str] | None = None,
            name: str = "") -> ModelSpec:
    """Non-interacting union of models on the tensor-product Fock space."""
    specs = tuple(specs)
    if len(specs) < 1:
        raise ModelInputError("compose needs at least one model")
    prefixes = tuple(prefixes) if prefixes is not None else ("",) * len(specs)
    if len(prefixes) != len(specs):
        raise ModelInputError("one prefix per composed model is required")
    params: list[ParamInfo] = []
    seen: set[str] = set()
    points: dict[str, dict] = {}
    for s, pre in zip(specs, prefixes):
        for p in s.parameters:
            n = pre + p.name
            if n in seen:
                raise ModelInputError(f"parameter-name collision: {n}")
            seen.add(n)
            params.append(ParamInfo(n, p.kind, p.low, p.high, p.base))
        if s.points:
            lab, vals = s.points[0]
            points.setdefault("base", {}).update({pre + k: v for k, v in vals})
    cutoffs = [s.system.cutoff for s in specs if s.system.cutoff is not None]
    system = ModeSystem(sum(s.system.bosons for s in specs),
                        sum(s.system.two_levels for s in specs),
                        max(cutoffs) if cutoffs else None)
    pts = tuple((k, tuple(v.items())) for k, v in points.items())
    return ModelSpec("composite", system, tuple(params), name=name, parts=specs,
                     prefixes=prefixes, points=pts)


# ---------------------------------------------------------------------------
# builtins

_BUILTIN_DOCS = {
    "lambda": """
name = "lambda"
system = {{bosons = 3, two_levels = 0}}
[graph]
edge = [
  {{i = 2, j = 1, amp = "cos(theta)", phase = "phi"}},
  {{i = 3, j = 2, amp = "sin(theta)", phase = "0"}},
]
[[parameters]]
name = "theta"
kind = "angle"
range = [0.15, 1.42]
base = 0.6
[[parameters]]
name = "phi"
kind = "angle"
range = [0.0, 6.283185307179586]
base = 0.4
""",
    "tripod": """
name = "tripod"
system = {{bosons = 4, two_levels = 0}}
[graph]
edge = [
  {{i = 1, j = 2, amp = "sin(theta) cos(chi)", phase = "phi1"}},
  {{i = 1, j = 3, amp = "sin(theta) sin(chi)", phase = "phi2"}},
  {{i = 1, j = 4, amp = "cos(theta)", phase = "0"}},
]
[[parameters]]
name = "theta"
kind = "angle"
range = [0.2, 1.37]
base = 0.7
[[parameters]]
name = "chi"
kind = "angle"
range = [0.2, 1.37]
base = 0.5
[[parameters]]
name = "phi1"
kind = "angle"
range = [0.0, 6.283185307179586]
base = 0.3
[[parameters]]
name = "phi2"
kind = "angle"
range = [0.0, 6.283185307179586]
base = 1.1
""",
    "fcg4": """
name = "fcg4"
system = {{bosons = 4, two_levels = 0}}
[isospectral]
h0 = "n(1) + n(2) - n(4)"
word = [
  {{factor = "mixer", modes = [1, 2], params = ["theta1", "phi1"]}},
  {{factor = "mixer", modes = [2, 3], params = ["theta2", "phi2"]}},
  {{factor = "mixer", modes = [3, 4], params = ["theta3", "phi3"]}},
]
{angles}
[points.kappa0]
theta1 = 0.7853981633974483
theta2 = 0.7853981633974483
theta3 = 0.7853981633974483
phi1 = 0.0
phi2 = 0.0
phi3 = 0.0
""",
    "fcg3": """
name = "fcg3"
system = {{bosons = 3, two_levels = 0}}
[isospectral]
h0 = "n(1) - n(3)"
word = [
  {{factor = "mixer", modes = [1, 2], params = ["theta_p", "phi_p"]}},
  {{factor = "mixer", modes = [2, 3], params = ["theta_m", "phi_m"]}},
]
{angles}
""",
    "kerr2": """
name = "kerr2"
system = {{bosons = 2, two_levels = 0, cutoff = {cutoff}}}
[isospectral]
h0 = "n(1) (n(1) - 1) + n(2) (n(2) - 1)"
word = [
  {{factor = "twomode_displace", modes = [1, 2], params = ["r4", "theta4"]}},
  {{factor = "twomode_squeeze", modes = [1, 2], params = ["r3", "theta3"]}},
  {{factor = "displace", modes = [{k}], params = ["r1", "theta1"]}},
  {{factor = "squeeze", modes = [{j}], params = ["r2", "theta2"]}},
]
{kerr_params}
[points.zeta0]
r1 = 0.0
r2 = 0.0
r3 = 0.0
r4 = 0.3
theta1 = 0.0
theta2 = 0.0
theta3 = 0.0
theta4 = 0.7
""",
    "jaynes_cummings": """
name = "jaynes_cummings"
system = {{bosons = 1, two_levels = 1}}
[jaynes_cummings]
omega_a = "omega_a"
omega_c = "omega_c"
kappa = "kappa"
[[parameters]]
name = "omega_a"
kind = "real"
range = [0.8, 1.2]
base = 1.0
[[parameters]]
name = "omega_c"
kind = "real"
range = [0.8, 1.4]
base = 1.2
[[parameters]]
name = "kappa"
kind = "amplitude"
range = [0.05, 0.5]
base = 0.3
""",
}

BUILTINS = tuple(_BUILTIN_DOCS)


def _param_block(name, kind, lo, hi, base) -> str:
    return (f'[[parameters]]\nname = "{name}"\nkind = "{kind}"\n'
            f"range = [{lo!r}, {hi!r}]\nbase = {base!r}\n")


def _mixer_params(thetas, phis) -> str:
    out = [_param_block(t, "angle", 0.15, 1.42, 0.6) for t in thetas]
    out += [_param_block(p, "angle", 0.0, TWO_PI, 0.3) for p in phis]
    return "".join(out)


def builtin_document(name: str, **options) -> str:
    if name not in _BUILTIN_DOCS:
        raise ModelInputError(f"unknown builtin model {name!r}; choose from {', '.join(BUILTINS)}")
    allowed = {"kerr2": {"cutoff", "displace_mode", "squeeze_mode"}}.get(name, set())
    bad = set(options) - allowed
    if bad:
        raise ModelInputError(f"unknown option(s) for {name}: {', '.join(sorted(bad))}")
    fmt = {}
    if name == "fcg4":
        fmt["angles"] = _mixer_params(["theta1", "theta2", "theta3"], ["phi1", "phi2", "phi3"])
    elif name == "fcg3":
        fmt["angles"] = _mixer_params(["theta_p", "theta_m"], ["phi_p", "phi_m"])
    elif name == "kerr2":
        k = int(options.get("displace_mode", 1))
        j = int(options.get("squeeze_mode", 1))
        if k not in (1, 2) or j not in (1, 2):
            raise ModelInputError("kerr2 mode options must be 1 or 2")
        fmt.update(cutoff=int(options.get("cutoff", 20)), k=k, j=j)
        blocks = []
        for idx in (1, 2, 3, 4):
            blocks.append(_param_block(f"r{idx}", "amplitude", 0.05, 0.25, 0.3 if idx == 4 else 0.0))
        for idx in (1, 2, 3, 4):
            blocks.append(_param_block(f"theta{idx}", "angle", 0.0, TWO_PI, 0.7 if idx == 4 else 0.0))
        fmt["kerr_params"] = "".join(blocks)
    return _BUILTIN_DOCS[name].format(**fmt)


def builtin(name: str, **options) -> ModelSpec:
    """One of the named reference models; see ``BUILTINS``."""
    spec = parse_model(builtin_document(name, **options))
    object.__setattr__(spec, "builtin", name)
    return spec


# ---------------------------------------------------------------------------
# document parsing

def _locate(text: str, needle: str):
    if not needle:
        return None, None
    pos = text.find(needle)
    if pos < 0:
        return None, None
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


class _Doc:
    def __init__(self, text: str):
        self.text = text

    def fail(self, msg: str, path: str, needle: str | None = None):
        line, col = _locate(self.text, needle or path.rsplit(".", 1)[-1].split("[")[0])
        raise ModelInputError(msg, line=line, column=col, path=path)

    def keys(self, table: Mapping, allowed: set, path: str):
        for k in table:
            if k not in allowed:
                self.fail(f"unknown key {k!r}", f"{path}.{k}" if path else k, k)

    def integer(self, v, path: str, low: int = None) -> int:
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail("expected an integer", path)
        if low is not None and v < low:
            self.fail(f"expected an integer >= {low}", path)
        return v

    def string(self, v, path: str) -> str:
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return repr(v)
        if not isinstance(v, str):
            self.fail("expected a string", path)
        return v


_TOP = {"name", "model", "options", "graph", "isospectral", "jaynes_cummings", "compose",
        "system", "parameters", "points", "schema"}


def parse_model(text: str) -> ModelSpec:
    """Parse a model document; raises ModelInputError with line/column on failure."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ModelInputError(f"syntax error: {getattr(exc, 'msg', str(exc))}",
                              line=getattr(exc, "lineno", None),
                              column=getattr(exc, "colno", None)) from None
    return _from_table(data, _Doc(text), "")


def _from_table(data: Mapping, doc: _Doc, path: str) -> ModelSpec:
    doc.keys(data, _TOP | ({"prefix"} if path else set()), path)
    pre = f"{path}." if path else ""
    if "schema" in data and data["schema"] != "holopnt.model/1":
        doc.fail("unsupported schema", pre + "schema")
    selectors = [k for k in ("model", "graph", "isospectral", "jaynes_cummings", "compose") if k in data]
    if len(selectors) != 1:
        doc.fail("exactly one of model, graph, isospectral, jaynes_cummings, compose is required",
                 path or "model", selectors[1] if len(selectors) > 1 else None)
    sel = selectors[0]
    name = doc.string(data.get("name", ""), pre + "name")

    if sel == "model":
        extra = set(data) - {"model", "options", "name", "schema", "prefix"}
        if extra:
            doc.fail(f"builtin reference accepts only options, not {sorted(extra)[0]!r}",
                     pre + sorted(extra)[0])
        opts = data.get("options", {})
        if not isinstance(opts, Mapping):
            doc.fail("options must be a table", pre + "options")
        try:
            return builtin(doc.string(data["model"], pre + "model"), **opts)
        except ModelInputError as exc:
            doc.fail(exc.message, pre + "model", str(data["model"]))

    if sel == "compose":
        parts = data["compose"]
        if not isinstance(parts, list) or not parts:
            doc.fail("compose must be a non-empty array of tables", pre + "compose")
        specs, prefixes = [], []
        for idx, p in enumerate(parts):
            sub = f"{pre}compose[{idx}]"
            if not isinstance(p, Mapping):
                doc.fail("compose entries must be tables", sub)
            specs.append(_from_table(p, doc, sub))
            prefixes.append(doc.string(p.get("prefix", ""), sub + ".prefix"))
        extra = set(data) - {"compose", "name", "schema", "prefix"}
        if extra:
            doc.fail(f"composite documents take parameters from their parts, not {sorted(extra)[0]!r}",
                     pre + sorted(extra)[0])
        try:
            return compose(specs, prefixes, name=name)
        except ModelInputError as exc:
            doc.fail(exc.message, pre + "compose")

    system = _system(data, doc, pre, sel)
    edges: tuple = ()
    h0 = None
    word: tuple = ()
    jc = None
    exprs: list[tuple[str, OperatorExpression]] = []
    if sel == "graph":
        g = data["graph"]
        if not isinstance(g, Mapping):
            doc.fail("graph must be a table", pre + "graph")
        doc.keys(g, {"edge"}, pre + "graph")
        raw = g.get("edge", [])
        if not isinstance(raw, list):
            doc.fail("graph.edge must be an array of tables", pre + "graph.edge")
        out = []
        for idx, e in enumerate(raw):
            ep = f"{pre}graph.edge[{idx}]"
            if not isinstance(e, Mapping):
                doc.fail("edge must be a table", ep)
            doc.keys(e, {"i", "j", "amp", "phase"}, ep)
            for k in ("i", "j", "amp"):
                if k not in e:
                    doc.fail(f"edge is missing {k!r}", ep, "edge")
            i = doc.integer(e["i"], ep + ".i", 1)
            j = doc.integer(e["j"], ep + ".j", 1)
            for kk, m in (("i", i), ("j", j)):
                if m > system.bosons:
                    doc.fail(f"boson mode {m} referenced but the system has {system.bosons}",
                             f"{ep}.{kk}", f"{kk} = {m}")
            if i == j:
                doc.fail("edge must join two distinct modes", ep, f"i = {i}")
            edge = Edge(i, j, doc.string(e["amp"], ep + ".amp"), doc.string(e.get("phase", "0"), ep + ".phase"))
            for k in ("amp", "phase"):
                try:
                    c = parse_coefficient(getattr(edge, k))
                except ModelInputError as exc:
                    doc.fail(exc.message, f"{ep}.{k}", getattr(edge, k))
                exprs.append((f"{ep}.{k}", c))
            out.append(edge)
        edges = tuple(out)
        kind = "coupled_graph"
    elif sel == "jaynes_cummings":
        t = data["jaynes_cummings"]
        if not isinstance(t, Mapping):
            doc.fail("jaynes_cummings must be a table", pre + "jaynes_cummings")
        doc.keys(t, {"omega_a", "omega_c", "kappa"}, pre + "jaynes_cummings")
        vals = []
        for k, default in (("omega_a", "omega_a"), ("omega_c", "omega_c"), ("kappa", "kappa")):
            s = doc.string(t.get(k, default), f"{pre}jaynes_cummings.{k}")
            try:
                exprs.append((f"{pre}jaynes_cummings.{k}", parse_coefficient(s)))
            except ModelInputError as exc:
                doc.fail(exc.message, f"{pre}jaynes_cummings.{k}", s)
            vals.append(s)
        jc = tuple(vals)
        if system.bosons < 1 or system.two_levels < 1:
            doc.fail("jaynes_cummings needs one boson and one two-level system", pre + "system")
        kind = "jaynes_cummings"
    else:
        t = data["isospectral"]
        if not isinstance(t, Mapping):
            doc.fail("isospectral must be a table", pre + "isospectral")
        doc.keys(t, {"h0", "word"}, pre + "isospectral")
        if "h0" not in t:
            doc.fail("isospectral model needs h0", pre + "isospectral", "isospectral")
        h0 = doc.string(t["h0"], pre + "isospectral.h0")
        try:
            h0e = parse_operator(h0, hermitian=True)
            check_modes(h0e, system.bosons, system.two_levels)
        except ModelInputError as exc:
            doc.fail(exc.message, pre + "isospectral.h0", h0)
        if h0e.symbols():
            doc.fail("h0 must not depend on parameters", pre + "isospectral.h0", h0)
        words = []
        for idx, w in enumerate(t.get("word", [])):
            wp = f"{pre}isospectral.word[{idx}]"
            words.append(_word_factor(w, doc, wp, system))
        word = tuple(words)
        gauss = not is_number_conserving(h0e) or any(
            not is_number_conserving(e.generator) for f in word for e in factor_elementaries(f))
        if gauss and system.cutoff is None:
            doc.fail("non-number-conserving words need system.cutoff", pre + "system", "system")
        if system.two_levels and word:
            for f in word:
                for e in factor_elementaries(f):
                    if any(not x.boson for t_ in e.generator.terms for x in t_.factors):
                        doc.fail("word generators may only use boson modes", wp)
        kind = "isospectral_gaussian" if gauss else "isospectral_mixer"
        for f in word:
            for pname in f.params:
                exprs.append((pre + "isospectral.word", parse_coefficient(pname)))

    params = _parameters(data, doc, pre, exprs)
    points = _points(data, doc, pre, params)
    return ModelSpec(kind, system, params, name=name, edges=edges, h0=h0, word=word, jc=jc,
                     points=points)


def _system(data, doc: _Doc, pre: str, sel: str) -> ModeSystem:
    raw = data.get("system")
    if raw is None:
        if sel == "jaynes_cummings":
            raw = {"bosons": 1, "two_levels": 1}
        else:
            doc.fail("system table is required", pre + "system", None)
    if not isinstance(raw, Mapping):
        doc.fail("system must be a table", pre + "system")
    doc.keys(raw, {"bosons", "two_levels", "cutoff"}, pre + "system")
    b = doc.integer(raw.get("bosons", 0), pre + "system.bosons", 0)
    t = doc.integer(raw.get("two_levels", 0), pre + "system.two_levels", 0)
    c = raw.get("cutoff")
    if c is not None:
        c = doc.integer(c, pre + "system.cutoff", 1)
    if b + t < 1:
        doc.fail("system needs at least one mode", pre + "system", "system")
    return ModeSystem(b, t, c)


def _word_factor(w, doc: _Doc, wp: str, system: ModeSystem) -> WordFactor:
    if not isinstance(w, Mapping):
        doc.fail("word entries must be tables", wp)
    doc.keys(w, {"factor", "modes", "params", "generator"}, wp)
    fac = doc.string(w.get("factor", ""), wp + ".factor")
    if fac not in FACTORS:
        doc.fail(f"unknown factor {fac!r}; choose from {', '.join(FACTORS)}", wp + ".factor", fac)
    nmodes, nparams = FACTORS[fac]
    modes = w.get("modes", [])
    params = w.get("params", [])
    if not isinstance(modes, list) or not isinstance(params, list):
        doc.fail("modes and params must be arrays", wp)
    modes = tuple(doc.integer(m, f"{wp}.modes", 1) for m in modes)
    if nmodes is not None and len(modes) != nmodes:
        doc.fail(f"factor {fac} needs {nmodes} mode(s)", wp + ".modes", "modes")
    for m in modes:
        if m > system.bosons:
            doc.fail(f"boson mode {m} referenced but the system has {system.bosons}", wp + ".modes", "modes")
    if len(set(modes)) != len(modes):
        doc.fail("factor modes must be distinct", wp + ".modes", "modes")
    params = tuple(doc.string(p, f"{wp}.params") for p in params)
    if len(params) != nparams:
        doc.fail(f"factor {fac} needs {nparams} parameter(s)", wp + ".params", "params")
    for p in params:
        if not p.isidentifier() or p in RESERVED:
            doc.fail(f"invalid parameter name {p!r}", wp + ".params", p)
    gen = None
    if fac == "exp":
        if "generator" not in w:
            doc.fail("exp factor needs a generator", wp, "generator")
        gen = doc.string(w["generator"], wp + ".generator")
        try:
            g = parse_operator(gen)
            check_modes(g, system.bosons, 0)
        except ModelInputError as exc:
            doc.fail(exc.message, wp + ".generator", gen)
        if g.symbols():
            doc.fail("generator must be numeric", wp + ".generator", gen)
        if any(len(t.factors) > 2 for t in g.terms):
            doc.fail("generator must be at most quadratic", wp + ".generator", gen)
        M = compile_operator(g, enumerate_graded(ModeSystem(system.bosons), 4)).at()
        if np.max(np.abs(M + M.conj().T), initial=0.0) > 1e-12:
            doc.fail("generator must be anti-Hermitian", wp + ".generator", gen)
    elif "generator" in w:
        doc.fail("only exp factors take a generator", wp + ".generator", "generator")
    return WordFactor(fac, modes, params, gen)


def _parameters(data, doc: _Doc, pre: str, exprs) -> tuple:
    used: list[str] = []
    for _, c in exprs:
        for s in sorted(c.symbols()):
            if s not in used:
                used.append(s)
    raw = data.get("parameters")
    if raw is None:
        return tuple(ParamInfo(n) for n in used)
    if not isinstance(raw, list):
        doc.fail("parameters must be an array of tables", pre + "parameters")
    out: list[ParamInfo] = []
    names: set[str] = set()
    for idx, p in enumerate(raw):
        pp = f"{pre}parameters[{idx}]"
        if not isinstance(p, Mapping):
            doc.fail("parameter entries must be tables", pp)
        doc.keys(p, {"name", "kind", "range", "base"}, pp)
        n = doc.string(p.get("name", ""), pp + ".name")
        if not n.isidentifier() or n in RESERVED:
            doc.fail(f"invalid parameter name {n!r}", pp + ".name", n)
        if n in names:
            doc.fail(f"duplicate parameter {n!r}", pp + ".name", f'"{n}"')
        names.add(n)
        kind = doc.string(p.get("kind", "real"), pp + ".kind")
        if kind not in PARAM_KINDS:
            doc.fail(f"parameter kind must be one of {', '.join(PARAM_KINDS)}", pp + ".kind", kind)
        rng = p.get("range", [0.0, TWO_PI])
        if (not isinstance(rng, list) or len(rng) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in rng)
                or not rng[0] <= rng[1]):
            doc.fail("range must be [low, high] with low <= high", pp + ".range", "range")
        base = p.get("base", float(rng[0]))
        if isinstance(base, bool) or not isinstance(base, (int, float)):
            doc.fail("base must be a number", pp + ".base", "base")
        if kind == "amplitude" and (rng[0] < 0 or base < 0):
            doc.fail("amplitudes must be non-negative", pp, n)
        out.append(ParamInfo(n, kind, float(rng[0]), float(rng[1]), float(base)))
    missing = [u for u in used if u not in names]
    if missing:
        doc.fail(f"undeclared parameter {missing[0]!r}", pre + "parameters", missing[0])
    return tuple(out)


def _points(data, doc: _Doc, pre: str, params: tuple) -> tuple:
    raw = data.get("points", {})
    if not isinstance(raw, Mapping):
        doc.fail("points must be a table of tables", pre + "points")
    names = {p.name for p in params}
    out = []
    for label, vals in raw.items():
        pp = f"{pre}points.{label}"
        if not isinstance(vals, Mapping):
            doc.fail("a named point must be a table", pp, label)
        for k, v in vals.items():
            if k not in names:
                doc.fail(f"unknown parameter {k!r} in named point", f"{pp}.{k}", k)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                doc.fail("point values must be numbers", f"{pp}.{k}", k)
        out.append((label, tuple((k, float(v)) for k, v in vals.items())))
    return tuple(out)


# ---------------------------------------------------------------------------
# serialization

def _to_table(spec: ModelSpec) -> dict:
    out: dict = {}
    if spec.name:
        out["name"] = spec.name
    if spec.kind == "composite":
        parts = []
        for s, p in zip(spec.parts, spec.prefixes):
            t = _to_table(s)
            if p:
                t["prefix"] = p
            parts.append(t)
        out["compose"] = parts
        return out
    sysd = {"bosons": spec.system.bosons, "two_levels": spec.system.two_levels}
    if spec.system.cutoff is not None:
        sysd["cutoff"] = spec.system.cutoff
    out["system"] = sysd
    if spec.kind == "coupled_graph":
        out["graph"] = {"edge": [{"i": e.i, "j": e.j, "amp": e.amp, "phase": e.phase} for e in spec.edges]}
    elif spec.kind == "jaynes_cummings":
        out["jaynes_cummings"] = dict(zip(("omega_a", "omega_c", "kappa"), spec.jc))
    else:
        word = []
        for f in spec.word:
            d = {"factor": f.factor, "modes": list(f.modes), "params": list(f.params)}
            if f.generator is not None:
                d["generator"] = f.generator
            word.append(d)
        out["isospectral"] = {"h0": spec.h0, "word": word}
    out["parameters"] = [{"name": p.name, "kind": p.kind, "range": [p.low, p.high], "base": p.base}
                         for p in spec.parameters]
    if spec.points:
        out["points"] = {lab: dict(vals) for lab, vals in spec.points}
    return out


def serialize(spec: ModelSpec) -> str:
    """Fully expanded document; ``parse_model(serialize(s)) == s``."""
    return tomli_w.dumps(_to_table(spec))


def load_model(ref: str) -> tuple[ModelSpec, str]:
    """Builtin name or path to a document; returns (spec, document text)."""
    if ref in _BUILTIN_DOCS:
        text = f'model = "{ref}"\n'
        return parse_model(text), text
    try:
        with open(ref, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelInputError(f"cannot read model document {ref!r}: {exc.strerror}") from None
    return parse_model(text), text
