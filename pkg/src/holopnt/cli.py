"""Command-line front end.

Every run emits one self-describing report (``--format document``, JSON),
a flat comma-separated table (``--format table``) or readable text.
Exit codes: 0 success, 2 input error, 3 numerical failure, 4 reliability
flag raised under ``--strict``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from typing import Sequence

import numpy as np

from . import __version__
from .errors import (ConfigurationError, HolopntError, ModelInputError, NumericalFailure,
                     ReliabilityWarning)
from .fock import enumerate_layer
from .geometry import DEFAULT_RANK_TOL, DEFAULT_STEP, holonomy_dimension
from .holonomy import (adiabatic_check, commutator_defect, geometric_phase_area,
                       holonomy_ordered_exp, holonomy_projector_transport, parse_loop)
from .models import ModelSpec, ParameterPoint, h0_matrix, hamiltonian_at, load_model
from .pnt import DEFAULT_SEED, ScanConfig, format_csv, format_table, pnt_scan
from .spectral import BlockSelector, eigen_blocks, h0_families, local_frame

REPORT_SCHEMA = "holopnt.report/1"
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_STRICT = 0, 2, 3, 4


class _Strict(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers

def _cx(M) -> list:
    """Complex array as nested ``[re, im]`` pairs."""
    a = np.asarray(M)
    if a.ndim == 0:
        return [float(a.real), float(a.imag)]
    return [_cx(x) for x in a]


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ModelInputError(f"cannot read {path!r}: {exc.strerror}") from None


def _point(spec: ModelSpec, args) -> ParameterPoint:
    pt = spec.named_point(args.point) if args.point else spec.base_point()
    changes = {}
    for item in args.param or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ModelInputError(f"--param expects name=value, got {item!r}")
        try:
            changes[name.strip()] = float(value)
        except ValueError:
            raise ModelInputError(f"--param value for {name} is not a number") from None
    return pt.replace(**changes) if changes else pt


def _selector(args) -> BlockSelector:
    if args.layers is None:
        raise ModelInputError("--layers is required to select an eigenspace")
    if (args.eigenvalue is None) == (args.label is None):
        raise ModelInputError("give exactly one of --eigenvalue and --label")
    return BlockSelector(tuple(args.layers), eigenvalue=args.eigenvalue, label=args.label)


def _config(args, **extra) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "format")}
    cfg.update(extra)
    return cfg


def _manifest(text: str, config: dict) -> dict:
    return {"tool": "holopnt", "tool_version": __version__,
            "model_digest": "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest(),
            "config": config, "timestamp": None}


def _report(command: str, text: str, args, result: dict, warnings_: list, **cfg) -> dict:
    return {"schema": REPORT_SCHEMA, "command": command,
            "manifest": _manifest(text, _config(args, **cfg)),
            "result": result, "warnings": warnings_}


# ---------------------------------------------------------------------------
# commands

def cmd_validate(args):
    spec, text = load_model(args.model)
    res = {"name": spec.name, "kind": spec.kind, "parameters": list(spec.parameter_names),
           "bosons": spec.system.bosons, "two_levels": spec.system.two_levels,
           "cutoff": spec.system.cutoff, "number_conserving": spec.number_conserving,
           "isospectral": spec.isospectral, "digest": spec.digest()}
    lines = [f"{spec.name}: valid {spec.kind} model",
             f"parameters: {', '.join(spec.parameter_names)}"]
    return _report("validate", text, args, res, []), lines, None


def cmd_spectrum(args):
    spec, text = load_model(args.model)
    pt = _point(spec, args)
    layers = []
    lines = []
    if spec.number_conserving:
        for N in range(args.N + 1):
            basis = enumerate_layer(spec.system, N)
            H = hamiltonian_at(spec, pt, basis)
            blocks = eigen_blocks(H, args.cluster_tol or 1e-8, basis, N)
            layers.append({"N": N, "dimension": basis.dim,
                           "blocks": [{"eigenvalue": b.eigenvalue, "degeneracy": b.dimension}
                                      for b in blocks]})
            lines.append(f"N = {N}: " + ", ".join(f"{b.eigenvalue:.10g} (x{b.dimension})"
                                                  for b in blocks))
        res = {"point": pt.to_dict(), "layers": layers}
    else:
        fams = h0_families(spec, args.N)
        rows = [{"label": f.label, "eigenvalue": f.eigenvalue, "degeneracy": f.degeneracy,
                 "particles_needed": f.particles_needed, "complete": f.complete} for f in fams]
        for r in rows:
            lines.append(f"l = {r['label']}: eps = {r['eigenvalue']:.10g}, d = {r['degeneracy']}, "
                         f"<= N = {r['particles_needed']}" + ("" if r["complete"] else " (truncated)"))
        res = {"point": pt.to_dict(), "families": rows}
    csv = ["N,eigenvalue,degeneracy"] + [f"{l['N']},{b['eigenvalue']:.12g},{b['degeneracy']}"
                                          for l in layers for b in l["blocks"]]
    return _report("spectrum", text, args, res, []), lines, "\n".join(csv)


def cmd_curvature(args):
    spec, text = load_model(args.model)
    pt = _point(spec, args)
    frame = local_frame(spec, pt, _selector(args), cutoff=args.cutoff)
    rng = np.random.default_rng(args.seed)
    points = [pt] + [spec.random_point(rng) for _ in range(args.samples)]
    res = holonomy_dimension(frame, points, k_max=args.order, rank_tol=args.rank_tol)
    out = {"dimension": frame.dimension, "eigenvalue": frame.eigenvalue,
           "rank": res.rank, "dim_F": res.dim_F, "ranks_by_order": list(res.ranks_by_order),
           "stagnation_order": res.stagnation_order,
           "singular_values": [float(x) for x in res.singular_values],
           "points": [p.to_dict() for p in res.sample_points], "notices": list(res.notices)}
    lines = [f"block dimension {frame.dimension}, eigenvalue {frame.eigenvalue:.10g}",
             f"ranks by derivative order: {list(res.ranks_by_order)}",
             f"rank = {res.rank}"]
    csv = "order,rank\n" + "\n".join(f"{k},{r}" for k, r in enumerate(res.ranks_by_order))
    return _report("curvature", text, args, out, list(res.notices)), lines, csv


def _holonomy_one(frame, loop, method, T):
    if method == "ordered-exp":
        return holonomy_ordered_exp(frame, loop)
    if method == "projector":
        return holonomy_projector_transport(frame, loop)
    return adiabatic_check(frame, loop, T)


def _hol_dict(r) -> dict:
    return {"method": r.method, "unitary": _cx(r.unitary), "eigenvalues": _cx(r.eigenvalues),
            "phase": r.phase(), "error_estimate": r.error_estimate, "segments": r.segments,
            "unitarity_defect": r.unitarity_defect}


def cmd_holonomy(args):
    spec, text = load_model(args.model)
    base = _point(spec, args)
    loop = parse_loop(_read(args.loop), base)
    start = loop.start
    frame = local_frame(spec, start, _selector(args), cutoff=args.cutoff)
    methods = ["ordered-exp", "projector"] if args.method == "both" else [args.method]
    results = [_holonomy_one(frame, loop, m, args.time) for m in methods]
    out = {"dimension": frame.dimension, "start": start.to_dict(),
           "holonomies": [_hol_dict(r) for r in results]}
    lines = []
    for r in results:
        lines.append(f"{r.method}: phase {r.phase():.10f}, eigenvalues "
                     + ", ".join(f"{z.real:.8f}{z.imag:+.8f}i" for z in r.eigenvalues)
                     + f", error estimate {r.error_estimate:.2e}")
    if len(results) == 2:
        dev = float(np.max(np.abs(results[0].unitary - results[1].unitary)))
        out["cross_method_deviation"] = dev
        lines.append(f"cross-method deviation {dev:.2e}")
    if args.loop2:
        loop2 = parse_loop(_read(args.loop2), base)
        r2 = _holonomy_one(frame, loop2, methods[0], args.time)
        defect = commutator_defect(results[0], r2)
        out["second"] = _hol_dict(r2)
        out["commutator_defect"] = defect
        lines.append(f"commutator defect {defect:.3e}")
    names = set(spec.parameter_names)
    if {"theta", "phi"} <= names and frame.dimension == 1:
        try:
            out["area_phase"] = geometric_phase_area(loop)
            lines.append(f"area phase {out['area_phase']:.10f}")
        except ModelInputError as exc:
            out["area_phase"] = None
            lines.append(f"area phase unavailable: {exc}")
    flags = [n for r in results for n in r.notes]
    return _report("holonomy", text, args, out, flags), lines, None


def cmd_pnt(args):
    spec, text = load_model(args.model)
    cfg = ScanConfig(N_max=args.N, k_max=args.order, samples=args.samples, seed=args.seed,
                     cluster_tol=args.cluster_tol, rank_tol=args.rank_tol, cutoff=args.cutoff)
    rep = pnt_scan(spec, cfg)
    lines = [format_table(rep.rows), f"D(N) for N = 0..{cfg.N_max}: {rep.D}",
             f"N_t = {rep.N_t}", rep.caveat]
    flags = [f"l = {r.label}: {f}" for r in rep.rows for f in r.flags]
    return _report("pnt", text, args, rep.to_dict(), flags), lines, format_csv(rep.rows)


# ---------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser, block: bool = False):
    p.add_argument("--model", required=True, help="builtin name or path to a model document")
    p.add_argument("--point", help="named parameter point (default: first named point or base values)")
    p.add_argument("--param", action="append", metavar="NAME=VALUE", help="override one parameter")
    p.add_argument("--out", help="write the report to this file instead of stdout")
    p.add_argument("--format", choices=("document", "table", "text"), default="document")
    p.add_argument("--strict", action="store_true", help="exit 4 when any reliability flag is raised")
    p.add_argument("--cluster-tol", type=float, default=None, help="eigenvalue clustering tolerance")
    p.add_argument("--cutoff", type=int, default=None, help="Fock cutoff for Gaussian words")
    if block:
        p.add_argument("--layers", type=int, nargs="+", help="particle numbers of the block")
        p.add_argument("--eigenvalue", type=float, help="eigenvalue of the block")
        p.add_argument("--label", type=int, help="ascending label of the block instead of an eigenvalue")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holopnt", description="Holonomy groups and particle-number thresholds")
    ap.add_argument("--version", action="version", version=f"holopnt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and check a model document")
    _common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("spectrum", help="eigenvalues and degeneracies per Fock layer")
    _common(p)
    p.add_argument("--N", type=int, default=2, help="largest particle number (default 2)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("curvature", help="rank of curvature and covariant derivatives")
    _common(p, block=True)
    p.add_argument("--order", type=int, default=3, help="highest covariant derivative order (default 3)")
    p.add_argument("--samples", type=int, default=0, help="extra random sample points (default 0)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"sample seed (default {DEFAULT_SEED})")
    p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL,
                   help=f"relative singular-value threshold (default {DEFAULT_RANK_TOL:g})")
    p.add_argument("--step", type=float, default=DEFAULT_STEP,
                   help=f"finite-difference step for oracle checks (default {DEFAULT_STEP:g})")
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("holonomy", help="holonomy of one or two closed loops")
    _common(p, block=True)
    p.add_argument("--loop", required=True, help="loop document")
    p.add_argument("--loop2", help="second loop document for the commutator defect")
    p.add_argument("--method", choices=("ordered-exp", "projector", "adiabatic", "both"),
                   default="ordered-exp")
    p.add_argument("--time", type=float, default=1000.0, help="total time for --method adiabatic")
    p.set_defaults(func=cmd_holonomy)

    p = sub.add_parser("pnt", help="particle-number threshold scan")
    _common(p)
    p.add_argument("--N", type=int, default=4, help="largest particle number scanned (default 4)")
    p.add_argument("--order", type=int, default=3, help="k_max (default 3)")
    p.add_argument("--samples", type=int, default=3, help="random sample points besides the base point (default 3)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"sample seed (default {DEFAULT_SEED})")
    p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL,
                   help=f"relative singular-value threshold (default {DEFAULT_RANK_TOL:g})")
    p.add_argument("--step", type=float, default=DEFAULT_STEP,
                   help=f"finite-difference step for oracle checks (default {DEFAULT_STEP:g})")
    p.set_defaults(func=cmd_pnt)
    return ap


def _emit(args, report, lines, csv):
    if args.format == "document":
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    elif args.format == "table":
        text = (csv if csv is not None else "\n".join(lines)) + "\n"
    else:
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ReliabilityWarning)
            report, lines, csv = args.func(args)
        extra = [str(w.message) for w in caught if issubclass(w.category, ReliabilityWarning)]
        report["warnings"] = list(report["warnings"]) + extra
        _emit(args, report, lines, csv)
        if args.strict and report["warnings"]:
            for w in report["warnings"]:
                print(f"holopnt: reliability: {w}", file=sys.stderr)
            return EXIT_STRICT
        return EXIT_OK
    except (ModelInputError, ConfigurationError) as exc:
        print(f"holopnt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalFailure as exc:
        print(f"holopnt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HolopntError as exc:
        print(f"holopnt: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
