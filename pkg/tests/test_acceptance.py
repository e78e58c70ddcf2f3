"""Acceptance criteria 1 to 9.

Each test prints one ``PASS``/``FAIL`` line with its tolerance and asserts the
target.  Targets that the implementation does not reproduce are left
failing; the README lists them with the computed values.
"""

import itertools
import time

import numpy as np

from holopnt import (BlockSelector, EigenspaceBlock, ParameterLoop, adiabatic_check, builtin,
                     geometric_phase_area, geometric_phase_line, holonomy_ordered_exp, local_frame)
from holopnt.geometry import connection_at, holonomy_dimension, jet_tensors
from holopnt.holonomy import loop_commutator_defect
from holopnt.models import compose
from holopnt.pnt import ScanConfig, composite_pnt, pnt_scan, table_report
from holopnt.spectral import LocalFrameField, layers_basis

from test_geometry import fcg4_reference, haar_unitary
from test_holonomy import random_simple_loop

RESULTS: list[str] = []


def report(criterion, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {name} ({detail})"
    RESULTS.append(line)
    print(line)
    return ok


def dark(spec, point, N, **kw):
    return local_frame(spec, point, BlockSelector((N,), eigenvalue=0.0), **kw)


# -- 1 --------------------------------------------------------------------------

def test_criterion_1_lambda(lam):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    ref = np.zeros((3, 1), complex)
    ref[0, 0] = 1
    f = local_frame(lam, lam.base_point(), BlockSelector((1,), eigenvalue=0.0), reference=ref)
    err_A = max(abs(connection_at(f, p)["phi"][0, 0] - 1j * np.cos(p["theta"]) ** 2)
                for p in (lam.random_point(rng) for _ in range(20)))

    err_eig = 0.0
    for _ in range(5):
        a = rng.uniform(0.2, 0.6)
        c = rng.uniform(0.0, 3.0)
        loop = ParameterLoop.rectangle(lam.base_point(), "theta", "phi", (a, a + rng.uniform(0.2, 0.6)),
                                       (c, c + rng.uniform(0.3, 2.0)))
        g = geometric_phase_area(loop)
        got = np.sort(np.angle(holonomy_ordered_exp(dark(lam, loop.start, 2), loop).eigenvalues))
        want = np.sort(np.angle(np.exp(1j * np.array([2 * g, -2 * g]))))
        err_eig = max(err_eig, float(np.abs(got - want).max()))

    b = lam.base_point()
    l1 = ParameterLoop.rectangle(b, "theta", "phi", (0.6, 1.0), (0.4, 1.4))
    l2 = ParameterLoop.closed([b, b.replace(theta=0.3, phi=0.9), b.replace(theta=0.9, phi=2.0)])
    defect = max(loop_commutator_defect(dark(lam, b, N), l1, l2) for N in (2, 3, 4))
    dt = time.perf_counter() - t0

    ok = [report(1, "A_phi = i cos^2 theta at 20 points", err_A < 1e-6, f"max err {err_A:.1e}, tol 1e-6"),
          report(1, "two-photon eigenvalues {e^{2i phi}, e^{-2i phi}} on 5 rectangles", err_eig < 1e-4,
                 f"max err {err_eig:.2e}, tol 1e-4"),
          report(1, "commutator defect N = 2, 3, 4", defect < 1e-5, f"max {defect:.1e}, tol 1e-5"),
          report(1, "runtime", dt < 60, f"{dt:.1f} s, limit 60 s")]
    assert all(ok)


# -- 2 --------------------------------------------------------------------------

def test_criterion_2_three_phase_methods(lam):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        loop = random_simple_loop(rng, lam.base_point())
        area, line = geometric_phase_area(loop), geometric_phase_line(loop)
        ordered = holonomy_ordered_exp(dark(lam, loop.start, 1), loop).phase()
        diffs = [area - line, np.angle(np.exp(1j * (ordered - area))), np.angle(np.exp(1j * (ordered - line)))]
        worst = max(worst, max(abs(d) for d in diffs))
    dt = time.perf_counter() - t0
    ok = [report(2, "area vs line vs ordered-exp on 20 loops", worst < 1e-5, f"max {worst:.1e}, tol 1e-5"),
          report(2, "runtime", dt < 60, f"{dt:.1f} s, limit 60 s")]
    assert all(ok)


# -- 3 --------------------------------------------------------------------------

def test_criterion_3_fcg4(fcg4):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    f = dark(fcg4, fcg4.base_point(), 1, gauge="word")
    names = fcg4.parameter_names
    worst = 0.0
    for _ in range(20):
        p = fcg4.random_point(rng)
        jt = jet_tensors(f, 1, point=p)
        A, F = jt.connection(), jt.curvature_set()
        refA, refF = fcg4_reference(p)
        worst = max(worst, max(abs(A[k][0, 0] - v) for k, v in refA.items()))
        for m, n in itertools.permutations(names, 2):
            worst = max(worst, abs(F[(m, n)][0, 0] - refF.get((m, n), -refF.get((n, m), 0))))
    k0 = fcg4.named_point("kappa0")
    rank = holonomy_dimension(dark(fcg4, k0, 2), [k0], k_max=1).rank
    dt = time.perf_counter() - t0
    ok = [report(3, "single-particle A and F closed forms at 20 points", worst < 1e-6,
                 f"max err {worst:.1e}, tol 1e-6"),
          report(3, "two-particle rank at kappa0, order 1", rank == 5, f"got {rank}, want 5"),
          report(3, "runtime", dt < 120, f"{dt:.1f} s, limit 120 s")]
    assert all(ok)


# -- 4 --------------------------------------------------------------------------

def _appendix_references(p):
    r4, t4 = p["r4"], p["theta4"]
    z = r4 * np.exp(1j * t4)
    s1, a = np.cos(abs(z)), abs(np.sin(abs(z)))
    E, c2 = np.exp(1j * t4), np.cos(2 * r4)
    return {
        "A_r1": np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]),
        "A_r4": np.array([[0, 0, 0, 0], [0, 0, 0, -2 / E], [0, 0, 0, 0], [0, 2 * E, 0, 0]]),
        "A_theta4": np.array([[4j * r4 * s1 * a, 0, 0, 0],
                              [0, 2j * r4 * s1 * a, 0, 2j * np.conj(z) * c2],
                              [0, 0, -4j * r4 * s1 * a, 0],
                              [0, 2j * z * c2, 0, -2j * r4 * s1 * a]]),
        "F_r1r2": np.array([[0, -2, 0, 0], [2, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]),
        "F_r2r3": np.array([[0, 0, 0, 0], [0, 0, 0, 4], [0, 0, 0, 0], [0, -4, 0, 0]]),
        "F_r4theta4": np.array([[4j * (r4 * c2 + s1 * a), 0, 0, 0],
                                [0, -2j * (3 * r4 * c2 - s1 * a), 0, -4j * a * a / E],
                                [0, 0, -2j * (r4 * c2 + s1 * a), 0],
                                [0, -4j * a * a * E, 0, 2j * (3 * r4 * c2 - s1 * a)]]),
        "D_r1 F_r1theta1": np.diag([2j, 6j, 4j, 4j]),
        "D_r3 F_r2r4": np.diag([4j, 12j, 20j, 20j]) * np.sin(t4),
    }


def test_criterion_4_kerr_matrices(kerr2):
    p = kerr2.named_point("zeta0")
    order = [(0, 2), (1, 2), (2, 0), (2, 1)]
    basis = layers_basis(kerr2.system, [2, 3])
    frame = np.zeros((basis.dim, 4), complex)
    for c, s in enumerate(order):
        frame[basis.index[s], c] = 1
    f = LocalFrameField(kerr2, p, EigenspaceBlock(2.0, None, frame, basis, 3), gauge="word", cutoff=20)
    jt = jet_tensors(f, 1, point=p)
    A, cs = jt.connection(), jt.curvature_set()
    got = {"A_r1": A["r1"], "A_r4": A["r4"], "A_theta4": A["theta4"],
           "F_r1r2": cs[("r1", "r2")], "F_r2r3": cs[("r2", "r3")], "F_r4theta4": cs[("r4", "theta4")],
           "D_r1 F_r1theta1": cs.derivatives[(("r1",), ("r1", "theta1"))],
           "D_r3 F_r2r4": cs.derivatives[(("r3",), ("r2", "r4"))]}
    ok = []
    for name, ref in _appendix_references(p).items():
        err = float(np.abs(got[name] - ref).max())
        ok.append(report(4, name, err < 1e-5, f"max err {err:.1e}, tol 1e-5"))
    tl = got["D_r1 F_r1theta1"] - np.trace(got["D_r1 F_r1theta1"]) / 4 * np.eye(4)
    rl = _appendix_references(p)["D_r1 F_r1theta1"]
    rl = rl - np.trace(rl) / 4 * np.eye(4)
    line = f"[INFO] criterion 4: traceless part of D_r1 F_r1theta1 (max err {np.abs(tl - rl).max():.1e})"
    RESULTS.append(line)
    print(line)
    assert all(ok)


# -- 5 --------------------------------------------------------------------------

def test_criterion_5_kerr_table(kerr2):
    rows = {(round(r.eigenvalue, 6), r.degeneracy): r
            for r in table_report(kerr2, ScanConfig(N_max=6, rank_tol=1e-6, k_max=3))}
    want = {(0.0, 4): (14, 16), (2.0, 4): (14, 16), (12.0, 5): (9, 9)}
    ok = []
    for key, (F, H) in want.items():
        r = rows.get(key)
        got = (r.dim_F, r.dim_hol) if r else None
        ok.append(report(5, f"eps = {key[0]:g}, d = {key[1]}: (dim F, dim Hol)", got == (F, H),
                         f"got {got}, want {(F, H)}"))
    assert all(ok)


# -- 6 and 7 ----------------------------------------------------------------------

def test_criterion_6_pnt():
    t0 = time.perf_counter()
    want = {"lambda": (1, ScanConfig(N_max=4)), "fcg3": (1, ScanConfig(N_max=3)),
            "kerr2": (2, ScanConfig(N_max=6)), "jaynes_cummings": (0, ScanConfig(N_max=4))}
    ok = []
    for name, (target, cfg) in want.items():
        rep = pnt_scan(builtin(name), cfg)
        ok.append(report(6, f"N_t({name})", rep.N_t == target, f"got {rep.N_t} with D = {rep.D}, want {target}"))
    dt = time.perf_counter() - t0
    ok.append(report(6, "runtime", dt < 600, f"{dt:.1f} s, limit 600 s"))
    assert all(ok)


def test_criterion_7_composition(lam):
    rep = composite_pnt(compose([lam, lam], ["a_", "b_"]), ScanConfig(N_max=3))
    assert report(7, "N_t(compose(lambda, lambda))", rep.N_t == 2, f"got {rep.N_t} with D = {rep.D}, want 2")


# -- 8 --------------------------------------------------------------------------

def test_criterion_8_properties(lam, tripod):
    ok = []
    rng = np.random.default_rng(8)
    base = tripod.base_point()
    f0 = dark(tripod, base, 1)
    pts = [base, tripod.random_point(rng)]
    ref = holonomy_dimension(f0, pts, k_max=2).ranks_by_order
    b = f0.block
    same = 0
    for _ in range(10):
        W = haar_unitary(rng, 2)
        f = local_frame(tripod, base, EigenspaceBlock(b.eigenvalue, b.particle_number, b.frame @ W,
                                                       b.basis, b.particles_needed))
        same += holonomy_dimension(f, pts, k_max=2).ranks_by_order == ref
    ok.append(report(8, "gauge covariance of ranks over 10 rotations", same == 10, f"{same}/10 equal"))

    l1 = ParameterLoop.rectangle(base, "theta", "phi1", (0.7, 1.2), (0.3, 1.8))
    l2 = ParameterLoop.rectangle(base, "chi", "phi2", (0.5, 1.2), (1.1, 2.6))
    U1 = holonomy_ordered_exp(f0, l1).unitary
    U2 = holonomy_ordered_exp(f0, l2).unitary
    unit = np.abs(U1.conj().T @ U1 - np.eye(2)).max()
    rev = np.abs(holonomy_ordered_exp(f0, l1.reversed()).unitary - U1.conj().T).max()
    cat = np.abs(holonomy_ordered_exp(f0, l1.then(l2)).unitary - U2 @ U1).max()
    ok.append(report(8, "unitarity, reversal, concatenation", max(unit, rev, cat) < 1e-5,
                     f"{unit:.1e}, {rev:.1e}, {cat:.1e}, tol 1e-5"))

    lb = lam.base_point()
    fl = local_frame(lam, lb, BlockSelector((1, 2, 3), eigenvalue=0.0))
    U = holonomy_ordered_exp(fl, ParameterLoop.rectangle(lb, "theta", "phi", (0.6, 1.1), (0.4, 1.9))).unitary
    Psi = fl.evaluate(lb)
    Nf = (Psi.conj().T @ np.diag(fl.basis.particle_numbers()).astype(complex) @ Psi).T
    block = np.abs(U @ Nf - Nf @ U).max()
    ok.append(report(8, "block-diagonality across layers", block < 1e-8, f"{block:.1e}, tol 1e-8"))

    names = tripod.parameter_names
    orders = []
    while len(orders) < 10:
        p = tripod.random_point(rng)
        d = names[rng.integers(len(names))]
        i, j = rng.integers(2, size=2)
        D = [connection_at(f0, p, step=h, directions=[d], richardson=False, tol=1.0)[d][i, j]
             for h in (0.08, 0.04, 0.02)]
        e1, e2 = abs(D[0] - D[1]), abs(D[1] - D[2])
        if e1 > 1e-9:
            orders.append(np.log2(e1 / e2))
    ok.append(report(8, "finite-difference order on 10 entries", min(orders) >= 1.8,
                     f"min {min(orders):.2f}, want >= 1.8"))

    loop = ParameterLoop.rectangle(lb, "theta", "phi", (0.3, 0.9), (0.0, 1.2))
    fd = dark(lam, loop.start, 1)
    exact = holonomy_ordered_exp(fd, loop).unitary
    errs = [np.abs(adiabatic_check(fd, loop, T).unitary - exact).max() for T in (50, 100, 200)]
    ok.append(report(8, "adiabatic error monotone over T, 2T, 4T", errs[0] > errs[1] > errs[2],
                     ", ".join(f"{e:.1e}" for e in errs)))
    assert all(ok)


# -- 9 --------------------------------------------------------------------------

def test_criterion_9_tripod(tripod):
    base = tripod.base_point()
    f = dark(tripod, base, 1)
    l1 = ParameterLoop.rectangle(base, "theta", "phi1", (0.7, 1.2), (0.3, 1.8))
    l2 = ParameterLoop.rectangle(base, "chi", "phi2", (0.5, 1.2), (1.1, 2.6))
    defect = loop_commutator_defect(f, l1, l2)
    rng = np.random.default_rng(9)
    res = holonomy_dimension(f, [base, tripod.random_point(rng)], k_max=2)
    ok = [report(9, "tripod commutator defect", defect > 0.1, f"{defect:.3f}, want > 0.1"),
          report(9, "tripod rank at order <= 2", res.rank == 4, f"got {res.ranks_by_order}, want 4")]
    assert all(ok)

