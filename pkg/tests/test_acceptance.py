"""Acceptance criteria, one recorded PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary and written to ``acceptance_report.txt``.
"""
import json
import time

import numpy as np
import pytest

from conftest import record_acceptance
from oracles import in_erosion, random_polygon
from setattract import scenario_path
from setattract.cli import load_scenario, parse_scenario, run
from setattract.control import SwitchingLaw, batch_simulate
from setattract.geom import convex_hull, erode, hrep, linear_preimage, vrep
from setattract.gridcert import (ThresholdRegion, certify_rccs_grid, corner_sufficiency,
                                 grow_domain_grid, make_grid)
from setattract.reach import LFunction, algorithm1, covers, kappa_points

TOL = 1e-7


# -- 1 --------------------------------------------------------------------------


def test_c1_example1_structural_counts(ex1, ex1_run):
    cert6, lad6, t6 = ex1_run
    t = time.perf_counter()
    cert9, lad9 = algorithm1(ex1.system, ex1.omega0, 9, ex1.eps)
    t9 = time.perf_counter() - t
    counts6 = [lad6.cumulative_computed(k) for k in range(1, 7)]
    counts9 = [lad9.cumulative_computed(k) for k in range(1, 10)]
    ok = (counts9 == [2 * (2**k - 1) for k in range(1, 10)] and counts6 == counts9[:6]
          and cert6.domain_count == 126 and cert9.domain_count == 1022
          and cert6.kind == cert9.kind == "Unsuccessful" and t6 < 60 and t9 < 60)
    record_acceptance("1", ok, f"cumulative counts {counts9}; k_stop=6 -> {cert6.domain_count} ({cert6.kind}, "
                      f"{t6:.1f}s), k_stop=9 -> {cert9.domain_count} ({cert9.kind}, {t9:.1f}s)")
    assert ok


# -- 2 --------------------------------------------------------------------------


def test_c2_example1_rcis_detection(ex1, ex1_run):
    cert, _, _ = ex1_run
    # 16-gon seed for the tolerance report
    raw = json.loads(scenario_path("example1").read_text())
    raw["omega0"]["ball"]["facets"] = 16
    sc16 = parse_scenario(raw)
    cert16, _ = algorithm1(sc16.system, sc16.omega0, 6, sc16.eps)
    exact = cert.rcis_k == 3 and cert.rcis_count == 14
    ok = exact and abs(cert16.rcis_k - 3) <= 1
    record_acceptance("2", ok, f"32-gon seed: first cover at k={cert.rcis_k} with {cert.rcis_count} polytopes "
                      f"(tolerance not exercised); 16-gon seed: k={cert16.rcis_k} with {cert16.rcis_count} "
                      f"polytopes (tolerance {'exercised' if cert16.rcis_k != 3 else 'not exercised'})")
    assert ok


# -- 3 --------------------------------------------------------------------------


def test_c3_example2_rccs(ex2_run):
    cert, ladder, secs = ex2_run
    nested = covers(ladder.levels[1], ladder.levels[2], 1e-6)
    ok = cert.kind == "RCCS" and cert.k_found == 1 and nested and cert.domain_count == 5460 and secs < 300
    record_acceptance("3", ok, f"{cert.kind} at k={cert.k_found} (margin {cert.margin:g}); "
                      f"C(O0) in int C^2(O0): {nested}; D~ has {cert.domain_count} polytopes; {secs:.0f}s")
    assert ok


# -- 4 --------------------------------------------------------------------------


def _closed_loop(ex1, ladder, x0, rcis_k):
    law = SwitchingLaw.from_ladder(ladder, ex1.system)
    target = ladder.cumulative(rcis_k)
    lf = LFunction(ladder)
    trajs, summ = batch_simulate(law, x0, 50, 100, base_seed=0, target=target, lfun=lf)
    return trajs, summ


@pytest.mark.xfail(strict=True, reason="x0=(-3,-1.2) lies outside the computed domain; see notes/decisions.md")
def test_c4_closed_loop_from_stated_x0(ex1, ex1_run):
    cert, ladder, _ = ex1_run
    x0 = np.array([-3.0, -1.2])
    trajs, summ = _closed_loop(ex1, ladder, x0, cert.rcis_k)
    ok = summ.converged == 100 and summ.max_L_increase <= 1e-7
    kx = kappa_points(ladder, x0[None, :])[0]
    detail = f"{summ.converged}/100 entered and remained in the k={cert.rcis_k} invariant union"
    if summ.errors:
        detail += f"; {len(summ.errors)} runs rejected: x0 is outside every level (kappa={kx})"
    record_acceptance("4", ok, detail)
    assert ok


def test_c4_supplementary_in_domain_start(ex1, ex1_run):
    """Same protocol from a deepest-level state of the computed domain."""
    cert, ladder, _ = ex1_run
    x0 = np.array([1.850, -0.257])
    assert kappa_points(ladder, x0[None, :])[0] == ladder.K
    trajs, summ = _closed_loop(ex1, ladder, x0, cert.rcis_k)
    ok = summ.converged == 100 and summ.max_L_increase <= 1e-7 and summ.violations == 0
    record_acceptance("4s", ok, f"supplementary: from x0={x0.tolist()} (kappa={ladder.K}) {summ.converged}/100 "
                      f"entered and remained; max L increase {summ.max_L_increase:.2g}")
    assert ok


# -- 5 --------------------------------------------------------------------------


def _kappa_violations(sc, ladder, n=1000, seed=0):
    rng = np.random.default_rng(seed)
    law = SwitchingLaw.from_ladder(ladder, sc.system)
    lo, hi = sc.system.X.lower, sc.system.X.upper
    states = []
    while len(states) < n:
        X = rng.uniform(lo, hi, size=(4000, 2))
        k = kappa_points(ladder, X)
        states.extend(X[k >= 1][: n - len(states)])
    states = np.array(states)
    k = kappa_points(ladder, states)
    bad = 0
    for x, kx in zip(states, k):
        sigma = law.select_mode(x)
        succ = sc.system.successors(x, sigma, sc.system.noise_vertices())
        ks = kappa_points(ladder, succ)
        bad += int(np.any((ks < 0) | (ks > kx - 1)))
    return len(states), bad


def test_c5_kappa_decrease(ex1, ex1_run, ex2, ex2_run):
    n1, bad1 = _kappa_violations(ex1, ex1_run[1])
    n2, bad2 = _kappa_violations(ex2, ex2_run[1])
    ok = bad1 == 0 and bad2 == 0 and n1 == n2 == 1000
    record_acceptance("5", ok, f"example 1: {bad1} violations in {n1} states; example 2: {bad2} in {n2}")
    assert ok


# -- 6 --------------------------------------------------------------------------


def _margin(P, X):
    return np.min(P.b[None, :] - X @ P.A.T, axis=1)


def test_c6_geometry_oracles():
    rng = np.random.default_rng(2024)
    fails = {"erosion": 0, "preimage": 0, "roundtrip": 0}
    for _ in range(200):
        P = hrep(convex_hull(random_polygon(rng, scale=2.0)))
        W = hrep(convex_hull(random_polygon(rng, scale=0.3)))
        E = erode(P, W)
        X = rng.uniform(-4, 4, size=(200, 2))
        if E.is_empty():
            # maximality: no sample passes the definition
            fails["erosion"] += int(any(in_erosion(x, P.A, P.b, W.vertices, TOL) for x in X))
        else:
            got = E.contains(X, TOL)
            sound = all(in_erosion(x, P.A, P.b, W.vertices, TOL) for x in X[got])
            far_out = _margin(E, X) < -TOL
            maximal = not any(in_erosion(x, P.A, P.b, W.vertices, -TOL) for x in X[far_out])
            # every facet of E is tight: sliding out by 1e-5 breaks the definition
            tight = all(not in_erosion(v + 1e-5 * a, P.A, P.b, W.vertices, 0.0)
                        for a, bb in zip(E.A, E.b) for v in E.vertices if abs(a @ v - bb) < 1e-9)
            fails["erosion"] += int(not (sound and maximal and tight))
    for _ in range(200):
        P = hrep(convex_hull(random_polygon(rng)))
        M = rng.normal(size=(2, 2))
        while abs(np.linalg.det(M)) < 0.1:
            M = rng.normal(size=(2, 2))
        Q = linear_preimage(M, P)
        X = rng.uniform(-4, 4, size=(200, 2))
        Y = X @ M.T
        mP = _margin(P, Y)
        clear = np.abs(mP) > TOL
        fails["preimage"] += int(not np.array_equal(Q.contains(X[clear], TOL), mP[clear] >= 0))
    for _ in range(200):
        V = convex_hull(random_polygon(rng))
        H = hrep(V)
        V2 = vrep(H)
        H2 = hrep(V2)
        same_v = len(V2.vertices) == len(V.vertices) and all(
            np.min(np.linalg.norm(V2.vertices - v, axis=1)) < TOL for v in V.vertices)
        same_h = H.A.shape == H2.A.shape and np.allclose(H.A, H2.A, atol=TOL) and np.allclose(H.b, H2.b, atol=TOL)
        fails["roundtrip"] += int(not (same_v and same_h))
    ok = sum(fails.values()) == 0
    record_acceptance("6", ok, "failures in 200 instances each: " + ", ".join(f"{k} {v}" for k, v in fails.items()))
    assert ok


# -- 7 --------------------------------------------------------------------------


def test_c7_amr_certification_and_growth():
    sweep = {name: load_scenario(scenario_path(name)) for name in ("amr_fig3_a", "amr_fig3_b", "amr_fig3_c")}
    sc = sweep["amr_fig3_b"]
    assert sc.grid.n_points == len(make_grid(sc.grid))
    t = time.perf_counter()
    verdicts = {s.omega0: certify_rccs_grid(s.system, s.omega0, s.grid, s.eps)[0] for s in sweep.values()}
    t_cert = time.perf_counter() - t
    t = time.perf_counter()
    ladder = grow_domain_grid(sc.system, sc.omega0, sc.grid, sc.k_max, sc.eps)
    t_grow = time.perf_counter() - t
    iters = len(ladder.hulls)
    growing = all(b > a for a, b in zip(ladder.inside_counts, ladder.inside_counts[1:]))
    viol = ladder.nesting_violations()
    long_enough = iters >= 100 or ladder.converged_at is not None
    ok = (sc.grid.n_points == 150 * 151 // 2 == 11_325 and any(verdicts.values()) and growing and viol == 0
          and long_enough and t_cert < 300 and t_grow < 1800)
    stop = f"fixed point after {ladder.converged_at} iterations" if ladder.converged_at else f"{iters} iterations"
    record_acceptance("7", ok, f"grid {sc.grid.n_points} points; verdicts "
                      f"{ {int(k): v for k, v in verdicts.items()} } ({t_cert:.1f}s); growth from b0={sc.omega0:g}: "
                      f"{stop}, Inside {ladder.inside_counts[0]} -> {ladder.inside_counts[-1]}, "
                      f"{viol} nesting violations ({t_grow:.1f}s)")
    assert ok


# -- 8 --------------------------------------------------------------------------


def test_c8_corner_sufficiency():
    sc = load_scenario(scenario_path("amr_fig4"))
    ok_cert, cls, _ = certify_rccs_grid(sc.system, sc.omega0, sc.grid, sc.eps)
    rng = np.random.default_rng(0)
    idx = np.where(cls.inside)[0]
    pick = np.sort(rng.choice(idx, size=1000, replace=False))
    frac, viol = corner_sufficiency(sc.system, ThresholdRegion(sc.omega0), cls.points[pick], cls.modes[pick],
                                    1000, seed=0)
    for v in viol[:20]:
        print("corner violation (b, s, mode, w_b, w_s):", v)
    ok = frac >= 0.999 and len(pick) == 1000
    record_acceptance("8", ok, f"{len(pick)} Inside points x 1000 noises (b0={sc.omega0:g}, {len(idx)} Inside): "
                      f"{100 * frac:.3f}% of successors in target, {len(viol)} violations logged")
    assert ok


# -- 9 --------------------------------------------------------------------------

SHIPPED = ["example1", "example1_k9", "example2", "amr_fig3_a", "amr_fig3_b", "amr_fig3_c", "amr_fig4",
           "amr_fig4_b10k"]


def test_c9_determinism(tmp_path):
    mismatched = []
    n_csv = 0
    for name in SHIPPED:
        reports = []
        for tag in ("a", "b"):
            rep, _ = run(scenario_path(name), tmp_path / tag / name, seed=7)
            reports.append(rep)
        ra, rb = reports
        key = "certificate" if "certificate" in ra else "certified"
        if ra[key] != rb[key] or ra["config_hash"] != rb["config_hash"] or ra["manifest"] != rb["manifest"]:
            mismatched.append(f"{name}: report")
        for f in ra["manifest"]:
            if f.endswith(".csv") or f.endswith(".json") and f != "report.json":
                n_csv += f.endswith(".csv")
                a = (tmp_path / "a" / name / f).read_bytes()
                b = (tmp_path / "b" / name / f).read_bytes()
                if a != b:
                    mismatched.append(f"{name}: {f}")
    ok = not mismatched
    record_acceptance("9", ok, f"{len(SHIPPED)} scenarios run twice with seed 7: {n_csv} CSV files compared, "
                      f"{len(mismatched)} differences" + (f" ({mismatched[:3]})" if mismatched else ""))
    assert ok
