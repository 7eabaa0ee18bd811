import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from setattract.gridcert import (Classification, EmptyRegion, GridSpec, HullRegion, NotCertified, ThresholdRegion,
                                 TooFewInsidePoints, certify_rccs_grid, classify_point, classify_points,
                                 corner_sufficiency, corner_uncertainties, grow_domain_grid, hull_contains,
                                 make_grid, seed_vertices, write_certificate, write_hull_json)
from setattract.sysmodel import AMRParams, AMRSwitchedSystem

PARAMS = AMRParams(alpha=1.0, N=1e7, beta=3.0, K=57500.0, D_M=2.0, mu=0.05)
SYS = AMRSwitchedSystem(PARAMS, 0.1, 5.0, 5.0)
SPEC = GridSpec(150_000.0, 150)


def test_grid_count_formula():
    assert SPEC.n_points == 11_325
    assert len(make_grid(SPEC)) == 11_325


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.floats(1.0, 1e6))
def test_grid_properties(m, bmax):
    spec = GridSpec(bmax, m)
    G = make_grid(spec)
    assert len(G) == m * (m + 1) // 2
    assert np.all(G[:, 1] <= G[:, 0] + 1e-9) and np.all(G >= 0)
    assert G[:, 0].max() == pytest.approx(bmax)
    # row-major in b then s
    assert np.all(np.diff(G[:, 0]) >= 0)


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(1.0, 1)
    with pytest.raises(ValueError):
        GridSpec(-1.0, 10)


def test_corner_uncertainties():
    assert corner_uncertainties(5, 5).tolist() == [[5, 0], [0, 5], [5, 5]]
    with pytest.raises(ValueError):
        corner_uncertainties(-1, 0)


def test_regions():
    X = np.array([[10.0, 0.0], [1000.0, 0.0], [1000.0 + 5e-7, 0.0]])
    assert ThresholdRegion(1000).contains_points(X).tolist() == [True, True, True]  # tol scales with b0
    assert ThresholdRegion(1000).contains_points([[1001.0, 0.0]]).tolist() == [False]
    assert not EmptyRegion().contains_points(X).any()


def test_classification_definition_oracle(rng):
    """Inside with mode m iff all three corner successors under m satisfy b <= b0, and m is minimal."""
    b0 = 10_000.0
    X = make_grid(GridSpec(20_000.0, 40))
    modes = classify_points(SYS, X, ThresholdRegion(b0))
    for x, m in zip(X, modes):
        ok = [bool(np.all(SYS.successors(x, s, SYS.noise_vertices())[:, 0] <= b0 * (1 + 1e-9))) for s in (1, 2)]
        expect = 1 if ok[0] else (2 if ok[1] else 0)
        assert m == expect


def test_classify_point_labels():
    assert classify_point(SYS, [0.0, 0.0], ThresholdRegion(1000)) == ("Inside", 1)
    assert classify_point(SYS, [1.4e5, 1.4e5], ThresholdRegion(1000)) == ("Outside", None)


def test_monotone_in_b0():
    X = make_grid(SPEC)
    small = classify_points(SYS, X, ThresholdRegion(10_000)) > 0
    large = classify_points(SYS, X, ThresholdRegion(100_000)) > 0
    assert np.all(large[small])


def test_fig3_verdicts():
    verdicts = {b0: certify_rccs_grid(SYS, b0, SPEC)[0] for b0 in (1000.0, 10_000.0, 120_000.0)}
    assert verdicts == {1000.0: True, 10_000.0: True, 120_000.0: False}


def test_hull_soundness():
    ok, cls, hull = certify_rccs_grid(SYS, 10_000.0, SPEC)
    assert np.all(hull_contains(hull, cls.points[cls.inside]))
    inside = {tuple(p) for p in cls.points[cls.inside]}
    assert all(tuple(v) in inside for v in hull.vertices)
    assert np.all(hull_contains(hull, seed_vertices(10_000.0, 1e-6)))


def test_certify_argument_checks():
    with pytest.raises(ValueError):
        certify_rccs_grid(SYS, 2e5, SPEC)
    with pytest.raises(ValueError):
        certify_rccs_grid(SYS, 0.0, SPEC)
    with pytest.raises(TooFewInsidePoints):
        certify_rccs_grid(SYS, 1.0, GridSpec(150_000.0, 20))


def test_grow_nested_and_fixed_point():
    seen = []
    ladder = grow_domain_grid(SYS, 10_000.0, SPEC, 1500, callback=lambda k, c, h: seen.append(k))
    assert seen == list(range(1, len(ladder.hulls) + 1))
    assert ladder.nesting_violations() == 0
    assert all(b > a for a, b in zip(ladder.inside_counts, ladder.inside_counts[1:]))
    assert ladder.converged_at == len(ladder.hulls)
    # fixed point: one more classification adds nothing
    again = classify_points(SYS, make_grid(SPEC), HullRegion(ladder.hulls[-1], 10_000.0)) > 0
    assert again.sum() == ladder.inside_counts[-1]


def test_grow_kmax_respected():
    ladder = grow_domain_grid(SYS, 10_000.0, SPEC, 5)
    assert len(ladder.hulls) == 5 and ladder.converged_at is None


def test_grow_requires_certificate():
    with pytest.raises(NotCertified):
        grow_domain_grid(SYS, 120_000.0, SPEC, 3)
    with pytest.raises(ValueError):
        grow_domain_grid(SYS, 1000.0, SPEC, 0)


def test_corner_sufficiency_reports():
    ok, cls, _ = certify_rccs_grid(SYS, 10_000.0, SPEC)
    idx = np.where(cls.inside)[0]
    frac, viol = corner_sufficiency(SYS, ThresholdRegion(10_000.0), cls.points[idx], cls.modes[idx], 200)
    assert 0.0 <= frac <= 1.0
    assert len(viol) == round((1 - frac) * len(idx) * 200)


def test_exports(tmp_path):
    ok, cls, hull = certify_rccs_grid(SYS, 1000.0, SPEC)
    p = cls.to_csv(tmp_path / "c.csv")
    rows = list(csv.DictReader(p.open()))
    assert len(rows) == SPEC.n_points and set(rows[0]) == {"b", "s", "label", "mode"}
    assert sum(r["label"] == "Inside" for r in rows) == cls.n_inside
    h = json.loads(write_hull_json(hull, tmp_path / "h.json").read_text())
    assert np.allclose(h["vertices"], hull.vertices)
    c = json.loads(write_certificate(tmp_path / "cert.json", 1000.0, 1e-6, ok, SPEC, n_inside=3).read_text())
    assert c["verdict"] == "RCCS" and c["n_points"] == 11_325


def test_classification_labels():
    c = Classification(np.zeros((3, 2)), np.array([0, 1, 2]))
    assert c.labels() == ["Outside", "Inside", "Inside"] and c.n_inside == 2
