"""Command-line front end: ``setattract run|validate|plot``.

Exit codes: 0 success, 2 computed but not certified, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import shutil
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import gridcert
from .control import SwitchingLaw, batch_simulate, export_batch, read_trajectory_csv
from .geom import (DEFAULT_MARGIN, Box, HPolytope, NotNestedWarning, PolyUnion, VPolytope, erode,
                   union_covers_with_margin)
from .reach import LFunction, algorithm1, covers, domain_approximation, load_ladder, save_ladder
from .svg import Canvas
from .sysmodel import AMRParams, AMRSwitchedSystem, LinearSwitchedSystem, ModelError

EXIT_OK, EXIT_ERROR, EXIT_UNSUCCESSFUL = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


class MissingArtifact(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# scenario parsing


def _get(d: dict, key: str, path: str, kind=None, default: Any = ...):
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}", "missing")
        return default
    v = d[key]
    if kind is not None and not isinstance(v, kind):
        raise ConfigError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return v


def _number(d: dict, key: str, path: str, default: Any = ..., positive: bool = False) -> float:
    v = _get(d, key, path, (int, float), default)
    if isinstance(v, bool) or not np.isfinite(v):
        raise ConfigError(f"{path}.{key}", "expected a finite number")
    if positive and not v > 0:
        raise ConfigError(f"{path}.{key}", "must be positive")
    return float(v)


def _integer(d: dict, key: str, path: str, default: Any = ..., minimum: int = 0) -> int:
    v = _get(d, key, path, int, default)
    if isinstance(v, bool) or v < minimum:
        raise ConfigError(f"{path}.{key}", f"expected an integer >= {minimum}")
    return int(v)


def _polytope(spec: dict, path: str) -> HPolytope:
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object")
    try:
        if "lower" in spec:
            return Box(spec["lower"], spec["upper"]).to_hpolytope()
        if "A" in spec:
            return HPolytope(spec["A"], spec["b"]).canonical()
        if "vertices" in spec:
            from .geom import hrep
            return hrep(VPolytope(spec["vertices"]))
        if "polygon" in spec:
            p = spec["polygon"]
            return HPolytope.regular_polygon(int(p["facets"]), float(p.get("radius", 1.0)),
                                             inscribed=bool(p.get("inscribed", True)))
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from exc
    raise ConfigError(path, "expected one of lower/upper, A/b, vertices or polygon")


@dataclass
class Scenario:
    name: str
    kind: str
    raw: dict
    system: Any
    omega0: Any = None          # HPolytope (linear) or b0 (amr)
    k_stop: int = 6
    eps: float = DEFAULT_MARGIN
    simulation: Optional[dict] = None
    grid: Optional[gridcert.GridSpec] = None
    k_max: int = 1
    corner_check: Optional[dict] = None
    plot: dict = field(default_factory=dict)
    output: Optional[str] = None

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def parse_scenario(raw: dict) -> Scenario:
    """Validate a scenario dict; every downstream precondition is checked here."""
    if not isinstance(raw, dict):
        raise ConfigError("$", "scenario must be a JSON object")
    kind = _get(raw, "type", "$", str)
    name = _get(raw, "name", "$", str, default="scenario")
    algo = _get(raw, "algorithm", "$", dict, default={})
    eps = _number(algo, "eps", "$.algorithm", default=DEFAULT_MARGIN)
    if eps < 0:
        raise ConfigError("$.algorithm.eps", "must be nonnegative")
    if kind == "linear":
        modes = _get(raw, "modes", "$", list)
        X = _get(raw, "X", "$", dict)
        try:
            Xbox = Box(X["lower"], X["upper"])
        except (KeyError, ValueError) as exc:
            raise ConfigError("$.X", str(exc)) from exc
        W = _polytope(_get(raw, "W", "$", dict), "$.W")
        try:
            system = LinearSwitchedSystem(tuple(np.asarray(m, dtype=float) for m in modes), Xbox, W)
        except (ModelError, ValueError) as exc:
            raise ConfigError("$.modes", str(exc)) from exc
        om = _get(raw, "omega0", "$", dict)
        if "ball" in om:
            ball = om["ball"]
            omega0 = HPolytope.regular_polygon(_integer(ball, "facets", "$.omega0.ball", minimum=3),
                                               _number(ball, "radius", "$.omega0.ball", positive=True))
        else:
            omega0 = _polytope(om, "$.omega0")
        if omega0.is_empty() or not omega0.contains(np.zeros(system.n)):
            raise ConfigError("$.omega0", "must be nonempty and contain the origin")
        if not union_covers_with_margin(omega0, PolyUnion([Xbox.to_hpolytope()]), 0.0):
            raise ConfigError("$.omega0", "must lie inside X")
        if erode(omega0, system.W).is_empty():
            raise ConfigError("$.omega0", "is emptied by erosion with W")
        sim = _get(raw, "simulation", "$", dict, default=None)
        if sim is not None:
            x0 = _get(sim, "x0", "$.simulation", list)
            if len(x0) != system.n:
                raise ConfigError("$.simulation.x0", f"expected {system.n} coordinates")
            _integer(sim, "steps", "$.simulation", minimum=1)
            _integer(sim, "n_runs", "$.simulation", minimum=1)
            _integer(sim, "seed", "$.simulation", default=0)
            if _get(sim, "target", "$.simulation", str, default="omega0") not in ("omega0", "rcis"):
                raise ConfigError("$.simulation.target", "expected 'omega0' or 'rcis'")
        return Scenario(name=name, kind=kind, raw=raw, system=system, omega0=omega0,
                        k_stop=_integer(algo, "k_stop", "$.algorithm", minimum=1), eps=eps,
                        simulation=sim, plot=_get(raw, "plot", "$", dict, default={}),
                        output=_get(raw, "output", "$", str, default=None))
    if kind == "amr":
        p = _get(raw, "params", "$", dict)
        try:
            params = AMRParams(**{k: _number(p, k, "$.params") for k in ("alpha", "N", "beta", "K", "D_M", "mu")})
        except ModelError as exc:
            raise ConfigError("$.params", str(exc)) from exc
        W = _get(raw, "W", "$", dict)
        try:
            system = AMRSwitchedSystem(params, _number(raw, "delta", "$", positive=True),
                                       _number(W, "wb", "$.W"), _number(W, "ws", "$.W"))
        except ModelError as exc:
            raise ConfigError("$.W", str(exc)) from exc
        bmax = _number(raw, "bmax", "$", positive=True)
        if bmax > params.N:
            raise ConfigError("$.bmax", "must not exceed the carrying capacity N")
        g = _get(raw, "grid", "$", dict, default={})
        per_axis = _integer(g, "per_axis", "$.grid", default=150, minimum=2)
        try:
            spec = gridcert.GridSpec(bmax, per_axis)
        except ValueError as exc:
            raise ConfigError("$.grid", str(exc)) from exc
        om = _get(raw, "omega0", "$", dict)
        b0 = _number(om, "b0", "$.omega0", positive=True)
        if not b0 < bmax:
            raise ConfigError("$.omega0.b0", "must be below bmax")
        cc = _get(raw, "corner_check", "$", dict, default=None)
        if cc is not None:
            _integer(cc, "n_points", "$.corner_check", minimum=1)
            _integer(cc, "n_noise", "$.corner_check", minimum=1)
        return Scenario(name=name, kind=kind, raw=raw, system=system, omega0=b0, eps=eps,
                        grid=spec, k_max=_integer(algo, "k_max", "$.algorithm", default=1, minimum=1),
                        corner_check=cc, plot=_get(raw, "plot", "$", dict, default={}),
                        output=_get(raw, "output", "$", str, default=None))
    raise ConfigError("$.type", f"unknown scenario type {kind!r}")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(str(path), "file not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON ({exc})") from exc
    return parse_scenario(raw)


# ---------------------------------------------------------------------------
# pipelines


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1) + "\n")
    return path


def _law_grid(law: SwitchingLaw, domain: PolyUnion, n: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.min([p.vertices.min(axis=0) for p in domain.parts], axis=0)
    hi = np.max([p.vertices.max(axis=0) for p in domain.parts], axis=0)
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    pts = np.array([(x, y) for y in ys for x in xs])
    return pts, law.mode_field(pts)


def run_linear(sc: Scenario, out: Path, seed: Optional[int]) -> tuple[dict, int]:
    t0 = time.perf_counter()
    cert, ladder = algorithm1(sc.system, sc.omega0, sc.k_stop, sc.eps)
    timings = {"algorithm": time.perf_counter() - t0}
    written = save_ladder(ladder, out / "ladder", cert)
    checks = {}
    if cert.kind == "RCCS" and cert.k_found == 1 and ladder.K >= 2:
        checks["C1_in_int_C2"] = covers(ladder.levels[1], ladder.levels[2], sc.eps)
    eroded = erode(sc.omega0, sc.system.W)
    written.append(_write_json(out / "omega0_eroded.json", eroded.to_dict()))
    written.append(_write_json(out / "W.json", sc.system.W.to_dict()))
    law = SwitchingLaw.from_ladder(ladder, sc.system)
    summary = None
    if sc.simulation is not None:
        sim = sc.simulation
        t1 = time.perf_counter()
        target = ladder.levels[0]
        if sim.get("target", "omega0") == "rcis" and cert.rcis_k:
            target = ladder.cumulative(cert.rcis_k)
        lf = LFunction(ladder)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotNestedWarning)
            trajs, summ = batch_simulate(law, sim["x0"], sim["steps"], sim["n_runs"],
                                         sim.get("seed", 0) if seed is None else seed,
                                         target=target, lfun=lf)
        written += export_batch(trajs, summ, out / "trajectories")
        summary = summ.to_dict()
        timings["simulation"] = time.perf_counter() - t1
    n = int(sc.plot.get("law_grid", 0))
    if n:
        t2 = time.perf_counter()
        pts, modes = _law_grid(law, domain_approximation(ladder), n)
        p = out / "law.csv"
        with p.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["x1", "x2", "mode"])
            for (a, b), m in zip(pts, modes):
                wr.writerow([repr(float(a)), repr(float(b)), int(m)])
        written.append(p)
        timings["law_grid"] = time.perf_counter() - t2
    report = {"certificate": cert.to_dict(), "counts": {
        "computed_per_level": ladder.computed_counts, "nonempty_per_level": ladder.nonempty_counts,
        "cumulative_computed": [ladder.cumulative_computed(k) for k in range(ladder.K + 1)]},
        "checks": checks, "simulation": summary, "timings": timings}
    code = EXIT_OK if cert.success else EXIT_UNSUCCESSFUL
    return report, written, code


def run_amr(sc: Scenario, out: Path) -> tuple[dict, list, int]:
    sys_, spec, b0 = sc.system, sc.grid, sc.omega0
    t0 = time.perf_counter()
    ok, cls, hull = gridcert.certify_rccs_grid(sys_, b0, spec, sc.eps)
    timings = {"certification": time.perf_counter() - t0}
    written = [cls.to_csv(out / "classification.csv")]
    hull_dir = out / "hulls"
    hull_dir.mkdir(exist_ok=True)
    written.append(gridcert.write_hull_json(hull, hull_dir / "hull_0001.json"))
    report = {"n_points": spec.n_points, "n_inside": cls.n_inside, "certified": ok}
    if ok and sc.k_max > 1:
        t1 = time.perf_counter()

        def save(k, c, h):
            if k > 1:
                written.append(gridcert.write_hull_json(h, hull_dir / f"hull_{k:04d}.json"))

        ladder = gridcert.grow_domain_grid(sys_, b0, spec, sc.k_max, sc.eps, callback=save)
        written.append(ladder.last.to_csv(out / "classification_final.csv"))
        report.update({"iterations": len(ladder.hulls), "converged_at": ladder.converged_at,
                       "inside_counts": ladder.inside_counts,
                       "nesting_violations": ladder.nesting_violations()})
        timings["growth"] = time.perf_counter() - t1
    if sc.corner_check is not None:
        cc = sc.corner_check
        rng = np.random.default_rng(cc.get("seed", 0))
        idx = np.where(cls.inside)[0]
        pick = np.sort(rng.choice(idx, size=min(cc["n_points"], len(idx)), replace=False))
        frac, viol = gridcert.corner_sufficiency(sys_, gridcert.ThresholdRegion(b0), cls.points[pick],
                                                 cls.modes[pick], cc["n_noise"], cc.get("seed", 0))
        written.append(_write_json(out / "corner_check.json", {
            "points": int(len(pick)), "noises_per_point": cc["n_noise"], "fraction_inside": frac,
            "violations": [list(v) for v in viol[:1000]], "n_violations": len(viol)}))
        report["corner_check"] = {"fraction_inside": frac, "n_violations": len(viol)}
    written.append(gridcert.write_certificate(out / "certificate.json", b0, sc.eps, ok, spec,
                                              n_inside=cls.n_inside))
    report["timings"] = timings
    return report, written, (EXIT_OK if ok else EXIT_UNSUCCESSFUL)


def run(scenario_path, out: Optional[str] = None, seed: Optional[int] = None) -> tuple[dict, int]:
    """Run a scenario and write its artifacts plus report.json."""
    sc = load_scenario(scenario_path)
    out_dir = Path(out or sc.output or Path("runs") / sc.name)
    if out_dir.exists():
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True)
    try:
        if sc.kind == "linear":
            body, written, code = run_linear(sc, out_dir, seed)
        else:
            body, written, code = run_amr(sc, out_dir)
    except Exception as exc:
        raise RuntimeError(f"scenario {sc.name!r}: {exc}") from exc
    report = {"scenario": sc.name, "type": sc.kind, "config_hash": sc.config_hash, **body}
    rp = out_dir / "report.json"
    report["manifest"] = sorted(str(p.relative_to(out_dir)) for p in written + [rp])
    _write_json(rp, report)
    return report, code


# ---------------------------------------------------------------------------
# plots


PALETTE = {"domain": "#8ecae6", "omega0": "black", "eroded": "#fb8500", "W": "#999999",
           "mode1": "#219ebc", "mode2": "#ffb703", "mode3": "#8ac926", "mode4": "#d62828",
           "inside": "#1d4ed8", "outside": "#d1d5db"}


def _need(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifact(f"missing artifact: {path}")
    return path


def _read_csv(path: Path) -> list[dict]:
    with _need(path).open() as fh:
        return list(csv.DictReader(fh))


def _plot_sets(run_dir: Path) -> Canvas:
    ladder, _ = load_ladder(_need(run_dir / "ladder"))
    D = domain_approximation(ladder)
    lo = np.min([p.vertices.min(axis=0) for p in D.parts], axis=0)
    hi = np.max([p.vertices.max(axis=0) for p in D.parts], axis=0)
    cv = Canvas(lo, hi)
    cv.frame("domain approximation, seed set and eroded seed")
    for P in D.parts:
        cv.polygon(P.vertices, fill=PALETTE["domain"], opacity=0.35)
    W = HPolytope.from_dict(json.loads(_need(run_dir / "W.json").read_text()))
    cv.polygon(W.vertices, fill=PALETTE["W"], opacity=0.9)
    E = HPolytope.from_dict(json.loads(_need(run_dir / "omega0_eroded.json").read_text()))
    if not E.is_empty():
        cv.polygon(E.vertices, fill=PALETTE["eroded"], opacity=0.8)
    cv.polygon(ladder.omega0.vertices, stroke=PALETTE["omega0"], width=1.5)
    return cv


def _plot_trajectories(run_dir: Path) -> Canvas:
    tdir = _need(run_dir / "trajectories")
    files = sorted(tdir.glob("run_*.csv"))
    if not files:
        raise MissingArtifact(f"no trajectories in {tdir}")
    runs = [read_trajectory_csv(f) for f in files]
    allp = np.vstack(runs)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    ladder = None
    if (run_dir / "ladder" / "ladder_meta.json").exists():
        ladder, _ = load_ladder(run_dir / "ladder")
        v = ladder.omega0.vertices
        lo, hi = np.minimum(lo, v.min(axis=0)), np.maximum(hi, v.max(axis=0))
    cv = Canvas(lo, hi)
    cv.frame("closed-loop trajectories")
    if ladder is not None:
        cv.polygon(ladder.omega0.vertices, stroke=PALETTE["omega0"], width=1.5)
    for r in runs:
        cv.polyline(r, stroke="#023047", width=0.6, opacity=0.5)
    cv.points(runs[0][:1], fill="#d62828", r=3)
    return cv


def _plot_law(run_dir: Path) -> Canvas:
    rows = _read_csv(run_dir / "law.csv")
    pts = np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
    modes = np.array([int(r["mode"]) for r in rows])
    cv = Canvas(pts.min(axis=0), pts.max(axis=0))
    cv.frame("switching law")
    for m in sorted(set(modes.tolist()) - {0}):
        cv.points(pts[modes == m], fill=PALETTE.get(f"mode{m}", "#333"), r=1.6)
    return cv


def _plot_grid(run_dir: Path) -> Canvas:
    rows = _read_csv(run_dir / "classification.csv")
    pts = np.array([[float(r["b"]), float(r["s"])] for r in rows])
    inside = np.array([r["label"] == "Inside" for r in rows])
    cv = Canvas(pts.min(axis=0), pts.max(axis=0))
    cv.frame("grid classification (blue: Inside)")
    cv.points(pts[~inside], fill=PALETTE["outside"], r=1.2)
    cv.points(pts[inside], fill=PALETTE["inside"], r=1.2)
    cert = json.loads(_need(run_dir / "certificate.json").read_text())
    c = cert["b0"]
    cv.polygon([[0, 0], [c, 0], [c, c]], stroke="black", width=1.2)
    return cv


def _plot_ladder(run_dir: Path) -> Canvas:
    hdir = run_dir / "hulls"
    if hdir.exists():
        files = sorted(hdir.glob("hull_*.json"))
        if not files:
            raise MissingArtifact(f"no hulls in {hdir}")
        hulls = [np.asarray(json.loads(f.read_text())["vertices"]) for f in files]
        allp = np.vstack(hulls)
        cv = Canvas(allp.min(axis=0), allp.max(axis=0))
        cv.frame(f"nested hulls, {len(hulls)} iterations")
        for h in hulls:
            cv.polygon(h, stroke="#1d4ed8", width=0.5, opacity=0.0)
        cv.polygon(hulls[-1], stroke="#1d4ed8", width=1.5)
        return cv
    ladder, _ = load_ladder(_need(run_dir / "ladder"))
    D = domain_approximation(ladder)
    lo = np.min([p.vertices.min(axis=0) for p in D.parts], axis=0)
    hi = np.max([p.vertices.max(axis=0) for p in D.parts], axis=0)
    cv = Canvas(lo, hi)
    cv.frame(f"controllable-set levels 1..{ladder.K}")
    shades = np.linspace(0.15, 0.6, max(ladder.K, 1))
    for k in range(ladder.K, 0, -1):
        for P in ladder.levels[k].parts:
            cv.polygon(P.vertices, fill="#219ebc", opacity=float(shades[k - 1]) / 4, stroke="#219ebc", width=0.2)
    cv.polygon(ladder.omega0.vertices, stroke="black", width=1.5)
    return cv


FIGURES = {"sets": _plot_sets, "trajectories": _plot_trajectories, "law": _plot_law,
           "grid": _plot_grid, "ladder": _plot_ladder}


def plot(run_dir, figure: str) -> Path:
    run_dir = Path(run_dir)
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}")
    return FIGURES[figure](run_dir).save(run_dir / f"fig_{figure}.svg")


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="setattract", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("scenario")
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("--seed", type=int, default=None, help="base seed for simulations")
    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("scenario")
    p = sub.add_parser("plot", help="render an SVG figure from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--figure", required=True, choices=sorted(FIGURES))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            sc = load_scenario(args.scenario)
            print(f"ok: {sc.name} ({sc.kind}) config hash {sc.config_hash[:12]}")
            return EXIT_OK
        if args.command == "plot":
            print(plot(args.run_dir, args.figure))
            return EXIT_OK
        report, code = run(args.scenario, args.out, args.seed)
    except (ConfigError, MissingArtifact, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    summary = {k: report[k] for k in ("scenario", "config_hash") if k in report}
    if "certificate" in report:
        c = report["certificate"]
        summary.update(kind=c["kind"], k_found=c["k_found"], polytopes=c["polytope_count"],
                       domain_polytopes=c["domain_count"], rcis_k=c["rcis_k"])
    else:
        summary.update(certified=report["certified"], n_inside=report["n_inside"],
                       iterations=report.get("iterations"))
    if report.get("simulation"):
        summary["converged"] = f"{report['simulation']['converged']}/{report['simulation']['n_runs']}"
    print(json.dumps(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
