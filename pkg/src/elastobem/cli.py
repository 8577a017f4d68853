"""Command-line driver: solve, convergence, fieldmap and selftest.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import geometry, quadrature, specfun
from .assembly import KernelContext, assemble_mass, fundamental_tensor
from .core import ElasticMedium, ElastoBEMError, GeometryError, InvalidMediumError
from .solver import (
    Manufactured, PlanePWave, PointSourceP, SolverConfig, boundary_errors, convergence_study,
    represent_field, solve,
)

logger = logging.getLogger("elastobem")

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

DEFAULTS = {
    "medium": {"lambda": 2.0, "mu": 1.0, "rho": 1.0},
    "geometry": {"curve": "rounded_triangle", "params": {}},
    "solver": {"eta": 1.0, "M": 20, "gauss_order": 8, "grading_depth": 10, "sampling": "midpoint", "threads": 1},
    "incident": {"type": "manufactured", "location": [0.0, 0.0]},
    "output": {"field": "scattered"},
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(cfg: dict, item: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-block value")
    node[parts[-1]] = value


@dataclass
class RunConfig:
    medium: ElasticMedium
    curve: object
    N: int | str | None
    solver: SolverConfig
    incident: object
    output: dict
    raw: dict = field(repr=False, default_factory=dict)

    def mesh(self, N=None):
        N = self.N if N is None else N
        if N is None:
            raise ConfigError("missing field 'geometry.N'")
        if N == "auto":
            N = geometry.nodes_for_frequency(self.curve, self.medium.k_s)
        return geometry.sample_curve(self.curve, int(N))


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing field '{where}.{key}'")
    return block[key]


def _number(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{name}' must be a number, got {v!r}")
    return float(v)


def build_run_config(raw: dict) -> RunConfig:
    cfg = _merge(DEFAULTS, raw)
    med = cfg["medium"]
    try:
        medium = ElasticMedium(
            lam=_number(_require(med, "lambda", "medium"), "medium.lambda"),
            mu=_number(_require(med, "mu", "medium"), "medium.mu"),
            rho=_number(_require(med, "rho", "medium"), "medium.rho"),
            omega=_number(_require(med, "omega", "medium"), "medium.omega"),
        )
    except InvalidMediumError as exc:
        raise ConfigError(str(exc)) from exc
    geo = cfg["geometry"]
    try:
        curve = geometry.make_curve(_require(geo, "curve", "geometry"), **geo.get("params", {}))
    except (GeometryError, TypeError, KeyError) as exc:
        raise ConfigError(f"geometry: {exc}") from exc
    N = geo.get("N")
    if N is not None and N != "auto" and (isinstance(N, bool) or not isinstance(N, int) or N < 3):
        raise ConfigError(f"field 'geometry.N' must be an integer >= 3 or \"auto\", got {N!r}")
    s = cfg["solver"]
    try:
        solver = SolverConfig(
            eta=_number(s["eta"], "solver.eta"), M=int(s["M"]), gauss_order=int(s["gauss_order"]),
            grading_depth=int(s["grading_depth"]), sampling=str(s["sampling"]), threads=int(s["threads"]),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc
    inc = cfg["incident"]
    kind = inc.get("type")
    if kind == "manufactured":
        incident = Manufactured(PointSourceP(tuple(inc.get("location", (0.0, 0.0)))))
    elif kind == "point_source":
        incident = PointSourceP(tuple(inc.get("location", (0.0, 0.0))), complex(inc.get("amplitude", 1.0)))
    elif kind == "plane_p":
        try:
            incident = PlanePWave(tuple(inc.get("direction", (1.0, 0.0))), complex(inc.get("amplitude", 1.0)))
        except ValueError as exc:
            raise ConfigError(f"incident: {exc}") from exc
    else:
        raise ConfigError(f"field 'incident.type' must be manufactured, point_source or plane_p, got {kind!r}")
    out = cfg["output"]
    if out.get("field") not in ("scattered", "total"):
        raise ConfigError(f"field 'output.field' must be 'scattered' or 'total', got {out.get('field')!r}")
    return RunConfig(medium, curve, N, solver, incident, out, cfg)


def load_config(path, overrides=(), threads=None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for item in overrides or ():
        apply_override(raw, item)
    if threads is not None:
        raw.setdefault("solver", {})["threads"] = threads
    return build_run_config(raw)


def fixture_path(name: str) -> Path:
    """Path of a shipped example config (``ex1_series.json`` ... ``ex7_contrast.json``)."""
    return Path(str(resources.files("elastobem") / "configs" / name))


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, comment: str, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _conventions(run: RunConfig) -> str:
    m = run.medium
    return (f"lambda={m.lam} mu={m.mu} rho={m.rho} omega={m.omega} rad/time; lengths in model units; "
            f"displacements complex (time factor exp(-i omega t)); incident={type(run.incident).__name__}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def series_table(raw: dict) -> list:
    """Rows (M, omega, |F1 err|, |F2 err|, |F3 err|) of series vs direct evaluation at r = pi/k_s."""
    ser = raw.get("series", {})
    med = raw.get("medium", {})
    lam, mu, rho = med.get("lambda", 2.0), med.get("mu", 1.0), med.get("rho", 1.0)
    rows = []
    for omega in ser.get("omega", [1.0]):
        medium = ElasticMedium(lam, mu, rho, float(omega))
        r = math.pi / medium.k_s
        exact = (specfun.f_direct("F1", medium, r), specfun.f_direct("F2", medium, r),
                 specfun.f_direct("F3", medium.k_s, r))
        for M in ser.get("M", [20]):
            co = specfun.series_coefficients(medium, int(M))
            approx = (specfun.f1_series(co, r), specfun.f2_series(co, r), specfun.f3_series(medium.k_s, int(M), r))
            rows.append((int(M), float(omega)) + tuple(float(abs(a - e)) for a, e in zip(approx, exact)))
    return rows


def cmd_solve(run: RunConfig, out: Path) -> int:
    if "series" in run.raw:
        rows = series_table(run.raw)
        write_csv(out / "series_errors.csv", "absolute errors of truncated series vs direct Hankel evaluation at r = pi/k_s",
                  ["M", "omega", "abs_err_F1", "abs_err_F2", "abs_err_F3"], rows)
        print(f"series table: {len(rows)} rows -> {out / 'series_errors.csv'}")
        return EXIT_OK
    t0 = time.perf_counter()
    mesh = run.mesh()
    sol = solve(run.medium, mesh, run.incident, run.solver)
    wall = time.perf_counter() - t0
    rows = []
    for i in range(mesh.n_nodes):
        k = int(mesh.loop_id[i])
        u = sol.u[i]
        rows.append((k, i - mesh.loop_starts[k], float(mesh.nodes[i, 0]), float(mesh.nodes[i, 1]),
                     float(u[0].real), float(u[0].imag), float(u[1].real), float(u[1].imag)))
    write_csv(out / "solution.csv", "nodal scattered displacement u_h; " + _conventions(run),
              ["loop", "index", "x", "y", "re_u1", "im_u1", "re_u2", "im_u2"], rows)
    summary = f"N={mesh.n_nodes} omega={run.medium.omega} residual={sol.residual:.3e} wall_time_s={wall:.2f}"
    if isinstance(run.incident, Manufactured):
        rep = boundary_errors(sol, lambda x: run.incident.exact(x, run.medium))
        summary += f" l2_error={rep.l2:.6e} linf_error={rep.linf:.6e}"
    (out / "run_summary.txt").write_text(summary + "\n")
    print(summary)
    return EXIT_OK


def _node_list(run: RunConfig, N_list):
    if N_list:
        return [int(n) for n in N_list]
    conv = run.raw.get("convergence", {})
    Ns = conv.get("N")
    if not Ns:
        if run.N is None:
            raise ConfigError("missing field 'convergence.N'")
        Ns = [run.N]
    return [int(n) for n in Ns]


def cmd_convergence(run: RunConfig, out: Path, N_list=None) -> int:
    if not isinstance(run.incident, Manufactured):
        raise ConfigError("convergence requires incident.type = manufactured")
    Ns = _node_list(run, N_list)
    if Ns != sorted(Ns) or len(set(Ns)) != len(Ns):
        raise ConfigError(f"node counts must be strictly ascending, got {Ns}")
    omegas = run.raw.get("convergence", {}).get("omega", [run.medium.omega])
    media = [ElasticMedium(run.medium.lam, run.medium.mu, run.medium.rho, float(w)) for w in omegas]
    rows = convergence_study(run.curve, media, Ns, run.solver, source=run.incident.source.location)
    write_csv(out / "convergence.csv", "L2(Gamma) and max nodal errors vs N; order = log(e1/e2)/log(N2/N1); "
              + _conventions(run), ["N", "omega", "l2_error", "linf_error", "order", "residual"],
              [(r.N, r.omega, r.l2, r.linf, r.order, r.residual) for r in rows])
    for r in rows:
        order = "" if r.order is None else f"{r.order:.2f}"
        print(f"N={r.N:5d} omega={r.omega:.4g} l2={r.l2:.3e} order={order}")
    return EXIT_OK


def fieldmap_grid(spec: dict):
    try:
        x0, x1 = float(spec["xmin"]), float(spec["xmax"])
        y0, y1 = float(spec["ymin"]), float(spec["ymax"])
        nx, ny = int(spec["nx"]), int(spec["ny"])
    except KeyError as exc:
        raise ConfigError(f"missing field 'output.grid.{exc.args[0]}'") from exc
    if not (x1 > x0 and y1 > y0 and nx > 0 and ny > 0):
        raise ConfigError("output.grid needs positive extents and resolution")
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def compute_fieldmap(run: RunConfig, points: np.ndarray):
    """Field values and mask (1 = inside an obstacle or within one segment length of it)."""
    mesh = run.mesh()
    ctx = run.solver.context(run.medium, mesh)
    sol = solve(run.medium, mesh, run.incident, run.solver, ctx)
    collar = float(mesh.lengths.max())
    mask = mesh.contains(points) | (mesh.distance(points) < collar)
    vals = np.zeros((len(points), 2), dtype=complex)
    ok = ~mask
    if np.any(ok):
        vals[ok] = represent_field(ctx, sol, points[ok], min_distance=collar)
        if run.output.get("field") == "total":
            vals[ok] += np.asarray(run.incident.displacement(points[ok], run.medium))
    return vals, mask, sol


def cmd_fieldmap(run: RunConfig, out: Path) -> int:
    grid = run.output.get("grid")
    if not grid:
        raise ConfigError("missing field 'output.grid'")
    pts = fieldmap_grid(grid)
    vals, mask, sol = compute_fieldmap(run, pts)
    rows = [(float(p[0]), float(p[1]), float(v[0].real), float(v[0].imag), float(v[1].real), float(v[1].imag), int(m))
            for p, v, m in zip(pts, vals, mask)]
    write_csv(out / "fieldmap.csv", f"{run.output.get('field')} field on grid; mask=1 inside obstacle or collar; "
              + _conventions(run), ["x", "y", "re_u1", "im_u1", "re_u2", "im_u2", "mask"], rows)
    print(f"fieldmap: {len(rows)} points, {int(mask.sum())} masked, residual={sol.residual:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Self test
# ---------------------------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    failures: list = field(default_factory=list)

    def check(self, ok: bool, label: str) -> None:
        if ok:
            self.passed += 1
        else:
            self.failures.append(label)


def run_selftest(perturb: tuple | None = None) -> list[SuiteResult]:
    """Invariant suites; ``perturb = (kind, m, delta)`` corrupts one moment-table entry."""
    results = []

    sf = SuiteResult("specfun")
    for x in (0.1, 1.0, 10.0, 50.0):
        j0, y0 = specfun.bessel_jy(0, x)
        j1, y1 = specfun.bessel_jy(1, x)
        w = j0 * y1 - j1 * y0
        sf.check(abs(w + 2 / (math.pi * x)) <= 1e-12 * 2 / (math.pi * x), f"Wronskian at x={x}")
        h = specfun.hankel1(2, x) - (2 / x) * specfun.hankel1(1, x) + specfun.hankel1(0, x)
        sf.check(abs(h) <= 1e-12 * abs(specfun.hankel1(2, x)), f"recurrence at x={x}")
    medium = ElasticMedium()
    co = specfun.series_coefficients(medium, 20)
    r = math.pi / medium.k_s
    for kind, approx, exact in (
        ("F1", specfun.f1_series(co, r), specfun.f_direct("F1", medium, r)),
        ("F2", specfun.f2_series(co, r), specfun.f_direct("F2", medium, r)),
        ("F3", specfun.f3_series(medium.k_s, 20, r), specfun.f_direct("F3", medium.k_s, r)),
    ):
        sf.check(abs(approx - exact) <= 1e-10 * abs(exact), f"{kind} series vs direct")
    sf.check(abs(co.c6[0] - 2j / math.pi) < 1e-15, "C6[0] = 2i/pi")
    results.append(sf)

    mt = SuiteResult("moments")
    table = quadrature.singular_table(20)
    fams = {k: np.array(table.family(k)) for k in quadrature.KINDS}
    if perturb is not None:
        kind, m, delta = perturb
        fams[int(kind)][int(m)] += float(delta)
    oracle = quadrature._cached_oracle(20)
    for k in quadrature.KINDS:
        for m in range(21):
            mt.check(abs(fams[k][m] - float(oracle[k][m])) <= 1e-10, f"I{k}[{m}]")
    mt.check(fams[3][0] == 4.0, "I3[0] = 4")
    mt.check(abs(fams[4][0] - (4 * math.log(2) - 6)) <= 1e-13, "I4[0] = 4 ln2 - 6")
    mt.check(abs(fams[5][0]) <= 1e-13, "I5[0] = 0")
    results.append(mt)

    kr = SuiteResult("kernel")
    rng = np.random.default_rng(7)
    mesh = geometry.sample_curve(geometry.Circle(1.0), 16)
    ctx = KernelContext.build(medium, mesh)
    for trial in range(20):
        x, y = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
        E1 = fundamental_tensor(ctx, x, y)
        E2 = fundamental_tensor(ctx, y, x)
        kr.check(np.max(np.abs(E1 - E2.T)) <= 1e-14 * max(1.0, np.max(np.abs(E1))), f"symmetry pair {trial}")
    results.append(kr)

    ms = SuiteResult("mass")
    for curve in (geometry.Circle(1.0), geometry.Kite()):
        mesh = geometry.sample_curve(curve, 32)
        I1, I2 = assemble_mass(mesh)
        h = mesh.lengths
        rowsum = I1.data.reshape(32, 2, 32, 2).sum(axis=2)
        expect = 0.5 * (h[mesh.prev] + h)
        ms.check(np.allclose(rowsum[:, 0, 0], expect, rtol=1e-14, atol=0), f"{type(curve).__name__} I1 row sums")
        ms.check(np.allclose(I2.data.reshape(32, 2, 32, 2).sum(axis=2)[:, 0, 0], expect, rtol=1e-14, atol=0),
                 f"{type(curve).__name__} I2 row sums")
        ms.check(np.allclose(I1.data, I1.data.T), f"{type(curve).__name__} I1 symmetric")
    results.append(ms)
    return results


def cmd_selftest(perturb=None) -> int:
    results = run_selftest(perturb)
    ok = True
    for res in results:
        status = "PASS" if not res.failures else "FAIL"
        ok &= not res.failures
        print(f"[{status}] {res.name}: {res.passed} passed, {len(res.failures)} failed")
        for label in res.failures:
            print(f"    failed: {label}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def _parse_perturb(text: str):
    parts = text.split(":")
    try:
        kind, m = int(parts[0].lstrip("Ii")), int(parts[1])
        delta = float(parts[2]) if len(parts) > 2 else 1e-6
    except (IndexError, ValueError):
        raise ConfigError(f"--perturb-moment expects KIND:M[:DELTA], got {text!r}") from None
    if kind not in quadrature.KINDS or not 0 <= m <= 20:
        raise ConfigError(f"--perturb-moment out of range: {text!r}")
    return kind, m, delta


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastobem", description="Galerkin BEM for 2D exterior elastic scattering")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "convergence", "fieldmap"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--threads", type=int, default=None)
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        if name == "convergence":
            s.add_argument("--N", type=int, nargs="+", default=None, help="node counts (ascending)")
    s = sub.add_parser("selftest")
    s.add_argument("--perturb-moment", default=None, metavar="KIND:M[:DELTA]",
                   help="test hook: corrupt one moment-table entry")
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selftest":
            return cmd_selftest(_parse_perturb(args.perturb_moment) if args.perturb_moment else None)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        run = load_config(args.config, args.override, args.threads)
        out = Path(args.out)
        if args.command == "solve":
            return cmd_solve(run, out)
        if args.command == "convergence":
            return cmd_convergence(run, out, args.N)
        return cmd_fieldmap(run, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ElastoBEMError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
