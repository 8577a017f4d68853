"""Incident fields, the combined-field system, dense solve, field representation and errors."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .assembly import (
    F_A, F_ARX, F_ARY, F_DRX, F_DRY, F_H0S,
    KernelContext, _tensor_from_fields, assemble, assemble_mass, kernel_fields,
)
from .core import IDENTITY2, ROT, BlockMatrix, DomainError, ElasticMedium, SingularSystemError
from .geometry import BoundaryMesh, sample_curve
from .quadrature import gauss_legendre
from .specfun import hankel1

logger = logging.getLogger(__name__)

SAMPLING_MODES = ("midpoint", "node")


# ---------------------------------------------------------------------------
# Incident and exact fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanePWave:
    """Compressional plane wave d exp(i k_p x.d)."""

    direction: tuple = (1.0, 0.0)
    amplitude: complex = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        nd = float(np.hypot(*d))
        if nd == 0:
            raise ValueError("plane wave direction must be nonzero")
        object.__setattr__(self, "direction", tuple(d / nd))

    def displacement(self, x, medium: ElasticMedium) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = np.asarray(self.direction)
        phase = self.amplitude * np.exp(1j * medium.k_p * (x @ d))
        return phase[..., None] * d

    def traction(self, x, n, medium: ElasticMedium) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = np.asarray(n, dtype=float)
        d = np.asarray(self.direction)
        kp = medium.k_p
        phase = self.amplitude * 1j * kp * np.exp(1j * kp * (x @ d))
        dn = np.sum(n * d, axis=-1)
        return phase[..., None] * (2 * medium.mu * dn[..., None] * d + medium.lam * n)


@dataclass(frozen=True)
class PointSourceP:
    """Radiating compressional field u = -grad H0(k_p |x - z|)."""

    location: tuple = (0.0, 0.0)
    amplitude: complex = 1.0

    def _geometry(self, x):
        rv = np.asarray(x, dtype=float) - np.asarray(self.location, dtype=float)
        r = np.hypot(rv[..., 0], rv[..., 1])
        if np.any(r == 0):
            raise DomainError("point source evaluated at its own location")
        return rv, r

    def displacement(self, x, medium: ElasticMedium) -> np.ndarray:
        rv, r = self._geometry(x)
        kp = medium.k_p
        return (self.amplitude * kp * np.asarray(hankel1(1, kp * r)) / r)[..., None] * rv

    def traction(self, x, n, medium: ElasticMedium) -> np.ndarray:
        rv, r = self._geometry(x)
        n = np.asarray(n, dtype=float)
        kp, mu, lam = medium.k_p, medium.mu, medium.lam
        h0 = np.asarray(hankel1(0, kp * r))
        h1 = np.asarray(hankel1(1, kp * r))
        dphi = -kp * h1
        d2phi = -kp * kp * (h0 - h1 / (kp * r))
        xh = rv / r[..., None]
        xn = np.sum(xh * n, axis=-1)
        # Hess(phi) n = phi'' (xh.n) xh + (phi'/r)(n - (xh.n) xh)
        hess_n = (d2phi * xn)[..., None] * xh + (dphi / r)[..., None] * (n - xn[..., None] * xh)
        return self.amplitude * (-2 * mu * hess_n + (lam * kp * kp * h0)[..., None] * n)


@dataclass(frozen=True)
class Manufactured:
    """Exact scattered field given by a point source inside the obstacle.

    The incident field is minus the exact field, so the total traction vanishes.
    """

    source: PointSourceP = field(default_factory=PointSourceP)

    def exact(self, x, medium: ElasticMedium) -> np.ndarray:
        return self.source.displacement(x, medium)

    def displacement(self, x, medium: ElasticMedium) -> np.ndarray:
        return -self.source.displacement(x, medium)

    def traction(self, x, n, medium: ElasticMedium) -> np.ndarray:
        return -self.source.traction(x, n, medium)


def incident_traction(field_, mesh: BoundaryMesh, medium: ElasticMedium, sampling: str = "midpoint") -> np.ndarray:
    """Segment values g_i of T u^i, shape (N, 2).

    ``midpoint`` samples at the segment midpoint; ``node`` samples at the
    segment's start node x_i with the segment normal.
    """
    if sampling == "midpoint":
        pts = mesh.midpoints
    elif sampling == "node":
        pts = mesh.nodes
    else:
        raise ValueError(f"sampling must be one of {SAMPLING_MODES}, got {sampling!r}")
    src = getattr(field_, "source", field_)
    if isinstance(src, PointSourceP):
        _check_sources_inside(mesh, [src.location])
    return np.asarray(field_.traction(pts, mesh.normals, medium), dtype=complex)


def _check_sources_inside(mesh: BoundaryMesh, locations) -> None:
    loc = np.asarray(locations, dtype=float)
    if not np.all(mesh.contains(loc)):
        raise DomainError(f"source point(s) {loc.tolist()} must lie strictly inside an obstacle")


# ---------------------------------------------------------------------------
# System and solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    eta: float = 1.0
    M: int = 20
    gauss_order: int = 8
    near_order: int = 16
    corner_order: int = 8
    grading_depth: int = 10
    sampling: str = "midpoint"
    threads: int = 1

    def __post_init__(self):
        if not np.isfinite(self.eta) or self.eta == 0:
            raise ValueError(f"coupling parameter eta must be nonzero, got {self.eta}")
        if self.M < 0:
            raise ValueError(f"series truncation must be non-negative, got {self.M}")
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}")
        if self.grading_depth < 0:
            raise ValueError("grading depth must be non-negative")

    def context(self, medium: ElasticMedium, mesh: BoundaryMesh) -> KernelContext:
        return KernelContext.build(
            medium, mesh, M=self.M, gauss_order=self.gauss_order, near_order=self.near_order,
            corner_order=self.corner_order, grading_depth=self.grading_depth, threads=self.threads,
        )


@dataclass
class BoundarySolution:
    mesh: BoundaryMesh
    medium: ElasticMedium
    u: np.ndarray  # (N, 2) nodal displacements
    g: np.ndarray  # (N, 2) segment values of T u^i
    residual: float
    rcond: float = float("nan")
    timings: dict = field(default_factory=dict)

    @property
    def traction(self) -> np.ndarray:
        """Segment values of the scattered traction T u = -T u^i."""
        return -self.g


def build_system(ctx: KernelContext, config: SolverConfig, field_=None, g=None):
    """Return ``(A, rhs, g)`` for [W + i eta (I/2 - K)] u = [I/2 + K' + i eta V] g."""
    if g is None:
        if field_ is None:
            raise ValueError("either an incident field or traction data is required")
        g = incident_traction(field_, ctx.mesh, ctx.medium, config.sampling)
    g = np.asarray(g, dtype=complex).reshape(ctx.mesh.n_nodes, 2)
    n = ctx.mesh.n_nodes
    ieta = 1j * config.eta
    A = BlockMatrix(n)
    B = BlockMatrix(n)
    assemble(ctx, [(A, {"W": 1.0, "K": -ieta}), (B, {"Kp": 1.0, "V": ieta})])
    I1, I2 = assemble_mass(ctx)
    A.data += 0.5 * ieta * I1.data
    B.data += 0.5 * I2.data
    rhs = B.data @ g.ravel()
    return A, rhs, g


def lu_solve(A, rhs, pivot_floor: float = 1e-13, residual_tol: float = 1e-10):
    """Dense LU with partial pivoting; returns ``(x, relative residual, rcond)``."""
    a = np.asarray(A.data if isinstance(A, BlockMatrix) else A)
    b = np.asarray(rhs)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible system shapes {a.shape} and {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise SingularSystemError("system contains non-finite entries")
    anorm = np.linalg.norm(a, 1)
    lu, piv = linalg.lu_factor(a, check_finite=False)
    gecon = lapack.get_lapack_funcs("gecon", (lu,))
    rcond, _ = gecon(lu, anorm, norm="1")
    pmin = np.min(np.abs(np.diag(lu))) if a.size else 0.0
    if anorm == 0 or pmin < pivot_floor * anorm:
        raise SingularSystemError(
            f"near-singular system: smallest pivot {pmin:.3e}, norm {anorm:.3e}, condition estimate {1 / max(rcond, 1e-300):.3e}"
        )
    x = linalg.lu_solve((lu, piv), b, check_finite=False)
    bn = np.linalg.norm(b)
    res = float(np.linalg.norm(a @ x - b) / bn) if bn > 0 else float(np.linalg.norm(a @ x))
    if res > residual_tol:
        # one step of iterative refinement before giving up
        x = x + linalg.lu_solve((lu, piv), b - a @ x, check_finite=False)
        res = float(np.linalg.norm(a @ x - b) / bn) if bn > 0 else 0.0
    if res > residual_tol:
        raise SingularSystemError(f"relative residual {res:.3e} exceeds {residual_tol:.1e}")
    return x, res, float(rcond)


def solve(medium: ElasticMedium, mesh: BoundaryMesh, field_, config: SolverConfig | None = None,
          ctx: KernelContext | None = None) -> BoundarySolution:
    config = config or SolverConfig()
    ctx = ctx or config.context(medium, mesh)
    t0 = time.perf_counter()
    A, rhs, g = build_system(ctx, config, field_)
    t1 = time.perf_counter()
    x, res, rcond = lu_solve(A, rhs)
    t2 = time.perf_counter()
    logger.info("N=%d omega=%g residual=%.2e cond~%.2e assembly %.1fs solve %.1fs",
                mesh.n_nodes, medium.omega, res, 1 / rcond if rcond > 0 else math.inf, t1 - t0, t2 - t1)
    return BoundarySolution(mesh, medium, x.reshape(-1, 2), g, res, rcond,
                            {"assembly": t1 - t0, "solve": t2 - t1})


# ---------------------------------------------------------------------------
# Representation formula
# ---------------------------------------------------------------------------

def represent_field(ctx: KernelContext, solution: BoundarySolution, points, quad_order: int | None = None,
                    min_distance: float | None = None, chunk_points: int = 400_000) -> np.ndarray:
    """Scattered displacement at exterior points, shape (P, 2).

    u(x) = int [d gamma/dn_y I - grad_y R n_y^T] u_h + (2 mu E - gamma I) N du_h/ds
           - int E t,  with t = -g piecewise constant.
    """
    mesh = ctx.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return np.zeros((0, 2), dtype=complex)
    if np.any(mesh.contains(pts)):
        raise DomainError("evaluation point inside an obstacle")
    dmin = float(mesh.lengths.max()) if min_distance is None else min_distance
    if np.any(mesh.distance(pts) < dmin):
        raise DomainError(f"evaluation point closer than {dmin:.3g} to the boundary")
    rule = gauss_legendre(quad_order or 2 * ctx.gauss_order)
    xi, w = rule.nodes, rule.weights
    phi = np.stack([np.ones_like(xi), 0.5 * (1 - xi), 0.5 * (1 + xi)], axis=1) * w[:, None]  # (Q, 3)
    h = mesh.lengths
    a = mesh.nodes
    b = mesh.nodes[mesh.next]
    n_y = mesh.normals
    u = solution.u
    ua, ub = u, u[mesh.next]
    dudS = (ub - ua) / h[:, None]
    g = solution.g
    medium = ctx.medium
    out = np.zeros((len(pts), 2), dtype=complex)
    y = a[:, None, :] + (0.5 * (1 + xi))[None, :, None] * (b - a)[:, None, :]  # (N, Q, 2)
    cs = max(1, chunk_points // (mesh.n_nodes * len(xi)))
    for s in range(0, len(pts), cs):
        x = pts[s : s + cs]
        f = kernel_fields(ctx.radial, x[:, None, None, :] - y[None, :, :, :])  # (10, P, N, Q)
        mom = np.einsum("fpnq,qc->fpnc", f, phi) * (0.5 * h)[None, None, :, None]
        E1 = _tensor_from_fields(medium, mom[..., 0])  # (P, N, 2, 2)
        G1 = 0.25j * mom[F_H0S, ..., 0]
        S1 = 2 * medium.mu * E1 - G1[..., None, None] * IDENTITY2
        acc = np.einsum("pnij,njk,nk->pi", S1, np.broadcast_to(ROT, (len(h), 2, 2)), dudS)
        acc += np.einsum("pnij,nj->pi", E1, g)
        for c, coef in ((1, ua), (2, ub)):
            dny = 0.25j * (mom[F_DRX, ..., c] * n_y[:, 0] + mom[F_DRY, ..., c] * n_y[:, 1])
            gx = -0.25j * np.stack([mom[F_ARX, ..., c], mom[F_ARY, ..., c]], axis=-1)  # grad_x R
            # [dny I + grad_x R n^T] u
            acc += np.einsum("pn,ni->pi", dny, coef)
            acc += np.einsum("pni,nj,nj->pi", gx, n_y, coef)
        out[s : s + cs] = acc
    return out


# ---------------------------------------------------------------------------
# Errors and convergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorReport:
    l2: float
    linf: float
    nodal: np.ndarray  # (N,) Euclidean nodal deviation |u_h(x_i) - u(x_i)|


def boundary_errors(solution: BoundarySolution, exact: Callable, quad_order: int = 8) -> ErrorReport:
    """L2(Gamma) error of the piecewise-linear u_h and the max nodal deviation.

    ``exact`` maps points (..., 2) to complex displacements (..., 2).
    """
    mesh = solution.mesh
    rule = gauss_legendre(quad_order)
    xi = rule.nodes
    pts = mesh.segment_points(xi)  # (N, Q, 2)
    uex = np.asarray(exact(pts))
    ua, ub = solution.u, solution.u[mesh.next]
    uh = ua[:, None, :] * (0.5 * (1 - xi))[None, :, None] + ub[:, None, :] * (0.5 * (1 + xi))[None, :, None]
    err2 = np.sum(np.abs(uh - uex) ** 2, axis=-1)
    l2 = math.sqrt(float(np.sum(err2 @ rule.weights * 0.5 * mesh.lengths)))
    nodal = np.linalg.norm(solution.u - np.asarray(exact(mesh.nodes)), axis=-1)
    return ErrorReport(l2, float(nodal.max()), nodal)


def observed_orders(Ns: Sequence[int], errors: Sequence[float]) -> list:
    """log(e1/e2)/log(N2/N1) between consecutive runs; None where undefined."""
    out = [None]
    for (n1, e1), (n2, e2) in zip(zip(Ns, errors), zip(Ns[1:], errors[1:])):
        if e1 > 0 and e2 > 0 and n2 != n1:
            out.append(math.log(e1 / e2) / math.log(n2 / n1))
        else:
            out.append(None)
    return out


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    omega: float
    l2: float
    linf: float
    order: float | None
    residual: float


def convergence_study(curve, media: Sequence[ElasticMedium], Ns: Sequence[int], config: SolverConfig | None = None,
                      source=(0.0, 0.0)) -> list[ConvergenceRow]:
    """Manufactured-solution errors for each medium over an ascending list of N."""
    config = config or SolverConfig()
    if list(Ns) != sorted(Ns):
        raise ValueError("node counts must be ascending")
    rows = []
    man = Manufactured(PointSourceP(tuple(source)))
    for medium in media:
        l2s, partial = [], []
        for N in Ns:
            mesh = sample_curve(curve, int(N))
            sol = solve(medium, mesh, man, config)
            rep = boundary_errors(sol, lambda x: man.exact(x, medium))
            l2s.append(rep.l2)
            partial.append((N, rep, sol.residual))
        orders = observed_orders(list(Ns), l2s)
        for (N, rep, res), order in zip(partial, orders):
            rows.append(ConvergenceRow(int(N), medium.omega, rep.l2, rep.linf, order, res))
    return rows
