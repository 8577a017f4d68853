"""Kernels of the elastic single, double and hypersingular layers and their Galerkin assembly.

Trial/test spaces: continuous piecewise-linear hat functions phi_i on nodes and
piecewise-constant psi_j on segments.  Element pair integrals are reduced to
nine weighted moments of ten radial "fields" over the reference square; the
same 2x2 block algebra then serves quadrature pairs and the exact same-element
series.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import IDENTITY2, ROT, BlockMatrix, DomainError, ElasticMedium
from .geometry import BoundaryMesh
from .quadrature import PairRule, SingularTable, corner_rule, singular_table, tensor_rule
from .specfun import RadialKernels, SeriesCoefficients, series_coefficients

logger = logging.getLogger(__name__)

OPERATORS = ("V", "K", "Kp", "W")

# radial fields sampled at quadrature points
F_H0S, F_H0P, F_A, F_ARX, F_ARY, F_BXX, F_BXY, F_BYY, F_DRX, F_DRY = range(10)
N_FIELDS = 10

# weight combinations: 1, phi1_a, phi2_b, phi1_a * phi2_b
C_ONE = 0
SIGNS = (-1.0, 1.0)  # local node 0 is the segment start, node 1 its end


def c_test(a: int) -> int:
    return 1 + a


def c_trial(b: int) -> int:
    return 3 + b


def c_pair(a: int, b: int) -> int:
    return 5 + 2 * a + b


# (alpha, beta, gamma, delta) with w = alpha + beta xi1 + gamma xi2 + delta xi1 xi2
_COMBO_POLY = np.array(
    [[1.0, 0.0, 0.0, 0.0]]
    + [[0.5, 0.5 * k, 0.0, 0.0] for k in SIGNS]
    + [[0.5, 0.0, 0.5 * k, 0.0] for k in SIGNS]
    + [[0.25, 0.25 * k1, 0.25 * k2, 0.25 * k1 * k2] for k1 in SIGNS for k2 in SIGNS]
)


def weight_combos(xi1, xi2) -> np.ndarray:
    """Values of the nine weight combinations at points, shape (Q, 9)."""
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    basis = np.stack([np.ones_like(xi1), xi1, xi2, xi1 * xi2], axis=-1)
    return basis @ _COMBO_POLY.T


@dataclass
class KernelContext:
    """Everything needed to evaluate and assemble the boundary operators."""

    medium: ElasticMedium
    mesh: BoundaryMesh
    coeffs: SeriesCoefficients
    table: SingularTable
    gauss_order: int = 8
    near_order: int = 16
    corner_order: int = 8
    grading_depth: int = 10
    near_factor: float = 1.0
    threads: int = 1
    radial: RadialKernels = field(init=False, repr=False)

    def __post_init__(self):
        if self.table.M < self.coeffs.M:
            raise ValueError(f"moment table depth {self.table.M} < series truncation {self.coeffs.M}")
        kp, ks = self.medium.k_p, self.medium.k_s
        if not (math.isclose(kp, self.coeffs.k_p, rel_tol=1e-14) and math.isclose(ks, self.coeffs.k_s, rel_tol=1e-14)):
            raise ValueError("series coefficients were built for a different medium")
        self.radial = RadialKernels(kp, ks)
        self._moment_cache = None

    @classmethod
    def build(cls, medium: ElasticMedium, mesh: BoundaryMesh, M: int = 20, **kw) -> "KernelContext":
        return cls(medium, mesh, series_coefficients(medium, M), singular_table(M), **kw)

    @property
    def M(self) -> int:
        return self.coeffs.M

    def moment_tables(self):
        """P[n, c] = int w_c d^n and L[n, c] = int w_c d^n ln|d| for n = 0..2M+2."""
        if self._moment_cache is None:
            nmax = 2 * self.M + 2
            P = np.zeros((nmax + 1, 9))
            L = np.zeros((nmax + 1, 9))
            al, be, ga, de = _COMBO_POLY.T
            tab = self.table
            for n in range(nmax + 1):
                m = n // 2
                if n % 2 == 0:
                    P[n] = al * tab.I3[m] + de * tab.I5[m]
                    L[n] = al * tab.I4[m] + de * tab.I6[m]
                else:
                    P[n] = (be - ga) * tab.I1[m]
                    L[n] = (be - ga) * tab.I2[m]
            self._moment_cache = (P, L)
        return self._moment_cache


# ---------------------------------------------------------------------------
# Pointwise kernels
# ---------------------------------------------------------------------------

def kernel_fields(ctx_or_radial, rvec: np.ndarray) -> np.ndarray:
    """The ten radial fields at difference vectors ``rvec`` (..., 2); shape (10, ...)."""
    radial = ctx_or_radial.radial if isinstance(ctx_or_radial, KernelContext) else ctx_or_radial
    rvec = np.asarray(rvec, dtype=float)
    rx, ry = rvec[..., 0], rvec[..., 1]
    r = np.hypot(rx, ry)
    if np.any(r == 0):
        raise DomainError("kernel evaluated at coincident points")
    h0s, h0p, a, b, d = radial.evaluate(r)
    return np.stack([h0s, h0p, a, a * rx, a * ry, b * rx * rx, b * rx * ry, b * ry * ry, d * rx, d * ry])


def fundamental_tensor(ctx, x, y) -> np.ndarray:
    """E(x, y) for points (..., 2); returns (..., 2, 2) complex."""
    medium = ctx.medium
    radial = ctx.radial if isinstance(ctx, KernelContext) else RadialKernels(medium.k_p, medium.k_s)
    f = kernel_fields(radial, np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return _tensor_from_fields(medium, f)


def _tensor_from_fields(medium: ElasticMedium, f) -> np.ndarray:
    """E from fields (10, ...) -> (..., 2, 2); works for moments as well as point values."""
    c = 1j / (4.0 * medium.rho_omega2)
    diag = 1j / (4.0 * medium.mu) * f[F_H0S] - c * f[F_A]
    E = np.empty(f.shape[1:] + (2, 2), dtype=complex)
    E[..., 0, 0] = diag + c * f[F_BXX]
    E[..., 0, 1] = c * f[F_BXY]
    E[..., 1, 0] = c * f[F_BXY]
    E[..., 1, 1] = diag + c * f[F_BYY]
    return E


def _outer(u, v):
    return u[..., :, None] * v[..., None, :]


def local_blocks(medium: ElasticMedium, mom: np.ndarray, geo1, geo2, ops=OPERATORS) -> dict:
    """Element-pair blocks from field moments.

    ``mom`` has shape (P, 10, 9) and already carries the quadrature weights;
    ``geo1``/``geo2`` are (h, t, n) tuples of arrays for test and trial segments.
    Returns V, Kp with shape (P, 2, 2, 2) indexed [p, a] and K, W with shape
    (P, 2, 2, 2, 2) indexed [p, a, b]; a is the local test node, b the trial node.
    """
    h1, t1, n1 = geo1
    h2, t2, n2 = geo2
    mu, lam = medium.mu, medium.lam
    J = (0.25 * h1 * h2)[:, None, None]
    f = np.moveaxis(mom, 1, 0)  # (10, P, 9)
    E = _tensor_from_fields(medium, f)  # (P, 9, 2, 2)
    Gs = 0.25j * f[F_H0S]
    Gp = 0.25j * f[F_H0P]
    gradx = -0.25j * np.stack([f[F_ARX], f[F_ARY]], axis=-1)  # (P, 9, 2)
    Dr = np.stack([f[F_DRX], f[F_DRY]], axis=-1)
    I = IDENTITY2
    N = ROT
    out = {}
    if "Kp" in ops or "K" in ops:
        S = 2 * mu * E - Gs[..., None, None] * I
    if "V" in ops:
        out["V"] = np.stack([J * E[:, c_test(a)] for a in (0, 1)], axis=1)
    if "Kp" in ops:
        dnx = -0.25j * np.einsum("pcj,pj->pc", Dr, n1)
        blocks = []
        for a in (0, 1):
            c = c_test(a)
            # N^T = -N after moving the arc derivative onto the test function
            blk = dnx[:, c, None, None] * I - _outer(n1, gradx[:, c]) - (SIGNS[a] / h1)[:, None, None] * (N @ S[:, C_ONE])
            blocks.append(J * blk)
        out["Kp"] = np.stack(blocks, axis=1)
    if "K" in ops:
        dny = 0.25j * np.einsum("pcj,pj->pc", Dr, n2)
        K = np.empty((len(h1), 2, 2, 2, 2), dtype=complex)
        for a in (0, 1):
            SN = S[:, c_test(a)] @ N
            for b in (0, 1):
                c = c_pair(a, b)
                K[:, a, b] = J * (dny[:, c, None, None] * I + _outer(gradx[:, c], n2) + (SIGNS[b] / h2)[:, None, None] * SN)
        out["K"] = K
    if "W" in ops:
        ks2 = medium.k_s**2
        n1n2 = _outer(n1, n2)
        dot_nn = np.sum(n1 * n2, axis=-1)[:, None, None]
        dot_nt = np.sum(n1 * t2, axis=-1)[:, None, None]
        arc = 4 * mu * mu * E[:, C_ONE] - (4 * mu * mu / (lam + 2 * mu)) * Gp[:, C_ONE, None, None] * I
        W = np.empty((len(h1), 2, 2, 2, 2), dtype=complex)
        for a in (0, 1):
            mixed_x = _outer(n1, gradx[:, c_test(a)] @ N)  # n1 (N^T gradx)^T
            for b in (0, 1):
                c = c_pair(a, b)
                gs = Gs[:, c, None, None]
                R = (Gs[:, c] - Gp[:, c])[:, None, None]
                mass = mu * ks2 * (R * n1n2 - dot_nn * gs * I + dot_nt * gs * N)
                # -N grad_y R n2^T with grad_y R = -grad_x R
                mixed_y = _outer(np.einsum("ij,pj->pi", N, gradx[:, c_trial(b)]), n2)
                W[:, a, b] = J * (
                    mass
                    + (SIGNS[a] * SIGNS[b] / (h1 * h2))[:, None, None] * arc
                    + 2 * mu * (SIGNS[b] / h2)[:, None, None] * mixed_x
                    + 2 * mu * (SIGNS[a] / h1)[:, None, None] * mixed_y
                )
        out["W"] = W
    return out


# ---------------------------------------------------------------------------
# Pair moments
# ---------------------------------------------------------------------------

def _rule_arrays(rule: PairRule):
    return rule.xi1, rule.xi2, weight_combos(rule.xi1, rule.xi2) * rule.w[:, None]


def quadrature_moments(ctx: KernelContext, e1: np.ndarray, e2: np.ndarray, rule: PairRule) -> np.ndarray:
    """Field moments (P, 10, 9) for element pairs by a fixed reference-square rule."""
    mesh = ctx.mesh
    xi1, xi2, Wc = _rule_arrays(rule)
    a1, b1 = mesh.nodes[e1], mesh.nodes[mesh.next[e1]]
    a2, b2 = mesh.nodes[e2], mesh.nodes[mesh.next[e2]]
    s1 = 0.5 * (1 + xi1)
    s2 = 0.5 * (1 + xi2)
    rvec = (a1 - a2)[:, None, :] + s1[None, :, None] * (b1 - a1)[:, None, :] - s2[None, :, None] * (b2 - a2)[:, None, :]
    f = kernel_fields(ctx.radial, rvec)  # (10, P, Q)
    f = np.moveaxis(f, 0, 1).reshape(-1, rule.size)
    mom = (f.real @ Wc) + 1j * (f.imag @ Wc)
    return mom.reshape(len(e1), N_FIELDS, 9)


def series_moments(ctx: KernelContext, elems: np.ndarray) -> np.ndarray:
    """Exact same-element field moments (P, 10, 9) from the kernel series and moment integrals."""
    mesh = ctx.mesh
    co = ctx.coeffs
    M = co.M
    Pt, Lt = ctx.moment_tables()
    rho = 0.5 * mesh.lengths[elems]
    lnr = np.log(rho)
    t = mesh.tangents[elems]
    m = np.arange(M + 1)
    out = np.zeros((len(elems), N_FIELDS, 9), dtype=complex)

    def h0_moment(k):
        pw = (k * rho)[:, None] ** (2 * m)
        lk = np.log(0.5 * k * rho)[:, None]
        # H0(k r) = sum (C5 + C6 ln(k/2) + C6 ln r) (k r)^(2m); r = rho |d|
        return ((co.c5 + co.c6 * lk) * pw) @ Pt[0::2][: M + 1] + (co.c6 * pw) @ Lt[0::2][: M + 1]

    out[:, F_H0S] = h0_moment(co.k_s)
    out[:, F_H0P] = h0_moment(co.k_p)
    pw_even = rho[:, None] ** (2 * m)
    out[:, F_A] = ((co.c1 + co.c2 * lnr[:, None]) * pw_even) @ Pt[0::2][: M + 1] + (co.c2 * pw_even) @ Lt[0::2][: M + 1]
    ar = ((co.c1 + co.c2 * lnr[:, None]) * pw_even * rho[:, None]) @ Pt[1::2][: M + 1] + (
        co.c2 * pw_even * rho[:, None]
    ) @ Lt[1::2][: M + 1]
    out[:, F_ARX] = ar * t[:, 0, None]
    out[:, F_ARY] = ar * t[:, 1, None]
    pw2 = rho[:, None] ** (2 * m + 2)
    brr = (
        co.f2_constant * Pt[0][None, :]
        + ((co.c3 + co.c4 * lnr[:, None]) * pw2) @ Pt[2::2][: M + 1]
        + (co.c4 * pw2) @ Lt[2::2][: M + 1]
    )
    out[:, F_BXX] = brr * (t[:, 0] ** 2)[:, None]
    out[:, F_BXY] = brr * (t[:, 0] * t[:, 1])[:, None]
    out[:, F_BYY] = brr * (t[:, 1] ** 2)[:, None]
    # D r is parallel to the element and only enters through r . n = 0
    return out


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def _geo(mesh: BoundaryMesh, e):
    return mesh.lengths[e], mesh.tangents[e], mesh.normals[e]


def classify_pairs(mesh: BoundaryMesh, e1: np.ndarray, e2: np.ndarray, near_factor: float = 1.0) -> dict:
    """Split pairs into same / next / prev / near / regular index sets."""
    same = e1 == e2
    nxt = mesh.next[e1] == e2
    prv = (mesh.prev[e1] == e2) & ~nxt
    mid = mesh.midpoints
    h = mesh.lengths
    sep = np.hypot(*(mid[e1] - mid[e2]).T) - 0.5 * (h[e1] + h[e2])
    near = (sep < near_factor * np.maximum(h[e1], h[e2])) & ~(same | nxt | prv)
    regular = ~(same | nxt | prv | near)
    return {"same": np.flatnonzero(same), "next": np.flatnonzero(nxt), "prev": np.flatnonzero(prv),
            "near": np.flatnonzero(near), "regular": np.flatnonzero(regular)}


def _pair_blocks(ctx: KernelContext, e1, e2, ops):
    """Local blocks for an arbitrary list of distinct element pairs, by category."""
    cats = classify_pairs(ctx.mesh, e1, e2, ctx.near_factor)
    rules = {
        "regular": tensor_rule(ctx.gauss_order),
        "near": tensor_rule(ctx.near_order),
        "next": corner_rule((1, -1), ctx.corner_order, ctx.grading_depth),
        "prev": corner_rule((-1, 1), ctx.corner_order, ctx.grading_depth),
    }
    results = []
    for name in ("regular", "near", "next", "prev", "same"):
        idx = cats[name]
        if idx.size == 0:
            continue
        p1, p2 = e1[idx], e2[idx]
        if name == "same":
            mom = series_moments(ctx, p1)
        else:
            mom = quadrature_moments(ctx, p1, p2, rules[name])
        results.append((p1, p2, local_blocks(ctx.medium, mom, _geo(ctx.mesh, p1), _geo(ctx.mesh, p2), ops)))
    return results


def _scatter(mesh: BoundaryMesh, targets, p1, p2, blocks):
    node = (lambda e, a: e if a == 0 else mesh.next[e])
    for mat, weights in targets:
        view = mat.blocks
        for op, coef in weights.items():
            if op not in blocks:
                continue
            loc = blocks[op]
            for a in (0, 1):
                rows = node(p1, a)
                if op in ("V", "Kp"):
                    view[rows, :, p2, :] += coef * loc[:, a]
                else:
                    for b in (0, 1):
                        view[rows, :, node(p2, b), :] += coef * loc[:, a, b]


def assemble(ctx: KernelContext, targets, chunk_points: int = 400_000) -> None:
    """Accumulate operator blocks into target matrices.

    ``targets`` is a list of ``(BlockMatrix, {op: coefficient})`` with op in
    V, K, Kp, W.  Rows are test nodes; columns are trial nodes (K, W) or
    trial segments (V, Kp).
    """
    mesh = ctx.mesh
    n = mesh.n_nodes
    ops = tuple(sorted({op for _, w in targets for op in w}))
    bad = set(ops) - set(OPERATORS)
    if bad:
        raise ValueError(f"unknown operators {sorted(bad)}")
    per_row = n * ctx.gauss_order**2
    cs = max(1, chunk_points // max(per_row, 1))
    chunks = [np.arange(s, min(s + cs, n)) for s in range(0, n, cs)]
    all_e = np.arange(n)

    def work(chunk):
        e1 = np.repeat(chunk, n)
        e2 = np.tile(all_e, len(chunk))
        return _pair_blocks(ctx, e1, e2, ops)

    if ctx.threads > 1:
        with ThreadPoolExecutor(ctx.threads) as pool:
            for res in pool.map(work, chunks):
                for p1, p2, blocks in res:
                    _scatter(mesh, targets, p1, p2, blocks)
    else:
        for chunk in chunks:
            for p1, p2, blocks in work(chunk):
                _scatter(mesh, targets, p1, p2, blocks)


def assemble_operators(ctx: KernelContext, ops=OPERATORS) -> dict:
    mats = {op: BlockMatrix(ctx.mesh.n_nodes) for op in ops}
    assemble(ctx, [(mats[op], {op: 1.0}) for op in ops])
    return mats


def assemble_single_layer(ctx: KernelContext) -> BlockMatrix:
    return assemble_operators(ctx, ("V",))["V"]


def assemble_double_layer(ctx: KernelContext) -> BlockMatrix:
    return assemble_operators(ctx, ("K",))["K"]


def assemble_adjoint_double_layer(ctx: KernelContext) -> BlockMatrix:
    return assemble_operators(ctx, ("Kp",))["Kp"]


def assemble_hypersingular(ctx: KernelContext) -> BlockMatrix:
    return assemble_operators(ctx, ("W",))["W"]


def assemble_mass(ctx_or_mesh) -> tuple[BlockMatrix, BlockMatrix]:
    """Exact Gram matrices <phi_j, phi_i> I and <psi_j, phi_i> I."""
    mesh = ctx_or_mesh.mesh if isinstance(ctx_or_mesh, KernelContext) else ctx_or_mesh
    n = mesh.n_nodes
    h = mesh.lengths
    i = np.arange(n)
    prev = mesh.prev
    I1 = BlockMatrix(n)
    I2 = BlockMatrix(n)
    v1, v2 = I1.blocks, I2.blocks
    eye = IDENTITY2[None]
    v1[i, :, i, :] += ((h[prev] + h) / 3.0)[:, None, None] * eye
    v1[i, :, mesh.next, :] += (h / 6.0)[:, None, None] * eye
    v1[i, :, prev, :] += (h[prev] / 6.0)[:, None, None] * eye
    v2[i, :, i, :] += (h / 2.0)[:, None, None] * eye
    v2[i, :, prev, :] += (h[prev] / 2.0)[:, None, None] * eye
    return I1, I2


def dump_matrix_csv(matrix, path, tol: float = 0.0) -> int:
    """Write entries with |a_ij| > tol as (row, col, re, im); returns the row count."""
    data = np.asarray(matrix)
    rows, cols = np.nonzero(np.abs(data) > tol)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for r, c in zip(rows, cols):
            v = data[r, c]
            w.writerow([int(r), int(c), repr(float(v.real)), repr(float(v.imag))])
    return len(rows)
