"""Gauss-Legendre rules and the moment integrals used by same-element blocks.

The six moment families over the reference square [-1, 1]^2, with d = xi1 - xi2:

    I1[m] = int d^(2m+1) xi1              I2[m] = int d^(2m+1) xi1 ln|d|
    I3[m] = int d^(2m)                    I4[m] = int d^(2m) ln|d|
    I5[m] = int d^(2m) xi1 xi2            I6[m] = int d^(2m) xi1 xi2 ln|d|

Every value has the exact form A + B ln 2 with rational A, B; ``exact_moment``
computes them by reducing the square to an integral over |d|.  ``oracle_moment``
is an independent brute-force 2D quadrature in extended precision.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np

logger = logging.getLogger(__name__)

MAX_GAUSS_ORDER = 64
KINDS = (1, 2, 3, 4, 5, 6)


@dataclass(frozen=True)
class GaussRule:
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f, a: float = -1.0, b: float = 1.0) -> float:
        half = 0.5 * (b - a)
        return half * np.sum(self.weights * f(0.5 * (a + b) + half * self.nodes))


def _legendre_newton(n: int, tol: float = 1e-15):
    """Nodes and weights by Newton iteration on P_n, started from Chebyshev-like guesses."""
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        p0, p1 = np.ones_like(x), x.copy()
        for j in range(2, n + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        if n == 1:
            p0, p1 = np.ones_like(x), x.copy()
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    p0, p1 = np.ones_like(x), x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> GaussRule:
    """n-point Gauss-Legendre rule on [-1, 1], exact to polynomial degree 2n-1."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_GAUSS_ORDER:
        raise ValueError(f"unsupported Gauss order {n!r} (1..{MAX_GAUSS_ORDER})")
    if n == 1:
        x, w = np.zeros(1), np.full(1, 2.0)
    else:
        x, w = _legendre_newton(int(n))
    x.setflags(write=False)
    w.setflags(write=False)
    return GaussRule(int(n), x, w)


@dataclass(frozen=True)
class PairRule:
    """Quadrature rule on the reference square, ``sum w f(xi1, xi2)``."""

    xi1: np.ndarray
    xi2: np.ndarray
    w: np.ndarray

    @property
    def size(self) -> int:
        return self.w.size


@lru_cache(maxsize=None)
def tensor_rule(n: int) -> PairRule:
    g = gauss_legendre(n)
    a, b = np.meshgrid(g.nodes, g.nodes, indexing="ij")
    w = np.outer(g.weights, g.weights)
    return PairRule(a.ravel(), b.ravel(), w.ravel())


@lru_cache(maxsize=None)
def corner_rule(corner: tuple[int, int], n: int = 8, depth: int = 8) -> PairRule:
    """Rule for integrands with a point singularity at a corner of the square.

    The square is cut into two triangles through ``corner``; each is mapped to
    the unit square by a Duffy collapse (Jacobian proportional to the radial
    variable, which absorbs 1/r behaviour), and the radial variable is graded
    dyadically ``depth`` times toward the corner to resolve r log r.
    """
    c = np.array(corner, dtype=float)
    if not np.all(np.abs(c) == 1):
        raise ValueError(f"corner must have entries +-1, got {corner}")
    g = gauss_legendre(n)
    # radial cells in (0, 1]
    edges = [0.0] + [2.0 ** (-l) for l in range(depth, -1, -1)]
    u_nodes, u_w = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        u_nodes.append(0.5 * (a + b) + 0.5 * (b - a) * g.nodes)
        u_w.append(0.5 * (b - a) * g.weights)
    u = np.concatenate(u_nodes)
    uw = np.concatenate(u_w)
    v = 0.5 * (1.0 + g.nodes)
    vw = 0.5 * g.weights
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(uw, vw)
    opp = -c
    xs, ys, ws = [], [], []
    for p in (np.array([-c[0], c[1]]), np.array([c[0], -c[1]])):
        e1 = p - c
        e2 = opp - p
        jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
        pts = c[None, None, :] + U[..., None] * (e1[None, None, :] + V[..., None] * e2[None, None, :])
        xs.append(pts[..., 0].ravel())
        ys.append(pts[..., 1].ravel())
        ws.append((W * U * jac).ravel())
    return PairRule(np.concatenate(xs), np.concatenate(ys), np.concatenate(ws))


# ---------------------------------------------------------------------------
# Moment integrals
# ---------------------------------------------------------------------------

def _weight_poly(m: int, kind: int) -> tuple[dict[int, Fraction], bool]:
    """Integrand over u = |xi1 - xi2| in (0, 2] as {power: coefficient}, plus log flag.

    For fixed d the inner integral over the diagonal strip of the square gives
    length 2-|d| (weight 1), (2-|d|) d/2 (weight xi1) and
    2a^3/3 - d^2 a/2 with a = 1-|d|/2 (weight xi1 xi2).  Both halves d > 0 and
    d < 0 contribute equally for every family.
    """
    if kind not in KINDS:
        raise ValueError(f"moment kind must be in 1..6, got {kind}")
    if kind in (1, 2):
        base, poly = 2 * m + 2, {0: Fraction(2), 1: Fraction(-1)}
    elif kind in (3, 4):
        base, poly = 2 * m, {0: Fraction(4), 1: Fraction(-2)}
    else:
        base, poly = 2 * m, {0: Fraction(4, 3), 1: Fraction(-2), 3: Fraction(1, 3)}
    return {base + p: c for p, c in poly.items()}, kind % 2 == 0


def exact_moment_parts(m: int, kind: int) -> tuple[Fraction, Fraction]:
    """Rationals ``(A, B)`` with I_kind[m] = A + B ln 2."""
    poly, has_log = _weight_poly(m, kind)
    A, B = Fraction(0), Fraction(0)
    for p, c in poly.items():
        scale = Fraction(2 ** (p + 1))
        if has_log:
            B += c * scale / (p + 1)
            A -= c * scale / (p + 1) ** 2
        else:
            A += c * scale / (p + 1)
    return A, B


def exact_moment(m: int, kind: int, dps: int = 40) -> mpmath.mpf:
    A, B = exact_moment_parts(m, kind)
    with mpmath.workdps(dps):
        return mpmath.mpf(A.numerator) / A.denominator + mpmath.mpf(B.numerator) / B.denominator * mpmath.log(2)


def printed_moment(m: int, kind: int) -> float:
    """Published closed forms, transcribed as printed."""
    comb = math.comb
    ln2 = math.log(2.0)
    if kind == 1:
        return math.fsum(
            (-1) ** (l + 1) * comb(2 * m + 1, l) * (1 - (-1) ** l) ** 2 / ((l + 2) * (2 * m + 2 - l))
            for l in range(2 * m + 2)
        )
    if kind == 2:
        s = math.fsum(comb(2 * m + 2, l) * (1 - (-1) ** l) / (l + 2) for l in range(2 * m + 3))
        return (
            s / (2 * (m + 1) ** 2)
            + 2 ** (2 * m + 3) * ln2 / ((m + 2) * (2 * m + 3))
            - (6 * m * m + 18 * m + 13) * 2 ** (2 * m + 3) / ((m + 1) * (2 * m + 3) ** 2 * (m + 2))
        )
    if kind == 3:
        return 2 ** (2 * m + 2) / ((2 * m + 1) * (m + 1))
    if kind == 4:
        return 2 ** (2 * m + 2) * ln2 / ((2 * m + 1) * (m + 1)) - (4 * m + 3) * 2 ** (2 * m + 1) / (
            (2 * m + 1) ** 2 * (m + 1) ** 2
        )
    if kind == 5:
        return math.fsum(
            (-1) ** l * comb(2 * m, l) * (1 - (-1) ** l) ** 2 / ((l + 2) * (2 * m + 2 - l))
            for l in range(2 * m + 1)
        )
    if kind == 6:
        pre = 1.0 / ((m + 1) ** 2 * (2 * m + 1) ** 2)
        odd = math.fsum(comb(2 * m + 1, l) * (2 * m + 1) ** 2 / (l + 2) for l in range(1, 2 * m + 2, 2))
        even = math.fsum(comb(2 * m + 1, l) * (4 * m + 3) / (l + 3) for l in range(0, 2 * m + 1, 2))
        return (
            -m * 2 ** (2 * m + 2) * ln2 / ((2 * m + 1) * (m + 1) * (m + 2))
            - (
                2 ** (2 * m + 2) / (m + 2) ** 2
                + 2 ** (2 * m + 1) / (m + 1)
                - 2 ** (2 * m + 3) / (2 * m + 3)
            )
            / ((2 * m + 1) * (m + 1))
            + pre * odd
            - pre * even
        )
    raise ValueError(f"moment kind must be in 1..6, got {kind}")


@lru_cache(maxsize=None)
def _mp_gauss(n: int, dps: int):
    """Gauss-Legendre nodes/weights on [-1, 1] at ``dps`` digits (Newton on P_n)."""
    with mpmath.workdps(dps + 10):
        xs, ws = [], []
        for k in range(1, n + 1):
            x = mpmath.cos(mpmath.pi * (k - mpmath.mpf(1) / 4) / (n + mpmath.mpf(1) / 2))
            for _ in range(100):
                p0, p1 = mpmath.mpf(1), x
                for j in range(2, n + 1):
                    p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
                dp = n * (x * p1 - p0) / (x * x - 1)
                dx = p1 / dp
                x -= dx
                if abs(dx) < mpmath.mpf(10) ** (-(dps + 5)):
                    break
            p0, p1 = mpmath.mpf(1), x
            for j in range(2, n + 1):
                p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
            dp = n * (x * p1 - p0) / (x * x - 1)
            xs.append(x)
            ws.append(2 / ((1 - x * x) * dp * dp))
        return tuple(xs), tuple(ws)


@lru_cache(maxsize=None)
def _oracle_points(depth: int, dps: int):
    """Brute-force points on the square split along xi1 = xi2.

    Each triangle is parametrized by u = |xi1 - xi2| and a position tau along
    the strip; u is graded dyadically toward the diagonal.
    """
    with mpmath.workdps(dps):
        g_top, g_low, g_tau = _mp_gauss(24, dps), _mp_gauss(12, dps), _mp_gauss(3, dps)
        two = mpmath.mpf(2)
        cells = [(two / 2, two, g_top), (two / 4, two / 2, g_top)]
        for l in range(2, depth):
            cells.append((two / 2 ** (l + 1), two / 2**l, g_low))
        cells.append((mpmath.mpf(0), two / 2**depth, g_low))
        pts = []
        for a, b, (xn, wn) in cells:
            half, mid = (b - a) / 2, (a + b) / 2
            for xu, wu in zip(xn, wn):
                u = mid + half * xu
                lnu = mpmath.log(u)
                span = (2 - u) / 2
                for xt, wt in zip(*g_tau):
                    lo = u - 1
                    s = lo + span * (1 + xt)
                    w = half * wu * wt * span
                    # xi1 > xi2: (xi1, xi2) = (s, s - u); mirror: (s - u, s)
                    for x1, x2, d in ((s, s - u, u), (s - u, s, -u)):
                        pts.append((d, x1, x2, lnu, w))
        return pts


def oracle_moments(M: int, depth: int = 44, dps: int = 32) -> dict[int, list]:
    """All six families for m = 0..M by brute-force graded quadrature (mpmath values)."""
    pts = _oracle_points(depth, dps)
    out = {k: [mpmath.mpf(0)] * (M + 1) for k in KINDS}
    with mpmath.workdps(dps):
        acc = {k: [mpmath.mpf(0)] * (M + 1) for k in KINDS}
        for d, x1, x2, lnu, w in pts:
            d2 = d * d
            w1 = w * d * x1
            w1l = w1 * lnu
            w3l = w * lnu
            p5 = x1 * x2
            w5 = w * p5
            w5l = w5 * lnu
            s = mpmath.mpf(1)
            for m in range(M + 1):
                a1, a2, a3, a4, a5, a6 = acc[1], acc[2], acc[3], acc[4], acc[5], acc[6]
                a1[m] += s * w1
                a2[m] += s * w1l
                a3[m] += s * w
                a4[m] += s * w3l
                a5[m] += s * w5
                a6[m] += s * w5l
                s *= d2
        for k in KINDS:
            out[k] = [+v for v in acc[k]]
    return out


def oracle_moment(m: int, kind: int) -> mpmath.mpf:
    """Brute-force value of one moment integral (absolute accuracy well below 1e-12)."""
    if kind not in KINDS:
        raise ValueError(f"moment kind must be in 1..6, got {kind}")
    if not 0 <= m <= 20:
        raise ValueError(f"oracle supports 0 <= m <= 20, got {m}")
    return _cached_oracle(20)[kind][m]


@lru_cache(maxsize=None)
def _cached_oracle(M: int):
    return oracle_moments(M)


@dataclass(frozen=True)
class SingularTable:
    """Moment integrals I1..I6 for m = 0..M+1 as float64 arrays (index = m)."""

    M: int
    I1: np.ndarray
    I2: np.ndarray
    I3: np.ndarray
    I4: np.ndarray
    I5: np.ndarray
    I6: np.ndarray

    def family(self, kind: int) -> np.ndarray:
        return (self.I1, self.I2, self.I3, self.I4, self.I5, self.I6)[kind - 1]


@lru_cache(maxsize=None)
def singular_table(M: int = 20, verify: bool = True, tol: float = 1e-10) -> SingularTable:
    """Moment table up to index M+1.

    With ``verify`` each exact value is compared in extended precision with
    the brute-force oracle (for indices the oracle covers); on disagreement
    the oracle value is used and the mismatch logged.
    """
    if not isinstance(M, (int, np.integer)) or M < 0:
        raise ValueError(f"table depth must be a non-negative integer, got {M!r}")
    top = M + 1
    fams = {k: np.empty(top + 1) for k in KINDS}
    oracle = _cached_oracle(20) if verify else None
    for k in KINDS:
        for m in range(top + 1):
            val = exact_moment(m, k)
            if oracle is not None and m <= 20:
                ref = oracle[k][m]
                if abs(val - ref) > tol:
                    logger.warning("moment I%d[%d]: closed form %s vs oracle %s", k, m, val, ref)
                    val = ref
            fams[k][m] = float(val)
    for arr in fams.values():
        arr.setflags(write=False)
    return SingularTable(int(M), *(fams[k] for k in KINDS))


@lru_cache(maxsize=None)
def diagonal_rule(n: int = 16, depth: int = 30) -> PairRule:
    """Rule for integrands log-singular along xi1 = xi2 (float64 analogue of the oracle split)."""
    g = gauss_legendre(n)
    gt = gauss_legendre(4)
    edges = [0.0] + [2.0 * 2.0 ** (-l) for l in range(depth, -1, -1)]
    us, uw = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        us.append(0.5 * (a + b) + 0.5 * (b - a) * g.nodes)
        uw.append(0.5 * (b - a) * g.weights)
    u = np.concatenate(us)
    wu = np.concatenate(uw)
    span = 0.5 * (2.0 - u)
    s = (u - 1.0)[:, None] + span[:, None] * (1.0 + gt.nodes[None, :])
    w = (wu * span)[:, None] * gt.weights[None, :]
    x1 = np.concatenate([s.ravel(), (s - u[:, None]).ravel()])
    x2 = np.concatenate([(s - u[:, None]).ravel(), s.ravel()])
    return PairRule(x1, x2, np.concatenate([w.ravel(), w.ravel()]))
