"""Bessel/Hankel evaluation and the small-argument series of the kernel functions.

The elastic fundamental tensor is built from three radial combinations

    F1(r) = k_s H1(k_s r) - k_p H1(k_p r)
    F2(r) = k_s^2 H2(k_s r) - k_p^2 H2(k_p r)
    F3(r) = H0(k r)

Near r = 0 each one is a power series in r plus a power series times ln r
(the 1/r and 1/r^2 poles of H1, H2 cancel between the two wavenumbers).
``series_coefficients`` builds those series from the ascending expansions of
J_n and Y_n; ``printed_coefficients`` keeps the closed forms as they were
published so the two can be compared term by term.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import special

from .core import DomainError, ElasticMedium, InvalidMediumError

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286

# Below this value of k_s*r the kernel combinations are summed from the series;
# the direct Hankel difference loses about -2*log10(k_s r) digits to cancellation.
SERIES_SWITCH = 0.5
SWITCH_TERMS = 14


def _check_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("Bessel argument must be strictly positive")
    return x


def bessel_jy(n: int, x):
    """Return ``(J_n(x), Y_n(x))`` for n in {0, 1, 2} and x > 0.

    Accepts scalars or arrays; backed by the Cephes routines in scipy.
    """
    if n not in (0, 1, 2):
        raise DomainError(f"unsupported Bessel order {n}")
    xa = _check_positive(x)
    if n == 0:
        j, y = special.j0(xa), special.y0(xa)
    elif n == 1:
        j, y = special.j1(xa), special.y1(xa)
    else:
        j, y = special.jv(2, xa), special.yv(2, xa)
    if np.ndim(x) == 0:
        return float(j), float(y)
    return j, y


def hankel1(n: int, x):
    """First-kind Hankel function H_n^(1)(x) = J_n(x) + i Y_n(x)."""
    j, y = bessel_jy(n, x)
    if np.ndim(x) == 0:
        return complex(j, y)
    return j + 1j * y


def _harmonic(m: int) -> float:
    return math.fsum(1.0 / l for l in range(1, m + 1))


def hankel_ascending_terms(n: int, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Regular part of the ascending series of H_n^(1).

    Returns arrays ``(a, b)`` of length M+1 with

        H_n(z) = (principal part) + sum_m (z/2)^(2m+n) * (a[m] + b[m] ln(z/2)).

    Uses J_n = sum (-1)^m (z/2)^(2m+n) / (m!(m+n)!) and the Neumann series of
    Y_n with psi(j+1) = -gamma + H_j.
    """
    a = np.empty(M + 1, dtype=complex)
    b = np.empty(M + 1, dtype=complex)
    for m in range(M + 1):
        coef = (-1) ** m / (factorial(m) * factorial(m + n))
        psi_sum = -2.0 * EULER_GAMMA + _harmonic(m) + _harmonic(m + n)
        a[m] = coef * (1.0 - 1j * psi_sum / math.pi)
        b[m] = coef * 2j / math.pi
    return a, b


@dataclass(frozen=True)
class SeriesCoefficients:
    """Coefficients C1..C6 of the kernel series for one pair of wavenumbers.

    F1(r) = sum (C1[m] + C2[m] ln r) r^(2m+1)
    F2(r) = sum (C3[m] + C4[m] ln r) r^(2m+2) - i (k_s^2 - k_p^2) / pi
    H0(k r) = sum ((C5[m] + C6[m] ln(k/2)) + C6[m] ln r) k^(2m) r^(2m)
    """

    M: int
    k_p: float
    k_s: float
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    c4: np.ndarray
    c5: np.ndarray
    c6: np.ndarray
    printed_mismatch: tuple = field(default=(), compare=False)

    @property
    def f2_constant(self) -> complex:
        return -1j * (self.k_s**2 - self.k_p**2) / math.pi

    def family(self, j: int) -> np.ndarray:
        return (self.c1, self.c2, self.c3, self.c4, self.c5, self.c6)[j - 1]


def _wavenumbers(medium_or_k) -> tuple[float, float]:
    if isinstance(medium_or_k, ElasticMedium):
        return medium_or_k.k_p, medium_or_k.k_s
    k_p, k_s = medium_or_k
    if not (k_p > 0 and k_s > 0):
        raise InvalidMediumError(f"wavenumbers must be positive, got {medium_or_k}")
    return float(k_p), float(k_s)


def derived_coefficients(k_p: float, k_s: float, M: int) -> dict[str, np.ndarray]:
    """C1..C6 assembled from the ascending Hankel series (no published forms used)."""
    a0, b0 = hankel_ascending_terms(0, M)
    a1, b1 = hankel_ascending_terms(1, M)
    a2, b2 = hankel_ascending_terms(2, M)
    m = np.arange(M + 1)
    out = {}
    # k H1(k r): k (k/2)^(2m+1) r^(2m+1) (a + b ln(k/2) + b ln r)
    s1 = k_s ** (2 * m + 2) / 2.0 ** (2 * m + 1)
    p1 = k_p ** (2 * m + 2) / 2.0 ** (2 * m + 1)
    out["C1"] = s1 * (a1 + b1 * math.log(k_s / 2)) - p1 * (a1 + b1 * math.log(k_p / 2))
    out["C2"] = (s1 - p1) * b1
    # k^2 H2(k r): k^2 (k/2)^(2m+2) r^(2m+2) (...)
    s2 = k_s ** (2 * m + 4) / 2.0 ** (2 * m + 2)
    p2 = k_p ** (2 * m + 4) / 2.0 ** (2 * m + 2)
    out["C3"] = s2 * (a2 + b2 * math.log(k_s / 2)) - p2 * (a2 + b2 * math.log(k_p / 2))
    out["C4"] = (s2 - p2) * b2
    out["C5"] = a0 / 2.0 ** (2 * m)
    out["C6"] = b0 / 2.0 ** (2 * m)
    return out


def printed_coefficients(k_p: float, k_s: float, M: int) -> dict[str, np.ndarray]:
    """C1..C6 transcribed literally from the published closed forms, typos included."""
    c = EULER_GAMMA
    ls, lp = math.log(k_s / 2), math.log(k_p / 2)
    out = {key: np.empty(M + 1, dtype=complex) for key in ("C1", "C2", "C3", "C4", "C5", "C6")}
    for m in range(M + 1):
        fm, fm1, fm2, fm3 = factorial(m), factorial(m + 1), factorial(m + 2), factorial(m + 3)
        d2 = k_s ** (2 * m + 2) - k_p ** (2 * m + 2)
        d4 = k_s ** (2 * m + 4) - k_p ** (2 * m + 4)
        hsum = _harmonic(m)
        log2 = 2j / math.pi * (k_s ** (2 * m + 2) * ls - k_p ** (2 * m + 2) * lp)
        log4 = 2j / math.pi * (k_s ** (2 * m + 4) * ls - k_p ** (2 * m + 4) * lp)
        if m == 0:
            out["C1"][m] = d2 / 2 * (1 + 2j * c / math.pi - 1j / math.pi) + log2
            out["C3"][m] = d4 / 8 * (1 + 2j * c / math.pi - 3j / (2 * math.pi)) + log4
            out["C5"][m] = 1 + 2j * c / math.pi
        else:
            out["C1"][m] = (-1) ** m * d2 / (2 ** (2 * m + 1) * fm * fm1) * (
                1 + 2j * c / math.pi - 1j / math.pi * (2 * hsum + 1 / (m + 1))
            ) + log2
            out["C3"][m] = (-1) ** m * d4 / (2 ** (2 * m + 2) * fm * fm2) * (
                1 + 2j * c / math.pi - 1j / math.pi * (2 * hsum + 1 / (m + 2))
            ) + log4
            out["C5"][m] = (-1) ** m / (2 ** (2 * m) * fm * fm) * (
                1 + 2j * c / math.pi - 2j / math.pi * hsum
            )
        out["C2"][m] = 2j * (-1) ** m / (math.pi * 2 ** (2 * m + 1) * fm * fm1) * d2
        out["C4"][m] = 2j * (-1) ** m / (math.pi * 2 ** (2 * m + 3) * fm * fm3) * d4
        out["C6"][m] = 2j * (-1) ** m / (math.pi * 2 ** (2 * m) * fm * fm)
    return out


def compare_with_printed(derived: dict, printed: dict, rtol: float = 1e-12) -> dict[str, list[int]]:
    """Per family, the indices m where the published value disagrees with the derived one."""
    bad = {}
    for key in derived:
        d, p = derived[key], printed[key]
        scale = np.maximum(np.abs(d), np.finfo(float).tiny)
        bad[key] = [int(m) for m in np.nonzero(np.abs(d - p) > rtol * scale)[0]]
    return bad


def series_coefficients(medium, M: int = 20) -> SeriesCoefficients:
    """Series coefficients for ``medium`` (an ElasticMedium or a ``(k_p, k_s)`` pair).

    The ascending-series derivation is authoritative; families whose published
    closed form disagrees are recorded in ``printed_mismatch`` and logged.
    """
    if not isinstance(M, (int, np.integer)) or M < 0:
        raise ValueError(f"truncation order must be a non-negative integer, got {M!r}")
    k_p, k_s = _wavenumbers(medium)
    derived = derived_coefficients(k_p, k_s, int(M))
    mismatch = compare_with_printed(derived, printed_coefficients(k_p, k_s, int(M)))
    flagged = tuple((key, tuple(ms)) for key, ms in mismatch.items() if ms)
    if flagged:
        logger.debug("published coefficients differ from ascending-series values: %s", flagged)
    return SeriesCoefficients(
        M=int(M),
        k_p=k_p,
        k_s=k_s,
        c1=derived["C1"],
        c2=derived["C2"],
        c3=derived["C3"],
        c4=derived["C4"],
        c5=derived["C5"],
        c6=derived["C6"],
        printed_mismatch=flagged,
    )


def _check_r(r):
    ra = np.asarray(r, dtype=float)
    if np.any(~(ra > 0)):
        raise DomainError("distance r must be strictly positive")
    return ra


def _finish(val, r):
    return complex(val) if np.ndim(r) == 0 else val


def f1_series(coeffs: SeriesCoefficients, r):
    """Truncated series for k_s H1(k_s r) - k_p H1(k_p r)."""
    ra = _check_r(r)
    m = np.arange(coeffs.M + 1)
    pw = ra[..., None] ** (2 * m + 1)
    val = np.sum((coeffs.c1 + coeffs.c2 * np.log(ra)[..., None]) * pw, axis=-1)
    return _finish(val, r)


def f2_series(coeffs: SeriesCoefficients, r):
    """Truncated series for k_s^2 H2(k_s r) - k_p^2 H2(k_p r), constant term included."""
    ra = _check_r(r)
    m = np.arange(coeffs.M + 1)
    pw = ra[..., None] ** (2 * m + 2)
    val = np.sum((coeffs.c3 + coeffs.c4 * np.log(ra)[..., None]) * pw, axis=-1)
    return _finish(val + coeffs.f2_constant, r)


def f3_series(k: float, M: int, r):
    """Truncated series for H0(k r).

    The two logarithms ln(k/2) + ln r are merged into ln(k r / 2) before
    summation, which is the same series without the cancellation.
    """
    ra = _check_r(r)
    a0, b0 = hankel_ascending_terms(0, M)
    m = np.arange(M + 1)
    half = (k * ra / 2.0)[..., None]
    val = np.sum((a0 + b0 * np.log(half)) * half ** (2 * m), axis=-1)
    return _finish(val, r)


def f_direct(kind: str, k, r):
    """Direct Hankel evaluation of F1, F2 (``k = (k_p, k_s)`` or a medium) or F3 (scalar k)."""
    ra = _check_r(r)
    kind = kind.upper()
    if kind == "F3":
        return hankel1(0, k * ra) if np.ndim(r) else hankel1(0, float(k * ra))
    k_p, k_s = _wavenumbers(k)
    if kind == "F1":
        val = k_s * hankel1(1, k_s * ra) - k_p * hankel1(1, k_p * ra)
    elif kind == "F2":
        val = k_s**2 * hankel1(2, k_s * ra) - k_p**2 * hankel1(2, k_p * ra)
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    return _finish(val, r)


class RadialKernels:
    """Vectorized evaluator of the radial kernel combinations at many distances.

    For ``k_s r >= SERIES_SWITCH`` the Hankel functions are evaluated directly.
    Below the switch the combinations F1/r and F2/r^2 are summed from the
    ascending series, where direct subtraction of the 1/r and 1/r^2 poles would
    cancel most significant digits.
    """

    def __init__(self, k_p: float, k_s: float, terms: int = SWITCH_TERMS):
        self.k_p, self.k_s = float(k_p), float(k_s)
        self.terms = terms
        self._a = [hankel_ascending_terms(n, terms) for n in (0, 1, 2)]

    def _series(self, k, r):
        """Return H0(kr), k H1(kr) + 2i/(pi r), k^2 H2(kr) + 4i/(pi r^2) + i k^2/pi."""
        z = 0.5 * k * r
        lz = np.log(z)
        z2 = z * z
        out = []
        for n, (a, b) in enumerate(self._a):
            acc = np.zeros_like(r, dtype=complex)
            for m in range(self.terms, -1, -1):
                acc = acc * z2 + (a[m] + b[m] * lz)
            out.append(acc * z**n)
        h0, h1reg, h2reg = out
        return h0, k * h1reg, k * k * h2reg

    def evaluate(self, r: np.ndarray):
        """Return ``(H0(k_s r), H0(k_p r), F1/r, F2/r^2, k_s H1(k_s r)/r)`` for r > 0."""
        r = np.asarray(r, dtype=float)
        ks, kp = self.k_s, self.k_p
        small = ks * r < SERIES_SWITCH
        h0s = np.empty(r.shape, dtype=complex)
        h0p = np.empty(r.shape, dtype=complex)
        a = np.empty(r.shape, dtype=complex)
        b = np.empty(r.shape, dtype=complex)
        d = np.empty(r.shape, dtype=complex)
        big = ~small
        if np.any(big):
            rb = r[big]
            j0s, y0s = special.j0(ks * rb), special.y0(ks * rb)
            j1s, y1s = special.j1(ks * rb), special.y1(ks * rb)
            j0p, y0p = special.j0(kp * rb), special.y0(kp * rb)
            j1p, y1p = special.j1(kp * rb), special.y1(kp * rb)
            H0s = j0s + 1j * y0s
            H1s = j1s + 1j * y1s
            H0p = j0p + 1j * y0p
            H1p = j1p + 1j * y1p
            f1 = ks * H1s - kp * H1p
            # k^2 H2(kr) = 2k H1(kr)/r - k^2 H0(kr)
            f2 = (2.0 / rb) * f1 - ks * ks * H0s + kp * kp * H0p
            h0s[big] = H0s
            h0p[big] = H0p
            a[big] = f1 / rb
            b[big] = f2 / (rb * rb)
            d[big] = ks * H1s / rb
        if np.any(small):
            rs = r[small]
            H0s, H1s_reg, H2s_reg = self._series(ks, rs)
            H0p, H1p_reg, H2p_reg = self._series(kp, rs)
            h0s[small] = H0s
            h0p[small] = H0p
            a[small] = (H1s_reg - H1p_reg) / rs
            b[small] = (H2s_reg - H2p_reg - 1j * (ks * ks - kp * kp) / math.pi) / (rs * rs)
            d[small] = (H1s_reg - 2j / (math.pi * rs)) / rs
        return h0s, h0p, a, b, d
