"""Shared domain types: medium parameters, 2x2 block storage, errors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Rotation by +90 degrees; outward normal of a CCW segment is -ROT @ tangent.
ROT = np.array([[0.0, -1.0], [1.0, 0.0]])
IDENTITY2 = np.eye(2)


class ElastoBEMError(Exception):
    """Base class for errors raised by this package."""


class InvalidMediumError(ElastoBEMError, ValueError):
    pass


class DomainError(ElastoBEMError, ValueError):
    pass


class GeometryError(ElastoBEMError, ValueError):
    pass


class SingularSystemError(ElastoBEMError, ArithmeticError):
    pass


@dataclass(frozen=True)
class ElasticMedium:
    """Isotropic elastic medium at a fixed angular frequency.

    ``lam`` and ``mu`` are the Lame constants, ``rho`` the mass density and
    ``omega`` the angular frequency.
    """

    lam: float = 2.0
    mu: float = 1.0
    rho: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        vals = (self.lam, self.mu, self.rho, self.omega)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidMediumError(f"non-finite medium parameters {vals}")
        if self.mu <= 0:
            raise InvalidMediumError(f"shear modulus must be positive, got mu={self.mu}")
        if self.lam + self.mu <= 0:
            raise InvalidMediumError(
                f"lambda + mu must be positive, got {self.lam} + {self.mu}"
            )
        if self.rho <= 0:
            raise InvalidMediumError(f"density must be positive, got rho={self.rho}")
        if self.omega <= 0:
            raise InvalidMediumError(f"frequency must be positive, got omega={self.omega}")

    @property
    def k_s(self) -> float:
        return self.omega * math.sqrt(self.rho / self.mu)

    @property
    def k_p(self) -> float:
        return self.omega * math.sqrt(self.rho / (self.lam + 2.0 * self.mu))

    @property
    def rho_omega2(self) -> float:
        return self.rho * self.omega**2

    def with_omega(self, omega: float) -> "ElasticMedium":
        return ElasticMedium(self.lam, self.mu, self.rho, omega)


def medium_wavenumbers(medium: ElasticMedium) -> tuple[float, float]:
    """Return ``(k_p, k_s)`` for a validated medium."""
    if not isinstance(medium, ElasticMedium):
        raise InvalidMediumError(f"expected ElasticMedium, got {type(medium).__name__}")
    return medium.k_p, medium.k_s


def cvec2(a, b) -> np.ndarray:
    v = np.array([a, b], dtype=complex)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite vector component")
    return v


def cmat22(rows) -> np.ndarray:
    m = np.asarray(rows, dtype=complex).reshape(2, 2)
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite matrix entry")
    return m


class BlockMatrix:
    """Dense ``2N x 2N`` complex matrix addressed as an ``N x N`` grid of 2x2 blocks.

    Block ``(i, j)`` occupies rows ``2i, 2i+1`` and columns ``2j, 2j+1``.
    ``blocks`` is a writable ``(N, 2, N, 2)`` view of the same memory, so
    writers touching disjoint block rows never conflict.
    """

    def __init__(self, n_nodes: int, data: np.ndarray | None = None):
        self.n_nodes = int(n_nodes)
        shape = (2 * self.n_nodes, 2 * self.n_nodes)
        if data is None:
            data = np.zeros(shape, dtype=complex)
        elif data.shape != shape:
            raise ValueError(f"data shape {data.shape} != {shape}")
        self.data = np.ascontiguousarray(data, dtype=complex)

    @property
    def blocks(self) -> np.ndarray:
        return self.data.reshape(self.n_nodes, 2, self.n_nodes, 2)

    def get_block(self, i: int, j: int) -> np.ndarray:
        return self.data[2 * i : 2 * i + 2, 2 * j : 2 * j + 2].copy()

    def set_block(self, i: int, j: int, value) -> None:
        self.data[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = value

    def add_block(self, i: int, j: int, value) -> None:
        self.data[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] += value

    def add_blocks(self, rows, cols, values) -> None:
        """Accumulate ``values[k]`` (2x2) into block ``(rows[k], cols[k])``."""
        view = self.data.reshape(self.n_nodes, 2, self.n_nodes, 2)
        np.add.at(view.transpose(0, 2, 1, 3), (np.asarray(rows), np.asarray(cols)), values)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def copy(self) -> "BlockMatrix":
        return BlockMatrix(self.n_nodes, self.data.copy())

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __repr__(self):
        return f"BlockMatrix(n_nodes={self.n_nodes})"
