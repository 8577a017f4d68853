"""Boundary curves, polygonal meshes and the reference-element map."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from .core import ROT, GeometryError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Curve specifications
# ---------------------------------------------------------------------------

class AnalyticCurve:
    """Closed curve t -> x(t), t in [0, 2pi), counter-clockwise."""

    name = "curve"

    def point(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError

    def arc_length(self) -> float:
        def speed(t):
            return float(np.hypot(*self.derivative(np.array([t]))[0]))

        val, _ = quad(speed, 0.0, 2 * math.pi, limit=400, epsabs=1e-13, epsrel=1e-13)
        return val

    def loops(self) -> list:
        return [self]


def _polar(rad, drad, t):
    t = np.asarray(t, dtype=float)
    c, s = np.cos(t), np.sin(t)
    r, dr = rad(t), drad(t)
    return np.stack([r * c, r * s], axis=-1), np.stack([dr * c - r * s, dr * s + r * c], axis=-1)


@dataclass(frozen=True)
class RoundedTriangle(AnalyticCurve):
    """x(t) = (2 + 0.5 cos 3t)(cos t, sin t)."""

    name = "rounded_triangle"

    def point(self, t):
        return _polar(lambda t: 2 + 0.5 * np.cos(3 * t), lambda t: -1.5 * np.sin(3 * t), t)[0]

    def derivative(self, t):
        return _polar(lambda t: 2 + 0.5 * np.cos(3 * t), lambda t: -1.5 * np.sin(3 * t), t)[1]


@dataclass(frozen=True)
class Star(AnalyticCurve):
    """x(t) = (1 + 0.3 cos 5t)(cos t, sin t)."""

    name = "star"

    def point(self, t):
        return _polar(lambda t: 1 + 0.3 * np.cos(5 * t), lambda t: -1.5 * np.sin(5 * t), t)[0]

    def derivative(self, t):
        return _polar(lambda t: 1 + 0.3 * np.cos(5 * t), lambda t: -1.5 * np.sin(5 * t), t)[1]


@dataclass(frozen=True)
class Kite(AnalyticCurve):
    """x(t) = (cos t + 0.65 cos 2t - 0.65, 1.5 sin t)."""

    name = "kite"

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.cos(t) + 0.65 * np.cos(2 * t) - 0.65, 1.5 * np.sin(t)], axis=-1)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([-np.sin(t) - 1.3 * np.sin(2 * t), 1.5 * np.cos(t)], axis=-1)


@dataclass(frozen=True)
class Ellipse(AnalyticCurve):
    center: tuple = (0.0, 0.0)
    axes: tuple = (1.0, 1.0)

    name = "ellipse"

    def __post_init__(self):
        if len(self.axes) != 2 or min(self.axes) <= 0:
            raise GeometryError(f"ellipse semi-axes must be positive, got {self.axes}")

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack(
            [self.center[0] + self.axes[0] * np.cos(t), self.center[1] + self.axes[1] * np.sin(t)], axis=-1
        )

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([-self.axes[0] * np.sin(t), self.axes[1] * np.cos(t)], axis=-1)


def Circle(radius: float = 1.0, center=(0.0, 0.0)) -> Ellipse:
    return Ellipse(center=tuple(center), axes=(radius, radius))


@dataclass(frozen=True)
class Polygon:
    """Closed polygon; vertices are reordered counter-clockwise if needed."""

    vertices: tuple

    name = "polygon"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("polygon needs at least three 2D vertices")
        edges = np.roll(v, -1, axis=0) - v
        if np.any(np.hypot(edges[:, 0], edges[:, 1]) == 0):
            raise GeometryError("polygon has repeated consecutive vertices")
        area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if area == 0:
            raise GeometryError("polygon is degenerate (zero area)")
        if area < 0:
            v = v[::-1]
        object.__setattr__(self, "vertices", tuple(map(tuple, v)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def edge_lengths(self) -> np.ndarray:
        v = self.array
        e = np.roll(v, -1, axis=0) - v
        return np.hypot(e[:, 0], e[:, 1])

    def arc_length(self) -> float:
        return float(self.edge_lengths().sum())

    def loops(self) -> list:
        return [self]


@dataclass(frozen=True)
class Composite:
    parts: tuple

    name = "composite"

    def __post_init__(self):
        if not self.parts:
            raise GeometryError("composite needs at least one loop")
        object.__setattr__(self, "parts", tuple(self.parts))

    def loops(self) -> list:
        out = []
        for p in self.parts:
            out.extend(p.loops())
        return out

    def arc_length(self) -> float:
        return sum(p.arc_length() for p in self.loops())


DEFAULT_RIGHT_TRIANGLE = ((-1.0, -1.0), (2.0, -1.0), (-1.0, 2.0))


def RightTriangle(vertices=DEFAULT_RIGHT_TRIANGLE) -> Polygon:
    return Polygon(tuple(map(tuple, vertices)))


def MixedScene(center=(2.5, 0.0), axes=(0.3, 0.2)) -> Composite:
    return Composite((Kite(), Ellipse(center=tuple(center), axes=tuple(axes))))


# ---------------------------------------------------------------------------
# Mesh
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryMesh:
    """Closed polygonal loops with cyclic node indexing.

    Segment ``i`` runs from node ``i`` to node ``next[i]``; node indexing is
    contiguous across loops.
    """

    nodes: np.ndarray
    loop_starts: tuple
    loop_sizes: tuple
    next: np.ndarray = field(init=False)
    prev: np.ndarray = field(init=False)
    loop_id: np.ndarray = field(init=False)
    lengths: np.ndarray = field(init=False)
    tangents: np.ndarray = field(init=False)
    normals: np.ndarray = field(init=False)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        n = len(nodes)
        if sum(self.loop_sizes) != n:
            raise GeometryError("loop sizes do not add up to the node count")
        nxt = np.empty(n, dtype=np.intp)
        prv = np.empty(n, dtype=np.intp)
        lid = np.empty(n, dtype=np.intp)
        for k, (s, m) in enumerate(zip(self.loop_starts, self.loop_sizes)):
            if m < 3:
                raise GeometryError(f"loop {k} has {m} nodes, need at least 3")
            idx = np.arange(s, s + m)
            nxt[idx] = np.roll(idx, -1)
            prv[idx] = np.roll(idx, 1)
            lid[idx] = k
        d = nodes[nxt] - nodes
        h = np.hypot(d[:, 0], d[:, 1])
        if np.any(h <= 0):
            raise GeometryError("mesh has a zero-length segment")
        t = d / h[:, None]
        nrm = -(t @ ROT.T)
        for name, val in (("nodes", nodes), ("next", nxt), ("prev", prv), ("loop_id", lid),
                          ("lengths", h), ("tangents", t), ("normals", nrm)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_loops(self) -> int:
        return len(self.loop_sizes)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes + self.nodes[self.next])

    def perimeter(self) -> float:
        return float(self.lengths.sum())

    def segment_points(self, xi) -> np.ndarray:
        """Points x_i(xi) on every segment, shape (N, len(xi), 2)."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        a = self.nodes[:, None, :]
        b = self.nodes[self.next][:, None, :]
        return a + (0.5 * (1 + xi))[None, :, None] * (b - a)

    def winding_number(self, points) -> np.ndarray:
        """Total winding number of all loops around each point."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.nodes[None, :, :] - p[:, None, :]
        b = self.nodes[self.next][None, :, :] - p[:, None, :]
        cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
        dot = np.sum(a * b, axis=-1)
        return np.rint(np.arctan2(cross, dot).sum(axis=1) / (2 * math.pi)).astype(int)

    def contains(self, points) -> np.ndarray:
        """True for points inside any obstacle loop."""
        return self.winding_number(points) != 0

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the polygonal boundary."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.nodes[None, :, :]
        d = (self.nodes[self.next] - self.nodes)[None, :, :]
        s = np.sum((p[:, None, :] - a) * d, axis=-1) / (self.lengths**2)[None, :]
        s = np.clip(s, 0.0, 1.0)
        q = a + s[..., None] * d
        return np.min(np.hypot(*(p[:, None, :] - q).transpose(2, 0, 1)), axis=1)

    def circumradius(self, center=(0.0, 0.0)) -> float:
        return float(np.max(np.hypot(*(self.nodes - np.asarray(center)).T)))


def reference_map(mesh: BoundaryMesh, segment: int, xi: float) -> np.ndarray:
    """Affine map of xi in [-1, 1] onto segment ``segment`` (clamped)."""
    xi = min(max(float(xi), -1.0), 1.0)
    a = mesh.nodes[segment]
    b = mesh.nodes[mesh.next[segment]]
    return a + 0.5 * (1.0 + xi) * (b - a)


def _split_counts(total: int, weights: Sequence[float], minimum: int) -> list[int]:
    """Largest-remainder split of ``total`` proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    raw = total * w / w.sum()
    counts = np.maximum(np.floor(raw).astype(int), minimum)
    while counts.sum() < total:
        counts[np.argmax(raw - counts)] += 1
    while counts.sum() > total:
        over = np.where(counts > minimum, counts - raw, -np.inf)
        if not np.isfinite(over).any():
            break
        counts[np.argmax(over)] -= 1
    return [int(c) for c in counts]


def _sample_loop(curve, n: int) -> np.ndarray:
    if isinstance(curve, Polygon):
        v = curve.array
        per_edge = _split_counts(n, curve.edge_lengths(), 1)
        pts = []
        for k, m in enumerate(per_edge):
            a, b = v[k], v[(k + 1) % len(v)]
            s = np.arange(m) / m
            pts.append(a + s[:, None] * (b - a))
        return np.concatenate(pts)
    t = 2 * math.pi * np.arange(n) / n
    return curve.point(t)


def sample_curve(spec, N: int, min_per_loop: int = 8) -> BoundaryMesh:
    """Sample a curve spec into a BoundaryMesh with ``N`` nodes in total."""
    loops = spec.loops()
    if not isinstance(N, (int, np.integer)):
        raise GeometryError(f"node count must be an integer, got {N!r}")
    if len(loops) == 1:
        if N < 3:
            raise GeometryError(f"need at least 3 nodes, got {N}")
        counts = [int(N)]
    else:
        if N < min_per_loop * len(loops):
            raise GeometryError(f"{N} nodes cannot cover {len(loops)} loops with {min_per_loop} each")
        counts = _split_counts(int(N), [c.arc_length() for c in loops], min_per_loop)
    parts, starts, start = [], [], 0
    for curve, m in zip(loops, counts):
        parts.append(_sample_loop(curve, m))
        starts.append(start)
        start += m
    return BoundaryMesh(np.concatenate(parts), tuple(starts), tuple(counts))


def nodes_for_frequency(spec, k_s: float, step: int = 10) -> int:
    """Node count satisfying N > 16 pi R / lambda_s, rounded up to a multiple of ``step``.

    R is the circumscribed radius about the origin (maximum of |x| over a
    fine sampling of the curve).
    """
    fine = sample_curve(spec, 4096 * len(spec.loops()))
    R = fine.circumradius()
    lam_s = 2 * math.pi / k_s
    bound = 16 * math.pi * R / lam_s
    return int(step * math.ceil(bound / step + 1e-12))


def export_mesh_csv(mesh: BoundaryMesh, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["loop_id", "node_index", "x", "y"])
        for i in range(mesh.n_nodes):
            k = int(mesh.loop_id[i])
            w.writerow([k, i - mesh.loop_starts[k], repr(float(mesh.nodes[i, 0])), repr(float(mesh.nodes[i, 1]))])


def import_mesh_csv(path) -> BoundaryMesh:
    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(int(rec["loop_id"]), []).append(
                (int(rec["node_index"]), float(rec["x"]), float(rec["y"]))
            )
    parts, starts, sizes, start = [], [], [], 0
    for k in sorted(rows):
        pts = sorted(rows[k])
        parts.append(np.array([(x, y) for _, x, y in pts]))
        starts.append(start)
        sizes.append(len(pts))
        start += len(pts)
    if not parts:
        raise GeometryError(f"no nodes in {path}")
    return BoundaryMesh(np.concatenate(parts), tuple(starts), tuple(sizes))


CURVES = {
    "rounded_triangle": RoundedTriangle,
    "kite": Kite,
    "star": Star,
    "circle": Circle,
    "ellipse": Ellipse,
    "right_triangle": RightTriangle,
    "polygon": Polygon,
    "mixed": MixedScene,
}


def make_curve(name: str, **params):
    try:
        factory = CURVES[name]
    except KeyError:
        raise GeometryError(f"unknown curve {name!r}; known: {sorted(CURVES)}") from None
    if name == "polygon":
        return Polygon(tuple(map(tuple, params["vertices"])))
    if name == "ellipse":
        return Ellipse(center=tuple(params.get("center", (0.0, 0.0))), axes=tuple(params.get("axes", (1.0, 1.0))))
    return factory(**params)
