"""Generalized Stolz domains and their boundary geometry.

A domain is the interior of the convex hull of a centered disc of radius
``r`` and a finite set of unimodular vertices.  When ``r`` is large enough
that every chord between consecutive vertices meets the closed disc, the
boundary consists only of tangent segments through the vertices and arcs
of the circle of radius ``r``; this module builds that boundary as an
oriented path and equips it with composite Gauss-Legendre quadrature,
geometrically graded toward the vertices where the integrands of the
contour calculus lose smoothness.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

UNIT_TOL = 1e-12
CHAIN_TOL = 1e-10


class GeometryError(ValueError):
    """Raised when a geometric input violates its contract."""


class UnsupportedGeometryError(GeometryError):
    """Raised for boundary requests outside the tangent-and-arc regime."""


def _as_complex_tuple(vertices) -> tuple[complex, ...]:
    return tuple(complex(v) for v in vertices)


@dataclass(frozen=True)
class UnimodularVertexSet:
    """Distinct points on the unit circle, in counterclockwise order."""

    vertices: tuple[complex, ...]

    def __init__(self, vertices):
        object.__setattr__(self, "vertices", _as_complex_tuple(vertices))
        self._validate()

    def _validate(self):
        if len(self.vertices) == 0:
            raise GeometryError("vertex set is empty")
        for v in self.vertices:
            if abs(abs(v) - 1.0) > UNIT_TOL:
                raise GeometryError(f"vertex {v} is not unimodular (|v|={abs(v)})")
        args = [cmath.phase(v) for v in self.vertices]
        # gaps must be strictly positive and wrap exactly once
        total = 0.0
        for j in range(len(args)):
            gap = (args[(j + 1) % len(args)] - args[j]) % (2 * math.pi)
            if len(args) > 1 and gap <= 0.0:
                raise GeometryError("vertices are not in strict ccw order")
            total += gap
        if len(args) > 1 and abs(total - 2 * math.pi) > 1e-9:
            raise GeometryError("vertex arguments do not wrap exactly one turn")

    @classmethod
    def from_unsorted(cls, vertices) -> "UnimodularVertexSet":
        vs = sorted(_as_complex_tuple(vertices), key=cmath.phase)
        return cls(vs)

    def __len__(self) -> int:
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def __getitem__(self, j) -> complex:
        return self.vertices[j]

    @property
    def angles(self) -> np.ndarray:
        return np.array([cmath.phase(v) for v in self.vertices])

    def gaps(self) -> np.ndarray:
        """Counterclockwise angular gap after each vertex (2*pi for N=1)."""
        if len(self) == 1:
            return np.array([2 * math.pi])
        a = self.angles
        return (np.roll(a, -1) - a) % (2 * math.pi)

    def rotated(self, u: complex) -> "UnimodularVertexSet":
        if abs(abs(u) - 1.0) > UNIT_TOL:
            raise GeometryError("rotation factor must be unimodular")
        return UnimodularVertexSet([u * v for v in self.vertices])

    def conjugated(self) -> "UnimodularVertexSet":
        """Vertex set for the adjoint problem; reordered to stay ccw."""
        return UnimodularVertexSet.from_unsorted([v.conjugate() for v in self.vertices])

    def factor_polynomial(self, power: int = 1) -> np.ndarray:
        """Ascending coefficients of prod_j (1 - conj(xi_j) z)**power.

        Sub-machine noise is snapped to zero: for symmetric vertex sets the
        exact coefficients are small integers, and leftover representation
        noise would be amplified by the unit-circle poles downstream.
        """
        coeffs = np.array([1.0 + 0.0j])
        for v in self.vertices:
            for _ in range(power):
                coeffs = np.convolve(coeffs, np.array([1.0, -np.conj(v)]))
        snap = 32 * np.finfo(float).eps * np.abs(coeffs).max()
        re = np.where(np.abs(coeffs.real) < snap, 0.0, coeffs.real)
        im = np.where(np.abs(coeffs.imag) < snap, 0.0, coeffs.imag)
        return re + 1j * im


def is_e_large_enough(E: UnimodularVertexSet, r: float) -> bool:
    """Whether every chord between consecutive vertices meets the closed disc.

    For a single vertex this is vacuously true.  The distance from the
    origin to the chord with angular gap ``g`` is ``|cos(g/2)|``.
    """
    if not 0.0 < r < 1.0:
        raise GeometryError(f"radius must lie in (0,1), got {r}")
    if len(E) == 1:
        return True
    return bool(np.all(np.abs(np.cos(E.gaps() / 2.0)) <= r + 1e-15))


def tangent_points(xi: complex, s: float) -> tuple[complex, complex]:
    """Both points where the tangents from ``xi`` touch the circle of radius s.

    Returns ``(s*exp(i*theta)*xi, s*exp(-i*theta)*xi)`` with
    ``theta = arccos(s)``.
    """
    if not 0.0 < s < 1.0:
        raise GeometryError(f"tangent radius must lie in (0,1), got {s}")
    if abs(abs(xi) - 1.0) > UNIT_TOL:
        raise GeometryError("tangent base point must be unimodular")
    theta = math.acos(s)
    return s * cmath.exp(1j * theta) * xi, s * cmath.exp(-1j * theta) * xi


@dataclass(frozen=True)
class Segment:
    start: complex
    end: complex

    @property
    def length(self) -> float:
        return abs(self.end - self.start)

    def point(self, t):
        """Point at parameter t in [0,1]."""
        return self.start + np.asarray(t) * (self.end - self.start)

    def distance(self, z: complex) -> float:
        d = self.end - self.start
        L2 = abs(d) ** 2
        if L2 == 0.0:
            return abs(z - self.start)
        t = ((z - self.start) * np.conj(d)).real / L2
        t = min(1.0, max(0.0, t))
        return abs(z - (self.start + t * d))


@dataclass(frozen=True)
class Arc:
    """Counterclockwise arc of the circle of given radius centered at 0."""

    radius: float
    angle_start: float
    angle_end: float  # angle_end > angle_start

    @property
    def start(self) -> complex:
        return self.radius * cmath.exp(1j * self.angle_start)

    @property
    def end(self) -> complex:
        return self.radius * cmath.exp(1j * self.angle_end)

    @property
    def sweep(self) -> float:
        return self.angle_end - self.angle_start

    @property
    def length(self) -> float:
        return self.radius * self.sweep

    def point(self, t):
        ang = self.angle_start + np.asarray(t) * self.sweep
        return self.radius * np.exp(1j * ang)

    def distance(self, z: complex) -> float:
        ang = cmath.phase(z) % (2 * math.pi)
        a0 = self.angle_start % (2 * math.pi)
        rel = (ang - a0) % (2 * math.pi)
        if rel <= self.sweep:
            return abs(abs(z) - self.radius)
        return min(abs(z - self.start), abs(z - self.end))


@dataclass(frozen=True)
class BoundaryPath:
    """Closed counterclockwise boundary made of segments and arcs."""

    pieces: tuple
    vertex_touch_indices: dict

    def __post_init__(self):
        n = len(self.pieces)
        for i, piece in enumerate(self.pieces):
            nxt = self.pieces[(i + 1) % n]
            if abs(piece.end - nxt.start) > CHAIN_TOL:
                raise GeometryError(
                    f"boundary pieces {i} and {(i + 1) % n} do not chain: "
                    f"{piece.end} vs {nxt.start}"
                )

    def closure_defect(self) -> float:
        n = len(self.pieces)
        return max(
            abs(self.pieces[i].end - self.pieces[(i + 1) % n].start) for i in range(n)
        )

    def sample(self, per_piece: int = 64) -> np.ndarray:
        t = np.linspace(0.0, 1.0, per_piece, endpoint=False)
        return np.concatenate([p.point(t) for p in self.pieces])

    def distance(self, z: complex) -> float:
        return min(p.distance(z) for p in self.pieces)

    def signed_area(self, per_piece: int = 256) -> float:
        pts = self.sample(per_piece)
        x, y = pts.real, pts.imag
        return 0.5 * float(
            np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        )


class StolzDomain:
    """Open convex hull of a centered disc and a unimodular vertex set."""

    def __init__(self, vertex_set: UnimodularVertexSet, radius: float):
        if not isinstance(vertex_set, UnimodularVertexSet):
            vertex_set = UnimodularVertexSet(vertex_set)
        if not 0.0 < radius < 1.0:
            raise GeometryError(f"radius must lie in (0,1), got {radius}")
        self.vertex_set = vertex_set
        self.radius = float(radius)
        self._hull_polygon = self._build_hull_polygon()

    def __repr__(self):
        return f"StolzDomain(vertices={list(self.vertex_set)}, radius={self.radius})"

    @property
    def is_e_large_enough(self) -> bool:
        return is_e_large_enough(self.vertex_set, self.radius)

    def _build_hull_polygon(self) -> np.ndarray:
        """Corner points of the hull in ccw order.

        Tangent touch points are included only when the adjacent gap is
        wide enough to leave an arc; otherwise consecutive vertices are
        joined by a chord and the touch points fall away.
        """
        E, r = self.vertex_set, self.radius
        theta = math.acos(r)
        gaps = E.gaps()
        pts: list[complex] = []
        for j, xi in enumerate(E):
            gap_prev = gaps[j - 1] if len(E) > 1 else gaps[0]
            gap_next = gaps[j]
            if gap_prev >= 2 * theta - 1e-14:
                pts.append(r * cmath.exp(-1j * theta) * xi)
            pts.append(xi)
            if gap_next >= 2 * theta - 1e-14:
                pts.append(r * cmath.exp(1j * theta) * xi)
        out = [pts[0]]
        for p in pts[1:]:
            if abs(p - out[-1]) > 1e-14:
                out.append(p)
        if abs(out[0] - out[-1]) <= 1e-14 and len(out) > 1:
            out.pop()
        return np.array(out)

    def hull_margin(self, z: complex) -> float:
        """Positive strictly inside the open hull, negative strictly outside.

        Computed from exact half-plane tests against the hull polygon and
        the disc; the magnitude is a lower bound on the distance to the
        boundary for interior points.
        """
        disc_margin = self.radius - abs(z)
        poly = self._hull_polygon
        if len(poly) < 3:
            return disc_margin
        edges = np.roll(poly, -1) - poly
        rel = z - poly
        cross = (np.conj(edges) * rel).imag / np.abs(edges)
        return max(disc_margin, float(np.min(cross)))

    def contains(self, z: complex) -> bool:
        """Membership in the open hull."""
        return self.hull_margin(z) > 0.0

    def contains_closed(self, z: complex, tol: float = 1e-9) -> bool:
        return self.hull_margin(z) >= -tol

    def rotated(self, u: complex) -> "StolzDomain":
        return StolzDomain(self.vertex_set.rotated(u), self.radius)

    def boundary_path(self) -> BoundaryPath:
        return boundary_path(self)


def boundary_path(domain: StolzDomain) -> BoundaryPath:
    """Oriented boundary of the domain: tangent segments and arcs only.

    Per vertex the path leaves along ``[xi_j, s*exp(i*theta)*xi_j]``, runs
    counterclockwise along the arc of radius ``s`` and re-enters the next
    vertex along ``[s*exp(-i*theta)*xi_{j+1}, xi_{j+1}]``, with
    ``theta = arccos(s)``.
    """
    if not domain.is_e_large_enough:
        raise UnsupportedGeometryError(
            "boundary with chord pieces is not supported; the radius is not "
            "large enough for the vertex set (some chord misses the disc)"
        )
    E, s = domain.vertex_set, domain.radius
    theta = math.acos(s)
    N = len(E)
    angles = E.angles
    pieces: list = []
    vertex_touch: dict[int, tuple[int, int]] = {}
    out_idx: dict[int, int] = {}
    in_idx: dict[int, int] = {}
    for j in range(N):
        xi = E[j]
        xj1 = E[(j + 1) % N]
        up, _ = tangent_points(xi, s)
        _, down_next = tangent_points(xj1, s)
        out_idx[j] = len(pieces)
        pieces.append(Segment(xi, up))
        a0 = angles[j] + theta
        a1 = a0 + ((angles[(j + 1) % N] - theta - a0) % (2 * math.pi))
        if N == 1:
            a1 = angles[j] + 2 * math.pi - theta
        if a1 - a0 > 1e-13:
            pieces.append(Arc(s, a0, a1))
        in_idx[(j + 1) % N] = len(pieces)
        pieces.append(Segment(down_next, xj1))
    for j in range(N):
        vertex_touch[j] = (in_idx[j], out_idx[j])
    return BoundaryPath(tuple(pieces), vertex_touch)


@dataclass(frozen=True)
class GradedQuadrature:
    """Nodes and complex dz-weights for a contour integral over a path."""

    points: np.ndarray
    weights: np.ndarray
    grading: float
    depth: int
    order: int

    def __len__(self):
        return len(self.points)

    def integrate(self, f) -> complex:
        return complex(np.sum(self.weights * f(self.points)))


def _segment_panels(seg: Segment, vertex_at_start: bool, grading: float, depth: int):
    """Panel breakpoints in [0,1], geometrically refined toward the vertex end."""
    fracs = [grading**i for i in range(depth)] + [0.0]
    fracs = sorted(set(fracs))
    if not vertex_at_start:
        fracs = [1.0 - f for f in fracs][::-1]
    if fracs[0] != 0.0:
        fracs = [0.0] + fracs
    if fracs[-1] != 1.0:
        fracs = fracs + [1.0]
    return fracs


def quadrature_nodes(
    path: BoundaryPath,
    grading: float = 0.5,
    depth: int = 40,
    order: int = 16,
    max_arc_panel: float = math.pi / 8,
) -> GradedQuadrature:
    """Composite Gauss-Legendre nodes for ``contour integral f(z) dz``.

    Segments incident to a vertex are split geometrically toward it with
    the given ratio and depth; arcs are split into panels of bounded
    angular width.
    """
    if not 0.0 < grading < 1.0:
        raise GeometryError("grading ratio must lie in (0,1)")
    if depth < 1 or order < 2:
        raise GeometryError("depth must be >= 1 and order >= 2")
    gl_x, gl_w = leggauss(order)
    pts, wts = [], []
    for piece in path.pieces:
        if isinstance(piece, Segment):
            at_start = abs(abs(piece.start) - 1.0) < 1e-9
            breaks = _segment_panels(piece, at_start, grading, depth)
            d = piece.end - piece.start
            for a, b in zip(breaks[:-1], breaks[1:]):
                mid, half = (a + b) / 2.0, (b - a) / 2.0
                t = mid + half * gl_x
                pts.append(piece.start + t * d)
                wts.append(gl_w * half * d)
        else:
            n_panels = max(1, math.ceil(piece.sweep / max_arc_panel))
            edges = np.linspace(piece.angle_start, piece.angle_end, n_panels + 1)
            for a, b in zip(edges[:-1], edges[1:]):
                mid, half = (a + b) / 2.0, (b - a) / 2.0
                ang = mid + half * gl_x
                z = piece.radius * np.exp(1j * ang)
                pts.append(z)
                wts.append(gl_w * half * 1j * z)
    return GradedQuadrature(
        np.concatenate(pts), np.concatenate(wts), grading, depth, order
    )


def boundary_grid(
    E: UnimodularVertexSet,
    s: float,
    density: int = 512,
    min_vertex_distance: float = 1e-12,
) -> np.ndarray:
    """Sample points of the boundary of the radius-``s`` domain.

    Segment pieces are graded geometrically toward their vertex (vertex
    endpoint included); arcs are sampled uniformly.  Used for boundary
    maximization of holomorphic functions.
    """
    path = boundary_path(StolzDomain(E, s))
    pts = []
    for piece in path.pieces:
        if isinstance(piece, Segment):
            at_start = abs(abs(piece.start) - 1.0) < 1e-9
            lo = max(min_vertex_distance, 1e-12)
            t = np.geomspace(lo, 1.0, density)
            t = np.concatenate(([0.0], t)) if min_vertex_distance <= 1e-12 else t
            if not at_start:
                t = 1.0 - t
            pts.append(piece.point(t))
        else:
            pts.append(piece.point(np.linspace(0.0, 1.0, density)))
    return np.concatenate(pts)


def export_path_csv(path: BoundaryPath, fname, per_piece: int = 128) -> None:
    """Write sampled boundary points as CSV columns re,im for plotting."""
    pts = path.sample(per_piece)
    arr = np.column_stack([pts.real, pts.imag])
    np.savetxt(fname, arr, delimiter=",", header="re,im", comments="")
