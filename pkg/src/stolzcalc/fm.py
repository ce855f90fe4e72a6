"""Franks-McIntosh style decomposition between two Stolz boundaries.

Builds the intermediate contour: two segments leaving each vertex into the
strip between the inner and outer boundaries, connected by polylines
through the middle of the strip; splits the vertex segments into
geometrically graded bands with companion discs, equips every band with a
weighted orthonormal polynomial basis, and produces the universal family
``Phi_{m,j,k,p}`` together with the coefficient functionals that expand
bounded holomorphic functions over it.

The band weight ``|dz| / |anchor - z|`` reduces, in the scaled local
variable, to ``dt / (kappa + t)`` with ``kappa = (rho+1)/(rho-1)`` shared
by every band, so a single orthonormalization serves all of them; the
polyline pieces carry plain arclength and scaled Legendre polynomials.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import (
    GeometryError,
    StolzDomain,
    UnimodularVertexSet,
    boundary_path,
    is_e_large_enough,
)


class ConstructionError(GeometryError):
    """A contour parameter violates a clearance or coverage invariant."""


@dataclass(frozen=True)
class Band:
    """One subsegment of the contour, with its companion disc."""

    m: int
    j: int
    k: int
    start: complex
    end: complex
    center: complex
    disc_radius: float
    anchor: complex | None  # vertex carrying the weight, None for m = 0
    orientation: int  # sign of dz relative to start -> end parametrization

    @property
    def half(self) -> complex:
        return 0.5 * (self.end - self.start)

    @property
    def length(self) -> float:
        return abs(self.end - self.start)

    def points(self, t):
        return self.center + np.asarray(t) * self.half


def _radial_extent(domain: StolzDomain, phi: float) -> float:
    """Largest t with t e^{i phi} in the closed hull."""
    best = domain.radius
    poly = domain._hull_polygon
    d = cmath.exp(1j * phi)
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        e = b - a
        den = (np.conj(e) * d).imag
        if abs(den) < 1e-15:
            continue
        t = (np.conj(e) * a).imag / den
        if t <= 0:
            continue
        u = ((t * d - a) * np.conj(e)).real / abs(e) ** 2
        if -1e-12 <= u <= 1 + 1e-12:
            best = max(best, t)
    return best


def _wedge_directions(r: float, s: float) -> tuple[float, float]:
    """Angles at the vertex (frame xi = 1) of the inner/outer tangent rays."""
    psi_r = cmath.phase(r * cmath.exp(1j * math.acos(r)) - 1.0)
    psi_s = cmath.phase(s * cmath.exp(1j * math.acos(s)) - 1.0)
    return psi_r, psi_s


@dataclass
class FMContour:
    E: UnimodularVertexSet
    r: float
    s: float
    r_prime: float
    theta0: float
    delta: float
    rho: float
    l: float
    K_max: int
    bands: list = field(default_factory=list)
    clearance_report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.domain_r = StolzDomain(self.E, self.r)
        self.domain_s = StolzDomain(self.E, self.s)
        self._index = {(b.m, b.j, b.k): b for b in self.bands}

    def band(self, key) -> Band:
        return self._index[tuple(key)]

    def keys(self):
        return list(self._index.keys())

    def m0_counts(self) -> dict:
        out: dict[int, int] = {}
        for b in self.bands:
            if b.m == 0:
                out[b.j] = max(out.get(b.j, -1), b.k)
        return out

    def anchor_vertex_index(self, m: int, j: int) -> int:
        """Index of the vertex carrying the weight of family (m, j)."""
        if m == 1:
            return j
        if m == 2:
            return (j + 1) % len(self.E)
        raise ValueError("m = 0 families have no anchor vertex")

    def band_index(self, j: int, xi: complex):
        """Dyadic band q of xi around vertex j, None outside the band range.

        Boundary distances l rho^{-q} resolve to q (the band having the
        value as its outer endpoint).
        """
        d = abs(self.E[j] - xi)
        if d > self.l * (1 + 1e-12) or d == 0.0:
            return None
        q = int(math.floor(math.log(self.l / d) / math.log(self.rho) * (1 + 1e-13)))
        return q

    def winding_number(self, z0: complex = 0.0) -> complex:
        """Winding of the closed contour around z0 by quadrature.

        The band families stop short of the vertices; the missing vertex
        connectors are included here so the curve is genuinely closed.
        """
        gl_x, gl_w = leggauss(8)
        acc = 0.0 + 0.0j
        for b in self.bands:
            pts = b.points(gl_x)
            dz = b.orientation * b.half
            acc += np.sum(gl_w * dz / (pts - z0))
        for b in self.bands:
            if b.m == 1 and b.k == self.K_max:
                a, c = b.anchor, b.start
            elif b.m == 2 and b.k == self.K_max:
                a, c = b.end, b.anchor
            else:
                continue
            mid, half = 0.5 * (a + c), 0.5 * (c - a)
            acc += np.sum(gl_w * half / (mid + gl_x * half - z0))
        return acc / (2j * math.pi)


def kernel(contour: FMContour, z, xi) -> np.ndarray:
    """``K(z, xi) = prod_j (1-conj(xi_j) z)^(1/2) (1-conj(xi_j) xi)^(1/2) / (z - xi)``
    with principal square roots."""
    z = np.asarray(z, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    num = np.ones(np.broadcast(z, xi).shape, dtype=complex)
    for v in contour.E:
        num = num * np.sqrt(1.0 - np.conj(v) * z) * np.sqrt(1.0 - np.conj(v) * xi)
    return num / (z - xi)


def _auto_segment_geometry(E, r, s, wedge_fraction):
    """Direction, length and endpoint of the vertex segments in frame xi=1.

    The ray leaves the vertex ``wedge_fraction`` of the way from the inner
    tangent direction toward the outer one and stops where its radius
    first reaches the mid-strip value (r+s)/2, or at its closest approach
    to the origin when it never gets that far; either way the endpoint
    radius lands strictly inside (r, s).
    """
    psi_r, psi_s = _wedge_directions(r, s)
    psi = psi_r - wedge_fraction * (psi_r - psi_s)
    a = math.cos(psi)  # Re(e^{i psi}) in the frame of the vertex
    target = 0.5 * (r + s)
    disc = a * a - (1.0 - target * target)
    if disc >= 0.0:
        t_star = -a - math.sqrt(disc)
    else:
        t_star = -a
    P1 = 1.0 + t_star * cmath.exp(1j * psi)
    dom_r, dom_s = StolzDomain(E, r), StolzDomain(E, s)
    for frac in (0.25, 0.5, 0.75, 1.0):
        q = E[0] * (1.0 + frac * t_star * cmath.exp(1j * psi))
        if dom_s.hull_margin(q) <= 0.0 or dom_r.hull_margin(q) >= 0.0:
            raise ConstructionError(
                f"vertex segment leaves the strip at fraction {frac} "
                f"(wedge_fraction={wedge_fraction})"
            )
    return psi, t_star, P1


def build_fm_contour(
    E: UnimodularVertexSet,
    r: float,
    s: float,
    r_prime: float | None = None,
    theta0: float | None = None,
    delta: float | None = None,
    rho: float | None = None,
    K_max: int = 40,
    wedge_fraction: float = 0.85,
    clearance_safety: float = 0.9,
) -> FMContour:
    """Build the intermediate contour between the radius-r and radius-s
    boundaries.

    Defaults derive the vertex segments from a ray through the strip wedge
    (``wedge_fraction`` of the way from the inner tangent toward the outer
    one) and choose the band ratio ``rho`` as large as the disc clearance
    against the inner boundary allows, capped at 1.3.  Every invariant is
    re-validated numerically; violations raise naming the failed
    clearance.
    """
    if not is_e_large_enough(E, r):
        raise ConstructionError("inner radius is not large enough for the vertex set")
    if not r < s < 1.0:
        raise ConstructionError(f"need r < s < 1, got r={r}, s={s}")
    N = len(E)
    if r_prime is not None and theta0 is not None:
        P1 = r_prime * cmath.exp(1j * theta0)
        l = abs(1.0 - P1)
        psi = cmath.phase(P1 - 1.0)
    else:
        psi, l, P1 = _auto_segment_geometry(E, r, s, wedge_fraction)
        r_prime = abs(P1)
        theta0 = cmath.phase(P1)
    if theta0 <= 0 or not (r < r_prime < s):
        raise ConstructionError(
            f"segment endpoint must satisfy r < r' < s and theta0 > 0 "
            f"(got r'={r_prime:.6g}, theta0={theta0:.6g})"
        )
    psi_r, _ = _wedge_directions(r, s)
    beta = abs(psi_r - psi)
    if rho is None:
        m = clearance_safety * math.sin(beta)
        rho = min(1.3, (2.0 + m) / (2.0 - m))
    if rho <= 1.0:
        raise ConstructionError(f"band ratio must exceed 1, got {rho}")

    inner_path = boundary_path(StolzDomain(E, r))
    outer_path = boundary_path(StolzDomain(E, s))

    bands: list[Band] = []
    # vertex bands, m in {1, 2}
    for j in range(N):
        for m, anchor_idx, local in ((1, j, P1), (2, (j + 1) % N, P1.conjugate())):
            anchor = E[anchor_idx]
            direction = anchor * (local - 1.0) / l
            for k in range(K_max + 1):
                b_out = l * rho ** (-k)
                b_in = l * rho ** (-k - 1)
                s_k = b_out - b_in
                c = anchor + 0.5 * (b_in + b_out) * direction
                if m == 1:
                    start = anchor + b_in * direction
                    end = anchor + b_out * direction
                    orient = 1
                else:
                    start = anchor + b_out * direction
                    end = anchor + b_in * direction
                    orient = 1
                bands.append(Band(m, j, k, start, end, c, s_k, anchor, orient))
    # disc clearances
    worst_r, worst_s = math.inf, math.inf
    for b in bands:
        worst_r = min(worst_r, inner_path.distance(b.center) - b.disc_radius)
        worst_s = min(worst_s, outer_path.distance(b.center) - b.disc_radius)
    if worst_r <= 0:
        raise ConstructionError(
            f"vertex-band discs violate the inner boundary clearance by {-worst_r:.3e}; "
            "reduce rho or move the segments outward"
        )

    # mid-strip polylines, m = 0
    dom_r, dom_s = StolzDomain(E, r), StolzDomain(E, s)
    m0_polylines = []
    min_clear = math.inf
    for j in range(N):
        p_start = E[j] * P1
        p_end = E[(j + 1) % N] * P1.conjugate()
        a0 = cmath.phase(p_start)
        a1 = a0 + (cmath.phase(p_end) - a0) % (2 * math.pi)
        n_samp = max(64, int(math.ceil((a1 - a0) / 0.01)))
        phis = np.linspace(a0, a1, n_samp)
        radii = np.empty(n_samp)
        for i, phi in enumerate(phis):
            radii[i] = 0.5 * (_radial_extent(dom_r, phi) + _radial_extent(dom_s, phi))
        # ramp the end radii onto the segment endpoints over 10% of the span
        ramp = min(0.1 * (a1 - a0), 0.2)
        w0 = np.clip((phis - a0) / ramp, 0.0, 1.0)
        w1 = np.clip((a1 - phis) / ramp, 0.0, 1.0)
        radii = radii * w0 * w1 + abs(p_start) * (1 - w0) + abs(p_end) * (1 - w1)
        pts = radii * np.exp(1j * phis)
        pts[0], pts[-1] = p_start, p_end
        m0_polylines.append(pts)
        for z in pts:
            min_clear = min(min_clear, inner_path.distance(z), outer_path.distance(z))
    if min_clear <= 0:
        raise ConstructionError("mid-strip polyline touches a boundary")
    if delta is None:
        delta = 0.5 * min_clear
    # resegmentize to pieces of length <= delta/2
    for j, pts in enumerate(m0_polylines):
        seglen = np.abs(np.diff(pts))
        cum = np.concatenate(([0.0], np.cumsum(seglen)))
        total = cum[-1]
        n_pieces = max(1, int(math.ceil(total / (0.5 * delta))))
        targets = np.linspace(0.0, total, n_pieces + 1)
        knots = np.interp(targets, cum, pts.real) + 1j * np.interp(targets, cum, pts.imag)
        for k in range(n_pieces):
            a, b = knots[k], knots[k + 1]
            bands.append(Band(0, j, k, a, b, 0.5 * (a + b), delta, None, 1))
    # m = 0 clearance against both boundaries
    for b in bands:
        if b.m != 0:
            continue
        dr = min(inner_path.distance(b.start), inner_path.distance(b.center), inner_path.distance(b.end))
        ds = min(outer_path.distance(b.start), outer_path.distance(b.center), outer_path.distance(b.end))
        if dr <= delta or ds <= delta:
            raise ConstructionError(
                f"polyline piece (0,{b.j},{b.k}) clears the boundaries by "
                f"({dr:.3e}, {ds:.3e}) which is not above delta={delta:.3e}"
            )
    report = {
        "inner_disc_clearance": worst_r,
        "outer_disc_clearance": worst_s,
        "binding_side": "outer" if worst_s < worst_r else "inner",
        "m0_min_clearance": min_clear,
        "wedge_angle": beta,
    }
    return FMContour(E, r, s, float(r_prime), float(theta0), float(delta), float(rho), float(l), K_max, bands, report)


def band_weight_mass(band: Band) -> float:
    """Weight mass of one band: the log-weighted length for vertex bands,
    plain arclength for polyline pieces."""
    if band.m == 0:
        return band.length
    gl_x, gl_w = leggauss(48)
    z = band.points(gl_x)
    return float(np.sum(gl_w * np.abs(band.half) / np.abs(band.anchor - z)))


def subsegment_weight_mass(contour: FMContour, key) -> float:
    """Mass of the stored band's weight; equals ``log rho`` for vertex
    bands (computed by quadrature as a check)."""
    return band_weight_mass(contour.band(key))


def _orthonormal_coeffs(weight_fn, P_max: int, order: int):
    """Real coefficient rows of orthonormal polynomials in t on [-1, 1]
    under weight_fn(t) dt, by modified Gram-Schmidt with one
    re-orthogonalization pass."""
    t, w = leggauss(order)
    W = w * weight_fn(t)
    V = t[None, :] ** np.arange(P_max + 1)[:, None]
    coeffs = np.eye(P_max + 1)
    vals = V.astype(float).copy()
    for p in range(P_max + 1):
        v, cp = vals[p].copy(), coeffs[p].copy()
        for _ in range(2):
            for q in range(p):
                proj = float(np.sum(W * v * vals[q]))
                v -= proj * vals[q]
                cp -= proj * coeffs[q]
        nrm = math.sqrt(float(np.sum(W * v * v)))
        if nrm <= 0 or not math.isfinite(nrm):
            raise ConstructionError(f"basis degenerates at degree {p}")
        vals[p], coeffs[p] = v / nrm, cp / nrm
    # residual at doubled order
    t2, w2 = leggauss(2 * order)
    W2 = w2 * weight_fn(t2)
    V2 = np.polynomial.polynomial.polyval(t2, coeffs.T)
    G = (V2 * W2) @ V2.T
    resid = float(np.max(np.abs(G - np.eye(P_max + 1))))
    return coeffs, resid


@dataclass
class FMBasis:
    """Shared orthonormal polynomial data for all bands of a contour."""

    P_max: int
    order: int
    kappa: float
    m12_coeffs: np.ndarray
    m12_gram_residual: float
    m0_coeffs: np.ndarray
    m0_gram_residual: float
    nodes_t: np.ndarray
    nodes_w: np.ndarray

    @classmethod
    def build(cls, contour: FMContour, P_max: int = 20, order: int | None = None) -> "FMBasis":
        if P_max > 30:
            raise ConstructionError("polynomial degree above 30 is not supported")
        if order is None:
            order = 2 * P_max + 8
        kappa = (contour.rho + 1.0) / (contour.rho - 1.0)
        m12, res12 = _orthonormal_coeffs(lambda t: 1.0 / (kappa + t), P_max, order)
        m0, res0 = _orthonormal_coeffs(lambda t: np.ones_like(t), P_max, order)
        if max(res12, res0) > 1e-6:
            raise ConstructionError(
                f"orthonormalization residual {max(res12, res0):.2e} exceeds 1e-6; reduce P_max"
            )
        t, w = leggauss(order)
        return cls(P_max, order, kappa, m12, res12, m0, res0, t, w)

    def eval_rows(self, m: int, t) -> np.ndarray:
        """Basis values e_p(t), rows p = 0..P_max (unscaled for m = 0).

        m = 2 bands run toward their anchor, so their weight is the mirror
        image of the m = 1 weight; the shared rows are evaluated at -t to
        stay orthonormal there.
        """
        t = np.asarray(t)
        if m == 2:
            t = -t
        C = self.m12_coeffs if m in (1, 2) else self.m0_coeffs
        return np.polynomial.polynomial.polyval(t, C.T)

    def weight_values(self, band: Band, t) -> np.ndarray:
        """Band weight density against |dz| at local parameter t."""
        t = np.asarray(t)
        if band.m == 0:
            return np.ones_like(t, dtype=float)
        return 1.0 / np.abs(band.anchor - band.points(t))

    def scale(self, band: Band) -> float:
        """Normalization factor of the basis on this band (1 for vertex
        bands; Legendre rows scale by 1/sqrt(half length) on polylines)."""
        if band.m == 0:
            return 1.0 / math.sqrt(abs(band.half))
        return 1.0


@dataclass
class BandBasisEntry:
    """Per-band view: evaluable orthonormal rows and the Gram residual."""

    key: tuple
    coeffs: np.ndarray
    gram_residual: float
    weight_mass: float
    band: Band
    basis: FMBasis

    def evaluate(self, t) -> np.ndarray:
        return self.basis.eval_rows(self.band.m, t) * self.basis.scale(self.band)


def orthonormal_basis(contour: FMContour, key, P_max: int = 20) -> BandBasisEntry:
    """Orthonormal polynomial rows for one band under its stored weight."""
    basis = FMBasis.build(contour, P_max)
    b = contour.band(key)
    C = (basis.m12_coeffs if b.m in (1, 2) else basis.m0_coeffs) * basis.scale(b)
    resid = basis.m12_gram_residual if b.m in (1, 2) else basis.m0_gram_residual
    return BandBasisEntry(tuple(key), C, resid, subsegment_weight_mass(contour, key), b, basis)


def _band_eval_data(contour: FMContour, basis: FMBasis, band: Band):
    """Nodes, dz factors and basis rows at quadrature nodes of a band."""
    t = basis.nodes_t
    z = band.points(t)
    rows = basis.eval_rows(band.m, t) * basis.scale(band)
    dz = band.orientation * band.half
    g = basis.nodes_w * dz
    for v in contour.E:
        # sqrt(1 - conj(v) z) / (1 - conj(v) z), per-factor principal roots
        g = g / np.sqrt(1.0 - np.conj(v) * z)
    return z, rows, g


def phi_function(contour: FMContour, basis: FMBasis, key, p: int, xi) -> np.ndarray:
    """``Phi_{m,j,k,p}(xi)``: the band integral of the basis row against the
    kernel, divided by the vertex factor polynomial."""
    m, j, k = key
    b = contour.band(key)
    xi = np.asarray(xi, dtype=complex)
    z, rows, g = _band_eval_data(contour, basis, b)
    xfac = np.ones_like(xi)
    for v in contour.E:
        xfac = xfac * np.sqrt(1.0 - np.conj(v) * xi)
    Kmat = 1.0 / (z[:, None] - xi.ravel()[None, :])
    vals = (rows[p] * g) @ Kmat / (2j * math.pi) * xfac.ravel()
    return vals.reshape(xi.shape)


def phi_matrix(contour: FMContour, basis: FMBasis, key, xi) -> np.ndarray:
    """All rows ``Phi_{m,j,k,p}(xi)`` for one band: shape (P_max+1, len(xi))."""
    b = contour.band(key)
    xi = np.asarray(xi, dtype=complex).ravel()
    z, rows, g = _band_eval_data(contour, basis, b)
    xfac = np.ones_like(xi)
    for v in contour.E:
        xfac = xfac * np.sqrt(1.0 - np.conj(v) * xi)
    Kmat = 1.0 / (z[:, None] - xi[None, :])
    return (rows * g[None, :]) @ Kmat / (2j * math.pi) * xfac[None, :]


@dataclass
class PhiDecayFit:
    """Fitted envelope constants for the band-family decay.

    Model: |Phi_{m,j,k,p}(xi)| <= c * 2^(-p) * rho^(-|k-q|/2) for xi in the
    q-th band of the anchor vertex, and c * 2^(-p) * rho^(-k/2) outside the
    band range; polyline families obey |Phi| <= c * 2^(-p).
    """

    c_fit: dict
    c_max: dict
    p_slope: dict
    n_samples: int

    def envelope_ok(self, safety: float = 5.0) -> bool:
        return all(self.c_max[k] <= safety * self.c_fit[k] for k in self.c_fit)


def _band_samples(contour: FMContour, j: int, q: int, n_dirs: int = 3):
    """Points of the q-th band of vertex j inside the inner domain.

    Directions span the vertex wedge of the inner hull up to nearly its
    tangent edges, so the samples include the closest admissible approach
    to the contour bands.
    """
    xi_j = contour.E[j]
    d = contour.l * contour.rho ** (-q - 0.5)
    psi_r, _ = _wedge_directions(contour.r, contour.s)
    w_max = math.pi - psi_r  # half-angle of the inner vertex wedge
    dom = StolzDomain(contour.E, contour.r)
    out = []
    for w in np.linspace(-0.97 * w_max, 0.97 * w_max, n_dirs):
        z = xi_j * (1.0 - d * cmath.exp(1j * w))
        if dom.hull_margin(z) > 0:
            out.append(z)
    return out


def fit_phi_decay(
    contour: FMContour,
    basis: FMBasis,
    k_max: int = 15,
    p_max: int = 15,
    q_max: int = 20,
) -> PhiDecayFit:
    """Sample the band functions on a (k, p, q) lattice and fit the decay
    envelope per family sector, least squares on the log scale."""
    log2, logr = math.log(2.0), math.log(contour.rho)
    c_fit, c_max, p_slope = {}, {}, {}
    n_used = 0
    N = len(contour.E)
    for j in range(N):
        for m in (1, 2):
            fam_j = j if m == 1 else (j - 1) % N
            anchor_idx = contour.anchor_vertex_index(m, fam_j)
            resid = []
            by_p = {}
            for q in range(q_max + 1):
                pts = _band_samples(contour, anchor_idx, q)
                if not pts:
                    continue
                xi = np.array(pts)
                for k in range(min(k_max, contour.K_max) + 1):
                    vals = np.abs(phi_matrix(contour, basis, (m, fam_j, k), xi))
                    vals = vals[: p_max + 1]
                    n_used += vals.size
                    for p in range(vals.shape[0]):
                        v = float(vals[p].max())
                        if v <= 0:
                            continue
                        r_ = math.log(v) + p * log2 + 0.5 * abs(k - q) * logr
                        resid.append(r_)
                        key_adj = math.log(v) + 0.5 * abs(k - q) * logr
                        by_p.setdefault(p, []).append(key_adj)
            key = (m, fam_j)
            c_fit[key] = math.exp(float(np.mean(resid)))
            c_max[key] = math.exp(float(np.max(resid)))
            ps = np.array(sorted(by_p))
            ys = np.array([max(by_p[p]) for p in ps])
            p_slope[key] = float(np.polyfit(ps, ys, 1)[0])
    # polyline families: uniform-in-xi bound c 2^{-p}
    grid = _interior_grid(contour, 60)
    for j in range(N):
        keys = [kk for kk in contour.keys() if kk[0] == 0 and kk[1] == j]
        resid, by_p = [], {}
        for kk in keys[:: max(1, len(keys) // 12)]:
            vals = np.abs(phi_matrix(contour, basis, kk, grid))[: p_max + 1]
            n_used += vals.size
            for p in range(vals.shape[0]):
                v = float(vals[p].max())
                if v <= 0:
                    continue
                r_ = math.log(v) + p * log2
                resid.append(r_)
                by_p.setdefault(p, []).append(math.log(v))
        c_fit[(0, j)] = math.exp(float(np.mean(resid)))
        c_max[(0, j)] = math.exp(float(np.max(resid)))
        ps = np.array(sorted(by_p))
        ys = np.array([max(by_p[p]) for p in ps])
        p_slope[(0, j)] = float(np.polyfit(ps, ys, 1)[0])
    return PhiDecayFit(c_fit, c_max, p_slope, n_used)


def _interior_grid(contour: FMContour, count: int) -> np.ndarray:
    """Deterministic points of the open inner domain."""
    path = boundary_path(contour.domain_r)
    ring = path.sample(max(8, count // 6))
    pts = []
    for tau in (0.2, 0.45, 0.65, 0.8, 0.9, 0.96):
        pts.append(tau * ring)
    out = np.concatenate(pts)
    keep = np.array([contour.domain_r.hull_margin(z) > 1e-9 for z in out])
    return out[keep][:count] if keep.any() else np.array([0.0 + 0.0j])


def interior_grid(contour: FMContour, count: int = 200) -> np.ndarray:
    """Scaled copies of the inner boundary, strictly inside the domain."""
    path = boundary_path(contour.domain_r)
    per_piece = max(2, count // (8 * len(path.pieces)))
    ring = path.sample(per_piece)
    pts = []
    for tau in np.linspace(0.12, 0.96, 8):
        pts.append(tau * ring)
    out = np.concatenate(pts)
    keep = np.array([contour.domain_r.hull_margin(z) > 1e-9 for z in out])
    return out[keep]


@dataclass
class FMCoefficients:
    """Coefficients alpha keyed by band; arrays indexed by p (and component)."""

    values: dict
    bound: float
    hinf_of_h: float

    @property
    def certificate_ratio(self) -> float:
        return self.bound / self.hinf_of_h if self.hinf_of_h > 0 else math.inf


def export_coefficients_csv(coeffs: "FMCoefficients", path) -> None:
    """Write the coefficient table as rows keyed by (m, j, k, p)."""
    rows = []
    for (m, j, k), arr in sorted(coeffs.values.items()):
        flat = np.atleast_2d(arr.T).T if arr.ndim == 1 else arr
        for p in range(arr.shape[0]):
            val = arr[p] if arr.ndim == 1 else np.linalg.norm(arr[p])
            rows.append((m, j, k, p, np.real(val), np.imag(val)))
    arr = np.array(rows, dtype=float)
    np.savetxt(
        path,
        arr,
        delimiter=",",
        header="m,j,k,p,re,im",
        comments="",
        fmt=["%d", "%d", "%d", "%d", "%.17g", "%.17g"],
    )


def alpha_coefficients(contour: FMContour, basis: FMBasis, h, hinf: float | None = None) -> FMCoefficients:
    """Expansion coefficients ``alpha_{m,j,k,p} = int h e_p w |dz|`` for every
    stored band; h maps complex arrays to scalars or component vectors."""
    values = {}
    bound = 0.0
    for b in contour.bands:
        t = basis.nodes_t
        z = b.points(t)
        rows = basis.eval_rows(b.m, t) * basis.scale(b)
        w = basis.nodes_w * basis.weight_values(b, t) * abs(b.half)
        hz = np.asarray(h(z))
        if hz.ndim == 1:
            alpha = rows @ (w * hz)
            bound = max(bound, float(np.max(np.abs(alpha))))
        else:
            alpha = np.einsum("pn,n,nl->pl", rows, w, hz)
            bound = max(bound, float(np.max(np.linalg.norm(alpha, axis=1))))
        values[(b.m, b.j, b.k)] = alpha
    if hinf is None:
        from .geometry import boundary_grid

        zs = boundary_grid(contour.E, contour.s, density=512, min_vertex_distance=1e-9)
        hz = np.asarray(h(zs))
        mags = np.abs(hz) if hz.ndim == 1 else np.linalg.norm(hz, axis=-1)
        hinf = float(np.max(mags))
    return FMCoefficients(values, bound, float(hinf))


def reconstruct(
    contour: FMContour,
    basis: FMBasis,
    coeffs: FMCoefficients,
    xi,
    K_cut: int | None = None,
    P_cut: int | None = None,
    chunk: int = 512,
):
    """Truncated double sum ``sum alpha_{m,j,k,p} Phi_{m,j,k,p}(xi)``.

    Vertex bands use k <= K_cut; every family is truncated at p <= P_cut.
    Polyline pieces are always fully included in k (their index is a
    position, not a scale).
    """
    if K_cut is None:
        K_cut = contour.K_max
    if P_cut is None:
        P_cut = basis.P_max
    xi = np.asarray(xi, dtype=complex)
    flat = xi.ravel()
    first = next(iter(coeffs.values.values()))
    vec = first.ndim > 1
    out = (
        np.zeros((flat.size, first.shape[1]), dtype=complex)
        if vec
        else np.zeros(flat.size, dtype=complex)
    )
    xfac = np.ones_like(flat)
    for v in contour.E:
        xfac = xfac * np.sqrt(1.0 - np.conj(v) * flat)
    sel = [b for b in contour.bands if b.m == 0 or b.k <= K_cut]
    for start in range(0, len(sel), chunk):
        block = sel[start : start + chunk]
        G = np.empty((len(block), basis.order), dtype=complex)
        Z = np.empty((len(block), basis.order), dtype=complex)
        A = np.zeros((len(block), P_cut + 1) + ((first.shape[1],) if vec else ()), dtype=complex)
        for i, b in enumerate(block):
            z, _, g = _band_eval_data(contour, basis, b)
            Z[i], G[i] = z, g
            A[i] = coeffs.values[(b.m, b.j, b.k)][: P_cut + 1]
        Kmat = 1.0 / (Z[:, :, None] - flat[None, None, :])
        for m in set(b.m for b in block):
            idx = [i for i, b in enumerate(block) if b.m == m]
            scls = np.array([basis.scale(block[i]) for i in idx])
            R = basis.eval_rows(m, basis.nodes_t)[: P_cut + 1]
            core = np.einsum("pn,bn,bng->bpg", R, G[idx], Kmat[idx])
            core = core * scls[:, None, None]
            if vec:
                out += np.einsum("bpg,bpl->gl", core, A[idx])
            else:
                out += np.einsum("bpg,bp->g", core, A[idx])
    out = out / (2j * math.pi)
    if vec:
        return (out * xfac[:, None]).reshape(xi.shape + (first.shape[1],))
    return (out * xfac).reshape(xi.shape)


def half_power_sum(
    contour: FMContour,
    basis: FMBasis,
    xi,
    K_cut: int | None = None,
    P_cut: int | None = None,
    include_tail: bool = True,
    chunk: int = 512,
) -> np.ndarray:
    """Truncated ``sum |Phi|^(1/2)`` per point plus a geometric tail bound.

    The p-tail extends each band geometrically from its last computed row
    at the model rate sqrt(1/2) per degree; the k-tail continues each
    vertex family from its last band at the model rate rho^(-1/4).
    """
    if K_cut is None:
        K_cut = contour.K_max
    if P_cut is None:
        P_cut = basis.P_max
    xi = np.asarray(xi, dtype=complex)
    flat = xi.ravel()
    acc = np.zeros(flat.size, dtype=float)
    p_last = np.zeros(flat.size, dtype=float)
    k_last = np.zeros(flat.size, dtype=float)
    xfac = np.ones_like(flat)
    for v in contour.E:
        xfac = xfac * np.sqrt(1.0 - np.conj(v) * flat)
    sel = [b for b in contour.bands if b.m == 0 or b.k <= K_cut]
    for start in range(0, len(sel), chunk):
        block = sel[start : start + chunk]
        for m in set(b.m for b in block):
            idx = [i for i, b in enumerate(block) if b.m == m]
            Z = np.empty((len(idx), basis.order), dtype=complex)
            G = np.empty((len(idx), basis.order), dtype=complex)
            scls = np.empty(len(idx))
            for a, i in enumerate(idx):
                z, _, g = _band_eval_data(contour, basis, block[i])
                Z[a], G[a] = z, g
                scls[a] = basis.scale(block[i])
            rows = basis.eval_rows(m, basis.nodes_t)[: P_cut + 1]
            Kmat = 1.0 / (Z[:, :, None] - flat[None, None, :])
            core = np.einsum("pn,bn,bng->bpg", rows, G, Kmat) * scls[:, None, None]
            vals = np.sqrt(np.abs(core * xfac[None, None, :] / (2j * math.pi)))
            acc += vals.sum(axis=(0, 1))
            p_last += vals[:, -1, :].sum(axis=0)
            if m in (1, 2):
                kk = np.array([block[i].k for i in idx])
                k_last += vals[kk == K_cut].sum(axis=(0, 1))
    if include_tail:
        rp = math.sqrt(0.5)  # ratio of |Phi|^(1/2) terms under the 2^{-p} model
        rk = contour.rho ** (-0.25)
        acc = acc + p_last * rp / (1 - rp) + k_last * rk / (1 - rk)
    return acc.reshape(xi.shape)
