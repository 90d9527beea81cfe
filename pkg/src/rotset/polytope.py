"""Rotation sets as certified polytopes.

Exact hulls are built for ambient dimension m <= 3 (1D intervals, 2D
monotone chain, 3D via qhull); higher dimensions degrade to a flagged
vertex-cloud mode rather than silently wrong hulls.  Every polytope
carries a certified Hausdorff error to the true rotation set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull as _QHull

from .errors import CapExceeded, NotCertified
from .potentials import LcPotential, PotentialOracle, lc_approximate, orbit_average
from .sft import (DEFAULT_CYCLE_CAP, DEFAULT_WORD_CAP, Sft, count_words,
                  elementary_orbits, is_irreducible)

#: vertex dedup tolerance, lexicographic tie-breaking
DEDUP_TOL = 1e-10
#: relative area threshold for collinear-vertex elimination
AREA_RTOL = 1e-12


@dataclass(frozen=True)
class RotationPolytope:
    """Vertex-minimal polytope with a certified Hausdorff error bound.

    2D vertices are in counterclockwise order starting at the
    lexicographic minimum; other dimensions are lexicographically sorted.
    ``exact`` is False only in the m > 3 vertex-cloud fallback.
    """

    m: int
    vertices: np.ndarray
    hausdorff_error: float
    affine_dim: int
    exact: bool = True

    def __post_init__(self):
        if self.hausdorff_error < 0:
            raise ValueError("hausdorff_error must be >= 0")

    @property
    def nvertices(self) -> int:
        return self.vertices.shape[0]


def _dedup(points: np.ndarray) -> np.ndarray:
    order = np.lexsort(points.T[::-1])
    pts = points[order]
    keep = [pts[0]]
    for p in pts[1:]:
        if np.linalg.norm(p - keep[-1]) > DEDUP_TOL:
            keep.append(p)
    # the sweep can only merge near-equal neighbors in lexicographic order;
    # a second pass catches ties across the sort key boundary
    out: list[np.ndarray] = []
    for p in keep:
        if all(np.linalg.norm(p - q) > DEDUP_TOL for q in out):
            out.append(p)
    return np.array(out)


def _affine_frame(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Centroid, orthonormal spanning directions, affine dimension."""
    c = points.mean(axis=0)
    centered = points - c
    scale = float(np.abs(centered).max())
    if scale == 0.0:
        return c, np.zeros((0, points.shape[1])), 0
    _, s, vt = np.linalg.svd(centered / scale, full_matrices=False)
    rank = int(np.sum(s > 1e-9 * max(1.0, s[0])))
    return c, vt[:rank], rank


def _chain_2d(pts: np.ndarray) -> np.ndarray:
    """Andrew monotone chain, counterclockwise, collinear points dropped."""
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    scale = max(float(np.abs(pts).max()), 1.0)
    area_tol = AREA_RTOL * scale * scale

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def half(seq):
        h: list[np.ndarray] = []
        for p in seq:
            while len(h) >= 2 and cross(h[-2], h[-1], p) <= area_tol:
                h.pop()
            h.append(p)
        return h

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def convex_hull(points: Sequence[Sequence[float]], hausdorff_error: float = 0.0) -> RotationPolytope:
    """Minimal vertex list of the convex hull (exact for m <= 3)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("empty input")
    m = pts.shape[1]
    pts = _dedup(pts)
    c, frame, adim = _affine_frame(pts)
    if adim == 0:
        return RotationPolytope(m=m, vertices=pts[:1], hausdorff_error=hausdorff_error, affine_dim=0)
    if adim == 1:
        t = (pts - c) @ frame[0]
        verts = np.array([pts[int(np.argmin(t))], pts[int(np.argmax(t))]])
        verts = verts[np.lexsort(verts.T[::-1])]
        return RotationPolytope(m=m, vertices=verts, hausdorff_error=hausdorff_error, affine_dim=1)
    if m > 3:
        return RotationPolytope(m=m, vertices=pts, hausdorff_error=hausdorff_error,
                                affine_dim=adim, exact=False)
    if adim == 2:
        if m == 2:
            verts = _chain_2d(pts)
            start = int(np.lexsort(verts.T[::-1])[0])
            verts = np.roll(verts, -start, axis=0)
        else:
            flat = (pts - c) @ frame.T
            lifted = _chain_2d(flat) @ frame + c
            verts = lifted[np.lexsort(lifted.T[::-1])]
        return RotationPolytope(m=m, vertices=verts, hausdorff_error=hausdorff_error, affine_dim=2)
    hull = _QHull(pts)
    verts = pts[hull.vertices]
    verts = verts[np.lexsort(verts.T[::-1])]
    return RotationPolytope(m=m, vertices=verts, hausdorff_error=hausdorff_error, affine_dim=3)


def elementary_hull(
    s: Sft,
    phi: LcPotential,
    word_cap: int = DEFAULT_WORD_CAP,
    cycle_cap: int = DEFAULT_CYCLE_CAP,
) -> RotationPolytope:
    """Hull of the orbit averages over k-elementary periodic orbits.

    For locally constant potentials this IS the rotation set; the
    certified error only covers floating-point summation slack.
    """
    if not is_irreducible(s):
        raise ValueError("not transitive")
    orbits = elementary_orbits(s, phi.k, word_cap=word_cap, cycle_cap=cycle_cap)
    pts = np.array([orbit_average(phi, o) for o in orbits])
    max_period = max(o.period for o in orbits)
    slack = 4.0 * max_period * max(phi.sup_norm(), 1.0) * float(np.finfo(float).eps)
    return convex_hull(pts, hausdorff_error=slack)


def rot_approx(
    oracle: PotentialOracle,
    tol: float,
    word_cap: int = DEFAULT_WORD_CAP,
    cycle_cap: int = DEFAULT_CYCLE_CAP,
) -> RotationPolytope:
    """Polytope within Hausdorff distance tol of the true rotation set."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    phi_eps = lc_approximate(oracle, tol, cap=word_cap)
    hull = elementary_hull(oracle.sft, phi_eps, word_cap=word_cap, cycle_cap=cycle_cap)
    return RotationPolytope(m=hull.m, vertices=hull.vertices, hausdorff_error=tol,
                            affine_dim=hull.affine_dim, exact=hull.exact)


# ---------------------------------------------------------------------------
# Geometry: distances and radii.


def _edges_ccw(verts: np.ndarray):
    n = verts.shape[0]
    for i in range(n):
        yield verts[i], verts[(i + 1) % n]


def _dist_point_segment(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else float(np.clip((x - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(x - (a + t * ab)))


def _dist_point_triangle(x: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    # project onto the triangle plane, then fall back to edges if outside
    u, v = b - a, c - a
    n = np.cross(u, v)
    nn = float(n @ n)
    if nn < 1e-300:
        return min(_dist_point_segment(x, a, b), _dist_point_segment(x, b, c),
                   _dist_point_segment(x, a, c))
    w = x - a
    proj = x - (float(w @ n) / nn) * n
    # barycentric coordinates of the projection
    d00, d01, d11 = float(u @ u), float(u @ v), float(v @ v)
    pw = proj - a
    d20, d21 = float(pw @ u), float(pw @ v)
    denom = d00 * d11 - d01 * d01
    beta = (d11 * d20 - d01 * d21) / denom
    gamma = (d00 * d21 - d01 * d20) / denom
    if beta >= 0 and gamma >= 0 and beta + gamma <= 1:
        return float(np.linalg.norm(x - proj))
    return min(_dist_point_segment(x, a, b), _dist_point_segment(x, b, c),
               _dist_point_segment(x, a, c))


def _inside_ccw(x: np.ndarray, verts: np.ndarray) -> bool:
    for a, b in _edges_ccw(verts):
        if (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]) < 0:
            return False
    return True


def dist_point_polytope(x: Sequence[float], poly: RotationPolytope) -> float:
    """Euclidean distance from a point to the polytope (0 inside)."""
    x = np.asarray(x, dtype=float).reshape(poly.m)
    v = poly.vertices
    if v.shape[0] == 1:
        return float(np.linalg.norm(x - v[0]))
    if poly.m == 1:
        lo, hi = float(v.min()), float(v.max())
        return max(lo - x[0], x[0] - hi, 0.0)
    if v.shape[0] == 2:
        return _dist_point_segment(x, v[0], v[1])
    if poly.m == 2:
        if _inside_ccw(x, v):
            return 0.0
        return min(_dist_point_segment(x, a, b) for a, b in _edges_ccw(v))
    if poly.m == 3:
        if poly.affine_dim == 3:
            hull = _QHull(v)
            margins = hull.equations[:, :3] @ x + hull.equations[:, 3]
            if np.all(margins <= 0):
                return 0.0
            pts = v
            best = np.inf
            for simplex in hull.simplices:
                a, b, c = pts[simplex[0]], pts[simplex[1]], pts[simplex[2]]
                best = min(best, _dist_point_triangle(x, a, b, c))
            return float(best)
        # planar polygon embedded in 3-space: fan triangulation
        base = v[0]
        return float(min(_dist_point_triangle(x, base, v[i], v[i + 1])
                         for i in range(1, v.shape[0] - 1)))
    raise ValueError("distances supported for m <= 3")


def hausdorff_distance(a: RotationPolytope, b: RotationPolytope) -> float:
    """Exact Hausdorff distance between two polytopes (m <= 3).

    The supremum of the distance function over a convex polytope is
    attained at a vertex, so vertex-to-polytope distances suffice.
    """
    if a.m != b.m:
        raise ValueError("dimension mismatch")
    d_ab = max(dist_point_polytope(v, b) for v in a.vertices)
    d_ba = max(dist_point_polytope(v, a) for v in b.vertices)
    return max(d_ab, d_ba)


def boundary_distance(poly: RotationPolytope, w: Sequence[float]) -> float:
    """Distance from an interior point to the polytope boundary (0 outside).

    Equals the min over facets of the supporting-halfspace margin.
    """
    w = np.asarray(w, dtype=float).reshape(poly.m)
    v = poly.vertices
    if poly.affine_dim < poly.m:
        return 0.0
    if poly.m == 1:
        return max(min(w[0] - float(v.min()), float(v.max()) - w[0]), 0.0)
    if poly.m == 2:
        margins = []
        for a, b in _edges_ccw(v):
            e = b - a
            margins.append(((e[0]) * (w[1] - a[1]) - (e[1]) * (w[0] - a[0])) / float(np.linalg.norm(e)))
        return max(min(margins), 0.0)
    if poly.m == 3:
        hull = _QHull(v)
        margins = -(hull.equations[:, :3] @ w + hull.equations[:, 3])
        return max(float(margins.min()), 0.0)
    raise ValueError("inscribed radii supported for m <= 3")


def inscribed_radius(poly: RotationPolytope, w: Sequence[float]) -> float:
    """Certified lower bound on the radius of the largest ball around w
    inside the true rotation set: boundary distance minus the polytope's
    Hausdorff error, floored at 0."""
    if poly.affine_dim < poly.m:
        raise ValueError("degenerate rotation set")
    return max(boundary_distance(poly, w) - poly.hausdorff_error, 0.0)


def interior_radius_via_periodic(
    s: Sft,
    phi: LcPotential,
    w: Sequence[float],
    max_level: int = 60,
    word_cap: int = DEFAULT_WORD_CAP,
    cycle_cap: int = DEFAULT_CYCLE_CAP,
) -> float:
    """Certified positive radius with B(w, r) inside the rotation set.

    Grows the certification level n until the approximate boundary distance
    a_n clears the 2**(-n+1) margin; the procedure is a semi-decision and
    raises NotCertified at the level cap (boundary points never certify).
    """
    hull = elementary_hull(s, phi, word_cap=word_cap, cycle_cap=cycle_cap)
    return _radius_from_poly(hull, w, max_level)


def _radius_from_poly(poly: RotationPolytope, w, max_level: int) -> float:
    if poly.affine_dim < poly.m:
        raise NotCertified("degenerate rotation set has empty interior")
    a = boundary_distance(poly, w) - poly.hausdorff_error
    for n in range(1, max_level + 1):
        margin = 2.0 ** (-n + 1)
        if a > margin and (margin <= a / 64 or n == max_level):
            return a - margin
    raise NotCertified(f"interior not certified within {max_level} levels")


def interior_radius_for_oracle(
    oracle: PotentialOracle,
    w: Sequence[float],
    max_level: int = 40,
    word_cap: int = DEFAULT_WORD_CAP,
    cycle_cap: int = DEFAULT_CYCLE_CAP,
    state_cap: int = 48,
) -> float:
    """Oracle-potential version: approximates the rotation set at level n
    and certifies through the polytope's Hausdorff error bound.

    The certification margin index runs independently of the approximation
    level (our boundary distances are float-exact given the polytope, so a
    coarse polytope already certifies a near-full radius).  When deeper
    levels exceed enumeration caps, the best already-certified radius is
    returned; with no certificate at all the cap propagates.
    """
    best = 0.0
    for n in range(1, max_level + 1):
        tol = 2.0**-n
        # cycle counts blow up super-exponentially in the recoded alphabet;
        # guard structurally instead of aborting mid-enumeration
        k = oracle.modulus(max(0, math.ceil(-math.log2(tol / 2))))
        if count_words(oracle.sft, k) > state_cap and best > 0.0:
            return best
        try:
            poly = rot_approx(oracle, tol, word_cap=word_cap, cycle_cap=cycle_cap)
        except CapExceeded:
            if best > 0.0:
                return best
            raise
        if poly.affine_dim < poly.m:
            continue
        a = boundary_distance(poly, w) - poly.hausdorff_error
        if a > 0.0:
            try:
                best = max(best, _radius_from_poly(poly, w, max_level=60))
            except NotCertified:
                pass
            if best > 0.0 and poly.hausdorff_error <= a / 4.0:
                return best  # deeper approximation cannot improve much
    if best > 0.0:
        return best
    raise NotCertified(f"interior not certified within {max_level} levels")
