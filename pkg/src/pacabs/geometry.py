"""Low-dimensional convex geometry: boxes, polytopes, and grid partitions.

Everything here uses closed-set semantics: boxes and polytopes include their
boundary, and a shared face counts as an intersection.  All objects are
immutable after construction and all operations are pure, so they can be used
freely from parallel workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

# Absolute tolerance on halfspace residuals; on-boundary points count as
# contained.  Keeping this tight is what makes the sample counting sound.
CONTAINMENT_TOL = 1e-9

# Vertex-to-halfspace conversion is only supported in low dimension.
HULL_MAX_DIM = 6


class GeometryError(Exception):
    """Raised for invalid or degenerate geometric inputs."""


class BoxRelation(enum.Enum):
    DISJOINT = 0
    INTERSECTS = 1
    CONTAINED = 2


def _as_vector(x, name):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise GeometryError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class HyperRectangle:
    """Axis-aligned box given by componentwise lower/upper bounds.

    Degenerate (flat) boxes with ``lower[d] == upper[d]`` are allowed.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _as_vector(self.lower, "lower")
        hi = _as_vector(self.upper, "upper")
        if lo.shape != hi.shape:
            raise GeometryError("lower and upper must have the same length")
        if np.any(lo > hi):
            raise GeometryError("lower bound exceeds upper bound")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def vertices(self) -> np.ndarray:
        """All 2^n corner points, shape (2^n, n)."""
        n = self.dim
        corners = np.array(
            np.meshgrid(*[(self.lower[d], self.upper[d]) for d in range(n)],
                        indexing="ij")
        ).reshape(n, -1).T
        return corners

    def contains_points(self, points, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower - tol) & (pts <= self.upper + tol), axis=1)

    def translate(self, offset) -> "HyperRectangle":
        off = _as_vector(offset, "offset")
        return HyperRectangle(self.lower + off, self.upper + off)

    def minkowski_sum(self, other: "HyperRectangle") -> "HyperRectangle":
        return HyperRectangle(self.lower + other.lower, self.upper + other.upper)

    def scaled(self, factor: float) -> "HyperRectangle":
        """Box scaled by ``factor`` about its center."""
        c, h = self.center, 0.5 * factor * self.widths
        return HyperRectangle(c - h, c + h)

    def __repr__(self):
        parts = "x".join(f"[{l:g},{u:g}]" for l, u in zip(self.lower, self.upper))
        return f"HyperRectangle({parts})"


@dataclass(frozen=True, eq=False)
class VPolytope:
    """Convex polytope in vertex representation (rows of ``vertices``)."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if verts.ndim != 2 or verts.shape[0] == 0:
            raise GeometryError("a polytope needs at least one vertex")
        verts.flags.writeable = False
        object.__setattr__(self, "vertices", verts)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def deduplicated(self, tol: float = 0.0) -> "VPolytope":
        """Canonical copy with exact duplicate vertices removed."""
        if tol == 0.0:
            uniq = np.unique(self.vertices, axis=0)
        else:
            rounded = np.round(self.vertices / tol) * tol
            _, idx = np.unique(rounded, axis=0, return_index=True)
            uniq = self.vertices[np.sort(idx)]
        return VPolytope(uniq)

    def bounding_box(self) -> HyperRectangle:
        return HyperRectangle(self.vertices.min(axis=0), self.vertices.max(axis=0))

    @classmethod
    def from_box(cls, box: HyperRectangle) -> "VPolytope":
        return cls(box.vertices())


@dataclass(frozen=True, eq=False)
class HPolytope:
    """Convex polytope in halfspace representation ``normals @ x <= offsets``."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.normals, dtype=float))
        b = _as_vector(self.offsets, "offsets")
        if a.shape[0] != b.size:
            raise GeometryError("normals and offsets disagree in row count")
        if np.any(np.linalg.norm(a, axis=1) == 0.0):
            raise GeometryError("zero row in halfspace normals")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "normals", a)
        object.__setattr__(self, "offsets", b)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def contains_points(self, points, tol: float = CONTAINMENT_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        residual = pts @ self.normals.T - self.offsets
        return np.all(residual <= tol, axis=1)

    @classmethod
    def from_box(cls, box: HyperRectangle) -> "HPolytope":
        n = box.dim
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([box.upper, -box.lower]))


def bounding_box(points) -> HyperRectangle:
    """Smallest axis-aligned box containing all points (componentwise min/max)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise GeometryError("no points")
    return HyperRectangle(pts.min(axis=0), pts.max(axis=0))


def vhull_to_hrep(poly: VPolytope, tol: float = CONTAINMENT_TOL) -> HPolytope:
    """Convert a vertex-represented polytope to halfspace form.

    Supports dimensions up to ``HULL_MAX_DIM``.  The vertices must span a
    full-dimensional set; flat (degenerate) hulls are rejected with a
    diagnostic, since a halfspace description with tolerance semantics would
    silently misclassify points near the affine hull.
    """
    n = poly.dim
    if n > HULL_MAX_DIM:
        raise GeometryError(
            f"hull construction supports dimension <= {HULL_MAX_DIM}, got {n}")
    verts = poly.deduplicated().vertices
    if n == 1:
        lo, hi = float(verts.min()), float(verts.max())
        if hi - lo <= tol:
            raise GeometryError(
                f"degenerate hull: 1-d vertex spread {hi - lo:.3e} below tolerance")
        return HPolytope(np.array([[1.0], [-1.0]]), np.array([hi, -lo]))
    if verts.shape[0] <= n:
        raise GeometryError(
            f"degenerate hull: {verts.shape[0]} distinct vertices cannot span R^{n}")
    centered = verts - verts.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    if svals[-1] <= max(tol, 1e-12 * svals[0]):
        raise GeometryError(
            "degenerate hull: vertices are flat along some direction "
            f"(singular values {svals[0]:.3e} .. {svals[-1]:.3e})")
    from scipy.spatial import ConvexHull, QhullError

    try:
        hull = ConvexHull(verts)
    except QhullError as exc:  # pragma: no cover - caught by the SVD guard above
        raise GeometryError(f"degenerate hull: qhull failed ({exc})") from exc
    # qhull equations are A x + b <= 0
    return HPolytope(hull.equations[:, :-1], -hull.equations[:, -1])


def polytope_contains_box(poly: HPolytope, box: HyperRectangle,
                          tol: float = CONTAINMENT_TOL) -> bool:
    """True iff every vertex of ``box`` satisfies every halfspace of ``poly``.

    Uses the support function of the box instead of enumerating the 2^n
    vertices: max over the box of ``a @ x`` is ``a+ @ upper + a- @ lower``.
    """
    if poly.dim != box.dim:
        raise GeometryError("dimension mismatch between polytope and box")
    a = poly.normals
    support = np.clip(a, 0.0, None) @ box.upper + np.clip(a, None, 0.0) @ box.lower
    return bool(np.all(support <= poly.offsets + tol))


def polytope_contains_boxes(poly: HPolytope, lowers: np.ndarray,
                            uppers: np.ndarray,
                            tol: float = CONTAINMENT_TOL) -> np.ndarray:
    """Vectorized `polytope_contains_box` over many boxes (rows)."""
    a = poly.normals
    support = np.clip(a, 0.0, None) @ uppers.T + np.clip(a, None, 0.0) @ lowers.T
    return np.all(support <= poly.offsets[:, None] + tol, axis=0)


def box_relation(a: HyperRectangle, b: HyperRectangle) -> BoxRelation:
    """Classify the closed-set relation of box ``a`` against box ``b``.

    Boundary touching counts as intersecting; containment is decided
    componentwise with exact comparisons.
    """
    if a.dim != b.dim:
        raise GeometryError("dimension mismatch between boxes")
    if np.any(a.upper < b.lower) or np.any(a.lower > b.upper):
        return BoxRelation.DISJOINT
    if np.all(a.lower >= b.lower) and np.all(a.upper <= b.upper):
        return BoxRelation.CONTAINED
    return BoxRelation.INTERSECTS


@dataclass(frozen=True, eq=False)
class Partition:
    """Rectangular grid partition of a box-shaped domain.

    Cells are indexed 0..L-1 in C order over the grid.  The point-location
    map ``region_index`` follows the convention that index 0 denotes the
    absorbing region outside the domain and cells map to 1..L.
    """

    domain: HyperRectangle
    grid_shape: tuple
    edges: tuple  # one ascending edge array per dimension
    goal_mask: np.ndarray  # (L,) bool
    unsafe_mask: np.ndarray  # (L,) bool
    safe_domain: HyperRectangle
    goal: HyperRectangle | None = None
    lowers: np.ndarray = field(default=None, repr=False)
    uppers: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_regions(self) -> int:
        return int(np.prod(self.grid_shape))

    def region(self, cell: int) -> HyperRectangle:
        return HyperRectangle(self.lowers[cell], self.uppers[cell])

    @property
    def regions(self) -> list:
        return [self.region(i) for i in range(self.n_regions)]

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lowers + self.uppers)

    def region_index(self, points) -> np.ndarray:
        """Map points to region indices: 0 for outside, 1..L for cells.

        O(n) coordinate arithmetic per point.  Points on interior cell faces
        belong to the higher-index cell; the domain boundary itself is closed.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.ones(pts.shape[0], dtype=bool)
        idx = np.zeros((pts.shape[0], self.dim), dtype=np.int64)
        for d in range(self.dim):
            e = self.edges[d]
            inside &= (pts[:, d] >= e[0]) & (pts[:, d] <= e[-1])
            i = np.searchsorted(e, pts[:, d], side="right") - 1
            idx[:, d] = np.clip(i, 0, len(e) - 2)
        flat = np.ravel_multi_index(idx.T, self.grid_shape)
        return np.where(inside, flat + 1, 0)

    def box_index_ranges(self, lowers: np.ndarray, uppers: np.ndarray):
        """Grid index ranges for a batch of boxes, closed-set semantics.

        Returns ``(cont_lo, cont_hi, touch_lo, touch_hi)`` arrays of shape
        (B, n).  A box is contained in a single cell in dimension d iff
        ``cont_lo == cont_hi`` with the index in range; it touches exactly the
        cells ``touch_lo..touch_hi`` (before clamping to the grid).
        """
        B = lowers.shape[0]
        cont_lo = np.empty((B, self.dim), dtype=np.int64)
        cont_hi = np.empty((B, self.dim), dtype=np.int64)
        touch_lo = np.empty((B, self.dim), dtype=np.int64)
        touch_hi = np.empty((B, self.dim), dtype=np.int64)
        for d in range(self.dim):
            e = self.edges[d]
            cont_lo[:, d] = np.searchsorted(e, lowers[:, d], side="right") - 1
            cont_hi[:, d] = np.searchsorted(e, uppers[:, d], side="left") - 1
            touch_lo[:, d] = np.searchsorted(e, lowers[:, d], side="left") - 1
            touch_hi[:, d] = np.searchsorted(e, uppers[:, d], side="right") - 1
        return cont_lo, cont_hi, touch_lo, touch_hi


def grid_partition(domain: HyperRectangle, counts, goal: HyperRectangle | None = None,
                   unsafe_exclusions=(), safe_domain: HyperRectangle | None = None) -> Partition:
    """Uniform grid partition with goal labeling.

    A cell is a goal cell iff it is contained in ``goal`` and does not touch
    any unsafe exclusion; a cell touching an exclusion is marked unsafe.
    """
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(counts) != domain.dim:
        raise GeometryError("counts must give one cell count per dimension")
    if any(c < 1 for c in counts):
        raise GeometryError("cell counts must be at least 1")
    if np.any(domain.widths <= 0.0):
        raise GeometryError("zero-width domain dimension")
    edges = tuple(np.linspace(domain.lower[d], domain.upper[d], counts[d] + 1)
                  for d in range(domain.dim))
    index_grids = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    idx = np.stack([g.ravel() for g in index_grids], axis=1)  # (L, n)
    lowers = np.stack([edges[d][idx[:, d]] for d in range(domain.dim)], axis=1)
    uppers = np.stack([edges[d][idx[:, d] + 1] for d in range(domain.dim)], axis=1)

    L = lowers.shape[0]
    unsafe_mask = np.zeros(L, dtype=bool)
    for excl in unsafe_exclusions:
        overlap = np.all((lowers <= excl.upper) & (uppers >= excl.lower), axis=1)
        unsafe_mask |= overlap
    goal_mask = np.zeros(L, dtype=bool)
    if goal is not None:
        goal_mask = np.all((lowers >= goal.lower) & (uppers <= goal.upper), axis=1)
        goal_mask &= ~unsafe_mask
    if safe_domain is None:
        safe_domain = domain
    return Partition(domain=domain, grid_shape=counts, edges=edges,
                     goal_mask=goal_mask, unsafe_mask=unsafe_mask,
                     safe_domain=safe_domain, goal=goal,
                     lowers=lowers, uppers=uppers)
