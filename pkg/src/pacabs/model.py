"""Parametric linear stochastic systems and their one-step set computations.

The model is ``x' = A(alpha) x + B(alpha) u + q + eta`` where the matrix pair
``(A, B)`` is a convex combination of vertex matrices weighted by an unknown
simplex parameter, ``q`` is an optional bounded disturbance and ``eta`` is
i.i.d. process noise of unknown distribution.  Around a fixed nominal
parameter the module provides the two set-valued primitives the abstraction
needs: one-step backward reachable sets of polytopic targets, and convex
hulls bounding the epistemic error between true and nominal dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .geometry import (
    GeometryError,
    HPolytope,
    HyperRectangle,
    VPolytope,
    vhull_to_hrep,
)

SIMPLEX_TOL = 1e-9
CONDITION_LIMIT = 1e12


class ModelError(Exception):
    """Raised for ill-posed models or invalid model queries."""


class NoiseSource:
    """Source of i.i.d. process-noise vectors.

    ``draw`` consumes from the source's own stream (used when building an
    abstraction, where reproducibility of the exact sample batch matters);
    ``sample`` draws through a caller-provided generator (used by simulation,
    where many independent streams are split from one root seed).
    """

    dim: int

    def draw(self, count: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError


class GaussianNoise(NoiseSource):
    """Zero-or-nonzero-mean Gaussian noise with diagonal covariance."""

    def __init__(self, mean, std, seed: int | None = None):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.std = np.atleast_1d(np.asarray(std, dtype=float))
        if self.std.shape != self.mean.shape or np.any(self.std < 0):
            raise ModelError("std must be nonnegative and match mean in length")
        self.dim = self.mean.size
        self._rng = np.random.default_rng(seed)

    def draw(self, count: int) -> np.ndarray:
        return self.sample(self._rng, count)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal((count, self.dim))

    def reseed(self, seed) -> "GaussianNoise":
        return GaussianNoise(self.mean, self.std, seed)


class ReplayNoise(NoiseSource):
    """Replays a recorded sample buffer, for bit-reproducible abstractions.

    ``draw`` consumes the buffer front-to-back and fails when exhausted;
    ``sample`` bootstraps from the buffer (draws with replacement).
    """

    def __init__(self, samples):
        self.samples = np.atleast_2d(np.asarray(samples, dtype=float))
        self.dim = self.samples.shape[1]
        self._cursor = 0

    def draw(self, count: int) -> np.ndarray:
        if self._cursor + count > self.samples.shape[0]:
            raise ModelError(
                f"replay buffer exhausted: requested {count}, "
                f"{self.samples.shape[0] - self._cursor} left")
        out = self.samples[self._cursor:self._cursor + count]
        self._cursor += count
        return out

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        idx = rng.integers(0, self.samples.shape[0], size=count)
        return self.samples[idx]

    def reset(self):
        self._cursor = 0


@dataclass(eq=False)
class ParametricLinearModel:
    """Linear system with convex-combination parameter uncertainty.

    ``a_mats``/``b_mats`` hold the vertex matrices (shape (r, n, n) and
    (r, n, m)); ``alpha_hat`` is the nominal simplex weight vector.  The
    nominal dynamics matrix must be well conditioned, since backward
    reachability reuses one factorization of it for every action.
    """

    a_mats: np.ndarray
    b_mats: np.ndarray
    alpha_hat: np.ndarray
    control_set: VPolytope
    disturbance_set: HyperRectangle | None = None
    noise: NoiseSource | None = None
    horizon: int = 1
    _lu: tuple = field(default=None, repr=False)
    _control_hrep: HPolytope = field(default=None, repr=False)
    _nominal: tuple = field(default=None, repr=False)

    def __post_init__(self):
        self.a_mats = np.asarray(self.a_mats, dtype=float)
        self.b_mats = np.asarray(self.b_mats, dtype=float)
        self.alpha_hat = np.atleast_1d(np.asarray(self.alpha_hat, dtype=float))
        if self.a_mats.ndim != 3 or self.a_mats.shape[1] != self.a_mats.shape[2]:
            raise ModelError("a_mats must have shape (r, n, n)")
        if self.b_mats.ndim != 3 or self.b_mats.shape[:2] != self.a_mats.shape[:2]:
            raise ModelError("b_mats must have shape (r, n, m)")
        if self.alpha_hat.shape != (self.r,):
            raise ModelError("alpha_hat length must equal the number of vertex matrices")
        _check_simplex(self.alpha_hat, tol=1e-12)
        if self.control_set.dim != self.m:
            raise ModelError("control polytope dimension must equal the input dimension")
        if self.disturbance_set is not None and self.disturbance_set.dim != self.n:
            raise ModelError("disturbance box dimension must equal the state dimension")
        if self.horizon < 0:
            raise ModelError("horizon must be nonnegative")
        a_nom = self.nominal_matrices()[0]
        cond = np.linalg.cond(a_nom)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise ModelError(
                f"nominal dynamics matrix is singular or ill-conditioned (cond={cond:.3e})")
        self._lu = lu_factor(a_nom)

    @property
    def r(self) -> int:
        return self.a_mats.shape[0]

    @property
    def n(self) -> int:
        return self.a_mats.shape[1]

    @property
    def m(self) -> int:
        return self.b_mats.shape[2]

    def combine(self, alpha) -> tuple:
        """Matrix pair at simplex weight ``alpha``: convex combination of the vertices."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        if alpha.shape != (self.r,):
            raise ModelError("alpha length must equal the number of vertex matrices")
        _check_simplex(alpha, tol=SIMPLEX_TOL)
        a = np.einsum("i,ijk->jk", alpha, self.a_mats)
        b = np.einsum("i,ijk->jk", alpha, self.b_mats)
        return a, b

    def nominal_matrices(self) -> tuple:
        if self._nominal is None:
            a = np.einsum("i,ijk->jk", self.alpha_hat, self.a_mats)
            b = np.einsum("i,ijk->jk", self.alpha_hat, self.b_mats)
            self._nominal = (a, b)
        return self._nominal

    def control_hrep(self) -> HPolytope:
        if self._control_hrep is None:
            if self.m == 1:
                verts = self.control_set.vertices[:, 0]
                self._control_hrep = HPolytope(
                    np.array([[1.0], [-1.0]]),
                    np.array([float(verts.max()), -float(verts.min())]))
            else:
                self._control_hrep = vhull_to_hrep(self.control_set)
        return self._control_hrep

    def nominal_step(self, x, u) -> np.ndarray:
        a, b = self.nominal_matrices()
        return a @ np.asarray(x, dtype=float) + b @ np.atleast_1d(np.asarray(u, dtype=float))

    def step(self, x, u, alpha, eta, q=None) -> np.ndarray:
        """One true transition ``A(alpha) x + B(alpha) u + q + eta``.

        The input is checked against the control polytope; the disturbance,
        when the model has one, against its box.
        """
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        eta = np.asarray(eta, dtype=float)
        if not bool(self.control_hrep().contains_points(u)[0]):
            raise ModelError("input outside control polytope")
        a, b = self.combine(alpha)
        out = a @ x + b @ u + eta
        if q is not None:
            q = np.asarray(q, dtype=float)
            if self.disturbance_set is None:
                raise ModelError("model has no disturbance set, but q was given")
            if not bool(self.disturbance_set.contains_points(q)[0]):
                raise ModelError("disturbance outside its box")
            out = out + q
        return out

    def solve_nominal(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``A_nominal @ x = rhs`` (rhs columns) using the cached factorization."""
        return lu_solve(self._lu, rhs)


def _check_simplex(alpha: np.ndarray, tol: float):
    if np.any(alpha < -tol) or abs(float(alpha.sum()) - 1.0) > tol:
        raise ModelError(
            f"weights must lie in the unit simplex (sum={alpha.sum():.12g})")


def backward_reach_set(model: ParametricLinearModel, target: VPolytope) -> VPolytope:
    """One-step backward reachable set of ``target`` under the nominal dynamics.

    For every pair of a target vertex t and a control vertex u the point x
    with ``A x + B u = t`` is a vertex of the backward reachable set, and the
    set equals the convex hull of these d*q points.
    """
    a_nom, b_nom = model.nominal_matrices()
    t_verts = target.vertices  # (d, n)
    u_verts = model.control_set.vertices  # (q, m)
    bu = u_verts @ b_nom.T  # (q, n)
    rhs = (t_verts[:, None, :] - bu[None, :, :]).reshape(-1, model.n)  # (d*q, n)
    sols = model.solve_nominal(rhs.T).T
    return VPolytope(sols)


def epistemic_error_hull(model: ParametricLinearModel,
                         region) -> VPolytope:
    """Convex hull bounding all epistemic errors over a region and the input set.

    The hull spans ``(A_i - A_nom) v + (B_i - B_nom) u`` for every vertex
    matrix i, region vertex v and control vertex u; it overapproximates the
    true error set (inclusion may be strict).  When the model carries a
    disturbance box, the hull is Minkowski-extended by it.
    """
    if isinstance(region, HyperRectangle):
        v_verts = region.vertices()
    elif isinstance(region, VPolytope):
        v_verts = region.vertices
    else:
        raise ModelError("region must be a box or a vertex polytope")
    a_nom, b_nom = model.nominal_matrices()
    da = model.a_mats - a_nom  # (r, n, n)
    db = model.b_mats - b_nom  # (r, n, m)
    u_verts = model.control_set.vertices
    x_part = np.einsum("rij,vj->rvi", da, v_verts)  # (r, p, n)
    u_part = np.einsum("rij,uj->rui", db, u_verts)  # (r, q, n)
    pts = (x_part[:, :, None, :] + u_part[:, None, :, :]).reshape(-1, model.n)
    if model.disturbance_set is not None:
        q_verts = model.disturbance_set.vertices()
        pts = (pts[:, None, :] + q_verts[None, :, :]).reshape(-1, model.n)
    return VPolytope(pts).deduplicated()


def epistemic_error_boxes(model: ParametricLinearModel, lowers: np.ndarray,
                          uppers: np.ndarray) -> tuple:
    """Bounding boxes of the epistemic error hulls for a batch of region boxes.

    Returns ``(box_lo, box_hi)`` of shape (L, n).  Exact bounding boxes of
    the hulls from `epistemic_error_hull`: per vertex matrix the x-part and
    u-part extremes add componentwise, and the overall box is the
    componentwise envelope over the vertex matrices.
    """
    a_nom, b_nom = model.nominal_matrices()
    da = model.a_mats - a_nom
    db = model.b_mats - b_nom
    # x-part over box vertices: support of (A_i - A_nom) x over the box
    pos = np.clip(da, 0.0, None)
    neg = np.clip(da, None, 0.0)
    x_hi = np.einsum("rij,lj->rli", pos, uppers) + np.einsum("rij,lj->rli", neg, lowers)
    x_lo = np.einsum("rij,lj->rli", pos, lowers) + np.einsum("rij,lj->rli", neg, uppers)
    u_pts = np.einsum("rij,uj->rui", db, model.control_set.vertices)  # (r, q, n)
    u_hi = u_pts.max(axis=1)  # (r, n)
    u_lo = u_pts.min(axis=1)
    box_hi = (x_hi + u_hi[:, None, :]).max(axis=0)
    box_lo = (x_lo + u_lo[:, None, :]).min(axis=0)
    if model.disturbance_set is not None:
        box_hi = box_hi + model.disturbance_set.upper
        box_lo = box_lo + model.disturbance_set.lower
    return box_lo, box_hi


@dataclass(eq=False)
class ActionTargets:
    """Finite family of polytopic target sets, one abstract action each.

    ``boxes`` is set when every target is axis-aligned (the default
    cell-centered family), which unlocks the fast counting paths;
    ``representative_points`` are the steering points used by the online
    controller and must lie inside their targets.
    """

    polytopes: list
    representative_points: np.ndarray
    boxes_lo: np.ndarray | None = None
    boxes_hi: np.ndarray | None = None
    _hreps: list = field(default=None, repr=False)

    def __post_init__(self):
        self.representative_points = np.atleast_2d(
            np.asarray(self.representative_points, dtype=float))
        if len(self.polytopes) != self.representative_points.shape[0]:
            raise ModelError("one representative point per target is required")
        self._hreps = [None] * len(self.polytopes)

    def __len__(self):
        return len(self.polytopes)

    @property
    def n_actions(self) -> int:
        return len(self.polytopes)

    def target(self, action: int) -> VPolytope:
        return self.polytopes[action]

    def box(self, action: int) -> HyperRectangle | None:
        if self.boxes_lo is None:
            return None
        return HyperRectangle(self.boxes_lo[action], self.boxes_hi[action])

    def hrep(self, action: int) -> HPolytope:
        if self._hreps[action] is None:
            box = self.box(action)
            self._hreps[action] = (HPolytope.from_box(box) if box is not None
                                   else vhull_to_hrep(self.polytopes[action]))
        return self._hreps[action]

    @classmethod
    def from_boxes(cls, boxes, representative_points=None) -> "ActionTargets":
        boxes = list(boxes)
        lo = np.stack([b.lower for b in boxes])
        hi = np.stack([b.upper for b in boxes])
        reps = (0.5 * (lo + hi) if representative_points is None
                else np.asarray(representative_points, dtype=float))
        out = cls(polytopes=[VPolytope.from_box(b) for b in boxes],
                  representative_points=reps, boxes_lo=lo, boxes_hi=hi)
        inside = (reps >= lo - 1e-12) & (reps <= hi + 1e-12)
        if not np.all(inside):
            raise ModelError("a representative point lies outside its target box")
        return out

    @classmethod
    def cells(cls, partition, scale: float = 1.0) -> "ActionTargets":
        """One target per partition cell, scaled about the cell center."""
        centers = partition.centers
        half = 0.5 * scale * (partition.uppers - partition.lowers)
        lo, hi = centers - half, centers + half
        boxes = [HyperRectangle(lo[i], hi[i]) for i in range(lo.shape[0])]
        return cls.from_boxes(boxes, centers)

    @classmethod
    def from_polytopes(cls, polytopes, representative_points) -> "ActionTargets":
        out = cls(polytopes=list(polytopes),
                  representative_points=representative_points)
        for ell in range(len(out)):
            hrep = out.hrep(ell)
            if not bool(hrep.contains_points(out.representative_points[ell])[0]):
                raise ModelError("a representative point lies outside its target")
        return out
