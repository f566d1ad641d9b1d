"""Planes as orthogonal projections, regions, and distance primitives.

A plane is identified with its orthogonal projection matrix, so two planes
are equal exactly when ``plane_distance`` vanishes.  The distance is the
Frobenius norm of the projection difference; for m-planes it is bounded by
``sqrt(2 m)`` and satisfies ``|S - P|_op <= |S - P|_F <= sqrt(2 min(m, n-m)) |S - P|_op``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    algebraic: float = 1e-12
    quadrature: float = 1e-6


TOL = Tolerances()


class GeometryError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Plane:
    """An m-dimensional linear subspace of R^n stored as its projection."""

    proj: np.ndarray
    m: int = field(default=-1)

    def __post_init__(self):
        p = np.asarray(self.proj, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise GeometryError("projection must be a square matrix")
        p = 0.5 * (p + p.T)
        object.__setattr__(self, "proj", _frozen(p))
        m = int(round(np.trace(p))) if self.m < 0 else self.m
        object.__setattr__(self, "m", m)
        tol = TOL.algebraic * max(1, p.shape[0])
        if np.linalg.norm(p @ p - p) > tol or abs(np.trace(p) - m) > tol:
            raise GeometryError("matrix is not an orthogonal projection of rank %d" % m)

    @property
    def n(self) -> int:
        return self.proj.shape[0]

    @property
    def perp(self) -> np.ndarray:
        return np.eye(self.n) - self.proj

    def basis(self) -> np.ndarray:
        """Orthonormal basis (n x m), columns ordered by the eigen-solver."""
        vals, vecs = np.linalg.eigh(self.proj)
        return vecs[:, np.argsort(-vals)[: self.m]]

    def normal_basis(self) -> np.ndarray:
        vals, vecs = np.linalg.eigh(self.proj)
        return vecs[:, np.argsort(vals)[: self.n - self.m]]

    def __eq__(self, other):
        if not isinstance(other, Plane):
            return NotImplemented
        return self.proj.shape == other.proj.shape and plane_distance(self, other) <= TOL.algebraic

    def __hash__(self):
        return hash((self.n, self.m, tuple(np.round(self.proj, 9).ravel())))

    def to_json(self) -> dict:
        return {"n": self.n, "m": self.m, "proj": self.proj.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Plane":
        return cls(np.array(d["proj"], dtype=float), int(d["m"]))


def plane_from_basis(vectors) -> Plane:
    """Plane spanned by the given vectors (rows)."""
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    if v.shape[0] > v.shape[1]:
        raise GeometryError("degenerate basis: more vectors than ambient dimension")
    sing = np.linalg.svd(v, compute_uv=False)
    if sing.size == 0 or sing.min() <= 1e-12 * max(1.0, sing.max()):
        raise GeometryError("degenerate basis")
    q, _ = np.linalg.qr(v.T)
    return Plane(q @ q.T, v.shape[0])


def line(direction) -> Plane:
    return plane_from_basis([direction])


def line_at_angle(theta: float) -> Plane:
    return plane_from_basis([[math.cos(theta), math.sin(theta)]])


def coordinate_plane(n: int, axes: Sequence[int]) -> Plane:
    p = np.zeros((n, n))
    for k in axes:
        p[k, k] = 1.0
    return Plane(p, len(axes))


def plane_distance(S: Plane, P: Plane) -> float:
    if S.proj.shape != P.proj.shape or S.m != P.m:
        raise GeometryError(
            "dimension mismatch: G(%d,%d) vs G(%d,%d)" % (S.n, S.m, P.n, P.m))
    return float(np.linalg.norm(S.proj - P.proj))


def proj_distances(projs: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Frobenius distances from a stack of projections (N, n, n) to one projection."""
    return np.linalg.norm((projs - P).reshape(len(projs), -1), axis=1)


REGION_KINDS = (
    "open-ball", "closed-ball", "truncated-cylinder", "cone-complement",
    "annulus", "half-space", "everything",
)


@dataclass(frozen=True, eq=False)
class Region:
    """Point set used to restrict and measure varifolds.

    ``annulus`` is the set ``s < |x - a| <= r`` (a closed ball minus a closed
    ball), ``half-space`` is ``<x - a, normal> > 0`` and ``cone-complement``
    is ``|P^perp(x - a)| > aperture |P(x - a)|``, optionally intersected with
    the open ball of radius ``radius`` when one is given.
    """

    kind: str
    center: np.ndarray = None
    radius: Optional[float] = None
    height: Optional[float] = None
    inner: Optional[float] = None
    plane: Optional[Plane] = None
    aperture: Optional[float] = None
    normal: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise GeometryError("unknown region kind %r" % self.kind)
        if self.center is not None:
            object.__setattr__(self, "center", _frozen(self.center))
        if self.normal is not None:
            object.__setattr__(self, "normal", _frozen(self.normal))
        if self.radius is not None and not self.radius > 0:
            raise GeometryError("radius must be positive")
        if self.height is not None and not self.height > 0:
            raise GeometryError("height must be positive")
        if self.aperture is not None and not self.aperture > 0:
            raise GeometryError("aperture must be positive")

    def contains(self, x) -> np.ndarray:
        """Vectorised membership; ``x`` may be one point or an (N, n) array."""
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        k = self.kind
        if k == "everything":
            out = np.ones(len(pts), dtype=bool)
        else:
            d = pts - self.center
            if k in ("open-ball", "closed-ball", "annulus"):
                dist = np.linalg.norm(d, axis=1)
                if k == "open-ball":
                    out = dist < self.radius
                elif k == "closed-ball":
                    out = dist <= self.radius
                else:
                    out = (dist > self.inner) & (dist <= self.radius)
            elif k == "truncated-cylinder":
                tang = d @ self.plane.proj
                out = (np.linalg.norm(tang, axis=1) < self.radius) & (
                    np.linalg.norm(d - tang, axis=1) < self.height)
            elif k == "cone-complement":
                tang = d @ self.plane.proj
                out = np.linalg.norm(d - tang, axis=1) > self.aperture * np.linalg.norm(tang, axis=1)
                if self.radius is not None:
                    out &= np.linalg.norm(d, axis=1) < self.radius
            else:
                out = d @ self.normal > 0
        return bool(out[0]) if single else out


def open_ball(a, r) -> Region:
    return Region("open-ball", center=a, radius=r)


def closed_ball(a, r) -> Region:
    return Region("closed-ball", center=a, radius=r)


def annulus(a, s, r) -> Region:
    return Region("annulus", center=a, inner=s, radius=r)


def cylinder(P: Plane, a, r, s) -> Region:
    return Region("truncated-cylinder", center=a, radius=r, height=s, plane=P)


def cone_complement(P: Plane, a, sigma, radius=None) -> Region:
    return Region("cone-complement", center=a, plane=P, aperture=sigma, radius=radius)


def everything() -> Region:
    return Region("everything")


def split(P: Plane, x, a) -> tuple[np.ndarray, np.ndarray]:
    """Tangential and normal parts of ``x - a`` relative to ``P``."""
    d = np.atleast_2d(np.asarray(x, dtype=float)) - a
    tang = d @ P.proj
    return tang, d - tang


def unit_ball_volume(m: int) -> float:
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)
