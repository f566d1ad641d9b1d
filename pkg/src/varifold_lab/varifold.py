"""Quadrature varifolds built from analytic scenes.

A ``QuadratureVarifold`` is a finite weighted sum of atoms ``w_i * delta_(x_i, S_i)``.
Every atom comes from one midpoint-rule cell of an analytic primitive, so
positions, tangent planes, mean curvature ``H`` and the second fundamental
form ``B`` are exact at the cell midpoint; only the weights are quadrature.

``B`` is stored per atom as an ``(n, n, n)`` array with ``B[i] = D_{S e_i} T``,
the derivative of the tangent projection along the tangential direction
``S e_i``.  The mean curvature is recovered as ``H_j = sum_ik B[i, j, k] S[k, i]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .geometry import Plane, Region, TOL, plane_from_basis, unit_ball_volume

SCENE_VERSION = 1


class SceneError(ValueError):
    """Malformed scene description; ``path`` locates the offending entry."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__("%s: %s" % (path, message) if path else message)


class MissingFieldError(ValueError):
    pass


class ZeroVarifoldError(ValueError):
    pass


def _ro(a):
    if a is None:
        return None
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Atom:
    x: np.ndarray
    S: Plane
    w: float
    H: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    fval: Optional[np.ndarray] = None
    dfval: Optional[np.ndarray] = None


def trace_contraction(B: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Mean curvature from the second fundamental form (works on stacks)."""
    if B.ndim == 3:
        return np.einsum("ijk,ki->j", B, S)
    return np.einsum("aijk,aki->aj", B, S)


def curve_sff(tau: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    """``B`` for a curve with unit tangent ``tau`` and curvature vector ``kappa``."""
    dT = np.einsum("ai,aj->aij", kappa, tau) + np.einsum("ai,aj->aij", tau, kappa)
    return np.einsum("ai,ajk->aijk", tau, dT)


@dataclass(frozen=True, eq=False)
class QuadratureVarifold:
    """Finite atomic m-varifold in R^n.

    ``ids`` are stable atom identifiers inherited through restrictions, and
    ``piece`` labels the scene piece (one line of a fan, one arch, ...) an
    atom came from.  ``h`` is the geometric diameter of the atom's cell.
    """

    n: int
    m: int
    x: np.ndarray
    S: np.ndarray
    w: np.ndarray
    h: np.ndarray
    H: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    fval: Optional[np.ndarray] = None
    dfval: Optional[np.ndarray] = None
    ids: Optional[np.ndarray] = None
    piece: Optional[np.ndarray] = None
    scene: dict = field(default_factory=dict)

    def __post_init__(self):
        N = len(self.w)
        for name in ("x", "S", "w", "h", "H", "B", "fval", "dfval"):
            object.__setattr__(self, name, _ro(getattr(self, name)))
        ids = np.arange(N) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        piece = np.zeros(N, dtype=np.int64) if self.piece is None else np.asarray(self.piece, dtype=np.int64)
        ids.flags.writeable = False
        piece.flags.writeable = False
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "piece", piece)
        if self.x.shape != (N, self.n) or self.S.shape != (N, self.n, self.n):
            raise ValueError("atom arrays have inconsistent shapes")
        if N and not np.all(self.w > 0):
            raise ValueError("atom weights must be positive")

    def __len__(self) -> int:
        return len(self.w)

    @property
    def is_zero(self) -> bool:
        return len(self.w) == 0

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.w))

    @property
    def atoms(self) -> list[Atom]:
        out = []
        for i in range(len(self)):
            out.append(Atom(
                self.x[i], Plane(self.S[i], self.m), float(self.w[i]),
                None if self.H is None else self.H[i],
                None if self.B is None else self.B[i],
                None if self.fval is None else self.fval[i],
                None if self.dfval is None else self.dfval[i]))
        return out

    def subset(self, mask, note: Optional[str] = None) -> "QuadratureVarifold":
        mask = np.asarray(mask)
        take = lambda a: None if a is None else a[mask]
        scene = dict(self.scene)
        if note is not None:
            scene["restrictions"] = list(scene.get("restrictions", [])) + [note]
        return QuadratureVarifold(
            self.n, self.m, self.x[mask], self.S[mask], self.w[mask], self.h[mask],
            take(self.H), take(self.B), take(self.fval), take(self.dfval),
            self.ids[mask], self.piece[mask], scene)

    def with_values(self, fval, dfval=None) -> "QuadratureVarifold":
        """Attach a sampled Y-valued function and its sampled weak derivative."""
        fval = np.asarray(fval, dtype=float).reshape(len(self), -1)
        if dfval is not None:
            dfval = np.asarray(dfval, dtype=float).reshape(len(self), fval.shape[1], self.n)
        return replace(self, fval=fval, dfval=dfval)

    def weight_scaled(self, c: float) -> "QuadratureVarifold":
        return replace(self, w=self.w * c)

    def dilate(self, c: float, center=None) -> "QuadratureVarifold":
        """Image under ``x -> center + c (x - center)``; weights scale by ``c^m``."""
        a = np.zeros(self.n) if center is None else np.asarray(center, dtype=float)
        return replace(
            self, x=a + c * (self.x - a), w=self.w * c ** self.m, h=self.h * c,
            H=None if self.H is None else self.H / c,
            B=None if self.B is None else self.B / c,
            dfval=None if self.dfval is None else self.dfval / c)

    def atom_check(self, tol: float = 1e-8) -> float:
        """Largest ``|H - trace_S B| / max(1, |H|)`` over atoms carrying both fields."""
        if self.H is None or self.B is None or self.is_zero:
            return 0.0
        ok = ~(np.isnan(self.H).any(axis=1) | np.isnan(self.B).reshape(len(self), -1).any(axis=1))
        if not ok.any():
            return 0.0
        scale = np.maximum(1.0, np.linalg.norm(self.H[ok], axis=1))
        err = np.linalg.norm(self.H[ok] - trace_contraction(self.B[ok], self.S[ok]), axis=1) / scale
        worst = float(err.max())
        if worst > tol:
            raise ValueError("trace identity violated by %.3g at atom %d" % (worst, int(self.ids[ok][err.argmax()])))
        return worst


def combine(*vs: QuadratureVarifold) -> QuadratureVarifold:
    """Sum of varifolds (concatenated atom lists)."""
    vs = [v for v in vs]
    n, m = vs[0].n, vs[0].m

    def cat(name):
        arrs = [getattr(v, name) for v in vs]
        if all(a is None for a in arrs):
            return None
        if any(a is None for a in arrs):
            proto = next(a for a in arrs if a is not None)
            arrs = [np.full((len(v),) + proto.shape[1:], np.nan) if a is None else a for a, v in zip(arrs, vs)]
        return np.concatenate(arrs)

    return QuadratureVarifold(
        n, m, cat("x"), cat("S"), cat("w"), cat("h"), cat("H"), cat("B"), cat("fval"), cat("dfval"),
        np.concatenate([v.ids for v in vs]), np.concatenate([v.piece for v in vs]),
        {"combined": [v.scene for v in vs]})


# --------------------------------------------------------------------------
# scene description

PRIMITIVE_KINDS = ("plane-patch", "segment", "circle-arc", "graph-curve", "line-fan", "sine-zeros")
GRAPH_FUNCTIONS = ("affine", "power", "quadratic")


@dataclass
class SceneSpec:
    n: int
    m: int
    primitives: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"version": SCENE_VERSION, "n": self.n, "m": self.m, "primitives": self.primitives}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, doc: Union[str, dict]) -> "SceneSpec":
        if isinstance(doc, str):
            try:
                doc = json.loads(doc)
            except json.JSONDecodeError as e:
                raise SceneError("invalid JSON (%s)" % e.msg, "line %d column %d" % (e.lineno, e.colno))
        if not isinstance(doc, dict):
            raise SceneError("scene must be a JSON object", "$")
        for key in ("n", "m", "primitives"):
            if key not in doc:
                raise SceneError("missing key %r" % key, "$")
        n, m = doc["n"], doc["m"]
        if not (isinstance(n, int) and isinstance(m, int) and 1 <= m <= n):
            raise SceneError("need integers 1 <= m <= n", "$.n")
        if not isinstance(doc["primitives"], list):
            raise SceneError("must be a list", "$.primitives")
        spec = cls(n, m, [dict(p) for p in doc["primitives"]])
        spec.validate()
        return spec

    def validate(self) -> None:
        for i, p in enumerate(self.primitives):
            path = "$.primitives[%d]" % i
            if not isinstance(p, dict):
                raise SceneError("primitive must be an object", path)
            kind = p.get("kind")
            if kind not in PRIMITIVE_KINDS:
                raise SceneError("unknown primitive %r" % (kind,), path + ".kind")
            mult = p.get("multiplicity", 1)
            if not (isinstance(mult, int) and mult >= 1):
                raise SceneError("multiplicity must be a positive integer", path + ".multiplicity")
            res = p.get("resolution", 256)
            if not (isinstance(res, int) and res >= 8):
                raise SceneError("resolution must be an integer >= 8", path + ".resolution")
            curve_kinds = ("segment", "circle-arc", "graph-curve", "line-fan", "sine-zeros")
            if kind in curve_kinds and self.m != 1:
                raise SceneError("%s requires m = 1" % kind, path + ".kind")
            if kind in ("graph-curve", "sine-zeros") and self.n != 2:
                raise SceneError("%s requires n = 2" % kind, path + ".kind")
            for key in ("center", "start", "end", "origin"):
                if key in p and not (isinstance(p[key], list) and len(p[key]) == self.n
                                     and all(isinstance(v, (int, float)) for v in p[key])):
                    raise SceneError("expected %d coordinates" % self.n, path + "." + key)


def _cells(lo: float, hi: float, resolution: int, grade=None) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints and widths of a 1-D cell partition of ``[lo, hi]``.

    ``grade = {"at": c, "ratio": q, "core": h0}`` refines geometrically
    towards ``c``: boundaries at ``c +- h0 q^k``.
    """
    if not hi > lo:
        raise SceneError("zero-measure interval [%g, %g]" % (lo, hi))
    if grade is None:
        edges = np.linspace(lo, hi, resolution + 1)
    else:
        c = float(grade.get("at", 0.0))
        q = float(grade.get("ratio", 1.1))
        h0 = float(grade["core"])
        if not (q > 1 and h0 > 0 and lo <= c <= hi):
            raise SceneError("invalid grading")
        edges = {c, lo, hi}
        t = h0
        while c + t < hi or c - t > lo:
            if c + t < hi:
                edges.add(c + t)
            if c - t > lo:
                edges.add(c - t)
            t *= q
        edges = np.array(sorted(edges))
    mids = 0.5 * (edges[1:] + edges[:-1])
    return mids, np.diff(edges)


class _Builder:
    def __init__(self, n, m):
        self.n, self.m = n, m
        self.parts = []
        self.pieces = []

    def add(self, x, S, w, h, H, B, prim, sub, mult):
        piece = len(self.pieces)
        self.pieces.append({"primitive": prim, "sub": sub, "multiplicity": mult})
        self.parts.append((x, S, w * mult, h, H, B, np.full(len(w), piece)))

    def add_curve(self, x, tau, kappa, w, h, prim, sub, mult):
        S = np.einsum("ai,aj->aij", tau, tau)
        self.add(x, S, w, h, kappa, curve_sff(tau, kappa), prim, sub, mult)

    def add_flat(self, x, P: np.ndarray, w, h, prim, sub, mult):
        N, n = len(w), self.n
        self.add(x, np.broadcast_to(P, (N, n, n)), w, h, np.zeros((N, n)), np.zeros((N, n, n, n)), prim, sub, mult)


def _vec(p, key, n, default=None):
    if key not in p:
        if default is None:
            raise SceneError("missing key %r" % key)
        return np.asarray(default, dtype=float)
    return np.asarray(p[key], dtype=float)


def _frame(p, n):
    basis = p.get("basis")
    if basis is None:
        b1, b2 = np.eye(n)[0], np.eye(n)[1]
    else:
        b1, b2 = (np.asarray(v, dtype=float) for v in basis)
        b1 = b1 / np.linalg.norm(b1)
        b2 = b2 - (b2 @ b1) * b1
        b2 = b2 / np.linalg.norm(b2)
    return b1, b2


def _segment(b: _Builder, start, end, res, prim, sub, mult, grade=None):
    d = end - start
    L = float(np.linalg.norm(d))
    if L <= 0:
        raise SceneError("zero-measure segment")
    tau = d / L
    t, dt = _cells(0.0, L, res, grade)
    x = start + np.outer(t, tau)
    b.add_flat(x, np.outer(tau, tau), dt, dt, prim, sub, mult)


def _plane_patch(b: _Builder, p, prim, mult):
    n, m = b.n, b.m
    center = _vec(p, "center", n, np.zeros(n))
    extent = float(p.get("extent", 1.0))
    if not extent > 0:
        raise SceneError("zero-measure plane patch")
    if "angle" in p:
        basis = np.array([[math.cos(p["angle"]), math.sin(p["angle"])] + [0.0] * (n - 2)])
    else:
        basis = np.asarray(p.get("basis", np.eye(n)[:m]), dtype=float)
    if basis.shape != (m, n):
        raise SceneError("plane patch basis must hold %d vectors of length %d" % (m, n))
    P = plane_from_basis(basis)
    E = P.basis()
    if m == 1:
        E = basis.T / np.linalg.norm(basis)
    res = int(p.get("resolution", 256))
    grade = p.get("grading")
    if grade is not None:
        grade = dict(grade, at=0.0)
    if m == 1:
        t, dt = _cells(-extent, extent, res, grade)
        b.add_flat(center + np.outer(t, E[:, 0]), P.proj, dt, dt, prim, 0, mult)
    elif m == 2:
        if grade is None:
            edges = np.linspace(0.0, extent, res + 1)
        else:
            mids, widths = _cells(0.0, extent, res, dict(grade, at=0.0))
            edges = np.concatenate([[0.0], np.cumsum(widths)])
        xs, ws, hs = [], [], []
        for j in range(len(edges) - 1):
            r0, r1 = edges[j], edges[j + 1]
            dr = r1 - r0
            rm = 0.5 * (r0 + r1)
            k = max(8, int(math.ceil(2 * math.pi * rm / dr)))
            th = (np.arange(k) + 0.5) * (2 * math.pi / k)
            xs.append(center + rm * (np.outer(np.cos(th), E[:, 0]) + np.outer(np.sin(th), E[:, 1])))
            ws.append(np.full(k, (2 * math.pi / k) * 0.5 * (r1 * r1 - r0 * r0)))
            hs.append(np.full(k, max(dr, r1 * 2 * math.pi / k)))
        b.add_flat(np.concatenate(xs), P.proj, np.concatenate(ws), np.concatenate(hs), prim, 0, mult)
    else:
        hcell = 2 * extent / res
        axis = -extent + (np.arange(res) + 0.5) * hcell
        grid = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), -1).reshape(-1, m)
        grid = grid[np.linalg.norm(grid, axis=1) <= extent]
        b.add_flat(center + grid @ E.T, P.proj, np.full(len(grid), hcell ** m),
                   np.full(len(grid), hcell * math.sqrt(m)), prim, 0, mult)


def _circle_arc(b: _Builder, p, prim, mult):
    n = b.n
    c = _vec(p, "center", n, np.zeros(n))
    R = float(p.get("radius", 1.0))
    th0, th1 = p.get("angles", [0.0, 2 * math.pi])
    if not (R > 0 and th1 > th0):
        raise SceneError("zero-measure circle arc")
    b1, b2 = _frame(p, n)
    th, dth = _cells(float(th0), float(th1), int(p.get("resolution", 256)), p.get("grading"))
    radial = np.outer(np.cos(th), b1) + np.outer(np.sin(th), b2)
    tau = -np.outer(np.sin(th), b1) + np.outer(np.cos(th), b2)
    b.add_curve(c + R * radial, tau, -radial / R, R * dth, R * dth, prim, 0, mult)


def graph_function(fn: dict) -> Callable[[np.ndarray], tuple]:
    """``x -> (u, u', u'')`` for the built-in graph functions."""
    kind = fn.get("id")
    if kind == "affine":
        a, c = float(fn.get("slope", 0.0)), float(fn.get("intercept", 0.0))
        return lambda x: (a * x + c, np.full_like(x, a), np.zeros_like(x))
    if kind in ("power", "quadratic"):
        c = float(fn.get("coef", 1.0))
        p = 2.0 if kind == "quadratic" else float(fn["exponent"])
        odd = bool(fn.get("odd", False))

        def u(x):
            ax = np.abs(x)
            sg = np.sign(x)
            val = c * ax ** p
            d1 = c * p * ax ** (p - 1)
            with np.errstate(divide="ignore", invalid="ignore"):
                d2 = c * p * (p - 1) * ax ** (p - 2)
            if odd:
                return sg * val, d1, sg * d2
            return val, sg * d1, d2
        return u
    raise SceneError("unknown graph function %r" % (kind,))


def _graph_curve(b: _Builder, p, prim, mult, sub=0):
    x0, x1 = (float(v) for v in p.get("interval", [-1.0, 1.0]))
    origin = _vec(p, "origin", 2, np.zeros(2))
    xs, dx = _cells(x0, x1, int(p.get("resolution", 256)), p.get("grading"))
    u, du, ddu = graph_function(p.get("function", {}))(xs)
    speed = np.sqrt(1 + du * du)
    tau = np.stack([1 / speed, du / speed], -1)
    kap = (ddu / speed ** 4)[:, None] * np.stack([-du, np.ones_like(du)], -1)
    pts = origin + np.stack([xs, u], -1)
    b.add_curve(pts, tau, kap, speed * dx, speed * dx, prim, sub, mult)


def _line_fan(b: _Builder, p, prim, mult):
    n = b.n
    c = _vec(p, "center", n, np.zeros(n))
    R = float(p.get("radius", 1.0))
    b1, b2 = _frame(p, n)
    angles = p.get("angles", [])
    if not angles:
        raise SceneError("zero-measure line fan")
    grade = p.get("grading")
    if grade is not None:
        grade = dict(grade, at=R)
    for k, th in enumerate(angles):
        d = math.cos(th) * b1 + math.sin(th) * b2
        _segment(b, c - R * d, c + R * d, int(p.get("resolution", 256)), prim, k, mult, grade)


def _sine_zeros(b: _Builder, p, prim, mult):
    zeros = sorted(float(z) for z in p.get("zeros", []))
    c = float(p.get("amplitude", 0.5))
    res = int(p.get("resolution", 32))
    if p.get("odd_reflection", False):
        if zeros[0] != 0.0:
            zeros = [0.0] + zeros
        zeros = [-z for z in zeros[::-1] if z > 0] + zeros
    if len(zeros) < 2:
        raise SceneError("zero-measure sine scene")
    for k in range(len(zeros) - 1):
        z0, z1 = zeros[k], zeros[k + 1]
        wdt = z1 - z0
        if not wdt > 0:
            raise SceneError("overlapping arches at zero %g" % z0)
        sgn = 1.0 if k % 2 == 0 else -1.0
        xs, dx = _cells(z0, z1, res)
        ph = math.pi * (xs - z0) / wdt
        u = sgn * c * wdt * np.sin(ph)
        du = sgn * c * math.pi * np.cos(ph)
        ddu = -sgn * c * math.pi ** 2 / wdt * np.sin(ph)
        speed = np.sqrt(1 + du * du)
        tau = np.stack([1 / speed, du / speed], -1)
        kap = (ddu / speed ** 4)[:, None] * np.stack([-du, np.ones_like(du)], -1)
        b.add_curve(np.stack([xs, u], -1), tau, kap, speed * dx, speed * dx, prim, k, mult)


def build_scene(spec: Union[SceneSpec, dict, str]) -> QuadratureVarifold:
    """Quadrature varifold for a scene: one midpoint-rule atom per cell."""
    if not isinstance(spec, SceneSpec):
        spec = SceneSpec.from_json(spec)
    spec.validate()
    b = _Builder(spec.n, spec.m)
    for i, p in enumerate(spec.primitives):
        kind = p["kind"]
        mult = int(p.get("multiplicity", 1))
        try:
            if kind == "plane-patch":
                _plane_patch(b, p, i, mult)
            elif kind == "segment":
                _segment(b, _vec(p, "start", spec.n), _vec(p, "end", spec.n),
                         int(p.get("resolution", 256)), i, 0, mult, p.get("grading"))
            elif kind == "circle-arc":
                _circle_arc(b, p, i, mult)
            elif kind == "graph-curve":
                _graph_curve(b, p, i, mult)
            elif kind == "line-fan":
                _line_fan(b, p, i, mult)
            elif kind == "sine-zeros":
                _sine_zeros(b, p, i, mult)
        except SceneError as e:
            raise SceneError(str(e), "$.primitives[%d]" % i) from None
    if not b.parts:
        x = np.zeros((0, spec.n))
        return QuadratureVarifold(spec.n, spec.m, x, np.zeros((0, spec.n, spec.n)), np.zeros(0),
                                  np.zeros(0), scene={"spec": spec.to_json(), "pieces": []})
    cols = list(zip(*b.parts))
    V = QuadratureVarifold(
        spec.n, spec.m, np.concatenate(cols[0]), np.concatenate(cols[1]), np.concatenate(cols[2]),
        np.concatenate(cols[3]), np.concatenate(cols[4]), np.concatenate(cols[5]),
        piece=np.concatenate(cols[6]), scene={"spec": spec.to_json(), "pieces": b.pieces})
    V.atom_check()
    return V


def scene(n: int, m: int, *primitives: dict) -> QuadratureVarifold:
    """Shorthand: ``scene(2, 1, {"kind": "plane-patch", ...})``."""
    return build_scene(SceneSpec(n, m, [dict(p) for p in primitives]))


# --------------------------------------------------------------------------
# reductions

def _mask(V: QuadratureVarifold, R) -> np.ndarray:
    if R is None:
        return np.ones(len(V), dtype=bool)
    if isinstance(R, Region):
        return R.contains(V.x) if len(V) else np.zeros(0, dtype=bool)
    if callable(R):
        return np.asarray(R(V), dtype=bool)
    return np.asarray(R, dtype=bool)


def mass(V: QuadratureVarifold, R=None) -> float:
    """Sum of the weights of atoms whose position lies in ``R``."""
    if V.is_zero:
        return 0.0
    return float(np.sum(V.w[_mask(V, R)]))


def field_norms(V: QuadratureVarifold, name: str) -> np.ndarray:
    """Pointwise norms of ``H`` (Euclidean), ``B`` or ``df`` (Frobenius)."""
    arr = {"H": V.H, "B": V.B, "df": V.dfval, "dfval": V.dfval}[name]
    if arr is None:
        if V.is_zero:
            return np.zeros(0)
        raise MissingFieldError("field %s missing on atom %d" % (name, int(V.ids[0])))
    return np.linalg.norm(arr.reshape(len(V), -1), axis=1)


def lq_seminorm(V: QuadratureVarifold, R, field: str, q: float) -> float:
    """``(sum_{x_i in R} w_i |field_i|^q)^(1/q)``; ``q = inf`` gives the essential sup."""
    if not q >= 1:
        raise ValueError("q must be >= 1")
    mask = _mask(V, R)
    if not mask.any():
        return 0.0
    sub = V.subset(mask)
    vals = field_norms(sub, field)
    bad = np.isnan(vals)
    if bad.any():
        raise MissingFieldError("field %s missing on atom %d" % (field, int(sub.ids[np.argmax(bad)])))
    if math.isinf(q):
        return float(vals.max())
    return float(np.sum(sub.w * vals ** q) ** (1.0 / q))


@dataclass(frozen=True)
class TestField:
    """Smooth vector field ``g`` with closed-form Jacobian ``Dg[j, k] = d g_j / d x_k``."""

    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    __test__ = False


def constant_field(v) -> TestField:
    v = np.asarray(v, dtype=float)
    return TestField(lambda x: np.broadcast_to(v, x.shape).copy(),
                     lambda x: np.zeros((len(x), len(v), len(v))), "constant")


def linear_field(A, b=None) -> TestField:
    A = np.asarray(A, dtype=float)
    b = np.zeros(len(A)) if b is None else np.asarray(b, dtype=float)
    return TestField(lambda x: x @ A.T + b, lambda x: np.broadcast_to(A, (len(x),) + A.shape).copy(), "linear")


def radial_field(center) -> TestField:
    c = np.asarray(center, dtype=float)
    return linear_field(np.eye(len(c)), -c)


def quadratic_field(c, A, Q) -> TestField:
    """``g_j(x) = c_j + A_jk x_k + Q_jkl x_k x_l`` with ``Q`` symmetric in ``k, l``."""
    c, A, Q = (np.asarray(t, dtype=float) for t in (c, A, Q))
    Q = 0.5 * (Q + Q.transpose(0, 2, 1))
    return TestField(lambda x: c + x @ A.T + np.einsum("jkl,ak,al->aj", Q, x, x),
                     lambda x: A + 2 * np.einsum("jkl,al->ajk", Q, x), "quadratic")


def cutoff_field(base: TestField, center, radius: float) -> TestField:
    """``base`` times the C^3 bump ``(1 - |x - c|^2 / rho^2)^4`` supported in ``B(c, rho)``."""
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2

    def phi(x):
        t = np.sum((x - c) ** 2, axis=1) / r2
        inside = t < 1
        val = np.where(inside, (1 - t) ** 4, 0.0)
        dval = np.where(inside, -4 * (1 - t) ** 3, 0.0)
        return val, (dval * 2 / r2)[:, None] * (x - c)

    def value(x):
        return phi(x)[0][:, None] * base.value(x)

    def jac(x):
        ph, grad = phi(x)
        return ph[:, None, None] * base.jacobian(x) + np.einsum("aj,ak->ajk", base.value(x), grad)

    return TestField(value, jac, "cutoff(%s)" % base.label)


@dataclass(frozen=True)
class FirstVariation:
    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def signed(self) -> float:
        return self.lhs - self.rhs


def first_variation_check(V: QuadratureVarifold, g: TestField) -> FirstVariation:
    """``lhs = sum w_i S_i : Dg(x_i)`` against ``rhs = -sum w_i <H_i, g(x_i)>``."""
    if V.is_zero:
        return FirstVariation(0.0, 0.0)
    if V.H is None or np.isnan(V.H).any():
        bad = 0 if V.H is None else int(np.argmax(np.isnan(V.H).any(axis=1)))
        raise MissingFieldError("mean curvature missing on atom %d" % int(V.ids[bad]))
    Dg = g.jacobian(V.x)
    lhs = float(np.sum(V.w * np.einsum("ajk,ajk->a", V.S, Dg)))
    rhs = -float(np.sum(V.w * np.einsum("aj,aj->a", V.H, g.value(V.x))))
    return FirstVariation(lhs, rhs)


def restrict(V: QuadratureVarifold, pred, note: Optional[str] = None) -> QuadratureVarifold:
    """``V`` restricted to the atoms selected by a Region, a callable or a mask.

    The zero varifold is a valid result (``is_zero``); checkers reject it.
    """
    mask = _mask(V, pred)
    if note is None:
        note = pred.kind if isinstance(pred, Region) else getattr(pred, "__name__", "mask")
    return V.subset(mask, note)


def values_of(V: QuadratureVarifold, selector: str) -> np.ndarray:
    """Sampled Y-values: ``"S"`` gives flattened tangent projections, ``"fval"`` the tracked function."""
    if selector == "S":
        return V.S.reshape(len(V), -1)
    if selector in ("fval", "f"):
        if V.fval is None:
            raise MissingFieldError("no function values on this varifold")
        return V.fval
    raise ValueError("unknown value selector %r" % selector)


def derivatives_of(V: QuadratureVarifold, selector: str) -> np.ndarray:
    if selector == "S":
        if V.B is None:
            raise MissingFieldError("second fundamental form missing")
        return V.B
    if V.dfval is None:
        raise MissingFieldError("no weak-derivative values on this varifold")
    return V.dfval


def diameter(points: np.ndarray, chunk: int = 2048) -> float:
    """Largest pairwise Euclidean distance of a point cloud."""
    pts = np.unique(np.round(np.asarray(points, dtype=float), 14), axis=0)
    if len(pts) < 2:
        return 0.0
    best = 0.0
    for i in range(0, len(pts), chunk):
        blk = pts[i:i + chunk]
        d2 = np.sum(blk * blk, 1)[:, None] + np.sum(pts * pts, 1)[None, :] - 2 * blk @ pts.T
        best = max(best, float(d2.max()))
    return math.sqrt(max(best, 0.0))


def support_diameter(V: QuadratureVarifold, value: str = "S") -> float:
    """Diameter of the support of the pushforward of ``||V||`` under the selected values."""
    if V.is_zero:
        return 0.0
    return diameter(values_of(V, value))


# --------------------------------------------------------------------------
# persistence

def varifold_to_json(V: QuadratureVarifold) -> dict:
    atoms = []
    for i in range(len(V)):
        a = {"id": int(V.ids[i]), "piece": int(V.piece[i]), "x": V.x[i].tolist(),
             "S": V.S[i].tolist(), "w": float(V.w[i]), "h": float(V.h[i])}
        for name in ("H", "B", "fval", "dfval"):
            arr = getattr(V, name)
            if arr is not None and not np.isnan(arr[i]).any():
                a[name] = arr[i].tolist()
        atoms.append(a)
    return {"version": SCENE_VERSION, "n": V.n, "m": V.m, "scene": V.scene, "atoms": atoms}


def varifold_from_json(doc: Union[str, dict]) -> QuadratureVarifold:
    if isinstance(doc, str):
        doc = json.loads(doc)
    n, m, atoms = doc["n"], doc["m"], doc["atoms"]

    def col(name, shape):
        if not any(name in a for a in atoms):
            return None
        return np.array([a[name] if name in a else np.full(shape, np.nan) for a in atoms], dtype=float)

    N = len(atoms)
    return QuadratureVarifold(
        n, m,
        np.array([a["x"] for a in atoms], dtype=float).reshape(N, n),
        np.array([a["S"] for a in atoms], dtype=float).reshape(N, n, n),
        np.array([a["w"] for a in atoms], dtype=float),
        np.array([a.get("h", 0.0) for a in atoms], dtype=float),
        col("H", (n,)), col("B", (n, n, n)),
        col("fval", (len(next((a["fval"] for a in atoms if "fval" in a), [])),)),
        None if col("dfval", ()) is None else np.array([a["dfval"] for a in atoms], dtype=float),
        np.array([a.get("id", i) for i, a in enumerate(atoms)]),
        np.array([a.get("piece", 0) for a in atoms]),
        doc.get("scene", {}))


def omega(m: int) -> float:
    return unit_ball_volume(m)
