"""Tangent maps, conical and cylinder mass checks, Q-valued graph extraction,
the null-curvature plane detector and the tangent-cone decay checker."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, maximum_bipartite_matching

from .constants import ConstantsTable, mu_lambda, solve_cone_cylinder_constants
from .geometry import (TOL, Plane, closed_ball, cone_complement, cylinder, open_ball, plane_from_basis,
                       proj_distances, unit_ball_volume)
from .monotonicity import radius_grid
from .partition import cluster_values
from .report import Report, check, flag
from .varifold import (QuadratureVarifold, ZeroVarifoldError, field_norms, lq_seminorm, mass)


class GraphError(ValueError):
    pass


class NullCurvatureError(ValueError):
    pass


def _nonzero(V):
    if V.is_zero:
        raise ZeroVarifoldError("the zero varifold is rejected by every checker")


def tangent_field(V: QuadratureVarifold) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Per-atom ``T_V(x_i)`` as flattened projections, with ``B`` as its derivative when present."""
    return V.S.reshape(len(V), -1).copy(), None if V.B is None else V.B.copy()


def _ball_premises(V, a, r, P: Plane, Q, d_lo, d_hi, eps, label, grid_count=20, pointwise=False):
    om = unit_ball_volume(V.m)
    grid = radius_grid(V, a, r, grid_count)
    dist = np.linalg.norm(V.x - a, axis=1)
    tilt = proj_distances(V.S, P.proj)
    ratios, curv, tilt_mean = [], [], []
    for t in grid:
        inside = dist <= t
        mt = float(np.sum(V.w[inside]))
        ratios.append(mt / t ** V.m)
        tilt_mean.append(float(np.sum(V.w[inside] * tilt[inside])) / mt if mt > 0 else 0.0)
    ratios = np.array(ratios)
    out = [
        check("min_t t^-m ||V||(closed ball) >= (Q-d1) omega", float(ratios.min()), ">=", (Q - d_lo) * om,
              tol=TOL.quadrature),
        check("max_t t^-m ||V||(closed ball) <= (Q+d2) omega", float(ratios.max()), "<=", (Q + d_hi) * om,
              tol=TOL.quadrature),
        check("||H||_{L^m(closed ball(a,r))} <= %s" % label, lq_seminorm(V, closed_ball(a, r), "H", V.m), "<=",
              eps, tol=1e-15),
    ]
    if pointwise:
        inside = dist <= r
        out.append(check("max |T_V - P| <= %s" % label, float(np.max(tilt[inside], initial=0.0)), "<=", eps,
                         tol=1e-12))
    else:
        out.append(check("max_t mean tilt |S-P| <= %s" % label, max(tilt_mean), "<=", eps, tol=1e-12))
    return out, {"grid": grid, "ratios": ratios}


def check_conical(V: QuadratureVarifold, a, r: float, P: Plane, sigma: float, table: ConstantsTable, *,
                  Q: Optional[int] = None, delta1: float = 0.5, delta2: float = 0.5) -> Report:
    """No mass in ``{|P^perp(x-a)| > sigma |P(x-a)|}`` inside ``B(a, lam0 r)``."""
    _nonzero(V)
    a = np.asarray(a, dtype=float)
    Q = table.Q if Q is None else Q
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    lam0 = solve_cone_cylinder_constants(V.m, Q, delta2, 0.125)["lam0"]
    rep = Report("check-conical")
    prem, data = _ball_premises(V, a, r, P, Q, delta1, delta2, table.eps5, "eps5")
    rep.premises += prem
    region = cone_complement(P, a, sigma, radius=lam0 * r)
    inside = region.contains(V.x)
    bad = float(np.sum(V.w[inside]))
    tol = float(np.max(V.w[np.linalg.norm(V.x - a, axis=1) < lam0 * r], initial=0.0))
    rep.conclusions.append(check("offending mass in cone complement", bad, "<=", 0.0, tol=tol))
    rep.data = {"lam0": lam0, "offending_mass": bad, "tolerance": tol, **data}
    return rep


def _cyl_mask(V, P, a, rad, height, closed=False):
    d = V.x - a
    tang = d @ P.proj
    pt, pn = np.linalg.norm(tang, axis=1), np.linalg.norm(d - tang, axis=1)
    if closed:
        return (pt <= rad) & (pn <= height)
    return (pt < rad) & (pn < height)


def check_cylinder(V: QuadratureVarifold, a, r: float, P: Plane, delta1: float, delta2: float, delta3: float,
                   table: ConstantsTable, *, Q: Optional[int] = None) -> Report:
    """Conclusions (1)-(3) for the cylinder of radius and height ``s = lam1 r / 2``."""
    _nonzero(V)
    a = np.asarray(a, dtype=float)
    Q = table.Q if Q is None else Q
    m = V.m
    om = unit_ball_volume(m)
    cc = solve_cone_cylinder_constants(m, Q, delta2, delta3)
    s = cc["lam1"] * r / 2
    rep = Report("check-cylinder")
    prem, data = _ball_premises(V, a, r, P, Q, delta1, delta2, table.eps6, "eps6")
    rep.premises += prem
    c_mass = float(np.sum(V.w[_cyl_mask(V, P, a, s, s)]))
    ratio = c_mass / s ** m
    shell = _cyl_mask(V, P, a, s, (1 + delta3) * s) & ~_cyl_mask(V, P, a, s, (1 - 2 * delta3) * s)
    shell_mass = float(np.sum(V.w[shell]))
    d = V.x - a
    tang = d @ P.proj
    pt, pn = np.linalg.norm(tang, axis=1), np.linalg.norm(d - tang, axis=1)
    gap = np.hypot(np.maximum(pt - s, 0.0), np.maximum(pn - s, 0.0))
    nbhd = float(np.sum(V.w[gap <= 2 * s])) / s ** m
    rep.conclusions += [
        check("(1) s^-m ||V||(C) >= (Q-d1) omega", ratio, ">=", (Q - delta1) * om, tol=TOL.quadrature),
        check("(1) s^-m ||V||(C) <= (Q+(1+d2)/2) omega", ratio, "<=", (Q + (1 + delta2) / 2) * om,
              tol=TOL.quadrature),
        check("(2) shell mass", shell_mass, "<=", 0.0),
        check("(3) s^-m ||V||(2s-neighbourhood) <= 4^m (Q+d2) omega", nbhd, "<=", 4 ** m * (Q + delta2) * om,
              tol=TOL.quadrature),
    ]
    rep.data = {"s": s, "cylinder_ratio": ratio, "shell_mass": shell_mass, "neighbourhood_ratio": nbhd,
                **cc, **data}
    return rep


# --------------------------------------------------------------------------
# Q-valued graphs

def bottleneck(u: np.ndarray, v: np.ndarray) -> tuple[float, tuple]:
    """``min over permutations p of max_i |u_i - v_p(i)|`` and a minimising permutation.

    Small ``Q`` is brute force; larger ``Q`` uses a threshold search over the
    sorted costs with a bipartite perfect-matching test, which is also exact.
    """
    u, v = np.atleast_2d(u), np.atleast_2d(v)
    Q = len(u)
    cost = np.linalg.norm(u[:, None, :] - v[None, :, :], axis=2)
    if Q <= 3:
        best, perm = math.inf, None
        for p in itertools.permutations(range(Q)):
            c = max(cost[i, p[i]] for i in range(Q))
            if c < best:
                best, perm = c, p
        return float(best), tuple(perm)
    levels = np.unique(cost)
    lo, hi = 0, len(levels) - 1
    match = None
    while lo < hi:
        mid = (lo + hi) // 2
        mt = maximum_bipartite_matching(csr_matrix(cost <= levels[mid]), perm_type="column")
        if np.all(mt >= 0):
            hi = mid
        else:
            lo = mid + 1
    match = maximum_bipartite_matching(csr_matrix(cost <= levels[lo]), perm_type="column")
    return float(levels[lo]), tuple(int(j) for j in match)


@dataclass
class QValuedGraph:
    """A ``Q``-valued function on the cells of a grid over the disk of radius ``s`` in ``P``.

    ``fibers[idx]`` is a list of ``(offset, multiplicity)`` with offsets in
    ``P^perp`` coordinates; ``values(idx)`` expands it to a ``(Q, n-m)`` array.
    """

    P: Plane
    center: np.ndarray
    s: float
    cellcount: int
    fibers: dict
    Q: int
    lip_estimate: float = 0.0
    report: Optional[Report] = None
    cylinder_mass: Optional[float] = None
    flags: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.P.m

    @property
    def n(self) -> int:
        return self.P.n

    @property
    def width(self) -> float:
        return 2 * self.s / self.cellcount

    @property
    def Z(self) -> list:
        return sorted(self.fibers)

    def frame(self) -> tuple[np.ndarray, np.ndarray]:
        E = self.P.basis()
        E = E * np.sign(E.sum(axis=0) + 1e-300)
        return E, self.P.normal_basis()

    def cell_center(self, idx) -> np.ndarray:
        return -self.s + (np.asarray(idx, dtype=float) + 0.5) * self.width

    def cell_area(self, idx) -> float:
        return _cell_area(self.cell_center(idx), self.width, self.s, self.m)

    def values(self, idx) -> np.ndarray:
        pts = []
        for off, k in self.fibers[idx]:
            pts += [np.asarray(off, dtype=float)] * int(k)
        return np.array(pts).reshape(len(pts), self.n - self.m)

    def neighbours(self, idx):
        for axis in range(self.m):
            for step in (-1, 1):
                nb = list(idx)
                nb[axis] += step
                nb = tuple(nb)
                if nb in self.fibers:
                    yield nb

    def to_json(self) -> dict:
        return {"version": 1, "P": self.P.to_json(), "center": self.center.tolist(), "s": self.s,
                "cellcount": self.cellcount, "Q": self.Q, "lip_estimate": self.lip_estimate,
                "cylinder_mass": self.cylinder_mass, "flags": self.flags,
                "cells": [{"index": list(idx), "center": self.cell_center(idx).tolist(),
                           "fiber": [{"offset": np.asarray(o).tolist(), "multiplicity": int(k)}
                                     for o, k in self.fibers[idx]]} for idx in self.Z]}


def _cell_area(zc, width, s, m, sub=16):
    if m == 1:
        lo, hi = max(zc[0] - width / 2, -s), min(zc[0] + width / 2, s)
        return max(hi - lo, 0.0)
    corner = np.abs(zc) + width / 2
    if np.linalg.norm(corner) <= s:
        return width ** m
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    pts = np.stack(np.meshgrid(*([offs] * m), indexing="ij"), -1).reshape(-1, m) * width + zc
    return width ** m * float(np.mean(np.linalg.norm(pts, axis=1) < s))


def _cells(m, cellcount, s):
    width = 2 * s / cellcount
    out = []
    for idx in itertools.product(range(cellcount), repeat=m):
        zc = -s + (np.asarray(idx) + 0.5) * width
        if _cell_area(zc, width, s, m) > 0:
            out.append(idx)
    return out


def lipschitz_estimate(g: QValuedGraph) -> float:
    best = 0.0
    for idx in g.Z:
        for nb in g.neighbours(idx):
            if nb > idx:
                d, _ = bottleneck(g.values(idx), g.values(nb))
                best = max(best, d / g.width)
    return best


def graph_from_functions(P: Plane, a, s: float, cellcount: int, funcs: Sequence[Callable]) -> QValuedGraph:
    """Exact samples ``u_i(z)`` at the cell centres of ``Q`` sheets (``z`` in P coordinates)."""
    a = np.asarray(a, dtype=float)
    g = QValuedGraph(P, a, s, cellcount, {}, len(funcs))
    for idx in _cells(P.m, cellcount, s):
        zc = g.cell_center(idx)
        vals = [np.atleast_1d(np.asarray(f(zc), dtype=float)) for f in funcs]
        fib = []
        for v in vals:
            for j, (o, k) in enumerate(fib):
                if np.allclose(o, v, rtol=0, atol=1e-14):
                    fib[j] = (o, k + 1)
                    break
            else:
                fib.append((v, 1))
        g.fibers[idx] = fib
    g.lip_estimate = lipschitz_estimate(g)
    return g


def _sheet_clusters(z, y, ext, L, rows):
    """Link atoms that are neighbours over ``P`` and whose heights lie in the slope-``L`` cone."""
    dz = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)
    dy = np.linalg.norm(y[:, None, :] - y[None, :, :], axis=2)
    near = dz <= 0.51 * (ext[:, None] + ext[None, :]) * 1.01 + 1e-12
    adj = near & (dy <= 1.01 * L * dz + 1e-12)
    k, lab = connected_components(csr_matrix(adj), directed=False)
    return [rows[lab == j] for j in np.unique(lab)]


def extract_graph(V: QuadratureVarifold, P: Plane, a, s: float, L: float, cellcount: int, *,
                  table: Optional[ConstantsTable] = None, Q: Optional[int] = None,
                  mult_tol: float = 0.1) -> QValuedGraph:
    """Bin the atoms of ``C_P(a, s, s)`` over a cell grid and read off a ``Q``-valued function."""
    _nonzero(V)
    a = np.asarray(a, dtype=float)
    m, n = V.m, V.n
    if P.m != m or P.n != n:
        raise GraphError("plane dimensions do not match the varifold")
    proto = QValuedGraph(P, a, s, cellcount, {}, 0)
    E, N = proto.frame()
    width = proto.width
    inside = _cyl_mask(V, P, a, s, s)
    C = V.subset(inside, "cylinder")
    if C.is_zero:
        raise GraphError("empty Z: no atoms in the cylinder")
    z = (C.x - a) @ E
    y = (C.x - a) @ N
    UtE = np.einsum("aij,jk->aik", C.S, E)
    jac = np.sqrt(np.clip(np.linalg.det(np.einsum("ij,aik->ajk", E, UtE)), 0.0, None))
    pw = C.w * jac
    cell_idx = np.clip(np.floor((z + s) / width).astype(int), 0, cellcount - 1)
    keys = [tuple(row) for row in cell_idx]
    groups = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)
    fibers, totals, bad = {}, {}, []
    for idx in sorted(groups):
        rows = np.array(groups[idx])
        area = _cell_area(proto.cell_center(idx), width, s, m)
        if area <= 0:
            continue
        fib = []
        for sel in _sheet_clusters(z[rows], y[rows], C.h[rows] * jac[rows], 2 * L + 1, rows):
            theta = float(np.sum(pw[sel])) / area
            k = int(round(theta))
            if k < 1 or abs(theta - k) > mult_tol * max(k, 1):
                bad.append((idx, theta))
                continue
            zc = proto.cell_center(idx)
            dz = z[sel] - zc
            A = np.hstack([np.ones((len(sel), 1)), dz])
            wts = np.sqrt(pw[sel])
            if len(sel) > m and np.linalg.matrix_rank(A * wts[:, None]) == m + 1:
                coef, *_ = np.linalg.lstsq(A * wts[:, None], y[sel] * wts[:, None], rcond=None)
                off = coef[0]
            else:
                off = np.average(y[sel], axis=0, weights=pw[sel])
            fib.append((off, k))
        if fib:
            fibers[idx] = fib
            totals[idx] = sum(k for _, k in fib)
    if bad:
        idx, theta = bad[0]
        raise GraphError("non-integer multiplicity %.4g in cell %s" % (theta, idx))
    if not fibers:
        raise GraphError("empty Z")
    counts = np.array(list(totals.values()))
    Qv = int(np.bincount(counts).argmax()) if Q is None else Q
    wrong = [idx for idx, t in totals.items() if t != Qv]
    if wrong:
        raise GraphError("non-integer multiplicity: cell %s carries %d sheets, expected Q = %d"
                         % (wrong[0], totals[wrong[0]], Qv))
    g = QValuedGraph(P, a, s, cellcount, fibers, Qv, cylinder_mass=C.total_mass)
    g.lip_estimate = lipschitz_estimate(g)
    rep = Report("graph-extract")
    if table is not None:
        lam2 = table.lam2
        r = 2 * s / lam2
        prem, _ = _ball_premises(V, a, r, P, Qv, 0.5, 0.5, table.eps7, "eps7", pointwise=True)
        rep.premises += prem
        rep.data["r"] = r
    empty = [idx for idx in _cells(m, cellcount, s) if idx not in fibers]
    rep.conclusions.append(check("lip_estimate <= L", g.lip_estimate, "<=", L))
    GV = graph_varifold(g)
    rel = abs(GV.total_mass - C.total_mass) / C.total_mass
    rep.conclusions.append(check("graph varifold mass matches ||V||(cylinder) (relative)", rel, "<=", 1e-2))
    rep.data.update({"Q": Qv, "cells": len(fibers), "empty_cells": len(empty), "lip_estimate": g.lip_estimate,
                     "cylinder_mass": C.total_mass, "graph_mass": GV.total_mass, "relative_mass_gap": rel})
    g.report = rep
    if g.lip_estimate > L:
        raise GraphError("Lipschitz bound exceeded: %.6g > L = %.6g" % (g.lip_estimate, L))
    return g


def _matched_neighbour_values(g: QValuedGraph, idx, nb) -> np.ndarray:
    u, v = g.values(idx), g.values(nb)
    _, perm = bottleneck(u, v)
    return v[list(perm)]


def graph_varifold(g: QValuedGraph) -> QuadratureVarifold:
    """One atom per distinct fiber point: weight ``cell area * multiplicity * sqrt(det(I + G^T G))``.

    ``G`` is the least-squares slope through the face-adjacent neighbours,
    using the optimal matching of fiber points; cells without neighbours get
    ``G = 0`` (tangent ``P``) and are listed in ``g.flags``.
    """
    E, N = g.frame()
    m, n = g.m, g.n
    xs, Ss, ws, hs = [], [], [], []
    g.flags = []
    for idx in g.Z:
        zc = g.cell_center(idx)
        area = g.cell_area(idx)
        u = g.values(idx)
        nbs = list(g.neighbours(idx))
        if not nbs:
            g.flags.append({"cell": list(idx), "flag": "isolated cell, tangent defaults to P"})
        dz = np.array([g.cell_center(nb) - zc for nb in nbs]).reshape(len(nbs), m)
        dv = np.array([_matched_neighbour_values(g, idx, nb) - u for nb in nbs]).reshape(len(nbs), len(u), n - m)
        seen = []
        for i, yi in enumerate(u):
            if any(np.allclose(yi, p, rtol=0, atol=1e-14) for p in seen):
                continue
            seen.append(yi)
            k = sum(1 for yj in u if np.allclose(yi, yj, rtol=0, atol=1e-14))
            if nbs:
                G, *_ = np.linalg.lstsq(dz, dv[:, i, :], rcond=None)
                G = G.T
            else:
                G = np.zeros((n - m, m))
            basis = E + N @ G
            P = plane_from_basis(basis.T)
            xs.append(g.center + E @ zc + N @ yi)
            Ss.append(P.proj)
            ws.append(area * k * math.sqrt(np.linalg.det(np.eye(m) + G.T @ G)))
            hs.append(g.width)
    return QuadratureVarifold(n, m, np.array(xs).reshape(-1, n), np.array(Ss).reshape(-1, n, n), np.array(ws),
                              np.array(hs), scene={"graph": {"Q": g.Q, "s": g.s, "cellcount": g.cellcount}})


# --------------------------------------------------------------------------
# planes

@dataclass
class PlaneDecomposition:
    planes: list
    residual_mass: float
    center: np.ndarray
    r: float
    flags: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.planes)

    @property
    def multiplicities(self) -> list[int]:
        return [p["multiplicity"] for p in self.planes]

    def to_json(self) -> dict:
        return {"version": 1, "center": self.center.tolist(), "r": self.r, "N": self.N,
                "residual_mass": self.residual_mass, "flags": self.flags,
                "planes": [{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in p.items()}
                           for p in self.planes]}


def detect_planes(V: QuadratureVarifold, a, r: float, *, b_tol: float = 1e-10, key_tol: float = 1e-9,
                  int_tol: float = 1e-3) -> PlaneDecomposition:
    """Affine planes with integer multiplicities making up ``V`` restricted to ``B(a, r)``.

    Atoms are grouped by (tangent projection, normal offset ``S^perp x``);
    a plane's multiplicity is its mass divided by ``omega_m rho^m`` with
    ``rho`` the radius of its disk inside the ball.
    """
    _nonzero(V)
    a = np.asarray(a, dtype=float)
    Vr = V.subset(np.linalg.norm(V.x - a, axis=1) < r, "open ball")
    if Vr.is_zero:
        raise ZeroVarifoldError("no atoms in the ball")
    if Vr.B is None or np.isnan(Vr.B).any():
        raise NullCurvatureError("not a null-curvature varifold: second fundamental form missing")
    bmax = float(np.max(field_norms(Vr, "B")))
    if bmax > b_tol:
        raise NullCurvatureError("not a null-curvature varifold: |B| = %.3g" % bmax)
    n, m = V.n, V.m
    perp = np.eye(n)[None] - Vr.S
    offset = np.einsum("aij,aj->ai", perp, Vr.x)
    keys = np.hstack([Vr.S.reshape(len(Vr), -1), offset])
    om = unit_ball_volume(m)
    planes, flags = [], []
    ideal_total = 0.0
    for grp in cluster_values(keys, key_tol):
        S = Vr.S[grp[0]]
        v = offset[grp[0]]
        da = float(np.linalg.norm(perp[grp[0]] @ a - v))
        rho = math.sqrt(max(r * r - da * da, 0.0))
        pm = float(np.sum(Vr.w[grp]))
        raw = pm / (om * rho ** m) if rho > 0 else math.inf
        k = int(round(raw))
        integral = k >= 1 and abs(raw - k) <= int_tol * max(k, 1)
        if not integral:
            flags.append({"plane": len(planes), "raw_multiplicity": raw,
                          "flag": "non-integer multiplicity"})
        kk = max(k, 1) if integral else raw
        ideal_total += kk * om * rho ** m
        planes.append({"projection": S.copy(), "offset": v.copy(), "multiplicity": k if integral else raw,
                       "raw_multiplicity": raw, "mass": pm, "rho": rho, "atoms": int(len(grp)),
                       "integer": bool(integral)})
    residual = Vr.total_mass - ideal_total
    return PlaneDecomposition(planes, residual, a, r, flags)


# --------------------------------------------------------------------------
# tangent cones

def check_tangent_cone_decay(V: QuadratureVarifold, a, r: float, P: Plane, C: float, q: float, *,
                             blowup_bound: Optional[Callable[[float], float]] = None, count: int = 20,
                             int_tol: float = 0.05) -> Report:
    """Decay of ``||delta V||(closed ball(a,t))`` and flat blow-ups with integer density."""
    _nonzero(V)
    a = np.asarray(a, dtype=float)
    m = V.m
    mu, _ = mu_lambda(m, q)
    om = unit_ball_volume(m)
    rep = Report("tangent-cone")
    d = V.x - a
    dist = np.linalg.norm(d, axis=1)
    ball = dist <= r
    tilt = proj_distances(V.S, P.proj)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_iii = np.where(dist > 0, tilt / dist ** mu, np.where(tilt > 0, np.inf, 0.0))
    rep.premises += [
        check("(i) r^-m ||V||(closed ball) <= C", mass(V, closed_ball(a, r)) / r ** m, "<=", C),
        check("(ii) r^mu ||H||_q <= C", r ** mu * lq_seminorm(V, closed_ball(a, r), "H", q), "<=", C),
        check("(iii) max |T_V(x)-P| / |x-a|^mu <= C", float(np.max(ratio_iii[ball], initial=0.0)), "<=", C,
              tol=1e-12),
    ]
    grid = radius_grid(V, a, r, count)
    Hn = field_norms(V, "H") if V.H is not None else np.zeros(len(V))
    normal = np.linalg.norm(d - d @ P.proj, axis=1)
    ratios, fv, fbound, blow = [], [], [], []
    for t in grid:
        inside = dist <= t
        ratios.append(float(np.sum(V.w[inside])) / t ** m)
        fv.append(float(np.sum(V.w[inside] * Hn[inside])))
        blow.append(float(np.max(normal[inside], initial=0.0)) / t)
    ratios = np.array(ratios)
    Cmass = float(ratios.max())
    Cprime = C * Cmass ** (1 - 1 / q)
    fbound = np.array([t ** (m - 1) * Cprime * (t / r) ** mu for t in grid])
    fv = np.array(fv)
    viol = int(np.sum(fv > fbound * (1 + 1e-12) + 1e-300))
    rep.conclusions.append(check("first-variation decay violations", viol, "<=", 0))
    bb = blowup_bound if blowup_bound is not None else (lambda t: C * t ** mu)
    bvals = np.array([bb(t) for t in grid])
    blow = np.array(blow)
    bviol = int(np.sum(blow > bvals + 1e-12))
    rep.conclusions.append(check("blow-up distance violations", bviol, "<=", 0))
    theta = ratios[0] / om
    Q = int(round(theta))
    rep.conclusions.append(check("limit density integer", abs(theta - Q), "<=", int_tol,
                                 detail="non-integer limit density" if abs(theta - Q) > int_tol else ""))
    rep.conclusions.append(check("limit density >= 1", Q, ">=", 1))
    rep.data = {"grid": grid, "first_variation": fv, "first_variation_bound": fbound, "C_prime": Cprime,
                "C_mass": Cmass, "blowup_distance": blow, "blowup_bound": bvals, "density": ratios / om, "Q": Q}
    return rep
