"""Value-based separation, single-scale partitions, the scale ladder and the Hoelder certificate.

Components are sets of atoms.  Their Y-values come from a selector: ``"S"``
uses the tangent map (flattened projections, derivative ``B``), ``"fval"``
uses sampled function values with sampled weak derivatives ``dfval``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .constants import ConstantsError, ConstantsTable
from .geometry import TOL, closed_ball, open_ball, unit_ball_volume
from .monotonicity import radius_grid, smallness
from .report import Report, check, flag
from .varifold import (QuadratureVarifold, TestField, ZeroVarifoldError, constant_field, cutoff_field,
                       derivatives_of, diameter, first_variation_check, lq_seminorm, mass, radial_field,
                       values_of)


class SeparationError(ValueError):
    pass


class PartitionError(ValueError):
    pass


class LadderPremiseError(ValueError):
    def __init__(self, level: int, report: Report):
        self.level = level
        self.report = report
        names = ", ".join(c.name for c in report.failures())
        super().__init__("premise violated at level %d: %s" % (level, names))


# --------------------------------------------------------------------------
# clustering

def cluster_values(values, tau: float) -> list[np.ndarray]:
    """Single-linkage components at threshold ``2 tau`` (distance exactly ``2 tau`` links).

    Returns index arrays into ``values``, ordered by their smallest index.
    The closed ``tau``-thickenings of distinct clusters are pairwise disjoint.
    """
    if not tau >= 0:
        raise ValueError("tau must be nonnegative")
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if len(vals) == 0:
        return []
    uniq, inverse = np.unique(np.round(vals, 12), axis=0, return_inverse=True)
    inverse = np.ravel(inverse)
    eps = 1e-12 * max(1.0, 2 * tau)
    pairs = cKDTree(uniq).query_pairs(2 * tau + eps, output_type="ndarray")
    k = len(uniq)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(k, k)) if len(pairs) else \
        coo_matrix((k, k))
    _, labels = connected_components(graph, directed=False)
    atom_labels = labels[inverse]
    groups = {}
    for i, lab in enumerate(atom_labels):
        groups.setdefault(lab, []).append(i)
    out = [np.array(g) for g in groups.values()]
    out.sort(key=lambda g: int(g[0]))
    return out


@dataclass(frozen=True)
class ValueSet:
    """Closed ``radius``-thickening of a finite point set in Y."""

    points: np.ndarray
    radius: float = 0.0

    def distance(self, y: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        d, _ = cKDTree(pts).query(y)
        return np.maximum(d - self.radius, 0.0)

    def gap_to(self, other: "ValueSet") -> float:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        return float(np.min(other.distance(pts)) - self.radius) if len(pts) else math.inf


def default_fields(V: QuadratureVarifold) -> list[TestField]:
    """Cutoff test fields centred at the atom centroid, supported well inside the atom cloud."""
    c = np.average(V.x, axis=0, weights=V.w)
    rad = 0.5 * float(np.max(np.linalg.norm(V.x - c, axis=1)))
    rad = rad if rad > 0 else 1.0
    fields = [cutoff_field(radial_field(c), c, rad)]
    for k in range(V.n):
        fields.append(cutoff_field(constant_field(np.eye(V.n)[k]), c, rad))
    return fields


@dataclass
class Separation:
    W: QuadratureVarifold
    rest: QuadratureVarifold
    additivity_gap: float
    component_gaps: list
    cutoff_slope: float = 0.0
    cutoff_bound: float = 0.0


def separate(V: QuadratureVarifold, f, D: ValueSet, K: ValueSet, delta: float, *,
             fields: Optional[Sequence[TestField]] = None, tol: float = 1e-9) -> Separation:
    """Atoms whose value lies within ``delta`` of ``K``.

    ``f`` is a selector (``"S"`` or ``"fval"``) or an explicit value array.
    The no-boundary property is certified through first-variation
    additivity: for each test field the signed gap of ``V`` equals the sum of
    the gaps of ``W`` and of ``V - W``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    gap = K.gap_to(D)
    if gap < 2 * delta:
        raise SeparationError("value sets too close: distance %.6g < 2 delta = %.6g" % (gap, 2 * delta))
    vals = values_of(V, f) if isinstance(f, str) else np.asarray(f, dtype=float).reshape(len(V), -1)
    dK, dD = K.distance(vals), D.distance(vals)
    stray = (dK > tol) & (dD > tol)
    if stray.any():
        i = int(np.argmax(stray))
        raise SeparationError("separation violated: atom %d has value at distance %.3g from K and %.3g from D"
                              % (int(V.ids[i]), dK[i], dD[i]))
    # phi = 1 on the delta/2-neighbourhood of K, 0 beyond delta; slope 2/delta within the 4/delta bound
    phi = np.clip(2.0 - 2.0 * dK / delta, 0.0, 1.0)
    if np.any((phi > 0) & (phi < 1)):
        raise SeparationError("separation violated: atom value inside the cutoff transition band")
    inside = phi == 1.0
    W, rest = V.subset(inside, "value within delta of K"), V.subset(~inside, "value outside K")
    fields = default_fields(V) if fields is None else fields
    worst, comps = 0.0, []
    for g in fields:
        sv = first_variation_check(V, g).signed
        sw = first_variation_check(W, g).signed
        sr = first_variation_check(rest, g).signed
        worst = max(worst, abs(sv - (sw + sr)))
        comps.append((sw, sr))
    if worst > tol * max(1.0, V.total_mass):
        raise SeparationError("first-variation additivity failed by %.3g" % worst)
    return Separation(W, rest, worst, comps, 2.0 / delta, 4.0 / delta)


# --------------------------------------------------------------------------
# one scale

def tau_m(V_r: QuadratureVarifold, f: str, lam: float, r: float, q: float, table: ConstantsTable) -> float:
    """Cluster radius from the weak derivative of ``f`` on ``V_r``.

    m = 1: ``Gamma ||df||_1``.  m > 1: ``Gamma^(m/mu) ((1 - lam) r)^mu ||df||_q``;
    the factor ``r^mu`` makes the radius dilation invariant.
    """
    table.require("Gamma")
    if V_r.is_zero:
        return 0.0
    name = "B" if f == "S" else "df"
    if V_r.m == 1:
        return table.Gamma * lq_seminorm(V_r, None, name, 1.0)
    mu = 1 - V_r.m / q
    return table.Gamma ** (V_r.m / mu) * ((1 - lam) * r) ** mu * lq_seminorm(V_r, None, name, q)


@dataclass
class ScalePartition:
    components: list
    tau: float
    clusters: list
    report: Report


def _scale_premises(V: QuadratureVarifold, a, r: float, lam: float, table: ConstantsTable) -> list:
    om = unit_ball_volume(V.m)
    Q = table.Q
    return [
        check("r^-m ||V||(closed ball(a,r)) <= (Q+1/4) omega", mass(V, closed_ball(a, r)) / r ** V.m, "<=",
              (Q + 0.25) * om, tol=TOL.quadrature),
        check("||H||_{L^m(closed ball(a,r))} <= eps2", lq_seminorm(V, closed_ball(a, r), "H", V.m), "<=",
              table.eps2, tol=1e-15),
    ]


def partition_at_scale(V: QuadratureVarifold, a, r: float, f: str, lam: float, table: ConstantsTable, *,
                       q: Optional[float] = None, strict_lambda: bool = True) -> ScalePartition:
    """Partition of ``V`` restricted to ``B(a, lam r)`` by clustering values at radius ``tau_m``.

    ``V`` is the varifold whose ``closed ball(a, r)`` carries the premises;
    ``tau_m`` is measured on ``V`` restricted to ``B(a, r)``.
    """
    table.require("Gamma", "eps2", "C0")
    if V.is_zero:
        raise ZeroVarifoldError("the zero varifold is rejected by every checker")
    a = np.asarray(a, dtype=float)
    q = table.q if q is None else q
    Q = table.Q
    rep = Report("partition-at-scale")
    lam_ok = check("lambda <= eps2/(1+eps2)", lam, "<=", table.lambda_partition_max)
    if strict_lambda:
        rep.premises.append(lam_ok)
    else:
        rep.data["lambda_admissible"] = lam_ok.ok
    rep.premises += _scale_premises(V, a, r, lam, table)
    dist = np.linalg.norm(V.x - a, axis=1)
    V_r = V.subset(dist < r, "open ball r")
    tau = tau_m(V_r, f, lam, r, q, table)
    inner = V.subset(dist < lam * r, "open ball lambda r")
    comps, clusters = [], []
    if not inner.is_zero:
        vals = values_of(inner, f)
        groups = cluster_values(vals, tau)
        for g in groups:
            mask = np.zeros(len(inner), dtype=bool)
            mask[g] = True
            comps.append(inner.subset(mask, "value cluster"))
            clusters.append(np.unique(np.round(vals[g], 12), axis=0))
        if len(groups) > 1:
            for i, g in enumerate(groups):
                others = np.concatenate([clusters[j] for j in range(len(groups)) if j != i])
                sep = ValueSet(clusters[i], tau)
                rest = ValueSet(others, tau)
                gap = sep.gap_to(rest)
                delta = 0.5 * gap if gap > 0 else 0.0
                if delta > 0:
                    separate(inner, vals, rest, sep, delta)
    rep.conclusions.append(check("|Pi| <= Q", len(comps), "<=", Q,
                                 detail="more components than Q" if len(comps) > Q else ""))
    for i, W in enumerate(comps):
        rep.conclusions.append(check("component %d value diameter <= 2 Q tau" % i,
                                     diameter(values_of(W, f)), "<=", 2 * Q * tau, tol=1e-12))
    rep.data.update({"tau": tau, "components": len(comps)})
    return ScalePartition(comps, tau, clusters, rep)


# --------------------------------------------------------------------------
# ladder

@dataclass
class ComponentRecord:
    id: str
    parent: Optional[str]
    level: int
    atom_ids: np.ndarray
    count: int
    mass: float
    meets_half_ball: bool
    value_support_diameter: float
    barycenter: np.ndarray
    tau: float
    predicate: str
    limit_value: Optional[np.ndarray] = None

    def to_json(self) -> dict:
        return {"id": self.id, "parent": self.parent, "level": self.level, "count": self.count,
                "mass": self.mass, "meets_half_ball": self.meets_half_ball,
                "value_support_diameter": self.value_support_diameter, "tau": self.tau,
                "predicate": self.predicate, "barycenter": self.barycenter.tolist(),
                "limit_value": None if self.limit_value is None else self.limit_value.tolist(),
                "atom_ids": self.atom_ids.tolist()}


@dataclass
class PartitionLadder:
    center: np.ndarray
    r: float
    lam: float
    depth: int
    f: str
    Q: int
    levels: list = field(default_factory=list)
    clusters: list = field(default_factory=list)
    k0: Optional[int] = None
    report: Optional[Report] = None
    varifold: Optional[QuadratureVarifold] = None

    def radius(self, k: int) -> float:
        return self.lam ** k * self.r

    def prime_counts(self) -> list[int]:
        return [sum(1 for c in lvl if c.meets_half_ball) for lvl in self.levels]

    def component(self, cid: str) -> ComponentRecord:
        for lvl in self.levels:
            for c in lvl:
                if c.id == cid:
                    return c
        raise KeyError(cid)

    def to_json(self) -> dict:
        return {"version": 1, "center": self.center.tolist(), "r": self.r, "lambda": self.lam,
                "depth": self.depth, "f": self.f, "Q": self.Q, "k0": self.k0,
                "radii": [self.radius(k) for k in range(len(self.levels))],
                "prime_counts": self.prime_counts(),
                "levels": [[c.to_json() for c in lvl] for lvl in self.levels],
                "report": None if self.report is None else self.report.to_json()}


def _record(V, W, cid, parent, level, a, rk, f, tau, predicate):
    vals = values_of(W, f)
    d = np.linalg.norm(W.x - a, axis=1)
    return ComponentRecord(cid, parent, level, np.sort(W.ids), len(W), W.total_mass,
                           bool(np.any(d < rk / 2)), diameter(vals),
                           np.average(vals, axis=0, weights=W.w), tau, predicate)


def _df_norm(V_r: QuadratureVarifold, f: str, q: float, rk: float) -> float:
    name = "B" if f == "S" else "df"
    if V_r.is_zero:
        return 0.0
    if V_r.m == 1:
        return lq_seminorm(V_r, None, name, 1.0)
    return lq_seminorm(V_r, None, name, q) * rk ** (1 - V_r.m / q)


def nested_partition(V: QuadratureVarifold, a, r: float, f: str, lam: float, K: int,
                     table: ConstantsTable, Q: Optional[int] = None, *, q: Optional[float] = None,
                     count: int = 20) -> PartitionLadder:
    """Partitions of ``V`` on ``B(a, lam^k r)``, ``k = 0..K``, each level refining the previous one.

    Level 0 is ``{V_r}``.  Level ``k+1`` re-partitions every level-``k``
    component that meets ``B(a, r_k / 2)``, restricted to ``B(a, r_{k+1})``.
    ``lam > eps2/(1+eps2)`` is recorded in the report, not enforced.
    """
    table.require("Gamma", "eps2", "C0")
    if V.is_zero:
        raise ZeroVarifoldError("the zero varifold is rejected by every checker")
    a = np.asarray(a, dtype=float)
    Q = table.Q if Q is None else Q
    q = table.q if q is None else q
    om = unit_ball_volume(V.m)
    rep = Report("partition-run")
    grid = radius_grid(V, a, r, count)
    ratios = np.array([mass(V, closed_ball(a, t)) / t ** V.m for t in grid])
    rep.premises += [
        check("max_t t^-m ||V||(closed ball(a,t)) <= (Q+1/4) omega", float(ratios.max()), "<=",
              (Q + 0.25) * om, tol=TOL.quadrature),
        check("||H||_{L^m(closed ball(a,r))} <= eps2", lq_seminorm(V, closed_ball(a, r), "H", V.m), "<=",
              table.eps2, tol=1e-15),
    ]
    if not rep.premises_ok:
        raise LadderPremiseError(0, rep)
    lam_ok = lam <= table.lambda_partition_max
    rep.data["lambda_admissible"] = bool(lam_ok)
    rep.data["lambda_max"] = table.lambda_partition_max
    ladder = PartitionLadder(a, r, lam, K, f, Q, report=rep, varifold=V)
    dist = np.linalg.norm(V.x - a, axis=1)
    V0 = V.subset(dist < r, "open ball r")
    ladder.levels.append([_record(V, V0, "L0C0", None, 0, a, r, f, 0.0, "V restricted to B(a, r)")])
    ladder.clusters.append([ladder.levels[0][0].barycenter[None, :]])
    comp_vars = {"L0C0": V0}
    for k in range(K):
        rk, rk1 = ladder.radius(k), ladder.radius(k + 1)
        lvl_rep = Report("level %d" % (k + 1))
        lvl_rep.premises += _scale_premises(V, a, rk, lam, table)
        if not lvl_rep.premises_ok:
            raise LadderPremiseError(k + 1, lvl_rep)
        V_prev = V.subset(dist < (ladder.radius(k - 1) if k >= 1 else r))
        bound_df = _df_norm(V_prev, f, q, rk1)
        children, level_clusters = [], []
        for parent in ladder.levels[k]:
            if not parent.meets_half_ball:
                continue
            W = comp_vars[parent.id]
            tau = tau_m(W, f, lam, rk, q, table)
            inner = W.subset(np.linalg.norm(W.x - a, axis=1) < rk1, "open ball r_%d" % (k + 1))
            if inner.is_zero:
                continue
            vals = values_of(inner, f)
            for g in cluster_values(vals, tau):
                mask = np.zeros(len(inner), dtype=bool)
                mask[g] = True
                children.append((parent.id, inner.subset(mask, "value cluster"), tau))
                level_clusters.append(np.unique(np.round(vals[g], 12), axis=0))
        children.sort(key=lambda c: int(c[1].ids.min()))
        recs = []
        for j, (pid, Z, tau) in enumerate(children):
            cid = "L%dC%d" % (k + 1, j)
            rec = _record(V, Z, cid, pid, k + 1, a, rk1, f, tau, "value cluster of %s at tau=%.6g" % (pid, tau))
            recs.append(rec)
            comp_vars[cid] = Z
            parent = ladder.component(pid)
            allowed = parent.atom_ids[np.isin(parent.atom_ids, V.ids[dist < rk1])]
            rep.conclusions.append(flag("%s nested in %s restricted to B(a, r_%d)" % (cid, pid, k + 1),
                                        bool(np.isin(rec.atom_ids, allowed).all())))
            rep.conclusions.append(check("%s value diameter <= 2 Q tau" % cid, rec.value_support_diameter,
                                         "<=", 2 * Q * tau, tol=1e-12))
            rep.conclusions.append(check("%s value diameter <= C0 ||df||(V_{r_%d})" % (cid, max(k - 1, 0)),
                                         rec.value_support_diameter, "<=", table.C0 * bound_df, tol=1e-12))
        ladder.levels.append(recs)
        ladder.clusters.append(level_clusters)
        covered = np.concatenate([c.atom_ids for c in recs]) if recs else np.zeros(0, dtype=np.int64)
        rep.conclusions.append(flag("level %d components disjoint" % (k + 1),
                                    len(np.unique(covered)) == len(covered)))
        pc = sum(1 for c in recs if c.meets_half_ball)
        rep.conclusions.append(check("|Pi'_%d| <= Q" % (k + 1), pc, "<=", Q))
    counts = ladder.prime_counts()
    ladder.k0 = stabilization_index(counts)
    rep.data.update({"prime_counts": counts, "k0": ladder.k0,
                     "components_per_level": [len(l) for l in ladder.levels]})
    return ladder


def stabilization_index(prime_counts: Sequence[int]) -> int:
    """First positive level after which ``|Pi'_k|`` stays constant (within the built depth)."""
    K = len(prime_counts) - 1
    if K < 1:
        return 0
    k0 = K
    while k0 > 1 and prime_counts[k0 - 1] == prime_counts[K]:
        k0 -= 1
    return k0


def holder_certificate(ladder: PartitionLadder, sigma: float, table: ConstantsTable, *,
                       q: Optional[float] = None, V: Optional[QuadratureVarifold] = None) -> Report:
    """Eventual constancy of ``|Pi'_k|``, limit values ``y_i`` and the pointwise Hoelder decay bound."""
    table.require("eps3", "eps4", "C1")
    V = ladder.varifold if V is None else V
    a, r, lam, f, Q = ladder.center, ladder.r, ladder.lam, ladder.f, table.Q
    q = table.q if q is None else q
    mu = 1 - V.m / q
    om = unit_ball_volume(V.m)
    rep = Report("holder-certify")
    name = "B" if f == "S" else "df"
    df_small = r ** mu * lq_seminorm(V, closed_ball(a, r), name, q)
    dens = radius_grid(V, a, r)
    theta = mass(V, closed_ball(a, dens[0])) / dens[0] ** V.m / om
    rep.premises += [
        check("lambda <= eps4/(1+eps4)", lam, "<=", table.lambda_holder_max),
        check("density at a = Q", theta, "==", Q, tol=0.05 * Q),
        check("r^-m ||V||(closed ball(a,r)) <= (Q+eps3) omega", mass(V, closed_ball(a, r)) / r ** V.m, "<=",
              (Q + table.eps3) * om, tol=TOL.quadrature),
        check("r^mu ||H||_q <= eps4", smallness(V, a, r, q), "<=", table.eps4, tol=1e-15),
        check("r^mu ||df||_q <= sigma", df_small, "<=", sigma, tol=1e-15),
    ]
    counts = ladder.prime_counts()
    for k, c in enumerate(counts[1:], start=1):
        rep.conclusions.append(check("|Pi'_%d| <= Q" % k, c, "<=", Q))
    rep.conclusions.append(flag("|Pi'_k| nondecreasing for k >= 1",
                                all(b >= a_ for a_, b in zip(counts[1:], counts[2:]))))
    # parent map Pi'_{k+1} -> Pi'_k is onto
    for k in range(1, len(ladder.levels) - 1):
        parents = {c.parent for c in ladder.levels[k + 1] if c.meets_half_ball}
        primes = {c.id for c in ladder.levels[k] if c.meets_half_ball}
        rep.conclusions.append(flag("parent map onto Pi'_%d" % k, primes <= parents))
    k0 = ladder.k0
    final = [c for c in ladder.levels[-1] if c.meets_half_ball]
    limits = []
    for c in final:
        chain, cur = [c], c
        while cur.parent is not None and cur.level > k0:
            cur = ladder.component(cur.parent)
            chain.append(cur)
        vals_ok = True
        for child, par in zip(chain, chain[1:]):
            vals_ok &= bool(np.isin(child.atom_ids, par.atom_ids).all())
        rep.conclusions.append(flag("value supports nested along %s" % c.id, vals_ok))
        c.limit_value = c.barycenter.copy()
        limits.append(c.limit_value)
    upsilon = np.unique(np.round(np.array(limits), 9), axis=0) if limits else np.zeros((0, 1))
    rep.conclusions.append(check("|Upsilon| <= Q", len(upsilon), "<=", Q))
    d = np.linalg.norm(V.x - a, axis=1)
    inside = V.subset(d < r)
    worst = {"atom": None, "excess": -math.inf}
    violations = 0
    if len(upsilon) and not inside.is_zero:
        vals = values_of(inside, f)
        dist_y = np.min(np.linalg.norm(vals[:, None, :] - upsilon[None, :, :], axis=2), axis=1)
        dx = np.linalg.norm(inside.x - a, axis=1)
        bound = table.C1 * sigma * (dx / (lam * r)) ** mu
        excess = dist_y - bound
        violations = int(np.sum(excess > 1e-12))
        i = int(np.argmax(excess / np.maximum(bound, 1e-300)))
        worst = {"atom": int(inside.ids[i]), "x": inside.x[i].tolist(), "dist": float(dist_y[i]),
                 "bound": float(bound[i]), "excess": float(excess[i])}
        rep.data["max_ratio"] = float(np.max(dist_y / np.maximum(bound, 1e-300)))
    rep.conclusions.append(check("Hoelder bound violations", violations, "<=", 0,
                                 detail="worst atom %s" % worst.get("atom")))
    rep.data.update({"k0": k0, "prime_counts": counts, "Upsilon": upsilon, "worst": worst, "sigma": sigma,
                     "violations": violations,
                     "C1": table.C1, "Upsilon_reading": "Upsilon = {y_i}, final-level barycenters"})
    return rep
