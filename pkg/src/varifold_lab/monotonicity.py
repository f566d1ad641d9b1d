"""Density ratios, the tilt integral G_V(s, r) and the almost-monotonicity checks.

The smallness functional used for every ``delta`` premise is
``r^mu * (int_{closed ball} |H|^q d||V||)^(1/q)``, which is invariant under
dilations and matches the ``(s/r)^mu`` exponents of the exponential weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .constants import ConstantsTable, mu_lambda
from .geometry import TOL, closed_ball, open_ball, unit_ball_volume
from .report import Report, check, flag, series_csv
from .varifold import QuadratureVarifold, ZeroVarifoldError, lq_seminorm, mass

SUPPORT_FACTOR = 1.5
DENSITY_SLACK = 0.05


@dataclass(frozen=True)
class DensityRatio:
    ratio: float
    normalized: float


def _require_nonzero(V: QuadratureVarifold):
    if V.is_zero:
        raise ZeroVarifoldError("the zero varifold is rejected by every checker")


def _dist(V, a):
    return np.linalg.norm(V.x - np.asarray(a, dtype=float), axis=1)


def density_ratio(V: QuadratureVarifold, a, r: float) -> DensityRatio:
    """``r^-m ||V||(closed ball(a, r))`` and the same divided by ``omega_m``."""
    if not r > 0:
        raise ValueError("radius must be positive")
    _require_nonzero(V)
    ratio = mass(V, closed_ball(a, r)) / r ** V.m
    return DensityRatio(ratio, ratio / unit_ball_volume(V.m))


def tilt_weights(V: QuadratureVarifold, a, exclude_center: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom ``w |S^perp (x - a)|^2 / |x - a|^(m+2)`` and the distances ``|x - a|``."""
    d = V.x - np.asarray(a, dtype=float)
    dist = np.linalg.norm(d, axis=1)
    normal = d - np.einsum("aij,aj->ai", V.S, d)
    center = dist <= 1e-15 * max(1.0, float(np.max(dist, initial=0.0)))
    if center.any() and not exclude_center:
        raise ValueError("singular quadrature at center (atom %d)" % int(V.ids[np.argmax(center)]))
    with np.errstate(divide="ignore", invalid="ignore"):
        g = V.w * np.sum(normal * normal, axis=1) / dist ** (V.m + 2)
    g[center] = 0.0
    return g, dist


def tilt_integral(V: QuadratureVarifold, a, s: float, r: float, exclude_center: bool = False) -> float:
    """``G_V(s, r)``: the tilt sum over ``closed ball(a, r) minus closed ball(a, s)``."""
    if not 0 <= s < r:
        raise ValueError("need 0 <= s < r")
    _require_nonzero(V)
    sel = np.linalg.norm(V.x - np.asarray(a, dtype=float), axis=1)
    keep = (sel > s) & (sel <= r)
    sub = V.subset(keep)
    if sub.is_zero:
        return 0.0
    g, _ = tilt_weights(sub, a, exclude_center=exclude_center or s > 0)
    return float(np.sum(g))


def smallness(V: QuadratureVarifold, a, r: float, q: float) -> float:
    """``r^mu ||H||_{L^q(closed ball(a, r))}``."""
    mu = 1 - V.m / q
    return r ** mu * lq_seminorm(V, closed_ball(a, r), "H", q)


def radius_grid(V: QuadratureVarifold, a, r: float, count: int = 20, rmin: Optional[float] = None) -> np.ndarray:
    """Strictly increasing radii ending at ``r``.

    A logarithmic grid from ``rmin`` to ``r``; every radius below ``r`` is
    moved to the outer cell edge of an atom shell, so no ball boundary cuts
    through a shell.  The edge is ``d + h |cos| / 2`` with ``cos`` the radial
    component of the tangent, which is exact for pieces through ``a``; when
    that would reach the next shell the midpoint between shells is used.
    The grid is refined until it holds ``count`` radii or every shell is used.
    """
    _require_nonzero(V)
    d = V.x - np.asarray(a, dtype=float)
    dist = np.linalg.norm(d, axis=1)
    if rmin is None:
        near = int(np.argmin(dist))
        rmin = max(r * 1e-2, 4 * float(V.h[near]))
        if rmin >= r:
            rmin = 0.25 * r
    inside = dist < r
    key = np.round(dist[inside], 12)
    shells, inv = np.unique(key, return_inverse=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        radial = np.linalg.norm(np.einsum("aij,aj->ai", V.S[inside], d[inside]), axis=1) / dist[inside]
    reach = 0.5 * V.h[inside] * np.nan_to_num(radial, nan=1.0)
    outer = np.zeros(len(shells))
    np.maximum.at(outer, inv, reach)
    edge = shells[:-1] + outer[:-1]
    mids = np.where((edge > shells[:-1]) & (edge < shells[1:]), edge, 0.5 * (shells[1:] + shells[:-1]))
    k = count
    for _ in range(60):
        raw = np.geomspace(rmin, r, k)[:-1]
        if len(mids):
            idx = np.clip(np.searchsorted(mids, raw), 0, len(mids) - 1)
            alt = np.clip(idx - 1, 0, len(mids) - 1)
            pick = np.where(np.abs(mids[alt] - raw) < np.abs(mids[idx] - raw), mids[alt], mids[idx])
            raw = np.where(pick < r, pick, raw)
        grid = np.unique(np.concatenate([raw[raw < r], [r]]))
        if len(grid) >= count or k > 4 * len(mids) + 4 * count:
            return grid
        k += count
    return grid


def series(V: QuadratureVarifold, a, r: float, grid: np.ndarray, exclude_center: bool = True):
    """Ratios ``s^-m ||V||(closed ball(a, s))`` and cumulative tilt ``C(s) = G(0+, s)`` on a grid."""
    g, dist = tilt_weights(V, a, exclude_center=exclude_center)
    order = np.argsort(dist, kind="stable")
    ds, ws, gs = dist[order], V.w[order], g[order]
    cw = np.concatenate([[0.0], np.cumsum(ws)])
    cg = np.concatenate([[0.0], np.cumsum(gs)])
    k = np.searchsorted(ds, grid, side="right")
    return cw[k] / grid ** V.m, cg[k]


@dataclass
class MonotonicityReport(Report):
    center: Optional[np.ndarray] = None
    r: float = 0.0
    q: float = 0.0
    delta: float = 0.0
    grid: Optional[np.ndarray] = None
    ratios: Optional[np.ndarray] = None
    normalized: Optional[np.ndarray] = None
    tilt: Optional[np.ndarray] = None
    residual: float = 0.0
    equality_gap: float = 0.0
    worst_pair: Optional[tuple] = None

    def to_csv(self) -> str:
        return series_csv({"s": self.grid, "ratio": self.ratios, "normalized": self.normalized,
                           "tilt_s_r": self.tilt})

    def normalized_series(self) -> dict:
        return {"s_over_r": self.grid / self.r, "normalized": self.normalized, "tilt": self.tilt,
                "residual": self.residual}


def check_monotonicity(V: QuadratureVarifold, a, r: float, q: float, delta: float, *,
                       count: int = 20, rmin: Optional[float] = None, tol: float = TOL.quadrature
                       ) -> MonotonicityReport:
    """Both exponentially weighted inequalities for every grid pair ``s < t``."""
    _require_nonzero(V)
    a = np.asarray(a, dtype=float)
    m = V.m
    mu, lam = mu_lambda(m, q)
    om = unit_ball_volume(m)
    rep = MonotonicityReport("check-monotonicity", center=a, r=r, q=q, delta=delta)
    dist = _dist(V, a)
    near = int(np.argmin(dist))
    sm = smallness(V, a, r, q)
    grid = radius_grid(V, a, r, count, rmin)
    ratios, cum = series(V, a, r, grid)
    rep.premises += [
        check("Lambda*delta <= 1", lam * delta, "<=", 1.0),
        check("a in spt||V|| (nearest atom / cell size)", dist[near] / V.h[near], "<=", SUPPORT_FACTOR),
        check("density at a >= 1", ratios[0] / om, ">=", 1.0 - DENSITY_SLACK,
              detail="normalized ratio at the smallest grid radius %.6g" % grid[0]),
        check("r^mu ||H||_q <= delta", sm, "<=", delta, tol=1e-15),
    ]
    e_up = np.exp(lam * delta * (grid / r) ** mu)
    e_dn = np.exp(-lam * delta * (grid / r) ** mu)
    G = cum[None, :] - cum[:, None]          # G[s_idx, t_idx] = G(s, t)
    upper = e_up[:, None] * ratios[:, None] - (e_up[None, :] * ratios[None, :] - G)
    lower = (e_dn[None, :] * ratios[None, :] - G) - e_dn[:, None] * ratios[:, None]
    pairs = np.triu(np.ones((len(grid), len(grid)), dtype=bool), 1)
    worst_up = float(np.max(upper[pairs], initial=-np.inf))
    worst_dn = float(np.max(lower[pairs], initial=-np.inf))
    rep.residual = max(0.0, worst_up, worst_dn)
    rep.equality_gap = float(max(np.max(np.abs(upper[pairs]), initial=0.0),
                                 np.max(np.abs(lower[pairs]), initial=0.0)))
    if rep.residual > 0:
        mat = upper if worst_up >= worst_dn else lower
        i, j = np.unravel_index(np.argmax(np.where(pairs, mat, -np.inf)), mat.shape)
        rep.worst_pair = (float(grid[i]), float(grid[j]))
    rep.conclusions += [
        check("upper inequality residual", max(0.0, worst_up), "<=", tol),
        check("lower inequality residual", max(0.0, worst_dn), "<=", tol),
    ]
    rep.grid, rep.ratios, rep.normalized = grid, ratios, ratios / om
    rep.tilt = cum[-1] - cum
    rep.data = {"smallness": sm, "mu": mu, "Lambda": lam, "grid_size": len(grid),
                "equality_gap": rep.equality_gap, "worst_pair": rep.worst_pair,
                "smallness_formula": "r^mu * (sum_{|x-a|<=r} w |H|^q)^(1/q)"}
    return rep


def _is_subvarifold(W: QuadratureVarifold, V: QuadratureVarifold) -> bool:
    return bool(np.isin(W.ids, V.ids).all())


def check_lower_bound_mass(V: QuadratureVarifold, W: QuadratureVarifold, a, r: float, q: float,
                           delta: float, gamma: float, tol: float = TOL.quadrature) -> Report:
    """``r^-m ||W||(B(a, r)) >= exp(-Lambda delta (1-gamma)^mu) (1-gamma)^m omega_m``."""
    _require_nonzero(V)
    a = np.asarray(a, dtype=float)
    mu, lam = mu_lambda(V.m, q)
    om = unit_ball_volume(V.m)
    rep = Report("check-lower-bound-mass")
    dW = _dist(W, a) if not W.is_zero else np.zeros(0)
    rep.premises += [
        check("Lambda*delta < 1", lam * delta, "<", 1.0),
        flag("0 < gamma < 1", 0 < gamma < 1),
        check("r^mu ||H||_q <= delta", smallness(V, a, r, q), "<=", delta, tol=1e-15),
        flag("W is a restriction of V", _is_subvarifold(W, V)),
        flag("spt||W|| meets B(a, gamma r)", bool(np.any(dW < gamma * r))),
    ]
    bound = math.exp(-lam * delta * (1 - gamma) ** mu) * (1 - gamma) ** V.m * om if 0 < gamma < 1 else float("nan")
    value = (mass(W, open_ball(a, r)) / r ** V.m) if not W.is_zero else 0.0
    rep.conclusions.append(check("r^-m ||W||(B(a,r)) >= bound", value, ">=", bound, tol=tol))
    rep.data = {"value": value, "bound": bound, "margin": value - bound}
    return rep


def check_center_support(V: QuadratureVarifold, Pi: Sequence[QuadratureVarifold], a, r: float, q: float,
                         table: ConstantsTable, *, count: int = 20, tol: float = TOL.quadrature) -> Report:
    """Every component meeting ``B(a, r/2)`` contains ``a``, and there are at most ``Q`` of them."""
    _require_nonzero(V)
    a = np.asarray(a, dtype=float)
    m, Q = V.m, table.Q
    om = unit_ball_volume(m)
    mu, lam = mu_lambda(m, q)
    rep = Report("check-center-support")
    Vr = V.subset(_dist(V, a) < r)
    ids = [np.sort(W.ids) for W in Pi]
    allids = np.concatenate(ids) if ids else np.zeros(0, dtype=np.int64)
    disjoint = len(np.unique(allids)) == len(allids)
    covers = np.array_equal(np.sort(allids), np.sort(Vr.ids))
    mass_gap = abs(sum(W.total_mass for W in Pi) - Vr.total_mass)
    rep.premises += [
        check("r^-m ||V||(closed ball) <= (Q+eps0) omega", density_ratio(V, a, r).ratio, "<=",
              (Q + table.eps0) * om, tol=tol),
        check("r^mu ||H||_q <= eps1", smallness(V, a, r, q), "<=", table.eps1, tol=1e-15),
        flag("partition atoms disjoint", disjoint),
        flag("partition covers V restricted to B(a, r)", covers),
        check("partition mass additivity", mass_gap, "<=", tol),
    ]
    G0 = tilt_integral(V, a, 0.0, r, exclude_center=True)
    rep.conclusions.append(check("G_V(0+, r) <= 2^-(m+2) omega", G0, "<=", 2.0 ** (-m - 2) * om, tol=tol))
    primes = []
    for k, W in enumerate(Pi):
        if W.is_zero:
            continue
        dW = _dist(W, a)
        if not np.any(dW < r / 2):
            continue
        primes.append(k)
        near = int(np.argmin(dW))
        rep.conclusions.append(check("component %d contains a (nearest atom / cell size)" % k,
                                     dW[near] / W.h[near], "<=", SUPPORT_FACTOR))
        grid = radius_grid(V, a, r, count)
        grid = grid[grid < r]
        ratios, _ = series(W, a, r, grid)
        rep.conclusions.append(check("component %d: min_s s^-m ||W||(closed ball(a,s)) >= 2^-(m+1) omega" % k,
                                     float(np.min(ratios)), ">=", 2.0 ** (-m - 1) * om, tol=tol))
    rep.conclusions.append(check("|Pi'| <= Q", len(primes), "<=", Q))
    rep.data = {"Pi_prime": primes, "G_V(0+,r)": G0, "Q": Q}
    return rep
