"""Explicit constant chains, solved deterministically.

Strict inequalities ``x < bound`` are realised as ``x = STRICT * bound`` and
equalities are solved exactly.  Constants that only exist through a
compactness argument (eps5, eps6, eps7) and the Sobolev-Poincare constant
Gamma are configuration inputs.  Every solved entry is substituted back into
its defining inequality when a table is built; a failure raises.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

from .geometry import unit_ball_volume

STRICT = 0.99
CONFIGURED_DEFAULT = 0.1


class ConstantsError(ValueError):
    pass


def bisect_root(fn: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12,
                max_iter: int = 400) -> float:
    """Root of a sign-changing function on ``[lo, hi]``; the bracket is widened if needed."""
    flo, fhi = fn(lo), fn(hi)
    grow = 0
    while flo * fhi > 0:
        hi = lo + 2 * (hi - lo)
        fhi = fn(hi)
        grow += 1
        if grow > 60:
            raise ConstantsError("no sign change found for root bracket")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def largest_admissible(ok: Callable[[float], bool], hi: float, tol: float = 1e-15) -> float:
    """Largest ``x`` in ``(0, hi]`` with ``ok(x)`` for a predicate that holds on an initial interval."""
    if ok(hi):
        return hi
    lo = 0.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return lo


def mu_lambda(m: int, q: float) -> tuple[float, float]:
    """``mu = 1 - m/q`` and ``Lambda = 2 omega_m^(-1/q) / mu``."""
    if not q > m >= 1:
        raise ConstantsError("need q > m >= 1 (got m=%s, q=%s)" % (m, q))
    mu = 1.0 - m / q
    if math.isinf(q):
        return 1.0, 2.0
    return mu, 2.0 * unit_ball_volume(m) ** (-1.0 / q) / mu


def solve_support_constants(m: int, q: float, Q: float) -> dict:
    """``eps0`` and ``eps1`` by equality in their defining inequalities."""
    if Q < 1:
        raise ConstantsError("Q must be >= 1")
    c = 2.0 ** (-(m + 1))
    eps0 = c / (1 + c / Q)
    _, lam = mu_lambda(m, q)
    eps1 = math.log(min(1 + c / Q, 2 / math.sqrt(3))) / lam
    return {"eps0": eps0, "eps1": eps1}


def smallest_M(dimY: int, n: int, Q: float) -> int:
    ratio = (Q + 0.25) / (Q + 0.5)
    M = max(dimY, n) + 1
    while not ratio < 1 - 1 / M:
        M += 1
    return M


def solve_partition_constants(dimY: int, n: int, m: int, q: float, Q: float, Gamma: float) -> dict:
    if Gamma is None or not Gamma > 0:
        raise ConstantsError("Gamma must be supplied and positive")
    mu, _ = mu_lambda(m, q)
    eps2 = STRICT * min(0.5, 1 / Gamma, ((Q + 1) / (Q + 0.5)) ** (1 / m) - 1)
    C0 = 2 * Q * Gamma if m == 1 else 2 * Q * Gamma ** (m / mu)
    return {"M": smallest_M(dimY, n, Q), "eps2": eps2, "C0": C0}


def solve_holder_constants(partial: dict, m: int, q: float, Q: float) -> dict:
    """``eps3``, ``eps4``, ``C1``.

    ``eps4`` uses the sharper ``Q + 1/8`` in both the exponential and the
    Hoelder condition; since ``eps3 < 1/8`` this also satisfies the same
    conditions written with ``Q + eps3``.
    """
    for key in ("eps0", "eps1", "eps2", "C0"):
        if partial.get(key) is None:
            raise ConstantsError("prerequisite constant %s missing" % key)
    mu, lam = mu_lambda(m, q)
    om = unit_ball_volume(m)
    eps3 = STRICT * min(0.125, partial["eps0"])
    eps4 = STRICT * min(partial["eps1"],
                        math.log((Q + 0.25) / (Q + 0.125)) / lam,
                        partial["eps2"] * ((Q + 0.125) * om) ** (-mu / m),
                        0.5)
    C1 = partial["C0"] if m > 1 else ((Q + 0.25) * om) ** mu * partial["C0"]
    return {"eps3": eps3, "eps4": eps4, "C1": C1}


def solve_cone_cylinder_constants(m: int, Q: float, delta2: float, delta3: float) -> dict:
    if not (0 < delta2 < 1 and 0 < delta3 < 0.25):
        raise ConstantsError("need delta2 in (0,1) and delta3 in (0,1/4)")
    target = (1 + delta2) / 2
    lam0 = math.sqrt(1 - target ** (2 / m))

    def phi(t):
        return (1 - (1 + t) ** -2) ** (m / 2) - target

    grid = [phi(10 * k / 200) for k in range(201)]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ConstantsError("tau0 equation is not monotone on [0, 10]")
    tau0 = bisect_root(phi, 0.0, 10.0, 1e-12)
    sigma0 = STRICT * min(1 - 2 * delta3,
                          math.sqrt(((Q + target) / (Q + delta2)) ** (2 / m) - 1))
    lam1 = min(lam0, 2 / (2 + math.sqrt(2)), 2 / math.sqrt(1 + sigma0 ** 2))
    return {"lam0": lam0, "tau0": tau0, "sigma0": sigma0, "lam1": lam1}


LIPSCHITZ_DELTA = 0.5


def solve_lipschitz_lam2(m: int, Q: float, delta: float = LIPSCHITZ_DELTA) -> float:
    """``lam2`` from the cylinder estimate with ``delta2 = (1 - delta)/2``, ``delta3 = 1/8``, kept below 1/2."""
    cc = solve_cone_cylinder_constants(m, Q, (1 - delta) / 2, 0.125)
    return min(cc["lam1"], STRICT * 0.5)


def eps8_conditions(eps: float, m: int, q: float, Q: float, eps3: float) -> list[tuple[str, float, float]]:
    """``(name, lhs, rhs)`` of the three exponential conditions, each meaning ``lhs <= rhs``."""
    _, lam = mu_lambda(m, q)
    e = math.exp(lam * eps)
    return [
        ("exp<=(Q+eps3)/(Q+eps8)", e, (Q + eps3) / (Q + eps)),
        ("exp<=(Q+1.5eps8)/(Q+eps8)*8Q/(8Q-1)", e, (Q + 1.5 * eps) / (Q + eps) * 8 * Q / (8 * Q - 1)),
        ("exp<=Q/(Q-3/8)", e, Q / (Q - 0.375)),
    ]


def solve_main_constants(table: dict, n: int, m: int, q: float, Q: float) -> dict:
    for key in ("eps3", "eps4", "C1", "eps7", "lam2"):
        if table.get(key) is None:
            raise ConstantsError("prerequisite constant %s missing" % key)
    mu, lam = mu_lambda(m, q)
    om = unit_ball_volume(m)
    eps3, eps4, eps7 = table["eps3"], table["eps4"], table["eps7"]
    lam3p = min(table["lam2"], eps4 / (1 + eps4))
    bounds = [eps3 / 2, eps4 / m, 0.25, eps7 * lam3p ** mu / table["C1"],
              m * (eps7 / ((Q + 0.5) * om) ** mu) ** (1 / m)]
    for k in range(3):
        def ok(x, k=k):
            _, lhs, rhs = eps8_conditions(x, m, q, Q, eps3)[k]
            return lhs <= rhs
        bounds.append(largest_admissible(ok, 1.0))
    eps8 = STRICT * min(bounds)
    return {"lam3p": lam3p, "eps8": eps8, "lam3": table["lam2"] * lam3p}


@dataclass(frozen=True)
class ConstantsTable:
    m: int
    n: int
    q: float
    Q: int
    dimY: int
    mu: float
    lambda_const: float
    omega: float
    eps0: float
    eps1: float
    Gamma: Optional[float] = None
    M: Optional[int] = None
    eps2: Optional[float] = None
    C0: Optional[float] = None
    eps3: Optional[float] = None
    eps4: Optional[float] = None
    C1: Optional[float] = None
    delta2: float = 0.25
    delta3: float = 0.125
    lam0: float = 0.0
    tau0: float = 0.0
    sigma0: float = 0.0
    lam1: float = 0.0
    lam2: float = 0.0
    lam3p: Optional[float] = None
    lam3: Optional[float] = None
    eps5: float = CONFIGURED_DEFAULT
    eps6: float = CONFIGURED_DEFAULT
    eps7: float = CONFIGURED_DEFAULT
    eps8: Optional[float] = None
    L: float = 1.0
    provenance: dict = field(default_factory=dict)

    @property
    def lambda_partition_max(self) -> Optional[float]:
        return None if self.eps2 is None else self.eps2 / (1 + self.eps2)

    @property
    def lambda_holder_max(self) -> Optional[float]:
        return None if self.eps4 is None else self.eps4 / (1 + self.eps4)

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                hint = " (supply Gamma)" if name in ("eps2", "C0", "eps4", "C1", "eps8", "lam3") else ""
                raise ConstantsError("constant %s unavailable%s" % (name, hint))

    def self_check(self) -> list[dict]:
        """Re-substitute every solved constant into its defining relation."""
        out = []

        def rec(name, relation, lhs, rhs, strict=False, tol=1e-12):
            ok = lhs < rhs if strict else lhs <= rhs + tol
            out.append({"constant": name, "relation": relation, "lhs": lhs, "rhs": rhs, "ok": bool(ok)})

        m, Q, lam, om, mu = self.m, self.Q, self.lambda_const, self.omega, self.mu
        c = 2.0 ** (-(m + 1))
        rec("mu", "0 < mu < 1", 0.0, mu, strict=True)
        rec("eps0", "eps0(1 + 2^-(m+1)/Q) <= 2^-(m+1)", self.eps0 * (1 + c / Q), c)
        rec("eps0", "equality", abs(self.eps0 * (1 + c / Q) - c), 1e-12)
        rec("eps1", "exp(Lambda eps1) <= min{1 + 2^-(m+1)/Q, 2/sqrt3}",
            math.exp(lam * self.eps1), min(1 + c / Q, 2 / math.sqrt(3)))
        target = (1 + self.delta2) / 2
        rec("lam0", "(1 - lam0^2)^(m/2) >= (1+delta2)/2", target, (1 - self.lam0 ** 2) ** (m / 2))
        rec("tau0", "|((1+t)^2-1)^(m/2)/(1+t)^m - (1+delta2)/2| <= 1e-9",
            abs(((1 + self.tau0) ** 2 - 1) ** (m / 2) / (1 + self.tau0) ** m - target), 1e-9)
        rec("sigma0", "sigma0 < 1 - 2 delta3", self.sigma0, 1 - 2 * self.delta3, strict=True)
        rec("sigma0", "(1+sigma0^2)^(m/2) < (Q+(1+delta2)/2)/(Q+delta2)",
            (1 + self.sigma0 ** 2) ** (m / 2), (Q + target) / (Q + self.delta2), strict=True)
        rec("lam1", "lam1 <= min{lam0, 2/(2+sqrt2), 2/sqrt(1+sigma0^2)}", self.lam1,
            min(self.lam0, 2 / (2 + math.sqrt(2)), 2 / math.sqrt(1 + self.sigma0 ** 2)))
        rec("lam2", "0 < lam2 < 1/2", self.lam2, 0.5, strict=True)
        if self.eps2 is not None:
            rec("M", "(Q+1/4)/(Q+1/2) < 1 - 1/M", (Q + 0.25) / (Q + 0.5), 1 - 1 / self.M, strict=True)
            rec("M", "M > max{dimY, n}", max(self.dimY, self.n), self.M, strict=True)
            rec("eps2", "eps2 < 1/2", self.eps2, 0.5, strict=True)
            rec("eps2", "eps2 < 1/Gamma", self.eps2, 1 / self.Gamma, strict=True)
            rec("eps2", "(Q+1/2)/(Q+1) < (1+eps2)^-m", (Q + 0.5) / (Q + 1), (1 + self.eps2) ** -m, strict=True)
            rec("eps3", "eps3 < min{1/8, eps0}", self.eps3, min(0.125, self.eps0), strict=True)
            rec("eps4", "exp(Lambda eps4)(Q+1/8) <= Q+1/4", math.exp(lam * self.eps4) * (Q + 0.125), Q + 0.25)
            rec("eps4", "exp(Lambda eps4)(Q+eps3) <= Q+1/4", math.exp(lam * self.eps4) * (Q + self.eps3), Q + 0.25)
            rec("eps4", "eps4 < eps1", self.eps4, self.eps1, strict=True)
            rec("eps4", "eps4((Q+1/8) omega)^(mu/m) < eps2",
                self.eps4 * ((Q + 0.125) * om) ** (mu / m), self.eps2, strict=True)
            rec("eps4", "eps4 < 1/2", self.eps4, 0.5, strict=True)
            rec("lam3p", "lam3' <= min{lam2, eps4/(1+eps4)}", self.lam3p,
                min(self.lam2, self.eps4 / (1 + self.eps4)))
            e8 = self.eps8
            rec("eps8", "eps8 <= min{eps3/2, eps4/m, 1/4}", e8, min(self.eps3 / 2, self.eps4 / m, 0.25))
            rec("eps8", "C1 eps8 / lam3'^mu <= eps7", self.C1 * e8 / self.lam3p ** mu, self.eps7)
            for name, lhs, rhs in eps8_conditions(e8, m, self.q, Q, self.eps3):
                rec("eps8", name, lhs, rhs)
            rec("eps8", "(eps8/m)^m ((Q+1/2) omega)^mu <= eps7",
                (e8 / m) ** m * ((Q + 0.5) * om) ** mu, self.eps7)
            rec("lam3", "lam3 = lam2 lam3'", abs(self.lam3 - self.lam2 * self.lam3p), 1e-15)
        return out

    def to_json(self) -> dict:
        d = asdict(self)
        d["lambda_partition_max"] = self.lambda_partition_max
        d["lambda_holder_max"] = self.lambda_holder_max
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def build_table(m: int, n: int, q: float, Q: int, Gamma: Optional[float] = None, *,
                dimY: Optional[int] = None, eps5: float = CONFIGURED_DEFAULT,
                eps6: float = CONFIGURED_DEFAULT, eps7: float = CONFIGURED_DEFAULT,
                delta2: Optional[float] = None, delta3: float = 0.125, L: float = 1.0) -> ConstantsTable:
    """Solve the whole chain.  Without ``Gamma`` only the Gamma-free part is filled in."""
    if not 1 <= m <= n:
        raise ConstantsError("need 1 <= m <= n")
    if not (isinstance(Q, int) and Q >= 1):
        raise ConstantsError("Q must be a positive integer")
    for name, v in (("eps5", eps5), ("eps6", eps6), ("eps7", eps7), ("L", L)):
        if not v > 0:
            raise ConstantsError("%s must be positive" % name)
    dimY = n * (n + 1) // 2 if dimY is None else dimY
    delta2 = (1 - LIPSCHITZ_DELTA) / 2 if delta2 is None else delta2
    mu, lam = mu_lambda(m, q)
    vals = dict(m=m, n=n, q=q, Q=Q, dimY=dimY, mu=mu, lambda_const=lam, omega=unit_ball_volume(m),
                eps5=eps5, eps6=eps6, eps7=eps7, L=L, delta2=delta2, delta3=delta3)
    vals.update(solve_support_constants(m, q, Q))
    vals.update(solve_cone_cylinder_constants(m, Q, delta2, delta3))
    vals["lam2"] = solve_lipschitz_lam2(m, Q)
    prov = {k: "solved" for k in ("mu", "lambda_const", "eps0", "eps1", "lam0", "tau0", "sigma0", "lam1", "lam2")}
    prov.update({k: "configured" for k in ("eps5", "eps6", "eps7", "L", "delta2", "delta3")})
    if Gamma is not None:
        vals["Gamma"] = Gamma
        prov["Gamma"] = "configured"
        vals.update(solve_partition_constants(dimY, n, m, q, Q, Gamma))
        vals.update(solve_holder_constants(vals, m, q, Q))
        vals.update(solve_main_constants(vals, n, m, q, Q))
        prov.update({k: "solved" for k in ("M", "eps2", "C0", "eps3", "eps4", "C1", "lam3p", "eps8", "lam3")})
    table = ConstantsTable(provenance=prov, **vals)
    bad = [c for c in table.self_check() if not c["ok"]]
    if bad:
        raise ConstantsError("self-check failed: %s" % "; ".join(
            "%s: %s (%.6g vs %.6g)" % (c["constant"], c["relation"], c["lhs"], c["rhs"]) for c in bad))
    return table
