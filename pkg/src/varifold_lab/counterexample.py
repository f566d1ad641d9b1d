"""The nested point-set sequence ``(R_i, P_i, rho_i)``, its sets ``S(rho)`` and
two planar scenes that break the density and integrability hypotheses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .geometry import closed_ball, unit_ball_volume
from .report import Report, check, flag
from .varifold import QuadratureVarifold, field_norms, lq_seminorm, mass, scene

RULE = "half-of-supremum"
Number = Union[Fraction, float]


class SequenceError(ValueError):
    pass


def _iroot(k: int, e: int) -> Optional[int]:
    if k < 0:
        return None
    r = round(k ** (1.0 / e)) if k else 0
    for c in (r - 1, r, r + 1):
        if c >= 0 and c ** e == k:
            return c
    return None


def exact_pow(x: Fraction, e: Fraction) -> Optional[Fraction]:
    """``x ** e`` as a Fraction when it is rational, else None."""
    if e.denominator == 1:
        return x ** e.numerator
    num, den = _iroot(x.numerator, e.denominator), _iroot(x.denominator, e.denominator)
    if num is None or den is None:
        return None
    return Fraction(num, den) ** e.numerator


@dataclass(frozen=True)
class Monotone:
    """Increasing positive function: ``id``, ``power`` (``coef t^alpha``) or ``log`` (``coef ln(1+t)``)."""

    id: str = "id"
    alpha: float = 1.0
    coef: float = 1.0

    def __post_init__(self):
        if self.id not in ("id", "power", "log"):
            raise SequenceError("unknown function descriptor %r" % self.id)
        if self.alpha <= 0 or self.coef <= 0:
            raise SequenceError("descriptor parameters must be positive")

    @classmethod
    def parse(cls, d) -> "Monotone":
        if isinstance(d, Monotone):
            return d
        if isinstance(d, str):
            return cls(d)
        return cls(d.get("id", "id"), float(d.get("alpha", 1.0)), float(d.get("coef", 1.0)))

    @property
    def exact_capable(self) -> bool:
        return self.id == "id" or self.id == "power"

    def __call__(self, t, exact: bool = False):
        if exact:
            t = Fraction(t)
            if self.id == "id":
                return Fraction(self.coef).limit_denominator(10 ** 12) * t if self.coef != 1 else t
            if self.id == "power":
                v = exact_pow(t, Fraction(self.alpha).limit_denominator(1000))
                if v is None:
                    return None
                return Fraction(self.coef).limit_denominator(10 ** 12) * v
            return None
        t = float(t)
        if self.id == "id":
            return self.coef * t
        if self.id == "power":
            return self.coef * t ** self.alpha
        return self.coef * math.log1p(t)

    def inverse(self, b, exact: bool = False):
        """``sup {t : f(t) < b}`` for increasing ``f``."""
        if exact:
            b = Fraction(b)
            c = Fraction(self.coef).limit_denominator(10 ** 12)
            if self.id == "id":
                return b / c
            if self.id == "power":
                return exact_pow(b / c, 1 / Fraction(self.alpha).limit_denominator(1000))
            return None
        b = float(b)
        if self.id == "id":
            return b / self.coef
        if self.id == "power":
            return (b / self.coef) ** (1 / self.alpha)
        return math.expm1(b / self.coef)

    def to_json(self) -> dict:
        return {"id": self.id, "alpha": self.alpha, "coef": self.coef}


def _check_descriptors(f: Monotone, g: Monotone):
    ts = np.logspace(-12, 0, 25)
    fv = np.array([f(t) for t in ts])
    gv = np.array([g(t) for t in ts])
    if np.any(fv <= 0) or np.any(gv <= 0):
        raise SequenceError("f and g must be positive on (0, inf)")
    if np.any(np.diff(gv) < 0):
        raise SequenceError("g must be nondecreasing")
    if not fv[0] < 1e-3 * fv[-1]:
        raise SequenceError("f does not vanish at 0 on the sampled grid")


@dataclass
class CounterexampleSequence:
    eps: Number
    f: Monotone
    g: Monotone
    triples: list
    requested_depth: int
    exact: bool
    rule: str = RULE
    flags: list = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.triples)

    @property
    def R(self) -> list:
        return [t[0] for t in self.triples]

    @property
    def P(self) -> list:
        return [t[1] for t in self.triples]

    @property
    def rho(self) -> list:
        return [t[2] for t in self.triples]

    def fv(self, t):
        v = self.f(t, self.exact)
        return v

    def gv(self, t):
        return self.g(t, self.exact)

    def invariant_failures(self) -> list:
        """``(i, inequality)`` for every violated invariant, 1-based."""
        out = []
        R, P, rho = self.R, self.P, self.rho
        if R and R[0] != 1:
            out.append((1, "R_1 = 1"))
        for k in range(self.depth):
            i = k + 1
            if not 0 < P[k] < R[k]:
                out.append((i, "0 < P_i < R_i"))
            fr = self.fv(rho[k])
            if not fr < min(P[k], R[k] - P[k]):
                out.append((i, "f(rho_i) < min{P_i, R_i - P_i}"))
            if k + 1 < self.depth:
                if not rho[k + 1] < min(rho[k], Fraction(1, i) if self.exact else 1.0 / i):
                    out.append((i + 1, "rho_{i+1} < min{rho_i, 1/i}"))
                if R[k + 1] != P[k] - fr:
                    out.append((i + 1, "R_{i+1} = P_i - f(rho_i)"))
                if not P[k + 1] < min(self.gv(rho[k]), R[k + 1]):
                    out.append((i + 1, "P_{i+1} < min{g(rho_i), R_{i+1}}"))
        return out

    def to_json(self) -> dict:
        def enc(v):
            return str(v) if isinstance(v, Fraction) else float(v)
        return {"version": 1, "eps": enc(self.eps), "f": self.f.to_json(), "g": self.g.to_json(),
                "rule": self.rule, "exact": self.exact, "depth": self.depth,
                "requested_depth": self.requested_depth, "flags": self.flags,
                "triples": [{"i": i + 1, "R": enc(R), "P": enc(P), "rho": enc(r),
                             "R_float": float(R), "P_float": float(P), "rho_float": float(r)}
                            for i, (R, P, r) in enumerate(self.triples)]}


def _generate(eps, f: Monotone, g: Monotone, depth: int, exact: bool):
    half = Fraction(1, 2) if exact else 0.5
    one = Fraction(1) if exact else 1.0
    R = one
    P = half * R
    prev = Fraction(eps) if exact else float(eps)
    triples = []
    for i in range(1, depth + 1):
        fb = f.inverse(min(P, R - P), exact)
        if fb is None:
            return None
        bounds = [prev, fb]
        if i >= 2:
            bounds.append(one / (i - 1))
        rho = half * min(bounds)
        fr = f(rho, exact)
        gr = g(rho, exact)
        if fr is None or gr is None:
            return None
        if not exact and not (rho > 0 and P > 0 and R - P > 0 and fr > 0 and gr > 0):
            return triples, "supremum underflow at i = %d" % i
        triples.append((R, P, rho))
        if i == depth:
            break
        R = P - fr
        P = half * min(gr, R)
        prev = rho
    return triples, None


def generate_sequence(eps=0.5, f="id", g="id", depth: int = 10, *, exact: Optional[bool] = None
                      ) -> CounterexampleSequence:
    """Build ``depth`` triples by the half-of-supremum rule.

    ``P_1 = R_1 / 2``; ``rho_i`` is half the smallest of ``rho_{i-1}`` (``eps``
    for ``i = 1``), ``1/(i-1)`` and ``sup {t : f(t) < min(P_i, R_i - P_i)}``;
    ``R_{i+1} = P_i - f(rho_i)`` and ``P_{i+1} = min(g(rho_i), R_{i+1}) / 2``.
    Rational arithmetic is used whenever every value stays rational.
    """
    f, g = Monotone.parse(f), Monotone.parse(g)
    if depth < 1:
        raise SequenceError("depth must be at least 1")
    if not float(eps) > 0:
        raise SequenceError("eps must be positive")
    _check_descriptors(f, g)
    flags = []
    res = None
    if exact is not False and f.exact_capable and g.exact_capable:
        res = _generate(Fraction(eps).limit_denominator(10 ** 12) if isinstance(eps, float) else Fraction(eps),
                        f, g, depth, True)
        if res is None:
            if exact:
                raise SequenceError("exact mode needs rational values of f and g")
            flags.append("irrational values: float mode")
        else:
            used_exact = True
    elif exact:
        raise SequenceError("exact mode needs id or power descriptors")
    if res is None:
        res = _generate(float(eps), f, g, depth, False)
        used_exact = False
    triples, note = res
    if note:
        flags.append(note)
    seq = CounterexampleSequence(Fraction(eps) if used_exact else float(eps), f, g, triples, depth, used_exact,
                                 flags=flags)
    bad = seq.invariant_failures()
    if bad:
        i, what = bad[0]
        raise SequenceError("invariant %s fails at i = %d" % (what, i))
    return seq


@dataclass
class RealizedSet:
    points: tuple
    depth_limited: bool = False

    def __len__(self) -> int:
        return len(self.points)

    def __contains__(self, p) -> bool:
        return p in self.points


def s_of_rho(seq: CounterexampleSequence, rho) -> RealizedSet:
    """``{P_i : rho_i <= rho}`` at the realized depth."""
    pts = tuple(P for P, r in zip(seq.P, seq.rho) if r <= rho)
    return RealizedSet(pts, depth_limited=not pts or rho < seq.rho[-1])


def verify_properties(seq: CounterexampleSequence) -> Report:
    """Nesting, two-centre covering and the disjoint-interval refutation at the realized depth."""
    rep = Report("counterexample")
    bad = seq.invariant_failures()
    rep.premises.append(flag("sequence invariants", not bad,
                             "; ".join("i = %d: %s" % b for b in bad)))
    grid = sorted(set(seq.rho))
    sets = {r: set(s_of_rho(seq, r).points) for r in grid}
    nest = [(t, r) for a, t in enumerate(grid) for r in grid[a + 1:] if not sets[t] <= sets[r]]
    rep.conclusions.append(flag("(1) S(tau) within S(rho) for tau < rho", not nest,
                                "" if not nest else "fails at tau = %s, rho = %s" % tuple(map(float, nest[0]))))
    cover_fail = []
    for r in grid:
        i = min(k for k, rk in enumerate(seq.rho) if rk <= r)
        gr = seq.gv(r)
        for p in sets[r]:
            if not (abs(p - seq.P[i]) < gr or abs(p) < gr):
                cover_fail.append((i + 1, float(r), float(p)))
    rep.conclusions.append(flag("(2) S(rho) covered by B(P_i, g(rho)) and B(0, g(rho))", not cover_fail,
                                "" if not cover_fail else "i = %d, rho = %g, point %g" % cover_fail[0]))
    ivs = [(P - seq.fv(r), P + seq.fv(r)) for P, r in zip(seq.P, seq.rho)]
    overlaps = [(i + 1, j + 1) for i in range(len(ivs)) for j in range(i + 1, len(ivs))
                if not (ivs[i][1] < ivs[j][0] or ivs[j][1] < ivs[i][0])]
    chain = []
    for k in range(seq.depth - 1):
        lo, hi = ivs[k]
        if not (seq.R[k + 1] <= lo and hi < seq.R[k]):
            chain.append(k + 1)
    rep.conclusions.append(flag("(3) intervals [P_i - f(rho_i), P_i + f(rho_i)] pairwise disjoint", not overlaps,
                                "" if not overlaps else "intervals %d and %d overlap" % overlaps[0]))
    rep.conclusions.append(flag("(3) R_{i+1} <= P_i - f(rho_i) and P_i + f(rho_i) < R_i", not chain,
                                "" if not chain else "fails at i = %d" % chain[0]))
    rep.data = {"depth": seq.depth, "exact": seq.exact, "intervals": [[float(a), float(b)] for a, b in ivs],
                "overlaps": overlaps,
                "points_needed": seq.depth if not overlaps else None, "sequence": seq.to_json()}
    return rep


def build_line_fan(seq: CounterexampleSequence, depth_used: Optional[int] = None, *,
                   resolution: int = 256) -> QuadratureVarifold:
    """Lines through 0 in the plane with direction angles ``P_1 .. P_d``, clipped to the unit ball."""
    d = seq.depth if depth_used is None else min(depth_used, seq.depth)
    return scene(2, 1, {"kind": "line-fan", "center": [0, 0], "radius": 1.0,
                        "angles": [float(P) for P in seq.P[:d]], "resolution": resolution})


def fan_density(V: QuadratureVarifold, r: float = 1.0) -> dict:
    """Normalized density ratio at 0 and the line count it should equal."""
    ratio = mass(V, closed_ball(np.zeros(2), r)) / (unit_ball_volume(1) * r)
    return {"density": ratio, "lines": int(len(np.unique(V.piece)))}


def sine_zeros(seq: CounterexampleSequence, depth_used: Optional[int] = None) -> list:
    d = seq.depth if depth_used is None else min(depth_used, seq.depth)
    pts = sorted({0.0, 1.0} | {float(P) for P in seq.P[:d]})
    if len(set(pts)) != len(pts):
        raise SequenceError("overlapping arches")
    return pts


def build_sine_scene(seq: CounterexampleSequence, depth_used: Optional[int] = None, amplitude: float = 0.5, *,
                     resolution: int = 32) -> QuadratureVarifold:
    """C^1 chain of half-sine arches of amplitude ``c * width`` vanishing at 0, 1 and the ``P_i``, odd in x."""
    return scene(2, 1, {"kind": "sine-zeros", "zeros": sine_zeros(seq, depth_used), "amplitude": amplitude,
                        "odd_reflection": True, "resolution": resolution})


def arch_energy(V: QuadratureVarifold, q: float) -> np.ndarray:
    """``int |kappa|^q`` per arch (one per scene sub-piece)."""
    Bn = field_norms(V, "B")
    return np.array([float(np.sum(V.w[V.piece == k] * Bn[V.piece == k] ** q)) for k in np.unique(V.piece)])


def sine_growth(seq: CounterexampleSequence, depths: Sequence[int], q: float = 2.0, amplitude: float = 0.5,
                resolution: int = 32) -> Report:
    """``||B||_{L^q(B(0,1))}`` for each depth: it must increase strictly."""
    vals, low = [], []
    unit = scene(2, 1, {"kind": "sine-zeros", "zeros": [0.0, 1.0], "amplitude": amplitude,
                        "resolution": resolution})
    kappa = float(arch_energy(unit, q).min())
    for d in depths:
        V = build_sine_scene(seq, d, amplitude, resolution=resolution)
        vals.append(lq_seminorm(V, closed_ball(np.zeros(2), 1.0), "B", q))
        low.append(float(arch_energy(V, q).min()))
    rep = Report("sine-growth")
    rep.conclusions.append(flag("strictly increasing with depth", all(b > a for a, b in zip(vals, vals[1:]))))
    rep.conclusions.append(check("smallest arch energy >= unit arch energy", min(low), ">=", kappa,
                                 tol=1e-6 * kappa))
    rep.data = {"depths": list(depths), "seminorms": vals, "unit_arch_energy": kappa, "min_arch_energy": low}
    return rep
