"""Deterministic SVG figures for planar scenes and partition ladders."""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from .partition import PartitionLadder
from .varifold import QuadratureVarifold

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")
PANEL = 320
GAP = 20


class RenderError(ValueError):
    pass


def _fmt(v: float) -> str:
    s = "%.3f" % v
    return "0.000" if s == "-0.000" else s


def _runs(V: QuadratureVarifold, mask: np.ndarray) -> list[np.ndarray]:
    """Consecutive atoms of one piece that touch each other, as index arrays."""
    out = []
    for p in np.unique(V.piece):
        idx = np.where((V.piece == p) & mask)[0]
        if not len(idx):
            continue
        idx = idx[np.argsort(V.ids[idx], kind="stable")]
        step = np.linalg.norm(np.diff(V.x[idx], axis=0), axis=1)
        reach = 0.5 * (V.h[idx][1:] + V.h[idx][:-1]) * 1.05 + 1e-12
        cuts = np.where(step > reach)[0] + 1
        out += [r for r in np.split(idx, cuts) if len(r)]
    return out


class _Panel:
    def __init__(self, ox: float, center: np.ndarray, half: float):
        self.ox, self.c, self.k = ox, center, (PANEL / 2) / half

    def xy(self, p) -> tuple[float, float]:
        return (self.ox + PANEL / 2 + (p[0] - self.c[0]) * self.k, PANEL / 2 - (p[1] - self.c[1]) * self.k)

    def path(self, pts: np.ndarray, colour: str, dotted: bool = False, width: float = 1.5) -> str:
        if len(pts) == 1:
            x, y = self.xy(pts[0])
            return '<circle cx="%s" cy="%s" r="1.2" fill="%s"/>' % (_fmt(x), _fmt(y), colour)
        d = " ".join(("M" if i == 0 else "L") + "%s %s" % tuple(map(_fmt, self.xy(p))) for i, p in enumerate(pts))
        dash = ' stroke-dasharray="1 3"' if dotted else ""
        return '<path d="%s" fill="none" stroke="%s" stroke-width="%s"%s/>' % (d, colour, width, dash)

    def circle(self, r: float, dash: str = "6 4") -> str:
        x, y = self.xy(self.c)
        return ('<circle cx="%s" cy="%s" r="%s" fill="none" stroke="#444" stroke-width="1" stroke-dasharray="%s"/>'
                % (_fmt(x), _fmt(y), _fmt(r * self.k), dash))

    def frame(self, label: str) -> str:
        return ('<rect x="%s" y="0" width="%d" height="%d" fill="none" stroke="#bbb"/>'
                '<text x="%s" y="14" font-family="monospace" font-size="11">%s</text>'
                % (_fmt(self.ox), PANEL, PANEL, _fmt(self.ox + 4), label))


def _planar(V: QuadratureVarifold):
    if V.n != 2:
        raise RenderError("rendering limited to planar scenes")


def _svg(panels: int, body: Sequence[str]) -> str:
    w = panels * PANEL + (panels - 1) * GAP
    head = ('<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" viewBox="0 0 %d %d">'
            % (w, PANEL, w, PANEL))
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def _strokes(V: QuadratureVarifold, pan: _Panel, mask: np.ndarray, colour: str, dotted: bool) -> list[str]:
    if V.m == 1:
        return [pan.path(V.x[r], colour, dotted) for r in _runs(V, mask)]
    return [pan.path(V.x[i:i + 1], colour) for i in np.where(mask)[0]]


def render_scene(V: QuadratureVarifold, center=None, radius: Optional[float] = None) -> str:
    """One panel: the whole scene, solid inside the ball when one is given, dotted outside."""
    _planar(V)
    if center is None:
        lo, hi = V.x.min(axis=0), V.x.max(axis=0)
        c, half = (lo + hi) / 2, max(float(np.max(hi - lo)) / 2, 1e-12) * 1.1
    else:
        c = np.asarray(center, dtype=float)
        half = 1.1 * (radius if radius else float(np.max(np.linalg.norm(V.x - c, axis=1))))
    pan = _Panel(0.0, c, half)
    body = [pan.frame("scene")]
    if radius is None:
        body += _strokes(V, pan, np.ones(len(V), bool), PALETTE[0], False)
    else:
        inside = np.linalg.norm(V.x - c, axis=1) < radius
        body += _strokes(V, pan, ~inside, "#888", True)
        body += _strokes(V, pan, inside, PALETTE[0], False)
        body += [pan.circle(radius), pan.circle(radius / 2)]
    return _svg(1, body)


def render_ladder(ladder: PartitionLadder, V: Optional[QuadratureVarifold] = None,
                  levels: Optional[Sequence[int]] = None) -> str:
    """One panel per level, zoomed to ``r_k``: components in colour inside ``B(a, r_k)``, the rest dotted."""
    V = ladder.varifold if V is None else V
    _planar(V)
    levels = range(len(ladder.levels)) if levels is None else levels
    body = []
    a = ladder.center
    dist = np.linalg.norm(V.x - a, axis=1)
    pos = {int(i): j for j, i in enumerate(V.ids)}
    for p, k in enumerate(levels):
        rk = ladder.radius(k)
        pan = _Panel(p * (PANEL + GAP), a, 1.1 * rk)
        body.append(pan.frame("k=%d r=%.3g |Pi'|=%d" % (k, rk, ladder.prime_counts()[k])))
        window = dist <= 1.1 * rk * 1.5
        taken = np.zeros(len(V), bool)
        for j, comp in enumerate(ladder.levels[k]):
            mask = np.zeros(len(V), bool)
            mask[[pos[int(i)] for i in comp.atom_ids if int(i) in pos]] = True
            taken |= mask
            body += _strokes(V, pan, mask, PALETTE[j % len(PALETTE)], False)
        body += _strokes(V, pan, window & ~taken, "#888", True)
        body += [pan.circle(rk), pan.circle(rk / 2)]
    return _svg(len(levels), body)


def render_svg(obj: Union[PartitionLadder, QuadratureVarifold], **kw) -> str:
    if isinstance(obj, PartitionLadder):
        return render_ladder(obj, **kw)
    if isinstance(obj, QuadratureVarifold):
        return render_scene(obj, **kw)
    raise RenderError("cannot render %s" % type(obj).__name__)
