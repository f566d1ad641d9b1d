"""``varifold-lab`` command line: build scenes, run checkers, write reports and figures.

Exit codes: 0 pass, 1 usage or IO error, 2 premise violated, 3 conclusion violated.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import approximation as ap
from . import counterexample as cx
from .constants import ConstantsError, build_table
from .geometry import GeometryError, closed_ball, plane_from_basis
from .monotonicity import check_monotonicity
from .partition import LadderPremiseError, PartitionError, holder_certificate, nested_partition
from .render import RenderError, render_svg
from .report import EXIT_CODES, Report, check, dumps, flag, series_csv
from .varifold import SceneError, SceneSpec, ZeroVarifoldError, build_scene, lq_seminorm, varifold_to_json

log = logging.getLogger("varifold_lab")

USAGE_ERROR = 1
COMMANDS = ("scene-build", "check-monotonicity", "partition-run", "holder-certify", "graph-extract",
            "detect-planes", "tangent-cone", "counterexample")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, "%s: error: %s\n" % (self.prog, message))


@dataclass
class RunConfig:
    command: str
    scene: Optional[Path] = None
    out: Path = Path(".")
    gamma: Optional[float] = None
    eps5: Optional[float] = None
    eps6: Optional[float] = None
    eps7: Optional[float] = None
    resolution: Optional[int] = None
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("gamma", "eps5", "eps6", "eps7"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise UsageError("--%s must be positive" % name)
        if self.resolution is not None and self.resolution < 8:
            raise UsageError("--resolution must be at least 8")

    def get(self, key, default=None):
        v = self.options.get(key)
        return default if v is None else v


def _vector(text: Optional[str], n: int, default=None) -> np.ndarray:
    if text is None:
        return np.zeros(n) if default is None else np.asarray(default, dtype=float)
    v = np.array([float(t) for t in text.split(",")])
    if v.shape != (n,):
        raise UsageError("expected %d comma-separated numbers, got %r" % (n, text))
    return v


def _plane(text: Optional[str], n: int, m: int):
    if text is None:
        return plane_from_basis(np.eye(n)[:m])
    rows = [[float(t) for t in part.split(",")] for part in text.split(";")]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise UsageError("--plane needs %d vectors of length %d separated by ';'" % (m, n))
    return plane_from_basis(np.array(rows))


def load_scene(cfg: RunConfig):
    if cfg.scene is None:
        raise UsageError("--scene is required for %s" % cfg.command)
    try:
        text = Path(cfg.scene).read_text()
    except OSError as e:
        raise UsageError("cannot read scene: %s" % e) from None
    spec = SceneSpec.from_json(text)
    if cfg.resolution is not None:
        spec = SceneSpec(spec.n, spec.m, [dict(p, resolution=cfg.resolution) for p in spec.primitives])
    return build_scene(spec)


def _table(cfg: RunConfig, V, Q: int, need_gamma: bool = False):
    q = cfg.get("q", 2.0 * V.m)
    gamma = cfg.gamma if cfg.gamma is not None else (1.0 if need_gamma else None)
    kw = {k: getattr(cfg, k) for k in ("eps5", "eps6", "eps7") if getattr(cfg, k) is not None}
    return build_table(V.m, V.n, q, Q, gamma, **kw), q


class Output:
    def __init__(self, out: Path):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def write(self, name: str, text: str):
        p = self.dir / name
        p.write_text(text)
        self.files.append(str(p))


def _svg(out: Output, cfg: RunConfig, obj, name: str, **kw):
    if cfg.get("no_svg"):
        return
    try:
        out.write(name, render_svg(obj, **kw))
    except RenderError as e:
        log.info("%s", e)


def cmd_scene_build(cfg, out):
    V = load_scene(cfg)
    out.write("varifold.json", json.dumps(varifold_to_json(V)))
    rep = Report("scene-build")
    rep.conclusions.append(check("trace identity |H - tr_S B|", V.atom_check(), "<=", 1e-8))
    rep.data = {"atoms": len(V), "mass": V.total_mass, "n": V.n, "m": V.m}
    _svg(out, cfg, V, "scene.svg")
    return rep, None


def cmd_check_monotonicity(cfg, out):
    V = load_scene(cfg)
    a = _vector(cfg.get("center"), V.n)
    q = cfg.get("q", 2.0 * V.m)
    rep = check_monotonicity(V, a, cfg.get("radius", 1.0), q, cfg.get("delta", 0.1),
                             count=cfg.get("grid", 20))
    rep.data.update({"residual": rep.residual, "equality_gap": rep.equality_gap})
    out.write("series.csv", rep.to_csv())
    _svg(out, cfg, V, "scene.svg", center=a, radius=cfg.get("radius", 1.0))
    return rep, None


def _ladder(cfg, V, table, q):
    a = _vector(cfg.get("center"), V.n)
    return nested_partition(V, a, cfg.get("radius", 1.0), cfg.get("f", "S"), cfg.get("lambda", 0.3),
                            cfg.get("depth", 6), table, cfg.get("Q", 1), q=q, count=cfg.get("grid", 20))


def _ladder_files(out, cfg, ladder):
    out.write("ladder.json", dumps(ladder.to_json()))
    ks = list(range(len(ladder.levels)))
    out.write("levels.csv", series_csv({"k": ks, "radius": [ladder.radius(k) for k in ks],
                                        "components": [len(l) for l in ladder.levels],
                                        "prime_count": ladder.prime_counts()}))
    _svg(out, cfg, ladder, "ladder.svg")


def cmd_partition_run(cfg, out):
    V = load_scene(cfg)
    table, q = _table(cfg, V, cfg.get("Q", 1), need_gamma=True)
    try:
        ladder = _ladder(cfg, V, table, q)
    except LadderPremiseError as e:
        e.report.data["aborted_level"] = e.level
        return e.report, table
    _ladder_files(out, cfg, ladder)
    return ladder.report, table


def cmd_holder_certify(cfg, out):
    V = load_scene(cfg)
    table, q = _table(cfg, V, cfg.get("Q", 1), need_gamma=True)
    try:
        ladder = _ladder(cfg, V, table, q)
    except LadderPremiseError as e:
        e.report.data["aborted_level"] = e.level
        return e.report, table
    _ladder_files(out, cfg, ladder)
    sigma = cfg.get("sigma")
    if sigma is None:
        r = ladder.r
        sigma = r ** (1 - V.m / q) * lq_seminorm(V, closed_ball(ladder.center, r), "B", q)
        sigma = max(sigma, 1e-300)
    rep = holder_certificate(ladder, sigma, table, q=q, V=V)
    rep.data["sigma"] = sigma
    return rep, table


def cmd_graph_extract(cfg, out):
    V = load_scene(cfg)
    a = _vector(cfg.get("center"), V.n)
    P = _plane(cfg.get("plane"), V.n, V.m)
    table, _ = _table(cfg, V, cfg.get("Q", 1))
    try:
        g = ap.extract_graph(V, P, a, cfg.get("s", 0.5), cfg.get("lip", 1.0), cfg.get("cells", 20), table=table,
                             Q=cfg.get("Q"))
    except ap.GraphError as e:
        rep = Report("graph-extract")
        rep.conclusions.append(flag("graph extraction", False, str(e)))
        return rep, table
    out.write("graph.json", dumps(g.to_json()))
    return g.report, table


def cmd_detect_planes(cfg, out):
    V = load_scene(cfg)
    a = _vector(cfg.get("center"), V.n)
    d = ap.detect_planes(V, a, cfg.get("radius", 1.0))
    out.write("planes.json", dumps(d.to_json()))
    rep = Report("detect-planes")
    rep.conclusions += [check("integer multiplicities", len(d.flags), "==", 0,
                              detail="; ".join(f["flag"] for f in d.flags)),
                        check("residual mass", abs(d.residual_mass), "<=", 1e-9 * max(1.0, V.total_mass))]
    rep.data = {"N": d.N, "multiplicities": d.multiplicities, "residual_mass": d.residual_mass}
    return rep, None


def cmd_tangent_cone(cfg, out):
    V = load_scene(cfg)
    a = _vector(cfg.get("center"), V.n)
    P = _plane(cfg.get("plane"), V.n, V.m)
    q = cfg.get("q", 2.0 * V.m)
    rep = ap.check_tangent_cone_decay(V, a, cfg.get("radius", 1.0), P, cfg.get("C", 1.0), q,
                                      count=cfg.get("grid", 20))
    out.write("decay.csv", series_csv({"t": rep.data["grid"], "first_variation": rep.data["first_variation"],
                                       "bound": rep.data["first_variation_bound"],
                                       "blowup_distance": rep.data["blowup_distance"],
                                       "density": rep.data["density"]}))
    return rep, None


def cmd_counterexample(cfg, out):
    f = cx.Monotone.parse({"id": cfg.get("f", "id"), "alpha": cfg.get("f_alpha", 1.0)})
    g = cx.Monotone.parse({"id": cfg.get("g", "id"), "alpha": cfg.get("g_alpha", 1.0)})
    seq = cx.generate_sequence(cfg.get("eps", 0.5), f, g, cfg.get("depth", 50))
    rep = cx.verify_properties(seq)
    fan = cx.build_line_fan(seq, min(seq.depth, cfg.get("fan_depth", 5)))
    diag = cx.fan_density(fan)
    rep.conclusions.append(check("line-fan density equals line count", diag["density"], "==", diag["lines"],
                                 tol=1e-9))
    rep.data["line_fan"] = diag
    out.write("sequence.json", dumps(seq.to_json()))
    out.write("triples.csv", series_csv({"i": list(range(1, seq.depth + 1)), "R": [float(v) for v in seq.R],
                                         "P": [float(v) for v in seq.P], "rho": [float(v) for v in seq.rho]}))
    _svg(out, cfg, fan, "line_fan.svg")
    return rep, None


HANDLERS = {
    "scene-build": cmd_scene_build,
    "check-monotonicity": cmd_check_monotonicity,
    "partition-run": cmd_partition_run,
    "holder-certify": cmd_holder_certify,
    "graph-extract": cmd_graph_extract,
    "detect-planes": cmd_detect_planes,
    "tangent-cone": cmd_tangent_cone,
    "counterexample": cmd_counterexample,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="varifold-lab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--scene", type=Path)
        s.add_argument("--out", type=Path, default=Path("."))
        s.add_argument("--gamma", type=float)
        s.add_argument("--eps5", type=float)
        s.add_argument("--eps6", type=float)
        s.add_argument("--eps7", type=float)
        s.add_argument("--lambda", dest="lambda", type=float)
        s.add_argument("--depth", type=int)
        s.add_argument("--q", type=float)
        s.add_argument("--resolution", type=int)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--center", help="comma-separated point a")
        s.add_argument("--radius", type=float)
        s.add_argument("--Q", type=int)
        s.add_argument("--grid", type=int, help="radius grid size")
        s.add_argument("--no-svg", dest="no_svg", action="store_true")
        if name == "check-monotonicity":
            s.add_argument("--delta", type=float)
        if name in ("partition-run", "holder-certify"):
            s.add_argument("--f", default="S", choices=("S", "fval"))
        if name == "holder-certify":
            s.add_argument("--sigma", type=float)
        if name in ("graph-extract", "tangent-cone"):
            s.add_argument("--plane", help="basis vectors, e.g. '1,0' or '1,0,0;0,1,0'")
        if name == "graph-extract":
            s.add_argument("--s", type=float)
            s.add_argument("--lip", type=float)
            s.add_argument("--cells", type=int)
        if name == "tangent-cone":
            s.add_argument("--C", type=float)
        if name == "counterexample":
            s.add_argument("--f", default="id", choices=("id", "power", "log"))
            s.add_argument("--g", default="id", choices=("id", "power", "log"))
            s.add_argument("--f-alpha", dest="f_alpha", type=float)
            s.add_argument("--g-alpha", dest="g_alpha", type=float)
            s.add_argument("--eps", type=float)
            s.add_argument("--fan-depth", dest="fan_depth", type=int)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    common = {"command", "scene", "out", "gamma", "eps5", "eps6", "eps7", "resolution", "seed", "verbose"}
    opts = {k: v for k, v in vars(ns).items() if k not in common}
    return RunConfig(ns.command, ns.scene, ns.out, ns.gamma, ns.eps5, ns.eps6, ns.eps7, ns.resolution, ns.seed,
                     opts)


def run(cfg: RunConfig) -> int:
    out = Output(cfg.out)
    rep, table = HANDLERS[cfg.command](cfg, out)
    consts = table.to_json() if table is not None else None
    out.write("report.json", dumps(rep.to_json(consts)))
    status = rep.status
    print("%s: %s" % (cfg.command, status))
    for c in rep.failures():
        print("  %s %s: %s %s %s %s" % ("premise" if c in rep.premises else "conclusion", c.name, c.value,
                                        c.relation, c.bound, c.detail))
    return EXIT_CODES[status]


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(ns)
        return run(cfg)
    except SceneError as e:
        print("scene error: %s" % e, file=sys.stderr)
    except (UsageError, OSError, ConstantsError, GeometryError, ZeroVarifoldError, PartitionError,
            cx.SequenceError, ap.NullCurvatureError, RenderError, ValueError) as e:
        print("error: %s" % e, file=sys.stderr)
    return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
