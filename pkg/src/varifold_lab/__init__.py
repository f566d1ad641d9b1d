"""Numerical laboratory for regularity statements about discrete curvature varifolds."""

from .constants import ConstantsTable, build_table
from .geometry import Plane, Region, closed_ball, line, line_at_angle, open_ball, plane_distance
from .monotonicity import check_monotonicity, density_ratio, tilt_integral
from .partition import holder_certificate, nested_partition, partition_at_scale
from .report import Report
from .varifold import QuadratureVarifold, SceneSpec, build_scene, lq_seminorm, mass, scene

__version__ = "0.1.0"

__all__ = [
    "ConstantsTable", "build_table", "Plane", "Region", "closed_ball", "line", "line_at_angle", "open_ball",
    "plane_distance", "check_monotonicity", "density_ratio", "tilt_integral", "holder_certificate",
    "nested_partition", "partition_at_scale", "Report", "QuadratureVarifold", "SceneSpec", "build_scene",
    "lq_seminorm", "mass", "scene", "__version__",
]
