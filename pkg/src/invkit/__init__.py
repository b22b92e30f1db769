"""Strong invariance, monotonicity and Euler viability tools for product-form inclusions."""

__version__ = "0.1.0"

from .expr import ScalarField
from .geometry import (Box, ConeSpec, PolyhedralCone, Polyhedron, Singleton, SmoothSublevel,
                       ccone_contains, cone_contains, polar)
from .inclusion import ControlSet, DisturbanceMap, FeedbackRealization, ProductInclusion
from .intervals import IntervalUnion
from .verdict import FAIL, INCONCLUSIVE, PASS, Verdict

__all__ = [
    "ScalarField", "IntervalUnion", "ConeSpec", "Box", "Polyhedron", "PolyhedralCone",
    "Singleton", "SmoothSublevel", "ccone_contains", "cone_contains", "polar",
    "ControlSet", "DisturbanceMap", "FeedbackRealization", "ProductInclusion",
    "Verdict", "PASS", "FAIL", "INCONCLUSIVE", "__version__",
]
