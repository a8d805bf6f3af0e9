"""Area- and volume-preserving mean curvature flow of radial graphs in
Euclidean space, the space forms and (perturbed) Schwarzschild space."""

from .ambient import AmbientMetric, Kind
from .flow import FlowConfig, GlobalTerm, Termination, run
from .grid import GridSpec, make_grid
from .surface import RadialGraph, snapshot

__all__ = ["AmbientMetric", "Kind", "FlowConfig", "GlobalTerm", "Termination", "run",
           "GridSpec", "make_grid", "RadialGraph", "snapshot"]
__version__ = "0.1.0"
