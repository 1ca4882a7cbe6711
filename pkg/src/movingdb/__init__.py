"""In-memory spatial databases for moving objects, and a simulated
cluster that shards them over self-adapting zones."""

from .delaunay import Triangulation
from .dsd import Dsd, MovingObject
from .errors import (
    ConfigError, DuplicateId, DuplicatePosition, EmptyCluster, EmptyIndex, EmptyTable,
    EmptyZone, MovingDbError, OutOfBounds, UnknownId,
)
from .geom import Mbr, Point, Sign, in_circle, orient2d
from .rtree import RTree
from .zones import GridPartition

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Dsd", "DuplicateId", "DuplicatePosition", "EmptyCluster", "EmptyIndex",
    "EmptyTable", "EmptyZone", "GridPartition", "Mbr", "MovingDbError", "MovingObject",
    "OutOfBounds", "Point", "RTree", "Sign", "Triangulation", "UnknownId", "in_circle",
    "orient2d",
]
