"""Simulated shared-nothing cluster with self-adapting Voronoi zones."""

from .cluster import Cluster, ClusterSpec, server_name
from .dispatcher import Dispatcher, QueryResult
from .script import ScriptError, ScriptReport, parse_script, run_script, run_script_on_grid
from .server import ZoneServer
from .simnet import Message, SimNet

__all__ = [
    "Cluster", "ClusterSpec", "Dispatcher", "Message", "QueryResult", "ScriptError",
    "ScriptReport", "SimNet", "ZoneServer", "parse_script", "run_script",
    "run_script_on_grid", "server_name",
]
