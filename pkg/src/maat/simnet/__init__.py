from .clock import LogicalClock, WallClock
from .state import MulticastAllocator, NetworkState, PoolExhausted, Snapshot, allocate_multicast
from .topology import Candidate, Topology, load_topology, match_candidates, path_rtt

__all__ = [
    "Candidate", "LogicalClock", "MulticastAllocator", "NetworkState", "PoolExhausted",
    "Snapshot", "Topology", "WallClock", "allocate_multicast", "load_topology",
    "match_candidates", "path_rtt",
]
