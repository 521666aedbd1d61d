"""Static simulated topology: subnets, nodes, services and weighted links."""
from __future__ import annotations

import heapq
import ipaddress
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Union

import jsonschema

from ..intent_lang import Cidr, Quantity, Text, TypedValue, parse_value, render_value

AttrValue = Union[TypedValue, frozenset]


class TopologyError(ValueError):
    pass


class SchemaError(TopologyError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class InvariantViolation(TopologyError):
    pass


class Unreachable(TopologyError):
    pass


class UnknownNode(TopologyError, KeyError):
    pass


# --------------------------------------------------------------------------
# Attribute values

def attr_from_json(doc: Any) -> AttrValue:
    if isinstance(doc, bool):
        return Text("true" if doc else "false")
    if isinstance(doc, (int, float)):
        return Quantity(doc)
    if isinstance(doc, str):
        return parse_value(doc)
    if isinstance(doc, list):
        return frozenset(attr_from_json(v) for v in doc)
    raise TypeError(f"unsupported attribute value {doc!r}")


def attr_to_json(value: AttrValue) -> Any:
    if isinstance(value, frozenset):
        return sorted((attr_to_json(v) for v in value), key=lambda v: (isinstance(v, str), str(v)))
    if isinstance(value, Quantity) and not value.unit:
        return value.number
    return render_value(value)


def attrs_from_json(doc: Mapping[str, Any]) -> dict[str, AttrValue]:
    return {k: attr_from_json(v) for k, v in doc.items()}


def attrs_to_json(attrs: Mapping[str, AttrValue]) -> dict[str, Any]:
    return {k: attr_to_json(attrs[k]) for k in sorted(attrs)}


# --------------------------------------------------------------------------
# Types

@dataclass(frozen=True)
class ServiceInstance:
    name: str
    attrs: Mapping[str, AttrValue] = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            raise InvariantViolation("service name must be non-empty")


@dataclass(frozen=True)
class Node:
    node_id: str
    address: str
    subnet_id: str
    asn: int = 0
    services: tuple[ServiceInstance, ...] = ()
    attributes: Mapping[str, AttrValue] = field(default_factory=dict)

    def service(self, name: str) -> ServiceInstance | None:
        for s in self.services:
            if s.name == name:
                return s
        return None


@dataclass(frozen=True)
class Subnet:
    subnet_id: str
    cidr: str
    parent: str | None = None

    @property
    def network(self):
        return ipaddress.ip_network(self.cidr, strict=False)


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    rtt_ms: float


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...] = ()
    subnets: tuple[Subnet, ...] = ()
    links: tuple[Link, ...] = ()
    seed: int = 0

    def __post_init__(self):
        for name in ("nodes", "subnets", "links"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        _check_invariants(self)

    @cached_property
    def node_map(self) -> dict[str, Node]:
        return {n.node_id: n for n in self.nodes}

    @cached_property
    def subnet_map(self) -> dict[str, Subnet]:
        return {s.subnet_id: s for s in self.subnets}

    @cached_property
    def _adjacency(self) -> dict[str, list[tuple[str, float]]]:
        adj: dict[str, list[tuple[str, float]]] = {n.node_id: [] for n in self.nodes}
        for link in self.links:
            adj[link.a].append((link.b, link.rtt_ms))
            adj[link.b].append((link.a, link.rtt_ms))
        return adj

    @cached_property
    def _distance_cache(self) -> dict[str, dict[str, float]]:
        return {}

    def node(self, node_id: str) -> Node:
        try:
            return self.node_map[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def distances_from(self, source: str) -> dict[str, float]:
        """Minimum-rtt distance (ms) from ``source`` to every reachable node."""
        self.node(source)
        cached = self._distance_cache.get(source)
        if cached is not None:
            return cached
        dist = {source: 0.0}
        heap = [(0.0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for v, w in self._adjacency[u]:
                nd = d + w
                if nd < dist.get(v, float("inf")):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        self._distance_cache[source] = dist
        return dist

    def subtree(self, subnet_id: str) -> frozenset[str]:
        """Ids of ``subnet_id`` and every subnet below it."""
        if subnet_id not in self.subnet_map:
            raise TopologyError(f"unknown subnet {subnet_id!r}")
        children: dict[str, list[str]] = {}
        for s in self.subnets:
            if s.parent is not None:
                children.setdefault(s.parent, []).append(s.subnet_id)
        out, stack = set(), [subnet_id]
        while stack:
            sid = stack.pop()
            out.add(sid)
            stack.extend(children.get(sid, ()))
        return frozenset(out)

    def ancestors(self, subnet_id: str) -> list[str]:
        """``subnet_id`` followed by its parents up to the root."""
        chain = []
        sid: str | None = subnet_id
        while sid is not None:
            chain.append(sid)
            sid = self.subnet_map[sid].parent
        return chain

    def with_node(self, node: Node) -> Topology:
        nodes = tuple(node if n.node_id == node.node_id else n for n in self.nodes)
        return replace(self, nodes=nodes)


def _check_invariants(topo: Topology) -> None:
    subnets: dict[str, Subnet] = {}
    for s in topo.subnets:
        if s.subnet_id in subnets:
            raise InvariantViolation(f"duplicate subnet id {s.subnet_id!r}")
        try:
            s.network
        except ValueError as exc:
            raise InvariantViolation(f"subnet {s.subnet_id!r}: {exc}") from None
        subnets[s.subnet_id] = s
    roots = [s for s in topo.subnets if s.parent is None]
    if topo.subnets and len(roots) != 1:
        raise InvariantViolation(f"subnet graph must have exactly one root, found {len(roots)}")
    for s in topo.subnets:
        seen = {s.subnet_id}
        p = s.parent
        while p is not None:
            if p not in subnets:
                raise InvariantViolation(f"subnet {s.subnet_id!r} has unknown parent {p!r}")
            if p in seen:
                raise InvariantViolation(f"subnet cycle through {p!r}")
            seen.add(p)
            p = subnets[p].parent
    ids = set()
    for n in topo.nodes:
        if n.node_id in ids:
            raise InvariantViolation(f"duplicate node id {n.node_id!r}")
        ids.add(n.node_id)
        if n.subnet_id not in subnets:
            raise InvariantViolation(f"node {n.node_id!r} in unknown subnet {n.subnet_id!r}")
        try:
            addr = ipaddress.ip_address(n.address)
        except ValueError as exc:
            raise InvariantViolation(f"node {n.node_id!r}: {exc}") from None
        if addr not in subnets[n.subnet_id].network:
            raise InvariantViolation(f"node {n.node_id!r} address {n.address} outside {subnets[n.subnet_id].cidr}")
        names = [s.name for s in n.services]
        if len(names) != len(set(names)):
            raise InvariantViolation(f"node {n.node_id!r} lists a service twice")
    for link in topo.links:
        if link.a not in ids or link.b not in ids:
            raise InvariantViolation(f"link {link.a}-{link.b} references a missing node")
        if not link.rtt_ms > 0:
            raise InvariantViolation(f"link {link.a}-{link.b} rtt must be positive")


# --------------------------------------------------------------------------
# Loading

_ATTRS = {"type": "object"}
TOPOLOGY_SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "seed": {"type": "integer"},
        "subnets": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "cidr"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "cidr": {"type": "string"},
                    "parent": {"type": ["string", "null"]},
                },
            },
        },
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "address", "subnet"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "address": {"type": "string"},
                    "subnet": {"type": "string"},
                    "asn": {"type": "integer", "minimum": 0},
                    "attrs": _ATTRS,
                    "services": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name"],
                            "properties": {"name": {"type": "string"}, "attrs": _ATTRS},
                        },
                    },
                },
            },
        },
        "links": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b", "rtt_ms"],
                "properties": {
                    "a": {"type": "string"},
                    "b": {"type": "string"},
                    "rtt_ms": {"type": "number"},
                },
            },
        },
    },
}


def load_topology(doc: Mapping[str, Any] | str | Path) -> Topology:
    """Validate a topology document (or a path to one) and build a Topology."""
    if isinstance(doc, (str, Path)):
        doc = json.loads(Path(doc).read_text())
    try:
        jsonschema.validate(doc, TOPOLOGY_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in exc.absolute_path)
        raise SchemaError(path, exc.message) from None
    try:
        nodes = tuple(
            Node(
                n["id"], n["address"], n["subnet"], n.get("asn", 0),
                tuple(ServiceInstance(s["name"], attrs_from_json(s.get("attrs", {})))
                      for s in n.get("services", [])),
                attrs_from_json(n.get("attrs", {})),
            )
            for n in doc.get("nodes", [])
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, TopologyError):
            raise
        raise SchemaError("$.nodes", str(exc)) from None
    return Topology(
        nodes,
        tuple(Subnet(s["id"], s["cidr"], s.get("parent")) for s in doc.get("subnets", [])),
        tuple(Link(l["a"], l["b"], float(l["rtt_ms"])) for l in doc.get("links", [])),
        doc.get("seed", 0),
    )


def topology_to_json(topo: Topology) -> dict[str, Any]:
    return {
        "seed": topo.seed,
        "subnets": [{"id": s.subnet_id, "cidr": s.cidr, "parent": s.parent} for s in topo.subnets],
        "nodes": [
            {
                "id": n.node_id, "address": n.address, "subnet": n.subnet_id, "asn": n.asn,
                "attrs": attrs_to_json(n.attributes),
                "services": [{"name": s.name, "attrs": attrs_to_json(s.attrs)} for s in n.services],
            }
            for n in topo.nodes
        ],
        "links": [{"a": l.a, "b": l.b, "rtt_ms": l.rtt_ms} for l in topo.links],
    }


# --------------------------------------------------------------------------
# Queries

def path_rtt(topo: Topology, a: str, b: str) -> float:
    """Latency in ms of the minimum-rtt path between two nodes."""
    topo.node(b)
    dist = topo.distances_from(a)
    if b not in dist:
        raise Unreachable(f"no path from {a!r} to {b!r}")
    return dist[b]


@dataclass(frozen=True)
class Candidate:
    node_id: str
    service_name: str
    attributes: Mapping[str, AttrValue] = field(default_factory=dict, compare=False)


def materialize(topo: Topology, node_id: str, requester: str, service_name: str = "") -> Candidate:
    """Candidate view of a node as seen from ``requester``.

    Service attributes override node attributes; computed ones (rtt, asn, net,
    node, service) override both. Unreachable nodes get no rtt attribute.
    """
    node = topo.node(node_id)
    attrs: dict[str, AttrValue] = dict(node.attributes)
    svc = node.service(service_name) if service_name else None
    if svc is not None:
        attrs.update(svc.attrs)
    subnet = topo.subnet_map[node.subnet_id]
    dist = topo.distances_from(requester)
    if node_id in dist:
        attrs["rtt"] = Quantity(dist[node_id], "ms")
    attrs["asn"] = Quantity(node.asn)
    attrs["net"] = Cidr(str(subnet.network.network_address), subnet.network.prefixlen)
    attrs["node"] = parse_value(node_id)
    if service_name:
        attrs["service"] = parse_value(service_name)
    return Candidate(node_id, service_name, attrs)


def match_candidates(topo: Topology, service_name: str, requester: str,
                     visible: frozenset[str] | None = None) -> list[Candidate]:
    """Every node hosting ``service_name``, ordered by node id. No filtering."""
    topo.node(requester)
    return [
        materialize(topo, n.node_id, requester, service_name)
        for n in sorted(topo.nodes, key=lambda n: n.node_id)
        if n.service(service_name) is not None and (visible is None or n.node_id in visible)
    ]
