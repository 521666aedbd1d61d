"""Mutable network state behind immutable per-mediation snapshots."""
from __future__ import annotations

import ipaddress
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from ..content_ref import canonical
from ..intent_lang import parse_value, render_value
from .topology import (
    AttrValue,
    Candidate,
    ServiceInstance,
    Topology,
    load_topology,
    match_candidates,
    materialize,
    topology_to_json,
)

DEFAULT_POOL = "239.0.0.0/8"
CONTENT_ATTR = "content"


class PoolExhausted(RuntimeError):
    pass


class EmptyMembership(ValueError):
    pass


class StateUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class MulticastGroup:
    address: str
    ttl: int
    members: tuple[str, ...]


class MulticastAllocator:
    """Lowest-free allocation of group addresses. Groups are never released."""

    def __init__(self, pool: str = DEFAULT_POOL, groups: Iterable[MulticastGroup] = ()):
        self.pool = ipaddress.ip_network(pool)
        self.groups: dict[str, MulticastGroup] = {g.address: g for g in groups}

    def peek(self, taken: Iterable[str] = ()) -> str:
        """Address the next allocation would return."""
        used = set(self.groups) | set(taken)
        return lowest_free(self.pool, used)

    def allocate(self, ttl: int, members: Iterable[str], address: str | None = None) -> str:
        members = tuple(sorted(set(members)))
        if not members:
            raise EmptyMembership("a multicast group needs at least one member")
        if not 1 <= ttl <= 255:
            raise ValueError(f"ttl {ttl} outside 1..255")
        if address is None or address in self.groups:
            address = self.peek()
        elif ipaddress.ip_address(address) not in self.pool:
            raise ValueError(f"{address} outside pool {self.pool}")
        self.groups[address] = MulticastGroup(address, ttl, members)
        return address


def lowest_free(pool, used: set[str]) -> str:
    # skip the network address itself
    first = int(pool.network_address) + 1
    last = int(pool.broadcast_address) - 1 if pool.num_addresses > 2 else int(pool.broadcast_address)
    cls = type(pool.network_address)
    n = first
    while n <= last:
        addr = str(cls(n))
        if addr not in used:
            return addr
        n += 1
    raise PoolExhausted(f"no free address in {pool}")


def allocate_multicast(alloc: MulticastAllocator, ttl: int, members: Iterable[str]) -> str:
    return alloc.allocate(ttl, members)


@dataclass(frozen=True)
class Snapshot:
    """Immutable view of the network for one mediation.

    ``visible`` restricts which nodes may be offered as candidates; latency is
    still measured over the whole topology.
    """

    topology: Topology
    visible: frozenset[str] | None = None
    pool: str = DEFAULT_POOL
    allocated: frozenset[str] = frozenset()
    announcements: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def has_node(self, node_id: str) -> bool:
        return node_id in self.topology.node_map

    def can_see(self, node_id: str) -> bool:
        return self.has_node(node_id) and (self.visible is None or node_id in self.visible)

    def candidates(self, service_name: str, requester: str) -> list[Candidate]:
        return match_candidates(self.topology, service_name, requester, self.visible)

    def candidate(self, node_id: str, requester: str, service_name: str = "") -> Candidate:
        return materialize(self.topology, node_id, requester, service_name)

    def content_holders(self, content: str, requester: str) -> list[Candidate]:
        """Visible nodes storing ``content`` or having announced it."""
        key = canonical(content)
        holders = set(self.announcements.get(key, ()))
        for node in self.topology.nodes:
            stored = node.attributes.get(CONTENT_ATTR)
            if isinstance(stored, frozenset) and any(_text(v) == key for v in stored):
                holders.add(node.node_id)
        return [
            materialize(self.topology, nid, requester)
            for nid in sorted(holders)
            if self.can_see(nid)
        ]

    def next_group(self) -> str:
        return lowest_free(ipaddress.ip_network(self.pool), set(self.allocated))


def _text(v) -> str:
    return canonical(render_value(v))


class NetworkState:
    """The single writable copy of simulated network state.

    Writers take ``lock``; readers work on snapshots. If ``path`` is set the
    state is saved after every change.
    """

    def __init__(self, topology: Topology, *, pool: str = DEFAULT_POOL,
                 groups: Iterable[MulticastGroup] = (),
                 announcements: Mapping[str, Iterable[str]] | None = None,
                 rules: Iterable[dict[str, Any]] = (), path: str | Path | None = None):
        self.topology = topology
        self.allocator = MulticastAllocator(pool, groups)
        self.announcements: dict[str, tuple[str, ...]] = {
            k: tuple(v) for k, v in (announcements or {}).items()
        }
        self.rules: list[dict[str, Any]] = list(rules)
        self.path = Path(path) if path else None
        self.lock = threading.RLock()

    # -- snapshots -------------------------------------------------------
    def snapshot(self, scope_subnet: str | None = None) -> Snapshot:
        with self.lock:
            topo = self.topology
            visible = None
            if scope_subnet is not None:
                subnets = topo.subtree(scope_subnet)
                visible = frozenset(n.node_id for n in topo.nodes if n.subnet_id in subnets)
            return Snapshot(
                topo, visible, str(self.allocator.pool), frozenset(self.allocator.groups),
                dict(self.announcements),
            )

    # -- writers ---------------------------------------------------------
    def advertize(self, node_id: str, service: str, attrs: Mapping[str, AttrValue]) -> ServiceInstance:
        """Insert or refresh ``service`` on ``node_id``; new attrs win over old."""
        with self.lock:
            node = self.topology.node(node_id)
            old = node.service(service)
            merged = dict(old.attrs) if old else {}
            merged.update(attrs)
            inst = ServiceInstance(service, merged)
            if old:
                services = tuple(inst if s.name == service else s for s in node.services)
            else:
                services = node.services + (inst,)
            self.topology = self.topology.with_node(replace(node, services=services))
            self._persist()
            return inst

    def place_content(self, node_id: str, content: str) -> None:
        with self.lock:
            node = self.topology.node(node_id)
            stored = node.attributes.get(CONTENT_ATTR)
            items = set(stored) if isinstance(stored, frozenset) else set()
            items.add(parse_value(canonical(content)))
            attrs = dict(node.attributes)
            attrs[CONTENT_ATTR] = frozenset(items)
            self.topology = self.topology.with_node(replace(node, attributes=attrs))
            self._persist()

    def announce(self, content: str, node_id: str) -> None:
        with self.lock:
            self.topology.node(node_id)
            key = canonical(content)
            holders = set(self.announcements.get(key, ()))
            holders.add(node_id)
            self.announcements[key] = tuple(sorted(holders))
            self._persist()

    def allocate_group(self, ttl: int, members: Iterable[str], address: str | None = None) -> str:
        with self.lock:
            addr = self.allocator.allocate(ttl, members, address)
            self._persist()
            return addr

    def install_rule(self, rule: dict[str, Any]) -> None:
        with self.lock:
            if rule not in self.rules:
                self.rules.append(rule)
            self._persist()

    # -- persistence -----------------------------------------------------
    def to_json(self) -> dict[str, Any]:
        with self.lock:
            return {
                "topology": topology_to_json(self.topology),
                "pool": str(self.allocator.pool),
                "groups": [
                    {"address": g.address, "ttl": g.ttl, "members": list(g.members)}
                    for g in sorted(self.allocator.groups.values(),
                                    key=lambda g: ipaddress.ip_address(g.address))
                ],
                "announcements": {k: list(v) for k, v in sorted(self.announcements.items())},
                "rules": list(self.rules),
            }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any], path: str | Path | None = None) -> NetworkState:
        return cls(
            load_topology(doc["topology"]),
            pool=doc.get("pool", DEFAULT_POOL),
            groups=[MulticastGroup(g["address"], g["ttl"], tuple(g["members"])) for g in doc.get("groups", [])],
            announcements=doc.get("announcements", {}),
            rules=doc.get("rules", []),
            path=path,
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        data = json.dumps(self.to_json(), indent=2, sort_keys=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> NetworkState:
        """Open a state file; it stays attached and is rewritten on change."""
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise StateUnavailable(f"cannot read state file {path}: {exc}") from None
        return cls.from_json(doc, path=path)

    def _persist(self) -> None:
        if self.path is not None:
            self.save(self.path)
