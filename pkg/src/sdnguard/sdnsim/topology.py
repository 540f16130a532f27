"""Switch topology, host attachments and static shortest-path forwarding."""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field

import networkx as nx

from ..flowkit import int_to_mac, ip_to_int, mac_to_int

DEFAULT_CAPACITY = 55000
GATEWAY_PORT = 0


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class HostTuple:
    """<IP, MAC, SwitchID:port> identity of a host as the controller sees it."""
    ip: str
    mac: str
    attach: str

    def __post_init__(self):
        if not (self.ip and self.mac and self.attach):
            raise ValueError("HostTuple needs ip, mac and attach")

    def matches(self, other) -> int:
        """Number of equal fields among ip, mac and attach."""
        return (self.ip == other.ip) + (self.mac == other.mac) + (self.attach == other.attach)

    @property
    def switch(self):
        return self.attach.rsplit(":", 1)[0]


def host_mac(ip) -> str:
    """Locally administered MAC derived from an IPv4 address."""
    return int_to_mac((0x02 << 40) | ip_to_int(ip))


def attach_point(switch, port):
    return f"{switch}:{port}"


@dataclass
class Network:
    switches: list
    capacity: dict
    links: list
    hosts: list
    gateway: str
    graph: nx.Graph = field(repr=False, default=None)
    next_hop: dict = field(repr=False, default_factory=dict)
    by_ip: dict = field(repr=False, default_factory=dict)
    by_mac: dict = field(repr=False, default_factory=dict)

    @property
    def network_list(self):
        return list(self.hosts)

    def path(self, src_switch, dst_switch):
        """Switch sequence along the precomputed shortest path."""
        out = [src_switch]
        while out[-1] != dst_switch:
            out.append(self.next_hop[out[-1]][dst_switch])
        return out

    def attach_of_mac(self, mac):
        h = self.by_mac.get(mac)
        return h.attach if h is not None else None


@dataclass
class TopologySpec:
    switches: list
    links: list
    hosts: list  # (ip, mac, switch, port)
    gateway: str
    capacity: dict = field(default_factory=dict)


def build_topology(spec: TopologySpec) -> Network:
    """Validate a TopologySpec and precompute deterministic shortest-path next hops."""
    if not spec.switches:
        raise TopologyError("topology has no switches")
    if len(set(spec.switches)) != len(spec.switches):
        raise TopologyError("duplicate switch id")
    known = set(spec.switches)
    if spec.gateway not in known:
        raise TopologyError(f"gateway {spec.gateway!r} is not a switch")
    g = nx.Graph()
    g.add_nodes_from(spec.switches)
    for a, b in spec.links:
        if a not in known or b not in known:
            raise TopologyError(f"link {a}-{b} references an unknown switch")
        if a == b:
            raise TopologyError(f"self-link on {a}")
        g.add_edge(a, b)
    if not nx.is_connected(g):
        raise TopologyError("switch graph is disconnected")

    hosts, by_ip, by_mac, used = [], {}, {}, set()
    for ip, mac, switch, port in spec.hosts:
        ipaddress.IPv4Address(ip)
        mac = int_to_mac(mac_to_int(mac))
        if switch not in known:
            raise TopologyError(f"host {ip} attaches to unknown switch {switch!r}")
        if int(port) < 1:
            raise TopologyError(f"host {ip}: port must be >= 1 (0 is the gateway uplink)")
        if ip in by_ip:
            raise TopologyError(f"duplicate host IP {ip}")
        if mac in by_mac:
            raise TopologyError(f"duplicate host MAC {mac}")
        at = attach_point(switch, int(port))
        if at in used:
            raise TopologyError(f"two hosts attach at {at}")
        used.add(at)
        h = HostTuple(ip, mac, at)
        hosts.append(h)
        by_ip[ip] = h
        by_mac[mac] = h

    next_hop = {}
    order = {s: i for i, s in enumerate(spec.switches)}
    for s in spec.switches:
        # BFS in declaration order makes equal-length path choice deterministic
        parents = {s: None}
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for v in sorted(g.neighbors(u), key=order.get):
                    if v not in parents:
                        parents[v] = u
                        nxt.append(v)
            frontier = nxt
        # next hop from t towards s is t's BFS parent
        for t in spec.switches:
            if t != s:
                next_hop.setdefault(t, {})[s] = parents[t]
    for s in spec.switches:
        next_hop.setdefault(s, {})[s] = s
    capacity = {s: int(spec.capacity.get(s, DEFAULT_CAPACITY)) for s in spec.switches}
    return Network(list(spec.switches), capacity, list(spec.links), hosts, spec.gateway, g, next_hop, by_ip, by_mac)


def default_topology(host_ips, n_switches=4, capacity=DEFAULT_CAPACITY) -> TopologySpec:
    """Chain of switches S1..Sn with hosts attached round-robin; S1 is the gateway."""
    switches = [f"S{i + 1}" for i in range(n_switches)]
    links = [(switches[i], switches[i + 1]) for i in range(n_switches - 1)]
    next_port = {s: 1 for s in switches}
    hosts = []
    for i, ip in enumerate(host_ips):
        s = switches[i % n_switches]
        hosts.append((ip, host_mac(ip), s, next_port[s]))
        next_port[s] += 1
    return TopologySpec(switches, links, hosts, switches[0], {s: capacity for s in switches})


def read_topology(path) -> TopologySpec:
    """Parse the sectioned text format.

    [switches]   one id per line, optional ``capacity=N``
    [links]      ``A B`` per line
    [hosts ip mac switch:port]   ``ip mac switch:port`` per line
    [gateway]    one switch id
    Blank lines and ``#`` comments are ignored.
    """
    sections = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].split()[0].lower()
                if current not in ("switches", "links", "hosts", "gateway"):
                    raise TopologyError(f"{path}:{lineno}: unknown section [{current}]")
                sections.setdefault(current, [])
                continue
            if current is None:
                raise TopologyError(f"{path}:{lineno}: content before the first section")
            sections[current].append((lineno, line.split()))
    for name in ("switches", "hosts", "gateway"):
        if not sections.get(name):
            raise TopologyError(f"{path}: missing or empty [{name}] section")

    switches, capacity = [], {}
    for lineno, parts in sections["switches"]:
        switches.append(parts[0])
        for opt in parts[1:]:
            key, _, value = opt.partition("=")
            if key != "capacity" or not value.isdigit():
                raise TopologyError(f"{path}:{lineno}: bad switch option {opt!r}")
            capacity[parts[0]] = int(value)
    links = []
    for lineno, parts in sections.get("links", []):
        if len(parts) != 2:
            raise TopologyError(f"{path}:{lineno}: link needs two switch ids")
        links.append((parts[0], parts[1]))
    hosts = []
    for lineno, parts in sections["hosts"]:
        if len(parts) != 3 or ":" not in parts[2]:
            raise TopologyError(f"{path}:{lineno}: host line must be 'ip mac switch:port'")
        switch, _, port = parts[2].rpartition(":")
        try:
            hosts.append((parts[0], parts[1], switch, int(port)))
        except ValueError as exc:
            raise TopologyError(f"{path}:{lineno}: {exc}") from exc
    gateway = sections["gateway"][0][1][0]
    return TopologySpec(switches, links, hosts, gateway, capacity)


def write_topology(spec: TopologySpec, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("[switches]\n")
        for s in spec.switches:
            cap = spec.capacity.get(s)
            fh.write(f"{s}" + (f" capacity={cap}" if cap is not None else "") + "\n")
        fh.write("\n[links]\n")
        for a, b in spec.links:
            fh.write(f"{a} {b}\n")
        fh.write("\n[hosts ip mac switch:port]\n")
        for ip, mac, s, port in spec.hosts:
            fh.write(f"{ip} {mac} {s}:{port}\n")
        fh.write(f"\n[gateway]\n{spec.gateway}\n")
