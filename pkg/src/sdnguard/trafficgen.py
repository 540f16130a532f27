"""Seeded benign and attack traffic with per-source ground truth.

Attack variants differ in rate band and on/off pattern:

    variant       rate (pkt/s)   sleep (s)
    SlowDDoS      5-100          -
    FastDDoS      1000-20000     -
    SlowDcDDoS    5-50           3-7
    FastDcDDoS    1000-20000     3-10

Discontinuous variants alternate bursts (default 2-5 s) with sleeps.
"""
from __future__ import annotations

import configparser
import csv
import ipaddress
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import substream
from .flowkit import Label, PacketTable, Protocol, ip_to_int, mac_to_int
from .sdnsim.topology import HostTuple, host_mac

VARIANTS = ("SlowDDoS", "FastDDoS", "SlowDcDDoS", "FastDcDDoS", "PortScan", "Benign", "Hybrid")
ATTACK_VARIANTS = ("SlowDDoS", "FastDDoS", "SlowDcDDoS", "FastDcDDoS", "PortScan")

EPHEMERAL_PORTS = (32768, 60999)
ATTACK_PORTS = (1024, 65535)
SERVICE_PORTS = (80, 443, 22, 8080, 25, 53)
DEFAULT_SUBNET = "10.0.0.0/16"


class ScenarioError(ValueError):
    pass


def _range(value, name):
    if value is None:
        return None
    lo, hi = (float(v) for v in value)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo <= 0 or hi < lo:
        raise ValueError(f"{name} must be a non-empty positive interval, got {value!r}")
    return (lo, hi)


VARIANT_DEFAULTS = {
    "SlowDDoS": dict(rate_range=(5.0, 100.0), sleep_range=None),
    "FastDDoS": dict(rate_range=(1000.0, 20000.0), sleep_range=None),
    "SlowDcDDoS": dict(rate_range=(5.0, 50.0), sleep_range=(3.0, 7.0)),
    "FastDcDDoS": dict(rate_range=(1000.0, 20000.0), sleep_range=(3.0, 10.0)),
    "PortScan": dict(rate_range=(50.0, 500.0), sleep_range=None),
}


@dataclass(frozen=True)
class VariantSpec:
    """One attacker's behaviour.

    Continuous variants move to a fresh source port every
    ``port_hop_interval`` seconds; discontinuous ones every
    ``bursts_per_port`` bursts, so each port spans at least one sleep.
    """
    variant: str
    rate_range: tuple = None
    sleep_range: tuple = None
    burst_range: tuple = (2.0, 5.0)
    duration: float = 60.0
    target: HostTuple = None
    seed: int = 0
    source: HostTuple = None
    start: float = 0.0
    target_port: int = 80
    port_hop_interval: float = 10.0
    bursts_per_port: int = 2
    pacing: str = "poisson"
    payload_range: tuple = (0, 64)
    scan_ports: tuple = (1, 1024)
    forge_dst_mac: bool = True
    components: tuple = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        defaults = VARIANT_DEFAULTS.get(self.variant, {})
        if self.rate_range is None and "rate_range" in defaults:
            object.__setattr__(self, "rate_range", defaults["rate_range"])
        if self.sleep_range is None and defaults.get("sleep_range"):
            object.__setattr__(self, "sleep_range", defaults["sleep_range"])
        object.__setattr__(self, "rate_range", _range(self.rate_range, "rate_range"))
        object.__setattr__(self, "sleep_range", _range(self.sleep_range, "sleep_range"))
        object.__setattr__(self, "burst_range", _range(self.burst_range, "burst_range"))
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if self.pacing not in ("poisson", "fixed"):
            raise ValueError("pacing must be 'poisson' or 'fixed'")
        if self.port_hop_interval <= 0 or self.bursts_per_port < 1:
            raise ValueError("port_hop_interval must be > 0 and bursts_per_port >= 1")
        lo, hi = self.scan_ports
        if not 0 <= lo <= hi <= 65535:
            raise ValueError(f"scan_ports must be an interval within 0..65535, got {self.scan_ports!r}")
        if self.variant == "Hybrid" and len(self.components) < 2:
            raise ValueError("Hybrid needs at least two component specs")

    @property
    def label(self):
        return Label[self.variant] if self.variant not in ("Hybrid",) else None

    @property
    def discontinuous(self):
        return self.sleep_range is not None


def _burst_times(rng, t0, t1, rate, pacing):
    """Packet times in [t0, t1) at ``rate``; the first packet is sent at t0."""
    span = t1 - t0
    if span <= 0:
        return np.zeros(0)
    if pacing == "fixed":
        return t0 + np.arange(0.0, span, 1.0 / rate)
    expected = rate * span
    chunk = int(expected + 6.0 * math.sqrt(expected) + 16)
    pieces, last = [np.zeros(1)], 0.0
    while last < span:
        gaps = rng.exponential(1.0 / rate, size=chunk)
        steps = last + np.cumsum(gaps)
        pieces.append(steps)
        last = steps[-1]
    times = np.concatenate(pieces)
    return t0 + times[times < span]


def _schedule(spec, rng):
    """List of (burst_start, burst_end, rate) covering [start, start + duration)."""
    end = spec.start + spec.duration
    bursts = []
    if not spec.discontinuous:
        bursts.append((spec.start, end, rng.uniform(*spec.rate_range)))
        return bursts
    t = spec.start
    while t < end:
        length = rng.uniform(*spec.burst_range)
        rate = rng.uniform(*spec.rate_range)
        bursts.append((t, min(t + length, end), rate))
        t += length + rng.uniform(*spec.sleep_range)
    return bursts


def _source(spec):
    if spec.source is None:
        raise ValueError("attack spec needs a source host")
    if spec.target is None:
        raise ValueError("attack spec needs a target host")
    return spec.source


def gen_attack(spec: VariantSpec) -> PacketTable:
    """Packets of one attacker, time-sorted, labelled with the variant."""
    if spec.variant == "Hybrid":
        return _gen_hybrid(spec)
    if spec.variant == "Benign":
        raise ValueError("use gen_benign for benign traffic")
    src = _source(spec)
    rng = substream(spec.seed, f"attack/{src.ip}/{spec.variant}")
    if spec.variant == "PortScan":
        return _gen_portscan(spec, src, rng)

    times, ports = [], []
    bursts = _schedule(spec, rng)
    if spec.discontinuous:
        # a trailing short group joins the previous port so every port spans a sleep
        n_ports = max(1, len(bursts) // spec.bursts_per_port)
    else:
        n_ports = max(1, math.ceil(spec.duration / spec.port_hop_interval))
    port_pool = rng.choice(np.arange(ATTACK_PORTS[0], ATTACK_PORTS[1] + 1), size=n_ports, replace=False)
    for b, (t0, t1, rate) in enumerate(bursts):
        t = _burst_times(rng, t0, t1, rate, spec.pacing)
        if spec.discontinuous:
            p = np.full(len(t), port_pool[min(b // spec.bursts_per_port, n_ports - 1)])
        else:
            slot = np.minimum(((t - spec.start) // spec.port_hop_interval).astype(np.int64), n_ports - 1)
            p = port_pool[slot]
        times.append(t)
        ports.append(p)
    ts = np.concatenate(times) if times else np.zeros(0)
    sp = np.concatenate(ports) if ports else np.zeros(0, dtype=np.int64)
    return _table(spec, rng, ts, sp, np.full(len(ts), spec.target_port), spec.label)


def _gen_portscan(spec, src, rng):
    lo, hi = spec.scan_ports
    dports = np.arange(lo, hi + 1)
    rate = rng.uniform(*spec.rate_range)
    if spec.pacing == "fixed":
        ts = spec.start + np.arange(len(dports)) / rate
    else:
        ts = spec.start + np.concatenate([[0.0], np.cumsum(rng.exponential(1.0 / rate, len(dports) - 1))])
    sport = np.full(len(dports), rng.integers(ATTACK_PORTS[0], ATTACK_PORTS[1] + 1))
    spec = replace(spec, payload_range=(0, 0))
    return _table(spec, rng, ts, sport, dports, Label.PortScan)


def _table(spec, rng, ts, sport, dport, label):
    n = len(ts)
    lo, hi = spec.payload_range
    payload = rng.integers(lo, hi + 1, size=n)
    if spec.forge_dst_mac:
        # random locally administered unicast MACs
        dst_mac = (rng.integers(0, 1 << 40, size=n, dtype=np.int64) | (0x06 << 40)).astype(np.uint64)
    else:
        dst_mac = np.full(n, mac_to_int(spec.target.mac), dtype=np.uint64)
    return PacketTable(
        ts, np.full(n, ip_to_int(spec.source.ip)), sport, np.full(n, ip_to_int(spec.target.ip)), dport,
        np.full(n, int(Protocol.TCP)), payload, np.full(n, int(label)),
        np.full(n, mac_to_int(spec.source.mac), dtype=np.uint64), dst_mac,
    )


def _gen_hybrid(spec):
    """Experimental: components run back to back, each keeping its own label."""
    tables, t = [], spec.start
    for i, comp in enumerate(spec.components):
        comp = replace(comp, start=t, source=comp.source or spec.source, target=comp.target or spec.target,
                       seed=spec.seed + i)
        tables.append(gen_attack(comp))
        t += comp.duration
    return PacketTable.concat(tables).sorted_by_time()


@dataclass(frozen=True)
class BenignModel:
    flow_rate: float = 0.2
    packets_range: tuple = (5, 50)
    pps_range: tuple = (1.0, 20.0)
    request_bytes: tuple = (40, 600)
    response_bytes: tuple = (200, 1500)
    response_delay: tuple = (0.001, 0.02)


def gen_benign(n_hosts, duration, seed, hosts=None, model: BenignModel = BenignModel()) -> PacketTable:
    """Request/response flows between benign hosts.

    Each host opens flows as a Poisson process (``model.flow_rate`` per
    second) to a uniformly chosen peer's service port from a fresh
    ephemeral port. A flow carries 5-50 requests at 1-20 per second and
    each request is answered by the peer. Packets past ``duration`` are cut.
    """
    if n_hosts < 2:
        raise ValueError("gen_benign needs at least 2 hosts")
    if hosts is None:
        hosts = default_hosts(n_hosts)
    if len(hosts) != n_hosts:
        raise ValueError("hosts must list n_hosts entries")
    service = {h.ip: SERVICE_PORTS[i % len(SERVICE_PORTS)] for i, h in enumerate(hosts)}
    cols = {k: [] for k in ("ts", "sip", "sport", "dip", "dport", "size", "smac", "dmac")}
    for i, h in enumerate(hosts):
        rng = substream(seed, f"benign/{h.ip}")
        n_flows = rng.poisson(model.flow_rate * duration)
        starts = np.sort(rng.uniform(0.0, duration, size=n_flows))
        used = set()
        for start in starts:
            peer = hosts[(i + 1 + rng.integers(0, n_hosts - 1)) % n_hosts]
            port = int(rng.integers(EPHEMERAL_PORTS[0], EPHEMERAL_PORTS[1] + 1))
            while port in used:
                port = int(rng.integers(EPHEMERAL_PORTS[0], EPHEMERAL_PORTS[1] + 1))
            used.add(port)
            k = int(rng.integers(model.packets_range[0], model.packets_range[1] + 1))
            pps = rng.uniform(*model.pps_range)
            req = start + np.concatenate([[0.0], np.cumsum(rng.exponential(1.0 / pps, k - 1))])
            resp = req + rng.uniform(*model.response_delay, size=k)
            req_size = rng.integers(model.request_bytes[0], model.request_bytes[1] + 1, size=k)
            resp_size = rng.integers(model.response_bytes[0], model.response_bytes[1] + 1, size=k)
            for t, a, ap, b, bp, size in ((req, h, port, peer, service[peer.ip], req_size),
                                          (resp, peer, service[peer.ip], h, port, resp_size)):
                keep = t < duration
                m = int(keep.sum())
                cols["ts"].append(t[keep])
                cols["sip"].append(np.full(m, ip_to_int(a.ip)))
                cols["sport"].append(np.full(m, ap))
                cols["dip"].append(np.full(m, ip_to_int(b.ip)))
                cols["dport"].append(np.full(m, bp))
                cols["size"].append(size[keep])
                cols["smac"].append(np.full(m, mac_to_int(a.mac), dtype=np.uint64))
                cols["dmac"].append(np.full(m, mac_to_int(b.mac), dtype=np.uint64))
    if not cols["ts"]:
        return PacketTable.empty(with_macs=True)
    c = {k: np.concatenate(v) for k, v in cols.items()}
    n = len(c["ts"])
    table = PacketTable(c["ts"], c["sip"], c["sport"], c["dip"], c["dport"], np.full(n, int(Protocol.TCP)),
                        c["size"], np.full(n, int(Label.Benign)), c["smac"], c["dmac"])
    return table.sorted_by_time()


def default_hosts(n, subnet=DEFAULT_SUBNET, offset=0):
    net = ipaddress.IPv4Network(subnet)
    out = []
    for k in range(n):
        ip = str(net.network_address + 1 + offset + k)
        out.append(HostTuple(ip, host_mac(ip), "?"))
    return out


# --- scenarios ----------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    """Host roles plus per-variant overrides.

    ``roles`` is an optional explicit list of (ip, role) pairs where role is
    ``benign``, ``victim`` or an attack variant name; otherwise hosts are
    numbered from ``subnet`` in the order benign, victims, attackers.
    """
    duration: float = 60.0
    seed: int = 0
    benign_hosts: int = 20
    victims: int = 2
    attackers: dict = field(default_factory=lambda: {v: 2 for v in ATTACK_VARIANTS[:4]})
    overrides: dict = field(default_factory=dict)
    roles: tuple = ()
    subnet: str = DEFAULT_SUBNET
    benign_model: BenignModel = BenignModel()

    def role_table(self):
        if self.roles:
            seen = {}
            for ip, role in self.roles:
                if role not in ("benign", "victim") + ATTACK_VARIANTS + ("Hybrid",):
                    raise ScenarioError(f"unknown role {role!r} for {ip}")
                if ip in seen:
                    raise ScenarioError(f"host {ip} assigned to two roles ({seen[ip]}, {role})")
                seen[ip] = role
            return list(self.roles)
        roles = ["benign"] * self.benign_hosts + ["victim"] * self.victims
        for v in ATTACK_VARIANTS:
            roles += [v] * int(self.attackers.get(v, 0))
        unknown = set(self.attackers) - set(ATTACK_VARIANTS)
        if unknown:
            raise ScenarioError(f"unknown attack variants {sorted(unknown)}")
        hosts = default_hosts(len(roles), self.subnet)
        return [(h.ip, r) for h, r in zip(hosts, roles)]


@dataclass
class GroundTruth:
    rows: list  # (ip, mac, role, label name)

    def label_of(self, ip):
        for r in self.rows:
            if r[0] == ip:
                return r[3]
        raise KeyError(ip)

    @property
    def attack_sources(self):
        return [r[0] for r in self.rows if r[2] == "attacker"]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["src_ip", "src_mac", "role", "label"])
            w.writerows(self.rows)

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            return cls([tuple(r) for r in reader])


def gen_scenario(config: ScenarioConfig):
    """(time-sorted trace with MAC columns, ground truth per source host)."""
    roles = config.role_table()
    hosts = {ip: HostTuple(ip, host_mac(ip), "?") for ip, _ in roles}
    benign = [hosts[ip] for ip, r in roles if r == "benign"]
    victims = [hosts[ip] for ip, r in roles if r == "victim"]
    attackers = [(hosts[ip], r) for ip, r in roles if r not in ("benign", "victim")]
    if attackers and not victims:
        raise ScenarioError("attackers need at least one victim")
    tables = []
    if len(benign) >= 2:
        tables.append(gen_benign(len(benign), config.duration, config.seed, benign, config.benign_model))
    elif benign:
        raise ScenarioError("benign traffic needs at least 2 benign hosts")
    pick = substream(config.seed, "targets")
    truth = [(h.ip, h.mac, "benign", Label.Benign.name) for h in benign]
    truth += [(h.ip, h.mac, "victim", Label.Benign.name) for h in victims]
    for k, (h, variant) in enumerate(attackers):
        target = victims[int(pick.integers(0, len(victims)))]
        opts = dict(config.overrides.get(variant, {}))
        if variant == "Hybrid":
            parts = opts.pop("components", ("SlowDDoS", "FastDDoS"))
            share = config.duration / len(parts)
            comps = tuple(VariantSpec(p, duration=share, **dict(config.overrides.get(p, {}))) for p in parts)
            spec = VariantSpec("Hybrid", duration=config.duration, seed=config.seed, source=h, target=target,
                               components=comps, **opts)
            label = "+".join(parts)
        else:
            spec = VariantSpec(variant, duration=config.duration, seed=config.seed, source=h, target=target, **opts)
            label = variant
        tables.append(gen_attack(spec))
        truth.append((h.ip, h.mac, "attacker", label))
    trace = PacketTable.concat(tables).sorted_by_time() if tables else PacketTable.empty(with_macs=True)
    truth.sort(key=lambda r: ip_to_int(r[0]))
    return trace, GroundTruth(truth)


_SPEC_FIELDS = {
    "rate_range": "range", "sleep_range": "range", "burst_range": "range", "payload_range": "intrange",
    "scan_ports": "intrange", "port_hop_interval": float, "bursts_per_port": int, "target_port": int,
    "pacing": str, "forge_dst_mac": "bool", "components": "list",
}


def _parse_value(kind, raw):
    raw = raw.strip()
    if kind == "range":
        return tuple(float(v) for v in raw.split(","))
    if kind == "intrange":
        return tuple(int(v) for v in raw.split(","))
    if kind == "bool":
        return raw.lower() in ("1", "true", "yes", "on")
    if kind == "list":
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    return kind(raw)


def read_scenario(path) -> ScenarioConfig:
    """INI scenario file.

    [scenario]  duration, seed, benign_hosts, victims, subnet
    [attackers] <variant> = count
    [variant.<name>] overrides such as rate_range = 1000,2000
    [roles]     optional explicit ``ip = role`` lines
    [benign]    optional flow_rate, packets_range, pps_range
    """
    parser = configparser.ConfigParser(delimiters=("=",), inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    sc = parser["scenario"] if parser.has_section("scenario") else {}
    try:
        kwargs = dict(
            duration=float(sc.get("duration", 60)),
            seed=int(sc.get("seed", 0)),
            benign_hosts=int(sc.get("benign_hosts", 20)),
            victims=int(sc.get("victims", 2)),
            subnet=sc.get("subnet", DEFAULT_SUBNET),
        )
        if parser.has_section("attackers"):
            kwargs["attackers"] = {k: int(v) for k, v in parser["attackers"].items()}
        overrides = {}
        for name in parser.sections():
            if name.startswith("variant."):
                variant = name.split(".", 1)[1]
                opts = {}
                for key, raw in parser[name].items():
                    if key not in _SPEC_FIELDS:
                        raise ScenarioError(f"{path}: unknown option {key!r} in [{name}]")
                    opts[key] = _parse_value(_SPEC_FIELDS[key], raw)
                overrides[variant] = opts
        kwargs["overrides"] = overrides
        if parser.has_section("roles"):
            kwargs["roles"] = tuple((ip, role.strip()) for ip, role in parser["roles"].items())
        if parser.has_section("benign"):
            b = parser["benign"]
            kwargs["benign_model"] = BenignModel(
                flow_rate=float(b.get("flow_rate", 0.2)),
                packets_range=_parse_value("intrange", b.get("packets_range", "5,50")),
                pps_range=_parse_value("range", b.get("pps_range", "1,20")),
            )
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return ScenarioConfig(**kwargs)


def scenario_hosts(trace_or_truth):
    """Host list for topology building from a GroundTruth table."""
    return [r[0] for r in trace_or_truth.rows]
