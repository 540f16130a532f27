"""Node characterization: packets -> basic flows -> activity flows.

A basic flow is every packet sharing a directed ``(src_ip:src_port,
dst_ip:dst_port)`` pair. An activity flow groups the basic flows leaving one
``src_ip:src_port`` endpoint and becomes a node of the traffic graph.
"""
from __future__ import annotations

import configparser
import csv
import ipaddress
import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels
from ._rng import substream

logger = logging.getLogger(__name__)

FEATURES = (
    "flow_duration",
    "packets_per_second",
    "bytes_per_second",
    "mean_packet_size",
    "mean_inter_arrival",
    "std_inter_arrival",
    "total_packets",
    "distinct_dst_ports",
)
N_FEATURES = len(FEATURES)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURES)}

MIN_DURATION = 1e-6
LOW_PROFILE_THRESHOLD = 2

PACKET_COLUMNS = (
    "timestamp", "src_ip", "src_port", "dst_ip", "dst_port", "protocol", "payload_bytes", "label",
)
MAC_COLUMNS = ("src_mac", "dst_mac")


class SchemaError(ValueError):
    """Input file does not follow the expected column layout."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"bad or missing column {column!r}")


class Label(IntEnum):
    Benign = 0
    NoflowBenign = 1
    DDoS = 2
    PortScan = 3
    SlowDDoS = 4
    FastDDoS = 5
    SlowDcDDoS = 6
    FastDcDDoS = 7

    @property
    def is_attack(self):
        return self >= Label.DDoS

    def project(self):
        """Layer-1 class: 0 benign, 1 attack."""
        return int(self.is_attack)


DDOS_VARIANTS = (Label.SlowDDoS, Label.FastDDoS, Label.SlowDcDDoS, Label.FastDcDDoS)


class Protocol(IntEnum):
    ICMP = 1
    TCP = 6
    UDP = 17


def majority_label(counts) -> Label:
    """Most frequent label; ties go to the attack class with the lowest index."""
    counts = np.asarray(counts)
    top = counts.max()
    tied = [i for i, c in enumerate(counts) if c == top]
    attacks = [i for i in tied if Label(i).is_attack]
    return Label(min(attacks) if attacks else min(tied))


def _majority_rows(counts):
    # vectorized majority_label: count dominates, then attack-ness, then low index
    n_labels = counts.shape[1]
    idx = np.arange(n_labels)
    bonus = (idx >= Label.DDoS).astype(np.int64) * (n_labels + 1) + (n_labels - idx)
    key = counts.astype(np.int64) * (2 * n_labels + 2) + bonus
    return np.argmax(key, axis=1)


def ip_to_int(ip) -> int:
    return int(ipaddress.IPv4Address(ip))


def int_to_ip(value) -> str:
    return str(ipaddress.IPv4Address(int(value)))


def mac_to_int(mac) -> int:
    return int(mac.replace(":", "").replace("-", ""), 16)


def int_to_mac(value) -> str:
    h = f"{int(value):012x}"
    return ":".join(h[i:i + 2] for i in range(0, 12, 2))


def _stringify(values, fmt):
    uniq, inv = np.unique(values, return_inverse=True)
    text = np.array([fmt(v) for v in uniq], dtype=object)
    return text[inv]


@dataclass(frozen=True)
class PacketRecord:
    timestamp: float
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    protocol: Protocol
    payload_bytes: int
    label: Label
    src_mac: str | None = None
    dst_mac: str | None = None

    def __post_init__(self):
        if not (self.timestamp >= 0 and math.isfinite(self.timestamp)):
            raise ValueError(f"timestamp must be finite and >= 0, got {self.timestamp}")
        if self.payload_bytes < 0:
            raise ValueError("payload_bytes must be >= 0")
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"port out of range: {port}")


class PacketTable:
    """Columnar packet trace. Row order is whatever the producer chose."""

    __slots__ = ("timestamp", "src_ip", "src_port", "dst_ip", "dst_port",
                 "protocol", "payload", "label", "src_mac", "dst_mac")

    def __init__(self, timestamp, src_ip, src_port, dst_ip, dst_port, protocol,
                 payload, label, src_mac=None, dst_mac=None):
        self.timestamp = np.asarray(timestamp, dtype=np.float64)
        n = len(self.timestamp)
        self.src_ip = np.asarray(src_ip, dtype=np.uint32)
        self.src_port = np.asarray(src_port, dtype=np.int32)
        self.dst_ip = np.asarray(dst_ip, dtype=np.uint32)
        self.dst_port = np.asarray(dst_port, dtype=np.int32)
        self.protocol = np.asarray(protocol, dtype=np.uint8)
        self.payload = np.asarray(payload, dtype=np.int64)
        self.label = np.asarray(label, dtype=np.int8)
        self.src_mac = None if src_mac is None else np.asarray(src_mac, dtype=np.uint64)
        self.dst_mac = None if dst_mac is None else np.asarray(dst_mac, dtype=np.uint64)
        for name in self.__slots__:
            col = getattr(self, name)
            if col is not None and len(col) != n:
                raise ValueError(f"column {name} has length {len(col)}, expected {n}")

    def __len__(self):
        return len(self.timestamp)

    @property
    def has_macs(self):
        return self.src_mac is not None and self.dst_mac is not None

    @classmethod
    def empty(cls, with_macs=False):
        z = np.zeros(0)
        macs = (z, z) if with_macs else (None, None)
        return cls(z, z, z, z, z, z, z, z, *macs)

    @classmethod
    def from_records(cls, records: Iterable[PacketRecord]):
        records = list(records)
        with_macs = bool(records) and all(r.src_mac is not None and r.dst_mac is not None for r in records)
        return cls(
            [r.timestamp for r in records],
            [ip_to_int(r.src_ip) for r in records],
            [r.src_port for r in records],
            [ip_to_int(r.dst_ip) for r in records],
            [r.dst_port for r in records],
            [int(r.protocol) for r in records],
            [r.payload_bytes for r in records],
            [int(r.label) for r in records],
            [mac_to_int(r.src_mac) for r in records] if with_macs else None,
            [mac_to_int(r.dst_mac) for r in records] if with_macs else None,
        )

    def records(self):
        macs = self.has_macs
        out = []
        for i in range(len(self)):
            out.append(PacketRecord(
                float(self.timestamp[i]), int_to_ip(self.src_ip[i]), int(self.src_port[i]),
                int_to_ip(self.dst_ip[i]), int(self.dst_port[i]), Protocol(int(self.protocol[i])),
                int(self.payload[i]), Label(int(self.label[i])),
                int_to_mac(self.src_mac[i]) if macs else None,
                int_to_mac(self.dst_mac[i]) if macs else None,
            ))
        return out

    def take(self, index):
        index = np.asarray(index)
        return PacketTable(*(None if getattr(self, s) is None else getattr(self, s)[index]
                             for s in self.__slots__))

    def sorted_by_time(self):
        return self.take(np.argsort(self.timestamp, kind="stable"))

    @classmethod
    def concat(cls, tables: Sequence["PacketTable"]):
        tables = [t for t in tables if len(t)]
        if not tables:
            return cls.empty()
        with_macs = all(t.has_macs for t in tables)
        cols = []
        for s in cls.__slots__:
            if s in MAC_COLUMNS and not with_macs:
                cols.append(None)
            else:
                cols.append(np.concatenate([getattr(t, s) for t in tables]))
        return cls(*cols)

    def equals(self, other):
        if len(self) != len(other) or self.has_macs != other.has_macs:
            return False
        return all(
            getattr(self, s) is None or np.array_equal(getattr(self, s), getattr(other, s))
            for s in self.__slots__
        )

    def write_csv(self, path, with_macs=None):
        """Write the packet trace CSV; MAC columns are appended when present."""
        if with_macs is None:
            with_macs = self.has_macs
        if with_macs and not self.has_macs:
            raise ValueError("trace has no MAC columns")
        header = list(PACKET_COLUMNS) + (list(MAC_COLUMNS) if with_macs else [])
        cols = [
            [repr(float(t)) for t in self.timestamp],
            _stringify(self.src_ip, int_to_ip),
            self.src_port.tolist(),
            _stringify(self.dst_ip, int_to_ip),
            self.dst_port.tolist(),
            _stringify(self.protocol, lambda v: Protocol(int(v)).name),
            self.payload.tolist(),
            _stringify(self.label, lambda v: Label(int(v)).name),
        ]
        if with_macs:
            cols += [_stringify(self.src_mac, int_to_mac), _stringify(self.dst_mac, int_to_mac)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(zip(*cols))

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise SchemaError(PACKET_COLUMNS[0], "empty trace file") from None
            for i, name in enumerate(PACKET_COLUMNS):
                if i >= len(header) or header[i] != name:
                    raise SchemaError(name)
            extra = header[len(PACKET_COLUMNS):]
            with_macs = extra[:2] == list(MAC_COLUMNS)
            if extra and not with_macs:
                raise SchemaError(extra[0])
            rows = list(reader)
        n = len(rows)
        cols = list(zip(*rows)) if n else [()] * len(header)
        ip_cache, mac_cache = {}, {}

        def conv(values, fn, cache, column):
            out = []
            for v in values:
                r = cache.get(v)
                if r is None:
                    try:
                        r = cache[v] = fn(v)
                    except (ValueError, KeyError):
                        raise SchemaError(column, f"bad value {v!r} in column {column!r}") from None
                out.append(r)
            return out

        def numeric(values, column, kind):
            try:
                return np.array(values, dtype=np.float64).astype(kind)
            except ValueError:
                raise SchemaError(column, f"non-numeric value in column {column!r}") from None

        ts = numeric(cols[0], "timestamp", np.float64)
        if n and (not np.all(np.isfinite(ts)) or ts.min() < 0):
            raise SchemaError("timestamp", "timestamps must be finite and >= 0")
        sport = numeric(cols[2], "src_port", np.int64)
        dport = numeric(cols[4], "dst_port", np.int64)
        for col, vals in (("src_port", sport), ("dst_port", dport)):
            if n and (vals.min() < 0 or vals.max() > 65535):
                raise SchemaError(col, f"port out of range in column {col!r}")
        payload = numeric(cols[6], "payload_bytes", np.int64)
        if n and payload.min() < 0:
            raise SchemaError("payload_bytes", "negative payload size")
        table = cls(
            ts,
            conv(cols[1], ip_to_int, ip_cache, "src_ip"),
            sport,
            conv(cols[3], ip_to_int, ip_cache, "dst_ip"),
            dport,
            conv(cols[5], lambda v: int(Protocol[v]), {}, "protocol"),
            payload,
            conv(cols[7], lambda v: int(Label[v]), {}, "label"),
            conv(cols[8], mac_to_int, mac_cache, "src_mac") if with_macs else None,
            conv(cols[9], mac_to_int, mac_cache, "dst_mac") if with_macs else None,
        )
        return table


class FlowKey(NamedTuple):
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int

    @property
    def source(self):
        return (self.src_ip, self.src_port)

    @property
    def destination(self):
        return (self.dst_ip, self.dst_port)


@dataclass(frozen=True, eq=False)
class BasicFlow:
    key: FlowKey
    feature_vector: np.ndarray
    packet_count: int
    label: Label


@dataclass(frozen=True, eq=False)
class ActivityFlow:
    source: tuple
    feature_vector: np.ndarray
    basic_flow_count: int
    label: Label


def endpoint_sort_key(endpoint):
    ip, port = endpoint
    return (ip_to_int(ip), int(port))


def _as_table(packets):
    if isinstance(packets, PacketTable):
        return packets
    return PacketTable.from_records(packets)


def basic_feature_matrix(duration, count, nbytes, iat_mean, iat_std):
    """Assemble per-flow feature rows from segment statistics."""
    eff = np.maximum(duration, MIN_DURATION)
    X = np.empty((len(duration), N_FEATURES))
    X[:, 0] = duration
    X[:, 1] = count / eff
    X[:, 2] = nbytes / eff
    X[:, 3] = nbytes / count
    X[:, 4] = iat_mean
    X[:, 5] = iat_std
    X[:, 6] = count
    X[:, 7] = 1.0
    return X


def group_basic_flows(packets) -> list[BasicFlow]:
    """One BasicFlow per directed endpoint pair, sorted by key.

    Rates use the flow duration floored at ``MIN_DURATION``; a flow with a
    single packet has inter-arrival statistics of 0.
    """
    t = _as_table(packets)
    if len(t) == 0:
        return []
    if not np.all(np.isfinite(t.timestamp)):
        raise ValueError("timestamps must be finite")
    order = np.lexsort((t.payload, t.timestamp, t.dst_port, t.dst_ip, t.src_port, t.src_ip))
    sip, sport = t.src_ip[order], t.src_port[order]
    dip, dport = t.dst_ip[order], t.dst_port[order]
    change = np.ones(len(order), dtype=bool)
    change[1:] = (
        (sip[1:] != sip[:-1]) | (sport[1:] != sport[:-1])
        | (dip[1:] != dip[:-1]) | (dport[1:] != dport[:-1])
    )
    starts = np.flatnonzero(change)
    offsets = np.append(starts, len(order)).astype(np.int64)
    ts = np.ascontiguousarray(t.timestamp[order])
    size = np.ascontiguousarray(t.payload[order], dtype=np.float64)
    duration, count, nbytes, iat_mean, iat_std = kernels.segment_stats(ts, size, offsets)
    X = basic_feature_matrix(duration, count, nbytes, iat_mean, iat_std)

    seg = np.repeat(np.arange(len(starts)), np.diff(offsets))
    label_counts = np.zeros((len(starts), len(Label)), dtype=np.int64)
    np.add.at(label_counts, (seg, t.label[order].astype(np.int64)), 1)
    labels = _majority_rows(label_counts)

    ip_text = {}

    def ip(v):
        s = ip_text.get(v)
        if s is None:
            s = ip_text[v] = int_to_ip(v)
        return s

    flows = []
    for k, s in enumerate(starts):
        key = FlowKey(ip(int(sip[s])), int(sport[s]), ip(int(dip[s])), int(dport[s]))
        flows.append(BasicFlow(key, X[k].copy(), int(count[k]), Label(int(labels[k]))))
    return flows


def group_activity_flows(basic: Sequence[BasicFlow]) -> list[ActivityFlow]:
    """Mean-aggregate basic flows per source endpoint, sorted by endpoint."""
    groups: dict[tuple, list[BasicFlow]] = {}
    for f in basic:
        groups.setdefault(f.key.source, []).append(f)
    out = []
    for source in sorted(groups, key=endpoint_sort_key):
        members = sorted(groups[source], key=lambda f: endpoint_sort_key(f.key.destination))
        vec = np.mean(np.stack([f.feature_vector for f in members]), axis=0)
        vec[FEATURE_INDEX["distinct_dst_ports"]] = len({f.key.destination for f in members})
        counts = np.bincount([int(f.label) for f in members], minlength=len(Label))
        out.append(ActivityFlow(source, vec, len(members), majority_label(counts)))
    return out


def dedupe_mixed_attackers(flows: Sequence[BasicFlow], by="ip") -> list[BasicFlow]:
    """Drop DDoS flows of any source that also carries PortScan flows.

    ``by="ip"`` treats a host as the source; ``by="endpoint"`` uses ip:port.
    """
    def source(f):
        return f.key.src_ip if by == "ip" else f.key.source

    scanners = {source(f) for f in flows if f.label == Label.PortScan}
    ddos = {source(f) for f in flows if f.label == Label.DDoS}
    mixed = scanners & ddos
    if mixed:
        logger.info("dropping DDoS flows of %d mixed DDoS/PortScan sources", len(mixed))
    return [f for f in flows if not (f.label == Label.DDoS and source(f) in mixed)]


def destination_endpoints(basic: Sequence[BasicFlow]) -> set:
    return {f.key.destination for f in basic}


def synthesize_noflow_nodes(known_endpoints, flows: Sequence[ActivityFlow], mode="SampleBenign",
                            seed=0, low_profile_threshold=LOW_PROFILE_THRESHOLD):
    """Create NoflowBenign nodes for endpoints that never send.

    Returns ``(nodes, fell_back)``. ``mode="SampleBenign"`` draws every
    feature independently from the benign sources with at most
    ``low_profile_threshold`` basic flows; with no such sources it falls
    back to zero vectors and ``fell_back`` is True.
    """
    if mode not in ("SampleBenign", "Zeros"):
        raise ValueError(f"unknown noflow mode {mode!r}")
    senders = {f.source for f in flows}
    missing = sorted((tuple(e) for e in known_endpoints if tuple(e) not in senders), key=endpoint_sort_key)
    fell_back = False
    if mode == "SampleBenign":
        pool = [f.feature_vector for f in flows
                if f.label == Label.Benign and f.basic_flow_count <= low_profile_threshold]
        if pool:
            pool = np.stack(pool)
            rng = substream(seed, "noflow")
            rows = rng.integers(0, len(pool), size=(len(missing), N_FEATURES))
            vectors = pool[rows, np.arange(N_FEATURES)]
        else:
            logger.warning("no low-profile benign sources to sample from; zero-filling %d nodes", len(missing))
            fell_back = True
            vectors = np.zeros((len(missing), N_FEATURES))
    else:
        vectors = np.zeros((len(missing), N_FEATURES))
    nodes = [ActivityFlow(e, vectors[i].copy(), 0, Label.NoflowBenign) for i, e in enumerate(missing)]
    return nodes, fell_back


def characterize(basic: Sequence[BasicFlow], noflow_mode="SampleBenign", seed=0, dedupe=True):
    """Basic flows -> activity flows plus synthesized no-flow nodes, sorted by endpoint."""
    if dedupe:
        basic = dedupe_mixed_attackers(basic)
    activity = group_activity_flows(basic)
    extra, _ = synthesize_noflow_nodes(destination_endpoints(basic), activity, noflow_mode, seed)
    nodes = sorted(activity + extra, key=lambda f: endpoint_sort_key(f.source))
    return list(basic), nodes


def write_activity_csv(path, flows: Sequence[ActivityFlow]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(FEATURES) + ["src_ip", "src_port", "label"])
        for f in flows:
            w.writerow([repr(float(v)) for v in f.feature_vector] + [f.source[0], f.source[1], f.label.name])


def read_activity_csv(path) -> list[ActivityFlow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = list(FEATURES) + ["src_ip", "src_port", "label"]
        for i, name in enumerate(expected):
            if i >= len(header) or header[i].strip() != name:
                raise SchemaError(name)
        out = []
        for row in reader:
            vec = np.array([float(v) for v in row[:N_FEATURES]])
            label = Label[row[N_FEATURES + 2]]
            out.append(ActivityFlow((row[N_FEATURES], int(row[N_FEATURES + 1])), vec,
                                    0 if label == Label.NoflowBenign else 1, label))
    return out


# --- external flow CSVs (CICIDS2017 layout) ---------------------------------

@dataclass
class ColumnMapping:
    """Maps columns of an external per-flow CSV onto the feature schema.

    Unmapped feature slots are filled with 0 and ``distinct_dst_ports`` is
    always 1 for a single flow row. ``scale`` multiplies a mapped column,
    e.g. 1e-6 for microsecond durations. Rows whose label is not in
    ``labels`` are skipped.
    """
    features: dict = field(default_factory=dict)
    scale: dict = field(default_factory=dict)
    src_ip: str = "Source IP"
    src_port: str = "Source Port"
    dst_ip: str = "Destination IP"
    dst_port: str = "Destination Port"
    label: str = "Label"
    labels: dict = field(default_factory=dict)

    @classmethod
    def cicids2017(cls):
        return cls(
            features={
                "flow_duration": "Flow Duration",
                "packets_per_second": "Flow Packets/s",
                "bytes_per_second": "Flow Bytes/s",
                "mean_packet_size": "Average Packet Size",
                "mean_inter_arrival": "Flow IAT Mean",
                "std_inter_arrival": "Flow IAT Std",
                "total_packets": "Total Fwd Packets",
            },
            scale={"flow_duration": 1e-6, "mean_inter_arrival": 1e-6, "std_inter_arrival": 1e-6},
            labels={"BENIGN": Label.Benign, "DDoS": Label.DDoS, "PortScan": Label.PortScan},
        )

    @classmethod
    def from_file(cls, path):
        """Read an INI mapping: [features] slot = column, [scale], [endpoints], [labels]."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        if not cp.read(path, encoding="utf-8"):
            raise FileNotFoundError(path)
        m = cls()
        if cp.has_section("features"):
            for slot, col in cp.items("features"):
                if slot not in FEATURE_INDEX:
                    raise SchemaError(slot, f"unknown feature slot {slot!r} in column mapping")
                m.features[slot] = col.strip()
        if cp.has_section("scale"):
            m.scale = {k: float(v) for k, v in cp.items("scale")}
        if cp.has_section("endpoints"):
            for k, v in cp.items("endpoints"):
                if k not in ("src_ip", "src_port", "dst_ip", "dst_port", "label"):
                    raise SchemaError(k, f"unknown endpoint key {k!r} in column mapping")
                setattr(m, k, v.strip())
        if cp.has_section("labels"):
            m.labels = {k: Label[v.strip()] for k, v in cp.items("labels")}
        else:
            m.labels = cls.cicids2017().labels
        return m


def read_flow_csv(path, mapping: ColumnMapping | None = None) -> list[BasicFlow]:
    """Ingest an external per-flow CSV as basic flows.

    Rows sharing a directed endpoint pair are averaged into one basic flow.
    Non-finite cells (``Infinity``, ``NaN``) become 0.
    """
    mapping = mapping or ColumnMapping.cicids2017()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        pos = {h: i for i, h in enumerate(header)}
        needed = [mapping.src_ip, mapping.src_port, mapping.dst_ip, mapping.dst_port, mapping.label]
        needed += list(mapping.features.values())
        for col in needed:
            if col not in pos:
                raise SchemaError(col)
        slots = [(FEATURE_INDEX[s], pos[c], mapping.scale.get(s, 1.0)) for s, c in mapping.features.items()]
        groups: dict[FlowKey, list] = {}
        skipped = 0
        for row in reader:
            raw_label = row[pos[mapping.label]].strip()
            label = mapping.labels.get(raw_label)
            if label is None:
                skipped += 1
                continue
            vec = np.zeros(N_FEATURES)
            for j, c, scale in slots:
                try:
                    v = float(row[c])
                except ValueError:
                    raise SchemaError(header[c], f"non-numeric value in column {header[c]!r}") from None
                vec[j] = v * scale if math.isfinite(v) else 0.0
            vec[FEATURE_INDEX["distinct_dst_ports"]] = 1.0
            key = FlowKey(row[pos[mapping.src_ip]].strip(), int(float(row[pos[mapping.src_port]])),
                          row[pos[mapping.dst_ip]].strip(), int(float(row[pos[mapping.dst_port]])))
            groups.setdefault(key, []).append((vec, label))
    if skipped:
        logger.info("skipped %d rows with unmapped labels", skipped)
    out = []
    for key in sorted(groups, key=lambda k: (endpoint_sort_key(k.source), endpoint_sort_key(k.destination))):
        rows = groups[key]
        vec = np.mean(np.stack([v for v, _ in rows]), axis=0)
        counts = np.bincount([int(lab) for _, lab in rows], minlength=len(Label))
        packets = int(round(sum(v[FEATURE_INDEX["total_packets"]] for v, _ in rows))) or len(rows)
        out.append(BasicFlow(key, vec, max(packets, 1), majority_label(counts)))
    return out
