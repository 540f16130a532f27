"""Single-threaded event loop over a packet trace: reactive ingress switches and one controller."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from ..flowkit import PacketTable, int_to_ip, int_to_mac
from .controller import (APPEND_BLOCK_LIST, APPEND_OBSERVING_LIST, DEFAULT_PACKET_IN_LIMIT, DROP_PENDING,
                         FORWARD_PENDING, INSTALL_ALLOW, INSTALL_PKT_BLOCKING, ControllerState, FlowMatch,
                         PacketInMessage, controller_forward_only, controller_mitigate)
from .topology import GATEWAY_PORT, HostTuple, Network, attach_point

logger = logging.getLogger(__name__)

UNKNOWN_ATTACH = "?"
REPORT_COLUMNS = ("t", "packet_in_rate", "rule_count", "drops", "forwarded", "observing_len", "block_len",
                  "overload")

FORWARDED, DROPPED, PENDING, UNSEEN = 0, 1, 2, 3


class Disposition(Enum):
    Forwarded = "Forwarded"
    Dropped = "Dropped"
    PacketInEmitted = "PacketInEmitted"


class RuleTableFull(RuntimeError):
    pass


@dataclass
class Rule:
    kind: str
    match: object
    install_time: float
    idle_timeout: float | None = None
    last_hit: float = 0.0


class SimPacket(NamedTuple):
    src: HostTuple
    flow: FlowMatch
    time: float


@dataclass
class SwitchState:
    id: str
    ports: int = 0
    capacity: int = 55000
    blocking: dict = field(default_factory=dict)
    allow: dict = field(default_factory=dict)
    packet_in_count: int = 0
    drop_count: int = 0

    @property
    def rule_table(self):
        return list(self.blocking.values()) + list(self.allow.values())

    def __len__(self):
        return len(self.blocking) + len(self.allow)

    def install(self, rule: Rule):
        """Add a rule; raises RuleTableFull when the table is at capacity."""
        table = self.blocking if rule.kind == "PktBlocking" else self.allow
        if rule.match in table:
            return
        if len(self) >= self.capacity:
            raise RuleTableFull(f"switch {self.id} rule table full ({self.capacity})")
        table[rule.match] = rule

    def expire(self, now):
        stale = [k for k, r in self.allow.items() if r.idle_timeout is not None and now - r.last_hit > r.idle_timeout]
        for k in stale:
            del self.allow[k]

    def handle(self, src, flow, now) -> Disposition:
        if src in self.blocking:
            self.drop_count += 1
            return Disposition.Dropped
        rule = self.allow.get(flow)
        if rule is not None:
            if rule.idle_timeout is not None and now - rule.last_hit > rule.idle_timeout:
                del self.allow[flow]
            else:
                rule.last_hit = now
                return Disposition.Forwarded
        self.packet_in_count += 1
        return Disposition.PacketInEmitted


def switch_handle_packet(switch: SwitchState, packet: SimPacket) -> Disposition:
    """Blocked source: Dropped. Allowed flow: Forwarded. Otherwise a Packet-In is emitted."""
    return switch.handle(packet.src, packet.flow, packet.time)


@dataclass(frozen=True)
class SimConfig:
    mitigation: bool = True
    packet_in_rate_limit: int = DEFAULT_PACKET_IN_LIMIT
    idle_timeout: float | None = None
    window: float = 1.0


@dataclass
class SimReport:
    rows: list
    summary: dict
    processed: list
    forwarded_by_source: dict
    packet_in_log: list = field(repr=False, default_factory=list)
    block_log: list = field(repr=False, default_factory=list)

    def series(self, column):
        k = REPORT_COLUMNS.index(column)
        return [r[k] for r in self.rows]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([r[0], *r[1:7], int(r[7])])
        return buf.getvalue()

    def summary_text(self):
        lines = [f"{k} = {self.summary[k]}" for k in sorted(self.summary)]
        lines.append("")
        lines.append("[forwarded_by_source]")
        lines += [f"{ip} = {n}" for ip, n in sorted(self.forwarded_by_source.items())]
        return "\n".join(lines) + "\n"

    def write(self, csv_path, summary_path):
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        with open(summary_path, "w", encoding="utf-8") as fh:
            fh.write(self.summary_text())


def _resolve_src(network, ip, mac):
    h = network.by_mac.get(mac) or network.by_ip.get(ip)
    attach = h.attach if h is not None else attach_point(network.gateway, GATEWAY_PORT)
    return HostTuple(ip, mac, attach)


def _unique_rows(cols):
    stacked = np.stack([np.asarray(c, dtype=np.int64) for c in cols], axis=1)
    uniq, inverse = np.unique(stacked, axis=0, return_inverse=True)
    return uniq, inverse.ravel()


class Simulator:
    """Processes a time-sorted trace packet by packet; ``run_until`` may be called repeatedly."""

    def __init__(self, network: Network, trace: PacketTable, config: SimConfig = SimConfig()):
        if not trace.has_macs:
            raise ValueError("simulator traces need src_mac and dst_mac columns")
        if len(trace) and np.any(np.diff(trace.timestamp) < 0):
            raise ValueError("trace is not time-sorted")
        self.network = network
        self.trace = trace
        self.config = config
        self.switches = {s: SwitchState(s, capacity=network.capacity[s]) for s in network.switches}
        self.state = ControllerState(network.network_list, list(network.switches),
                                     packet_in_rate_limit=config.packet_in_rate_limit)
        n = len(trace)
        self.disposition = np.full(n, UNSEEN, dtype=np.int8)
        self._prepare()
        self.cursor = 0
        self.window = 0
        self._feeds = []
        self._w_pin = self._w_proc = self._w_drop = self._w_fwd = 0
        self._w_overload = False
        self._queue = []
        self.rows = []
        self.processed = []
        self.packet_in_log = []
        self.block_log = []
        self.overflow = 0
        self.overload_windows = 0

    def _prepare(self):
        tr = self.trace
        src_u, self._src_idx = _unique_rows([tr.src_ip, tr.src_mac])
        self._src = [_resolve_src(self.network, int_to_ip(ip), int_to_mac(mac)) for ip, mac in src_u]
        self._ingress = [t.attach.rsplit(":", 1)[0] for t in self._src]
        dst_u, self._dst_idx = _unique_rows([tr.dst_ip, tr.dst_mac])
        self._dst = []
        for ip, mac in dst_u:
            mac_s = int_to_mac(mac)
            self._dst.append(HostTuple(int_to_ip(ip), mac_s, self.network.attach_of_mac(mac_s) or UNKNOWN_ATTACH))
        flow_u, self._flow_idx = _unique_rows([self._src_idx, tr.src_port, self._dst_idx, tr.dst_port, tr.protocol])
        self._flows = [FlowMatch(self._src[s], int(sp), self._dst[d].ip, self._dst[d].mac, int(dp), int(pr))
                       for s, sp, d, dp, pr in flow_u]

    # -- feeds ---------------------------------------------------------------

    def schedule_feed(self, time, tuples):
        """Merge ``tuples`` into Observing_List once simulated time reaches ``time``."""
        self._feeds.append((float(time), len(self._feeds), list(tuples)))
        self._feeds.sort(key=lambda f: (f[0], f[1]))

    def _apply_feeds(self, now):
        while self._feeds and self._feeds[0][0] <= now:
            _, _, tuples = self._feeds.pop(0)
            if not self.config.mitigation:
                continue
            for t in tuples:
                self.state.observe(t)

    # -- windows -------------------------------------------------------------

    def _close_window(self):
        for i in self._queue:
            self.disposition[i] = DROPPED
            self._w_drop += 1
        self._queue = []
        if self.config.idle_timeout is not None:
            end = (self.window + 1) * self.config.window
            for sw in self.switches.values():
                sw.expire(end)
        if self._w_overload:
            self.overload_windows += 1
        self.rows.append((
            round(self.window * self.config.window, 9),
            self._w_pin,
            sum(len(sw) for sw in self.switches.values()),
            self._w_drop,
            self._w_fwd,
            len(self.state.observing_list),
            len(self.state.block_list),
            self._w_overload,
        ))
        self.processed.append(self._w_proc)
        self.window += 1
        self._w_pin = self._w_proc = self._w_drop = self._w_fwd = 0
        self._w_overload = False
        self.state.overload_flag = False

    def _advance_to(self, t):
        target = int(math.floor(t / self.config.window))
        while self.window < target:
            self._apply_feeds(self.window * self.config.window)
            self._close_window()

    # -- packets -------------------------------------------------------------

    def _install(self, switch, rule):
        try:
            self.switches[switch].install(rule)
            return True
        except RuleTableFull as exc:
            self.overflow += 1
            logger.warning("%s; %s rule refused at t=%.6f", exc, rule.kind, rule.install_time)
            return False

    def _packet_in(self, i, t, src, flow, switch):
        self._w_pin += 1
        self.packet_in_log.append((t, switch, src))
        if self._w_proc >= self.state.packet_in_rate_limit:
            self._w_overload = True
            self.state.overload_flag = True
            self._queue.append(i)
            self.disposition[i] = PENDING
            return
        self._w_proc += 1
        msg = PacketInMessage(src, self._dst[self._dst_idx[i]], switch, t, flow)
        policy = controller_mitigate if self.config.mitigation else controller_forward_only
        verdict = DROPPED
        for action in policy(msg, self.state):
            if action.kind == INSTALL_PKT_BLOCKING:
                if self._install(switch, Rule("PktBlocking", action.target, t)):
                    self.block_log.append((t, switch, action.target))
            elif action.kind == INSTALL_ALLOW:
                self._install(switch, Rule("Allow", action.target, t, self.config.idle_timeout, t))
            elif action.kind == FORWARD_PENDING:
                verdict = FORWARDED
            elif action.kind in (DROP_PENDING, APPEND_BLOCK_LIST, APPEND_OBSERVING_LIST):
                pass
        self.disposition[i] = verdict
        if verdict == FORWARDED:
            self._w_fwd += 1
        else:
            self._w_drop += 1

    def run_until(self, t_end=None):
        """Process every packet with timestamp < ``t_end`` (all packets when None)."""
        ts = self.trace.timestamp
        n = len(ts)
        stop = n if t_end is None else int(np.searchsorted(ts, t_end, side="left"))
        for i in range(self.cursor, stop):
            t = float(ts[i])
            self._advance_to(t)
            self._apply_feeds(t)
            s = self._src_idx[i]
            src = self._src[s]
            switch = self._ingress[s]
            flow = self._flows[self._flow_idx[i]]
            outcome = self.switches[switch].handle(src, flow, t)
            if outcome is Disposition.Forwarded:
                self.disposition[i] = FORWARDED
                self._w_fwd += 1
            elif outcome is Disposition.Dropped:
                self.disposition[i] = DROPPED
                self._w_drop += 1
            else:
                self._packet_in(i, t, src, flow, switch)
        self.cursor = max(self.cursor, stop)
        return self

    def finish(self, end_time=None):
        """Process the rest of the trace and close every window up to ``end_time``."""
        self.run_until(None)
        ts = self.trace.timestamp
        last = float(ts[-1]) if len(ts) else 0.0
        end = max(last, end_time or 0.0)
        self._advance_to(end)
        self._apply_feeds(end)
        self._close_window()
        return self.report()

    def mirror_flows(self, t0, t1):
        """Copies of the packets seen in [t0, t1) with their current dispositions."""
        ts = self.trace.timestamp
        lo = int(np.searchsorted(ts, t0, side="left"))
        hi = min(int(np.searchsorted(ts, t1, side="left")), self.cursor)
        idx = np.arange(lo, max(lo, hi))
        return self.trace.take(idx), self.disposition[idx].copy()

    def report(self) -> SimReport:
        seen = self.disposition[: self.cursor]
        fwd = np.flatnonzero(seen == FORWARDED)
        by_source = {}
        if len(fwd):
            ips, n = np.unique(self.trace.src_ip[fwd], return_counts=True)
            by_source = {int_to_ip(ip): int(c) for ip, c in zip(ips, n)}
        for ip in np.unique(self.trace.src_ip[: self.cursor]):
            by_source.setdefault(int_to_ip(ip), 0)
        pin = [r[1] for r in self.rows]
        summary = {
            "mitigation": self.config.mitigation,
            "packet_in_rate_limit": self.state.packet_in_rate_limit,
            "packets": int(self.cursor),
            "forwarded": int((seen == FORWARDED).sum()),
            "dropped": int((seen == DROPPED).sum()),
            "pending": int((seen == PENDING).sum()),
            "packet_ins": int(sum(pin)),
            "peak_packet_in_rate": int(max(pin)) if pin else 0,
            "controller_processed": int(sum(self.processed)),
            "peak_controller_load": int(max(self.processed)) if self.processed else 0,
            "overload": self.overload_windows > 0,
            "overload_windows": self.overload_windows,
            "rule_overflow": self.overflow,
            "comparisons": self.state.comparisons,
            "observing_list": " ".join(f"{t.ip}/{t.mac}/{t.attach}" for t in self.state.observing_list),
            "block_list": " ".join(f"{t.ip}/{t.mac}/{t.attach}" for t in self.state.block_list),
            "observing_len": len(self.state.observing_list),
            "block_len": len(self.state.block_list),
            "windows": len(self.rows),
        }
        return SimReport(list(self.rows), summary, list(self.processed), by_source,
                         list(self.packet_in_log), list(self.block_log))


def resolve_feed(network: Network, entries):
    """Map suspicious-node entries (HostTuple, ip string, or (ip, port, ...) rows) to Network_List tuples."""
    out, seen = [], set()
    for e in entries:
        if isinstance(e, HostTuple):
            t = e
        else:
            ip = e if isinstance(e, str) else e[0]
            t = network.by_ip.get(ip)
            if t is None:
                logger.warning("detector feed names unknown host %s; ignored", ip)
                continue
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def read_feed(path):
    """Suspicious-node CSV with at least a ``src_ip`` column."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "src_ip" not in reader.fieldnames:
            raise ValueError(f"{path}: detector feed needs a src_ip column")
        return [(row["src_ip"], row.get("src_port"), row.get("label")) for row in reader]


def run_scenario(network: Network, packet_trace: PacketTable, mitigation_enabled=True, detector_feed=None,
                 feed_time=0.0, config: SimConfig | None = None, end_time=None) -> SimReport:
    """Replay ``packet_trace`` through the network and return the per-second report."""
    cfg = config or SimConfig()
    if cfg.mitigation != bool(mitigation_enabled):
        cfg = SimConfig(bool(mitigation_enabled), cfg.packet_in_rate_limit, cfg.idle_timeout, cfg.window)
    sim = Simulator(network, packet_trace, cfg)
    if detector_feed:
        sim.schedule_feed(feed_time, resolve_feed(network, detector_feed))
    return sim.finish(end_time)


def mirror_flows(sim: Simulator, window):
    """Packets observed in ``window`` = (t0, t1); see Simulator.mirror_flows."""
    t0, t1 = window
    return sim.mirror_flows(t0, t1)
