"""Controller state and the Packet-In mitigation decision."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .. import kernels
from .topology import HostTuple

DEFAULT_PACKET_IN_LIMIT = 600

INSTALL_PKT_BLOCKING = "InstallPktBlocking"
APPEND_BLOCK_LIST = "AppendBlockList"
APPEND_OBSERVING_LIST = "AppendObservingList"
DROP_PENDING = "DropPending"
INSTALL_ALLOW = "InstallAllow"
FORWARD_PENDING = "ForwardPending"


class FlowMatch(NamedTuple):
    """Header fields an Allow rule matches on."""
    src: HostTuple
    src_port: int
    dst_ip: str
    dst_mac: str
    dst_port: int
    protocol: int


class PacketInMessage(NamedTuple):
    src: HostTuple
    dest: HostTuple
    switch: str
    time: float
    flow: FlowMatch | None = None


class Action(NamedTuple):
    kind: str
    switch: str | None = None
    target: object = None


class _Interner:
    def __init__(self):
        self.ids = {}

    def __call__(self, value):
        return self.ids.setdefault(value, len(self.ids))

    def code(self, t: HostTuple):
        return (self(t.ip), self(t.mac), self(t.attach))


@dataclass
class ControllerState:
    """Network_List, Observing_List and Block_List plus the switch set scanned per decision."""
    network_list: list
    switches: list
    observing_list: list = field(default_factory=list)
    block_list: list = field(default_factory=list)
    packet_in_rate_limit: int = DEFAULT_PACKET_IN_LIMIT
    overload_flag: bool = False
    comparisons: int = 0

    def __post_init__(self):
        if not self.switches:
            raise ValueError("controller needs at least one switch")
        self._intern = _Interner()
        # same no-op rule as observe()/block() for entries given up front
        self.observing_list = list(dict.fromkeys(self.observing_list))
        self.block_list = list(dict.fromkeys(self.block_list))
        self._net = self._array(self.network_list)
        self._network_set = set(self.network_list)
        self._obs_rows = [self._intern.code(t) for t in self.observing_list]
        self._obs = None
        self._observing_set = set(self.observing_list)
        self._block_set = set(self.block_list)

    def _array(self, tuples):
        rows = [self._intern.code(t) for t in tuples]
        return np.array(rows, dtype=np.int64).reshape(len(rows), 3)

    def observing_array(self):
        if self._obs is None:
            self._obs = np.array(self._obs_rows, dtype=np.int64).reshape(len(self._obs_rows), 3)
        return self._obs

    def observe(self, t: HostTuple):
        """Append to Observing_List; already-present tuples are a no-op."""
        if t in self._observing_set:
            return False
        self._observing_set.add(t)
        self.observing_list.append(t)
        self._obs_rows.append(self._intern.code(t))
        self._obs = None
        return True

    def block(self, t: HostTuple):
        if t in self._block_set:
            return False
        self._block_set.add(t)
        self.block_list.append(t)
        return True

    def is_known(self, t: HostTuple):
        return t in self._network_set

    def code(self, t: HostTuple):
        return np.array(self._intern.code(t), dtype=np.int64)


def controller_mitigate(pkt_in: PacketInMessage, state: ControllerState) -> list:
    """Decide one Packet-In and update the controller lists.

    For every switch and every Observing_List entry, the source is compared
    against the entry and the destination against every Network_List entry;
    the verdict is taken after the scan:

    - source fully matches an Observing_List entry: block it at the
      emitting switch and record it in Block_List;
    - destination matches no Network_List entry on all of ip, mac and
      attach point: record the source in Observing_List, drop the packet;
    - otherwise allow the flow and release the packet.

    ``state.comparisons`` accumulates the destination-vs-entry comparisons.
    Switch-side effects (rule installation) are left to the caller.
    """
    branch, comparisons = kernels.nested_scan(
        state.code(pkt_in.src), state.code(pkt_in.dest), state.observing_array(), state._net, len(state.switches))
    state.comparisons += int(comparisons)
    if branch == kernels.BRANCH_BLOCK:
        state.block(pkt_in.src)
        return [Action(INSTALL_PKT_BLOCKING, pkt_in.switch, pkt_in.src), Action(APPEND_BLOCK_LIST, None, pkt_in.src)]
    if branch == kernels.BRANCH_OBSERVE:
        state.observe(pkt_in.src)
        return [Action(APPEND_OBSERVING_LIST, None, pkt_in.src), Action(DROP_PENDING, pkt_in.switch, None)]
    return [Action(INSTALL_ALLOW, pkt_in.switch, pkt_in.flow), Action(FORWARD_PENDING, pkt_in.switch, None)]


def controller_forward_only(pkt_in: PacketInMessage, state: ControllerState) -> list:
    """Plain reactive policy with mitigation disabled: allow known destinations, drop the rest."""
    if state.is_known(pkt_in.dest):
        return [Action(INSTALL_ALLOW, pkt_in.switch, pkt_in.flow), Action(FORWARD_PENDING, pkt_in.switch, None)]
    return [Action(DROP_PENDING, pkt_in.switch, None)]
