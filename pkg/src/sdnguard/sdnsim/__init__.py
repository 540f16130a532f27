"""Discrete-event SDN data/control plane with controller-side mitigation."""
from .controller import (Action, ControllerState, FlowMatch, PacketInMessage, controller_forward_only,
                         controller_mitigate)
from .simulator import (Disposition, Rule, SimConfig, SimPacket, SimReport, Simulator, SwitchState, mirror_flows,
                        read_feed, resolve_feed, run_scenario, switch_handle_packet)
from .topology import (HostTuple, Network, TopologyError, TopologySpec, build_topology, default_topology,
                       host_mac, read_topology, write_topology)
