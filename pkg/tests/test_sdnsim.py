import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdnguard import trafficgen
from sdnguard.flowkit import Label, PacketRecord, PacketTable, Protocol
from sdnguard.sdnsim import (
    ControllerState, Disposition, FlowMatch, HostTuple, PacketInMessage, Rule, SimConfig, SimPacket, Simulator,
    SwitchState, TopologyError, TopologySpec, build_topology, controller_mitigate, default_topology, host_mac,
    mirror_flows, read_feed, read_topology, resolve_feed, run_scenario, switch_handle_packet, write_topology,
)
from sdnguard.sdnsim.simulator import DROPPED, FORWARDED, PENDING, RuleTableFull

from oracles import naive_mitigate


def test_minimal_topology():
    net = build_topology(TopologySpec(["S1"], [], [("10.0.0.1", host_mac("10.0.0.1"), "S1", 1),
                                                   ("10.0.0.2", host_mac("10.0.0.2"), "S1", 2)], "S1"))
    assert [h.attach for h in net.network_list] == ["S1:1", "S1:2"]


def test_twenty_two_switch_topology():
    ips = [f"10.0.0.{i}" for i in range(1, 3)]
    net = build_topology(default_topology(ips, n_switches=22))
    assert len(net.switches) == 22
    assert net.path("S1", "S22") == [f"S{i}" for i in range(1, 23)]


@pytest.mark.parametrize("spec,match", [
    (TopologySpec(["S1"], [], [("10.0.0.1", "02:00:00:00:00:01", "S1", 1),
                               ("10.0.0.1", "02:00:00:00:00:02", "S1", 2)], "S1"), "duplicate host IP"),
    (TopologySpec(["S1", "S2"], [], [], "S1"), "disconnected"),
    (TopologySpec(["S1"], [], [("10.0.0.1", "02:00:00:00:00:01", "S9", 1)], "S1"), "unknown switch"),
    (TopologySpec(["S1"], [], [], "S2"), "gateway"),
    (TopologySpec(["S1"], [], [("10.0.0.1", "02:00:00:00:00:01", "S1", 0)], "S1"), "port"),
])
def test_topology_errors(spec, match):
    with pytest.raises(TopologyError, match=match):
        build_topology(spec)


def test_equal_length_paths_are_deterministic():
    spec = TopologySpec(["A", "B", "C", "D"], [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")], [], "A")
    assert build_topology(spec).path("A", "D") == ["A", "B", "D"]


def test_topology_file_round_trip(tmp_path):
    spec = default_topology(["10.0.0.1", "10.0.0.2", "10.0.0.3"], 2, capacity=10)
    write_topology(spec, tmp_path / "t.txt")
    back = read_topology(tmp_path / "t.txt")
    assert (back.switches, back.links, back.hosts, back.gateway, back.capacity) == (
        spec.switches, spec.links, spec.hosts, spec.gateway, spec.capacity)
    (tmp_path / "bad.txt").write_text("[switches]\nS1\n[hosts]\n10.0.0.1 02:00:00:00:00:01 S1\n[gateway]\nS1\n")
    with pytest.raises(TopologyError, match=":4"):
        read_topology(tmp_path / "bad.txt")


H1 = HostTuple("10.0.0.1", "02:00:0a:00:00:01", "S1:1")
H2 = HostTuple("10.0.0.2", "02:00:0a:00:00:02", "S1:2")
F12 = FlowMatch(H1, 1000, H2.ip, H2.mac, 80, 6)


def test_switch_semantics():
    sw = SwitchState("S1")
    assert switch_handle_packet(sw, SimPacket(H1, F12, 0.0)) is Disposition.PacketInEmitted
    sw.install(Rule("Allow", F12, 0.0))
    assert switch_handle_packet(sw, SimPacket(H1, F12, 0.1)) is Disposition.Forwarded
    sw.install(Rule("PktBlocking", H1, 0.2))
    before = sw.packet_in_count
    assert switch_handle_packet(sw, SimPacket(H1, F12, 0.3)) is Disposition.Dropped
    assert sw.packet_in_count == before


def test_rule_capacity_refuses_overflow():
    sw = SwitchState("S1", capacity=1)
    sw.install(Rule("Allow", F12, 0.0))
    with pytest.raises(RuleTableFull):
        sw.install(Rule("PktBlocking", H1, 0.0))
    assert len(sw) == 1


def state(observing=()):
    return ControllerState([H1, H2], ["S1", "S2"], list(observing))


def test_controller_branches():
    st_ = state([H1])
    acts = controller_mitigate(PacketInMessage(H1, H2, "S1", 0.0, F12), st_)
    assert [a.kind for a in acts] == ["InstallPktBlocking", "AppendBlockList"]
    assert st_.block_list == [H1]
    acts = controller_mitigate(PacketInMessage(H2, H1, "S1", 0.0), state())
    assert [a.kind for a in acts] == ["InstallAllow", "ForwardPending"]
    near = HostTuple(H1.ip, H1.mac, "S1:9")  # two of three fields match
    st_ = state()
    acts = controller_mitigate(PacketInMessage(H2, near, "S1", 0.0), st_)
    assert [a.kind for a in acts] == ["AppendObservingList", "DropPending"]
    assert st_.observing_list == [H2]


def test_duplicate_list_appends_are_noops():
    st_ = state()
    assert st_.observe(H1) and not st_.observe(H1)
    assert st_.block(H1) and not st_.block(H1)
    assert st_.observing_list == [H1] and st_.block_list == [H1]


host = st.builds(HostTuple, st.sampled_from(["10.0.0.1", "10.0.0.2"]), st.sampled_from(["m1", "m2"]),
                 st.sampled_from(["S1:1", "S2:1"]))


@given(st.lists(host, max_size=6), st.lists(host, min_size=1, max_size=6), host, host, st.integers(1, 4))
@settings(max_examples=300, deadline=None)
def test_controller_matches_naive_loop(observing, network, src, dest, k):
    switches = [f"S{i}" for i in range(k)]
    s = ControllerState(network, switches, list(observing))
    acts = controller_mitigate(PacketInMessage(src, dest, "S0", 0.0), s)
    branch, comparisons = naive_mitigate(src, dest, list(dict.fromkeys(observing)), network, switches)
    kind = {"block": "InstallPktBlocking", "observe": "AppendObservingList", "allow": "InstallAllow"}[branch]
    assert acts[0].kind == kind
    assert s.comparisons == comparisons


def trace_of(rows):
    recs = [PacketRecord(t, s.ip, sp, d.ip, dp, Protocol.TCP, 10, Label.Benign, s.mac, dmac or d.mac)
            for t, s, sp, d, dp, dmac in rows]
    return PacketTable.from_records(recs)


def tiny_network():
    return build_topology(TopologySpec(["S1", "S2"], [("S1", "S2")], [
        ("10.0.0.1", H1.mac, "S1", 1), ("10.0.0.2", H2.mac, "S1", 2),
        ("10.0.0.3", "02:00:0a:00:00:03", "S2", 1)], "S1"))


def test_allow_rule_reused_and_unknown_dest_observed():
    net = tiny_network()
    tr = trace_of([(0.0, H1, 5, H2, 80, None), (0.1, H1, 5, H2, 80, None),
                   (0.2, H2, 9, H1, 5, "06:00:00:00:00:99"), (0.3, H2, 9, H1, 5, "06:00:00:00:00:98")])
    sim = Simulator(net, tr, SimConfig(mitigation=True))
    rep = sim.finish()
    assert sim.disposition.tolist() == [FORWARDED, FORWARDED, DROPPED, DROPPED]
    assert rep.summary["packet_ins"] == 3
    # second forged packet from an observed source gets it blocked
    assert rep.summary["block_len"] == 1 and rep.block_log[0][1] == "S1"


def flood_trace(rate, duration=5.0, seed=0):
    cfg = trafficgen.ScenarioConfig(duration=duration, seed=seed, benign_hosts=6, victims=1,
                                    attackers={"FastDDoS": 1},
                                    overrides={"FastDDoS": {"rate_range": (rate, rate), "pacing": "fixed"}})
    trace, truth = trafficgen.gen_scenario(cfg)
    return build_topology(default_topology([r[0] for r in truth.rows], 3)), trace, truth


def test_overload_above_budget_and_clear_below():
    net, trace, _ = flood_trace(1600.0)
    rep = run_scenario(net, trace, mitigation_enabled=False)
    assert rep.summary["overload"] and rep.summary["peak_packet_in_rate"] >= 1600
    assert rep.summary["pending"] == 0  # queued excess is dropped at window end
    net, trace, _ = flood_trace(400.0)
    rep = run_scenario(net, trace, mitigation_enabled=False)
    assert not rep.summary["overload"]


def test_mitigation_blocks_flood_and_keeps_benign_traffic():
    net, trace, truth = flood_trace(1600.0, duration=8.0)
    off = run_scenario(net, trace, mitigation_enabled=False)
    on = run_scenario(net, trace, mitigation_enabled=True, detector_feed=truth.attack_sources, feed_time=2.0)
    assert max(on.series("packet_in_rate")[3:]) < 600
    attacker = truth.attack_sources[0]
    for ip, n in off.forwarded_by_source.items():
        if ip != attacker:
            assert on.forwarded_by_source[ip] >= n


def blocking_complete(rep):
    blocked_at = {}
    for t, switch, src in rep.block_log:
        blocked_at.setdefault((switch, src), t)
    return all(not ((sw, src) in blocked_at and t > blocked_at[(sw, src)]) for t, sw, src in rep.packet_in_log)


@pytest.mark.parametrize("seed", range(3))
def test_blocking_completeness(seed):
    net, trace, truth = flood_trace(1200.0, duration=4.0, seed=seed)
    rep = run_scenario(net, trace, True, truth.attack_sources, feed_time=1.0)
    assert rep.block_log
    assert blocking_complete(rep)


def test_mirror_conservation_and_purity():
    net, trace, _ = flood_trace(1600.0, duration=3.0)
    sim = Simulator(net, trace, SimConfig(mitigation=False))
    sim.run_until(1.5)
    a, disp = mirror_flows(sim, (0.5, 1.5))
    b, disp2 = mirror_flows(sim, (0.5, 1.5))
    assert a.equals(b) and np.array_equal(disp, disp2)
    n_fwd, n_drop, n_pend = ((disp == k).sum() for k in (FORWARDED, DROPPED, PENDING))
    assert len(a) == n_fwd + n_drop + n_pend
    assert n_pend > 0
    empty, _ = mirror_flows(sim, (2.0, 2.0))
    assert len(empty) == 0


def test_simulation_is_deterministic():
    net, trace, truth = flood_trace(1000.0, duration=3.0)
    a = run_scenario(net, trace, True, truth.attack_sources, 1.0)
    b = run_scenario(net, trace, True, truth.attack_sources, 1.0)
    assert a.to_csv() == b.to_csv() and a.summary_text() == b.summary_text()


def test_lists_are_monotone():
    net, trace, truth = flood_trace(800.0, duration=4.0)
    rep = run_scenario(net, trace, True, truth.attack_sources, 1.0)
    for col in ("observing_len", "block_len"):
        s = rep.series(col)
        assert all(x <= y for x, y in zip(s, s[1:]))


def test_trace_requirements():
    tr = trace_of([(1.0, H1, 5, H2, 80, None), (0.0, H1, 5, H2, 80, None)])
    with pytest.raises(ValueError, match="time-sorted"):
        Simulator(tiny_network(), tr)
    no_macs = PacketTable.from_records([PacketRecord(0.0, H1.ip, 5, H2.ip, 80, Protocol.TCP, 1, Label.Benign)])
    with pytest.raises(ValueError, match="mac"):
        Simulator(tiny_network(), no_macs)


def test_feed_resolution(tmp_path):
    net = tiny_network()
    assert resolve_feed(net, ["10.0.0.1", ("10.0.0.1", 5, "FastDDoS"), "10.9.9.9"]) == [net.by_ip["10.0.0.1"]]
    (tmp_path / "f.csv").write_text("src_ip,src_port,label\n10.0.0.2,5,SlowDDoS\n")
    assert read_feed(tmp_path / "f.csv") == [("10.0.0.2", "5", "SlowDDoS")]
