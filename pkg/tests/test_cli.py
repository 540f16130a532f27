import os

import pytest

from sdnguard.cli import main

SCENARIO = """\
[scenario]
duration = 20
seed = 1
benign_hosts = 6
victims = 2

[attackers]
SlowDDoS = 2
FastDDoS = 1
SlowDcDDoS = 2
FastDcDDoS = 1

[variant.SlowDDoS]
port_hop_interval = 2
[variant.SlowDcDDoS]
bursts_per_port = 1
[variant.FastDDoS]
rate_range = 1000, 1200
port_hop_interval = 2
[variant.FastDcDDoS]
rate_range = 1000, 1200
bursts_per_port = 1
"""

FAST = ["--epochs", "60", "--hidden", "16"]


def files(d):
    return {name: open(os.path.join(d, name), "rb").read() for name in sorted(os.listdir(d))}


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scenario = root / "scenario.ini"
    scenario.write_text(SCENARIO)
    assert main(["generate", "--scenario", str(scenario), "--out", str(root / "gen")]) == 0
    return root, scenario


def test_generate_outputs_and_determinism(generated):
    root, scenario = generated
    assert main(["generate", "--scenario", str(scenario), "--out", str(root / "gen2")]) == 0
    a, b = files(root / "gen"), files(root / "gen2")
    assert sorted(a) == ["config_echo.json", "trace.csv", "truth.csv"]
    assert a == b
    assert main(["generate", "--scenario", str(scenario), "--seed", "9", "--out", str(root / "gen3")]) == 0
    assert files(root / "gen3")["trace.csv"] != a["trace.csv"]


def test_detect_outputs_and_determinism(generated):
    root, _ = generated
    trace = str(root / "gen" / "trace.csv")
    for out in ("det1", "det2"):
        assert main(["detect", "--packets", trace, "--baseline", "rf", "--out", str(root / out)] + FAST) == 0
    a, b = files(root / "det1"), files(root / "det2")
    assert sorted(a) == ["config_echo.json", "metrics.csv", "report.txt", "suspicious.csv"]
    assert a == b
    assert b"layer2" in a["metrics.csv"] and b"layer1,rf" in a["metrics.csv"]


def test_detect_vary_sizes_and_report(generated):
    root, _ = generated
    trace = str(root / "gen" / "trace.csv")
    assert main(["detect", "--packets", trace, "--vary-sizes", "0,5,10", "--out", str(root / "vary")] + FAST) == 0
    vary = (root / "vary" / "vary.csv").read_text().splitlines()
    assert vary[0] == "size,algorithm,accuracy,f1" and [r.split(",")[0] for r in vary[1:]] == ["5", "10"]
    main(["detect", "--packets", trace, "--out", str(root / "det3")] + FAST)
    for out in ("rep1", "rep2"):
        assert main(["report", str(root / "det3"), str(root / "vary"), str(root / "nothing"),
                     "--out", str(root / out)]) == 0
    assert files(root / "rep1") == files(root / "rep2")
    assert (root / "rep1" / "training_size.csv").read_text().startswith("run,algorithm,5,10\n")


def test_simulate_outputs_and_determinism(generated):
    root, scenario = generated
    trace = str(root / "gen" / "trace.csv")
    feed = root / "feed.csv"
    feed.write_text("src_ip,src_port,label\n10.0.0.11,0,SlowDDoS\n")
    for out in ("sim1", "sim2"):
        assert main(["simulate", "--trace", trace, "--detector-feed", str(feed), "--feed-time", "2",
                     "--out", str(root / out)]) == 0
    a, b = files(root / "sim1"), files(root / "sim2")
    assert sorted(a) == ["config_echo.json", "summary.txt", "timeseries.csv"]
    assert a == b
    assert main(["simulate", "--scenario", str(scenario), "--mitigation", "off", "--out", str(root / "sim3")]) == 0


def test_exit_codes(tmp_path, generated):
    root, _ = generated
    assert main(["detect", "--packets", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 2
    assert main(["detect", "--out", str(tmp_path / "o")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,src_ip\n")
    assert main(["detect", "--packets", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["generate", "--scenario", str(tmp_path / "none.ini"), "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", "--out", str(tmp_path / "o")]) == 2
    assert main(["report", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 2
    assert main(["bogus"]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["generate", "--scenario", str(root / "scenario.ini"), "--out", str(blocker / "x")]) == 2


def test_module_entry_point():
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "sdnguard", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout
