"""Command-line entry point: generate, detect, simulate, report.

Exit status: 0 on success, 2 for user or configuration errors, 1 for
internal errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

from . import flowkit, pipeline, trafficgen
from .flowkit import PacketTable, SchemaError
from .gcn import Hyperparams
from .netgraph import GraphError
from .pipeline import PipelineConfig, SplitError, SplitSpec, StageError
from .sdnsim import simulator, topology

logger = logging.getLogger("sdnguard")

USER_ERRORS = (FileNotFoundError, IsADirectoryError, PermissionError, SchemaError, SplitError, GraphError,
               trafficgen.ScenarioError, topology.TopologyError)


class UsageError(Exception):
    pass


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _out_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")
    return path


def _echo(args, out, extra=None):
    """Config echo: the argument vector plus every resolved option.

    The output directory is left out so that replays into another directory
    produce identical files.
    """
    argv = list(args.argv)
    for i, a in enumerate(argv[:-1]):
        if a == "--out":
            argv[i + 1] = "<out>"
    argv = [("--out=<out>" if a.startswith("--out=") else a) for a in argv]
    options = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "argv", "out")}
    doc = {"command": args.command, "argv": argv, "options": options}
    if extra:
        doc["resolved"] = extra
    _write(os.path.join(out, "config_echo.json"), json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n")


# --- generate -----------------------------------------------------------------

def cmd_generate(args):
    if not os.path.isfile(args.scenario):
        raise UsageError(f"scenario file not found: {args.scenario}")
    cfg = trafficgen.read_scenario(args.scenario)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = _out_dir(args.out)
    trace, truth = trafficgen.gen_scenario(cfg)
    trace.write_csv(os.path.join(out, "trace.csv"), with_macs=True)
    truth.write_csv(os.path.join(out, "truth.csv"))
    _echo(args, out, {"seed": cfg.seed, "duration": cfg.duration, "packets": len(trace)})
    print(f"wrote {len(trace)} packets and {len(truth.rows)} hosts to {out}")
    return 0


# --- detect -------------------------------------------------------------------

def _split(mode, fraction, per_class, small):
    return SplitSpec(mode=mode, per_class=per_class, train_fraction=fraction, small_fraction=small)


def _pipeline_config(args):
    hp = dict(learning_rate=args.lr, hidden_width=args.hidden, epochs=args.epochs, weight_decay=args.weight_decay,
              dropout=args.dropout)
    return PipelineConfig(
        model=args.model,
        detect_hyperparams=Hyperparams(layers=args.layers, **hp),
        identify_hyperparams=Hyperparams(layers=args.identify_layers, **hp),
        detect_split=_split(args.split, args.train_fraction, args.per_class, args.small_fraction),
        identify_split=_split(args.identify_split, args.train_fraction, args.per_class, args.small_fraction),
        noflow_mode=args.noflow,
        transform=args.transform,
        baseline_rf="rf" in (args.baseline or []),
        seed=args.seed,
    )


def _dataset(args):
    if bool(args.packets) == bool(args.flows):
        raise UsageError("give exactly one of --packets or --flows")
    if args.packets:
        return pipeline.Dataset.from_packets(PacketTable.read_csv(args.packets), f"packets:{args.packets}")
    mapping = flowkit.ColumnMapping.from_file(args.columns) if args.columns else None
    return pipeline.Dataset.from_flow_csv(args.flows, mapping)


def cmd_detect(args):
    cfg = _pipeline_config(args)
    out = _out_dir(args.out)
    dataset = _dataset(args)
    if args.vary_sizes:
        sizes = [int(s) for s in args.vary_sizes.split(",") if s.strip()]
        rows = pipeline.vary_training_size(dataset, sizes, cfg)
        buf = ["size,algorithm,accuracy,f1"]
        buf += [f"{r['size']},{r['algorithm']},{r['accuracy']!r},{r['f1']!r}" for r in rows]
        _write(os.path.join(out, "vary.csv"), "\n".join(buf) + "\n")
        metric_lines = ["stage,algorithm,class,accuracy,f1"]
        metric_lines += [f"layer1@{r['size']},{r['algorithm']},all,{r['accuracy']!r},{r['f1']!r}" for r in rows]
        _write(os.path.join(out, "metrics.csv"), "\n".join(metric_lines) + "\n")
        _echo(args, out, {"config": cfg.echo()})
        print(f"{len(rows)} training-size rows written to {out}")
        return 0
    report = pipeline.run_two_layer(dataset, cfg)
    _write(os.path.join(out, "report.txt"), report.to_text())
    _write(os.path.join(out, "metrics.csv"), report.metrics_csv())
    _write(os.path.join(out, "suspicious.csv"), report.suspicious_csv())
    _echo(args, out, {"config": report.config, "seeds": report.seeds})
    line = f"layer1 f1={report.layer1.f1:.4f}"
    if report.layer2 is not None:
        line += f" layer2 macro-f1={report.layer2.f1:.4f}"
    print(line)
    return 0


# --- simulate -----------------------------------------------------------------

def _network(args, trace, truth=None):
    if args.topology:
        if not os.path.isfile(args.topology):
            raise UsageError(f"topology file not found: {args.topology}")
        return topology.build_topology(topology.read_topology(args.topology))
    if truth is not None:
        ips = [r[0] for r in truth.rows]
    else:
        ips = sorted({int(v) for v in trace.src_ip} | {int(v) for v in trace.dst_ip})
        ips = [flowkit.int_to_ip(v) for v in ips]
    return topology.build_topology(topology.default_topology(ips, args.switches))


def cmd_simulate(args):
    if bool(args.trace) == bool(args.scenario):
        raise UsageError("give exactly one of --trace or --scenario")
    truth = None
    if args.scenario:
        if not os.path.isfile(args.scenario):
            raise UsageError(f"scenario file not found: {args.scenario}")
        cfg = trafficgen.read_scenario(args.scenario)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        trace, truth = trafficgen.gen_scenario(cfg)
    else:
        trace = PacketTable.read_csv(args.trace).sorted_by_time()
        if not trace.has_macs:
            raise UsageError(f"{args.trace}: simulator traces need src_mac and dst_mac columns")
    out = _out_dir(args.out)
    network = _network(args, trace, truth)
    feed = simulator.read_feed(args.detector_feed) if args.detector_feed else None
    config = simulator.SimConfig(args.mitigation == "on", args.rate_limit, args.idle_timeout)
    report = simulator.run_scenario(network, trace, args.mitigation == "on", feed, args.feed_time, config)
    report.write(os.path.join(out, "timeseries.csv"), os.path.join(out, "summary.txt"))
    _echo(args, out, {"switches": network.switches, "hosts": len(network.hosts)})
    s = report.summary
    print(f"overload={s['overload']} block_list={s['block_len']} forwarded={s['forwarded']} dropped={s['dropped']}")
    return 0


# --- report -------------------------------------------------------------------

def cmd_report(args):
    if not args.runs:
        raise UsageError("report needs at least one run directory")
    merged, vary, missing = [], [], []
    for run in args.runs:
        run_id = os.path.basename(os.path.normpath(run))
        path = os.path.join(run, "metrics.csv")
        if not os.path.isfile(path):
            missing.append(run)
            continue
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                merged.append({"run": run_id, **row})
        vpath = os.path.join(run, "vary.csv")
        if os.path.isfile(vpath):
            with open(vpath, newline="", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    vary.append({"run": run_id, **row})
    for run in missing:
        print(f"skipping {run}: no metrics.csv", file=sys.stderr)
    if not merged:
        raise UsageError("no run directory had a metrics.csv")
    out = _out_dir(args.out)
    fields = ["run", "stage", "algorithm", "class", "accuracy", "f1"]
    lines = [",".join(fields)] + [",".join(r.get(f, "") for f in fields) for r in merged]
    _write(os.path.join(out, "comparison.csv"), "\n".join(lines) + "\n")
    if vary:
        sizes = sorted({int(r["size"]) for r in vary})
        keys = sorted({(r["run"], r["algorithm"]) for r in vary})
        table = {(r["run"], r["algorithm"], int(r["size"])): r["f1"] for r in vary}
        lines = ["run,algorithm," + ",".join(str(s) for s in sizes)]
        for run_id, algo in keys:
            lines.append(f"{run_id},{algo}," + ",".join(table.get((run_id, algo, s), "") for s in sizes))
        _write(os.path.join(out, "training_size.csv"), "\n".join(lines) + "\n")
    print(f"merged {len(merged)} metric rows from {len(args.runs) - len(missing)} runs into {out}")
    return 0


# --- parser -------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="sdnguard", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a labelled packet trace from a scenario file")
    g.add_argument("--scenario", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("detect", help="two-layer detection and identification")
    d.add_argument("--packets", help="packet CSV")
    d.add_argument("--flows", help="external per-flow CSV")
    d.add_argument("--columns", help="column mapping INI for --flows")
    d.add_argument("--out", required=True)
    d.add_argument("--model", choices=("gcn", "hypergcn"), default="gcn")
    d.add_argument("--baseline", action="append", choices=("rf",))
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--split", choices=pipeline.SPLIT_MODES, default="Ratio")
    d.add_argument("--identify-split", choices=pipeline.SPLIT_MODES, default="Ratio")
    d.add_argument("--train-fraction", type=float, default=0.8)
    d.add_argument("--small-fraction", type=float, default=0.05)
    d.add_argument("--per-class", type=int, default=20000)
    d.add_argument("--epochs", type=int, default=200)
    d.add_argument("--lr", type=float, default=0.15)
    d.add_argument("--hidden", type=int, default=128)
    d.add_argument("--weight-decay", type=float, default=5e-4)
    d.add_argument("--dropout", type=float, default=0.5)
    d.add_argument("--layers", type=int, default=2)
    d.add_argument("--identify-layers", type=int, default=PipelineConfig().identify_hyperparams.layers)
    d.add_argument("--noflow", choices=("SampleBenign", "Zeros"), default="SampleBenign")
    d.add_argument("--transform", choices=("log1p", "none"), default="log1p")
    d.add_argument("--vary-sizes", help="comma-separated per-class training sizes")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("simulate", help="replay a trace through the SDN simulator")
    s.add_argument("--trace")
    s.add_argument("--scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--topology")
    s.add_argument("--switches", type=int, default=4)
    s.add_argument("--mitigation", choices=("on", "off"), default="on")
    s.add_argument("--detector-feed")
    s.add_argument("--feed-time", type=float, default=0.0)
    s.add_argument("--rate-limit", type=int, default=600)
    s.add_argument("--idle-timeout", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="merge metrics of finished runs")
    r.add_argument("runs", nargs="*")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc.cause, USER_ERRORS) else 1
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        logger.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
