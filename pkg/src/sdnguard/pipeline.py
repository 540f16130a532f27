"""Two-layer detect/identify pipeline, splits, the forest baseline and reports."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import flowkit, gcn, netgraph
from ._rng import substream
from .flowkit import Label
from .forest import RandomForest
from .gcn import Hyperparams
from .metrics import Metrics, evaluate

logger = logging.getLogger(__name__)

SPLIT_MODES = ("FixedSampling", "Ratio", "SmallTrain")


class SplitError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "Ratio"
    per_class: int = 20000
    train_fraction: float = 0.8
    small_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise ValueError(f"split mode must be one of {SPLIT_MODES}, got {self.mode!r}")


def make_split(classes, spec: SplitSpec, candidates=None):
    """Disjoint (train, test) masks over ``candidates``, stratified per class.

    FixedSampling takes exactly ``per_class`` nodes of every class (error
    when a class is smaller); the fractional modes keep at least one node
    of each class on both sides whenever the class has two or more nodes.
    """
    classes = np.asarray(classes)
    n = len(classes)
    candidates = np.ones(n, dtype=bool) if candidates is None else np.asarray(candidates, dtype=bool)
    rng = substream(spec.seed, "split")
    train = np.zeros(n, dtype=bool)
    for c in np.unique(classes[candidates]):
        pool = np.flatnonzero(candidates & (classes == c))
        if spec.mode == "FixedSampling":
            k = spec.per_class
            if k > len(pool):
                raise SplitError(f"class {c} has {len(pool)} nodes, {k} requested")
        else:
            frac = spec.train_fraction if spec.mode == "Ratio" else spec.small_fraction
            k = max(1, int(round(frac * len(pool))))
            if len(pool) >= 2:
                k = min(k, len(pool) - 1)
        train[rng.permutation(pool)[:k]] = True
    test = candidates & ~train
    return train, test


@dataclass
class FeatureScaler:
    """Optional log1p compression followed by z-scoring with training-row statistics."""
    transform: str = "log1p"
    mean: np.ndarray = None
    std: np.ndarray = None

    def _pre(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.transform == "log1p":
            return np.sign(X) * np.log1p(np.abs(X))
        if self.transform == "none":
            return X
        raise ValueError(f"unknown feature transform {self.transform!r}")

    def fit(self, X, rows):
        Z = self._pre(X)[np.asarray(rows, dtype=bool)]
        self.mean = Z.mean(axis=0)
        std = Z.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)
        return self

    def apply(self, X):
        return (self._pre(X) - self.mean) / self.std


def graph_propagation(graph):
    """Propagation operator from the graph's own adjacency."""
    A_hat = netgraph.normalized_adjacency(graph.A)
    return lambda Xs: A_hat


def hypergraph_propagation(hypergraph: netgraph.Hypergraph):
    """Propagation operator from the hypergraph expansion of the (scaled) features."""
    return lambda Xs: netgraph.normalized_adjacency(netgraph.hypergraph_expand(hypergraph, Xs))


@dataclass
class StageResult:
    predictions: np.ndarray
    metrics: Metrics
    train_mask: np.ndarray
    test_mask: np.ndarray
    classes: list = field(default_factory=list)
    model: object = None
    nodes: np.ndarray = None


def _fit_predict(graph, y, classes, train, hyperparams, propagation, transform):
    scaler = FeatureScaler(transform).fit(graph.X, train)
    Xs = scaler.apply(graph.X)
    A_hat = propagation(Xs)
    model = gcn.train(graph, A_hat, hyperparams, labels=y, train_mask=train, n_classes=len(classes), X=Xs)
    return gcn.predict(model, Xs, A_hat), model


def detect(graph: netgraph.TrafficGraph, hyperparams: Hyperparams = Hyperparams(), split: SplitSpec = SplitSpec(),
           propagation: Callable | None = None, transform="log1p", eval_mask=None) -> StageResult:
    """Layer 1: benign (0) vs attack (1) on every node of the graph.

    Training nodes keep their known label; every other node is predicted.
    Metrics cover the test mask (or ``eval_mask``, which must avoid the
    training nodes) with attack as the positive class.
    """
    y = graph.binary_labels()
    train, test = make_split(y, split)
    if eval_mask is not None:
        eval_mask = np.asarray(eval_mask, dtype=bool)
        if np.any(eval_mask & train):
            raise SplitError("evaluation mask overlaps the training mask")
        test = eval_mask
    present = set(np.unique(y[train]).tolist())
    if present != {0, 1}:
        missing = "benign" if 0 not in present else "attack"
        raise SplitError(f"class {missing!r} is absent from the training mask")
    if not test.any():
        raise SplitError("test mask is empty")
    propagation = propagation or graph_propagation(graph)
    pred, model = _fit_predict(graph, y, [0, 1], train, hyperparams, propagation, transform)
    pred = np.where(train, y, pred)
    metrics = evaluate(pred[test], y[test], positive_class=1, labels=[0, 1])
    return StageResult(pred, metrics, train, test, [0, 1], model, np.arange(graph.n))


def identify(graph: netgraph.TrafficGraph, detected_malicious, hyperparams: Hyperparams = Hyperparams(),
             split: SplitSpec = SplitSpec(), propagation_for: Callable | None = None,
             transform="log1p") -> StageResult:
    """Layer 2: attack class of each node flagged by layer 1.

    Works on the subgraph induced by ``detected_malicious`` (benign nodes
    and their edges are removed, the adjacency is renormalized). Nodes whose
    true label is benign (layer-1 false positives) are predicted but kept
    out of training and metrics. ``predictions`` holds Label values aligned
    with ``nodes`` (global indices).
    """
    idx = np.asarray(sorted(int(i) for i in detected_malicious), dtype=np.int64)
    if len(idx) == 0:
        raise ValueError("no malicious nodes to identify")
    sub = graph.subgraph(idx)
    is_attack = sub.labels >= int(Label.DDoS)
    classes = sorted(set(sub.labels[is_attack].tolist()))
    if len(classes) <= 1:
        const = classes[0] if classes else int(Label.DDoS)
        pred = np.full(len(idx), const, dtype=np.int64)
        cm = np.array([[int(is_attack.sum())]], dtype=np.int64)
        metrics = Metrics(1.0 if classes else 0.0, 1.0 if classes else 0.0, cm, [const], {const: 1.0}, "macro",
                          degenerate=True)
        empty = np.zeros(len(idx), dtype=bool)
        return StageResult(pred, metrics, empty, empty.copy(), classes, None, idx)
    pos = {c: k for k, c in enumerate(classes)}
    y = np.array([pos.get(int(l), 0) for l in sub.labels], dtype=np.int64)
    train, test = make_split(np.where(is_attack, sub.labels, -1), split, candidates=is_attack)
    if not test.any():
        raise SplitError("identification test mask is empty")
    propagation = propagation_for(sub, idx) if propagation_for else graph_propagation(sub)
    pred_k, model = _fit_predict(sub, y, classes, train, hyperparams, propagation, transform)
    pred_k = np.where(train, y, pred_k)
    pred = np.array([classes[k] for k in pred_k], dtype=np.int64)
    metrics = evaluate(pred[test], sub.labels[test], labels=classes)
    return StageResult(pred, metrics, train, test, classes, model, idx)


def baseline_random_forest(features, labels, split, n_trees=100, max_depth=3, seed=32,
                           positive_class=None, label_set=None):
    """Forest trained on the tabular features alone.

    ``split`` is a SplitSpec or an explicit ``(train_mask, test_mask)`` pair.
    Returns (predictions on the test rows, Metrics).
    """
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if isinstance(split, SplitSpec):
        train, test = make_split(labels, split)
    else:
        train, test = (np.asarray(m, dtype=bool) for m in split)
    classes = sorted(set(labels[train].tolist()) | set(label_set or []))
    pos = {c: k for k, c in enumerate(classes)}
    forest = RandomForest(n_trees, max_depth, seed).fit(X[train], [pos[c] for c in labels[train]], len(classes))
    pred = np.array([classes[k] for k in forest.predict(X[test])], dtype=np.int64)
    metrics = evaluate(pred, labels[test], positive_class=positive_class, labels=label_set or None)
    return pred, metrics


# --- orchestration ------------------------------------------------------------

def derive_seed(seed, name):
    return int(substream(seed, name).integers(0, 2**31 - 1))


@dataclass(frozen=True)
class PipelineConfig:
    model: str = "gcn"
    detect_hyperparams: Hyperparams = Hyperparams()
    identify_hyperparams: Hyperparams = Hyperparams()
    detect_split: SplitSpec = SplitSpec(mode="Ratio", train_fraction=0.8)
    identify_split: SplitSpec = SplitSpec(mode="Ratio", train_fraction=0.8)
    noflow_mode: str = "SampleBenign"
    transform: str = "log1p"
    baseline_rf: bool = False
    rf_trees: int = 100
    rf_depth: int = 3
    rf_seed: int = 32
    seed: int = 0

    def seeded(self):
        """Copy with every component seed expanded from ``seed``."""
        s = self.seed
        return replace(
            self,
            detect_hyperparams=replace(self.detect_hyperparams, seed=derive_seed(s, "gcn/detect")),
            identify_hyperparams=replace(self.identify_hyperparams, seed=derive_seed(s, "gcn/identify")),
            detect_split=replace(self.detect_split, seed=derive_seed(s, "split/detect")),
            identify_split=replace(self.identify_split, seed=derive_seed(s, "split/identify")),
        )

    def echo(self):
        return _flatten(asdict(self))


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class Dataset:
    """Basic flows plus where they came from."""
    basic: list
    source: str = "packets"

    @classmethod
    def from_packets(cls, packets, source="packets"):
        return cls(flowkit.group_basic_flows(packets), source)

    @classmethod
    def from_flow_csv(cls, path, mapping=None):
        return cls(flowkit.read_flow_csv(path, mapping), f"flows:{path}")


@dataclass
class Characterized:
    basic: list
    nodes: list
    graph: netgraph.TrafficGraph
    hypergraph: netgraph.Hypergraph | None = None


def characterize(dataset: Dataset, config: PipelineConfig) -> Characterized:
    basic, nodes = flowkit.characterize(dataset.basic, config.noflow_mode, derive_seed(config.seed, "noflow"))
    graph = netgraph.build_graph(nodes, basic)
    hyper = netgraph.build_hypergraph(graph, basic) if config.model == "hypergcn" else None
    return Characterized(basic, nodes, graph, hyper)


def _propagations(ch: Characterized, config):
    if config.model == "gcn":
        return None, None
    if config.model != "hypergcn":
        raise ValueError(f"unknown model {config.model!r}")

    def for_sub(sub, idx):
        keep = {int(g): k for k, g in enumerate(idx)}
        edges = []
        for e in ch.hypergraph.hyperedges:
            members = tuple(sorted(keep[i] for i in e if i in keep))
            if len(members) >= 2:
                edges.append(members)
        return hypergraph_propagation(netgraph.Hypergraph(len(idx), tuple(edges)))

    return hypergraph_propagation(ch.hypergraph), for_sub


@dataclass
class ExperimentReport:
    config: dict
    seeds: dict
    summary: dict
    layer1: Metrics
    layer2: Metrics | None
    suspicious: list
    baselines: dict = field(default_factory=dict)

    def metric_rows(self):
        model = self.config.get("model", "gcn")
        rows = [("layer1", model, "all", self.layer1.accuracy, self.layer1.f1)]
        if self.layer2 is not None:
            rows.append(("layer2", model, "all", self.layer2.accuracy, self.layer2.f1))
            for lab, f1 in self.layer2.per_class_f1.items():
                rows.append(("layer2", model, Label(lab).name, "", f1))
        for name, m in self.baselines.items():
            stage, algo = name.split(".", 1)
            rows.append((stage, algo, "all", m.accuracy, m.f1))
            if stage == "layer2":
                for lab, f1 in m.per_class_f1.items():
                    rows.append((stage, algo, Label(lab).name, "", f1))
        return rows

    def metrics_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "algorithm", "class", "accuracy", "f1"])
        for stage, algo, cls, acc, f1 in self.metric_rows():
            w.writerow([stage, algo, cls, "" if acc == "" else repr(float(acc)), repr(float(f1))])
        return buf.getvalue()

    def suspicious_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["src_ip", "src_port", "label"])
        for ip, port, label in self.suspicious:
            w.writerow([ip, port, label])
        return buf.getvalue()

    def to_text(self):
        out = io.StringIO()
        out.write("# sdnguard experiment report\n")
        for section, values in (("config", self.config), ("seeds", self.seeds), ("summary", self.summary)):
            out.write(f"\n[{section}]\n")
            for k in sorted(values):
                out.write(f"{k} = {values[k]}\n")
        blocks = [("layer1", self.layer1, lambda v: ["benign", "attack"][v])]
        if self.layer2 is not None:
            blocks.append(("layer2", self.layer2, lambda v: Label(v).name))
        for name, m in self.baselines.items():
            fmt = (lambda v: ["benign", "attack"][v]) if name.startswith("layer1") else (lambda v: Label(v).name)
            blocks.append((name, m, fmt))
        for name, m, fmt in blocks:
            out.write(f"\n[{name}]\n")
            out.write(f"averaging = {m.averaging}\n")
            out.write(f"accuracy = {m.accuracy!r}\n")
            out.write(f"f1 = {m.f1!r}\n")
            out.write(f"degenerate = {m.degenerate}\n")
            out.write(f"\n[{name}.confusion]\n")
            names = [fmt(v) for v in m.labels]
            out.write("truth\\pred," + ",".join(names) + "\n")
            for i, row in enumerate(m.confusion_matrix):
                out.write(names[i] + "," + ",".join(str(int(v)) for v in row) + "\n")
        out.write("\n[suspicious]\n")
        out.write(self.suspicious_csv())
        return out.getvalue()


def run_two_layer(dataset: Dataset, config: PipelineConfig = PipelineConfig()) -> ExperimentReport:
    """characterize -> graph -> detect -> identify, with optional forest baselines."""
    cfg = config.seeded()
    try:
        ch = characterize(dataset, cfg)
    except Exception as exc:
        raise StageError("characterize", exc) from exc
    graph = ch.graph
    prop1, prop2 = _propagations(ch, cfg)
    try:
        l1 = detect(graph, cfg.detect_hyperparams, cfg.detect_split, prop1, cfg.transform)
    except Exception as exc:
        raise StageError("detect", exc) from exc

    flagged = np.flatnonzero(l1.predictions == 1)
    l2 = None
    suspicious = []
    if len(flagged):
        try:
            l2 = identify(graph, flagged, cfg.identify_hyperparams, cfg.identify_split, prop2, cfg.transform)
        except Exception as exc:
            raise StageError("identify", exc) from exc
        for g, lab in zip(l2.nodes, l2.predictions):
            ip, port = graph.nodes[int(g)].source
            suspicious.append((ip, int(port), Label(int(lab)).name))

    baselines = {}
    if cfg.baseline_rf:
        try:
            y = graph.binary_labels()
            _, m = baseline_random_forest(graph.X, y, (l1.train_mask, l1.test_mask), cfg.rf_trees, cfg.rf_depth,
                                          cfg.rf_seed, positive_class=1, label_set=[0, 1])
            baselines["layer1.rf"] = m
            if l2 is not None and l2.classes and len(l2.classes) > 1:
                sub_labels = graph.labels[l2.nodes]
                _, m2 = baseline_random_forest(graph.X[l2.nodes], sub_labels, (l2.train_mask, l2.test_mask),
                                               cfg.rf_trees, cfg.rf_depth, cfg.rf_seed, label_set=l2.classes)
                baselines["layer2.rf"] = m2
        except Exception as exc:
            raise StageError("baseline", exc) from exc

    summary = {
        "source": dataset.source,
        "basic_flows": len(ch.basic),
        "nodes": graph.n,
        "edges": int(np.count_nonzero(np.triu(graph.A, 1))),
        "attack_nodes": int(graph.binary_labels().sum()),
        "layer1_train": int(l1.train_mask.sum()),
        "layer1_test": int(l1.test_mask.sum()),
        "flagged": int(len(flagged)),
        "layer2_train": int(l2.train_mask.sum()) if l2 else 0,
        "layer2_test": int(l2.test_mask.sum()) if l2 else 0,
    }
    seeds = {
        "master": cfg.seed,
        "gcn.detect": cfg.detect_hyperparams.seed,
        "gcn.identify": cfg.identify_hyperparams.seed,
        "split.detect": cfg.detect_split.seed,
        "split.identify": cfg.identify_split.seed,
        "noflow": derive_seed(cfg.seed, "noflow"),
        "rf": cfg.rf_seed,
    }
    return ExperimentReport(config.echo(), seeds, summary, l1.metrics, l2.metrics if l2 else None,
                            suspicious, baselines)


def vary_training_size(dataset, sizes: Sequence[int], config: PipelineConfig = PipelineConfig()):
    """Layer-1 F1 with ``size`` training nodes per class, one row per usable size.

    ``dataset`` may be a Dataset or an already characterized graph. Sizes
    that are zero or leave no test node in some class are skipped with a
    warning. Training sets are nested (one seeded permutation cut at each
    size) and every size is scored on the same held-out nodes: those
    outside the largest training set.
    """
    cfg = config.seeded()
    graph = dataset if isinstance(dataset, netgraph.TrafficGraph) else characterize(dataset, cfg).graph
    y = graph.binary_labels()
    smallest = int(min((y == 0).sum(), (y == 1).sum()))
    usable = []
    for size in sizes:
        if size <= 0 or size >= smallest:
            logger.warning("skipping training size %s (smallest class has %d nodes)", size, smallest)
            continue
        usable.append(int(size))
    if not usable:
        return []
    largest = replace(cfg.detect_split, mode="FixedSampling", per_class=max(usable))
    held_out = make_split(y, largest)[1]
    rows = []
    for size in usable:
        split = replace(cfg.detect_split, mode="FixedSampling", per_class=size)
        res = detect(graph, cfg.detect_hyperparams, split, None, cfg.transform, eval_mask=held_out)
        row = {"size": int(size), "algorithm": "gcn", "accuracy": res.metrics.accuracy, "f1": res.metrics.f1}
        rows.append(row)
        if cfg.baseline_rf:
            _, m = baseline_random_forest(graph.X, y, (res.train_mask, held_out), cfg.rf_trees, cfg.rf_depth,
                                          cfg.rf_seed, positive_class=1, label_set=[0, 1])
            rows.append({"size": int(size), "algorithm": "rf", "accuracy": m.accuracy, "f1": m.f1})
    return rows
