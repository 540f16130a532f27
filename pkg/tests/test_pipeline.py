import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdnguard import trafficgen
from sdnguard.flowkit import ActivityFlow, Label
from sdnguard.gcn import Hyperparams
from sdnguard.netgraph import TrafficGraph
from sdnguard.pipeline import (
    Dataset, FeatureScaler, PipelineConfig, SplitError, SplitSpec, StageError, baseline_random_forest, detect,
    identify, make_split, run_two_layer, vary_training_size,
)

FAST = Hyperparams(hidden_width=16, epochs=100, seed=0)


def separable_graph(seed=0, per_class=None):
    """Nodes with disjoint feature supports per class; edges only inside a class."""
    per_class = per_class or {Label.Benign: 30, Label.SlowDDoS: 15, Label.FastDDoS: 15}
    rng = np.random.default_rng(seed)
    nodes, labels = [], []
    for k, (label, count) in enumerate(per_class.items()):
        for i in range(count):
            x = rng.uniform(0, 1, size=8) + 10.0 * k
            nodes.append(ActivityFlow((f"10.0.{k}.{i + 1}", 1000), x, 1, label))
            labels.append(int(label))
    n = len(nodes)
    labels = np.array(labels)
    A = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if labels[i] == labels[j] and rng.random() < 0.2:
                A[i, j] = A[j, i] = 1.0
    X = np.stack([f.feature_vector for f in nodes])
    return TrafficGraph(nodes, X, A, labels)


def test_fixed_sampling_exact_counts_and_disjoint():
    classes = np.array([0] * 10 + [1] * 6)
    train, test = make_split(classes, SplitSpec("FixedSampling", per_class=4, seed=1))
    assert (train & classes.astype(bool)).sum() == 4 and (train & ~classes.astype(bool)).sum() == 4
    assert not np.any(train & test) and np.all(train | test)
    with pytest.raises(SplitError):
        make_split(classes, SplitSpec("FixedSampling", per_class=7))


def test_fractional_splits_leave_a_test_node_per_class():
    classes = np.array([0, 0, 1, 1, 1, 1, 1, 1, 1, 1])
    train, test = make_split(classes, SplitSpec("Ratio", train_fraction=0.99))
    assert test[classes == 0].sum() == 1 and test[classes == 1].sum() == 1
    train, _ = make_split(classes, SplitSpec("SmallTrain", small_fraction=0.05))
    assert train[classes == 0].sum() == 1 and train[classes == 1].sum() == 1


def test_fixed_sampling_sets_are_nested():
    classes = np.array([0] * 40 + [1] * 40)
    small, _ = make_split(classes, SplitSpec("FixedSampling", per_class=5, seed=3))
    big, _ = make_split(classes, SplitSpec("FixedSampling", per_class=20, seed=3))
    assert np.all(big[small])


@given(st.lists(st.integers(0, 3), min_size=2, max_size=80), st.integers(0, 1000),
       st.sampled_from(["Ratio", "SmallTrain"]))
@settings(max_examples=100, deadline=None)
def test_split_disjointness(classes, seed, mode):
    classes = np.array(classes)
    train, test = make_split(classes, SplitSpec(mode, seed=seed))
    assert not np.any(train & test)
    assert np.all(train | test)


def test_scaler_uses_training_rows_only():
    X = np.array([[0.0], [np.e - 1], [1e9]])
    s = FeatureScaler("log1p").fit(X, [True, True, False])
    np.testing.assert_allclose(s.apply(X)[:2, 0], [-1.0, 1.0])
    with pytest.raises(ValueError):
        FeatureScaler("sqrt").fit(X, [True, True, True])


def test_detect_on_separable_graph():
    g = separable_graph()
    res = detect(g, FAST, SplitSpec("Ratio", train_fraction=0.5, seed=2))
    assert res.metrics.accuracy >= 0.99
    assert np.array_equal(res.predictions[res.train_mask], g.binary_labels()[res.train_mask])


def test_detect_requires_both_classes():
    g = separable_graph(per_class={Label.Benign: 10})
    with pytest.raises(SplitError, match="attack"):
        detect(g, FAST)


def test_detect_eval_mask_must_avoid_training_nodes():
    g = separable_graph()
    with pytest.raises(SplitError):
        detect(g, FAST, SplitSpec(seed=1), eval_mask=np.ones(g.n, dtype=bool))


def test_identify_separable_attack_classes():
    g = separable_graph()
    flagged = np.flatnonzero(g.binary_labels() == 1)
    res = identify(g, flagged, FAST, SplitSpec("Ratio", train_fraction=0.5, seed=4))
    assert res.classes == [int(Label.SlowDDoS), int(Label.FastDDoS)]
    assert res.metrics.f1 >= 0.95


def test_identify_excludes_false_positives_from_training_and_metrics():
    g = separable_graph()
    flagged = np.concatenate([[0, 1], np.flatnonzero(g.binary_labels() == 1)])
    res = identify(g, flagged, FAST, SplitSpec("Ratio", train_fraction=0.5, seed=4))
    # layer 2 only ever labels nodes layer 1 flagged
    assert res.nodes.tolist() == sorted(flagged.tolist())
    fp = np.isin(res.nodes, [0, 1])
    assert not res.train_mask[fp].any() and not res.test_mask[fp].any()
    assert Label.Benign not in res.metrics.labels
    # a flagged benign node still gets an attack class: it passed layer 1
    assert all(Label(int(p)).is_attack for p in res.predictions)


def test_identify_single_class_is_degenerate():
    g = separable_graph(per_class={Label.Benign: 5, Label.FastDDoS: 6})
    res = identify(g, np.flatnonzero(g.binary_labels() == 1), FAST)
    assert res.metrics.degenerate
    assert set(res.predictions.tolist()) == {int(Label.FastDDoS)}


def test_baseline_forest_with_masks():
    g = separable_graph()
    y = g.binary_labels()
    train, test = make_split(y, SplitSpec(seed=1))
    pred, m = baseline_random_forest(g.X, y, (train, test), n_trees=10, positive_class=1, label_set=[0, 1])
    assert m.accuracy == 1.0 and len(pred) == test.sum()


def small_scenario(seed=0):
    cfg = trafficgen.ScenarioConfig(
        duration=30, seed=seed, benign_hosts=8, victims=2,
        attackers={"SlowDDoS": 2, "FastDDoS": 1, "SlowDcDDoS": 2, "FastDcDDoS": 1},
        overrides={v: {"port_hop_interval": 2.0, "rate_range": (1000.0, 1500.0)} if v.startswith("Fast")
                   else {"port_hop_interval": 2.0} for v in ("SlowDDoS", "FastDDoS", "SlowDcDDoS", "FastDcDDoS")},
    )
    trace, truth = trafficgen.gen_scenario(cfg)
    return Dataset.from_packets(trace), truth


SMALL_CFG = PipelineConfig(detect_hyperparams=FAST, identify_hyperparams=FAST, baseline_rf=True, rf_trees=10)


@pytest.fixture(scope="module")
def scenario_report():
    ds, truth = small_scenario()
    return ds, run_two_layer(ds, SMALL_CFG)


def test_two_layer_report_structure(scenario_report):
    _, rep = scenario_report
    text = rep.to_text()
    for section in ("[config]", "[seeds]", "[summary]", "[layer1]", "[layer2]", "[layer1.rf]", "[suspicious]"):
        assert section in text
    assert rep.metrics_csv().splitlines()[0] == "stage,algorithm,class,accuracy,f1"
    assert {r[2] for r in rep.metric_rows() if r[0] == "layer2" and r[1] == "gcn"} >= {"all"}


def test_suspicious_nodes_carry_attack_labels(scenario_report):
    _, rep = scenario_report
    assert rep.suspicious
    assert all(Label[lab].is_attack for _, _, lab in rep.suspicious)


def test_two_layer_is_deterministic(scenario_report):
    ds, rep = scenario_report
    again = run_two_layer(ds, SMALL_CFG)
    assert again.to_text() == rep.to_text()
    assert again.metrics_csv() == rep.metrics_csv()


def test_seed_changes_component_seeds():
    a = PipelineConfig(seed=1).seeded()
    b = PipelineConfig(seed=2).seeded()
    assert a.detect_hyperparams.seed != b.detect_hyperparams.seed
    assert a.detect_split.seed != a.identify_split.seed


def test_hypergcn_model_runs():
    ds, _ = small_scenario(1)
    rep = run_two_layer(ds, PipelineConfig(model="hypergcn", detect_hyperparams=FAST, identify_hyperparams=FAST))
    assert rep.metric_rows()[0][1] == "hypergcn"
    assert 0.0 <= rep.layer1.f1 <= 1.0


def test_stage_errors_name_the_stage():
    g_nodes = Dataset([], "empty")
    with pytest.raises(StageError) as info:
        run_two_layer(g_nodes, SMALL_CFG)
    assert info.value.stage in ("characterize", "detect")


def test_vary_training_size_skips_degenerate_sizes(caplog):
    g = separable_graph(per_class={Label.Benign: 40, Label.FastDDoS: 40})
    with caplog.at_level(logging.WARNING):
        rows = vary_training_size(g, [0, 5, 10, 40], PipelineConfig(detect_hyperparams=FAST))
    assert [r["size"] for r in rows] == [5, 10]
    assert "skipping training size 0" in caplog.text
    assert "skipping training size 40" in caplog.text
    assert all(r["f1"] >= 0.95 for r in rows)
