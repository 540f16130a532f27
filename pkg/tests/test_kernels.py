import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdnguard import _pykernels, kernels

from oracles import brute_best_split, packet_flow_features

compiled = pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")


def test_use_backend_switches_and_restores():
    before = kernels.backend()
    prev = kernels.use_backend("python")
    assert prev == before
    assert kernels.backend() == "python"
    kernels.use_backend(before)
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_segment_stats_three_packet_flow(backend):
    ts = np.array([0.0, 1.0, 2.0])
    size = np.array([100.0, 100.0, 100.0])
    dur, cnt, nb, mean, std = kernels.segment_stats(ts, size, np.array([0, 3], dtype=np.int64))
    assert dur.tolist() == [2.0]
    assert cnt.tolist() == [3.0]
    assert nb.tolist() == [300.0]
    assert mean.tolist() == [1.0]
    assert std.tolist() == [0.0]


def test_segment_stats_single_packet_has_zero_iat(backend):
    dur, cnt, nb, mean, std = kernels.segment_stats(np.array([5.0]), np.array([40.0]), np.array([0, 1], dtype=np.int64))
    assert (dur[0], cnt[0], mean[0], std[0]) == (0.0, 1.0, 0.0, 0.0)


segments = st.lists(
    st.lists(st.tuples(st.floats(0, 1e4, allow_nan=False), st.integers(0, 1500)), min_size=1, max_size=12),
    min_size=1, max_size=6,
)


@given(segments)
@settings(max_examples=150, deadline=None)
def test_segment_stats_matches_loop_oracle(segs):
    ts, size, offsets = [], [], [0]
    expected = []
    for seg in segs:
        seg = sorted(seg)
        ts += [t for t, _ in seg]
        size += [s for _, s in seg]
        offsets.append(len(ts))
        expected.append(packet_flow_features([t for t, _ in seg], [s for _, s in seg]))
    for name in kernels.available_backends():
        prev = kernels.use_backend(name)
        try:
            dur, cnt, nb, mean, std = kernels.segment_stats(np.array(ts), np.array(size, dtype=float),
                                                            np.array(offsets, dtype=np.int64))
        finally:
            kernels.use_backend(prev)
        for k, row in enumerate(expected):
            assert dur[k] == pytest.approx(row[0], rel=1e-12, abs=1e-12)
            assert cnt[k] == row[6]
            assert mean[k] == pytest.approx(row[4], rel=1e-9, abs=1e-9)
            assert std[k] == pytest.approx(row[5], rel=1e-6, abs=1e-9)


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 2)), min_size=1, max_size=30))
@settings(max_examples=200, deadline=None)
def test_best_split_matches_entropy_oracle(rows):
    rows.sort()
    x = np.array([float(a) for a, _ in rows])
    y = np.array([b for _, b in rows], dtype=np.int64)
    want_imp, want_cut = brute_best_split(x.tolist(), y.tolist(), 3)
    for name in kernels.available_backends():
        prev = kernels.use_backend(name)
        try:
            imp, cut = kernels.best_split(x, y, 3)
        finally:
            kernels.use_backend(prev)
        assert cut == want_cut
        if want_cut >= 0:
            assert imp == pytest.approx(want_imp, abs=1e-12)


def test_best_split_perfect_separation(backend):
    x = np.array([0.0, 1.0, 2.0, 10.0, 11.0, 12.0])
    y = np.array([0, 0, 0, 1, 1, 1], dtype=np.int64)
    imp, cut = kernels.best_split(x, y, 2)
    assert cut == 3
    assert imp == pytest.approx(0.0, abs=1e-15)


def test_best_split_constant_column(backend):
    imp, cut = kernels.best_split(np.ones(5), np.array([0, 1, 0, 1, 0], dtype=np.int64), 2)
    assert cut == -1 and imp == np.inf


def _codes(rows):
    return np.array(rows, dtype=np.int64).reshape(len(rows), 3)


def test_nested_scan_branches(backend):
    net = _codes([[1, 1, 1], [2, 2, 2], [3, 3, 3]])
    obs = _codes([[9, 9, 9]])
    assert kernels.nested_scan(np.array([9, 9, 9]), np.array([1, 1, 1]), obs, net, 2)[0] == kernels.BRANCH_BLOCK
    branch, comps = kernels.nested_scan(np.array([8, 8, 8]), np.array([1, 1, 7]), obs, net, 2)
    assert branch == kernels.BRANCH_OBSERVE
    assert comps == 2 * 1 * 3
    branch, comps = kernels.nested_scan(np.array([8, 8, 8]), np.array([2, 2, 2]), obs, net, 2)
    assert branch == kernels.BRANCH_ALLOW
    assert comps == 2 * 2  # stops at the matching entry on each pass


def test_nested_scan_empty_observing_scans_network_once(backend):
    net = _codes([[1, 1, 1], [2, 2, 2]])
    branch, comps = kernels.nested_scan(np.array([5, 5, 5]), np.array([4, 4, 4]), _codes([]), net, 8)
    assert (branch, comps) == (kernels.BRANCH_OBSERVE, 2)


@compiled
@given(st.integers(1, 8), st.integers(0, 10), st.integers(0, 12), st.integers(0, 2**31))
@settings(max_examples=200, deadline=None)
def test_nested_scan_backends_agree(k, i, l, seed):
    rng = np.random.default_rng(seed)
    obs = rng.integers(0, 3, size=(i, 3))
    net = rng.integers(0, 3, size=(l, 3))
    src = rng.integers(0, 3, size=3)
    dst = rng.integers(0, 3, size=3)
    a = kernels._compiled.nested_scan(src, dst, obs, net, k)
    b = _pykernels.nested_scan(src, dst, obs, net, k)
    assert tuple(map(int, a)) == tuple(map(int, b))
