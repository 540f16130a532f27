"""Pure numpy/Python versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

BRANCH_BLOCK = 0
BRANCH_OBSERVE = 1
BRANCH_ALLOW = 2


def segment_stats(ts, size, offsets):
    ts = np.asarray(ts, dtype=np.float64)
    size = np.asarray(size, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    m = len(offsets) - 1
    if m == 0:
        empty = np.zeros(0)
        return empty, empty.copy(), empty.copy(), empty.copy(), empty.copy()
    starts = offsets[:-1]
    ends = offsets[1:]
    count = (ends - starts).astype(np.float64)
    nbytes = np.add.reduceat(size, starts)
    duration = ts[ends - 1] - ts[starts]

    seg = np.repeat(np.arange(m), ends - starts)
    gaps = np.zeros_like(ts)
    gaps[1:] = ts[1:] - ts[:-1]
    gaps[starts] = 0.0
    iat_sum = np.add.reduceat(gaps, starts)
    n_gaps = count - 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        iat_mean = np.where(n_gaps > 0, iat_sum / np.maximum(n_gaps, 1.0), 0.0)
    dev = gaps - iat_mean[seg]
    dev[starts] = 0.0
    ss = np.add.reduceat(dev * dev, starts)
    iat_std = np.where(n_gaps > 0, np.sqrt(ss / np.maximum(n_gaps, 1.0)), 0.0)
    return duration, count, nbytes, iat_mean, iat_std


def _xlogx(v):
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] * np.log(v[pos])
    return out


def best_split(x, y, n_classes):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(x)
    if n < 2:
        return np.inf, -1
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]          # counts of y[:i] for i = 1..n-1
    right = left[-1] + onehot[-1] - left
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    imp = (_xlogx(nl) - _xlogx(left).sum(axis=1) + _xlogx(nr) - _xlogx(right).sum(axis=1)) / n
    valid = x[1:] > x[:-1]
    if not valid.any():
        return np.inf, -1
    imp = np.where(valid, imp, np.inf)
    best = imp.min()
    cut = int(np.flatnonzero(imp <= best + 1e-12)[0])
    return float(imp[cut]), cut + 1


def nested_scan(src, dst, observing, network, n_switches):
    src = tuple(int(v) for v in src)
    dst = tuple(int(v) for v in dst)
    observing = [tuple(int(v) for v in row) for row in observing]
    network = [tuple(int(v) for v in row) for row in network]
    comparisons = 0
    full = False
    if not observing:
        for entry in network:
            comparisons += 1
            if entry == dst:
                full = True
                break
        return (BRANCH_ALLOW if full else BRANCH_OBSERVE), comparisons
    for _ in range(n_switches):
        for obs in observing:
            if obs == src:
                return BRANCH_BLOCK, comparisons
            for entry in network:
                comparisons += 1
                if entry == dst:
                    full = True
                    break
    return (BRANCH_ALLOW if full else BRANCH_OBSERVE), comparisons
