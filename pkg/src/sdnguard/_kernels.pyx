# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Must stay numerically interchangeable with _pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()

BRANCH_BLOCK = 0
BRANCH_OBSERVE = 1
BRANCH_ALLOW = 2


def segment_stats(const double[:] ts, const double[:] size, const long long[:] offsets):
    cdef Py_ssize_t m = offsets.shape[0] - 1
    cdef Py_ssize_t s, i, lo, hi, n
    cdef double total, d, mean, acc, dur
    duration = np.zeros(m, dtype=np.float64)
    count = np.zeros(m, dtype=np.float64)
    nbytes = np.zeros(m, dtype=np.float64)
    iat_mean = np.zeros(m, dtype=np.float64)
    iat_std = np.zeros(m, dtype=np.float64)
    cdef double[:] duration_v = duration
    cdef double[:] count_v = count
    cdef double[:] nbytes_v = nbytes
    cdef double[:] iat_mean_v = iat_mean
    cdef double[:] iat_std_v = iat_std

    for s in range(m):
        lo = offsets[s]
        hi = offsets[s + 1]
        n = hi - lo
        count_v[s] = <double>n
        total = 0.0
        for i in range(lo, hi):
            total += size[i]
        nbytes_v[s] = total
        dur = ts[hi - 1] - ts[lo]
        duration_v[s] = dur
        if n < 2:
            continue
        acc = 0.0
        for i in range(lo + 1, hi):
            acc += ts[i] - ts[i - 1]
        mean = acc / (n - 1)
        iat_mean_v[s] = mean
        acc = 0.0
        for i in range(lo + 1, hi):
            d = (ts[i] - ts[i - 1]) - mean
            acc += d * d
        iat_std_v[s] = sqrt(acc / (n - 1))
    return duration, count, nbytes, iat_mean, iat_std


cdef inline double _xlogx(double v) nogil:
    if v <= 0.0:
        return 0.0
    return v * log(v)


def best_split(const double[:] x, const long long[:] y, int n_classes):
    """Scan cut points of a sorted column; returns (impurity, cut) or (inf, -1).

    The chosen cut is the first one whose impurity is within 1e-12 of the
    minimum, so ulp-level noise in ``log`` does not decide ties.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, k
    cdef double best = np.inf
    cdef Py_ssize_t best_cut = -1
    cdef double nl, nr, hl, hr
    left = np.zeros(n_classes, dtype=np.float64)
    right = np.zeros(n_classes, dtype=np.float64)
    imps = np.full(n, np.inf, dtype=np.float64)
    cdef double[:] lv = left
    cdef double[:] rv = right
    cdef double[:] iv = imps
    for i in range(n):
        rv[y[i]] += 1.0
    for i in range(1, n):
        lv[y[i - 1]] += 1.0
        rv[y[i - 1]] -= 1.0
        if x[i] <= x[i - 1]:
            continue
        nl = <double>i
        nr = <double>(n - i)
        hl = _xlogx(nl)
        hr = _xlogx(nr)
        for k in range(n_classes):
            hl -= _xlogx(lv[k])
            hr -= _xlogx(rv[k])
        iv[i] = (hl + hr) / n
        if iv[i] < best:
            best = iv[i]
    if best == np.inf:
        return best, -1
    for i in range(1, n):
        if iv[i] <= best + 1e-12:
            best_cut = i
            break
    return iv[best_cut], best_cut


def nested_scan(const long long[:] src, const long long[:] dst,
                const long long[:, :] observing, const long long[:, :] network,
                Py_ssize_t n_switches):
    cdef Py_ssize_t n_obs = observing.shape[0]
    cdef Py_ssize_t n_net = network.shape[0]
    cdef Py_ssize_t k, i, j
    cdef long long comparisons = 0
    cdef bint full = False
    if n_obs == 0:
        for j in range(n_net):
            comparisons += 1
            if (network[j, 0] == dst[0] and network[j, 1] == dst[1]
                    and network[j, 2] == dst[2]):
                full = True
                break
        return (BRANCH_ALLOW if full else BRANCH_OBSERVE), comparisons
    for k in range(n_switches):
        for i in range(n_obs):
            if (observing[i, 0] == src[0] and observing[i, 1] == src[1]
                    and observing[i, 2] == src[2]):
                return BRANCH_BLOCK, comparisons
            for j in range(n_net):
                comparisons += 1
                if (network[j, 0] == dst[0] and network[j, 1] == dst[1]
                        and network[j, 2] == dst[2]):
                    full = True
                    break
    return (BRANCH_ALLOW if full else BRANCH_OBSERVE), comparisons
