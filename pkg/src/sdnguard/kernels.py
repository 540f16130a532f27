"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback in ``_pykernels`` is used. ``use_backend`` switches explicitly,
which the tests and the benchmark rely on.
"""
import logging

from . import _pykernels

logger = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on build
    _compiled = None

BRANCH_BLOCK = _pykernels.BRANCH_BLOCK
BRANCH_OBSERVE = _pykernels.BRANCH_OBSERVE
BRANCH_ALLOW = _pykernels.BRANCH_ALLOW

_impl = _compiled if _compiled is not None else _pykernels


def available_backends():
    return ["cython", "python"] if _compiled is not None else ["python"]


def backend():
    return "cython" if _impl is _compiled else "python"


def use_backend(name):
    """Select ``"cython"`` or ``"python"``; returns the previous backend name."""
    global _impl
    previous = backend()
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _impl = _compiled
    elif name == "python":
        _impl = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def segment_stats(ts, size, offsets):
    """Per-segment (duration, count, bytes, iat_mean, iat_std) over sorted packets."""
    return _impl.segment_stats(ts, size, offsets)


def best_split(x, y, n_classes):
    return _impl.best_split(x, y, n_classes)


def nested_scan(src, dst, observing, network, n_switches):
    return _impl.nested_scan(src, dst, observing, network, n_switches)
