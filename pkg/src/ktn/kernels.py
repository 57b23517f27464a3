"""Backend selection for the hot loops.

The compiled extension ``ktn._ckernels`` is used when it imports; otherwise
the numpy fallback in ``ktn._pykernels`` is used. Set ``KTN_BACKEND=python``
to force the fallback. ``use_backend`` switches at runtime (tests, benchmarks).
"""

import contextlib
import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active = _pykernels
_mult_counters = []


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    _active = _BACKENDS[name]


@contextlib.contextmanager
def use_backend(name):
    prev = backend_name()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


@contextlib.contextmanager
def count_multiplies():
    """Collect the scalar multiply count of every ``bmm`` call in the block.

    Yields a list that receives one entry per call.
    """
    log = []
    _mult_counters.append(log)
    try:
        yield log
    finally:
        _mult_counters.remove(log)


def bmm(a, b):
    """Batched matrix product (B,M,K) x (B,K,N) -> (B,M,N), fixed summation order."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if _mult_counters:
        n = a.shape[0] * a.shape[1] * a.shape[2] * b.shape[2]
        for log in _mult_counters:
            log.append(n)
    return _active.bmm(a, b)


def matmul(a, b):
    return bmm(a[None], b[None])[0]


def jacobi_rows(w, q, rel_tol, abs_tol, max_sweeps):
    return _active.jacobi_rows(w, q, rel_tol, abs_tol, max_sweeps)


def im2col(x, kh, kw, sh, sw, ph, pw, ho, wo):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _active.im2col(x, kh, kw, sh, sw, ph, pw, ho, wo)


def col2im(cols, h, w, sh, sw, ph, pw):
    cols = np.ascontiguousarray(cols, dtype=np.float64)
    return _active.col2im(cols, h, w, sh, sw, ph, pw)


if os.environ.get("KTN_BACKEND", "").lower() not in ("python", "py", "fallback") and _ckernels is not None:
    _active = _ckernels
