"""Hot inner-loop kernels with two interchangeable backends.

The backend is chosen once at import from ``ARNET_BACKEND`` (``numba`` or
``numpy``; default ``numba`` when it imports). :func:`use_backend` switches it
temporarily, mainly for tests and benchmarks.
"""
import contextlib
import importlib
import logging
import os

log = logging.getLogger(__name__)

BACKENDS = ("numba", "numpy")

_impl = None
_name = None


def _load(name):
    if name not in BACKENDS:
        raise ValueError(f"unknown ARNET_BACKEND {name!r}; expected one of {BACKENDS}")
    return importlib.import_module(f"{__name__}._{name}")


def set_backend(name):
    global _impl, _name
    _impl = _load(name)
    _name = name


def get_backend():
    return _name


@contextlib.contextmanager
def use_backend(name):
    prev = _name
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def _init():
    requested = os.environ.get("ARNET_BACKEND", "").strip().lower()
    if requested:
        set_backend(requested)
        return
    try:
        set_backend("numba")
    except ImportError:
        log.info("numba unavailable, falling back to numpy kernels")
        set_backend("numpy")


_init()


def im2col3x3(x):
    return _impl.im2col3x3(x)


def col2im3x3(dcols, shape):
    return _impl.col2im3x3(dcols, shape)


def maxpool2_forward(x):
    return _impl.maxpool2_forward(x)


def maxpool2_backward(dout, idx):
    return _impl.maxpool2_backward(dout, idx)


def upsample2_forward(x):
    return _impl.upsample2_forward(x)


def upsample2_backward(dout):
    return _impl.upsample2_backward(dout)
