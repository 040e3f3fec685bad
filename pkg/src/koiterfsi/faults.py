"""
Fault-injection hooks used by the validation driver to prove its suites bite.

Production code reads :func:`active`; nothing here is enabled unless a caller
enters :func:`inject`.
"""
from contextlib import contextmanager

KNOWN = ("simpson_weights", "skew_pairing")

_active = set()


def active(name):
    return name in _active


@contextmanager
def inject(name):
    """Temporarily enable fault ``name`` (one of :data:`KNOWN`)."""
    if name not in KNOWN:
        raise ValueError(f"unknown fault {name!r}")
    _active.add(name)
    try:
        yield
    finally:
        _active.discard(name)
