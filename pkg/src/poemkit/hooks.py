"""Fault-injection hooks for the self-verification suite.

The verify command flips a known defect on, re-runs a contract check, and
asserts that exactly the intended check fails.  Never enabled in normal runs.
"""

from contextlib import contextmanager

AGG_TARGET_SIGN_FLIP = "agg_target_sign_flip"
VEC_SOFTMAX_WRONG_AXIS = "vec_softmax_wrong_axis"

_active: set = set()


def on(name) -> bool:
    return name in _active


@contextmanager
def enable(name):
    _active.add(name)
    try:
        yield
    finally:
        _active.discard(name)
