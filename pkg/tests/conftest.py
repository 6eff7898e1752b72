"""Shared fixtures.

The nine-node reference deployment is expensive enough (gain tables, power
map, learning pass) that tests share one session-scoped copy.  Treat the
shared parts as read-only; tests that mutate memories build their own.
"""

import pytest

from optomac.channel import ChannelConfig
from optomac.config import build_parts, load_fixture
from optomac.learning import run_learning
from optomac.timebase import ClockConfig


@pytest.fixture(scope="session")
def nine_node_cfg():
    return load_fixture("nine_node")


@pytest.fixture(scope="session")
def nine_node_learned(nine_node_cfg):
    """(parts, report) after a full learning pass on the reference fixture."""
    parts = build_parts(nine_node_cfg)
    report = run_learning(nine_node_cfg.grid, parts.poses, parts.memories,
                          parts.tables, nine_node_cfg.channel)
    return parts, report


@pytest.fixture
def clock():
    return ClockConfig()


@pytest.fixture
def channel():
    return ChannelConfig()
