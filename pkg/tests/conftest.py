"""Shared fixtures: deterministic clocks and wired systems."""

import sys

import numpy as np
import pytest

from printmod.corpus import AssetKind, MediaAsset
from printmod.moderation import ModeratorProfile
from printmod.service.system import ModerationSystem
from printmod.simulation import TickClock


def make_image(color=(128, 128, 128), size=48):
    pixels = np.empty((size, size, 3), dtype=np.uint8)
    pixels[:] = color
    return pixels


def make_asset(asset_id, thing_id, color=(128, 128, 128), size=48):
    return MediaAsset(
        id=asset_id, thing_id=thing_id, kind=AssetKind.RENDERED_PREVIEW, pixels=make_image(color, size)
    )


@pytest.fixture
def system():
    """In-memory system on a lockstep clock with two registered moderators."""
    sys_ = ModerationSystem(clock=TickClock())
    sys_.register_moderator(ModeratorProfile(id="mod-a", audience_group="group-a"))
    sys_.register_moderator(ModeratorProfile(id="mod-b", audience_group="group-b"))
    return sys_


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo one [PASS]/[FAIL] line per acceptance criterion after the run."""
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "_VERDICTS", None) if mod else None
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
