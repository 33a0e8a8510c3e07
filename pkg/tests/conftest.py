import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ihkit.segments import ClipTimeline, EventSegment


def seg(kind: str, start_s: float, end_s: float, score: float | None = None) -> EventSegment:
    return EventSegment.build(kind, start_s, end_s, score)


def timeline(
    clip_id: str = "clip",
    duration_s: float = 10.0,
    segments: list[EventSegment] = (),
    source: str = "test",
) -> ClipTimeline:
    return ClipTimeline.build(clip_id, source, duration_s, segments)


def random_timeline(
    rng: random.Random,
    clip_id: str = "clip",
    max_duration_cs: int = 3000,
    max_segments: int = 10,
    duration_cs: int | None = None,
    source: str = "test",
) -> ClipTimeline:
    """Random centisecond-aligned timeline, not necessarily normalized."""
    if duration_cs is None:
        duration_cs = rng.randint(100, max_duration_cs)
    segments = []
    for _ in range(rng.randint(0, max_segments)):
        start = rng.randint(0, duration_cs - 1)
        end = rng.randint(start + 1, duration_cs)
        kind = rng.choice(["speech", "music"])
        segments.append(seg(kind, start / 100.0, end / 100.0))
    return ClipTimeline.build(clip_id, source, duration_cs / 100.0, segments)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC0FFEE)
