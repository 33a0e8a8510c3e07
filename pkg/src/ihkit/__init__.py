"""Toolkit for detecting, quantifying, validating, and mitigating inserted
speech/music events in generated audio."""

__version__ = "0.1.0"

from .segments import (  # noqa: F401
    ClipTimeline,
    EventSegment,
    SegmentKind,
    TimeInterval,
    normalize,
    union_duration,
)
