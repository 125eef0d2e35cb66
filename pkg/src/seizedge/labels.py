"""Segment phase labels shared across the pipeline."""

from enum import IntEnum


class Phase(IntEnum):
    """Classification target. Index order doubles as the argmax tie-break order."""

    ICTAL = 0
    PREICTAL = 1
    INTERICTAL = 2

    @classmethod
    def from_name(cls, name: str) -> "Phase":
        return cls[name.upper()]


PHASE_NAMES = tuple(p.name.lower() for p in Phase)
