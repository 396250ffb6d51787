"""Supported datasets and the shared label vocabulary.

All four datasets are motor-imagery recordings distributed through the
MOABB dataset tooling. Labels are canonicalized here so every export
shares one vocabulary regardless of how the upstream source spells its
event names.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ExportError

# Canonical order; class_ids of an exported set follow this order.
CANONICAL_LABELS = ("left_hand", "right_hand", "feet", "tongue")


@dataclass(frozen=True)
class DatasetInfo:
    key: str
    moabb_class: str
    classes: tuple
    description: str


DATASETS = {
    "steyrl": DatasetInfo(
        key="steyrl",
        moabb_class="BNCI2014_002",
        classes=("right_hand", "feet"),
        description="13 subjects, right hand vs feet imagery, 15 channels",
    ),
    "zhou": DatasetInfo(
        key="zhou",
        moabb_class="Zhou2016",
        classes=("left_hand", "right_hand", "feet"),
        description="4 subjects, three-class imagery, 14 channels",
    ),
    "bcic4-2a": DatasetInfo(
        key="bcic4-2a",
        moabb_class="BNCI2014_001",
        classes=("left_hand", "right_hand", "feet", "tongue"),
        description="9 subjects, four-class imagery, 22 EEG channels",
    ),
    "bcic4-2b": DatasetInfo(
        key="bcic4-2b",
        moabb_class="BNCI2014_004",
        classes=("left_hand", "right_hand"),
        description="9 subjects, binary hand imagery, 3 EEG channels",
    ),
}


def dataset_info(key: str) -> DatasetInfo:
    try:
        return DATASETS[key]
    except KeyError:
        raise ExportError(
            f"unknown dataset {key!r}; supported keys are {sorted(DATASETS)}"
        ) from None


def canonical_label(event_name: str) -> str:
    """Map an upstream event name onto the shared vocabulary.

    Case, spaces, and hyphens are normalized; anything that still does
    not match a canonical label aborts with the offending name, since a
    silently mislabeled class would poison every downstream metric.
    """
    normalized = re.sub(r"[\s\-]+", "_", str(event_name).strip().lower())
    if normalized in CANONICAL_LABELS:
        return normalized
    raise ExportError(
        f"unknown event label {event_name!r} (normalized {normalized!r}); "
        f"expected one of {list(CANONICAL_LABELS)}"
    )
