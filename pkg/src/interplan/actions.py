"""Semantic-level action vocabulary shared by the behavior layer and controllers."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class LateralManeuver(str, Enum):
    KEEP = "keep"
    LEFT = "left"
    RIGHT = "right"


class LongitudinalStyle(str, Enum):
    AGGRESSIVE = "aggressive"
    MODERATE = "moderate"
    CONSERVATIVE = "conservative"


@dataclass(frozen=True)
class SemanticAction:
    """One maneuver primitive: a target centerline plus a driving style.

    The lateral choice is resolved to a concrete lane id at tree-build time
    so that a policy keeps meaning the same physical maneuver while the
    vehicle moves.
    """

    lateral: LateralManeuver
    longitudinal: LongitudinalStyle
    target_lane: int
    duration: float = 1.0

    def same_maneuver(self, other: "SemanticAction") -> bool:
        return (self.lateral == other.lateral
                and self.longitudinal == other.longitudinal
                and self.target_lane == other.target_lane)
