"""Exception types shared across the planner."""


class PlannerError(Exception):
    """Base class for all planner errors."""


class ProjectionOutOfDomain(PlannerError):
    """Foot point of a projection falls outside the centerline polyline."""


class SOutOfRange(PlannerError):
    """Requested arclength lies outside the lane domain."""


class NonpositiveGap(PlannerError):
    """Leader gap is zero or negative, i.e. the bodies overlap."""


class SimCollision(PlannerError):
    """A forward-simulation controller detected overlapping bodies."""


class EmptyPath(PlannerError):
    """Pure pursuit was handed an empty reference path."""


class NoAvailableActions(PlannerError):
    """The semantic action set for the current context is empty."""


class NoCandidates(PlannerError):
    """An agent has no candidate centerlines for intention estimation."""


class PlanningFailed(PlannerError):
    """No feasible policy survived the safety gate."""


class SeedInCollision(PlannerError):
    """A corridor seed state already overlaps an obstacle."""


class EmptyCorridor(PlannerError):
    """Trajectory optimization was requested over an empty corridor."""


class TOutOfRange(PlannerError):
    """Trajectory sampled outside its time domain."""


class ConfigError(PlannerError):
    """Invalid or inconsistent configuration input."""
