from .bezier import BezierSegment, PiecewiseTrajectory
from .corridor import SpatioTemporalCube, build_corridor
from .planner import (BehaviorFeedback, StartState, ValidationReport,
                      formulate_qp, plan_trajectory, start_state_from_vehicle,
                      validate)
from .qp import QpProblem, QpSolution, solve_qp

__all__ = [
    "BezierSegment", "PiecewiseTrajectory", "SpatioTemporalCube",
    "build_corridor", "BehaviorFeedback", "StartState", "ValidationReport",
    "formulate_qp", "plan_trajectory", "start_state_from_vehicle", "validate",
    "QpProblem", "QpSolution", "solve_qp",
]
