"""Simulator and verifier for the two-layer grating motion invariant.

Cumulative fringe phase of a parallax grating moves in lock-step with the
translational image displacement of the board it is printed on. A video of
such a board can therefore be checked for physical consistency by
correlating the two signals.
"""

from .errors import MoireError, PipelineError, ValidationError
from .evaluate import build_scoreset, roc_auc, select_threshold, summary_stats, sweep_thresholds
from .geometry import CameraModel, MarkerLayout, Pose, solve_planar_pnp
from .optics import GratingSpec, derive_fringe_geometry, phase_delta, phase_slope_constant
from .simulate import BoardGeometry, ScenarioSpec, apply_attack, render_sequence
from .verify import VerificationReport, verify, verify_sequence

__version__ = "0.1.0"

__all__ = [
    "MoireError",
    "PipelineError",
    "ValidationError",
    "GratingSpec",
    "derive_fringe_geometry",
    "phase_delta",
    "phase_slope_constant",
    "CameraModel",
    "MarkerLayout",
    "Pose",
    "solve_planar_pnp",
    "BoardGeometry",
    "ScenarioSpec",
    "render_sequence",
    "apply_attack",
    "VerificationReport",
    "verify",
    "verify_sequence",
    "build_scoreset",
    "sweep_thresholds",
    "roc_auc",
    "select_threshold",
    "summary_stats",
]
