"""Closed-form two-layer grating physics.

Conventions used throughout the package: lengths in millimetres, phases in
radians, and the fringe-sensitive axis is the board direction perpendicular
to the grating lines. A positive camera shift along that axis produces a
positive beat-phase change.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EqualPeriods, NonPositiveDistance, NonPositiveInput, ValidationError

__all__ = [
    "GratingSpec",
    "FringeGeometry",
    "derive_fringe_geometry",
    "apparent_layer_shift",
    "phase_delta",
    "phase_slope_constant",
    "beat_frequency",
    "superposed_intensity",
    "area_averaged_intensity",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GratingSpec:
    """Front/rear line gratings separated by a gap.

    ``line_axis`` is the direction of the grating lines in board
    coordinates; phase responds to motion along its perpendicular.
    """

    p_front: float = 0.508
    p_rear: float = 0.52
    gap: float = 1.0
    line_axis: tuple = (0.0, 1.0)

    def __post_init__(self):
        if not (self.p_front > 0 and self.p_rear > 0):
            raise NonPositiveInput("grating periods must be positive")
        if not self.gap > 0:
            raise NonPositiveInput("gap must be positive")
        n = float(np.hypot(*self.line_axis))
        if not np.isfinite(n) or n == 0:
            raise ValidationError("line_axis must be a nonzero 2-vector")
        object.__setattr__(self, "line_axis", (self.line_axis[0] / n, self.line_axis[1] / n))

    @property
    def sensitive_axis(self):
        """Unit board vector perpendicular to the lines (the fringe-sensitive axis)."""
        lx, ly = self.line_axis
        return (ly, -lx)

    def to_dict(self):
        return {
            "p_front": self.p_front,
            "p_rear": self.p_rear,
            "gap": self.gap,
            "line_axis": list(self.line_axis),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["p_front"], d["p_rear"], d["gap"], tuple(d["line_axis"]))


@dataclass(frozen=True)
class FringeGeometry:
    beat_period: float
    magnification: float


def derive_fringe_geometry(grating):
    """Beat period ``p_f p_r / |p_f - p_r|`` and magnification ``p_f / |p_f - p_r|``."""
    diff = abs(grating.p_front - grating.p_rear)
    if diff == 0:
        raise EqualPeriods("equal periods give no beat")
    return FringeGeometry(grating.p_front * grating.p_rear / diff, grating.p_front / diff)


def _check_distance(distance_D):
    if not np.all(np.asarray(distance_D) > 0):
        raise NonPositiveDistance(f"distance must be positive, got {distance_D!r}")


def apparent_layer_shift(gap, distance_D, camera_shift):
    """Parallax shift between the layers, ``gap * camera_shift / distance_D``."""
    _check_distance(distance_D)
    return gap * camera_shift / distance_D


def phase_delta(grating, distance_D, camera_shift, mode="approx"):
    """Beat-phase change for a lateral camera shift at distance ``distance_D``.

    ``mode="exact"`` keeps the ``(1 + g/D)`` projected-period factor,
    ``mode="approx"`` drops it.
    """
    _check_distance(distance_D)
    g = grating.gap
    dphi = TWO_PI * g / (grating.p_rear * distance_D) * camera_shift
    if mode == "exact":
        return dphi * (1.0 + g / distance_D)
    if mode != "approx":
        raise ValidationError(f"unknown mode {mode!r}")
    return dphi


def phase_slope_constant(gap, p_rear, focal_px):
    """Radians of beat phase per pixel of translational image displacement."""
    if not (gap > 0 and p_rear > 0 and focal_px > 0):
        raise NonPositiveInput("gap, p_rear and focal_px must be positive")
    return TWO_PI * gap / (p_rear * focal_px)


def beat_frequency(grating, distance_D):
    """Signed beat frequency (cycles/mm) along the front plane seen from ``distance_D``."""
    _check_distance(distance_D)
    return 1.0 / grating.p_front - (1.0 + grating.gap / distance_D) / grating.p_rear


def _layer_phases(grating, camera_x, distance_D, front_point_x, phase_offset):
    _check_distance(distance_D)
    x_f = np.asarray(front_point_x, dtype=float)
    ratio = grating.gap / distance_D
    # rear-plane hit of the camera ray through the front point
    x_r = x_f + ratio * (x_f - camera_x)
    a = TWO_PI * x_f / grating.p_front
    b = TWO_PI * x_r / grating.p_rear
    if phase_offset is not None:
        b = b - phase_offset
    return a, b


def superposed_intensity(grating, camera_x, distance_D, front_point_x, phase_offset=None):
    """Point transmittance ``T_f(x_f) * T_r(x_r)`` of the two sinusoidal gratings.

    ``phase_offset`` (radians) is added to the beat phase by shifting the
    rear layer; it exists for forging invariant-violating sequences.
    """
    a, b = _layer_phases(grating, camera_x, distance_D, front_point_x, phase_offset)
    return (0.5 + 0.5 * np.cos(a)) * (0.5 + 0.5 * np.cos(b))


def area_averaged_intensity(grating, camera_x, distance_D, front_point_x, extents, phase_offset=None):
    """Superposed transmittance averaged over a separable stack of box filters.

    Parameters
    ----------
    extents : sequence of array_like
        Board-axis extent (mm) swept by each box filter. A box of width
        ``w`` pixels along an image axis whose board-axis derivative is
        ``dx/du`` has extent ``w * dx/du``. Each cosine term of frequency
        ``nu`` is attenuated by ``prod(sinc(nu * e))``.

    Returns
    -------
    ndarray
        Same shape as ``front_point_x``. With no extents this equals
        :func:`superposed_intensity`.
    """
    a, b = _layer_phases(grating, camera_x, distance_D, front_point_x, phase_offset)
    nu_a = 1.0 / grating.p_front
    nu_b = (1.0 + grating.gap / distance_D) / grating.p_rear

    def atten(nu):
        out = 1.0
        for e in extents:
            out = out * np.sinc(nu * np.asarray(e, dtype=float))
        return out

    # product of cosines expanded into its four spectral lines
    return (
        0.25
        + 0.25 * atten(nu_a) * np.cos(a)
        + 0.25 * atten(nu_b) * np.cos(b)
        + 0.125 * atten(nu_a - nu_b) * np.cos(a - b)
        + 0.125 * atten(nu_a + nu_b) * np.cos(a + b)
    )
