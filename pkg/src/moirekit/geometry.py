"""Pinhole camera, planar homographies, planar PnP and rotation compensation.

World coordinates are board coordinates: x right, y down, z pointing from
the camera side into the board. The front grating lies in ``z = 0``. Poses
store the world-to-camera rotation and the camera centre, so a world point
``X`` has camera coordinates ``R @ (X - C)`` (OpenCV axes: x right, y
down, z forward).
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .errors import (
    BehindCamera,
    DegenerateConfiguration,
    DegenerateQuad,
    NoConvergence,
    RankDeficient,
    ValidationError,
)

__all__ = [
    "CameraModel",
    "Pose",
    "MarkerLayout",
    "DisplacementTrace",
    "project",
    "homography_from_correspondences",
    "apply_homography",
    "warp_to_canonical",
    "solve_planar_pnp",
    "rotation_compensated_displacement",
]


@dataclass(frozen=True)
class CameraModel:
    width: int
    height: int
    focal_px: float
    principal_point: tuple = None
    alpha: float = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0 and self.focal_px > 0):
            raise ValidationError("camera width, height and focal_px must be positive")
        if self.principal_point is None:
            object.__setattr__(self, "principal_point", (self.width / 2.0, self.height / 2.0))
        else:
            object.__setattr__(self, "principal_point", tuple(float(c) for c in self.principal_point))

    @classmethod
    def approximate(cls, width, height, alpha=1.0):
        """Intrinsics guessed from image size only: ``f = alpha * max(W, H)``."""
        return cls(width, height, alpha * max(width, height), alpha=alpha)

    @property
    def K(self):
        cx, cy = self.principal_point
        return np.array([[self.focal_px, 0.0, cx], [0.0, self.focal_px, cy], [0.0, 0.0, 1.0]])

    def to_dict(self):
        return {
            "width": self.width,
            "height": self.height,
            "focal_px": self.focal_px,
            "principal_point": list(self.principal_point),
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["width"]), int(d["height"]), float(d["focal_px"]),
                   tuple(d["principal_point"]), d.get("alpha"))


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    position: np.ndarray
    frame_index: int = 0
    reprojection_rms: float = None

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        C = np.asarray(self.position, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise ValidationError("rotation must be a proper orthonormal matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "position", C)

    @property
    def translation(self):
        """OpenCV-style ``t`` with ``x_cam = R X + t``."""
        return -self.rotation @ self.position


@dataclass(frozen=True)
class MarkerLayout:
    """Four board-plane reference points ordered TL, TR, BR, BL."""

    points: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        if P.shape == (4, 2):
            P = np.column_stack([P, np.zeros(4)])
        if P.shape != (4, 3) or np.any(P[:, 2] != 0):
            raise ValidationError("layout needs four z=0 points")
        if not _is_convex_quad(P[:, :2]):
            raise DegenerateQuad("layout points must form a convex quadrilateral")
        object.__setattr__(self, "points", P)

    @property
    def centroid3(self):
        return self.points.mean(axis=0)


@dataclass
class DisplacementTrace:
    """Per-frame translational displacement along the fringe-sensitive image axis."""

    trans: np.ndarray
    raw: np.ndarray
    fringe_axis_image: np.ndarray

    @property
    def rot(self):
        """Rotation-induced part of the raw displacement along the fringe axis."""
        return self.raw @ self.fringe_axis_image - self.trans


def _is_convex_quad(q):
    q = np.asarray(q, dtype=float)
    e = np.roll(q, -1, axis=0) - q
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    scale = max(np.abs(e).max(), 1e-300) ** 2
    return bool(np.all(cross > 1e-12 * scale) or np.all(cross < -1e-12 * scale))


def project(pose, camera, point3):
    """Project world points (``(..., 3)``) to pixels (``(..., 2)``)."""
    X = np.asarray(point3, dtype=float)
    Xc = (X - pose.position) @ pose.rotation.T
    z = Xc[..., 2]
    if np.any(z <= 0):
        raise BehindCamera("point at or behind the camera plane")
    cx, cy = camera.principal_point
    f = camera.focal_px
    return np.stack([cx + f * Xc[..., 0] / z, cy + f * Xc[..., 1] / z], axis=-1)


def _hartley(p):
    c = p.mean(axis=0)
    d = np.sqrt(((p - c) ** 2).sum(axis=1)).mean()
    if d == 0:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def homography_from_correspondences(src, dst):
    """Normalised-DLT homography mapping ``src`` points onto ``dst``.

    Returns a 3x3 matrix scaled so ``H[2, 2] == 1`` (Frobenius-normalised
    instead when that entry vanishes).
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    n = len(src)
    if n < 4 or len(dst) != n:
        raise ValidationError("need at least 4 matching point pairs")
    for pts in (src, dst):
        span = np.ptp(pts, axis=0).max()
        if span == 0:
            raise DegenerateConfiguration("points coincide")
        if n <= 8:
            for i, j, k in combinations(range(n), 3):
                u, v = pts[j] - pts[i], pts[k] - pts[i]
                if abs(u[0] * v[1] - u[1] * v[0]) <= 1e-9 * span**2:
                    raise DegenerateConfiguration("three collinear or duplicate points")
    Ts, Td = _hartley(src), _hartley(dst)
    s = (np.column_stack([src, np.ones(n)]) @ Ts.T)
    d = (np.column_stack([dst, np.ones(n)]) @ Td.T)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:3] = s
    A[0::2, 6:9] = -d[:, :1] * s
    A[1::2, 3:6] = s
    A[1::2, 6:9] = -d[:, 1:2] * s
    _, sv, Vt = np.linalg.svd(A)
    if sv[-2] <= 1e-10 * sv[0]:
        raise RankDeficient("correspondences do not determine a unique homography")
    H = np.linalg.inv(Td) @ Vt[-1].reshape(3, 3) @ Ts
    if abs(H[2, 2]) > 1e-12 * np.abs(H).max():
        return H / H[2, 2]
    return H / np.linalg.norm(H)


def apply_homography(H, pts):
    pts = np.asarray(pts, dtype=float)
    p = pts @ H[:, :2].T + H[:, 2]
    return p[..., :2] / p[..., 2:3]


def _canonical_corners(size):
    w, h = size
    return np.array([[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]])


def warp_to_canonical(frame, corners_px, canonical_size):
    """Resample the quad ``corners_px`` (TL, TR, BR, BL) into a ``(w, h)`` rectangle.

    Canonical pixel centres ``(0, 0)`` and ``(w-1, h-1)`` land exactly on
    the TL and BR corners. Bilinear interpolation, edge-clamped.
    """
    corners = np.asarray(corners_px, dtype=float).reshape(4, 2)
    if not _is_convex_quad(corners):
        raise DegenerateQuad("corners do not form a convex quadrilateral")
    w, h = int(canonical_size[0]), int(canonical_size[1])
    H = homography_from_correspondences(_canonical_corners((w, h)), corners)
    jj, ii = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    xy = apply_homography(H, np.stack([jj, ii], axis=-1))
    img = np.asarray(frame, dtype=float)
    return ndimage.map_coordinates(img, [xy[..., 1], xy[..., 0]], order=1, mode="nearest")


def _skew(v):
    x, y, z = v
    return np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])


def _init_from_homography(layout, image_pts, camera):
    H = homography_from_correspondences(layout.points[:, :2], image_pts)
    M = np.linalg.inv(camera.K) @ H
    lam = 2.0 / (np.linalg.norm(M[:, 0]) + np.linalg.norm(M[:, 1]))
    if M[2, 2] < 0:
        lam = -lam
    r1, r2, t = lam * M[:, 0], lam * M[:, 1], lam * M[:, 2]
    U, _, Vt = np.linalg.svd(np.column_stack([r1, r2, np.cross(r1, r2)]))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1, 1, -1]) @ Vt
    return R, t


def _residuals(R, t, X, obs, camera):
    Xc = X @ R.T + t
    if np.any(Xc[:, 2] <= 0):
        return None, None
    f = camera.focal_px
    cx, cy = camera.principal_point
    z = Xc[:, 2]
    r = np.column_stack([cx + f * Xc[:, 0] / z, cy + f * Xc[:, 1] / z]) - obs
    J = np.zeros((len(X), 2, 6))
    dproj = np.zeros((len(X), 2, 3))
    dproj[:, 0, 0] = f / z
    dproj[:, 0, 2] = -f * Xc[:, 0] / z**2
    dproj[:, 1, 1] = f / z
    dproj[:, 1, 2] = -f * Xc[:, 1] / z**2
    RX = X @ R.T
    for i in range(len(X)):
        J[i, :, :3] = dproj[i] @ -_skew(RX[i])
        J[i, :, 3:] = dproj[i]
    return r.ravel(), J.reshape(-1, 6)


def solve_planar_pnp(layout, image_pts, camera, max_iter=50, tol=1e-10):
    """Camera pose from four coplanar correspondences.

    Initialised by decomposing the board-plane homography, then refined by
    Levenberg-Marquardt on the reprojection error. Iteration stops once the
    RMS reprojection error changes by less than ``tol`` pixels. The returned
    pose carries ``reprojection_rms``.
    """
    obs = np.asarray(image_pts, dtype=float).reshape(4, 2)
    if not _is_convex_quad(obs):
        raise DegenerateConfiguration("image points do not form a convex quadrilateral")
    X = layout.points
    R, t = _init_from_homography(layout, obs, camera)
    r, J = _residuals(R, t, X, obs, camera)
    if r is None:
        raise DegenerateConfiguration("homography initialisation puts the board behind the camera")
    rms = np.sqrt(np.mean(r**2))
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        A = J.T @ J
        g = J.T @ r
        step = np.linalg.solve(A + lam * np.diag(np.diag(A) + 1e-12), -g)
        R_new = Rotation.from_rotvec(step[:3]).as_matrix() @ R
        t_new = t + step[3:]
        r_new, J_new = _residuals(R_new, t_new, X, obs, camera)
        if r_new is not None and np.sqrt(np.mean(r_new**2)) <= rms:
            rms_new = np.sqrt(np.mean(r_new**2))
            R, t, r, J = R_new, t_new, r_new, J_new
            lam = max(lam / 10, 1e-12)
            done = rms - rms_new < tol
            rms = rms_new
            if done:
                converged = True
                break
        else:
            lam *= 10
            if lam > 1e12:
                converged = True
                break
    if not converged and rms > 1.0:
        raise NoConvergence(f"reprojection RMS {rms:.3g} px after {max_iter} iterations")
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    return Pose(R, -R.T @ t, reprojection_rms=float(rms))


def rotation_compensated_displacement(poses, layout, camera, fringe_axis_image):
    """Centroid displacement driven only by camera translation.

    The layout centroid is reprojected with each frame's camera centre but
    the reference (first) frame's orientation, then projected on the
    fringe-sensitive image direction.
    """
    poses = list(poses)
    if len(poses) < 2:
        raise ValidationError("need at least two poses")
    axis = np.asarray(fringe_axis_image, dtype=float)
    axis = axis / np.linalg.norm(axis)
    c3 = layout.centroid3
    R_ref = poses[0].rotation
    comp = np.array([project(Pose(R_ref, p.position), camera, c3) for p in poses])
    raw = np.array([project(p, camera, c3) for p in poses])
    trans = (comp - comp[0]) @ axis
    return DisplacementTrace(trans=trans, raw=raw - raw[0], fringe_axis_image=axis)
