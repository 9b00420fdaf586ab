"""Synthetic video of the grating board under camera and board motion.

Only the camera pose relative to the board matters to the optics, so every
frame is rendered from that relative pose; ``motion_kind`` just decides how
the relative motion is split between camera and board in world records.
"""

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from . import optics
from .errors import (
    IncompatibleGrating,
    MissingDonor,
    ValidationError,
    VisibilityUnsatisfiable,
)
from .geometry import CameraModel, MarkerLayout, Pose, homography_from_correspondences, project
from .optics import GratingSpec

__all__ = [
    "BoardGeometry",
    "ScenarioSpec",
    "MANIFEST_VERSION",
    "generate_trajectory",
    "render_frame",
    "render_sequence",
    "apply_attack",
    "true_beat_phase",
    "poses_from_manifest",
]

MANIFEST_VERSION = "moirekit.sequence/1"
MOTION_KINDS = ("camera_moving", "board_moving", "both_moving")
PATHS = ("linear", "sweep")
ATTACK_KINDS = ("frozen", "drift", "gain", "lag", "splice")
VISIBILITY_MARGIN_PX = 2.0


@dataclass(frozen=True)
class BoardGeometry:
    """Board, fringe window and corner fiducials, all in mm.

    Each corner carries a white ``marker_cell`` square holding a centred
    black square of side ``marker_black``. The reference point of a marker
    is the black-square vertex nearest the board centre.
    """

    size: tuple = (160.0, 100.0)
    fringe_region: tuple = (120.0, 60.0)
    marker_cell: float = 18.0
    marker_black: float = 12.0
    board_intensity: float = 0.9

    def __post_init__(self):
        w, h = self.size
        fw, fh = self.fringe_region
        if not (0 < fw < w and 0 < fh < h and 0 < self.marker_black < self.marker_cell):
            raise ValidationError("inconsistent board geometry")
        if fw / 2 > w / 2 - self.marker_cell and fh / 2 > h / 2 - self.marker_cell:
            raise ValidationError("fringe region overlaps the marker cells")

    @property
    def _inset(self):
        return (self.marker_cell - self.marker_black) / 2.0

    @property
    def reference_points(self):
        hx = self.size[0] / 2 - self._inset - self.marker_black
        hy = self.size[1] / 2 - self._inset - self.marker_black
        return np.array([[-hx, -hy, 0.0], [hx, -hy, 0.0], [hx, hy, 0.0], [-hx, hy, 0.0]])

    @property
    def marker_centers(self):
        cx = self.size[0] / 2 - self._inset - self.marker_black / 2
        cy = self.size[1] / 2 - self._inset - self.marker_black / 2
        return np.array([[-cx, -cy], [cx, -cy], [cx, cy], [-cx, cy]])

    @property
    def layout(self):
        return MarkerLayout(self.reference_points)

    def rect_corners(self, which="board"):
        w, h = self.size if which == "board" else self.fringe_region
        return np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]])

    def to_dict(self):
        d = asdict(self)
        d["size"] = list(self.size)
        d["fringe_region"] = list(self.fringe_region)
        d["layout"] = self.reference_points.tolist()
        d["centroid"] = self.reference_points.mean(axis=0).tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["size"]), tuple(d["fringe_region"]), d["marker_cell"],
                   d["marker_black"], d["board_intensity"])


def _default_camera():
    return CameraModel(640, 480, 512.0, alpha=0.8)


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to render one sequence deterministically.

    ``start_offset`` and ``end_offset`` are the camera's (x, y) position
    relative to the board centre in mm; the camera sits ``distance_z`` in
    front of the board. ``path="sweep"`` oscillates between the two
    offsets ``sweep_cycles`` times instead of moving once. ``pan_sweep_deg``
    adds a deterministic pan ramp on top of the random jitter.
    """

    grating: GratingSpec = field(default_factory=GratingSpec)
    board: BoardGeometry = field(default_factory=BoardGeometry)
    camera: CameraModel = field(default_factory=_default_camera)
    motion_kind: str = "camera_moving"
    distance_z: float = 1200.0
    n_frames: int = 120
    rotation_jitter_deg: float = 0.0
    noise_sigma: float = 2.0 / 255.0
    supersampling: int = 8
    seed: int = 0
    start_offset: tuple = (500.0, 0.0)
    end_offset: tuple = (0.0, 0.0)
    path: str = "linear"
    sweep_cycles: float = 3.0
    pan_sweep_deg: float = 0.0
    optical_lowpass_px: float = 1.0
    background: float = 0.25

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValidationError("n_frames must be >= 2")
        if not self.distance_z > 0:
            raise ValidationError("distance_z must be positive")
        if not 0 <= self.rotation_jitter_deg <= 5:
            raise ValidationError("rotation_jitter_deg must lie in [0, 5]")
        if self.supersampling < 4:
            raise ValidationError("supersampling must be >= 4")
        if self.motion_kind not in MOTION_KINDS:
            raise ValidationError(f"motion_kind must be one of {MOTION_KINDS}")
        if self.path not in PATHS:
            raise ValidationError(f"path must be one of {PATHS}")
        if self.noise_sigma < 0 or self.optical_lowpass_px < 0:
            raise ValidationError("noise_sigma and optical_lowpass_px must be >= 0")

    @property
    def marker_layout(self):
        return self.board.layout

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["grating"] = self.grating.to_dict()
        d["board"] = self.board.to_dict()
        d["camera"] = self.camera.to_dict()
        d["start_offset"] = list(self.start_offset)
        d["end_offset"] = list(self.end_offset)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kw = {}
        if "grating" in d:
            kw["grating"] = GratingSpec.from_dict(d.pop("grating"))
        if "board" in d:
            kw["board"] = BoardGeometry.from_dict(d.pop("board"))
        if "camera" in d:
            kw["camera"] = CameraModel.from_dict(d.pop("camera"))
        for k in ("start_offset", "end_offset"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**kw, **d)


# ---------------------------------------------------------------- trajectory

def _positions(spec):
    n = spec.n_frames
    t = np.arange(n) / (n - 1)
    if spec.path == "linear":
        s = t
    else:
        s = 0.5 - 0.5 * np.cos(2 * np.pi * spec.sweep_cycles * t)
    a = np.asarray(spec.start_offset, dtype=float)
    b = np.asarray(spec.end_offset, dtype=float)
    xy = a + s[:, None] * (b - a)
    return np.column_stack([xy, np.full(n, -float(spec.distance_z))])


def _board_visible(spec, R, C):
    corners = np.column_stack([spec.board.rect_corners("board"), np.zeros(4)])
    Xc = (corners - C) @ R.T
    if np.any(Xc[:, 2] <= 0):
        return False
    uv = project(Pose(R, C), spec.camera, corners)
    m = VISIBILITY_MARGIN_PX
    return bool(np.all((uv[:, 0] >= m) & (uv[:, 0] <= spec.camera.width - 1 - m)
                       & (uv[:, 1] >= m) & (uv[:, 1] <= spec.camera.height - 1 - m)))


def _rotations(pan_deg, tilt_deg):
    return Rotation.from_euler("xy", np.column_stack([tilt_deg, pan_deg]), degrees=True).as_matrix()


def generate_trajectory(spec):
    """Relative camera poses (board frame) for every frame.

    Positions interpolate ``start_offset`` to ``end_offset``; pan/tilt
    follow a clipped Gaussian random walk starting at zero. A draw that
    lets the board leave the image is redrawn, up to 100 times.
    """
    n = spec.n_frames
    C = _positions(spec)
    ramp = spec.pan_sweep_deg * np.arange(n) / (n - 1)
    rng = np.random.default_rng(spec.seed)
    J = spec.rotation_jitter_deg
    for _ in range(100):
        if J > 0:
            steps = rng.normal(0.0, 0.1 * J, size=(n - 1, 2))
            walk = np.zeros((n, 2))
            for i in range(1, n):
                walk[i] = np.clip(walk[i - 1] + steps[i - 1], -J, J)
        else:
            walk = np.zeros((n, 2))
        Rs = _rotations(walk[:, 0] + ramp, walk[:, 1])
        if all(_board_visible(spec, Rs[i], C[i]) for i in range(n)):
            return [Pose(Rs[i], C[i], frame_index=i) for i in range(n)]
        if J == 0:
            break
    raise VisibilityUnsatisfiable("board leaves the image for this trajectory")


def _world_positions(spec, rel):
    """Split relative camera positions into (camera_world, board_world)."""
    moving = rel - rel[0]
    if spec.motion_kind == "camera_moving":
        cam, board = rel, np.zeros_like(rel)
    elif spec.motion_kind == "board_moving":
        cam, board = np.repeat(rel[:1], len(rel), axis=0), -moving
    else:
        cam, board = rel[:1] + 0.5 * moving, -0.5 * moving
    return cam, board


def true_beat_phase(grating, position):
    """Beat phase implied by a relative camera centre (board frame, mm)."""
    C = np.asarray(position, dtype=float)
    D = -C[..., 2]
    sx, sy = grating.sensitive_axis
    shift = optics.apparent_layer_shift(grating.gap, D, C[..., 0] * sx + C[..., 1] * sy)
    return 2 * np.pi * shift / grating.p_rear


# ------------------------------------------------------------------ renderer

def _board_homography(pose, camera):
    """Image pixel -> board (x, y) homography for the z=0 plane."""
    R, t = pose.rotation, pose.translation
    Hbi = camera.K @ np.column_stack([R[:, 0], R[:, 1], t])
    return np.linalg.inv(Hbi)


def render_frame(spec, pose, phase_offset=0.0, frame_index=None):
    """Render one float frame in ``[0, 1]`` before noise and quantisation."""
    cam = spec.camera
    board = spec.board
    g = spec.grating
    W, Hh = cam.width, cam.height
    img = np.full((Hh, W), float(spec.background))
    corners = np.column_stack([board.rect_corners("board"), np.zeros(4)])
    uv = project(pose, cam, corners)
    u0 = max(int(np.floor(uv[:, 0].min())) - 1, 0)
    u1 = min(int(np.ceil(uv[:, 0].max())) + 1, W - 1)
    v0 = max(int(np.floor(uv[:, 1].min())) - 1, 0)
    v1 = min(int(np.ceil(uv[:, 1].max())) + 1, Hh - 1)
    ss = spec.supersampling
    off = (np.arange(ss) + 0.5) / ss - 0.5
    us = (np.arange(u0, u1 + 1)[:, None] + off[None, :]).ravel()
    vs = (np.arange(v0, v1 + 1)[:, None] + off[None, :]).ravel()
    U, V = np.meshgrid(us, vs)
    Hib = _board_homography(pose, cam)
    n_x = Hib[0, 0] * U + Hib[0, 1] * V + Hib[0, 2]
    n_y = Hib[1, 0] * U + Hib[1, 1] * V + Hib[1, 2]
    w = Hib[2, 0] * U + Hib[2, 1] * V + Hib[2, 2]
    X = n_x / w
    Y = n_y / w

    val = np.full(U.shape, float(spec.background))
    bw, bh = board.size
    on_board = (np.abs(X) <= bw / 2) & (np.abs(Y) <= bh / 2)
    val[on_board] = board.board_intensity

    cell_lo_x, cell_lo_y = bw / 2 - board.marker_cell, bh / 2 - board.marker_cell
    in_cell = on_board & (np.abs(X) >= cell_lo_x) & (np.abs(Y) >= cell_lo_y)
    val[in_cell] = 1.0
    mc = board.marker_centers[2]
    in_black = in_cell & (np.abs(np.abs(X) - mc[0]) <= board.marker_black / 2) \
        & (np.abs(np.abs(Y) - mc[1]) <= board.marker_black / 2)
    val[in_black] = 0.0

    fw, fh = board.fringe_region
    in_fringe = (np.abs(X) <= fw / 2) & (np.abs(Y) <= fh / 2)
    if np.any(in_fringe):
        sx, sy = g.sensitive_axis
        Xf, Yf, wf = X[in_fringe], Y[in_fringe], w[in_fringe]
        Uf, Vf = U[in_fringe], V[in_fringe]
        xf = Xf * sx + Yf * sy
        # d(board)/d(pixel) of the projective map, evaluated per sample
        dX_du = (Hib[0, 0] - Hib[2, 0] * Xf) / wf
        dX_dv = (Hib[0, 1] - Hib[2, 1] * Xf) / wf
        dY_du = (Hib[1, 0] - Hib[2, 0] * Yf) / wf
        dY_dv = (Hib[1, 1] - Hib[2, 1] * Yf) / wf
        dxf_du = dX_du * sx + dY_du * sy
        dxf_dv = dX_dv * sx + dY_dv * sy
        extents = [dxf_du / ss, dxf_dv / ss]
        if spec.optical_lowpass_px > 0:
            extents += [spec.optical_lowpass_px * dxf_du, spec.optical_lowpass_px * dxf_dv]
        C = pose.position
        D = -C[2]
        cam_x = C[0] * sx + C[1] * sy
        val[in_fringe] = optics.area_averaged_intensity(
            g, cam_x, D, xf, extents, phase_offset=phase_offset)

    bh_px, bw_px = v1 - v0 + 1, u1 - u0 + 1
    img[v0:v1 + 1, u0:u1 + 1] = val.reshape(bh_px, ss, bw_px, ss).mean(axis=(1, 3))
    return img


def _quantize(spec, img, index):
    if spec.noise_sigma > 0:
        rng = np.random.default_rng([spec.seed, 7919, index])
        img = img + spec.noise_sigma * rng.standard_normal(img.shape)
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _frame_records(spec, poses, phases):
    layout = spec.marker_layout
    rel = np.array([p.position for p in poses])
    cam_w, board_w = _world_positions(spec, rel)
    recs = []
    for i, p in enumerate(poses):
        corners = project(p, spec.camera, layout.points)
        if np.any(corners < 0) or np.any(corners[:, 0] > spec.camera.width - 1) \
                or np.any(corners[:, 1] > spec.camera.height - 1):
            raise VisibilityUnsatisfiable(f"frame {i}: reference corners leave the image")
        recs.append({
            "index": i,
            "rotation": p.rotation.ravel().tolist(),
            "position": p.position.tolist(),
            "camera_world": cam_w[i].tolist(),
            "board_world": board_w[i].tolist(),
            "corners_px": corners.tolist(),
            "true_phase_rad": float(phases[i]),
        })
    return recs


def _manifest(spec, records, label):
    scen = spec.to_dict()
    for k in ("grating", "board", "camera"):
        scen.pop(k)
    return {
        "version": MANIFEST_VERSION,
        "grating": spec.grating.to_dict(),
        "board": spec.board.to_dict(),
        "camera": spec.camera.to_dict(),
        "scenario": scen,
        "fringe_axis": list(spec.grating.sensitive_axis),
        "label": label,
        "frames": records,
    }


def _render_all(spec, poses, offsets):
    frames = np.empty((len(poses), spec.camera.height, spec.camera.width), dtype=np.uint8)
    for i, p in enumerate(poses):
        frames[i] = _quantize(spec, render_frame(spec, p, offsets[i]), i)
    return frames


def render_sequence(spec):
    """Render frames and the ground-truth manifest for ``spec``.

    Returns
    -------
    frames : ndarray, uint8, shape (n_frames, height, width)
    manifest : dict
    """
    poses = generate_trajectory(spec)
    phases = true_beat_phase(spec.grating, np.array([p.position for p in poses]))
    frames = _render_all(spec, poses, np.zeros(len(poses)))
    records = _frame_records(spec, poses, phases)
    return frames, _manifest(spec, records, {"kind": "authentic", "attack_params": None})


def spec_from_manifest(manifest):
    scen = dict(manifest["scenario"])
    scen["grating"] = manifest["grating"]
    scen["board"] = manifest["board"]
    scen["camera"] = manifest["camera"]
    return ScenarioSpec.from_dict(scen)


def poses_from_manifest(manifest):
    return [Pose(np.array(r["rotation"]).reshape(3, 3), np.array(r["position"]), frame_index=r["index"])
            for r in manifest["frames"]]


def _forged_schedule(manifest, kind, param, donor, seed):
    true = np.array([r["true_phase_rad"] for r in manifest["frames"]])
    n = len(true)
    if kind == "frozen":
        return np.full(n, true[0]), {}
    if kind == "drift":
        sigma = 0.3 if param is None else float(param)
        rng = np.random.default_rng([seed, 104729])
        steps = np.concatenate([[0.0], rng.normal(0.0, sigma, n - 1)])
        return true[0] + np.cumsum(steps), {"sigma_rw": sigma, "seed": seed}
    if kind == "gain":
        k = 0.3 if param is None else float(param)
        return true * k, {"k": k}
    if kind == "lag":
        m = 10 if param is None else int(param)
        return true[np.clip(np.arange(n) - m, 0, n - 1)], {"m": m}
    if kind == "splice":
        if donor is None:
            raise MissingDonor("splice needs a donor manifest")
        if donor["grating"] != manifest["grating"]:
            raise IncompatibleGrating("donor was rendered with a different grating")
        d = np.array([r["true_phase_rad"] for r in donor["frames"]])
        src = np.linspace(0, len(d) - 1, n)
        return np.interp(src, np.arange(len(d)), d), {"donor_seed": donor["scenario"]["seed"]}
    raise ValidationError(f"unknown attack kind {kind!r}; expected one of {ATTACK_KINDS}")


def apply_attack(frames, manifest, kind, param=None, donor=None, seed=None):
    """Re-render ``manifest``'s sequence with a forged beat-phase schedule.

    Geometry (poses, corner tracks, fiducials) and the noise stream stay
    those of the authentic input; only the fringe phase is replaced.

    Parameters
    ----------
    kind : {"frozen", "drift", "gain", "lag", "splice"}
    param : float, optional
        ``sigma_rw`` (rad/frame) for drift, ``k`` for gain, ``m`` frames for lag.
    donor : dict, optional
        Manifest whose phase schedule is transplanted by ``splice``.
    seed : int, optional
        Drift random-walk seed; defaults to the scenario seed.
    """
    if manifest["label"]["kind"] != "authentic":
        raise ValidationError("attacks apply to authentic sequences only")
    spec = spec_from_manifest(manifest)
    seed = spec.seed if seed is None else int(seed)
    forged, params = _forged_schedule(manifest, kind, param, donor, seed)
    true = np.array([r["true_phase_rad"] for r in manifest["frames"]])
    poses = poses_from_manifest(manifest)
    out = _render_all(spec, poses, forged - true)
    records = [dict(r, true_phase_rad=float(p)) for r, p in zip(manifest["frames"], forged)]
    label = {"kind": "attack", "attack_params": {"kind": kind, **params}}
    return out, dict(manifest, frames=records, label=label)
