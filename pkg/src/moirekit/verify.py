"""End-to-end check of the fringe-phase / displacement coupling."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu

from . import fringe
from .errors import (
    AmbiguousLayout,
    DegenerateVariance,
    MarkersNotFound,
    MissingManifest,
    PipelineError,
    TracesTooShort,
    ValidationError,
)
from .geometry import (
    CameraModel,
    apply_homography,
    homography_from_correspondences,
    rotation_compensated_displacement,
    solve_planar_pnp,
    warp_to_canonical,
)
from .simulate import BoardGeometry

__all__ = [
    "VerificationReport",
    "detect_fiducials",
    "extract_phase_trace",
    "extract_displacement_trace",
    "pearson",
    "sliding_correlation",
    "verify_sequence",
    "verify",
]

log = logging.getLogger(__name__)

VARIANCE_EPS = 1e-12
CANONICAL_MM_PER_PX = 0.5
EDGE_MARGIN_PX = 3.0
LOW_QUALITY = 1.5


@dataclass
class VerificationReport:
    mode: str
    window: int
    rho_windows: list
    best_correlation: float
    global_rho: float = None
    slope_fit: float = None
    warnings: list = field(default_factory=list)
    excluded: bool = False
    decision: str = None
    tau: float = None
    intrinsics: str = "approx"
    phase_quality: dict = None
    source_id: str = None
    traces: dict = field(default=None, repr=False, compare=False)

    def to_dict(self):
        def num(x):
            return float(x) if x is not None and np.isfinite(x) else None

        return {
            "mode": self.mode,
            "window": self.window,
            "rho_windows": [{"start": int(s), "rho": num(r)} for s, r in self.rho_windows],
            "best_correlation": num(self.best_correlation),
            "global_rho": num(self.global_rho),
            "slope_fit": num(self.slope_fit),
            "warnings": list(self.warnings),
            "excluded": bool(self.excluded),
            "decision": self.decision,
            "tau": num(self.tau),
            "intrinsics": self.intrinsics,
            "phase_quality": self.phase_quality,
            "source_id": self.source_id,
        }


# ---------------------------------------------------------------- fiducials

def _marker_candidates(f, t, ring_min):
    """Square-ish components below ``t`` whose one-pixel surround is bright."""
    lab, _ = ndimage.label(f < t)
    H, W = f.shape
    out = []
    for i, sl in enumerate(ndimage.find_objects(lab), start=1):
        ys, xs = sl
        h, w = ys.stop - ys.start, xs.stop - xs.start
        if ys.start == 0 or xs.start == 0 or ys.stop == H or xs.stop == W:
            continue
        if h < 2 or w < 2 or max(h, w) / min(h, w) > 1.6:
            continue
        area = int((lab[sl] == i).sum())
        if area < 4 or area / (h * w) < 0.45:
            continue
        pad = (slice(max(ys.start - 2, 0), min(ys.stop + 2, H)), slice(max(xs.start - 2, 0), min(xs.stop + 2, W)))
        m = lab[pad] == i
        ring = ndimage.binary_dilation(m) & ~m
        if np.median(f[pad][ring]) <= ring_min:
            continue
        out.append((area, pad, m, ring))
    return out


def _weighted_center(f, pad, m, ring):
    patch = f[pad]
    white = np.median(patch[ring])
    black = patch[m].min()
    zone = ndimage.binary_dilation(m)
    wgt = np.clip((white - patch) / max(white - black, 1e-6), 0.0, 1.0) * zone
    yy, xx = np.mgrid[pad[0], pad[1]]
    return np.array([(wgt * xx).sum(), (wgt * yy).sum()]) / wgt.sum()


def _order_quadrants(centers):
    mx, my = centers.mean(axis=0)
    quad = {}
    for c in centers:
        key = (c[0] >= mx, c[1] >= my)
        if key in quad:
            raise AmbiguousLayout("two markers in the same quadrant")
        quad[key] = c
    return np.array([quad[(False, False)], quad[(True, False)], quad[(True, True)], quad[(False, True)]])


def detect_fiducials(frame, board=None):
    """Locate the four marker reference points (TL, TR, BR, BL) in a rendered frame.

    Dark, square-ish, white-surrounded blobs are picked from a global Otsu
    binarisation. Their darkness-weighted centroids give the black-square
    centres, and a homography from those centres maps the known inner
    vertices into the image.

    Notes
    -----
    When the board is small in the image, pixel mixing can open the thin
    quiet zone so a marker merges with the background. The search is then
    repeated at a second Otsu level computed over the dark class alone,
    which separates marker black from background.
    """
    board = board or BoardGeometry()
    f = np.asarray(frame, dtype=float)
    if f.max() > 1.0:
        f = f / 255.0
    if np.ptp(f) == 0:
        raise MarkersNotFound("blank frame")
    t_hi = threshold_otsu(f)
    levels = [t_hi]
    low = f[f < t_hi]
    if low.size and np.ptp(low) > 0:
        levels.append(threshold_otsu(low))
    found = 0
    for t in levels:
        cands = _marker_candidates(f, t, 0.5 * (levels[-1] + t_hi) if t != t_hi else t_hi)
        found = max(found, len(cands))
        if len(cands) < 4:
            continue
        cands.sort(key=lambda c: -c[0])
        centers = np.array([_weighted_center(f, *c[1:]) for c in cands[:4]])
        try:
            ordered = _order_quadrants(centers)
        except AmbiguousLayout:
            if t == levels[-1]:
                raise
            continue
        Hm = homography_from_correspondences(board.marker_centers, ordered)
        return apply_homography(Hm, board.reference_points[:, :2])
    raise MarkersNotFound(f"found {found} marker candidates, need 4")


# -------------------------------------------------------------------- traces

def _rect(w, h):
    return np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]])


def _auto_tiles(n_cycles, shape):
    h, w = shape
    tx = max(1, int(n_cycles))
    return tx, max(1, int(round(tx * h / w)))


def extract_phase_trace(frames, corner_tracks, board=None, clahe_tiles="auto", clip_limit=2.0):
    """Cumulative fringe phase for every frame.

    Each frame's fringe window is warped front-parallel via the homography
    fitted to its marker corners, equalised, rotated upright and collapsed
    to a profile whose locked DFT bin gives the phase. Crop, orientation,
    tile grid and bin are fixed on frame 0.

    Notes
    -----
    The crop is inset by a few image pixels so bright board edges cannot
    bleed in, then trimmed to a whole number of beat periods so the locked
    bin receives no leakage from the mirror frequency. ``clahe_tiles="auto"``
    gives each tile one beat period of width.
    """
    board = board or BoardGeometry()
    frames = np.asarray(frames)
    tracks = np.asarray(corner_tracks, dtype=float)
    if len(frames) < 2 or len(tracks) != len(frames):
        raise ValidationError("need >= 2 frames with one corner set each")
    ref = board.reference_points[:, :2]
    res = CANONICAL_MM_PER_PX

    H0 = homography_from_correspondences(ref, tracks[0])
    q = apply_homography(H0, board.rect_corners("fringe"))
    mm_per_px = board.fringe_region[0] / np.linalg.norm(q[1] - q[0])
    fw = board.fringe_region[0] - 2 * EDGE_MARGIN_PX * mm_per_px
    fh = board.fringe_region[1] - 2 * EDGE_MARGIN_PX * mm_per_px
    if fw <= 0 or fh <= 0:
        raise PipelineError("fringe window too small in the image")
    size = (int(round(fw / res)), int(round(fh / res)))
    first = warp_to_canonical(frames[0] / 255.0, apply_homography(H0, _rect(fw, fh)), size)
    fx, _ = fringe.dominant_frequency(first)
    period = 1.0 / abs(fx)
    n_cyc = int(np.floor(size[0] / period))
    if n_cyc >= 2 and round(n_cyc * period) >= fringe.MIN_PROFILE:
        wc = int(round(n_cyc * period))
        fw = (wc - 1) * n_cyc * period * res / wc
        size = (wc, size[1])
    tiles = _auto_tiles(max(n_cyc, 1), size[::-1]) if clahe_tiles == "auto" else tuple(clahe_tiles)

    k = None
    theta = 0.0
    wrapped, quality = [], []
    rect = _rect(fw, fh)
    for i in range(len(frames)):
        Hi = H0 if i == 0 else homography_from_correspondences(ref, tracks[i])
        can = warp_to_canonical(frames[i] / 255.0, apply_homography(Hi, rect), size)
        can = fringe.clahe(can, tiles, clip_limit)
        if i == 0:
            theta = fringe.estimate_fringe_orientation(can)
        prof = fringe.collapse_profile(can, theta, frame_index=i)
        k, phi = fringe.lock_bin_and_phase(prof, k)
        wrapped.append(phi)
        quality.append(fringe.peak_ratio(prof, k))
    wrapped = np.array(wrapped)
    trace = fringe.PhaseTrace(k, wrapped, fringe.accumulate_phase(wrapped), np.array(quality), theta)
    trace.canonical_size = size
    trace.canonical_pitch = (fw / (size[0] - 1), fh / (size[1] - 1))
    return trace


def _fringe_axis_image(board, corners0, orientation_deg, pitch):
    """Image direction perpendicular to the fringe lines at the board centroid."""
    H = homography_from_correspondences(board.reference_points[:, :2], corners0)
    th = np.radians(orientation_deg)
    normal = np.array([np.cos(th) / pitch[0], np.sin(th) / pitch[1]])
    line = np.array([-normal[1], normal[0]])
    c = board.reference_points[:, :2].mean(axis=0)
    e = 1e-3
    img_line = (apply_homography(H, c + e * line) - apply_homography(H, c - e * line)) / (2 * e)
    img_n = np.array([img_line[1], -img_line[0]])
    img_normal_dir = apply_homography(H, c + e * normal) - apply_homography(H, c - e * normal)
    if img_n @ img_normal_dir < 0:
        img_n = -img_n
    return img_n / np.linalg.norm(img_n)


def extract_displacement_trace(corner_tracks, camera, layout, fringe_axis):
    """Planar PnP on every frame, then rotation-compensated centroid displacement."""
    tracks = np.asarray(corner_tracks, dtype=float)
    if len(tracks) < 2:
        raise ValidationError("need >= 2 frames")
    poses = [solve_planar_pnp(layout, c, camera) for c in tracks]
    return rotation_compensated_displacement(poses, layout, camera, fringe_axis)


# --------------------------------------------------------------- correlation

def pearson(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 3:
        raise ValidationError("pearson needs two equal-length series of >= 3 samples")
    da, db = a - a.mean(), b - b.mean()
    va, vb = np.mean(da**2), np.mean(db**2)
    if va <= VARIANCE_EPS or vb <= VARIANCE_EPS:
        raise DegenerateVariance("a series has (near) zero variance")
    return float(np.clip(np.mean(da * db) / np.sqrt(va * vb), -1.0, 1.0))


def sliding_correlation(phase, displacement, window=30, stride=1):
    """``[(start, rho or None), ...]`` over every full window."""
    p = np.asarray(phase, dtype=float)
    d = np.asarray(displacement, dtype=float)
    if len(p) != len(d):
        raise ValidationError("traces differ in length")
    if len(p) < window:
        raise TracesTooShort(f"traces shorter than the {window}-frame window")
    out = []
    for s in range(0, len(p) - window + 1, stride):
        try:
            out.append((s, pearson(p[s:s + window], d[s:s + window])))
        except DegenerateVariance:
            out.append((s, None))
    return out


# -------------------------------------------------------------------- verify

def _camera_for(manifest, intrinsics, alpha):
    exact = CameraModel.from_dict(manifest["camera"])
    if intrinsics == "exact":
        return exact
    if intrinsics == "approx":
        return CameraModel.approximate(exact.width, exact.height, alpha)
    raise ValidationError(f"intrinsics must be 'exact' or 'approx', got {intrinsics!r}")


def verify_sequence(frames, manifest, mode="tracked", window=30, tau=None,
                    intrinsics="approx", alpha=1.0, delta_mode=False, source_id=None):
    """Run all three stages on in-memory frames and return a report.

    ``tracked`` mode reads corner tracks from the manifest; ``detect``
    mode finds the fiducials in every frame. Stage failures that make the
    score meaningless produce an excluded report rather than an exception.
    """
    if mode not in ("tracked", "detect"):
        raise ValidationError(f"mode must be 'tracked' or 'detect', got {mode!r}")
    board = BoardGeometry.from_dict(manifest["board"])
    camera = _camera_for(manifest, intrinsics, alpha)
    report = VerificationReport(mode=mode, window=window, rho_windows=[], best_correlation=float("nan"),
                                tau=tau, intrinsics=intrinsics, source_id=source_id)
    try:
        if mode == "tracked":
            tracks = np.array([r["corners_px"] for r in manifest["frames"]], dtype=float)
        else:
            tracks = np.array([detect_fiducials(f, board) for f in frames])
        phase = extract_phase_trace(frames, tracks, board)
        axis = _fringe_axis_image(board, tracks[0], phase.orientation_deg, phase.canonical_pitch)
        disp = extract_displacement_trace(tracks, camera, board.layout, axis)
    except PipelineError as exc:
        log.info("verification excluded: %s", exc)
        report.excluded = True
        report.warnings.append(f"stage failure: {type(exc).__name__}: {exc}")
        if tau is not None:
            report.warnings.append("no decision: sequence excluded")
        return report

    Phi, du = phase.cumulative, disp.trans
    report.traces = {"phase": Phi, "wrapped": phase.wrapped, "displacement": du, "raw": disp.raw,
                     "fringe_axis_image": axis}
    report.phase_quality = {
        "locked_bin": int(phase.locked_bin),
        "orientation_deg": float(phase.orientation_deg),
        "min_peak_ratio": float(phase.quality.min()),
        "median_peak_ratio": float(np.median(phase.quality)),
        "n_low_quality": int((phase.quality < LOW_QUALITY).sum()),
    }
    steps = np.abs(np.diff(Phi))
    if np.median(steps) > np.pi / 2:
        report.warnings.append("nyquist: median |dphi| exceeds pi/2, unwrapping may alias")
    if np.ptp(du) < 1.0:
        report.warnings.append("low motion: translational displacement spans under 1 px")
    if report.phase_quality["n_low_quality"]:
        report.warnings.append(f"low phase quality in {report.phase_quality['n_low_quality']} frames")

    a, b = (np.diff(Phi), np.diff(du)) if delta_mode else (Phi, du)
    try:
        report.rho_windows = sliding_correlation(a, b, window)
    except TracesTooShort:
        report.excluded = True
        report.warnings.append("traces shorter than the correlation window")
    defined = [abs(r) for _, r in report.rho_windows if r is not None]
    report.best_correlation = max(defined) if defined else float("nan")
    try:
        report.global_rho = pearson(a, b)
    except DegenerateVariance:
        report.global_rho = None
    if np.var(du) > VARIANCE_EPS:
        report.slope_fit = float(np.polyfit(du, Phi, 1)[0])
    if not defined or not np.isfinite(report.best_correlation):
        report.excluded = True
        report.warnings.append("no defined correlation window: authentication impossible")
    if tau is not None:
        if report.excluded:
            report.warnings.append("no decision: sequence excluded")
        else:
            report.decision = "real" if report.best_correlation >= tau else "fake"
    return report


def verify(sequence_dir, mode="tracked", window=30, tau=None, intrinsics="approx", alpha=1.0,
           delta_mode=False):
    """Verify a sequence directory written by :func:`moirekit.io.write_sequence`."""
    from .io import read_sequence
    from pathlib import Path

    if not (Path(sequence_dir) / "manifest.json").is_file():
        raise MissingManifest(f"{sequence_dir} has no manifest.json")
    frames, manifest = read_sequence(sequence_dir)
    return verify_sequence(frames, manifest, mode, window, tau, intrinsics, alpha, delta_mode,
                           source_id=Path(sequence_dir).name)
