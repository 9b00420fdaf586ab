"""Fringe conditioning and single-bin phase tracking."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, optimize

from .errors import (
    BinOutOfRange,
    EmptyImage,
    NoDominantPeak,
    NonFiniteInput,
    OrientationOutOfRange,
    TooShort,
    ValidationError,
)

__all__ = [
    "Profile1D",
    "PhaseTrace",
    "clahe",
    "dominant_frequency",
    "estimate_fringe_orientation",
    "collapse_profile",
    "lock_bin_and_phase",
    "peak_ratio",
    "wrap",
    "accumulate_phase",
]

DOMINANCE = 3.0
MIN_PROFILE = 32


@dataclass
class Profile1D:
    samples: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).ravel()
        if len(self.samples) < MIN_PROFILE:
            raise TooShort(f"profile needs at least {MIN_PROFILE} samples")
        if not np.all(np.isfinite(self.samples)):
            raise NonFiniteInput("profile contains non-finite samples")


@dataclass
class PhaseTrace:
    locked_bin: int
    wrapped: np.ndarray
    cumulative: np.ndarray
    quality: np.ndarray
    orientation_deg: float = 0.0


# --------------------------------------------------------------------- CLAHE

def _clip_histogram(hist, limit):
    """Clip each bin at ``limit`` and spread the excess as OpenCV does."""
    nbins = hist.shape[-1]
    excess = np.maximum(hist - limit, 0).sum(axis=-1)
    hist = np.minimum(hist, limit)
    batch = excess // nbins
    residual = excess - batch * nbins
    hist = hist + batch[..., None]
    out = hist.reshape(-1, nbins)
    for row, res in zip(out, residual.ravel()):
        if res > 0:
            step = max(nbins // res, 1)
            idx = np.arange(0, nbins, step)[:res]
            row[idx] += 1
    return out.reshape(hist.shape)


def clahe(image, tiles=(8, 8), clip_limit=2.0):
    """Contrast-limited adaptive histogram equalisation.

    Parameters
    ----------
    image : ndarray
        2D ``uint8`` image, or a float image scaled to ``[0, 1]``.
    tiles : (int, int)
        Tile grid as ``(columns, rows)``.
    clip_limit : float
        Histogram bins are clipped at ``clip_limit`` times the mean bin
        count; ``np.inf`` disables clipping.

    Returns
    -------
    ndarray
        Same shape and dtype family as ``image``. Float images are mapped
        through a linearly interpolated lookup table, so no quantisation is
        introduced.

    Notes
    -----
    Tiles whose histogram occupies a single bin map through the identity.
    """
    img = np.asarray(image)
    if img.ndim != 2 or img.size == 0:
        raise EmptyImage("clahe needs a nonempty 2D image")
    tx, ty = int(tiles[0]), int(tiles[1])
    if tx < 1 or ty < 1:
        raise ValidationError("tile grid must be at least 1x1")
    if not clip_limit >= 1:
        raise ValidationError("clip_limit must be >= 1")
    is_int = img.dtype == np.uint8
    v = img.astype(float) if is_int else np.clip(img.astype(float), 0.0, 1.0) * 255.0
    H, W = v.shape
    tw, th = -(-W // tx), -(-H // ty)
    pad_w, pad_h = tw * tx - W, th * ty - H
    vp = np.pad(v, ((0, pad_h), (0, pad_w)), mode="reflect") if (pad_w or pad_h) else v
    if vp.shape != (th * ty, tw * tx):  # reflect needs size > pad; fall back to edge
        vp = np.pad(v, ((0, pad_h), (0, pad_w)), mode="edge")
    bins = np.clip(vp.astype(np.int64), 0, 255)
    blocks = bins.reshape(ty, th, tx, tw).transpose(0, 2, 1, 3).reshape(ty, tx, -1)
    area = th * tw
    offs = (np.arange(ty * tx) * 256).reshape(ty, tx, 1)
    hist = np.bincount((blocks + offs).ravel(), minlength=ty * tx * 256).reshape(ty, tx, 256)
    single = (hist > 0).sum(axis=-1) == 1
    if np.isfinite(clip_limit):
        limit = max(int(clip_limit * area / 256), 1)
        hist = _clip_histogram(hist, limit)
    lut = np.cumsum(hist, axis=-1) * (255.0 / area)
    if is_int:
        lut = np.clip(np.floor(lut + 0.5), 0, 255)
    lut[single] = np.arange(256.0)

    # bilinear blend of the four surrounding tile mappings
    def coords(n, size, count):
        f = np.arange(n) / size - 0.5
        lo = np.floor(f).astype(int)
        a = f - lo
        return np.clip(lo, 0, count - 1), np.clip(lo + 1, 0, count - 1), a

    x1, x2, xa = coords(W, tw, tx)
    y1, y2, ya = coords(H, th, ty)
    if is_int:
        k = v.astype(np.int64)

        def m(yi, xi):
            return lut[yi[:, None], xi[None, :], k]
    else:
        k0 = np.clip(np.floor(v).astype(np.int64), 0, 254)
        fr = v - k0

        def m(yi, xi):
            lo = lut[yi[:, None], xi[None, :], k0]
            hi = lut[yi[:, None], xi[None, :], k0 + 1]
            return lo + fr * (hi - lo)

    xa = xa[None, :]
    ya = ya[:, None]
    out = (m(y1, x1) * (1 - xa) + m(y1, x2) * xa) * (1 - ya) + (m(y2, x1) * (1 - xa) + m(y2, x2) * xa) * ya
    if is_int:
        return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return np.clip(out / 255.0, 0.0, 1.0)


# --------------------------------------------------------------- orientation

def dominant_frequency(image):
    """Continuous ``(fx, fy)`` (cycles per pixel) of the strongest non-DC spectral peak."""
    a = np.asarray(image, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise EmptyImage("need a nonempty 2D image")
    a = a - a.mean()
    H, W = a.shape
    mag = np.abs(np.fft.fft2(a))
    mag[0, 0] = 0.0
    peak = mag.max()
    med = np.median(np.delete(mag.ravel(), 0))
    if peak <= 1e-9 * a.size or peak < DOMINANCE * med:
        raise NoDominantPeak("no dominant fringe frequency")
    iy, ix = np.unravel_index(np.argmax(mag), mag.shape)
    f0 = np.array([(ix if ix <= W // 2 else ix - W) / W, (iy if iy <= H // 2 else iy - H) / H])
    xs = np.arange(W)
    ys = np.arange(H)

    def neg_power(f):
        ex = np.exp(-2j * np.pi * f[0] * xs)
        ey = np.exp(-2j * np.pi * f[1] * ys)
        return -abs(ey @ a @ ex) ** 2

    res = optimize.minimize(neg_power, f0, method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-12 * peak**2, "maxiter": 400})
    return float(res.x[0]), float(res.x[1])


def estimate_fringe_orientation(canonical_image):
    """Fringe-line angle from vertical, in degrees within ``(-90, 90]``.

    The angle is that of the fringe normal measured from +x (columns)
    towards +y (rows), taken from the dominant spectral peak refined off
    the FFT grid.
    """
    fx, fy = dominant_frequency(canonical_image)
    ang = np.degrees(np.arctan2(fy, fx))
    if ang <= -90:
        ang += 180
    elif ang > 90:
        ang -= 180
    return float(ang)


def collapse_profile(canonical_image, orientation, frame_index=0):
    """Rotate fringes upright (bilinear) and average the central 80% of rows."""
    if not abs(orientation) < 45:
        raise OrientationOutOfRange(f"|orientation| must be < 45 deg, got {orientation}")
    a = np.asarray(canonical_image, dtype=float)
    H, W = a.shape
    if orientation != 0:
        th = np.radians(orientation)
        c, s = np.cos(th), np.sin(th)
        cx, cy = (W - 1) / 2.0, (H - 1) / 2.0
        yy, xx = np.mgrid[0:H, 0:W].astype(float)
        dx, dy = xx - cx, yy - cy
        a = ndimage.map_coordinates(a, [cy + s * dx + c * dy, cx + c * dx - s * dy], order=1, mode="nearest")
    m = int(round(0.1 * H))
    return Profile1D(a[m:H - m].mean(axis=0), frame_index)


# --------------------------------------------------------------- phase tools

def _band(n):
    return 2, n // 2 - 1


def peak_ratio(profile, k):
    """Magnitude at bin ``k`` over the median magnitude of the search band."""
    X = np.abs(np.fft.fft(profile.samples))
    lo, hi = _band(len(profile.samples))
    med = np.median(X[lo:hi + 1])
    return float(X[k] / med) if med > 0 else float("inf")


def lock_bin_and_phase(profile, locked_bin=None):
    """Return ``(k, phase)`` of the dominant fringe bin.

    Without ``locked_bin`` the strongest bin in ``[2, N/2 - 1]`` is chosen
    and must exceed three times the band median. The phase is the argument
    of the DFT coefficient, in ``[-pi, pi)``.
    """
    x = profile.samples
    n = len(x)
    X = np.fft.fft(x)
    lo, hi = _band(n)
    if locked_bin is None:
        mag = np.abs(X[lo:hi + 1])
        k = lo + int(np.argmax(mag))
        if mag.max() <= 1e-12 * (np.abs(X[0]) + 1) or mag.max() < DOMINANCE * np.median(mag):
            raise NoDominantPeak("no bin dominates the profile spectrum")
    else:
        k = int(locked_bin)
        if not lo <= k <= hi:
            raise BinOutOfRange(f"bin {k} outside [{lo}, {hi}]")
    return k, float(wrap(np.angle(X[k])))


def wrap(theta):
    """``((theta + pi) mod 2 pi) - pi``, landing in ``[-pi, pi)``."""
    t = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(t)):
        raise NonFiniteInput("wrap needs finite input")
    w = np.mod(t + np.pi, 2 * np.pi) - np.pi
    w = np.where(w >= np.pi, w - 2 * np.pi, w)
    return w if w.ndim else float(w)


def accumulate_phase(wrapped_phases):
    """Cumulative phase from per-frame wrapped phases, starting at 0."""
    p = np.asarray(wrapped_phases, dtype=float)
    if p.ndim != 1 or len(p) < 2:
        raise TooShort("need at least two phase samples")
    return np.concatenate([[0.0], np.cumsum(wrap(np.diff(p)))])
