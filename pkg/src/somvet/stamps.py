"""From image frames to normalized 32x32 detection stamps.

Covers threshold-based source extraction on a frame, cutout extraction in
difference-coordinate (DC) or science-coordinate (SC) mode, the
magnitude-dependent cross-match radius used to pair science detections
with their difference-image counterparts, and the piecewise pixel
normalization that maps background to 0.5, peak to 1 and the low tail
to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

STAMP_SIZE = 32
HALF = STAMP_SIZE // 2
FAINT_LIMIT = 21.0       # detections fainter than this are dropped
EDGE_MARGIN = 50         # minimum distance (px) from any frame edge
OFFSET_FLOOR = 3.0       # arcsec, lower bound of the cross-match radius

FRAME_KINDS = ("science", "reference", "difference")
LABELS = ("bogus", "real", "unlabeled")


@dataclass
class ImageFrame:
    """Single-precision pixel raster with the metadata the pipeline needs."""

    pixels: np.ndarray
    pixel_scale: float = 1.2
    zero_point: float = 25.0
    kind: str = "science"

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 2:
            raise ValueError(f"frame pixels must be 2-d, got shape {self.pixels.shape}")
        if self.pixel_scale <= 0:
            raise ValueError("pixel scale must be positive")
        if self.kind not in FRAME_KINDS:
            raise ValueError(f"unknown frame kind {self.kind!r}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Detection:
    """One extracted source: centroid, background-subtracted flux, magnitude."""

    x: float
    y: float
    flux: float
    magnitude: float
    frame_kind: str = "science"


@dataclass
class Stamp:
    """Normalized 32x32 cutout plus where it came from."""

    pixels: np.ndarray
    x: float = 0.0
    y: float = 0.0
    magnitude: float = 0.0
    frame_id: int = 0
    label: str = "unlabeled"

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if self.pixels.shape != (STAMP_SIZE, STAMP_SIZE):
            raise ValueError(f"stamp must be {STAMP_SIZE}x{STAMP_SIZE}, got {self.pixels.shape}")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("stamp pixels must be normalized to [0, 1]")
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")


@dataclass(frozen=True)
class OffsetFit:
    """Gaussian-in-magnitude cross-match radius, floored at 3 arcsec."""

    amplitude: float = 46.3
    m0: float = 3.7
    sigma: float = 4.4
    floor: float = OFFSET_FLOOR

    def __post_init__(self):
        if self.amplitude <= self.floor:
            raise ValueError("fit amplitude must exceed the floor")
        if self.sigma <= 0:
            raise ValueError("fit sigma must be positive")


def as_pixel_array(stamps) -> np.ndarray:
    """Stack a stamp list into an (n, 32, 32) float32 array."""
    return np.stack([s.pixels for s in stamps]) if stamps else np.empty((0, 32, 32), np.float32)


def labels_of(stamps) -> np.ndarray:
    return np.array([s.label for s in stamps])


def normalize_stamp(raw: np.ndarray) -> np.ndarray:
    """Map raw counts to [0, 1] with background at 0.5.

    Above-median pixels scale linearly so the peak maps to 1; below-median
    pixels scale against the 5th percentile of the below-median population
    (clamped at 0), which keeps strongly negative subtraction outliers from
    stretching the scale. A branch whose denominator degenerates returns a
    flat 0.5.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("stamp contains non-finite pixels")
    med = float(np.median(raw))
    peak = float(raw.max())
    below = raw[raw < med]
    p05 = float(np.percentile(below, 5.0)) if below.size else med

    out = np.full(raw.shape, 0.5)
    hi = raw >= med
    if peak > med:
        out[hi] = 0.5 + 0.5 * (raw[hi] - med) / (peak - med)
    if med > p05:
        ratio = (med - raw[~hi]) / (med - p05)
        out[~hi] = 0.5 * (1.0 + np.maximum(-ratio, -1.0))
    return out.astype(np.float32)


def detect_sources(frame: ImageFrame, k_sigma: float = 3.0, min_area: int = 3) -> list[Detection]:
    """Threshold extraction: global median background, MAD noise, 8-connected
    components, flux-weighted centroids.

    Components smaller than min_area pixels are dropped; at 3 sigma a frame
    of any size would otherwise yield a steady stream of single-pixel noise
    detections. Detections come back sorted by (y, x); an empty list is a
    valid result.
    """
    img = frame.pixels.astype(np.float64)
    background = float(np.median(img))
    noise = 1.4826 * float(np.median(np.abs(img - background)))
    mask = img > background + k_sigma * noise
    if not mask.any():
        return []
    lab = kernels.label_components(mask)
    flat = lab.ravel()
    sel = flat >= 0
    roots = flat[sel]
    uniq, inv = np.unique(roots, return_inverse=True)
    area = np.bincount(inv)
    weights = (img.ravel()[sel] - background)
    flux = np.bincount(inv, weights=weights)
    ys, xs = np.divmod(np.flatnonzero(sel), np.int64(lab.shape[1]))
    cx = np.bincount(inv, weights=weights * xs) / flux
    cy = np.bincount(inv, weights=weights * ys) / flux
    order = np.lexsort((cx, cy))
    out = []
    for i in order:
        if area[i] < min_area:
            continue
        mag = frame.zero_point - 2.5 * math.log10(flux[i])
        out.append(Detection(float(cx[i]), float(cy[i]), float(flux[i]), mag, frame.kind))
    return out


def cutout_stamp(frame: ImageFrame, x: float, y: float) -> np.ndarray:
    """Raw 32x32 window centered on (x, y); callers must keep 16 px off edges."""
    cx = int(np.rint(x))
    cy = int(np.rint(y))
    x0, y0 = cx - HALF, cy - HALF
    if x0 < 0 or y0 < 0 or x0 + STAMP_SIZE > frame.width or y0 + STAMP_SIZE > frame.height:
        raise ValueError(
            f"cutout at ({x:.1f}, {y:.1f}) leaves the {frame.width}x{frame.height} frame"
        )
    return frame.pixels[y0:y0 + STAMP_SIZE, x0:x0 + STAMP_SIZE].copy()


def crossmatch_radius(m: float, fit: OffsetFit) -> float:
    """Maximum science-to-difference offset (arcsec) accepted at magnitude m."""
    return max(fit.floor, fit.amplitude * math.exp(-((m - fit.m0) ** 2) / (2.0 * fit.sigma ** 2)))


def _gaussian_mag(m, a, m0, sigma):
    return a * np.exp(-((m - m0) ** 2) / (2.0 * sigma ** 2))


def fit_offset_threshold(pairs, floor: float = OFFSET_FLOOR, mag_limit: float = 13.5) -> OffsetFit:
    """Fit the magnitude-dependent offset envelope from (magnitude, offset) pairs.

    Pairs are binned in 0.5-mag bins; each bin's upper limit is the 97.72nd
    percentile of its offsets (a 2-sigma upper bound). The Gaussian
    amplitude/center/width are fit to the bin upper limits below mag_limit
    by a coarse grid search followed by Gauss-Newton refinement; the floor
    stays fixed.
    """
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("pairs must be an (n, 2) array of (magnitude, offset)")
    mags, offsets = pairs[:, 0], pairs[:, 1]
    keep = mags < mag_limit
    if keep.sum() < 100:
        raise ValueError(f"need at least 100 pairs below magnitude {mag_limit}")
    mags, offsets = mags[keep], offsets[keep]
    edges = np.arange(np.floor(mags.min() * 2) / 2, mags.max() + 0.5, 0.5)
    centers, limits = [], []
    for lo in edges[:-1]:
        in_bin = (mags >= lo) & (mags < lo + 0.5)
        if in_bin.sum() >= 3:
            centers.append(lo + 0.25)
            limits.append(np.percentile(offsets[in_bin], 97.72))
    if len(centers) < 5:
        raise ValueError(f"need >= 5 populated 0.5-mag bins below {mag_limit}, got {len(centers)}")
    x = np.array(centers)
    y = np.array(limits)

    # coarse grid, then Gauss-Newton on (a, m0, sigma)
    best = None
    for a in np.linspace(max(y.max(), floor + 0.5), 2.0 * y.max(), 8):
        for m0 in np.linspace(x.min() - 5.0, x.max(), 10):
            for sig in np.linspace(0.5, 10.0, 10):
                r = y - _gaussian_mag(x, a, m0, sig)
                c = float(r @ r)
                if best is None or c < best[0]:
                    best = (c, a, m0, sig)
    _, a, m0, sig = best
    theta = np.array([a, m0, sig])
    for _ in range(100):
        g = _gaussian_mag(x, *theta)
        r = y - g
        d_a = g / theta[0]
        d_m0 = g * (x - theta[1]) / theta[2] ** 2
        d_sig = g * (x - theta[1]) ** 2 / theta[2] ** 3
        jac = np.stack([d_a, d_m0, d_sig], axis=1)
        jtj = jac.T @ jac + 1e-9 * np.eye(3)
        step = np.linalg.solve(jtj, jac.T @ r)
        theta = theta + step
        theta[2] = abs(theta[2])
        if np.max(np.abs(step)) < 1e-10:
            break
    residual = float(np.sqrt(np.mean((y - _gaussian_mag(x, *theta)) ** 2)))
    if not np.all(np.isfinite(theta)):
        raise RuntimeError(f"offset fit did not converge (rms residual {residual:.3g})")
    if theta[0] <= floor:
        raise ValueError(
            f"degenerate offset fit: amplitude {theta[0]:.2f} does not rise above the "
            f"{floor} arcsec floor"
        )
    return OffsetFit(float(theta[0]), float(theta[1]), float(theta[2]), floor)


def offset_pairs(science_dets, difference_dets, pixel_scale: float) -> np.ndarray:
    """(magnitude, offset arcsec) of each science detection vs its nearest
    difference detection; used both to fit the envelope and to cross-match."""
    if not science_dets or not difference_dets:
        return np.empty((0, 2))
    sxy = np.array([[d.x, d.y] for d in science_dets])
    dxy = np.array([[d.x, d.y] for d in difference_dets])
    d2 = ((sxy[:, None, :] - dxy[None, :, :]) ** 2).sum(axis=2)
    nearest = np.sqrt(d2.min(axis=1)) * pixel_scale
    mags = np.array([d.magnitude for d in science_dets])
    return np.stack([mags, nearest], axis=1)


def _passes_cuts(x: float, y: float, mag: float, frame: ImageFrame) -> bool:
    if mag > FAINT_LIMIT:
        return False
    return (
        EDGE_MARGIN <= x < frame.width - EDGE_MARGIN
        and EDGE_MARGIN <= y < frame.height - EDGE_MARGIN
    )


def audit_sc_filtering(stamps: list[Stamp], truth, frame: ImageFrame, radius_px: float = 3.0) -> dict:
    """Over-filtering rate of an SC stamp set against injected ground truth.

    Counts the injected transients that pass the faint/edge cuts but have no
    stamp within radius_px, as a fraction of all eligible transients.
    """
    eligible = [
        t for t in truth
        if t.kind == "transient"
        and t.magnitude <= FAINT_LIMIT
        and EDGE_MARGIN <= t.x < frame.width - EDGE_MARGIN
        and EDGE_MARGIN <= t.y < frame.height - EDGE_MARGIN
    ]
    missed = [
        t for t in eligible
        if not any((s.x - t.x) ** 2 + (s.y - t.y) ** 2 <= radius_px ** 2 for s in stamps)
    ]
    rate = len(missed) / len(eligible) if eligible else 0.0
    return {"eligible": len(eligible), "missed": len(missed), "over_filter_rate": rate}


def build_stamp_set(
    science: ImageFrame,
    difference: ImageFrame,
    mode: str,
    fit: OffsetFit | None = None,
    k_sigma: float = 3.0,
    frame_id: int = 0,
) -> list[Stamp]:
    """Extract, filter and normalize one frame pair's detection stamps.

    DC mode detects on the difference frame and cuts out there. SC mode
    detects on the science frame, keeps only detections with a difference-
    frame counterpart within the magnitude-dependent radius, and cuts out
    from the difference frame at the science coordinates. Both modes drop
    detections fainter than magnitude 21 or within 50 px of an edge.
    """
    if science.pixels.shape != difference.pixels.shape:
        raise ValueError("science and difference frames must share dimensions")
    stamps = []
    if mode == "dc":
        for det in detect_sources(difference, k_sigma):
            if not _passes_cuts(det.x, det.y, det.magnitude, difference):
                continue
            raw = cutout_stamp(difference, det.x, det.y)
            stamps.append(
                Stamp(normalize_stamp(raw), det.x, det.y, det.magnitude, frame_id)
            )
    elif mode == "sc":
        fit = fit or OffsetFit()
        sci_dets = detect_sources(science, k_sigma)
        diff_dets = detect_sources(difference, k_sigma)
        if not diff_dets:
            return []
        dxy = np.array([[d.x, d.y] for d in diff_dets])
        for det in sci_dets:
            if not _passes_cuts(det.x, det.y, det.magnitude, science):
                continue
            offs = np.sqrt(((dxy - [det.x, det.y]) ** 2).sum(axis=1)) * science.pixel_scale
            if offs.min() >= crossmatch_radius(det.magnitude, fit):
                continue
            raw = cutout_stamp(difference, det.x, det.y)
            stamps.append(
                Stamp(normalize_stamp(raw), det.x, det.y, det.magnitude, frame_id)
            )
    else:
        raise ValueError(f"mode must be 'dc' or 'sc', got {mode!r}")
    return stamps
