"""Deterministic synthetic science/reference/difference frames and labeled
stamp corpora.

Real detections are circular-Gaussian point sources. Bogus archetypes mimic
the common subtraction failures: dipole residuals from kernel mismatch,
masked saturation holes with bright rims, isolated hot pixels, and plain
noise fluctuations. Everything is a pure function of (config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stamps import STAMP_SIZE, ImageFrame, Stamp, normalize_stamp

FWHM_TO_SIGMA = 1.0 / 2.35482

BOGUS_ARCHETYPES = ("dipole", "hole", "hot_pixel", "noise")


@dataclass(frozen=True)
class FieldConfig:
    width: int = 512
    height: int = 512
    n_static: int = 80
    n_transient: int = 6
    mag_range: tuple[float, float] = (14.0, 18.5)
    psf_fwhm: float = 3.0
    sky_level: float = 100.0
    noise_sigma: float = 5.0
    dipole_rate: float = 0.15
    saturation_rate: float = 0.05
    hot_pixel_rate: float = 2e-5
    zero_point: float = 25.0
    pixel_scale: float = 1.2
    min_separation: float = 24.0
    seed: int = 0

    def __post_init__(self):
        if self.n_static < 0 or self.n_transient < 0:
            raise ValueError("source counts must be >= 0")
        if self.psf_fwhm <= 0:
            raise ValueError("PSF fwhm must be positive")
        if self.noise_sigma <= 0:
            raise ValueError("noise sigma must be positive")


@dataclass(frozen=True)
class TruthEntry:
    kind: str
    x: float
    y: float
    flux: float = 0.0
    magnitude: float = 0.0


def _add_gaussian(img: np.ndarray, x0: float, y0: float, flux: float, sigma: float) -> None:
    h, w = img.shape
    r = int(math.ceil(4.0 * sigma))
    xlo, xhi = max(0, int(x0) - r), min(w, int(x0) + r + 1)
    ylo, yhi = max(0, int(y0) - r), min(h, int(y0) + r + 1)
    if xlo >= xhi or ylo >= yhi:
        return
    yy, xx = np.ogrid[ylo:yhi, xlo:xhi]
    prof = np.exp(-((xx - x0) ** 2 + (yy - y0) ** 2) / (2.0 * sigma ** 2))
    img[ylo:yhi, xlo:xhi] += flux / (2.0 * math.pi * sigma ** 2) * prof


def _add_hole(img: np.ndarray, x0: float, y0: float, depth: float, radius: float) -> None:
    # masked saturation core: flat negative disk with a bright rim
    h, w = img.shape
    r = int(math.ceil(radius + 4))
    xlo, xhi = max(0, int(x0) - r), min(w, int(x0) + r + 1)
    ylo, yhi = max(0, int(y0) - r), min(h, int(y0) + r + 1)
    if xlo >= xhi or ylo >= yhi:
        return
    yy, xx = np.ogrid[ylo:yhi, xlo:xhi]
    dist = np.sqrt((xx - x0) ** 2 + (yy - y0) ** 2)
    img[ylo:yhi, xlo:xhi] -= depth * (dist <= radius)
    img[ylo:yhi, xlo:xhi] += 0.8 * depth * np.exp(-((dist - radius) ** 2) / 2.0)


def _place_positions(rng, n, width, height, min_sep, margin=8.0, existing=None):
    placed = list(existing) if existing else []
    out = []
    attempts = 0
    while len(out) < n and attempts < 200 * max(1, n):
        attempts += 1
        x = rng.uniform(margin, width - margin)
        y = rng.uniform(margin, height - margin)
        if all((x - px) ** 2 + (y - py) ** 2 >= min_sep ** 2 for px, py in placed):
            placed.append((x, y))
            out.append((x, y))
    if len(out) < n:
        raise RuntimeError(f"could not place {n} sources with separation {min_sep}")
    return out


def synth_field(cfg: FieldConfig):
    """Render one aligned science/reference/difference frame triple.

    Static sources appear in science and reference; transients only in
    science. The difference frame is the ideal subtraction (transients
    only) plus injected artifact residuals plus fresh sky noise at the
    configured sigma. Returns (science, reference, difference, truth).
    """
    rng = np.random.default_rng(cfg.seed)
    sigma_psf = cfg.psf_fwhm * FWHM_TO_SIGMA
    shape = (cfg.height, cfg.width)

    static_pos = _place_positions(rng, cfg.n_static, cfg.width, cfg.height, cfg.min_separation)
    transient_pos = _place_positions(
        rng, cfg.n_transient, cfg.width, cfg.height, cfg.min_separation, existing=static_pos
    )

    def draw_mag():
        return rng.uniform(cfg.mag_range[0], cfg.mag_range[1])

    truth = []
    static_img = np.zeros(shape)
    for x, y in static_pos:
        m = draw_mag()
        flux = 10.0 ** ((cfg.zero_point - m) / 2.5)
        _add_gaussian(static_img, x, y, flux, sigma_psf)
        truth.append(TruthEntry("static", x, y, flux, m))

    transient_img = np.zeros(shape)
    for x, y in transient_pos:
        m = draw_mag()
        flux = 10.0 ** ((cfg.zero_point - m) / 2.5)
        _add_gaussian(transient_img, x, y, flux, sigma_psf)
        truth.append(TruthEntry("transient", x, y, flux, m))

    artifacts = np.zeros(shape)
    static_truth = truth[:cfg.n_static]
    for (x, y), entry in zip(static_pos, static_truth):
        if rng.random() < cfg.dipole_rate:
            angle = rng.uniform(0, 2 * math.pi)
            sep = rng.uniform(1.0, 3.0)
            dx, dy = 0.5 * sep * math.cos(angle), 0.5 * sep * math.sin(angle)
            lobe = 0.15 * entry.flux
            _add_gaussian(artifacts, x + dx, y + dy, lobe, sigma_psf)
            _add_gaussian(artifacts, x - dx, y - dy, -lobe, sigma_psf)
            truth.append(TruthEntry("dipole", x, y, lobe))
        elif rng.random() < cfg.saturation_rate:
            depth = 30.0 * cfg.noise_sigma
            _add_hole(artifacts, x, y, depth, radius=3.0 * sigma_psf)
            truth.append(TruthEntry("saturation", x, y, depth))
    n_hot = rng.binomial(cfg.width * cfg.height, cfg.hot_pixel_rate)
    for _ in range(n_hot):
        hx = int(rng.integers(0, cfg.width))
        hy = int(rng.integers(0, cfg.height))
        amp = 20.0 * cfg.noise_sigma
        artifacts[hy, hx] += amp
        truth.append(TruthEntry("hot_pixel", float(hx), float(hy), amp))

    sci_clean = cfg.sky_level + static_img + transient_img
    ref_clean = cfg.sky_level + static_img
    science = sci_clean + rng.normal(0.0, cfg.noise_sigma, shape)
    reference = ref_clean + rng.normal(0.0, cfg.noise_sigma, shape)
    difference = (sci_clean - ref_clean) + artifacts + rng.normal(0.0, cfg.noise_sigma, shape)

    return (
        ImageFrame(science, cfg.pixel_scale, cfg.zero_point, "science"),
        ImageFrame(reference, cfg.pixel_scale, cfg.zero_point, "reference"),
        ImageFrame(difference, cfg.pixel_scale, cfg.zero_point, "difference"),
        truth,
    )


@dataclass(frozen=True)
class StampSetConfig:
    """Knobs for direct stamp-corpus generation (no full frames involved)."""

    psf_fwhm: float = 3.0
    noise_sigma: float = 1.0
    amplitude: float = 10.0  # real-source peak, in units of noise_sigma
    jitter: float = 1.0      # max |offset| of the real source from center, px
    bogus_mix: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        if self.noise_sigma <= 0 or self.psf_fwhm <= 0:
            raise ValueError("noise sigma and fwhm must be positive")
        if len(self.bogus_mix) != len(BOGUS_ARCHETYPES) or not math.isclose(
            sum(self.bogus_mix), 1.0, abs_tol=1e-9
        ):
            raise ValueError("bogus_mix must be 4 fractions summing to 1")


def _raw_real(rng, cfg: StampSetConfig):
    img = rng.normal(0.0, cfg.noise_sigma, (STAMP_SIZE, STAMP_SIZE))
    sigma = cfg.psf_fwhm * FWHM_TO_SIGMA
    x0 = STAMP_SIZE / 2 + rng.uniform(-cfg.jitter, cfg.jitter)
    y0 = STAMP_SIZE / 2 + rng.uniform(-cfg.jitter, cfg.jitter)
    peak = cfg.amplitude * cfg.noise_sigma
    flux = peak * 2.0 * math.pi * sigma ** 2
    _add_gaussian(img, x0, y0, flux, sigma)
    return img, flux


def _raw_bogus(rng, cfg: StampSetConfig, archetype: str):
    img = rng.normal(0.0, cfg.noise_sigma, (STAMP_SIZE, STAMP_SIZE))
    sigma = cfg.psf_fwhm * FWHM_TO_SIGMA
    amp = cfg.amplitude * cfg.noise_sigma
    cx = STAMP_SIZE / 2 + rng.uniform(-1.0, 1.0)
    cy = STAMP_SIZE / 2 + rng.uniform(-1.0, 1.0)
    if archetype == "dipole":
        angle = rng.uniform(0, 2 * math.pi)
        sep = rng.uniform(1.0, 3.0)
        dx, dy = 0.5 * sep * math.cos(angle), 0.5 * sep * math.sin(angle)
        flux = amp * 2.0 * math.pi * sigma ** 2
        _add_gaussian(img, cx + dx, cy + dy, flux, sigma)
        _add_gaussian(img, cx - dx, cy - dy, -flux, sigma)
    elif archetype == "hole":
        _add_hole(img, cx, cy, amp, radius=rng.uniform(4.0, 7.0))
    elif archetype == "hot_pixel":
        img[int(round(cy)), int(round(cx))] += 3.0 * amp
    elif archetype == "noise":
        pass
    else:
        raise ValueError(f"unknown archetype {archetype!r}")
    return img


def synth_archetype_stamps(cfg: StampSetConfig, archetype: str, n: int, seed: int = 0) -> list[Stamp]:
    """n stamps of a single archetype ('real' or one of BOGUS_ARCHETYPES)."""
    rng = np.random.default_rng(seed)
    center = STAMP_SIZE // 2
    out = []
    for _ in range(n):
        if archetype == "real":
            raw, _ = _raw_real(rng, cfg)
            label = "real"
        else:
            raw = _raw_bogus(rng, cfg, archetype)
            label = "bogus"
        out.append(Stamp(normalize_stamp(raw), center, center, 0.0, 0, label))
    return out


def synth_stamp_set(
    cfg: StampSetConfig,
    n_real: int,
    n_bogus: int,
    seed: int = 0,
    zero_point: float = 25.0,
) -> list[Stamp]:
    """Generate a labeled, normalized stamp corpus.

    Real stamps are near-centered PSF profiles; bogus stamps draw an
    archetype per cfg.bogus_mix. Real stamps come first in the returned
    list; shuffle downstream if order matters.
    """
    if n_real + n_bogus < 1:
        raise ValueError("need at least one stamp")
    rng = np.random.default_rng(seed)
    center = STAMP_SIZE // 2
    out = []
    for _ in range(n_real):
        raw, flux = _raw_real(rng, cfg)
        mag = zero_point - 2.5 * math.log10(flux)
        out.append(Stamp(normalize_stamp(raw), center, center, mag, 0, "real"))
    kinds = rng.choice(len(BOGUS_ARCHETYPES), size=n_bogus, p=cfg.bogus_mix)
    for k in kinds:
        raw = _raw_bogus(rng, cfg, BOGUS_ARCHETYPES[k])
        out.append(Stamp(normalize_stamp(raw), center, center, 0.0, 0, "bogus"))
    return out
