import numpy as np
import pytest

from somvet.stamps import as_pixel_array, detect_sources
from somvet.synth import (
    BOGUS_ARCHETYPES,
    FieldConfig,
    StampSetConfig,
    synth_archetype_stamps,
    synth_field,
    synth_stamp_set,
)


def quiet_config(**kw):
    base = dict(
        width=256, height=256, n_static=0, n_transient=0,
        dipole_rate=0.0, saturation_rate=0.0, hot_pixel_rate=0.0,
        noise_sigma=5.0, seed=0,
    )
    base.update(kw)
    return FieldConfig(**base)


def test_empty_field_difference_is_pure_noise():
    _, _, difference, truth = synth_field(quiet_config())
    assert truth == []
    sample_sigma = difference.pixels.std()
    assert abs(sample_sigma - 5.0) / 5.0 < 0.05
    assert abs(float(difference.pixels.mean())) < 0.5


def test_transient_flux_recovered_within_10_percent():
    cfg = quiet_config(n_transient=1, mag_range=(14.0, 14.0), seed=3)
    _, _, difference, truth = synth_field(cfg)
    t = [e for e in truth if e.kind == "transient"][0]
    dets = detect_sources(difference, 3.0)
    assert len(dets) == 1
    assert abs(dets[0].flux - t.flux) / t.flux < 0.10
    assert abs(dets[0].x - t.x) < 0.5 and abs(dets[0].y - t.y) < 0.5


def test_fields_are_bit_reproducible():
    cfg = FieldConfig(width=200, height=200, n_static=20, n_transient=3, seed=77)
    a = synth_field(cfg)
    b = synth_field(cfg)
    for fa, fb in zip(a[:3], b[:3]):
        assert np.array_equal(fa.pixels, fb.pixels)
    assert a[3] == b[3]


def test_static_sources_cancel_in_difference():
    cfg = quiet_config(n_static=10, mag_range=(14.0, 15.0), seed=5)
    science, reference, difference, truth = synth_field(cfg)
    assert len(detect_sources(science, 5.0)) == 10
    assert detect_sources(difference, 5.0) == []


def test_artifacts_appear_in_difference_only():
    cfg = quiet_config(n_static=12, mag_range=(13.0, 14.0), dipole_rate=1.0, seed=6)
    science, reference, difference, truth = synth_field(cfg)
    dipoles = [e for e in truth if e.kind == "dipole"]
    assert len(dipoles) == 12
    dets = detect_sources(difference, 3.0)
    assert dets, "dipole residuals must be detectable on the difference frame"


def test_stamp_set_counts_and_labels_exact():
    stamps = synth_stamp_set(StampSetConfig(), 37, 63, seed=1)
    labels = [s.label for s in stamps]
    assert labels.count("real") == 37
    assert labels.count("bogus") == 63


def test_stamp_set_50_50_mixture_exact():
    stamps = synth_stamp_set(StampSetConfig(), 500, 500, seed=2)
    labels = [s.label for s in stamps]
    assert labels.count("real") == 500 and labels.count("bogus") == 500


def test_stamp_set_deterministic():
    a = synth_stamp_set(StampSetConfig(), 20, 20, seed=9)
    b = synth_stamp_set(StampSetConfig(), 20, 20, seed=9)
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.pixels, sb.pixels)
        assert sa.label == sb.label


def test_real_stamps_centered():
    stamps = synth_archetype_stamps(StampSetConfig(amplitude=10.0), "real", 100, seed=4)
    for s in stamps:
        py, px = np.unravel_index(np.argmax(s.pixels), (32, 32))
        assert abs(py - 16) <= 2 and abs(px - 16) <= 2


def test_dipole_stamps_have_both_extremes():
    stamps = synth_archetype_stamps(StampSetConfig(amplitude=10.0), "dipole", 50, seed=5)
    for s in stamps:
        assert s.pixels.max() > 0.9
        assert s.pixels.min() < 0.1


def test_stamp_pixels_normalized():
    stamps = synth_stamp_set(StampSetConfig(), 50, 50, seed=6)
    pix = as_pixel_array(stamps)
    assert pix.min() >= 0.0 and pix.max() <= 1.0


def test_nearest_centroid_separability_95_percent():
    # per-archetype centroids from a training half, binary decision on holdout
    cfg = StampSetConfig(amplitude=10.0)
    kinds = ["real"] + list(BOGUS_ARCHETYPES)
    train, test = {}, []
    for k, kind in enumerate(kinds):
        batch = synth_archetype_stamps(cfg, kind, 400, seed=100 + k)
        pix = as_pixel_array(batch).reshape(400, -1)
        train[kind] = pix[:200].mean(axis=0)
        test.append((pix[200:], kind == "real"))
    centroids = np.stack([train[k] for k in kinds])
    is_real = np.array([k == "real" for k in kinds])
    hits = total = 0
    for pix, want in test:
        d = ((pix[:, None, :] - centroids[None]) ** 2).sum(axis=2)
        pred = is_real[d.argmin(axis=1)]
        hits += int((pred == want).sum())
        total += len(pred)
    assert hits / total >= 0.95


def test_truth_closure_bright_transients_recovered():
    cfg = quiet_config(n_transient=5, mag_range=(14.5, 15.5), seed=8)
    _, _, difference, truth = synth_field(cfg)
    dets = detect_sources(difference, 3.0)
    for t in truth:
        if t.kind != "transient":
            continue
        # flux >= 10x noise over the PSF footprint: must be recovered
        assert any(abs(d.x - t.x) < 2 and abs(d.y - t.y) < 2 for d in dets)


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        FieldConfig(noise_sigma=0.0)
    with pytest.raises(ValueError):
        StampSetConfig(bogus_mix=(0.5, 0.5, 0.0, 0.5))
    with pytest.raises(ValueError):
        synth_stamp_set(StampSetConfig(), 0, 0, seed=0)
