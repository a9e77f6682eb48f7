"""Phantom generation, scan simulation and patch extraction."""

import math

import numpy as np
import pytest

from acqinv.phantom import (
    BRAIN_TISSUES,
    PATCH_MARGIN,
    ScannerProtocol,
    Tissue,
    TissueExhaustedError,
    TissueParams,
    default_protocols,
    extract_patches,
    generate_phantom,
    gradient_echo_signal,
    normalize_scan,
    simulate_scan,
)


def reference_signal(pd, t1, t2star, flip_deg, tr, te):
    # independent re-derivation of the steady-state expression
    theta = math.radians(flip_deg)
    e1 = math.exp(-tr / t1)
    e2 = math.exp(-te / t2star)
    return pd * math.sin(theta) * (1.0 - e1) * e2 / (1.0 - math.cos(theta) * e1)


class TestSignalEquation:
    def test_worked_example(self):
        s = gradient_echo_signal(1.0, 1000.0, 80.0, 20.0, 13.8, 2.8)
        assert s == pytest.approx(0.06184, abs=5e-5)
        assert s == pytest.approx(reference_signal(1.0, 1000.0, 80.0, 20.0, 13.8, 2.8), rel=1e-12)

    def test_saturation_limit(self):
        # theta=90, TR >> T1: E1 -> 0 so S -> PD * exp(-TE/T2star)
        s = gradient_echo_signal(0.8, 50.0, 100.0, 90.0, 50_000.0, 10.0)
        assert s == pytest.approx(0.8 * math.exp(-10.0 / 100.0), rel=1e-9)

    def test_monotone_in_t2star(self):
        grid = [20.0, 40.0, 60.0, 90.0, 150.0, 300.0]
        values = [gradient_echo_signal(1.0, 900.0, t2, 25.0, 12.0, 4.0) for t2 in grid]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_random_points_match_reference(self, rng):
        for _ in range(50):
            pd = rng.uniform(0.1, 1.0)
            t1 = rng.uniform(200.0, 4500.0)
            t2 = rng.uniform(20.0, 400.0)
            flip = rng.uniform(5.0, 90.0)
            tr = rng.uniform(5.0, 100.0)
            te = rng.uniform(1.0, tr * 0.9)
            assert gradient_echo_signal(pd, t1, t2, flip, tr, te) == pytest.approx(
                reference_signal(pd, t1, t2, flip, tr, te), rel=1e-12
            )


class TestDefaultProtocols:
    def test_protocol_a_settings(self):
        a, _ = default_protocols()
        assert (a.flip_angle_deg, a.tr_ms, a.te_ms) == (20.0, 13.8, 2.8)

    def test_protocol_b_settings(self):
        _, b = default_protocols()
        assert (b.flip_angle_deg, b.tr_ms, b.te_ms) == (90.0, 7.9, 4.5)

    def test_tr_exceeds_te(self):
        for proto in default_protocols():
            assert proto.tr_ms > proto.te_ms > 0.0

    def test_background_has_zero_pd(self):
        for proto in default_protocols():
            assert proto.tissue_params[Tissue.BACKGROUND].pd == 0.0

    def test_invalid_protocol_rejected(self):
        a, _ = default_protocols()
        with pytest.raises(ValueError):
            ScannerProtocol(
                name="bad", flip_angle_deg=0.0, tr_ms=10.0, te_ms=2.0,
                tissue_params=a.tissue_params,
            )
        with pytest.raises(ValueError):
            ScannerProtocol(
                name="bad", flip_angle_deg=20.0, tr_ms=2.0, te_ms=10.0,
                tissue_params=a.tissue_params,
            )

    def test_invalid_tissue_params_rejected(self):
        with pytest.raises(ValueError):
            TissueParams(t1_ms=-1.0, t2star_ms=80.0, pd=0.5)
        with pytest.raises(ValueError):
            TissueParams(t1_ms=900.0, t2star_ms=80.0, pd=1.5)


class TestGeneratePhantom:
    def test_all_tissues_present_with_mass(self):
        label_map = generate_phantom(seed=7, size=64, subject_id=0)
        counts = label_map.tissue_counts()
        for tissue in Tissue:
            assert counts[tissue] >= 50, f"{tissue.name} has only {counts[tissue]} px"

    def test_deterministic(self):
        a = generate_phantom(seed=7, size=64, subject_id=0)
        b = generate_phantom(seed=7, size=64, subject_id=0)
        assert np.array_equal(a.labels, b.labels)

    def test_seed_changes_layout(self):
        a = generate_phantom(seed=7, size=64, subject_id=0)
        b = generate_phantom(seed=8, size=64, subject_id=0)
        assert not np.array_equal(a.labels, b.labels)

    def test_default_size(self):
        label_map = generate_phantom(seed=1)
        assert label_map.labels.shape == (256, 256)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            generate_phantom(seed=0, size=30)

    def test_square_and_labels_in_range(self):
        label_map = generate_phantom(seed=3, size=48, subject_id=2)
        assert label_map.labels.shape == (48, 48)
        assert set(np.unique(label_map.labels)) <= {int(t) for t in Tissue}


def _noiseless(proto: ScannerProtocol) -> ScannerProtocol:
    from dataclasses import replace

    return replace(proto, noise_sigma=0.0)


class TestSimulateScan:
    def test_noiseless_piecewise_constant(self):
        label_map = generate_phantom(seed=5, size=64)
        proto = _noiseless(default_protocols()[0])
        scan = simulate_scan(label_map, proto, seed=0)
        for tissue in Tissue:
            values = scan.image[label_map.labels == int(tissue)]
            assert np.all(values == values[0])

    def test_noiseless_matches_closed_form(self):
        label_map = generate_phantom(seed=5, size=64)
        proto = _noiseless(default_protocols()[0])
        scan = simulate_scan(label_map, proto, seed=0)
        for tissue in BRAIN_TISSUES:
            expected = proto.signal(tissue)
            values = scan.image[label_map.labels == int(tissue)]
            assert values[0] == pytest.approx(expected, rel=1e-12)

    def test_background_stays_zero_under_noise(self):
        label_map = generate_phantom(seed=5, size=64)
        scan = simulate_scan(label_map, default_protocols()[1], seed=3)
        assert np.all(scan.image[label_map.labels == int(Tissue.BACKGROUND)] == 0.0)

    def test_noise_std_within_five_percent(self):
        # one 256px phantom gives >1e4 white-matter pixels
        label_map = generate_phantom(seed=11, size=256)
        proto = default_protocols()[0]
        scan = simulate_scan(label_map, proto, seed=42)
        wm = label_map.labels == int(Tissue.WHITE_MATTER)
        assert wm.sum() >= 10_000
        residual = scan.image[wm] - proto.signal(Tissue.WHITE_MATTER)
        assert residual.std() == pytest.approx(proto.effective_noise_sigma(), rel=0.05)

    def test_deterministic(self):
        label_map = generate_phantom(seed=5, size=64)
        proto = default_protocols()[0]
        a = simulate_scan(label_map, proto, seed=9)
        b = simulate_scan(label_map, proto, seed=9)
        assert np.array_equal(a.image, b.image)

    def test_scanner_id_from_protocol(self):
        label_map = generate_phantom(seed=5, size=64)
        pa, pb = default_protocols()
        assert simulate_scan(label_map, pa, seed=0).scanner_id == "A"
        assert simulate_scan(label_map, pb, seed=0).scanner_id == "B"


class TestNormalizeScan:
    def test_bounds(self):
        label_map = generate_phantom(seed=5, size=64)
        scan = simulate_scan(label_map, default_protocols()[0], seed=1)
        normed = normalize_scan(scan.image)
        assert normed.min() == 0.0
        assert normed.max() == 1.0

    def test_constant_image(self):
        assert np.all(normalize_scan(np.full((8, 8), 3.5)) == 0.0)


@pytest.fixture(scope="module")
def scan_and_map():
    label_map = generate_phantom(seed=21, size=96)
    scan = simulate_scan(label_map, default_protocols()[0], seed=2)
    return scan, label_map


class TestExtractPatches:
    def test_count(self, scan_and_map):
        scan, label_map = scan_and_map
        patches = extract_patches(scan, label_map, n_per_tissue=50, seed=0)
        assert len(patches) == 150

    def test_center_label_matches(self, scan_and_map):
        scan, label_map = scan_and_map
        patches = extract_patches(scan, label_map, n_per_tissue=40, seed=1)
        for patch in patches:
            r, c = patch.center
            assert int(label_map.labels[r, c]) == int(patch.tissue)

    def test_window_inside_image(self, scan_and_map):
        scan, label_map = scan_and_map
        patches = extract_patches(scan, label_map, n_per_tissue=40, seed=1)
        size = label_map.labels.shape[0]
        assert np.all(patches.centers >= PATCH_MARGIN)
        assert np.all(patches.centers < size - PATCH_MARGIN)

    def test_intensities_normalized(self, scan_and_map):
        scan, label_map = scan_and_map
        patches = extract_patches(scan, label_map, n_per_tissue=50, seed=3)
        assert patches.pixels.min() >= 0.0
        assert patches.pixels.max() <= 1.0

    def test_centers_unique_per_tissue(self, scan_and_map):
        scan, label_map = scan_and_map
        patches = extract_patches(scan, label_map, n_per_tissue=60, seed=4)
        for tissue in BRAIN_TISSUES:
            centers = patches.centers[patches.tissues == int(tissue)]
            assert len({(int(r), int(c)) for r, c in centers}) == len(centers)

    def test_deterministic(self, scan_and_map):
        scan, label_map = scan_and_map
        a = extract_patches(scan, label_map, n_per_tissue=25, seed=7)
        b = extract_patches(scan, label_map, n_per_tissue=25, seed=7)
        assert np.array_equal(a.pixels, b.pixels)
        assert np.array_equal(a.centers, b.centers)

    def test_exhausted_tissue_named(self, scan_and_map):
        scan, label_map = scan_and_map
        with pytest.raises(TissueExhaustedError) as exc_info:
            extract_patches(scan, label_map, n_per_tissue=10_000, seed=0)
        assert exc_info.value.tissue in BRAIN_TISSUES
        assert exc_info.value.tissue.name in str(exc_info.value)

    def test_patches_marked_with_scan_identity(self, scan_and_map):
        scan, label_map = scan_and_map
        patches = extract_patches(scan, label_map, n_per_tissue=5, seed=0)
        assert set(patches.scanner_ids) == {scan.scanner_id}
        assert set(patches.subject_ids.tolist()) == {scan.subject_id}
