"""Tests for frequency and clustering diagnostics."""

import math

import numpy as np
import pytest

from degalign import diagnostics as dx
from degalign.errors import (ContractError, DegenerateInputError,
                             UnsupportedConfigError)


def naive_dft2_magnitude(image):
    h, w = image.shape
    out = np.zeros((h, w), dtype=complex)
    for k in range(h):
        for l in range(w):
            acc = 0.0 + 0.0j
            for i in range(h):
                for j in range(w):
                    acc += image[i, j] * np.exp(
                        -2j * math.pi * (k * i / h + l * j / w))
            out[k, l] = acc
    return np.abs(np.fft.fftshift(out))


class TestFftMagnitude:
    def test_constant_image_dc_only(self):
        img = np.full((6, 8), 0.3)
        mag = dx.fft2_magnitude(img)
        assert mag[3, 4] == pytest.approx(0.3 * 48, rel=1e-12)
        mag[3, 4] = 0.0
        assert np.max(mag) < 1e-10

    def test_pure_cosine_two_peaks(self):
        n = 16
        j = np.arange(n)
        img = np.tile(np.cos(2 * math.pi * 3 * j / n), (n, 1))
        mag = dx.fft2_magnitude(img)
        peaks = np.argwhere(mag > 1e-6)
        # DC row is centered at index n//2; peaks at +-3 columns from center
        assert sorted(map(tuple, peaks)) == [(8, 5), (8, 11)]

    def test_matches_naive_dft(self):
        rng = np.random.default_rng(0)
        img = rng.random((16, 16))
        fast = dx.fft2_magnitude(img)
        slow = naive_dft2_magnitude(img)
        assert np.max(np.abs(fast - slow)) / np.max(slow) <= 1e-8

    def test_parseval(self):
        rng = np.random.default_rng(1)
        img = rng.random((12, 10))
        mag = dx.fft2_magnitude(img)
        spatial = np.sum(img ** 2)
        spectral = np.sum(mag ** 2)
        assert spectral == pytest.approx(img.size * spatial, rel=1e-6)

    def test_tiny_image_rejected(self):
        with pytest.raises(ContractError):
            dx.fft2_magnitude(np.ones((1, 5)))


class TestRadialBandMape:
    def test_identical_images_zero_everywhere(self):
        rng = np.random.default_rng(2)
        img = rng.random((16, 16, 3))
        report = dx.radial_band_mape(img, img, bands=16)
        assert all(v == 0.0 for v in report.mape_per_band)
        assert len(report.band_edges) == 17

    def test_half_amplitude_cosine(self):
        n = 32
        j = np.arange(n)
        # normalized frequency 8/32 = 0.25 -> band floor(0.25*32) = 8 of 16
        gt = 0.5 + 0.25 * np.tile(np.cos(2 * math.pi * 8 * j / n), (n, 1))
        pred = 0.5 + 0.125 * np.tile(np.cos(2 * math.pi * 8 * j / n), (n, 1))
        report = dx.radial_band_mape(pred, gt, bands=16)
        assert report.mape_per_band[8] == pytest.approx(0.5, abs=1e-3)
        assert report.mape_per_band[0] == pytest.approx(0.0, abs=1e-6)

    def test_blur_raises_high_band_error(self):
        from degalign import degradations as dg
        rng = np.random.default_rng(3)
        img = rng.random((64, 64, 3))
        blurred = dg.apply_step(img, dg.Blur(9, 1.5, 1.5, 0.0), rng)
        report = dx.radial_band_mape(blurred, img, bands=16)
        upper = report.mape_per_band[8:]
        # rank correlation between band index and MAPE over the upper half
        ranks = np.argsort(np.argsort(upper))
        idx = np.arange(len(upper))
        corr = np.corrcoef(idx, ranks)[0, 1]
        assert corr > 0

    def test_extent_mismatch(self):
        with pytest.raises(ContractError):
            dx.radial_band_mape(np.ones((8, 8, 3)), np.ones((8, 10, 3)))


def naive_entropy(dominant, bands):
    counts = {}
    for b in dominant:
        counts[int(b)] = counts.get(int(b), 0) + 1
    total = len(dominant)
    h = 0.0
    for n in counts.values():
        p = n / total
        h -= p * math.log2(p)
    return h


class TestChannelFrequencyEntropy:
    def test_identical_channels_zero_entropy(self):
        rng = np.random.default_rng(4)
        chan = rng.random((16, 16))
        feats = np.stack([chan] * 8)
        _, entropy = dx.channel_frequency_entropy(feats, bands=16)
        assert entropy == 0.0

    def test_distinct_bands_uniform_entropy(self):
        # one pure DCT basis function per channel, spread across bands
        h = w = 32
        bands = 4
        i = np.arange(h)[:, None]
        feats = []
        for b in range(bands):
            k = int((b + 0.5) / bands * h)  # mid-band vertical frequency
            feats.append(np.tile(np.cos(math.pi * (2 * i + 1) * k / (2 * h)),
                                 (1, w)))
        dominant, entropy = dx.channel_frequency_entropy(
            np.stack(feats), bands=bands)
        assert sorted(dominant) == list(range(bands))
        assert entropy == pytest.approx(math.log2(bands), abs=1e-12)

    def test_matches_naive_histogram_entropy(self):
        rng = np.random.default_rng(5)
        feats = rng.standard_normal((8, 16, 16))
        dominant, entropy = dx.channel_frequency_entropy(feats, bands=16)
        assert entropy == pytest.approx(naive_entropy(dominant, 16),
                                        abs=1e-12)

    def test_entropy_bound(self):
        rng = np.random.default_rng(6)
        for c, bands in [(3, 16), (32, 4)]:
            feats = rng.standard_normal((c, 8, 8))
            _, entropy = dx.channel_frequency_entropy(feats, bands=bands)
            assert entropy <= math.log2(min(c, bands)) + 1e-12

    def test_constant_offset_ignored(self):
        # DC is discarded, so adding a per-channel constant changes nothing
        rng = np.random.default_rng(7)
        feats = rng.standard_normal((6, 12, 12))
        shifted = feats + rng.standard_normal((6, 1, 1)) * 10.0
        d1, e1 = dx.channel_frequency_entropy(feats, bands=8)
        d2, e2 = dx.channel_frequency_entropy(shifted, bands=8)
        assert np.array_equal(d1, d2) and e1 == e2


class _StubModel:
    """Minimal tap-feature provider for extract_ddr tests."""

    tap_points = ("tail_input",)

    def tap_features(self, image, layer):
        # channel 0: mean intensity; channel 1: negated mean
        lum = image.mean(axis=2)
        return np.stack([lum, -lum])


class TestExtractDdr:
    def test_determinism_and_length(self):
        model = _StubModel()
        rng = np.random.default_rng(8)
        img = rng.random((8, 8, 3))
        ddr = dx.extract_ddr(model, [img, img], ["clean", "clean"])
        assert ddr.vectors.shape == (2, 2)
        assert np.array_equal(ddr.vectors[0], ddr.vectors[1])

    def test_pooling_of_constant_image(self):
        model = _StubModel()
        img = np.full((4, 4, 3), 0.25)
        ddr = dx.extract_ddr(model, [img], ["clean"])
        assert np.allclose(ddr.vectors[0], [0.25, -0.25])

    def test_unknown_tap_rejected(self):
        with pytest.raises(UnsupportedConfigError):
            dx.extract_ddr(_StubModel(), [np.ones((4, 4, 3))], ["clean"],
                           layer="head")


class TestCalinskiHarabasz:
    @staticmethod
    def blobs(centers, per, seed=9):
        rng = np.random.default_rng(seed)
        vecs, labels = [], []
        for i, c in enumerate(centers):
            vecs.append(rng.standard_normal((per, len(c))) + np.asarray(c))
            labels.extend([f"c{i}"] * per)
        return dx.DdrSet(np.concatenate(vecs), tuple(labels))

    def test_separated_blobs_large_chi(self):
        ddr = self.blobs([(-100.0, 0.0), (100.0, 0.0)], 50)
        assert dx.calinski_harabasz(ddr) > 1e3

    def test_shuffled_labels_much_smaller(self):
        ddr = self.blobs([(-100.0, 0.0), (100.0, 0.0)], 50)
        rng = np.random.default_rng(10)
        shuffled = dx.DdrSet(ddr.vectors,
                             tuple(rng.permutation(ddr.labels)))
        assert (dx.calinski_harabasz(shuffled)
                < dx.calinski_harabasz(ddr) / 100)

    def test_zero_within_scatter_is_inf(self):
        vecs = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0],
                         [9.0, 1.0]])
        ddr = dx.DdrSet(vecs, ("a", "a", "b", "b", "c"))
        assert dx.calinski_harabasz(ddr) == float("inf")

    def test_matches_sklearn(self):
        sklearn_metrics = pytest.importorskip("sklearn.metrics")
        ddr = self.blobs([(0.0, 0.0), (3.0, 1.0), (-2.0, 4.0)], 20, seed=11)
        codes = [{"c0": 0, "c1": 1, "c2": 2}[l] for l in ddr.labels]
        expected = sklearn_metrics.calinski_harabasz_score(ddr.vectors, codes)
        assert dx.calinski_harabasz(ddr) == pytest.approx(expected,
                                                          rel=1e-10)

    def test_rigid_motion_invariance(self):
        ddr = self.blobs([(0.0, 0.0), (4.0, 2.0)], 15, seed=12)
        theta = 0.7
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        moved = dx.DdrSet(ddr.vectors @ rot.T + np.array([3.0, -8.0]),
                          ddr.labels)
        assert dx.calinski_harabasz(moved) == pytest.approx(
            dx.calinski_harabasz(ddr), rel=1e-10)

    def test_degenerate_inputs_rejected(self):
        vecs = np.zeros((4, 2))
        with pytest.raises(DegenerateInputError):
            dx.calinski_harabasz(dx.DdrSet(vecs, ("a",) * 4))
        with pytest.raises(DegenerateInputError):
            dx.calinski_harabasz(dx.DdrSet(vecs[:2], ("a", "b")))


class TestPsnr:
    def test_identity_inf_and_cap(self):
        img = np.random.default_rng(13).random((8, 8, 3))
        assert dx.psnr(img, img) == float("inf")
        assert dx.psnr_capped(img, img) == 100.0

    def test_uniform_error_exactly_20db(self):
        gt = np.full((10, 10, 3), 0.5)
        pred = gt + 0.1
        assert dx.psnr(pred, gt) == pytest.approx(20.0, abs=1e-12)

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(14)
        gt = rng.random((6, 7, 3))
        pred = rng.random((6, 7, 3))
        total = 0.0
        for i in range(6):
            for j in range(7):
                for c in range(3):
                    total += (pred[i, j, c] - gt[i, j, c]) ** 2
        expected = 10.0 * math.log10(1.0 / (total / (6 * 7 * 3)))
        assert dx.psnr(pred, gt) == pytest.approx(expected, abs=1e-9)

    def test_extent_mismatch(self):
        with pytest.raises(ContractError):
            dx.psnr(np.ones((4, 4, 3)), np.ones((4, 5, 3)))
