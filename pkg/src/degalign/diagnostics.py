"""Frequency-domain and clustering diagnostics for restoration models.

Instruments for inspecting what a super-resolution network learned:
per-band spectral error (MAPE), channel frequency-diversity entropy,
pooled deep-feature extraction with cluster separation scoring, and PSNR.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ContractError, DegenerateInputError, UnsupportedConfigError

# BT.601 luma weights for collapsing RGB to a single channel.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

#: Guard added to the MAPE denominator so zero reference coefficients
#: do not blow up the per-band average.
MAPE_EPS = 1e-8

#: Cap applied when writing PSNR to CSV; the exact value is +inf for
#: pixel-identical images.
PSNR_CAP_DB = 100.0


def luminance(image: np.ndarray) -> np.ndarray:
    """Collapse an (H, W, C) image to an (H, W) luminance plane."""
    if image.ndim == 2:
        return np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ContractError(f"expected 2-D or 3-D image, got {image.ndim}-D")
    if image.shape[2] == 1:
        return np.asarray(image[:, :, 0], dtype=np.float64)
    if image.shape[2] == 3:
        return image.astype(np.float64) @ np.asarray(LUMA_WEIGHTS)
    raise ContractError(f"expected 1 or 3 channels, got {image.shape[2]}")


def fft2_magnitude(image: np.ndarray) -> np.ndarray:
    """Centered 2-D DFT magnitude of a single-channel image.

    The zero-frequency bin sits at the middle of the returned array.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ContractError("fft2_magnitude expects a single-channel image")
    if min(image.shape) < 2:
        raise ContractError("image extents must be at least 2")
    return np.abs(np.fft.fftshift(np.fft.fft2(image)))


def _radial_frequency_grid(h: int, w: int) -> np.ndarray:
    """Normalized radial frequency of each (unshifted) DFT bin, clipped to 0.5."""
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    return np.minimum(np.hypot(fy, fx), 0.5)


def _band_index(radii: np.ndarray, bands: int) -> np.ndarray:
    """Equal-width band index over normalized frequency [0, 0.5]."""
    idx = np.floor(radii * (2 * bands)).astype(int)
    return np.minimum(idx, bands - 1)


@dataclass(frozen=True)
class SpectrumReport:
    """Per-band spectral error between a restored image and its reference."""

    band_edges: tuple
    mape_per_band: tuple

    def __post_init__(self):
        if len(self.band_edges) != len(self.mape_per_band) + 1:
            raise ContractError("band count must equal edge count minus one")


def radial_band_mape(pred: np.ndarray, gt: np.ndarray,
                     bands: int = 16) -> SpectrumReport:
    """Mean absolute percentage error of FFT magnitudes per radial band.

    Both images are converted to luminance first; within each equal-width
    band of normalized radial frequency over [0, 0.5], the absolute
    magnitude errors are averaged with the reference magnitudes as weights
    (ratio of sums), so near-empty coefficients cannot dilute a band that
    contains a strong tone.
    """
    if bands < 2:
        raise ContractError(f"need at least 2 bands, got {bands}")
    lp, lg = luminance(pred), luminance(gt)
    if lp.shape != lg.shape:
        raise ContractError(
            f"extent mismatch: pred {lp.shape} vs gt {lg.shape}")
    mag_p = np.abs(np.fft.fft2(lp))
    mag_g = np.abs(np.fft.fft2(lg))
    idx = _band_index(_radial_frequency_grid(*lp.shape), bands)
    err_sums = np.bincount(idx.ravel(), weights=np.abs(mag_p - mag_g).ravel(),
                           minlength=bands)
    ref_sums = np.bincount(idx.ravel(), weights=mag_g.ravel(),
                           minlength=bands)
    mape = err_sums / (ref_sums + MAPE_EPS)
    edges = tuple(0.5 * b / bands for b in range(bands + 1))
    return SpectrumReport(band_edges=edges, mape_per_band=tuple(mape))


def channel_frequency_entropy(features: np.ndarray, bands: int = 16):
    """Dominant DCT band per channel and the entropy of their histogram.

    Each channel of a (C, H, W) feature stack gets an orthonormal 2-D
    DCT-II; the DC coefficient is discarded (it only encodes the channel
    mean) and the remaining absolute energy is binned by normalized radial
    frequency. The band holding the most energy is that channel's dominant
    band; the Shannon entropy (base 2) of the dominant-band histogram
    across channels measures frequency diversity.

    Returns ``(dominant_bands, entropy_bits)``.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3 or features.shape[0] < 1:
        raise ContractError("expected a (C, H, W) feature stack")
    c, h, w = features.shape
    coefs = np.abs(scipy.fft.dctn(features, axes=(1, 2), norm="ortho"))
    coefs[:, 0, 0] = 0.0
    # DCT-II bin k corresponds to normalized frequency k / (2N).
    fy = (np.arange(h) / (2.0 * h))[:, None]
    fx = (np.arange(w) / (2.0 * w))[None, :]
    idx = _band_index(np.minimum(np.hypot(fy, fx), 0.5), bands)
    energy = np.zeros((c, bands))
    flat = idx.ravel()
    for ch in range(c):
        energy[ch] = np.bincount(flat, weights=coefs[ch].ravel(),
                                 minlength=bands)
    dominant = np.argmax(energy, axis=1)
    hist = np.bincount(dominant, minlength=bands).astype(np.float64)
    p = hist[hist > 0] / c
    entropy = float(-np.sum(p * np.log2(p)))
    return dominant, entropy


@dataclass(frozen=True)
class DdrSet:
    """Pooled deep-feature vectors tagged by the degradation that made them."""

    vectors: np.ndarray  # (M, D)
    labels: tuple        # degradation tag per vector

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise ContractError("vectors must form an (M, D) matrix")
        if self.vectors.shape[0] != len(self.labels):
            raise ContractError("one label per vector required")


def extract_ddr(model, images, labels, layer: str = "tail_input") -> DdrSet:
    """Pool tap-point features over space, one vector per image.

    ``model`` must expose ``tap_points`` (valid layer names) and
    ``tap_features(image, layer) -> (C, h, w)``; the toolkit's toy model
    does. Dropout or other training-time stochasticity must be inactive.
    """
    if layer not in getattr(model, "tap_points", ()):
        raise UnsupportedConfigError(
            f"unknown tap point {layer!r}; model offers "
            f"{getattr(model, 'tap_points', ())!r}")
    labels = tuple(labels)
    if len(labels) != len(images):
        raise ContractError("one label per image required")
    vectors = [model.tap_features(img, layer).mean(axis=(1, 2))
               for img in images]
    return DdrSet(vectors=np.stack(vectors), labels=labels)


def calinski_harabasz(ddr: DdrSet) -> float:
    """Calinski-Harabasz index of the DDR set under its degradation labels.

    Higher values mean the labels separate the vectors more cleanly; a
    degradation-invariant model therefore scores *lower* on degradation
    labels. Zero within-cluster scatter with distinct clusters returns the
    +inf sentinel.
    """
    x = ddr.vectors
    m = x.shape[0]
    groups = sorted(set(ddr.labels), key=str)
    k = len(groups)
    if k < 2:
        raise DegenerateInputError("need at least two distinct labels")
    if m <= k:
        raise DegenerateInputError(
            f"need more vectors ({m}) than labels ({k})")
    overall = x.mean(axis=0)
    between = 0.0
    within = 0.0
    for g in groups:
        members = x[[lab == g for lab in ddr.labels]]
        center = members.mean(axis=0)
        between += members.shape[0] * float(np.sum((center - overall) ** 2))
        within += float(np.sum((members - center) ** 2))
    if within == 0.0:
        return float("inf") if between > 0.0 else 0.0
    return (between / (k - 1)) / (within / (m - k))


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB on the [0, 1] intensity scale."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractError(
            f"extent mismatch: pred {pred.shape} vs gt {gt.shape}")
    mse = float(np.mean((pred - gt) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def psnr_capped(pred: np.ndarray, gt: np.ndarray) -> float:
    """PSNR clipped to the CSV reporting cap."""
    return min(psnr(pred, gt), PSNR_CAP_DB)
