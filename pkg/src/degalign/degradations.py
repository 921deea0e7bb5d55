"""Stochastic second-order degradation pipeline.

Images are H x W x C float64 arrays with intensities in [0, 1]; every stage
clamps back into that range. A recipe is an ordered, seeded list of steps
(blur / resize / additive Gaussian noise / JPEG-style DCT quantization) plus
a target super-resolution scale; replaying a recipe is bit-deterministic.

The JPEG step models only the lossy part of the codec: per-channel 8x8 block
DCT, quantization with the standard luminance table under the conventional
quality scaling, dequantization and inverse DCT. The decoded result is
snapped back to the 8-bit grid like a real decode. No entropy coding, no
chroma subsampling, no file container.

Bicubic resampling uses the Catmull-Rom kernel (a = -0.5) without an
antialias prefilter; golden files depend on this convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PilImage
from scipy import ndimage

from .errors import ContractError, UnsupportedConfigError
from .seeding import PAIR_SEED_XOR, MASK64

__all__ = [
    "Blur",
    "Resize",
    "GaussianNoise",
    "JpegProxy",
    "DegradationRecipe",
    "DegradationRanges",
    "gaussian_kernel",
    "apply_step",
    "sample_second_order_recipe",
    "clean_recipe",
    "canonical_recipe",
    "degrade",
    "generate_paired_sample",
    "resize",
    "resize_to",
    "load_png",
    "save_png",
    "CONDITIONS",
]


# ---------------------------------------------------------------------------
# degradation steps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Blur:
    kernel_size: int
    sigma_x: float
    sigma_y: float
    theta: float  # radians


@dataclass(frozen=True)
class Resize:
    scale: float
    method: str  # nearest | bilinear | bicubic

    def __post_init__(self):
        if not 0.0 < self.scale <= 4.0:
            raise ContractError(f"resize scale must be in (0, 4], got {self.scale}")
        if self.method not in ("nearest", "bilinear", "bicubic"):
            raise ContractError(f"unknown resize method {self.method!r}")


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float  # on the [0, 1] intensity scale

    def __post_init__(self):
        if self.sigma < 0:
            raise ContractError(f"noise sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class JpegProxy:
    quality: int

    def __post_init__(self):
        if not 1 <= self.quality <= 100:
            raise ContractError(f"jpeg quality must be in [1, 100], got {self.quality}")


DegradationStep = Blur | Resize | GaussianNoise | JpegProxy

_STEP_TYPES = {"blur": Blur, "resize": Resize, "noise": GaussianNoise,
               "jpeg": JpegProxy}


@dataclass(frozen=True)
class DegradationRecipe:
    """Ordered, seeded degradation plan; fully determines one LR render."""

    steps: tuple
    seed: int
    target_scale: int

    def to_dict(self) -> dict:
        out = {"seed": int(self.seed), "target_scale": int(self.target_scale),
               "steps": []}
        for step in self.steps:
            tag = {Blur: "blur", Resize: "resize", GaussianNoise: "noise",
                   JpegProxy: "jpeg"}[type(step)]
            entry = {"type": tag}
            entry.update(vars(step))
            out["steps"].append(entry)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "DegradationRecipe":
        steps = []
        for entry in data["steps"]:
            entry = dict(entry)
            step_cls = _STEP_TYPES[entry.pop("type")]
            steps.append(step_cls(**entry))
        return cls(steps=tuple(steps), seed=int(data["seed"]),
                   target_scale=int(data["target_scale"]))

    @classmethod
    def from_json(cls, text: str) -> "DegradationRecipe":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# blur
# ---------------------------------------------------------------------------

def gaussian_kernel(size: int, sigma_x: float, sigma_y: float,
                    theta: float = 0.0) -> np.ndarray:
    """Rotated anisotropic Gaussian sampled at integer offsets, sum = 1."""
    if size % 2 == 0 or size < 1:
        raise UnsupportedConfigError(f"kernel size must be odd, got {size}")
    if sigma_x <= 0 or sigma_y <= 0:
        raise ContractError("blur sigmas must be positive")
    half = size // 2
    ys, xs = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    u = np.cos(theta) * xs + np.sin(theta) * ys
    v = -np.sin(theta) * xs + np.cos(theta) * ys
    kernel = np.exp(-0.5 * ((u / sigma_x) ** 2 + (v / sigma_y) ** 2))
    return kernel / kernel.sum()


def _blur(image: np.ndarray, step: Blur) -> np.ndarray:
    kernel = gaussian_kernel(step.kernel_size, step.sigma_x, step.sigma_y,
                             step.theta)
    out = np.empty_like(image)
    for c in range(image.shape[2]):
        out[:, :, c] = ndimage.convolve(image[:, :, c], kernel,
                                        mode="constant", cval=0.0)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# resize
# ---------------------------------------------------------------------------

def _cubic_weight(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    at = np.abs(t)
    w = np.where(at <= 1.0,
                 (a + 2.0) * at ** 3 - (a + 3.0) * at ** 2 + 1.0,
                 np.where(at < 2.0,
                          a * at ** 3 - 5.0 * a * at ** 2 + 8.0 * a * at - 4.0 * a,
                          0.0))
    return w


def _axis_weights(n_in: int, n_out: int, method: str) -> np.ndarray:
    """Dense (n_out, n_in) resampling matrix for one axis."""
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) * (n_in / n_out) - 0.5
    mat = np.zeros((n_out, n_in))
    if method == "nearest":
        idx = np.clip(np.floor(src + 0.5).astype(int), 0, n_in - 1)
        mat[dst.astype(int), idx] = 1.0
        return mat
    if method == "bilinear":
        taps, offset = 2, 0
        base = np.floor(src).astype(int)
        weight_fn = lambda t: np.maximum(0.0, 1.0 - np.abs(t))
    elif method == "bicubic":
        taps, offset = 4, 1
        base = np.floor(src).astype(int)
        weight_fn = _cubic_weight
    else:
        raise ContractError(f"unknown resize method {method!r}")
    for k in range(taps):
        pos = base - offset + k
        w = weight_fn(src - pos)
        np.add.at(mat, (np.arange(n_out), np.clip(pos, 0, n_in - 1)), w)
    # kernels sum to 1 analytically; renormalize to absorb edge clipping
    mat /= mat.sum(axis=1, keepdims=True)
    return mat


def resize_to(image: np.ndarray, out_h: int, out_w: int, method: str,
              ) -> np.ndarray:
    """Separable resampling to exact output extents; clamps to [0, 1]."""
    h, w, _ = image.shape
    wr = _axis_weights(h, out_h, method)
    wc = _axis_weights(w, out_w, method)
    out = np.einsum("ih,hwc,jw->ijc", wr, image, wc, optimize=True)
    if method == "nearest":
        return out  # pure gather, already in range
    return np.clip(out, 0.0, 1.0)


def resize(image: np.ndarray, scale: float, method: str) -> np.ndarray:
    h, w, _ = image.shape
    out_h = max(1, int(round(h * scale)))
    out_w = max(1, int(round(w * scale)))
    return resize_to(image, out_h, out_w, method)


# ---------------------------------------------------------------------------
# JPEG proxy
# ---------------------------------------------------------------------------

# ITU-T T.81 Annex K luminance quantization table
JPEG_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def jpeg_quant_table(quality: int) -> np.ndarray:
    """Luminance table under the conventional quality scaling."""
    if not 1 <= quality <= 100:
        raise ContractError(f"quality must be in [1, 100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    table = np.floor((JPEG_LUMA_TABLE * scale + 50.0) / 100.0)
    return np.clip(table, 1.0, 255.0)


def _dct_matrix(n: int = 8) -> np.ndarray:
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    mat[0] *= np.sqrt(1.0 / n)
    mat[1:] *= np.sqrt(2.0 / n)
    return mat


_DCT8 = _dct_matrix(8)


def _jpeg_channel(chan: np.ndarray, qtable: np.ndarray) -> np.ndarray:
    h, w = chan.shape
    ph, pw = (-h) % 8, (-w) % 8
    padded = np.pad(chan, ((0, ph), (0, pw)), mode="edge")
    hh, ww = padded.shape
    v = padded * 255.0 - 128.0
    blocks = v.reshape(hh // 8, 8, ww // 8, 8).transpose(0, 2, 1, 3)
    coefs = np.einsum("ki,bcij,lj->bckl", _DCT8, blocks, _DCT8, optimize=True)
    coefs = np.round(coefs / qtable) * qtable
    rec = np.einsum("ki,bckl,lj->bcij", _DCT8, coefs, _DCT8, optimize=True)
    rec = rec.transpose(0, 2, 1, 3).reshape(hh, ww)[:h, :w]
    # decoded JPEG pixels live on the 8-bit grid
    return np.round(np.clip(rec + 128.0, 0.0, 255.0)) / 255.0


def _jpeg(image: np.ndarray, step: JpegProxy) -> np.ndarray:
    qtable = jpeg_quant_table(step.quality)
    out = np.empty_like(image)
    for c in range(image.shape[2]):
        out[:, :, c] = _jpeg_channel(image[:, :, c], qtable)
    return out


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def apply_step(image: np.ndarray, step: DegradationStep,
               rng: np.random.Generator) -> np.ndarray:
    """Apply one degradation stage; output stays in [0, 1]."""
    if isinstance(step, Blur):
        return _blur(image, step)
    if isinstance(step, Resize):
        return resize(image, step.scale, step.method)
    if isinstance(step, GaussianNoise):
        noise = rng.normal(0.0, step.sigma, size=image.shape) \
            if step.sigma > 0 else 0.0
        return np.clip(image + noise, 0.0, 1.0)
    if isinstance(step, JpegProxy):
        return _jpeg(image, step)
    raise ContractError(f"unknown degradation step {step!r}")


@dataclass
class DegradationRanges:
    """Sampling ranges for the second-order recipe generator.

    These are toolkit defaults, configurable per run; noise sigma is on the
    [0, 1] intensity scale.
    """

    blur_sigma: tuple = (0.2, 3.0)
    kernel_size: int = 21
    resize_scale: tuple = (0.5, 1.2)
    noise_sigma: tuple = (1.0 / 255.0, 30.0 / 255.0)
    jpeg_quality: tuple = (30, 95)
    rounds: int = 2
    target_scale: int = 2

    def validate(self) -> list[str]:
        problems = []
        for name in ("blur_sigma", "resize_scale", "noise_sigma", "jpeg_quality"):
            lo, hi = getattr(self, name)
            if lo > hi:
                problems.append(f"ranges.{name}: min {lo} > max {hi}")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            problems.append(f"ranges.kernel_size must be odd, got {self.kernel_size}")
        if self.rounds < 1:
            problems.append(f"ranges.rounds must be >= 1, got {self.rounds}")
        if self.target_scale not in (1, 2, 4):
            problems.append(f"ranges.target_scale must be 1, 2 or 4, got {self.target_scale}")
        return problems

    def require_valid(self):
        problems = self.validate()
        if problems:
            raise ContractError("; ".join(problems))


def sample_second_order_recipe(ranges: DegradationRanges,
                               seed: int) -> DegradationRecipe:
    """Draw a recipe: per round blur -> resize -> noise -> jpeg."""
    ranges.require_valid()
    rng = np.random.default_rng(seed)
    steps = []
    for _ in range(ranges.rounds):
        sx = rng.uniform(*ranges.blur_sigma)
        sy = rng.uniform(*ranges.blur_sigma)
        theta = rng.uniform(0.0, np.pi)
        steps.append(Blur(kernel_size=ranges.kernel_size, sigma_x=sx,
                          sigma_y=sy, theta=theta))
        steps.append(Resize(scale=float(rng.uniform(*ranges.resize_scale)),
                            method="bicubic"))
        steps.append(GaussianNoise(sigma=float(rng.uniform(*ranges.noise_sigma))))
        lo, hi = ranges.jpeg_quality
        steps.append(JpegProxy(quality=int(rng.integers(lo, hi + 1))))
    return DegradationRecipe(steps=tuple(steps), seed=int(seed),
                             target_scale=ranges.target_scale)


def clean_recipe(target_scale: int, seed: int = 0) -> DegradationRecipe:
    """Bicubic-only recipe, the 'clean' test condition."""
    return DegradationRecipe(steps=(), seed=seed, target_scale=target_scale)


# canonical single/combined test conditions; parameters follow the
# blur2 + bicubic + noise20 + jpeg50 convention (noise on the 255 scale)
CONDITIONS = ("clean", "blur", "noise", "jpeg", "b+n", "b+j", "n+j", "b+n+j")


def canonical_recipe(condition: str, target_scale: int,
                     seed: int = 0) -> DegradationRecipe:
    """Fixed-parameter recipe for one of the eight evaluation conditions."""
    if condition not in CONDITIONS:
        raise ContractError(f"unknown condition {condition!r}")
    # noise and jpeg act on the already-downsampled image, as in
    # blur2 + bicubic + noise20 + jpeg50
    steps = []
    if condition in ("blur", "b+n", "b+j", "b+n+j"):
        steps.append(Blur(kernel_size=21, sigma_x=2.0, sigma_y=2.0, theta=0.0))
    steps.append(Resize(scale=1.0 / target_scale, method="bicubic"))
    if condition in ("noise", "b+n", "n+j", "b+n+j"):
        steps.append(GaussianNoise(sigma=20.0 / 255.0))
    if condition in ("jpeg", "b+j", "n+j", "b+n+j"):
        steps.append(JpegProxy(quality=50))
    return DegradationRecipe(steps=tuple(steps), seed=seed,
                             target_scale=target_scale)


def degrade(image: np.ndarray, recipe: DegradationRecipe) -> np.ndarray:
    """Apply a recipe: its steps in order, then the exact landing resize."""
    h, w, _ = image.shape
    ts = recipe.target_scale
    if h % ts or w % ts:
        raise ContractError(
            f"image extents {h}x{w} not divisible by target scale {ts}")
    rng = np.random.default_rng(recipe.seed)
    out = image.astype(np.float64)
    for step in recipe.steps:
        out = apply_step(out, step, rng)
    if out.shape[:2] != (h // ts, w // ts):
        out = resize_to(out, h // ts, w // ts, "bicubic")
    return out


def generate_paired_sample(hr: np.ndarray, ranges: DegradationRanges,
                           seed: int):
    """Two independently sampled degradations of the same HR content.

    Recipe seeds are derived as (seed, seed xor golden-ratio constant).
    """
    r1 = sample_second_order_recipe(ranges, seed & MASK64)
    r2 = sample_second_order_recipe(ranges, (seed ^ PAIR_SEED_XOR) & MASK64)
    return degrade(hr, r1), degrade(hr, r2), (r1, r2)


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------

def load_png(path) -> np.ndarray:
    """Read an 8-bit PNG as H x W x C float64 in [0, 1]."""
    img = PilImage.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def save_png(path, image: np.ndarray):
    """Write an H x W x C [0, 1] image as an 8-bit PNG."""
    arr = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    PilImage.fromarray(arr).save(path)
