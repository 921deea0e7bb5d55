"""Desk-scale trainer for the toy SR network.

Covers the full experiment loop: seeded synthetic dataset, paired
degraded views, L1 + regularizer objective (none / channel dropout /
statistic alignment / brute-force feature equality), Adam with cosine
annealing, versioned binary checkpoints, and the eight-condition
evaluation harness.

All randomness is derived from named seeds per step and per item, so runs
are bit-reproducible regardless of worker count and checkpoint resume
continues the exact same stream.
"""

import csv
import dataclasses
import json
import math
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import alignment as al
from . import degradations as dg
from . import diagnostics as dx
from . import tensor as T
from .errors import ConfigValidationError, ContractError
from .model import ModelConfig, ToyModel
from .seeding import derive_seed
from .tensor import Tensor

CHECKPOINT_MAGIC = b"DGALCKPT"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RegularizerConfig:
    """Exactly one regularizer is active, selected by ``mode``."""

    mode: str = "none"  # none | dropout | align | brute_force
    dropout_p: float = 0.7
    align: al.AlignmentConfig = field(default_factory=al.AlignmentConfig)
    brute_force_weight: float = 1.0

    def validate(self) -> list:
        problems = []
        if self.mode not in ("none", "dropout", "align", "brute_force"):
            problems.append(
                f"regularizer.mode must be none|dropout|align|brute_force, "
                f"got {self.mode!r}")
        if self.mode == "dropout" and not 0.0 < self.dropout_p < 1.0:
            problems.append(
                f"regularizer.dropout_p must be in (0, 1), got {self.dropout_p}"
                " (p = 1 would zero every channel)")
        if self.mode == "align":
            problems.extend(self.align.validate())
        if self.mode == "brute_force" and not (
                math.isfinite(self.brute_force_weight)
                and self.brute_force_weight >= 0.0):
            problems.append(
                "regularizer.brute_force_weight must be finite and >= 0, "
                f"got {self.brute_force_weight}")
        return problems


@dataclass
class TrainConfig:
    """Everything a training run depends on."""

    batch_size: int = 8
    patch_size: int = 8          # LR pixels
    steps: int = 5000
    base_lr: float = 2e-4
    min_lr: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    cosine_period: int | None = None   # defaults to `steps`
    supervise: str = "both"            # both | first
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    data_seed: int = 0
    init_seed: int = 1
    dropout_seed: int = 2
    rff_seed: int = 3
    dataset_size: int = 256
    hr_size: int = 32
    eval_size: int = 16
    image_dir: str | None = None
    checkpoint_every: int = 2500
    workers: int = 1

    @classmethod
    def from_root_seed(cls, root: int, **overrides) -> "TrainConfig":
        """Derive the four named seeds from one root seed."""
        seeds = dict(data_seed=derive_seed(root, "data"),
                     init_seed=derive_seed(root, "init"),
                     dropout_seed=derive_seed(root, "dropout"),
                     rff_seed=derive_seed(root, "rff"))
        seeds.update(overrides)
        return cls(**seeds)

    @property
    def period(self) -> int:
        return self.steps if self.cosine_period is None else self.cosine_period

    def validate(self) -> list:
        problems = []
        for name, lo in (("batch_size", 1), ("patch_size", 1), ("steps", 1),
                         ("dataset_size", 1), ("hr_size", 2), ("eval_size", 1),
                         ("checkpoint_every", 1), ("workers", 1)):
            if getattr(self, name) < lo:
                problems.append(f"{name} must be >= {lo}, got {getattr(self, name)}")
        if self.supervise not in ("both", "first"):
            problems.append(f"supervise must be both|first, got {self.supervise!r}")
        if not (math.isfinite(self.base_lr) and self.base_lr > 0):
            problems.append(f"base_lr must be positive, got {self.base_lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            problems.append("Adam betas must lie in [0, 1)")
        problems.extend(self.regularizer.validate())
        problems.extend(self.model.validate())
        if self.hr_size % self.model.scale != 0:
            problems.append(
                f"hr_size {self.hr_size} must be divisible by scale "
                f"{self.model.scale}")
        elif self.patch_size > self.hr_size // self.model.scale:
            problems.append(
                f"patch_size {self.patch_size} exceeds the LR extent "
                f"{self.hr_size // self.model.scale}")
        return problems

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
             if f.name not in ("regularizer", "model")}
        reg = self.regularizer
        align = {f.name: getattr(reg.align, f.name)
                 for f in dataclasses.fields(reg.align)
                 if not f.name.startswith("_")}
        d["regularizer"] = {"mode": reg.mode, "dropout_p": reg.dropout_p,
                            "align": align,
                            "brute_force_weight": reg.brute_force_weight}
        d["model"] = dataclasses.asdict(self.model)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        """Strict parse: unknown keys are rejected, all problems aggregated."""
        problems = []
        defaulted = []

        def take(src, allowed, where):
            unknown = sorted(set(src) - set(allowed))
            for key in unknown:
                problems.append(f"unknown key '{where}{key}'")
            for key in sorted(set(allowed) - set(src)):
                defaulted.append(f"{where}{key}")
            return {k: v for k, v in src.items() if k in allowed}

        top_fields = [f.name for f in dataclasses.fields(cls)]
        top = take(dict(data), top_fields, "")
        reg_src = top.pop("regularizer", {})
        model_src = top.pop("model", {})
        if not isinstance(reg_src, dict):
            problems.append("regularizer must be a mapping")
            reg_src = {}
        if not isinstance(model_src, dict):
            problems.append("model must be a mapping")
            model_src = {}
        reg_fields = ["mode", "dropout_p", "align", "brute_force_weight"]
        reg_kw = take(dict(reg_src), reg_fields, "regularizer.")
        align_src = reg_kw.pop("align", {})
        if not isinstance(align_src, dict):
            problems.append("regularizer.align must be a mapping")
            align_src = {}
        align_fields = [f.name for f in dataclasses.fields(al.AlignmentConfig)
                        if not f.name.startswith("_")]
        align_kw = take(dict(align_src), align_fields, "regularizer.align.")
        model_fields = [f.name for f in dataclasses.fields(ModelConfig)]
        model_kw = take(dict(model_src), model_fields, "model.")
        if problems:
            raise ConfigValidationError(problems)
        config = cls(regularizer=RegularizerConfig(
                         align=al.AlignmentConfig(**align_kw), **reg_kw),
                     model=ModelConfig(**model_kw), **top)
        config.defaulted_fields = tuple(defaulted)
        problems = config.validate()
        if problems:
            raise ConfigValidationError(problems)
        return config


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------

def cosine_lr(step: int, total: int, base_lr: float,
              min_lr: float = 0.0) -> float:
    """Cosine annealing from base_lr at step 0 to min_lr at step = total."""
    if not 0 <= step <= total:
        raise ContractError(f"step {step} outside [0, {total}]")
    return min_lr + (base_lr - min_lr) * (1.0 + math.cos(math.pi * step / total)) / 2.0


def adam_update(params: dict, grads: dict, moments: dict, step: int,
                lr: float, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8):
    """One bias-corrected Adam step over name-keyed arrays.

    ``moments`` is ``{"m": {...}, "v": {...}}``; returns new params and
    moments without mutating the inputs.
    """
    if step < 1:
        raise ContractError(f"Adam step must be >= 1, got {step}")
    if set(params) != set(grads):
        raise ContractError("params and grads must share names")
    new_params, new_m, new_v = {}, {}, {}
    for name in params:
        p, g = params[name], grads[name]
        if p.shape != g.shape:
            raise ContractError(
                f"shape mismatch for {name}: {p.shape} vs {g.shape}")
        m = beta1 * moments["m"][name] + (1.0 - beta1) * g
        v = beta2 * moments["v"][name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, {"m": new_m, "v": new_v}


def zero_moments(params: dict) -> dict:
    return {"m": {n: np.zeros_like(p) for n, p in params.items()},
            "v": {n: np.zeros_like(p) for n, p in params.items()}}


# ---------------------------------------------------------------------------
# synthetic dataset
# ---------------------------------------------------------------------------

def synthesize_image(size: int, seed: int) -> np.ndarray:
    """One procedural (size, size, 3) training image in [0, 1].

    Composition: a soft color gradient, a few Gaussian blobs, an oriented
    sinusoid texture, and a filled random triangle — enough structure for
    blur/noise/compression to act on distinguishably.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size),
                         indexing="ij")
    img = np.empty((size, size, 3))
    for c in range(3):
        img[:, :, c] = (rng.uniform(0.3, 0.7)
                        + rng.uniform(-0.2, 0.2) * yy
                        + rng.uniform(-0.2, 0.2) * xx)
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(0, 1, 2)
        sigma = rng.uniform(0.05, 0.25)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        img += bump[:, :, None] * rng.uniform(-0.4, 0.4, 3)
    theta = rng.uniform(0, math.pi)
    freq = rng.uniform(2.0, 8.0)
    phase = rng.uniform(0, 2 * math.pi)
    wave = np.sin(2 * math.pi * freq
                  * (yy * math.sin(theta) + xx * math.cos(theta)) + phase)
    img += wave[:, :, None] * rng.uniform(0.05, 0.25, 3)
    # filled triangle via three half-plane tests
    pts = rng.uniform(0, 1, (3, 2))
    inside = np.ones_like(yy, dtype=bool)
    for k in range(3):
        ay, ax = pts[k]
        by, bx = pts[(k + 1) % 3]
        cy_, cx_ = pts[(k + 2) % 3]
        edge = (xx - ax) * (by - ay) - (yy - ay) * (bx - ax)
        ref = (cx_ - ax) * (by - ay) - (cy_ - ay) * (bx - ax)
        inside &= edge * ref >= 0
    img[inside] = 0.5 * img[inside] + 0.5 * rng.uniform(0, 1, 3)
    return np.clip(img, 0.0, 1.0)


@dataclass
class DatasetBundle:
    """Pre-rendered HR images with one fixed pair of degraded LR views each."""

    hr: np.ndarray    # (N, S, S, 3)
    lr1: np.ndarray   # (N, S/scale, S/scale, 3)
    lr2: np.ndarray


def build_dataset(config: TrainConfig) -> DatasetBundle:
    if config.image_dir is not None:
        paths = sorted(Path(config.image_dir).glob("*.png"))
        if not paths:
            raise ContractError(f"no PNG images found in {config.image_dir}")
        hr_list = []
        for p in paths:
            img = dg.load_png(p)
            if img.shape[:2] != (config.hr_size, config.hr_size):
                raise ContractError(
                    f"{p}: expected {config.hr_size}x{config.hr_size}, "
                    f"got {img.shape[0]}x{img.shape[1]}")
            if img.shape[2] == 1:
                img = np.repeat(img, 3, axis=2)
            hr_list.append(img)
    else:
        hr_list = [synthesize_image(config.hr_size,
                                    derive_seed(config.data_seed, f"img-{i}"))
                   for i in range(config.dataset_size)]
    ranges = dataclasses.replace(dg.DegradationRanges(),
                                 target_scale=config.model.scale)

    def render(item):
        i, hr = item
        lr1, lr2, _ = dg.generate_paired_sample(
            hr, ranges, derive_seed(config.data_seed, f"pair-{i}"))
        return lr1, lr2

    items = list(enumerate(hr_list))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            rendered = list(pool.map(render, items))
    else:
        rendered = [render(item) for item in items]
    return DatasetBundle(hr=np.stack(hr_list),
                         lr1=np.stack([r[0] for r in rendered]),
                         lr2=np.stack([r[1] for r in rendered]))


def _sample_batch(bundle: DatasetBundle, config: TrainConfig, step: int):
    """Deterministic batch for a given step: indices plus aligned crops."""
    rng = np.random.default_rng(derive_seed(config.data_seed, f"batch-{step}"))
    n, lr_extent = bundle.lr1.shape[0], bundle.lr1.shape[1]
    p, s = config.patch_size, config.model.scale
    idx = rng.integers(0, n, size=config.batch_size)
    offs = rng.integers(0, lr_extent - p + 1, size=(config.batch_size, 2))
    x1 = np.empty((config.batch_size, 3, p, p))
    x2 = np.empty_like(x1)
    hr = np.empty((config.batch_size, 3, p * s, p * s))
    for b, (i, (oy, ox)) in enumerate(zip(idx, offs)):
        x1[b] = bundle.lr1[i, oy:oy + p, ox:ox + p].transpose(2, 0, 1)
        x2[b] = bundle.lr2[i, oy:oy + p, ox:ox + p].transpose(2, 0, 1)
        hr[b] = bundle.hr[i, oy * s:(oy + p) * s,
                          ox * s:(ox + p) * s].transpose(2, 0, 1)
    return x1, x2, hr


# ---------------------------------------------------------------------------
# one optimization step
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepReport:
    step: int
    lr: float
    l1: float          # view-1 reconstruction loss
    l1_second: float   # view-2 reconstruction loss (0 when single-view)
    reg: float         # regularizer term as it enters the objective
    total: float


def _l1(a: Tensor, b: Tensor) -> Tensor:
    return (a - b).abs().mean()


def _alignment_term(tap1: Tensor, tap2: Tensor,
                    config: al.AlignmentConfig) -> Tensor:
    """Per-sample alignment loss averaged over the batch."""
    batch = tap1.shape[0]
    total = None
    for b in range(batch):
        f1 = al.feature_matrix(tap1.select0(b))
        f2 = al.feature_matrix(tap2.select0(b))
        term = al.alignment_loss(f1, f2, config)
        total = term if total is None else total + term
    return total * (1.0 / batch)


def _brute_force_term(tap1: Tensor, tap2: Tensor, weight: float) -> Tensor:
    d = tap1 - tap2
    return (d * d).sum() * (weight / tap1.shape[0])


def training_step(model: ToyModel, batch, config: TrainConfig, step: int,
                  moments: dict) -> StepReport:
    """Forward, backward, and one Adam update; mutates model and moments."""
    x1_np, x2_np, hr_np = batch
    if x1_np.shape[0] == 0:
        raise ContractError("empty batch")
    mode = config.regularizer.mode
    x1, hr = Tensor(x1_np), Tensor(hr_np)
    reg = T.tensor(0.0)
    l1_second = T.tensor(0.0)
    if mode == "dropout":
        drop_rng = np.random.default_rng(
            derive_seed(config.dropout_seed, f"step-{step}"))
        out1, _ = model.forward(x1, train=True,
                                dropout_p=config.regularizer.dropout_p,
                                dropout_rng=drop_rng)
        l1_first = _l1(out1, hr)
        total = l1_first
    elif mode == "none":
        out1, _ = model.forward(x1, train=True)
        l1_first = _l1(out1, hr)
        total = l1_first
    else:
        x2 = Tensor(x2_np)
        out1, tap1 = model.forward(x1, train=True)
        out2, tap2 = model.forward(x2, train=True)
        l1_first = _l1(out1, hr)
        total = l1_first
        if config.supervise == "both":
            l1_second = _l1(out2, hr)
            total = total + l1_second
        if mode == "align":
            reg = _alignment_term(tap1, tap2, config.regularizer.align)
            active = config.regularizer.align.weight != 0.0
        else:
            reg = _brute_force_term(tap1, tap2,
                                    config.regularizer.brute_force_weight)
            active = config.regularizer.brute_force_weight != 0.0
        if active:
            total = total + reg

    breakdown = StepReport(step=step, lr=0.0, l1=float(l1_first.data),
                           l1_second=float(l1_second.data),
                           reg=float(reg.data), total=float(total.data))
    if not math.isfinite(breakdown.total):
        raise ContractError(
            f"non-finite loss at step {step}: l1={breakdown.l1}, "
            f"l1_second={breakdown.l1_second}, reg={breakdown.reg}")

    T.backward(total)
    lr = cosine_lr(min(step - 1, config.period), config.period,
                   config.base_lr, config.min_lr)
    params = {name: p.data for name, p in model.params.items()}
    grads = {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
             for name, p in model.params.items()}
    new_params, new_moments = adam_update(
        params, grads, moments, step, lr,
        config.beta1, config.beta2, config.eps)
    for name, p in model.params.items():
        p.data = new_params[name]
        p.grad = None
    moments["m"], moments["v"] = new_moments["m"], new_moments["v"]
    return dataclasses.replace(breakdown, lr=lr)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, model: ToyModel, moments: dict, step: int,
                    config: TrainConfig) -> None:
    """Versioned binary container.

    Layout: 8 magic bytes, uint32 LE version, uint64 LE header length,
    UTF-8 JSON header (step, config echo, ordered tensor names + shapes),
    then the tensors as little-endian float64 in header order. RNG state is
    not stored: every random draw is derived from (seed, step), so resuming
    at a recorded step reproduces the exact stream.
    """
    tensors = []
    blobs = []
    for prefix, table in (("param", model.state()),
                          ("adam_m", moments["m"]),
                          ("adam_v", moments["v"])):
        for name in sorted(table):
            arr = np.ascontiguousarray(table[name], dtype="<f8")
            tensors.append([f"{prefix}/{name}", list(arr.shape)])
            blobs.append(arr.tobytes())
    header = json.dumps({"step": step, "config": config.to_dict(),
                         "tensors": tensors}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns ``(config, state, moments, step)``."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ContractError(f"{path}: not a checkpoint (bad magic)")
        version, = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ContractError(f"{path}: unsupported version {version}")
        header_len, = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len))
        state, m, v = {}, {}, {}
        for full_name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            prefix, name = full_name.split("/", 1)
            {"param": state, "adam_m": m, "adam_v": v}[prefix][name] = \
                arr.astype(np.float64)
    config = TrainConfig.from_dict(header["config"])
    return config, state, {"m": m, "v": v}, header["step"]


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: ToyModel
    moments: dict
    history: list
    config: TrainConfig
    metrics_path: Path
    checkpoint_path: Path


def run_training(config: TrainConfig, out_dir,
                 resume_from=None) -> TrainResult:
    """Train to ``config.steps``, logging metrics and writing checkpoints.

    ``resume_from`` names an earlier checkpoint of the same config; the
    continued run is bit-identical to an uninterrupted one.
    """
    problems = config.validate()
    if problems:
        raise ConfigValidationError(problems)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if config.regularizer.mode == "align":
        config.regularizer.align.rff_seed = config.rff_seed

    bundle = build_dataset(config)
    model = ToyModel(config.model, config.init_seed)
    moments = zero_moments({n: p.data for n, p in model.params.items()})
    start_step = 0
    if resume_from is not None:
        ckpt_config, state, moments, start_step = load_checkpoint(resume_from)
        if ckpt_config.to_dict() != config.to_dict():
            raise ContractError(
                f"{resume_from}: checkpoint config differs from the "
                "requested run")
        model.load_state(state)

    history = []
    timings = []
    for step in range(start_step + 1, config.steps + 1):
        t0 = time.perf_counter()
        batch = _sample_batch(bundle, config, step)
        report = training_step(model, batch, config, step, moments)
        timings.append((step, time.perf_counter() - t0))
        history.append(report)
        if step % config.checkpoint_every == 0 and step < config.steps:
            save_checkpoint(out_dir / f"checkpoint_{step:06d}.ckpt",
                            model, moments, step, config)

    checkpoint_path = out_dir / f"checkpoint_{config.steps:06d}.ckpt"
    save_checkpoint(checkpoint_path, model, moments, config.steps, config)

    metrics_path = out_dir / "metrics.csv"
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "l1", "l1_second", "reg", "total"])
        for r in history:
            writer.writerow([r.step, repr(r.lr), repr(r.l1),
                             repr(r.l1_second), repr(r.reg), repr(r.total)])
    # wall times are non-deterministic, so they live in a separate file
    with open(out_dir / "timing.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "seconds"])
        writer.writerows((s, f"{t:.6f}") for s, t in timings)
    return TrainResult(model=model, moments=moments, history=history,
                       config=config, metrics_path=metrics_path,
                       checkpoint_path=checkpoint_path)


# ---------------------------------------------------------------------------
# evaluation harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    condition: str
    mean_psnr: float            # capped for CSV friendliness
    mean_mape_per_band: tuple
    mean_tap_entropy: float


@dataclass(frozen=True)
class EvalReport:
    conditions: tuple           # of ConditionReport
    chi: float                  # cluster separation of DDR by condition
    mean_tap_entropy: float     # over every (image, condition)

    def condition_row(self, name: str) -> ConditionReport:
        for row in self.conditions:
            if row.condition == name:
                return row
        raise KeyError(name)

    def mean_psnr(self, names) -> float:
        return float(np.mean([self.condition_row(n).mean_psnr
                              for n in names]))

    def mean_top_quartile_mape(self) -> float:
        vals = []
        for row in self.conditions:
            bands = row.mean_mape_per_band
            vals.extend(bands[3 * len(bands) // 4:])
        return float(np.mean(vals))


def make_eval_images(config: TrainConfig) -> list:
    """Held-out synthetic images drawn from a disjoint seed stream."""
    return [synthesize_image(config.hr_size,
                             derive_seed(config.data_seed, f"eval-{i}"))
            for i in range(config.eval_size)]


def evaluate_model(model, hr_images, root_seed: int,
                   conditions=dg.CONDITIONS, bands: int = 16) -> EvalReport:
    """Render each condition, restore, and score the results.

    ``model`` needs ``restore`` and ``tap_features``; the network scale is
    read from ``model.config.scale`` (1 for pass-through harness models).
    """
    scale = getattr(getattr(model, "config", None), "scale", 1)
    vectors, labels = [], []
    rows = []
    entropies_all = []
    for condition in conditions:
        psnrs, mapes, entropies = [], [], []
        for i, hr in enumerate(hr_images):
            recipe = dg.canonical_recipe(
                condition, target_scale=scale,
                seed=derive_seed(root_seed, f"eval-{condition}-{i}"))
            lr = dg.degrade(hr, recipe)
            restored = model.restore(lr)
            psnrs.append(dx.psnr_capped(restored, hr))
            mapes.append(dx.radial_band_mape(restored, hr,
                                             bands).mape_per_band)
            tap = model.tap_features(lr)
            _, entropy = dx.channel_frequency_entropy(tap, bands)
            entropies.append(entropy)
            vectors.append(tap.mean(axis=(1, 2)))
            labels.append(condition)
        entropies_all.extend(entropies)
        rows.append(ConditionReport(
            condition=condition,
            mean_psnr=float(np.mean(psnrs)),
            mean_mape_per_band=tuple(np.mean(mapes, axis=0)),
            mean_tap_entropy=float(np.mean(entropies))))
    ddr = dx.DdrSet(np.stack(vectors), tuple(labels))
    chi = (dx.calinski_harabasz(ddr) if len(set(labels)) > 1
           else float("nan"))
    return EvalReport(conditions=tuple(rows), chi=chi,
                      mean_tap_entropy=float(np.mean(entropies_all)))


def eval_report_rows(report: EvalReport) -> list:
    """Flatten an EvalReport to CSV rows (one per condition plus summary)."""
    rows = [["condition", "mean_psnr", "mean_tap_entropy",
             "mean_mape_per_band"]]
    for row in report.conditions:
        rows.append([row.condition, repr(row.mean_psnr),
                     repr(row.mean_tap_entropy),
                     ";".join(repr(v) for v in row.mean_mape_per_band)])
    rows.append(["__summary__", repr(report.chi),
                 repr(report.mean_tap_entropy), ""])
    return rows
