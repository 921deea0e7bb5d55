"""Self-check batteries: finite-difference gradients and the ratio lemma.

These are callable both from tests and from the command line
(``verify-gradcheck`` / ``verify-lemma``), so a user can confirm on their
own machine that the autodiff engine and the interaction identities hold.
"""

from dataclasses import dataclass

import numpy as np

from . import alignment as al
from . import interactions as ia
from . import tensor as T
from . import training as tr
from .errors import DegenerateInputError
from .model import ModelConfig, ToyModel
from .tensor import Tensor


@dataclass(frozen=True)
class CheckResult:
    name: str
    seed: int
    max_rel_err: float
    passed: bool


def _gradcheck_cases(seed: int):
    """One named closure per differentiable operation, at a random point."""
    rng = np.random.default_rng(seed)

    def away_from_zero(shape, margin=0.2):
        # keep probe points clear of ReLU/abs kinks
        raw = rng.uniform(margin, 1.0, size=shape)
        return raw * rng.choice([-1.0, 1.0], size=shape)

    x_img = Tensor(rng.standard_normal((2, 4, 4)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)) * 0.3, requires_grad=True)
    b = Tensor(rng.standard_normal(3) * 0.1, requires_grad=True)
    feats = Tensor(rng.standard_normal((3, 4, 4)), requires_grad=True)
    projector = al.RffProjector.from_seed(4, seed)

    # fixed cotangent-like weightings, sampled once so every probe of a
    # closure evaluates the same function
    wc_conv = T.tensor(rng.standard_normal((3, 4, 4)))
    wc_lrelu = T.tensor(rng.standard_normal((3, 5)))
    wc_up = T.tensor(rng.standard_normal((2, 8, 8)))
    wc_mean = T.tensor(rng.standard_normal((1, 3)))
    wc_cov = T.tensor(rng.standard_normal((3, 3)))
    wc_rff = T.tensor(rng.standard_normal((16, 12)))
    other = T.tensor(rng.standard_normal((3, 4, 4)))

    cases = [
        ("conv2d/input", x_img,
         lambda t: T.conv2d(t, w, b).sum()),
        ("conv2d/weights", w,
         lambda t: T.conv2d(x_img, t, b).sum()),
        ("conv2d/bias", b,
         lambda t: (T.conv2d(x_img, w, t) * wc_conv).sum()),
        ("leaky_relu", Tensor(away_from_zero((3, 5)), requires_grad=True),
         lambda t: (T.leaky_relu(t) * wc_lrelu).sum()),
        ("upsample_nearest", x_img,
         lambda t: (T.upsample_nearest(t, 2) * wc_up).sum()),
        ("spatial_mean", feats,
         lambda t: (al.spatial_mean(al.feature_matrix(t)) * wc_mean).sum()),
        ("channel_covariance", feats,
         lambda t: (al.channel_covariance(al.feature_matrix(t))
                    * wc_cov).sum()),
        ("linear_alignment_loss", feats,
         lambda t: al.linear_alignment_loss(al.feature_matrix(t),
                                            al.feature_matrix(other))),
        ("rff_map", feats,
         lambda t: (al.rff_map(al.feature_matrix(t), projector)
                    * wc_rff).sum()),
        ("nonlinear_alignment_loss", feats,
         lambda t: al.nonlinear_alignment_loss(al.feature_matrix(t),
                                               al.feature_matrix(other),
                                               projector)),
    ]
    return cases


def _full_graph_cases(seed: int):
    """Finite-difference the training objective against every parameter."""
    rng = np.random.default_rng(seed)
    model = ToyModel(ModelConfig(in_channels=3, width=2, blocks=1, scale=2),
                     init_seed=seed)
    x1 = T.tensor(rng.random((1, 3, 4, 4)))
    x2 = T.tensor(rng.random((1, 3, 4, 4)))
    hr = T.tensor(rng.random((1, 3, 8, 8)))
    align_cfg = al.AlignmentConfig(mode="linear", weight=1.0)

    def objective():
        out1, tap1 = model.forward(x1)
        out2, tap2 = model.forward(x2)
        return (tr._l1(out1, hr) + tr._l1(out2, hr)
                + tr._alignment_term(tap1, tap2, align_cfg))

    cases = []
    for name in model.params:
        def f(t, _name=name):
            model.params[_name] = t
            try:
                return objective()
            finally:
                model.params[_name] = t
        cases.append((f"training_graph/{name}", model.params[name], f))
    return cases


def gradient_check_suite(seeds=range(10), tol: float = 1e-4) -> list:
    """Run every gradient check at every seed; returns CheckResults."""
    results = []
    for seed in seeds:
        for name, point, f in (_gradcheck_cases(seed)
                               + _full_graph_cases(seed)):
            report = T.grad_check(f, point, tol=tol)
            results.append(CheckResult(name=name, seed=seed,
                                       max_rel_err=report.max_rel_err,
                                       passed=report.passed))
    return results


@dataclass(frozen=True)
class LemmaReport:
    games: int
    max_identity_gap: float     # max |direct - reduced| over all (s, r)
    max_ratio_excess: float     # max(ratio - 1) on nonnegative-dividend games
    passed: bool


def lemma_verification(seed: int, games: int = 100, n: int = 6,
                       identity_tol: float = 1e-9,
                       ratio_tol: float = 1e-12) -> LemmaReport:
    """Check the dropout-interaction ratio identity and its bound.

    On random games, the fixed-size-context interaction reduced over the
    dropout distribution must equal the binomial recombination of average
    dividends for every valid (s, r); on games with nonnegative dividends,
    the ratio is at most 1 for r < s.
    """
    rng = np.random.default_rng(seed)
    i, j = 0, 1
    max_gap = 0.0
    for _ in range(games):
        game = ia.CooperativeGame.random(n, rng)
        for s in range(n - 1):
            for r in range(s + 1):
                try:
                    lhs, rhs = ia.lemma_ratio(game, i, j, s, r)
                except DegenerateInputError:
                    continue
                max_gap = max(max_gap, abs(lhs - rhs))
    max_excess = 0.0
    for _ in range(games):
        game = ia.CooperativeGame.from_dividends(
            rng.uniform(0.0, 1.0, size=2 ** n))
        for s in range(1, n - 1):
            for r in range(s):
                try:
                    lhs, _ = ia.lemma_ratio(game, i, j, s, r)
                except DegenerateInputError:
                    continue
                max_excess = max(max_excess, lhs - 1.0)
    passed = max_gap < identity_tol and max_excess <= ratio_tol
    return LemmaReport(games=games, max_identity_gap=max_gap,
                       max_ratio_excess=max_excess, passed=passed)
