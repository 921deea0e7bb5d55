"""Brute-force interaction analysis over explicit cooperative games.

A game stores one value per player-subset bitmask. The quantities computed
here are the pairwise marginal reward, its inclusion-exclusion pattern reward
(the Harsanyi dividend of the pattern), the order-s interaction (averaged
over contexts of size s), the dropout-reduced interaction, and both sides of
the binomial-weighted dividend ratio identity relating them.

Everything is exact exhaustive enumeration; player counts are capped at 16.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb, fsum

import numpy as np

from .errors import ContractError, DegenerateInputError
from .tensor import channel_dropout  # channel dropout op lives with the engine

__all__ = [
    "CooperativeGame",
    "InteractionReport",
    "marginal_reward",
    "harsanyi_reward",
    "interaction_order",
    "average_dividend",
    "dropout_interaction",
    "fixed_r_dropout_interaction",
    "lemma_ratio",
    "channel_dropout",
]

MAX_PLAYERS = 16


@dataclass(frozen=True)
class CooperativeGame:
    """Explicit value function over all 2^n subsets of n players."""

    n: int
    values: np.ndarray  # length 2^n, indexed by subset bitmask

    def __post_init__(self):
        if not 1 <= self.n <= MAX_PLAYERS:
            raise ContractError(f"player count must be in [1, {MAX_PLAYERS}], got {self.n}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (2 ** self.n,):
            raise ContractError(
                f"value table must have length 2^{self.n}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ContractError("game values must all be finite")
        object.__setattr__(self, "values", vals)

    def v(self, subset: int) -> float:
        return float(self.values[subset])

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "CooperativeGame":
        return cls(n=n, values=rng.normal(size=2 ** n))

    @classmethod
    def additive(cls, coeffs) -> "CooperativeGame":
        coeffs = np.asarray(coeffs, dtype=np.float64)
        n = coeffs.shape[0]
        vals = np.zeros(2 ** n)
        for mask in range(2 ** n):
            vals[mask] = sum(coeffs[k] for k in _members(mask))
        return cls(n=n, values=vals)

    @classmethod
    def from_dividends(cls, dividends: np.ndarray) -> "CooperativeGame":
        """Moebius recomposition: v(S) = sum of dividends of all T within S."""
        dividends = np.asarray(dividends, dtype=np.float64)
        n = int(np.log2(dividends.shape[0]))
        if dividends.shape != (2 ** n,):
            raise ContractError("dividend table length must be a power of two")
        vals = dividends.copy()
        # zeta transform over subsets
        for k in range(n):
            bit = 1 << k
            for mask in range(2 ** n):
                if mask & bit:
                    vals[mask] += vals[mask ^ bit]
        return cls(n=n, values=vals)


@dataclass
class InteractionReport:
    """All interaction quantities for one player pair."""

    pair: tuple[int, int]
    orders: np.ndarray           # I^(s) for s = 0..n-2
    dropout_orders: np.ndarray   # binomially mixed dropout interaction per s
    keep_prob: float
    dividends: np.ndarray        # J^(q) for q = 0..n-2


def _members(mask: int):
    k = 0
    while mask:
        if mask & 1:
            yield k
        mask >>= 1
        k += 1


def _submasks(mask: int):
    """All submasks of ``mask``, including 0 and mask itself."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def _check_pair(game: CooperativeGame, i: int, j: int, context: int):
    if i == j:
        raise ContractError("players i and j must be distinct")
    for p in (i, j):
        if not 0 <= p < game.n:
            raise ContractError(f"player {p} outside range [0, {game.n})")
    if context & (1 << i) or context & (1 << j):
        raise ContractError("context must exclude players i and j")


def marginal_reward(game: CooperativeGame, i: int, j: int, context: int) -> float:
    """v(S+{i,j}) - v(S+{i}) - v(S+{j}) + v(S) for a context bitmask S."""
    _check_pair(game, i, j, context)
    bi, bj = 1 << i, 1 << j
    return (game.v(context | bi | bj) - game.v(context | bi)
            - game.v(context | bj) + game.v(context))


def harsanyi_reward(game: CooperativeGame, i: int, j: int, pattern: int) -> float:
    """Inclusion-exclusion of marginal rewards over subcontexts of ``pattern``.

    This is the Harsanyi dividend of the pattern T+{i,j}.
    """
    _check_pair(game, i, j, pattern)
    t_size = bin(pattern).count("1")
    terms = []
    for sub in _submasks(pattern):
        sign = -1.0 if (t_size - bin(sub).count("1")) % 2 else 1.0
        terms.append(sign * marginal_reward(game, i, j, sub))
    return fsum(terms)


def _contexts(game: CooperativeGame, i: int, j: int, size: int):
    others = [k for k in range(game.n) if k not in (i, j)]
    for combo in combinations(others, size):
        mask = 0
        for k in combo:
            mask |= 1 << k
        yield mask


def interaction_order(game: CooperativeGame, i: int, j: int, s: int) -> float:
    """Average over all size-s contexts S of sum_{T within S} R^T(i, j)."""
    if not 0 <= s <= game.n - 2:
        raise ContractError(f"order s must be in [0, {game.n - 2}], got {s}")
    terms = []
    for ctx in _contexts(game, i, j, s):
        terms.extend(harsanyi_reward(game, i, j, t) for t in _submasks(ctx))
    return fsum(terms) / comb(game.n - 2, s)


def average_dividend(game: CooperativeGame, i: int, j: int, q: int) -> float:
    """J^(q): average pattern reward over all patterns of size q."""
    if not 0 <= q <= game.n - 2:
        raise ContractError(f"dividend order q must be in [0, {game.n - 2}], got {q}")
    vals = [harsanyi_reward(game, i, j, t) for t in _contexts(game, i, j, q)]
    return fsum(vals) / len(vals)


def fixed_r_dropout_interaction(game: CooperativeGame, i: int, j: int,
                                s: int, r: int) -> float:
    """Dropout interaction conditioned on exactly r surviving context units.

    Averages over size-s contexts S, then uniformly over size-r subsets
    S' of S, the total pattern reward within S'.
    """
    if not 0 <= r <= s:
        raise ContractError(f"need 0 <= r <= s, got r={r}, s={s}")
    if not 0 <= s <= game.n - 2:
        raise ContractError(f"order s must be in [0, {game.n - 2}], got {s}")
    terms = []
    count = 0
    for ctx in _contexts(game, i, j, s):
        members = list(_members(ctx))
        for keep in combinations(members, r):
            sub = 0
            for k in keep:
                sub |= 1 << k
            terms.extend(harsanyi_reward(game, i, j, t) for t in _submasks(sub))
            count += 1
    return fsum(terms) / count


def dropout_interaction(game: CooperativeGame, i: int, j: int, s: int,
                        keep_prob: float, method: str = "exhaustive",
                        rng: np.random.Generator | None = None,
                        samples: int = 100_000) -> float:
    """Dropout-reduced order-s interaction at keep probability p.

    Each context unit survives independently with probability p, so the
    survivor count follows Binomial(s, p). ``exhaustive`` sums that law
    exactly; ``montecarlo`` samples it.
    """
    if not 0.0 <= keep_prob <= 1.0:
        raise ContractError(f"keep_prob must be in [0, 1], got {keep_prob}")
    if method == "exhaustive":
        total = 0.0
        for r in range(s + 1):
            w = comb(s, r) * keep_prob ** r * (1.0 - keep_prob) ** (s - r)
            if w > 0.0:
                total += w * fixed_r_dropout_interaction(game, i, j, s, r)
        return total
    if method != "montecarlo":
        raise ContractError(f"unknown method {method!r}")
    if rng is None:
        raise ContractError("montecarlo method needs an rng")
    contexts = list(_contexts(game, i, j, s))
    total = 0.0
    for _ in range(samples):
        ctx = contexts[rng.integers(len(contexts))]
        survivors = 0
        for k in _members(ctx):
            if rng.random() < keep_prob:
                survivors |= 1 << k
        total += sum(harsanyi_reward(game, i, j, t) for t in _submasks(survivors))
    return total / samples


def lemma_ratio(game: CooperativeGame, i: int, j: int, s: int, r: int,
                ) -> tuple[float, float]:
    """Both routes to the dropout/full interaction ratio.

    lhs enumerates the fixed-r dropout interaction divided by I^(s); rhs is
    the binomial-weighted average-dividend ratio. They agree as an identity;
    the <= 1 bound additionally needs nonnegative dividends.

    Both routes run in exact rational arithmetic on the (exact) float game
    values: the ratio can be arbitrarily ill-conditioned when I^(s) nearly
    cancels, and float64 enumeration cannot certify the identity there.
    """
    if r > s:
        raise ContractError(f"need r <= s, got r={r}, s={s}")
    if not 0 <= s <= game.n - 2:
        raise ContractError(f"order s must be in [0, {game.n - 2}], got {s}")
    _check_pair(game, i, j, 0)

    vals = [Fraction(v) for v in game.values]
    bi, bj = 1 << i, 1 << j

    def marg(ctx: int) -> Fraction:
        return (vals[ctx | bi | bj] - vals[ctx | bi]
                - vals[ctx | bj] + vals[ctx])

    patterns = {}
    for q in range(s + 1):
        for t in _contexts(game, i, j, q):
            tq = bin(t).count("1")
            patterns[t] = sum(
                ((-1) ** (tq - bin(sub).count("1"))) * marg(sub)
                for sub in _submasks(t))

    # route 1: direct enumeration of I^(s) and the fixed-r reduction
    full_terms = [patterns[t]
                  for ctx in _contexts(game, i, j, s)
                  for t in _submasks(ctx)]
    full = sum(full_terms, Fraction(0)) / comb(game.n - 2, s)
    if abs(float(full)) < 1e-12:
        raise DegenerateInputError(
            f"|I^({s})| = {abs(float(full)):.3e} is too small for a stable ratio")
    reduced_terms = []
    count = 0
    for ctx in _contexts(game, i, j, s):
        members = list(_members(ctx))
        for keep in combinations(members, r):
            sub = 0
            for k in keep:
                sub |= 1 << k
            reduced_terms.extend(patterns[t] for t in _submasks(sub))
            count += 1
    lhs = (sum(reduced_terms, Fraction(0)) / count) / full

    # route 2: binomial-weighted average dividends
    dividends = []
    for q in range(s + 1):
        qs = [patterns[t] for t in _contexts(game, i, j, q)]
        dividends.append(sum(qs, Fraction(0)) / len(qs))
    num = sum((comb(r, q) * dividends[q] for q in range(r + 1)), Fraction(0))
    den = sum((comb(s, q) * dividends[q] for q in range(s + 1)), Fraction(0))
    return float(lhs), float(num / den)


def interaction_report(game: CooperativeGame, i: int, j: int,
                       keep_prob: float) -> InteractionReport:
    """Bundle every per-order quantity for one pair."""
    orders = np.array([interaction_order(game, i, j, s)
                       for s in range(game.n - 1)])
    mixed = np.array([dropout_interaction(game, i, j, s, keep_prob)
                      for s in range(game.n - 1)])
    divs = np.array([average_dividend(game, i, j, q)
                     for q in range(game.n - 1)])
    return InteractionReport(pair=(i, j), orders=orders, dropout_orders=mixed,
                             keep_prob=keep_prob, dividends=divs)
