"""Candidate-PIN ranking from per-keypress digit distributions.

The joint probability of a PIN is the product of its digits' predicted
probabilities. ``rank_pins`` enumerates the k most probable PINs by
best-first search over per-position sorted choices without materializing the
full 10^N product space; ``swap_heuristic_guesses`` implements the
alternative attempt-generation rule that flips the digit with the smallest
top1-top2 probability gap.

Products are computed in log space; zero probabilities are floored at
``PROB_EPS``. Ties are broken toward the lexicographically smaller PIN (and,
in the swap heuristic, toward the lowest digit position).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch

PROB_EPS = 1e-12
DIST_TOL = 1e-5


def ensure_distribution(p, tol: float = DIST_TOL) -> np.ndarray:
    """Validate a 10-way digit distribution and return it as float64."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape != (10,):
        raise ValueError(f"expected 10 class probabilities, got shape {arr.shape}")
    if np.any(arr < -tol) or np.any(arr > 1 + tol):
        raise ValueError("probabilities outside [0, 1]")
    if abs(float(arr.sum()) - 1.0) > tol:
        raise ValueError(f"probabilities sum to {arr.sum():.6f}, not 1")
    return arr


@dataclass(frozen=True)
class PinCandidate:
    digits: tuple[int, ...]
    log_prob: float
    rank: int

    @property
    def pin(self) -> str:
        return "".join(str(d) for d in self.digits)

    @property
    def prob(self) -> float:
        return math.exp(self.log_prob)


def pin_probability(dists, pin) -> float:
    """Joint probability of ``pin`` under independent per-digit distributions."""
    digits = [int(d) for d in pin]
    if len(digits) != len(dists):
        raise LengthMismatch(f"pin length {len(digits)} != {len(dists)} distributions")
    prob = 1.0
    for dist, digit in zip(dists, digits):
        prob *= float(ensure_distribution(dist)[digit])
    return prob


def _sorted_choices(dists) -> tuple[list[list[int]], list[list[float]]]:
    """Per position: digits sorted by descending probability (ties: lower digit)."""
    choices: list[list[int]] = []
    logs: list[list[float]] = []
    for dist in dists:
        arr = ensure_distribution(dist)
        logp = np.log(np.maximum(arr, PROB_EPS))
        order = sorted(range(10), key=lambda d: (-logp[d], d))
        choices.append(order)
        logs.append([float(logp[d]) for d in order])
    return choices, logs


def rank_pins(dists, k: int, method: str = "best_first") -> list[PinCandidate]:
    """The k most probable PINs in descending joint-probability order.

    ``method='best_first'`` expands candidates lazily from the all-argmax
    assignment; ``method='exhaustive'`` sorts the full product space and is
    only permitted for up to 5 digits.
    """
    n = len(dists)
    if n == 0:
        raise LengthMismatch("need at least one distribution")
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, 10**n)
    choices, logs = _sorted_choices(dists)

    def digits_of(ranks: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(choices[i][r] for i, r in enumerate(ranks))

    def score_of(ranks: tuple[int, ...]) -> float:
        return sum(logs[i][r] for i, r in enumerate(ranks))

    if method == "exhaustive":
        if n > 5:
            raise ValueError("exhaustive ranking limited to 5 digits")
        import itertools

        scored = [
            (score_of(ranks), digits_of(ranks))
            for ranks in itertools.product(range(10), repeat=n)
        ]
        scored.sort(key=lambda item: (-item[0], item[1]))
        return [
            PinCandidate(digits=digits, log_prob=logp, rank=i + 1)
            for i, (logp, digits) in enumerate(scored[:k])
        ]
    if method != "best_first":
        raise ValueError(f"unknown method {method!r}")

    # Each node bumps positions >= its frontier, which reaches every rank
    # vector exactly once (bumps applied in nondecreasing position order).
    root = (0,) * n
    heap: list[tuple[float, tuple[int, ...], tuple[int, ...], int]] = [
        (-score_of(root), digits_of(root), root, 0)
    ]
    out: list[PinCandidate] = []
    while heap and len(out) < k:
        neg_score, digits, ranks, frontier = heapq.heappop(heap)
        out.append(PinCandidate(digits=digits, log_prob=-neg_score, rank=len(out) + 1))
        for i in range(frontier, n):
            if ranks[i] + 1 < 10:
                child = ranks[:i] + (ranks[i] + 1,) + ranks[i + 1 :]
                heapq.heappush(heap, (-score_of(child), digits_of(child), child, i))
    return out


def swap_heuristic_guesses(dists, attempts: int = 3) -> list[tuple[int, ...]]:
    """Attempt list per the minimal-gap digit swap rule.

    Guess 1 is the per-digit argmax PIN. Guess j+1 replaces the digit with
    the j-th smallest top1-top2 probability gap by its second-best digit
    (gap ties broken by lowest position).
    """
    n = len(dists)
    if not 1 <= attempts <= n + 1:
        raise ValueError(f"attempts must be in [1, {n + 1}]")
    choices, logs = _sorted_choices(dists)
    best = [choices[i][0] for i in range(n)]
    second = [choices[i][1] for i in range(n)]
    gaps = [math.exp(logs[i][0]) - math.exp(logs[i][1]) for i in range(n)]
    order = sorted(range(n), key=lambda i: (gaps[i], i))
    guesses = [tuple(best)]
    for j in range(attempts - 1):
        flipped = list(best)
        flipped[order[j]] = second[order[j]]
        guesses.append(tuple(flipped))
    return guesses


def truncate_for_4digit(dists) -> list:
    """Drop the final digit's distribution (5-digit to 4-digit evaluation)."""
    if len(dists) < 2:
        raise LengthMismatch("need at least two distributions to truncate")
    return list(dists[:-1])
