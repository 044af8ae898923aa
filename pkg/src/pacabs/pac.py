"""Distribution-free probability intervals from sample counts.

Given N i.i.d. noise samples and, for a candidate successor region, the
number R of sample sets fully contained in it and the number R~ touching it,
this module turns the pair of counts into a probability interval that holds
with a prescribed per-interval confidence:

* the lower bound inverts a binomial tail equation from the
  sampling-and-discarding scenario approach, and
* the upper bound is the one-sided Hoeffding bound on a Bernoulli mean.

A two-sided interval built from the same per-bound confidence parameter beta
is correct with probability at least ``1 - 2 beta``; the confidence ledger
splits a global budget uniformly over all stored intervals so that the whole
abstraction is simultaneously correct with the desired overall confidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

BISECT_LO = 1e-12
BISECT_HI = 1.0 - 1e-12
RESIDUAL_RTOL = 1e-9
BRACKET_WIDTH = 1e-12


class PacError(Exception):
    """Raised for out-of-range bound arguments or an empty interval budget."""


@dataclass(frozen=True)
class ProbInterval:
    """Probability interval [lower, upper] with its per-bound confidence.

    ``counts`` records the (N, R, R~) triple the interval was computed from;
    ``widened`` flags the rare small-N case where the raw bounds crossed and
    the interval was widened to their envelope.
    """

    lower: float
    upper: float
    beta: float
    counts: tuple
    widened: bool = False

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise PacError(f"invalid interval [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class ConfidenceLedger:
    """Uniform split of a global confidence budget over stored intervals.

    With ``interval_count`` intervals each correct with probability at least
    ``1 - 2 * per_interval_beta``, the union bound gives simultaneous
    correctness with probability at least ``desired_overall_confidence``.
    """

    desired_overall_confidence: float
    interval_count: int
    per_interval_beta: float

    @property
    def overall_confidence(self) -> float:
        return 1.0 - 2.0 * self.per_interval_beta * self.interval_count


_LOG_BINOM_CACHE: dict = {}
_LOWER_BOUND_CACHE: dict = {}


def _log_binomial_row(n: int) -> np.ndarray:
    """log C(n, i) for i = 0..n, cached per n."""
    row = _LOG_BINOM_CACHE.get(n)
    if row is None:
        i = np.arange(n + 1)
        row = gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)
        _LOG_BINOM_CACHE[n] = row
    return row


def _binomial_tail_log(n: int, k: int, p: float) -> float:
    """log of sum_{i=0}^{k} C(n,i) (1-p)^i p^(n-i), evaluated stably."""
    i = np.arange(k + 1)
    logs = _log_binomial_row(n)[: k + 1] + i * math.log1p(-p) + (n - i) * math.log(p)
    peak = logs.max()
    return float(peak + np.log(np.exp(logs - peak).sum()))


def scenario_lower_bound(n_samples: int, contained_count: int, beta: float) -> float:
    """Scenario-approach lower bound on a containment probability.

    Returns 0 when no sample was contained; otherwise the unique root
    p in (0, 1) of ``beta / N = sum_{i=0}^{N-R} C(N,i) (1-p)^i p^(N-i)``,
    located by bisection on the monotone right-hand side with all terms
    evaluated in the log domain.
    """
    n, r = int(n_samples), int(contained_count)
    if n < 1 or not 0 <= r <= n or not 0.0 < beta < 1.0:
        raise PacError(f"invalid bound arguments (N={n}, R={r}, beta={beta})")
    if r == 0:
        return 0.0
    key = (n, r, float(beta))
    cached = _LOWER_BOUND_CACHE.get(key)
    if cached is not None:
        return cached
    target = math.log(beta / n)
    k = n - r
    lo, hi = BISECT_LO, BISECT_HI
    # RHS is increasing in p, from ~0 at p->0 to ~1 at p->1.
    root = None
    while hi - lo > BRACKET_WIDTH:
        mid = 0.5 * (lo + hi)
        val = _binomial_tail_log(n, k, mid)
        if abs(val - target) < RESIDUAL_RTOL:  # log residual ~ relative residual
            root = mid
            break
        if val < target:
            lo = mid
        else:
            hi = mid
    if root is None:
        root = 0.5 * (lo + hi)
    _LOWER_BOUND_CACHE[key] = root
    return root


def hoeffding_upper_bound(n_samples: int, touching_count: int, beta: float) -> float:
    """Hoeffding upper confidence bound on a Bernoulli mean: R~/N + sqrt(ln(1/beta) / 2N), clamped at 1."""
    n, rt = int(n_samples), int(touching_count)
    if n < 1 or not 0 <= rt <= n or not 0.0 < beta < 1.0:
        raise PacError(f"invalid bound arguments (N={n}, R~={rt}, beta={beta})")
    return min(1.0, rt / n + math.sqrt(math.log(1.0 / beta) / (2.0 * n)))


def transition_interval(counts, beta: float) -> ProbInterval:
    """Probability interval for one transition from its (N, R, R~) counts.

    A transition never touched by any sample gets the exact [0, 0] interval
    (no edge); otherwise the scenario lower bound and Hoeffding upper bound
    are combined, each at confidence ``1 - beta``, so the interval holds with
    probability at least ``1 - 2 beta``.
    """
    n, r, rt = (int(c) for c in counts)
    if not 0 <= r <= rt <= n:
        raise PacError(f"inconsistent counts (N={n}, R={r}, R~={rt})")
    if rt == 0:
        return ProbInterval(0.0, 0.0, beta, (n, r, rt))
    lower = scenario_lower_bound(n, r, beta)
    upper = hoeffding_upper_bound(n, rt, beta)
    if lower > upper:  # possible only at extreme small N; keep both bounds
        return ProbInterval(upper, lower, beta, (n, r, rt), widened=True)
    return ProbInterval(lower, upper, beta, (n, r, rt))


def allocate_confidence(interval_count: int, desired_overall: float) -> ConfidenceLedger:
    """Split a global confidence budget uniformly over ``interval_count`` intervals.

    The count must enumerate every distinct stored interval (successor
    regions and the absorbing state, deduplicated across origins that share
    a successor cloud); it is observable before any interval is computed.
    """
    if not 0.0 < desired_overall < 1.0:
        raise PacError("overall confidence must lie strictly between 0 and 1")
    if interval_count <= 0:
        raise PacError("no transitions")
    beta = (1.0 - desired_overall) / (2.0 * interval_count)
    return ConfidenceLedger(desired_overall_confidence=desired_overall,
                            interval_count=int(interval_count),
                            per_interval_beta=beta)


def interval_table(count_pairs: np.ndarray, n_samples: int, beta: float) -> np.ndarray:
    """Vectorized interval computation for rows of (R, R~) count pairs.

    Returns an array of shape (k, 2) with lower/upper bounds; duplicate count
    pairs are computed once.  Used by the abstraction pipeline, where the
    same counts recur across many transitions.
    """
    pairs = np.asarray(count_pairs, dtype=np.int64).reshape(-1, 2)
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    out = np.empty((uniq.shape[0], 2), dtype=float)
    for i, (r, rt) in enumerate(uniq):
        iv = transition_interval((n_samples, int(r), int(rt)), beta)
        out[i] = (iv.lower, iv.upper)
    return out[inverse]
