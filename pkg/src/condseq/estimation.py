"""Empirical conditional-probability estimation over a sampling oracle.

Shared machinery for the sampling-based learner and the approximate-basis
search.  The estimator builds one empirical next-symbol histogram per distinct
conditioning history and derives everything else — multi-step conditionals,
the regularity screen, preconditioned ratios — from those cached tables, so a
history that appears in many estimates is sampled once.
"""

from __future__ import annotations

import math

import numpy as np

from .distributions import ZeroProbabilityHistory
from .oracles import OracleHandle
from .sequences import Seq


def schedule_samples_per_step(horizon: int, rel_accuracy: float,
                              regularity: float, fail_prob: float) -> int:
    """Conservative per-step sample count for a relative-accuracy target.

    Grows as ``T^2 log(T / fail_prob) / (rel_accuracy * regularity)^2`` and is
    far beyond desk-scale budgets for any interesting setting, which is why
    ``CondEstimator`` takes the count as an explicit knob instead.  Exposed so
    callers can report how aggressive their chosen knob is.
    """
    if not 0.0 < rel_accuracy < 0.5:
        raise ValueError("rel_accuracy must lie in (0, 1/2)")
    t = max(horizon, 1)
    return math.ceil(t * t * math.log(max(t, 2) / fail_prob)
                     / (rel_accuracy * regularity) ** 2)


class CondEstimator:
    """Cached empirical conditionals behind a sampling oracle.

    One histogram of next-symbol frequencies is built per distinct
    conditioning history (``samples_per_history`` fresh draws each) and reused
    by every estimate that walks through that history.  Multi-step
    conditionals are products of per-step empirical frequencies, so repeated
    calls are deterministic once the underlying histograms exist.
    """

    def __init__(self, oracle: OracleHandle, samples_per_history: int) -> None:
        if samples_per_history <= 0:
            raise ValueError("samples_per_history must be positive")
        self.oracle = oracle
        self.samples_per_history = samples_per_history
        self._freqs: dict[Seq, np.ndarray] = {}

    @property
    def histories_cached(self) -> int:
        return len(self._freqs)

    # -- cached one-step tables -------------------------------------------

    def next_symbol_freqs(self, history: Seq) -> np.ndarray:
        """Empirical next-symbol frequencies after ``history``.

        A history the underlying distribution gives zero probability yields
        the all-zero vector (conditioning on it is impossible, and every
        estimate walking through it should vanish).
        """
        history = tuple(history)
        cached = self._freqs.get(history)
        if cached is not None:
            return cached
        if len(history) >= self.oracle.horizon:
            raise ValueError("history already has full length")
        n_symbols = self.oracle.n_symbols
        try:
            draws = self.oracle.sample_query(history, size=self.samples_per_history)
        except ZeroProbabilityHistory:
            freqs = np.zeros(n_symbols)
        else:
            first = np.fromiter((f[0] for f in draws), dtype=np.int64,
                                count=len(draws))
            freqs = np.bincount(first - 1, minlength=n_symbols) / len(draws)
        self._freqs[history] = freqs
        return freqs

    # -- derived multi-step estimates -------------------------------------

    def step_estimates(self, history: Seq, future: Seq) -> np.ndarray:
        """Per-step empirical conditionals of ``future`` after ``history``."""
        history = tuple(history)
        out = np.empty(len(future))
        for i, o in enumerate(future):
            out[i] = self.next_symbol_freqs(history)[o - 1]
            history += (o,)
        return out

    def cond_prob(self, history: Seq, future: Seq) -> float:
        """Multi-step estimate: product of per-step empirical conditionals."""
        return float(np.prod(self.step_estimates(history, future)))

    def passes_regularity(self, history: Seq, future: Seq,
                          alpha: float) -> bool:
        """Screen for well-conditioned futures.

        Passes when every per-step empirical conditional exceeds ``2 * alpha``;
        a future that fails is (with high probability) irregular at level
        ``3 * alpha`` and its relative estimate cannot be trusted.
        """
        return bool(np.all(self.step_estimates(history, future) > 2.0 * alpha))

    def gated_cond_prob(self, history: Seq, future: Seq, alpha: float) -> float:
        """Multi-step estimate, zeroed when the regularity screen fails."""
        steps = self.step_estimates(history, future)
        if np.all(steps > 2.0 * alpha):
            return float(np.prod(steps))
        return 0.0
