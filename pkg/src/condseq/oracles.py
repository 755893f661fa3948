"""Query-counted oracle access to a sequence distribution.

Learners never touch the underlying distribution directly; they go through an
:class:`OracleHandle`, which enforces the access mode (exact conditional
probabilities vs. conditional sampling), counts every query, and optionally
enforces a total budget.  Joint-distribution samples (full sequences or
truncated prefixes) are available in both modes and count one query per draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sequences import Seq

EXACT = "exact"
SAMPLING = "sampling"


class BudgetExceeded(RuntimeError):
    """Raised when a query would push the oracle past its budget."""


class WrongOracleMode(RuntimeError):
    """Raised when a query type is not available in the handle's mode."""


@dataclass
class OracleStats:
    """Running counts of oracle usage."""

    exact_queries: int = 0
    sample_queries: int = 0
    joint_queries: int = 0
    by_history_length: dict[int, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.exact_queries + self.sample_queries + self.joint_queries

    def _record(self, history_len: int, k: int) -> None:
        self.by_history_length[history_len] = (
            self.by_history_length.get(history_len, 0) + k
        )

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "exact_queries": self.exact_queries,
            "sample_queries": self.sample_queries,
            "joint_queries": self.joint_queries,
            "by_history_length": dict(sorted(self.by_history_length.items())),
        }


@dataclass
class OracleHandle:
    """Mode-checked, counted access to ``dist``.

    Parameters
    ----------
    dist:
        Any distribution with the duck-typed surface from
        :mod:`condseq.distributions`.
    mode:
        ``"exact"`` or ``"sampling"``.
    seed:
        Seeds a private RNG stream for the sampling queries.
    budget:
        Optional cap on the total query count.
    """

    dist: object
    mode: str = EXACT
    seed: int | None = None
    budget: int | None = None
    stats: OracleStats = field(default_factory=OracleStats)
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.mode not in (EXACT, SAMPLING):
            raise ValueError(f"unknown oracle mode {self.mode!r}")
        self.rng = np.random.default_rng(self.seed)

    @property
    def n_symbols(self) -> int:
        return self.dist.n_symbols

    @property
    def horizon(self) -> int:
        return self.dist.horizon

    def _charge(self, k: int, history_len: int, kind: str) -> None:
        if self.budget is not None and self.stats.total + k > self.budget:
            raise BudgetExceeded(
                f"query budget {self.budget} exhausted "
                f"(at {self.stats.total}, requested {k})"
            )
        setattr(self.stats, kind, getattr(self.stats, kind) + k)
        self.stats._record(history_len, k)

    # -- exact mode --------------------------------------------------------

    def exact_query(self, history: Seq, future: Seq) -> float:
        """``Pr[future | history]`` — exact mode only; one query."""
        if self.mode != EXACT:
            raise WrongOracleMode("exact_query requires an exact-mode oracle")
        if len(history) + len(future) > self.horizon:
            raise ValueError("history plus future exceed horizon")
        self._charge(1, len(history), "exact_queries")
        return self.dist.conditional_prob(tuple(history), tuple(future))

    # -- sampling mode -----------------------------------------------------

    def sample_query(self, history: Seq, size: int | None = None):
        """Draw future(s) from ``Pr[· | history]`` — sampling mode only.

        Each returned sequence counts as one query.
        """
        if self.mode != SAMPLING:
            raise WrongOracleMode("sample_query requires a sampling-mode oracle")
        k = 1 if size is None else size
        self._charge(k, len(history), "sample_queries")
        return self.dist.sample_conditional(tuple(history), self.rng, size)

    # -- both modes --------------------------------------------------------

    def sample_joint(self, t: int, size: int | None = None):
        """Draw length-``t`` prefix(es) of full joint samples; one query each."""
        if not 0 <= t <= self.horizon:
            raise ValueError("prefix length out of range")
        k = 1 if size is None else size
        self._charge(k, 0, "joint_queries")
        full = self.dist.sample_conditional((), self.rng, size=k)
        trimmed = [seq[:t] for seq in full]
        return trimmed[0] if size is None else trimmed
