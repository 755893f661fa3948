import numpy as np
import pytest

from condseq.distributions import TableDist
from condseq.oracles import (
    BudgetExceeded,
    OracleHandle,
    WrongOracleMode,
)

TABLE = TableDist(np.array([0.1, 0.2, 0.3, 0.4]), n_symbols=2, horizon=2)


def test_mode_enforcement():
    exact = OracleHandle(TABLE, mode="exact")
    sampling = OracleHandle(TABLE, mode="sampling", seed=0)
    with pytest.raises(WrongOracleMode):
        exact.sample_query((1,))
    with pytest.raises(WrongOracleMode):
        sampling.exact_query((1,), (2,))
    with pytest.raises(ValueError):
        OracleHandle(TABLE, mode="psychic")


def test_exact_query_passthrough_and_counting():
    oracle = OracleHandle(TABLE, mode="exact")
    assert oracle.exact_query((1,), (2,)) == pytest.approx(0.2 / 0.3)
    assert oracle.exact_query((), (2, 1)) == pytest.approx(0.3)
    assert oracle.stats.exact_queries == 2
    assert oracle.stats.total == 2
    assert oracle.stats.by_history_length == {0: 1, 1: 1}
    with pytest.raises(ValueError):
        oracle.exact_query((1, 2), (1,))


def test_budget_enforced_across_query_kinds():
    oracle = OracleHandle(TABLE, mode="sampling", seed=1, budget=10)
    oracle.sample_query((), size=8)
    with pytest.raises(BudgetExceeded):
        oracle.sample_query((), size=3)
    # a smaller request still fits
    oracle.sample_joint(1, size=2)
    assert oracle.stats.total == 10
    with pytest.raises(BudgetExceeded):
        oracle.sample_joint(1)


def test_sampling_is_deterministic_given_seed():
    a = OracleHandle(TABLE, mode="sampling", seed=123)
    b = OracleHandle(TABLE, mode="sampling", seed=123)
    assert a.sample_query((), size=50) == b.sample_query((), size=50)
    assert a.sample_joint(1, size=20) == b.sample_joint(1, size=20)
    c = OracleHandle(TABLE, mode="sampling", seed=124)
    assert a.sample_query((), size=200) != c.sample_query((), size=200)


def test_sample_joint_prefix_shapes():
    oracle = OracleHandle(TABLE, mode="sampling", seed=5)
    prefixes = oracle.sample_joint(1, size=30)
    assert all(len(p) == 1 and p[0] in (1, 2) for p in prefixes)
    single = oracle.sample_joint(2)
    assert isinstance(single, tuple) and len(single) == 2
    assert oracle.sample_joint(0, size=3) == [(), (), ()]
    with pytest.raises(ValueError):
        oracle.sample_joint(3)


def test_sample_query_frequencies():
    oracle = OracleHandle(TABLE, mode="sampling", seed=7)
    draws = oracle.sample_query((2,), size=4000)
    freq = np.mean([f == (1,) for f in draws])
    assert freq == pytest.approx(3 / 7, abs=0.03)
    assert oracle.stats.sample_queries == 4000


def test_stats_as_dict_round_trip():
    oracle = OracleHandle(TABLE, mode="exact")
    oracle.exact_query((), (1,))
    d = oracle.stats.as_dict()
    assert d["total"] == 1
    assert d["exact_queries"] == 1
    assert d["by_history_length"] == {0: 1}
