import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from condseq.distributions import TableDist
from condseq.generators import (
    make_parity_hmm,
    make_random_table,
    parity_class_bases,
)
from condseq.metrics import (
    FidelityReport,
    conditional_gap_exact,
    expected_span_residual,
    fidelity_for_bases,
    irregular_mass,
    robust_sigma,
    robust_sigma_per_level,
    search_fidelity_bases,
    sequence_two_step_matrix,
    sigma_matrix,
    tv_conditional_bound,
    tv_exact,
)
from condseq.sequences import all_seqs

from _reference import parity_reference_prob, random_hmm

HAND = TableDist(np.array([0.1, 0.2, 0.3, 0.4]), n_symbols=2, horizon=2)
SHIFTED = TableDist(np.array([0.2, 0.1, 0.3, 0.4]), n_symbols=2, horizon=2)


def test_tv_exact_hand_value():
    q = TableDist(np.array([0.4, 0.3, 0.2, 0.1]), n_symbols=2, horizon=2)
    assert tv_exact(HAND, q) == pytest.approx(0.4, abs=1e-12)
    assert tv_exact(HAND, HAND) == 0.0


def test_tv_exact_rejects_mismatched_shapes():
    other = TableDist(np.array([0.5, 0.5]), n_symbols=2, horizon=1)
    with pytest.raises(ValueError):
        tv_exact(HAND, other)


def test_conditional_gap_hand_value():
    # only the history (1,) differs: conditionals (1/3, 2/3) vs (2/3, 1/3),
    # weighted by Pr[(1,)] = 0.3
    assert conditional_gap_exact(HAND, SHIFTED) == pytest.approx(0.1, abs=1e-12)
    assert conditional_gap_exact(HAND, HAND) == 0.0


def test_tv_bound_exact_mode_dominates_tv():
    bound = tv_conditional_bound(HAND, SHIFTED, exact=True)
    assert bound == pytest.approx(3 * 2 * 0.1 / 2, abs=1e-12)
    assert tv_exact(HAND, SHIFTED) <= bound


def test_tv_bound_sampled_mode_approximates_exact():
    p = make_random_table(2, 3, seed=0)
    q = make_random_table(2, 3, seed=1)
    exact = tv_conditional_bound(p, q, exact=True)
    sampled = tv_conditional_bound(p, q, n_samples=2000,
                                   rng=np.random.default_rng(0))
    assert sampled == pytest.approx(exact, rel=0.25)
    with pytest.raises(ValueError):
        tv_conditional_bound(p, q)


@given(st.integers(0, 500))
def test_tv_exact_is_a_metric(seed):
    p = make_random_table(2, 3, seed=seed)
    q = make_random_table(2, 3, seed=seed + 1000)
    r = make_random_table(2, 3, seed=seed + 2000)
    ab, ba = tv_exact(p, q), tv_exact(q, p)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert 0.0 <= ab <= 1.0
    assert tv_exact(p, r) <= ab + tv_exact(q, r) + 1e-12


def test_parity_fidelity_closed_form():
    for alpha, want in [(0.3, 0.08), (0.2, 0.18)]:
        hmm = make_parity_hmm(4, alpha=alpha)
        report = fidelity_for_bases(hmm, parity_class_bases(4))
        assert report.min_sigma == pytest.approx((1 - 2 * alpha) ** 2 / 2,
                                                 abs=1e-9)
        assert report.min_sigma == pytest.approx(want, abs=1e-9)
        # singleton endpoint levels are perfectly conditioned
        assert report.sigmas[0] == pytest.approx(1.0, abs=1e-9)
        assert report.sigmas[4] == pytest.approx(1.0, abs=1e-9)


def test_fidelity_report_shape_invariants():
    hmm = make_parity_hmm(4, alpha=0.25)
    bases = parity_class_bases(4)
    report = fidelity_for_bases(hmm, bases)
    assert report.basis_sizes == [len(b) for b in bases]
    assert len(report.sigmas) == len(report.spectra) == 5
    assert report.min_sigma == min(report.sigmas)
    for spec in report.spectra:
        assert all(spec[i] >= spec[i + 1] - 1e-12 for i in range(len(spec) - 1))
    d = report.as_dict()
    assert d["min_sigma"] == pytest.approx(report.min_sigma)
    with pytest.raises(ValueError):
        fidelity_for_bases(hmm, bases[:-1])


def test_sigma_matrix_parity_hand_values():
    hmm = make_parity_hmm(4, alpha=0.2)
    members = parity_class_bases(4)[2]
    sigma = sigma_matrix(hmm, members)
    np.testing.assert_allclose(sigma, [[1.36, 0.64], [0.64, 1.36]], atol=1e-9)
    eigs = np.sort(np.linalg.eigvalsh(sigma))
    np.testing.assert_allclose(eigs, [0.72, 2.0], atol=1e-9)


def test_sigma_matrix_singleton_is_one():
    sigma = sigma_matrix(HAND, [(2,)])
    np.testing.assert_allclose(sigma, [[1.0]], atol=1e-12)
    with pytest.raises(ValueError):
        sigma_matrix(HAND, [])
    with pytest.raises(ValueError):
        sigma_matrix(HAND, [(1,), (1, 2)])


def test_robust_sigma_parity_closed_form():
    hmm = make_parity_hmm(5, alpha=0.3)
    bases = parity_class_bases(5)
    per_level = robust_sigma_per_level(hmm, bases)
    assert robust_sigma(hmm, bases) == pytest.approx(0.32, abs=1e-9)
    assert per_level[0] == pytest.approx(1.0, abs=1e-9)
    assert min(per_level) == pytest.approx(2 * (1 - 2 * 0.3) ** 2, abs=1e-9)


def test_duplicated_members_scale_sigma_spectrum():
    # repeating every member doubles eigenvalues but keeps the eigenspaces
    hmm = make_parity_hmm(4, alpha=0.2)
    members = parity_class_bases(4)[2]
    once = np.sort(np.linalg.eigvalsh(sigma_matrix(hmm, members)))
    twice = np.sort(np.linalg.eigvalsh(sigma_matrix(hmm, members * 2)))
    np.testing.assert_allclose(twice[-2:], 2 * once, atol=1e-9)
    np.testing.assert_allclose(twice[:2], 0.0, atol=1e-9)


def test_search_fidelity_bases_beats_fixed_bases():
    hmm = make_parity_hmm(3, alpha=0.25)
    fixed = fidelity_for_bases(hmm, parity_class_bases(3)).min_sigma
    bases, report = search_fidelity_bases(hmm, max_size=2)
    assert report.min_sigma >= fixed - 1e-9
    assert all(len(b) <= 2 for b in bases)
    assert isinstance(report, FidelityReport)
    big = make_parity_hmm(12, alpha=0.25)
    with pytest.raises(ValueError):
        search_fidelity_bases(big)


def test_irregular_mass_hand_values():
    assert irregular_mass(HAND, (), 0.25) == pytest.approx(0.0, abs=1e-12)
    assert irregular_mass(HAND, (), 0.35) == pytest.approx(0.3, abs=1e-12)
    # 0.3 from the first step, plus 0.7 * 3/7 from the branch below (2,)
    assert irregular_mass(HAND, (), 0.45) == pytest.approx(0.6, abs=1e-12)
    uniform = TableDist(np.full(4, 0.25), n_symbols=2, horizon=2)
    assert irregular_mass(uniform, (), 0.2) == 0.0


def test_sequence_two_step_matrix_hand_values():
    mat = sequence_two_step_matrix(HAND)
    np.testing.assert_allclose(mat, [[0.1, 0.3], [0.2, 0.4]], atol=1e-12)
    with pytest.raises(ValueError):
        sequence_two_step_matrix(
            TableDist(np.array([0.5, 0.5]), n_symbols=2, horizon=1))


def test_expected_span_residual_spanning_basis_is_zero():
    hmm = make_parity_hmm(4, alpha=0.2)
    members = parity_class_bases(4)[2]
    assert expected_span_residual(hmm, members) <= 1e-9


def test_expected_span_residual_matches_reference_enumeration():
    subset, alpha, t = {1, 2, 3}, 0.2, 2
    hmm = make_parity_hmm(4, subset=subset, alpha=alpha)
    members = [(1, 1)]

    def ref_cond(hist):
        joint = parity_reference_prob  # noqa: E731  (alias for brevity)
        total = sum(joint(hist + f, subset, alpha) for f in all_seqs(2, 2))
        return np.array([joint(hist + f, subset, alpha) / total
                         for f in all_seqs(2, 2)])

    col = ref_cond(members[0])[:, None]
    want = 0.0
    for hist in all_seqs(2, 2):
        target = ref_cond(hist)
        beta, *_ = np.linalg.lstsq(col, target, rcond=None)
        want += 0.25 * np.abs(target - col @ beta).sum()
    got = expected_span_residual(hmm, members)
    assert got == pytest.approx(want, abs=1e-9)
    assert got > 0.05  # a single member cannot cover both parity classes
    both = expected_span_residual(hmm, parity_class_bases(4, subset=subset)[2])
    assert both <= got


def test_expected_span_residual_validation():
    with pytest.raises(ValueError):
        expected_span_residual(HAND, [])
    with pytest.raises(ValueError):
        expected_span_residual(HAND, [(1,), (1, 2)])


def test_random_hmm_irregular_mass_union_bound_smoke():
    rng = np.random.default_rng(0)
    hmm = random_hmm(rng, 3, 2, 4)
    for alpha in (0.05, 0.1):
        for t in range(4):
            for h in all_seqs(2, t):
                assert irregular_mass(hmm, h, alpha) <= 2 * 4 * alpha + 1e-12
