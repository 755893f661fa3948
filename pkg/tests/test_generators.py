import numpy as np
import pytest

from condseq.distributions import enumerate_joint, rank_of
from condseq.generators import (
    greedy_spanning_bases,
    make_full_rank_hmm,
    make_overcomplete_hmm,
    make_parity_hmm,
    make_random_table,
    one_step_bases,
    parity_class_bases,
    parity_joint_prob,
    perturb_conditionals,
)
from condseq.metrics import conditional_gap_exact, tv_exact
from condseq.oom import construct_exact_operators, eval_prob
from condseq.sequences import all_seqs

from _reference import parity_reference_prob


def test_parity_hmm_matches_closed_form():
    for horizon, subset, alpha in [(3, {1, 2}, 0.2), (4, {1, 3}, 0.3),
                                   (5, {2}, 0.25)]:
        hmm = make_parity_hmm(horizon, subset=subset, alpha=alpha)
        assert hmm.n_states == 4 * horizon
        for seq in all_seqs(2, horizon):
            want = parity_reference_prob(seq, subset, alpha)
            assert hmm.joint_prob(seq) == pytest.approx(want, abs=1e-12)
            assert parity_joint_prob(seq, subset, alpha) == pytest.approx(
                want, abs=1e-12)


def test_parity_default_subset_is_all_positions():
    hmm = make_parity_hmm(4, alpha=0.2)
    for seq in all_seqs(2, 4):
        want = parity_reference_prob(seq, {1, 2, 3}, 0.2)
        assert hmm.joint_prob(seq) == pytest.approx(want, abs=1e-12)


def test_parity_hand_value():
    # all-ones sequence has even parity, so the final 1-bit is the likely one
    hmm = make_parity_hmm(4, subset={1, 2, 3}, alpha=0.2)
    assert hmm.joint_prob((1, 1, 1, 1)) == pytest.approx(0.8 / 8, abs=1e-12)
    assert hmm.joint_prob((1, 1, 1, 2)) == pytest.approx(0.2 / 8, abs=1e-12)


def test_parity_rank_is_two():
    assert rank_of(make_parity_hmm(4, subset={1, 2}, alpha=0.2)) == 2
    assert rank_of(make_parity_hmm(5, subset={1, 4}, alpha=0.3)) == 2


def test_parity_validation():
    with pytest.raises(ValueError):
        make_parity_hmm(1)
    with pytest.raises(ValueError):
        make_parity_hmm(3, alpha=0.6)
    with pytest.raises(ValueError):
        make_parity_hmm(3, subset={3})
    with pytest.raises(ValueError):
        make_parity_hmm(3, subset=set())


def test_full_rank_hmm_properties():
    hmm = make_full_rank_hmm(2, 2, 4, seed=0, sigma_floor=0.25)
    assert np.linalg.svd(hmm.emission, compute_uv=False)[-1] >= 0.25
    assert np.linalg.svd(hmm.transition, compute_uv=False)[-1] >= 0.25
    assert rank_of(hmm) == 2
    again = make_full_rank_hmm(2, 2, 4, seed=0, sigma_floor=0.25)
    np.testing.assert_array_equal(hmm.emission, again.emission)
    with pytest.raises(ValueError):
        make_full_rank_hmm(3, 2, 4, seed=0)


def test_overcomplete_hmm_shape_and_rank_cap():
    hmm = make_overcomplete_hmm(4, 2, 4, seed=1)
    assert hmm.n_states == 4
    assert hmm.n_symbols == 2
    assert rank_of(hmm) <= 4  # never exceeds the state count
    with pytest.raises(ValueError):
        make_overcomplete_hmm(2, 2, 3, seed=0)


def test_random_table_determinism_and_mass():
    a = make_random_table(2, 4, seed=9)
    b = make_random_table(2, 4, seed=9)
    np.testing.assert_array_equal(a.probs, b.probs)
    assert a.probs.sum() == pytest.approx(1.0, abs=1e-9)
    c = make_random_table(2, 4, seed=10)
    assert np.max(np.abs(a.probs - c.probs)) > 1e-4


def test_perturb_conditionals_zero_eta_is_identity():
    dist = make_random_table(2, 4, seed=3)
    same = perturb_conditionals(dist, eta=0.0, seed=5)
    np.testing.assert_allclose(same.probs, dist.probs, atol=1e-12)


def test_perturb_conditionals_small_eta_small_gap():
    dist = make_random_table(2, 4, seed=3)
    near = perturb_conditionals(dist, eta=0.01, seed=5)
    far = perturb_conditionals(dist, eta=0.5, seed=5)
    assert conditional_gap_exact(dist, near) < conditional_gap_exact(dist, far)
    assert tv_exact(dist, near) < 0.05


def test_perturb_conditionals_handles_zero_mass_blocks():
    base = make_parity_hmm(3, subset={1}, alpha=0.2)
    table = enumerate_joint(base)
    from condseq.distributions import TableDist

    spiked = table.copy()
    spiked[:4] = 0.0  # kill the subtree under first symbol 1
    spiked /= spiked.sum()
    dist = TableDist(spiked, n_symbols=2, horizon=3)
    out = perturb_conditionals(dist, eta=0.1, seed=2)
    assert out.joint_prob((1,)) == 0.0
    assert out.probs.sum() == pytest.approx(1.0, abs=1e-9)


def test_parity_class_bases_span_exactly():
    hmm = make_parity_hmm(5, subset={1, 2, 3, 4}, alpha=0.2)
    bases = parity_class_bases(5)
    assert [len(b) for b in bases] == [1, 2, 2, 2, 2, 1]
    model = construct_exact_operators(hmm, bases)
    for seq in all_seqs(2, 5):
        assert eval_prob(model, seq) == pytest.approx(hmm.joint_prob(seq),
                                                      abs=1e-9)


def test_parity_class_bases_late_subset_defers_second_member():
    bases = parity_class_bases(5, subset={3})
    # before position 3 the running XOR is constant: singleton levels suffice
    assert [len(b) for b in bases] == [1, 1, 1, 2, 2, 1]
    hmm = make_parity_hmm(5, subset={3}, alpha=0.3)
    construct_exact_operators(hmm, bases)  # must span


def test_one_step_bases_structure():
    dist = make_random_table(2, 3, seed=4)
    bases = one_step_bases(dist)
    assert [len(b) for b in bases] == [1, 2, 2, 2]
    for t in (1, 2, 3):
        prefixes = {m[:-1] for m in bases[t]}
        assert len(prefixes) == 1  # shared stem, last symbol replaced
        assert sorted(m[-1] for m in bases[t]) == [1, 2]


def test_greedy_spanning_bases_sizes_match_rank():
    hmm = make_parity_hmm(5, subset={1, 2}, alpha=0.2)
    bases = greedy_spanning_bases(hmm)
    assert [len(b) for b in bases] == [1, 2, 2, 2, 2, 1]
    model = construct_exact_operators(hmm, bases)
    for seq in all_seqs(2, 5):
        assert eval_prob(model, seq) == pytest.approx(hmm.joint_prob(seq),
                                                      abs=1e-9)
