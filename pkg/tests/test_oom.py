import numpy as np
import pytest

from condseq.distributions import enumerate_joint
from condseq.generators import (
    greedy_spanning_bases,
    make_parity_hmm,
    parity_class_bases,
)
from condseq.metrics import sigma_matrix, tv_exact
from condseq.oom import (
    BasisSpanError,
    OomModel,
    construct_exact_operators,
    eval_prefix_tests,
    eval_prob,
    evolve_coefficients,
    exact_coefficients,
    load_model,
    model_from_text,
    model_to_text,
    save_model,
    to_distribution,
)
from condseq.sequences import all_seqs

from _reference import brute_force_joint, random_hmm


def _exact_model(dist):
    return construct_exact_operators(dist, greedy_spanning_bases(dist))


def test_exact_operators_reproduce_hmm_against_path_enumeration():
    rng = np.random.default_rng(21)
    hmm = random_hmm(rng, 3, 2, 4)
    model = _exact_model(hmm)
    for seq in all_seqs(2, 4):
        assert eval_prob(model, seq) == pytest.approx(
            brute_force_joint(hmm, seq), abs=1e-9)


def test_exact_operators_on_parity():
    hmm = make_parity_hmm(4, subset={1, 3}, alpha=0.2)
    model = construct_exact_operators(hmm, parity_class_bases(4, subset={1, 3}))
    table = enumerate_joint(hmm)
    got = np.array([eval_prob(model, seq) for seq in all_seqs(2, 4)])
    np.testing.assert_allclose(got, table, atol=1e-10)


def test_model_validation():
    ops = [[np.ones((1, 1)), np.ones((1, 1))]]
    with pytest.raises(ValueError):
        OomModel(n_symbols=2, horizon=1, bases=[[(1,)], [(1,)]], operators=ops)
    with pytest.raises(ValueError):
        OomModel(n_symbols=2, horizon=1, bases=[[()], [(1, 2)]], operators=ops)
    with pytest.raises(ValueError):
        OomModel(n_symbols=2, horizon=1, bases=[[()], [(1,)]],
                 operators=[[np.ones((2, 1)), np.ones((1, 1))]])
    with pytest.raises(ValueError):
        OomModel(n_symbols=2, horizon=1, bases=[[()], [(1,)]],
                 operators=[[np.ones((1, 1))]])


def test_non_spanning_basis_is_reported():
    hmm = make_parity_hmm(3, subset={1, 2}, alpha=0.2)
    bases = parity_class_bases(3, subset={1, 2})
    bases[1] = bases[1][:1]  # one member cannot cover both parity classes
    with pytest.raises(BasisSpanError):
        construct_exact_operators(hmm, bases)


def test_exact_coefficients_sum_to_one_and_interpolate():
    hmm = make_parity_hmm(4, subset={1, 2, 3}, alpha=0.25)
    members = parity_class_bases(4, subset={1, 2, 3})[2]
    for hist in all_seqs(2, 2):
        beta = exact_coefficients(hmm, members, hist)
        assert beta.sum() == pytest.approx(1.0, abs=1e-9)
        for fut in all_seqs(2, 2):
            combo = sum(
                b * hmm.conditional_prob(m, fut) for b, m in zip(beta, members)
            )
            assert combo == pytest.approx(hmm.conditional_prob(hist, fut),
                                          abs=1e-9)


def test_member_self_coefficients_equal_sigma_eigenprojection():
    # stacking the min-norm coefficients of the members themselves gives the
    # projection onto the positive eigenspace of the preconditioned Gram
    hmm = make_parity_hmm(4, subset={1, 3}, alpha=0.2)
    members = parity_class_bases(4, subset={1, 3})[2] + [(1, 2)]
    coeff = np.column_stack(
        [exact_coefficients(hmm, members, m) for m in members]
    )
    sigma = sigma_matrix(hmm, members)
    eigvals, eigvecs = np.linalg.eigh(sigma)
    keep = eigvecs[:, eigvals > 1e-9]
    np.testing.assert_allclose(coeff, keep @ keep.T, atol=1e-8)


def test_propagate_and_prefix_tests():
    hmm = make_parity_hmm(4, subset={2}, alpha=0.3)
    model = construct_exact_operators(
        hmm,
        parity_class_bases(4, subset={2}),
        test_seqs=[[(1,) * (4 - t)] for t in range(4)] + [[()]],
    )
    prefix = (2, 1)
    got = eval_prefix_tests(model, prefix, model.test_matrices[2])
    want = hmm.joint_prob(prefix + (1, 1))
    assert got[0] == pytest.approx(want, abs=1e-10)


def test_coefficient_evolution_identity():
    # pushing coefficients through an operator and renormalizing by the step
    # probability lands on the extended history's own coefficients
    hmm = make_parity_hmm(4, subset={1, 2}, alpha=0.2)
    bases = parity_class_bases(4, subset={1, 2})
    model = construct_exact_operators(hmm, bases)
    hist = (2, 1)
    beta = exact_coefficients(hmm, bases[2], hist)
    for o in (1, 2):
        p = hmm.next_symbol_probs(hist)[o - 1]
        evolved = evolve_coefficients(model, 2, beta, o, p)
        expected = exact_coefficients(hmm, bases[3], hist + (o,))
        np.testing.assert_allclose(evolved, expected, atol=1e-8)
    with pytest.raises(ZeroDivisionError):
        evolve_coefficients(model, 2, beta, 1, 0.0)


def test_to_distribution_flavors_reproduce_exact_model():
    rng = np.random.default_rng(13)
    hmm = random_hmm(rng, 2, 2, 4)
    model = _exact_model(hmm)
    anchored = to_distribution(model)  # auto picks anchored: tests attached
    raw = to_distribution(model, flavor="raw")
    assert tv_exact(hmm, anchored) <= 1e-9
    assert tv_exact(hmm, raw) <= 1e-9


def test_model_text_round_trip(tmp_path):
    hmm = make_parity_hmm(3, subset={1}, alpha=0.2)
    model = _exact_model(hmm)
    clone = model_from_text(model_to_text(model))
    assert clone.bases == model.bases
    for seq in all_seqs(2, 3):
        assert eval_prob(clone, seq) == pytest.approx(eval_prob(model, seq),
                                                      abs=1e-12)
    assert clone.step_matrices is not None

    path = tmp_path / "parity.oom"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.basis_sizes() == model.basis_sizes()


def test_model_text_round_trip_without_optional_sections():
    hmm = make_parity_hmm(3, subset={1}, alpha=0.2)
    full = _exact_model(hmm)
    bare = OomModel(n_symbols=2, horizon=3, bases=full.bases,
                    operators=full.operators)
    clone = model_from_text(model_to_text(bare))
    assert clone.test_matrices is None and clone.step_matrices is None
    for seq in all_seqs(2, 3):
        assert eval_prob(clone, seq) == pytest.approx(eval_prob(bare, seq),
                                                      abs=1e-12)
