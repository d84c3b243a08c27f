import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trajmmd import InputError
from trajmmd.kernel import (
    Kernel,
    embed,
    embedding_eval,
    gram,
    kernel_eval,
    mmd,
    mmd_unbiased,
    pairwise_sqdist,
    permutation_test,
)

from conftest import features, naive_kernel, naive_mmd, naive_mmd2


def at_sqdist(d2, dim=5, seed=0):
    """Two points ``x, y`` with ``|x - y|^2 == d2`` (up to rounding)."""
    r = np.random.default_rng(seed)
    x = r.normal(size=dim)
    u = r.normal(size=dim)
    u /= np.linalg.norm(u)
    return x, x + math.sqrt(d2) * u


# ---------------------------------------------------------------- kernel_eval


def test_kernel_eval_zero_distance():
    x = np.random.default_rng(1).normal(size=17)
    assert kernel_eval(Kernel(5.0), x, x.copy()) == 1.0


@pytest.mark.parametrize("sigma", [0.3, 1.0, 32.0, 1e4])
def test_kernel_eval_exponent_minus_one(sigma):
    x, y = at_sqdist(2 * sigma**2)
    assert kernel_eval(Kernel(sigma), x, y) == pytest.approx(math.exp(-1), rel=1e-12)
    assert math.exp(-1) == pytest.approx(0.36787944, abs=1e-8)


def test_kernel_eval_default_bandwidth():
    x = np.zeros(3300)
    y = np.zeros(3300)
    y[0] = 32.0
    assert kernel_eval(Kernel(32), x, y) == pytest.approx(0.60653066, abs=1e-8)
    assert kernel_eval(Kernel(32), x, y) == math.exp(-0.5)


def test_kernel_eval_errors():
    k = Kernel(1.0)
    with pytest.raises(InputError, match="dimension"):
        kernel_eval(k, np.zeros(3), np.zeros(4))
    with pytest.raises(InputError, match="non-finite"):
        kernel_eval(k, [0.0, np.nan], [0.0, 0.0])
    with pytest.raises(InputError, match="non-finite"):
        kernel_eval(k, [0.0, 1.0], [np.inf, 0.0])


@pytest.mark.parametrize("sigma", [0.0, -1.0, np.inf, np.nan])
def test_kernel_rejects_bad_bandwidth(sigma):
    with pytest.raises(InputError):
        Kernel(sigma)


def test_kernel_rejects_unknown_family():
    with pytest.raises(InputError, match="family"):
        Kernel(1.0, "laplace")


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(np.float64, 12, elements=finite), arrays(np.float64, 12, elements=finite), st.floats(0.01, 1e4))
def test_kernel_symmetric_bitwise_and_bounded(x, y, sigma):
    k = Kernel(sigma)
    a = kernel_eval(k, x, y)
    assert a == kernel_eval(k, y, x)
    assert 0.0 <= a <= 1.0
    assert kernel_eval(k, x, x) == 1.0


# ----------------------------------------------------------------------- gram


def test_gram_singleton():
    x = np.arange(6.0)
    assert gram(Kernel(2.0), [x], [x]).tolist() == [[1.0]]


def test_gram_cross_singleton():
    x, y = at_sqdist(2 * 3.0**2, seed=4)
    G = gram(Kernel(3.0), [x], [y])
    assert G.shape == (1, 1)
    assert G[0, 0] == pytest.approx(math.exp(-1), rel=1e-12)


def test_gram_four_random_psd(rng):
    A = rng.normal(size=(4, 50))
    G = gram(Kernel(7.0), A, A)
    assert np.array_equal(G, G.T)
    assert np.all(np.diag(G) == 1.0)
    assert np.linalg.eigvalsh(G).min() >= -1e-8


def test_gram_entries_match_kernel_eval_bitwise(rng):
    A = rng.normal(size=(5, 301))
    B = rng.normal(size=(7, 301))
    k = Kernel(20.0)
    G = gram(k, A, B)
    for i in range(5):
        for j in range(7):
            assert G[i, j] == kernel_eval(k, A[i], B[j])
    assert np.array_equal(gram(k, B, A), G.T)


def test_gram_independent_of_thread_count(rng):
    A = rng.normal(size=(64, 3300))
    B = rng.normal(size=(40, 3300))
    ref = pairwise_sqdist(A, B, threads=1)
    for t in (2, 3, 8):
        assert np.array_equal(pairwise_sqdist(A, B, threads=t), ref)


def test_gram_dimension_mismatch():
    with pytest.raises(InputError, match="dimension"):
        gram(Kernel(1.0), np.zeros((2, 3)), np.zeros((2, 4)))


def test_gram_rejects_empty():
    with pytest.raises(InputError, match="nonempty"):
        gram(Kernel(1.0), [], [np.zeros(3)])


# ---------------------------------------------------------------------- embed


def test_embed_default_weights():
    e = embed(Kernel(1.0), [np.zeros(2), np.ones(2), np.full(2, 2.0)])
    assert e.weights.tolist() == [1 / 3, 1 / 3, 1 / 3]


def test_embed_single_sample():
    assert embed(Kernel(1.0), [np.zeros(4)]).weights.tolist() == [1.0]


def test_embed_copies_samples():
    data = np.zeros((2, 3))
    e = embed(Kernel(1.0), data)
    data[0, 0] = 99.0
    assert e.samples[0, 0] == 0.0
    with pytest.raises(ValueError):
        e.samples[0, 0] = 1.0


def test_embed_weights_validated_and_renormalized():
    k = Kernel(1.0)
    X = np.eye(3)
    with pytest.raises(InputError, match="negative"):
        embed(k, X, [0.5, 0.6, -0.1])
    with pytest.raises(InputError, match="sum to 1"):
        embed(k, X, [0.2, 0.2, 0.2])
    with pytest.raises(InputError, match="weights for"):
        embed(k, X, [0.5, 0.5])
    e = embed(k, X, [0.5, 0.25, 0.25 + 1e-10])
    assert math.fsum(e.weights) == pytest.approx(1.0, abs=1e-12)


def test_embed_empty():
    with pytest.raises(InputError):
        embed(Kernel(1.0), [])


# ------------------------------------------------------------- embedding_eval


def test_embedding_eval_at_own_sample():
    x = np.random.default_rng(3).normal(size=9)
    assert embedding_eval(embed(Kernel(2.0), [x]), x) == 1.0


def test_embedding_eval_two_equidistant_samples():
    sigma = 1.5
    x = np.zeros(2)
    a = np.array([sigma * math.sqrt(2), 0.0])
    b = np.array([0.0, -sigma * math.sqrt(2)])
    e = embed(Kernel(sigma), [a, b])
    assert e(x) == pytest.approx(math.exp(-1), rel=1e-12)


def test_embedding_eval_uniform_four(rng):
    S = rng.normal(size=(4, 30))
    x = rng.normal(size=30)
    sigma = 6.0
    expected = sum(naive_kernel(s, x, sigma) for s in S) / 4
    assert embedding_eval(embed(Kernel(sigma), S), x) == pytest.approx(expected, rel=1e-13)


def test_embedding_eval_dimension_mismatch():
    with pytest.raises(InputError, match="dimension"):
        embedding_eval(embed(Kernel(1.0), [np.zeros(3)]), np.zeros(2))


# ------------------------------------------------------------------------ mmd


def test_mmd_identical_embeddings_zero(rng):
    S = rng.normal(size=(6, 40))
    w = rng.dirichlet(np.ones(6))
    k = Kernel(4.0)
    r = mmd(embed(k, S, w), embed(k, S.copy(), w.copy()))
    assert r.value == 0.0
    assert r.estimator == "biased"
    assert (r.m, r.n) == (6, 6)


def test_mmd_singletons():
    sigma = 2.0
    x, y = at_sqdist(2 * sigma**2, seed=8)
    k = Kernel(sigma)
    kxy = kernel_eval(k, x, y)
    r = mmd(embed(k, [x]), embed(k, [y]))
    assert r.value == pytest.approx(math.sqrt(2 - 2 * kxy), rel=1e-14)
    assert r.value == pytest.approx(1.1243848, abs=1e-7)


def test_mmd_matches_double_loop(rng):
    k = Kernel(32.0)
    P = rng.normal(scale=2.0, size=(8, 200))
    Q = rng.normal(scale=2.0, size=(4, 200)) + 0.3
    assert mmd(embed(k, P), embed(k, Q)).value == pytest.approx(naive_mmd(P, Q, 32.0), abs=1e-12)


def test_mmd_weighted_matches_double_loop(rng):
    k = Kernel(5.0)
    P = rng.normal(size=(5, 20))
    Q = rng.normal(size=(7, 20)) + 0.5
    wp = rng.dirichlet(np.ones(5))
    wq = rng.dirichlet(np.ones(7))
    got = mmd(embed(k, P, wp), embed(k, Q, wq)).value
    assert got == pytest.approx(naive_mmd(P, Q, 5.0, wp, wq), abs=1e-12)


def test_mmd_kernel_and_dimension_mismatch():
    with pytest.raises(InputError, match="kernel"):
        mmd(embed(Kernel(1.0), [np.zeros(2)]), embed(Kernel(2.0), [np.zeros(2)]))
    with pytest.raises(InputError, match="dimension"):
        mmd(embed(Kernel(1.0), [np.zeros(2)]), embed(Kernel(1.0), [np.zeros(3)]))


def test_mmd_degenerate_embedding_allowed():
    k = Kernel(1.0)
    same = embed(k, np.zeros((5, 3)))
    other = embed(k, [np.ones(3)])
    v = mmd(same, other).value
    assert v == pytest.approx(math.sqrt(2 - 2 * math.exp(-1.5)), rel=1e-14)


sample_sets = st.integers(1, 6).flatmap(
    lambda m: st.tuples(
        arrays(np.float64, (m, 4), elements=st.floats(-5, 5)),
        arrays(np.float64, m, elements=st.floats(0.01, 1.0)),
    )
)


@settings(max_examples=60, deadline=None)
@given(sample_sets, sample_sets, st.floats(0.3, 30), st.randoms(use_true_random=False))
def test_mmd_symmetric_and_permutation_invariant(a, b, sigma, rnd):
    k = Kernel(sigma)
    (P, wp), (Q, wq) = a, b
    p = embed(k, P, wp / wp.sum())
    q = embed(k, Q, wq / wq.sum())
    v = mmd(p, q).value
    assert v >= 0
    assert v == mmd(q, p).value
    order = list(range(len(P)))
    rnd.shuffle(order)
    p2 = embed(k, P[order], (wp / wp.sum())[order])
    assert abs(mmd(p2, q).value - v) <= 1e-12


# --------------------------------------------------------------- mmd_unbiased


def test_unbiased_hand_expansion():
    sigma = 1.0
    x, y = at_sqdist(1.3, seed=2)
    k = Kernel(sigma)
    kxy = kernel_eval(k, x, y)
    r = mmd_unbiased([x, y], [x, y], k)
    # off-diagonal means kxy on both sides, cross mean (1 + kxy) / 2
    assert r.squared == pytest.approx(kxy - 1.0, abs=1e-15)
    assert r.value < 0
    assert r.estimator == "unbiased"
    assert mmd(embed(k, [x, y]), embed(k, [x, y])).value == 0.0


def test_unbiased_identity_with_biased(rng):
    k = Kernel(3.0)
    P = rng.normal(size=(6, 8))
    Q = rng.normal(size=(9, 8)) + 1.0
    Kpp = gram(k, P, P)
    Kqq = gram(k, Q, Q)
    a = (Kpp.sum() - 6) / 30
    b = (Kqq.sum() - 9) / 72
    biased2 = naive_mmd2(P, Q, 3.0)
    u = mmd_unbiased(P, Q, k)
    assert u.squared == pytest.approx(biased2 - (1 - a) / 6 - (1 - b) / 9, abs=1e-12)


def test_unbiased_needs_two_per_side():
    with pytest.raises(InputError, match="at least 2"):
        mmd_unbiased([np.zeros(2)], [np.zeros(2), np.ones(2)], Kernel(1.0))


@pytest.mark.slow
def test_unbiased_is_unbiased_under_null(model):
    k = Kernel(16.0)
    vals = []
    for s in range(200):
        P = features(model, 64, 1000 + s, N=300, rate=20.0)
        Q = features(model, 64, 5000 + s, N=300, rate=20.0)
        vals.append(mmd_unbiased(P, Q, k).squared)
    assert abs(np.mean(vals)) <= 0.01


def test_unbiased_separated_models(model):
    from trajmmd.synthetic import ManeuverModel

    k = Kernel(16.0)
    P = features(model, 16, 1, N=300, rate=20.0)
    Q = features(ManeuverModel(lane_width=2.5), 16, 2, N=300, rate=20.0)
    u = mmd_unbiased(P, Q, k)
    b = mmd(embed(k, P), embed(k, Q))
    Kpp, Kqq = gram(k, P, P), gram(k, Q, Q)
    bias = (1 - (Kpp.sum() - 16) / 240) / 16 + (1 - (Kqq.sum() - 16) / 240) / 16
    assert u.value > 0
    assert u.squared == pytest.approx(b.squared - bias, abs=1e-12)
    assert u.squared > 0.5 * b.squared


# ----------------------------------------------------------- permutation_test


def test_permutation_identical_lists_never_reject(rng):
    k = Kernel(2.0)
    pvals = []
    for seed in range(100):
        P = rng.normal(size=(5, 3))
        pvals.append(permutation_test(P, P.copy(), k, 50, seed).p_value)
    assert np.mean(np.array(pvals) > 0.05) >= 0.99


def test_permutation_add_one_rule():
    k = Kernel(1.0)
    P = np.zeros((6, 2))
    Q = np.full((6, 2), 10.0)
    r = permutation_test(P, Q, k, n_permutations=1, seed=0)
    assert r.n_exceeding == 0
    assert r.p_value == 0.5


def test_permutation_deterministic_and_observed_matches_mmd(rng):
    k = Kernel(3.0)
    P = rng.normal(size=(7, 4))
    Q = rng.normal(size=(5, 4)) + 0.7
    a = permutation_test(P, Q, k, 200, seed=9)
    b = permutation_test(P, Q, k, 200, seed=9)
    assert a == b
    assert a.observed.value == mmd(embed(k, P), embed(k, Q)).value
    assert 0 < a.p_value <= 1
    assert a.p_value == (1 + a.n_exceeding) / 201


def test_permutation_validates():
    with pytest.raises(InputError):
        permutation_test([np.zeros(2)], [np.zeros(2)], Kernel(1.0), n_permutations=0)
