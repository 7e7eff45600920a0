import numpy as np
import pytest
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st
from scipy import stats

from cerec.core import ContractError
from cerec.core import ParameterError
from cerec.core import RatingMatrix
from cerec.training import bpr


@pytest.fixture
def pair_ratings():
    """One user liking video 0 but not video 1."""
    return RatingMatrix(1, 2, [0], [0])


def test_zero_epochs_returns_initial_model(tiny_ratings):
    hyper = bpr.BprHyperparams(k=4, epochs=0)
    model, trace = bpr.fit_bpr(tiny_ratings, hyper, seed=5)
    initial = bpr.init_model(tiny_ratings, hyper, 5)
    assert trace == []
    np.testing.assert_array_equal(model.W, initial.W)
    np.testing.assert_array_equal(model.H, initial.H)
    assert not model.biases.any()


def test_liked_video_ranks_first(pair_ratings):
    hyper = bpr.BprHyperparams(k=4, epochs=500, learning_rate=0.05)
    model, _ = bpr.fit_bpr(pair_ratings, hyper, seed=0)
    assert model.score(0, 0) > model.score(0, 1)


def test_fit_is_deterministic(tiny_ratings):
    hyper = bpr.BprHyperparams(k=3, epochs=20, learning_rate=0.01)
    first, first_trace = bpr.fit_bpr(tiny_ratings, hyper, seed=9)
    second, second_trace = bpr.fit_bpr(tiny_ratings, hyper, seed=9)
    np.testing.assert_array_equal(first.W, second.W)
    np.testing.assert_array_equal(first.biases, second.biases)
    assert first_trace == second_trace


def test_users_liking_everything_are_skipped():
    ratings = RatingMatrix(2, 2, [0, 0, 1], [0, 1, 0])
    model, trace = bpr.fit_bpr(ratings, bpr.BprHyperparams(k=2, epochs=3), seed=0)
    assert len(trace) == 3
    assert np.isfinite(model.W).all()


def test_no_likes_returns_initial_model():
    model, trace = bpr.fit_bpr(RatingMatrix(2, 3), bpr.BprHyperparams(k=2), seed=0)
    assert trace == []
    assert model.num_videos == 3


@given(
    seed=st.integers(0, 2**32 - 1),
    rate=st.floats(1e-6, 1e-2),
)
@settings(max_examples=50, deadline=None)
def test_step_never_decreases_the_margin(seed, rate):
    rng = np.random.default_rng(seed)
    ratings = RatingMatrix(2, 3, [0, 1], [0, 2])
    hyper = bpr.BprHyperparams(
        k=3,
        lambda_u=0,
        lambda_i=0,
        lambda_j=0,
        lambda_b=0,
        learning_rate=rate,
    )
    model = bpr.BprModel(
        rng.uniform(-1, 1, size=(3, 2)),
        rng.uniform(-1, 1, size=(3, 3)),
        rng.uniform(-1, 1, size=3),
        hyper,
    )
    before = bpr.triplet_margin(model, 0, 0, 1)
    bpr.bpr_step(model, ratings, 0, 0, 1)
    assert bpr.triplet_margin(model, 0, 0, 1) >= before


def test_step_from_zero_moves_only_the_biases(pair_ratings):
    hyper = bpr.BprHyperparams(k=3, learning_rate=0.1)
    model = bpr.BprModel(np.zeros((3, 1)), np.zeros((3, 2)), np.zeros(2), hyper)
    bpr.bpr_step(model, pair_ratings, 0, 0, 1)
    assert not model.W.any()
    assert not model.H.any()
    np.testing.assert_allclose(model.biases, [0.1 * 0.5, -0.1 * 0.5])


def test_step_without_learning_rate_keeps_the_model(pair_ratings):
    rng = np.random.default_rng(4)
    hyper = bpr.BprHyperparams(k=2, learning_rate=0.0)
    W, H, biases = rng.normal(size=(2, 1)), rng.normal(size=(2, 2)), rng.normal(size=2)
    model = bpr.BprModel(W.copy(), H.copy(), biases.copy(), hyper)
    bpr.bpr_step(model, pair_ratings, 0, 0, 1)
    np.testing.assert_array_equal(model.W, W)
    np.testing.assert_array_equal(model.H, H)
    np.testing.assert_array_equal(model.biases, biases)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    hyper = bpr.BprHyperparams(
        k=3, lambda_u=0.1, lambda_i=0.2, lambda_j=0.05, lambda_b=0.3
    )
    model = bpr.BprModel(
        rng.normal(size=(3, 2)), rng.normal(size=(3, 4)), rng.normal(size=4), hyper
    )
    user, pos, neg = 1, 2, 0
    d_w, d_hi, d_hj, d_bi, d_bj = bpr.triplet_gradient(model, user, pos, neg)
    step = 1e-6

    def numeric(values, index):
        saved = values[index]
        values[index] = saved + step
        upper = bpr.triplet_objective(model, user, pos, neg)
        values[index] = saved - step
        lower = bpr.triplet_objective(model, user, pos, neg)
        values[index] = saved
        return (upper - lower) / (2 * step)

    for r in range(3):
        assert numeric(model.W, (r, user)) == pytest.approx(d_w[r], abs=1e-7)
        assert numeric(model.H, (r, pos)) == pytest.approx(d_hi[r], abs=1e-7)
        assert numeric(model.H, (r, neg)) == pytest.approx(d_hj[r], abs=1e-7)
    assert numeric(model.biases, pos) == pytest.approx(d_bi, abs=1e-7)
    assert numeric(model.biases, neg) == pytest.approx(d_bj, abs=1e-7)


@pytest.mark.parametrize(
    "pos, neg, message",
    [(1, 3, "not liked"), (0, 2, "is liked")],
)
def test_invalid_triplets(tiny_ratings, pos, neg, message):
    model = bpr.init_model(tiny_ratings, bpr.BprHyperparams(k=2), 0)
    with pytest.raises(ContractError, match=message):
        bpr.bpr_step(model, tiny_ratings, 0, pos, neg)


def test_negative_sampling_is_uniform():
    rng = np.random.default_rng(11)
    liked = np.array([1, 4, 7])
    draws = [bpr.sample_negative(rng, liked, 10) for _ in range(14000)]
    assert not set(draws) & set(liked.tolist())
    free = [0, 2, 3, 5, 6, 8, 9]
    counts = [draws.count(video) for video in free]
    assert sum(counts) == len(draws)
    assert stats.chisquare(counts).pvalue > 0.001


def test_negative_sampling_without_candidates():
    rng = np.random.default_rng(0)
    assert bpr.sample_negative(rng, np.arange(4), 4) is None


def test_planted_ranking_quality(planted):
    ratings, _, truth = planted
    rng = np.random.default_rng(3)
    held_out = rng.random(ratings.nnz) < 0.2
    train = ratings.select(~held_out)
    model, trace = bpr.fit_bpr(
        train, bpr.BprHyperparams(k=10, learning_rate=0.05), seed=0
    )
    assert len(trace) == 200
    assert trace[-1] > trace[0]

    scores = model.W.T @ model.H + model.biases
    wins = []
    for user, video in ratings.pairs()[held_out]:
        negatives = np.flatnonzero(~truth.likes[user])
        wins.append(np.mean(scores[user, video] > scores[user, negatives]))
    assert np.mean(wins) >= 0.7


@pytest.mark.parametrize(
    "kwargs", [{"k": 0}, {"lambda_u": -1}, {"learning_rate": -0.1}, {"epochs": -1}]
)
def test_hyperparams_validation(kwargs):
    with pytest.raises(ParameterError):
        bpr.BprHyperparams(**kwargs)
