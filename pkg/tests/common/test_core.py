import numpy as np
import pytest

from cerec.core import CerModel
from cerec.core import ContentFeatures
from cerec.core import DataError
from cerec.core import Hyperparams
from cerec.core import NumericalError
from cerec.core import ParameterError
from cerec.core import RatingMatrix
from cerec.core import ShapeError
from cerec.core import confidence
from cerec.core import predict_in_matrix
from cerec.core import predict_out_matrix
from cerec.core import ssr_normalize


def test_rating_matrix_canonical_order():
    ratings = RatingMatrix(3, 3, users=[2, 0, 1, 0], videos=[1, 2, 0, 0])
    assert ratings.users.tolist() == [0, 0, 1, 2]
    assert ratings.videos.tolist() == [0, 2, 0, 1]
    assert ratings.nnz == len(ratings) == 4


def test_rating_matrix_is_read_only(tiny_ratings):
    with pytest.raises(ValueError):
        tiny_ratings.users[0] = 3


def test_rating_matrix_neighbourhoods(tiny_ratings):
    assert tiny_ratings.user_videos(0).tolist() == [0, 2]
    assert tiny_ratings.user_videos(1).tolist() == [1]
    assert tiny_ratings.video_users(2).tolist() == [0, 3]
    assert tiny_ratings.video_users(4).tolist() == [2]
    assert tiny_ratings.user_counts().tolist() == [2, 1, 2, 2]
    assert tiny_ratings.video_counts().tolist() == [2, 1, 2, 1, 1]


def test_rating_matrix_dense(tiny_ratings):
    dense = tiny_ratings.to_dense()
    assert dense.shape == (4, 5)
    assert dense.sum() == 7
    assert dense[2, 4] == 1 and dense[1, 0] == 0


def test_rating_matrix_without_likes():
    ratings = RatingMatrix(2, 3)
    assert ratings.nnz == 0
    assert ratings.user_videos(1).tolist() == []
    assert ratings.to_dense().sum() == 0


@pytest.mark.parametrize(
    "users, videos",
    [([0, 5], [0, 1]), ([0, 1], [0, 3]), ([-1], [0])],
    ids=["user", "video", "negative"],
)
def test_rating_matrix_out_of_range(users, videos):
    with pytest.raises(DataError, match="out of range"):
        RatingMatrix(2, 3, users, videos)


def test_rating_matrix_duplicates():
    with pytest.raises(DataError, match="duplicate"):
        RatingMatrix(2, 2, [1, 0, 1], [1, 0, 1])


def test_rating_matrix_select(tiny_ratings):
    mask = np.zeros(tiny_ratings.nnz, dtype=bool)
    mask[[0, 3]] = True
    subset = tiny_ratings.select(mask)
    assert subset.shape == tiny_ratings.shape
    assert subset.pairs().tolist() == [[0, 0], [2, 0]]
    with pytest.raises(ShapeError):
        tiny_ratings.select([True])


def test_rating_matrix_equality(tiny_ratings):
    same = RatingMatrix(4, 5, tiny_ratings.users[::-1], tiny_ratings.videos[::-1])
    assert same == tiny_ratings
    assert RatingMatrix(4, 6, tiny_ratings.users, tiny_ratings.videos) != tiny_ratings


@pytest.mark.parametrize(
    "value, expected", [(4.0, 2.0), (-4.0, -2.0), (0.0, 0.0), (2.25, 1.5)]
)
def test_ssr_normalize(value, expected):
    assert ssr_normalize(value) == expected


def test_ssr_is_applied_once(tiny_features):
    normalized = tiny_features.ssr_normalized()
    assert normalized.ssr_applied
    np.testing.assert_array_equal(normalized.matrix, ssr_normalize(tiny_features.matrix))
    with pytest.raises(ParameterError, match="already applied"):
        normalized.ssr_normalized()


def test_content_features_rejects_nan():
    matrix = np.ones((2, 3))
    matrix[1, 2] = np.nan
    with pytest.raises(DataError, match="component 1 .* video 2"):
        ContentFeatures("meta", matrix)


@pytest.mark.parametrize("name", ["", "two words", "vidéo"])
def test_content_features_rejects_names(name):
    with pytest.raises(ParameterError):
        ContentFeatures(name, np.zeros((1, 1)))


def test_content_features_zeros():
    features = ContentFeatures.zeros("blank", 4, 6)
    assert (features.dim, features.num_videos) == (4, 6)
    assert not features.matrix.any()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"k": 0},
        {"lambda_u": 0},
        {"lambda_v": -1},
        {"lambda_e": -1},
        {"conf_pos": 0.01, "conf_neg": 0.01},
        {"conf_neg": 0},
        {"max_sweeps": 0},
        {"tolerance": -1e-6},
    ],
)
def test_hyperparams_validation(kwargs):
    with pytest.raises(ParameterError):
        Hyperparams(**kwargs)


def test_hyperparams_defaults():
    hyper = Hyperparams()
    assert (hyper.lambda_u, hyper.lambda_v, hyper.lambda_e) == (0.1, 10.0, 1000.0)
    assert (hyper.conf_pos, hyper.conf_neg) == (1.0, 0.01)
    assert hyper.max_sweeps == 200
    wmf = Hyperparams.wmf(k=5)
    assert (wmf.lambda_u, wmf.lambda_v, wmf.k) == (0.01, 0.01, 5)


def test_confidence():
    hyper = Hyperparams(conf_pos=2.0, conf_neg=0.5)
    assert confidence(1, hyper) == 2.0
    assert confidence(0, hyper) == 0.5
    with pytest.raises(ParameterError):
        confidence(2, hyper)


@pytest.fixture
def model():
    rng = np.random.default_rng(3)
    hyper = Hyperparams(k=2)
    return CerModel(
        rng.normal(size=(2, 4)), rng.normal(size=(2, 5)), rng.normal(size=(3, 2)), hyper
    )


def test_model_shape_checks(model):
    with pytest.raises(ShapeError):
        CerModel(model.W, model.H.T, model.E, model.hyper)
    with pytest.raises(ShapeError):
        CerModel(model.W, model.H, model.E.T, model.hyper)


def test_model_rejects_non_finite(model):
    W = model.W.copy()
    W[0, 0] = np.inf
    with pytest.raises(NumericalError):
        CerModel(W, model.H, model.E, model.hyper)


def test_predict_in_matrix(model):
    assert predict_in_matrix(model, 1, 3) == pytest.approx(model.W[:, 1] @ model.H[:, 3])
    with pytest.raises(IndexError):
        predict_in_matrix(model, 4, 0)
    with pytest.raises(IndexError):
        predict_in_matrix(model, 0, 5)


def test_predict_out_matrix(model):
    f = np.array([1.0, -2.0, 0.5])
    expected = model.W[:, 2] @ model.E.T @ f
    assert predict_out_matrix(model, 2, f) == pytest.approx(expected)
    with pytest.raises(ShapeError):
        predict_out_matrix(model, 2, f[:2])


def test_predict_in_matrix_matches_summation_loop():
    rng = np.random.default_rng(12)
    model = CerModel(
        rng.normal(size=(50, 3)), rng.normal(size=(50, 4)), np.zeros((0, 50)), Hyperparams(k=50)
    )
    for user in range(3):
        for video in range(4):
            expected = 0.0
            for r in range(50):
                expected += model.W[r, user] * model.H[r, video]
            assert predict_in_matrix(model, user, video) == pytest.approx(expected, abs=1e-12)


def test_predict_out_matrix_matches_two_steps(model):
    f = np.random.default_rng(13).normal(size=3)
    latent = [sum(model.E[p, r] * f[p] for p in range(3)) for r in range(2)]
    expected = sum(model.W[r, 1] * latent[r] for r in range(2))
    assert predict_out_matrix(model, 1, f) == pytest.approx(expected, abs=1e-12)


def test_zero_offset_video_has_equal_predictions(model, tiny_features):
    video = 2
    f = tiny_features.matrix[:, video]
    H = model.H.copy()
    H[:, video] = model.E.T @ f
    aligned = CerModel(model.W, H, model.E, model.hyper)
    for user in range(aligned.num_users):
        assert predict_in_matrix(aligned, user, video) == predict_out_matrix(aligned, user, f)


def test_predict_out_matrix_is_linear(model):
    rng = np.random.default_rng(14)
    for _ in range(20):
        f1, f2 = rng.normal(size=3), rng.normal(size=3)
        a, b = rng.uniform(-5, 5, size=2)
        combined = predict_out_matrix(model, 3, a * f1 + b * f2)
        separate = a * predict_out_matrix(model, 3, f1) + b * predict_out_matrix(model, 3, f2)
        assert combined == pytest.approx(separate, abs=1e-9)


def test_offsets(model, tiny_features):
    latent = model.content_latent(tiny_features)
    np.testing.assert_allclose(model.offsets(tiny_features) + latent, model.H)


def test_wmf_model_scores_cold_videos_zero():
    model = CerModel(np.ones((2, 3)), np.ones((2, 4)), np.zeros((0, 2)), Hyperparams(k=2))
    assert model.is_wmf
    assert predict_out_matrix(model, 0, np.zeros(0)) == 0.0
