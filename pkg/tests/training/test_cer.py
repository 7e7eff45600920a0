import numpy as np
import pytest

from cerec.core import CerModel
from cerec.core import ContentFeatures
from cerec.core import Hyperparams
from cerec.core import NumericalError
from cerec.core import ParameterError
from cerec.core import RatingMatrix
from cerec.core import ShapeError
from cerec.dataio.synthetic import SyntheticSpec
from cerec.dataio.synthetic import generate_synthetic
from cerec.training import cer


def dense_objective(model, R, F):
    """The training objective with explicit loops over every pair."""
    hyper = model.hyper
    m, n = R.shape
    total = 0.0
    for i in range(m):
        for j in range(n):
            c = hyper.conf_pos if R[i, j] else hyper.conf_neg
            total += 0.5 * c * (model.W[:, i] @ model.H[:, j] - R[i, j]) ** 2
    total += 0.5 * hyper.lambda_u * np.sum(model.W**2)
    for j in range(n):
        offset = model.H[:, j] - model.E.T @ F[:, j]
        total += 0.5 * hyper.lambda_v * offset @ offset
    total += 0.5 * hyper.lambda_e * np.sum(model.E**2)
    return total


def dense_sweep(model, R, F):
    """One sweep of the closed-form updates with explicit diagonal C matrices."""
    hyper = model.hyper
    m, n = R.shape
    k = hyper.k
    W, H, E = model.W.copy(), model.H.copy(), model.E.copy()
    for i in range(m):
        C = np.diag(np.where(R[i] > 0, hyper.conf_pos, hyper.conf_neg))
        W[:, i] = np.linalg.solve(H @ C @ H.T + hyper.lambda_u * np.eye(k), H @ C @ R[i])
    for j in range(n):
        C = np.diag(np.where(R[:, j] > 0, hyper.conf_pos, hyper.conf_neg))
        H[:, j] = np.linalg.solve(
            W @ C @ W.T + hyper.lambda_v * np.eye(k),
            W @ C @ R[:, j] + hyper.lambda_v * E.T @ F[:, j],
        )
    if F.shape[0]:
        E = np.linalg.solve(
            hyper.lambda_v * F @ F.T + hyper.lambda_e * np.eye(F.shape[0]),
            hyper.lambda_v * F @ H.T,
        )
    return CerModel(W, H, E, hyper)


def random_instance(seed, m=5, n=6, d=4, k=3, density=0.35):
    rng = np.random.default_rng(seed)
    R = (rng.random((m, n)) < density).astype(float)
    users, videos = np.nonzero(R)
    ratings = RatingMatrix(m, n, users, videos)
    features = ContentFeatures("random", rng.normal(size=(d, n)))
    hyper = Hyperparams(k=k, lambda_u=0.5, lambda_v=2.0, lambda_e=3.0, max_sweeps=5)
    model = CerModel(
        rng.normal(0, 0.1, size=(k, m)),
        rng.normal(0, 0.1, size=(k, n)),
        rng.normal(0, 0.1, size=(d, k)),
        hyper,
    )
    return ratings, features, model


def numeric_gradient(model, ratings, features, block, step=1e-5):
    values = getattr(model, block)
    gradient = np.zeros_like(values)
    for index in np.ndindex(values.shape):
        saved = values[index]
        values[index] = saved + step
        upper = cer.objective(model, ratings, features)
        values[index] = saved - step
        lower = cer.objective(model, ratings, features)
        values[index] = saved
        gradient[index] = (upper - lower) / (2 * step)
    return gradient


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_objective_matches_dense_evaluation(seed):
    ratings, features, model = random_instance(seed)
    expected = dense_objective(model, ratings.to_dense(), features.matrix)
    assert cer.objective(model, ratings, features) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_block_updates_are_stationary(seed):
    ratings, features, model = random_instance(seed, m=5, n=5, d=4, k=3)

    for i in range(ratings.num_users):
        model.W[:, i] = cer.update_user(model, ratings, i, model.H @ model.H.T)
    assert np.abs(numeric_gradient(model, ratings, features, "W")).max() <= 1e-6

    gram = model.W @ model.W.T
    latent = model.content_latent(features)
    for j in range(ratings.num_videos):
        model.H[:, j] = cer.update_item(model, ratings, features, j, gram, latent)
    assert np.abs(numeric_gradient(model, ratings, features, "H")).max() <= 1e-6

    model.E = cer.update_embedding(model, features)
    assert np.abs(numeric_gradient(model, ratings, features, "E")).max() <= 1e-6


def test_updates_without_precomputed_terms():
    ratings, features, model = random_instance(5)
    np.testing.assert_allclose(
        cer.update_user(model, ratings, 2),
        cer.update_user(model, ratings, 2, model.H @ model.H.T),
    )
    np.testing.assert_allclose(
        cer.update_item(model, ratings, features, 1),
        cer.update_item(
            model, ratings, features, 1, model.W @ model.W.T, model.content_latent(features)
        ),
    )


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fit_matches_dense_reference(seed):
    ratings, features, initial = random_instance(seed, m=6, n=6, d=3, k=2)
    model, report = cer.fit(ratings, features, initial.hyper, initial=initial)

    reference = initial
    R, F = ratings.to_dense(), features.matrix
    for value in report.objective_per_sweep:
        reference = dense_sweep(reference, R, F)
        assert value == pytest.approx(dense_objective(reference, R, F), rel=1e-8)
    np.testing.assert_allclose(model.W, reference.W, rtol=1e-7, atol=1e-10)
    np.testing.assert_allclose(model.E, reference.E, rtol=1e-7, atol=1e-10)


def test_fit_does_not_mutate_initial_model():
    ratings, features, initial = random_instance(4)
    W = initial.W.copy()
    cer.fit(ratings, features, initial.hyper, initial=initial)
    np.testing.assert_array_equal(initial.W, W)


def test_objective_is_monotone():
    ratings, features, _ = generate_synthetic(SyntheticSpec(m=200, n=100, d=20))
    _, report = cer.fit(ratings, features, Hyperparams(k=10, max_sweeps=50), seed=1)
    trace = np.asarray(report.objective_per_sweep)
    assert len(trace) == 50
    assert np.all(trace[1:] <= trace[:-1] * (1 + 1e-12))


def test_single_sweep_report(tiny_ratings, tiny_features):
    _, report = cer.fit(tiny_ratings, tiny_features, Hyperparams(k=2, max_sweeps=1))
    assert report.sweeps_run == 1
    assert len(report.sweep_seconds) == 1
    assert report.wall_time >= report.sweep_seconds[0]
    assert not report.converged


def test_no_likes_drive_users_to_zero(tiny_features):
    ratings = RatingMatrix(3, 5)
    model, report = cer.fit(ratings, tiny_features, Hyperparams(k=2, max_sweeps=10))
    assert not model.W.any()
    np.testing.assert_allclose(model.H, model.content_latent(tiny_features), atol=1e-12)
    trace = np.asarray(report.objective_per_sweep)
    assert np.all(trace[1:] <= trace[:-1] * (1 + 1e-12))


def test_wmf_mode_equals_zero_content(tiny_ratings):
    hyper = Hyperparams.wmf(k=3, max_sweeps=8)
    zeros = ContentFeatures.zeros("blank", 4, tiny_ratings.num_videos)
    wmf, wmf_report = cer.fit(tiny_ratings, None, hyper, seed=3)
    blank, blank_report = cer.fit(tiny_ratings, zeros, hyper, seed=3)
    assert wmf.is_wmf
    np.testing.assert_allclose(
        wmf_report.objective_per_sweep, blank_report.objective_per_sweep, rtol=1e-12
    )
    np.testing.assert_allclose(wmf.W, blank.W, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(wmf.H, blank.H, rtol=1e-12, atol=1e-15)
    assert not blank.E.any()


def test_fit_beats_planted_parameters(planted):
    ratings, features, truth = planted
    hyper = Hyperparams(k=3, max_sweeps=30)
    _, report = cer.fit(ratings, features, hyper)
    bound = cer.objective(truth.truth_model(hyper), ratings, features)
    assert report.objective_per_sweep[-1] <= 1.05 * bound


def test_threads_do_not_change_the_result(planted, settings_batch_size):
    ratings, features, _ = planted
    hyper = Hyperparams(k=3, max_sweeps=3)
    serial, _ = cer.fit(ratings, features, hyper, threads=1)
    parallel, _ = cer.fit(ratings, features, hyper, threads=3)
    np.testing.assert_array_equal(serial.W, parallel.W)
    np.testing.assert_array_equal(serial.H, parallel.H)


@pytest.fixture
def settings_batch_size(mocker):
    mocker.patch("cerec.settings.BATCH_SIZE", 16)


def test_early_stop(planted):
    ratings, features, _ = planted
    _, report = cer.fit(ratings, features, Hyperparams(k=3, tolerance=1e-3))
    assert report.converged
    assert report.sweeps_run < 200


def test_lambda_e_must_be_positive_with_content(tiny_ratings, tiny_features):
    with pytest.raises(ParameterError):
        cer.fit(tiny_ratings, tiny_features, Hyperparams(k=2, lambda_e=0))


def test_feature_count_mismatch(tiny_ratings):
    features = ContentFeatures("short", np.ones((2, 4)))
    with pytest.raises(ShapeError):
        cer.fit(tiny_ratings, features, Hyperparams(k=2))


def test_non_finite_update_is_reported(mocker, tiny_ratings, tiny_features):
    mocker.patch(
        "cerec.training.cer.update_user", return_value=np.full(2, np.nan)
    )
    with pytest.raises(NumericalError, match="user vectors during sweep 1"):
        cer.fit(tiny_ratings, tiny_features, Hyperparams(k=2))


def test_sweeps_are_reported(mocker, tiny_ratings, tiny_features):
    reported = mocker.patch("cerec.training.cer.metrics.sweep_completed")
    cer.fit(tiny_ratings, tiny_features, Hyperparams(k=2, max_sweeps=4))
    assert reported.call_count == 4
    assert reported.call_args.args[0] == "cer"
