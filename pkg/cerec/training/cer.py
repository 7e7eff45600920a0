"""
Collaborative embedding regression trained by coordinate descent.

The objective is::

    Σ_ij (c_ij/2)(w_iᵀh_j − r_ij)² + (λ_u/2)Σ_i‖w_i‖²
        + (λ_v/2)Σ_j‖h_j − Eᵀf_j‖² + (λ_e/2)‖E‖²_F

and every sweep minimizes it exactly over each user column, then each video
column, then the embedding. The sum over all m×n pairs is never materialized:
with G = HHᵀ, the user system is

    (c⁻·G + (c⁺ − c⁻)·Σ_{j liked} h_jh_jᵀ + λ_u·I) w_i = c⁺·Σ_{j liked} h_j

so its cost grows with the user's likes only (symmetrically for videos).

Training without content (WMF) uses an embedding with zero rows: the content
term reduces to (λ_v/2)‖h_j‖² and the embedding update is skipped.
"""

import dataclasses
import logging
import time

import numpy as np
from scipy import linalg

from cerec import metrics
from cerec import settings
from cerec.core import CerModel
from cerec.core import ContentFeatures
from cerec.core import FloatArray
from cerec.core import Hyperparams
from cerec.core import NumericalError
from cerec.core import ParameterError
from cerec.core import RatingMatrix
from cerec.core import ShapeError
from cerec.training.pool import BlockPool

logger = logging.getLogger(__name__)

INIT_STD = 0.1


@dataclasses.dataclass
class TrainReport:
    objective_per_sweep: list[float] = dataclasses.field(default_factory=list)
    sweep_seconds: list[float] = dataclasses.field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False

    @property
    def sweeps_run(self) -> int:
        return len(self.objective_per_sweep)


def _content_matrix(features: ContentFeatures | None, num_videos: int) -> FloatArray:
    if features is None:
        return np.zeros((0, num_videos))
    if features.num_videos != num_videos:
        raise ShapeError(
            f"{features.content_name} has {features.num_videos} vectors for "
            f"{num_videos} videos"
        )
    return features.matrix


def _check_dims(model: CerModel, ratings: RatingMatrix, content: FloatArray):
    if model.W.shape[1] != ratings.num_users or model.H.shape[1] != ratings.num_videos:
        raise ShapeError(
            f"model is {model.num_users}×{model.num_videos}, "
            f"ratings are {ratings.num_users}×{ratings.num_videos}"
        )
    if content.shape[0] != model.dim:
        raise ShapeError(
            f"content vectors have {content.shape[0]} dims, embedding has {model.dim}"
        )


def _spd_solve(A: FloatArray, b: FloatArray) -> FloatArray:
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError as err:
        raise NumericalError(f"system is not positive definite: {err}") from err
    return linalg.cho_solve(factor, b, check_finite=False)


def objective(
    model: CerModel, ratings: RatingMatrix, features: ContentFeatures | None
) -> float:
    """Evaluate the training objective.

    The negatives are handled through the Gram matrices: the squared scores
    of all pairs sum to ⟨WWᵀ, HHᵀ⟩, which is weighted by c⁻ and then corrected
    on the likes.
    """
    hyper = model.hyper
    content = _content_matrix(features, ratings.num_videos)
    _check_dims(model, ratings, content)
    W, H, E = model.W, model.H, model.E

    scores = np.einsum("ki,ki->i", W[:, ratings.users], H[:, ratings.videos])
    all_pairs = 0.5 * hyper.conf_neg * np.sum((W @ W.T) * (H @ H.T))
    likes = np.sum(
        0.5 * hyper.conf_pos * (scores - 1.0) ** 2 - 0.5 * hyper.conf_neg * scores**2
    )
    offsets = H - E.T @ content
    return float(
        all_pairs
        + likes
        + 0.5 * hyper.lambda_u * np.sum(W**2)
        + 0.5 * hyper.lambda_v * np.sum(offsets**2)
        + 0.5 * hyper.lambda_e * np.sum(E**2)
    )


def update_user(
    model: CerModel,
    ratings: RatingMatrix,
    user_id: int,
    gram: FloatArray | None = None,
) -> FloatArray:
    """Exact minimizer of the objective in w_i; ``gram`` is HHᵀ."""
    hyper, H = model.hyper, model.H
    if gram is None:
        gram = H @ H.T
    liked = H[:, ratings.user_videos(user_id)]
    A = (
        hyper.conf_neg * gram
        + (hyper.conf_pos - hyper.conf_neg) * (liked @ liked.T)
        + hyper.lambda_u * np.eye(hyper.k)
    )
    b = hyper.conf_pos * liked.sum(axis=1)
    return _spd_solve(A, b)


def update_item(
    model: CerModel,
    ratings: RatingMatrix,
    features: ContentFeatures | None,
    video_id: int,
    gram: FloatArray | None = None,
    content_latent: FloatArray | None = None,
) -> FloatArray:
    """Exact minimizer of the objective in h_j.

    ``gram`` is WWᵀ and ``content_latent`` is EᵀF; both are recomputed when
    omitted.
    """
    hyper, W = model.hyper, model.W
    if gram is None:
        gram = W @ W.T
    if content_latent is None:
        content_latent = model.content_latent(
            _content_matrix(features, ratings.num_videos)
        )
    liking = W[:, ratings.video_users(video_id)]
    A = (
        hyper.conf_neg * gram
        + (hyper.conf_pos - hyper.conf_neg) * (liking @ liking.T)
        + hyper.lambda_v * np.eye(hyper.k)
    )
    b = hyper.conf_pos * liking.sum(axis=1) + hyper.lambda_v * content_latent[:, video_id]
    return _spd_solve(A, b)


def update_embedding(model: CerModel, features: ContentFeatures | None) -> FloatArray:
    """Exact minimizer of the objective in E.

    Solves (λ_v·FFᵀ + λ_e·I) E = λ_v·FHᵀ with one Cholesky factorization
    shared by the k right-hand sides.
    """
    hyper = model.hyper
    content = _content_matrix(features, model.num_videos)
    if content.shape[0] != model.dim:
        raise ShapeError(
            f"content vectors have {content.shape[0]} dims, embedding has {model.dim}"
        )
    if model.dim == 0:
        return model.E.copy()
    A = hyper.lambda_v * (content @ content.T) + hyper.lambda_e * np.eye(model.dim)
    B = hyper.lambda_v * (content @ model.H.T)
    return _spd_solve(A, B)


def init_model(
    ratings: RatingMatrix, dim: int, hyper: Hyperparams, seed: int
) -> CerModel:
    """Gaussian W and H (stddev 0.1) from ``seed``, zero E."""
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, INIT_STD, size=(hyper.k, ratings.num_users))
    H = rng.normal(0.0, INIT_STD, size=(hyper.k, ratings.num_videos))
    return CerModel(W, H, np.zeros((dim, hyper.k)), hyper)


def _check_finite(values: FloatArray, block: str, sweep: int):
    if not np.isfinite(values).all():
        raise NumericalError(f"non-finite values in {block} during sweep {sweep}")


def fit(
    ratings: RatingMatrix,
    features: ContentFeatures | None,
    hyper: Hyperparams,
    seed: int = 0,
    threads: int | None = None,
    initial: CerModel | None = None,
) -> tuple[CerModel, TrainReport]:
    """Train a CER model, or a WMF model when ``features`` is None.

    ``initial`` replaces the seeded initialization; it is copied, not mutated.
    """
    content = _content_matrix(features, ratings.num_videos)
    wmf = features is None
    if not wmf and hyper.lambda_e <= 0:
        raise ParameterError("lambda_e must be positive when training with content")
    method = "wmf" if wmf else "cer"

    if initial is None:
        model = init_model(ratings, content.shape[0], hyper, seed)
    else:
        model = CerModel(
            initial.W.copy(), initial.H.copy(), initial.E.copy(), hyper
        )
    _check_dims(model, ratings, content)

    logger.info(
        "Training %s (m=%d n=%d d=%d likes=%d k=%d)",
        method,
        ratings.num_users,
        ratings.num_videos,
        content.shape[0],
        ratings.nnz,
        hyper.k,
    )

    report = TrainReport()
    started = time.perf_counter()
    with BlockPool(threads or settings.WORKER_THREADS, settings.BATCH_SIZE) as pool:
        for sweep in range(1, hyper.max_sweeps + 1):
            sweep_started = time.perf_counter()

            gram = model.H @ model.H.T
            pool.solve_columns(
                ratings.num_users,
                lambda i: update_user(model, ratings, i, gram),
                model.W,
            )
            _check_finite(model.W, "user vectors", sweep)

            gram = model.W @ model.W.T
            latent = model.content_latent(content)
            pool.solve_columns(
                ratings.num_videos,
                lambda j: update_item(model, ratings, features, j, gram, latent),
                model.H,
            )
            _check_finite(model.H, "video vectors", sweep)

            if not wmf:
                model.E = update_embedding(model, features)
                _check_finite(model.E, "embedding", sweep)

            value = objective(model, ratings, features)
            if not np.isfinite(value):
                raise NumericalError(f"non-finite objective after sweep {sweep}")
            elapsed = time.perf_counter() - sweep_started
            report.objective_per_sweep.append(value)
            report.sweep_seconds.append(elapsed)
            metrics.sweep_completed(method, elapsed, value)
            logger.debug("Sweep %d: objective=%.10g (%.3fs)", sweep, value, elapsed)

            if hyper.tolerance is not None and sweep > 1:
                previous = report.objective_per_sweep[-2]
                decrease = (previous - value) / max(abs(previous), np.finfo(float).tiny)
                if decrease < hyper.tolerance:
                    report.converged = True
                    break

    report.wall_time = time.perf_counter() - started
    logger.info(
        "Trained %s in %d sweeps (%.2fs), objective=%.10g",
        method,
        report.sweeps_run,
        report.wall_time,
        report.objective_per_sweep[-1],
    )
    return model, report
