"""
Bayesian personalized ranking baseline.

The model scores ``x_uj = w_uᵀh_j + b_j`` and is trained by stochastic
gradient ascent on ``ln σ(x_ui − x_uj)`` minus L2 penalties, one sampled
(user, liked video, non-liked video) triplet at a time. It only ranks videos
that have training likes: there is no out-of-matrix predictor.
"""

from __future__ import annotations

import dataclasses
import logging
import time

import numpy as np
from scipy.special import expit
from scipy.special import log_expit

from cerec import metrics
from cerec.core import ContractError
from cerec.core import FloatArray
from cerec.core import NumericalError
from cerec.core import ParameterError
from cerec.core import RatingMatrix
from cerec.core import ShapeError

logger = logging.getLogger(__name__)

INIT_STD = 0.1


@dataclasses.dataclass(frozen=True)
class BprHyperparams:
    """Defaults are the reported BPR baseline setting."""

    k: int = 50
    lambda_u: float = 0.0025
    lambda_i: float = 0.0025
    lambda_j: float = 0.00025
    lambda_b: float = 0.0
    learning_rate: float = 1e-4
    epochs: int = 200

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"k must be at least 1, got {self.k}")
        for name in ("lambda_u", "lambda_i", "lambda_j", "lambda_b", "learning_rate"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")
        if self.epochs < 0:
            raise ParameterError("epochs must be nonnegative")


@dataclasses.dataclass(eq=False)
class BprModel:
    W: FloatArray
    H: FloatArray
    biases: FloatArray
    hyper: BprHyperparams

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.H = np.asarray(self.H, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        k = self.hyper.k
        if self.W.ndim != 2 or self.W.shape[0] != k:
            raise ShapeError(f"W must be {k}×m, got {self.W.shape}")
        if self.H.ndim != 2 or self.H.shape[0] != k:
            raise ShapeError(f"H must be {k}×n, got {self.H.shape}")
        if self.biases.shape != (self.H.shape[1],):
            raise ShapeError(f"biases must have {self.H.shape[1]} entries")

    def __repr__(self):
        return f"BprModel <m={self.num_users} n={self.num_videos} k={self.hyper.k}>"

    @property
    def num_users(self) -> int:
        return self.W.shape[1]

    @property
    def num_videos(self) -> int:
        return self.H.shape[1]

    def score(self, user: int, video: int) -> float:
        return float(self.W[:, user] @ self.H[:, video] + self.biases[video])

    def copy(self) -> BprModel:
        return BprModel(
            self.W.copy(), self.H.copy(), self.biases.copy(), self.hyper
        )


def triplet_margin(model: BprModel, user: int, pos: int, neg: int) -> float:
    """x = w_uᵀ(h_pos − h_neg) + b_pos − b_neg."""
    return float(
        model.W[:, user] @ (model.H[:, pos] - model.H[:, neg])
        + model.biases[pos]
        - model.biases[neg]
    )


def triplet_objective(model: BprModel, user: int, pos: int, neg: int) -> float:
    """ln σ(x) minus the penalties on the parameters the triplet touches."""
    hyper = model.hyper
    w, hi, hj = model.W[:, user], model.H[:, pos], model.H[:, neg]
    bi, bj = model.biases[pos], model.biases[neg]
    return float(
        log_expit(triplet_margin(model, user, pos, neg))
        - 0.5 * hyper.lambda_u * w @ w
        - 0.5 * hyper.lambda_i * hi @ hi
        - 0.5 * hyper.lambda_j * hj @ hj
        - 0.5 * hyper.lambda_b * (bi**2 + bj**2)
    )


def triplet_gradient(model: BprModel, user: int, pos: int, neg: int):
    """Gradient of ``triplet_objective`` as (d_w, d_hpos, d_hneg, d_bpos, d_bneg)."""
    hyper = model.hyper
    w, hi, hj = model.W[:, user], model.H[:, pos], model.H[:, neg]
    s = expit(-triplet_margin(model, user, pos, neg))
    return (
        s * (hi - hj) - hyper.lambda_u * w,
        s * w - hyper.lambda_i * hi,
        -s * w - hyper.lambda_j * hj,
        s - hyper.lambda_b * model.biases[pos],
        -s - hyper.lambda_b * model.biases[neg],
    )


def _step(model: BprModel, user: int, pos: int, neg: int):
    rate = model.hyper.learning_rate
    d_w, d_hi, d_hj, d_bi, d_bj = triplet_gradient(model, user, pos, neg)
    model.W[:, user] += rate * d_w
    model.H[:, pos] += rate * d_hi
    model.H[:, neg] += rate * d_hj
    model.biases[pos] += rate * d_bi
    model.biases[neg] += rate * d_bj


def bpr_step(
    model: BprModel, ratings: RatingMatrix, user: int, pos_item: int, neg_item: int
) -> BprModel:
    """One ascent step on a triplet, checked against the ratings; in place."""
    liked = ratings.user_videos(user)
    if not np.isin(pos_item, liked):
        raise ContractError(f"video {pos_item} is not liked by user {user}")
    if np.isin(neg_item, liked):
        raise ContractError(f"video {neg_item} is liked by user {user}")
    _step(model, user, pos_item, neg_item)
    return model


def init_model(ratings: RatingMatrix, hyper: BprHyperparams, seed: int) -> BprModel:
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, INIT_STD, size=(hyper.k, ratings.num_users))
    H = rng.normal(0.0, INIT_STD, size=(hyper.k, ratings.num_videos))
    return BprModel(W, H, np.zeros(ratings.num_videos), hyper)


def sample_negative(
    rng: np.random.Generator, liked: np.ndarray, num_videos: int
) -> int | None:
    """Uniform draw among the videos not in ``liked`` (sorted); None if none."""
    free = num_videos - len(liked)
    if free <= 0:
        return None
    # Map a uniform rank among the non-liked videos to its video id.
    rank = int(rng.integers(free))
    return int(rank + np.searchsorted(liked - np.arange(len(liked)), rank, side="right"))


def fit_bpr(
    ratings: RatingMatrix, hyper: BprHyperparams, seed: int = 0
) -> tuple[BprModel, list[float]]:
    """Train with ``epochs × likes`` uniformly sampled triplets.

    Returns the model and the mean triplet log-likelihood of every epoch.
    Users liking every video are skipped when drawn.
    """
    model = init_model(ratings, hyper, seed)
    rng = np.random.default_rng([seed, 1])
    epoch_loglik: list[float] = []
    if ratings.nnz == 0:
        logger.warning("No likes to train on, returning the initial model")
        return model, epoch_loglik

    logger.info(
        "Training bpr (m=%d n=%d likes=%d k=%d epochs=%d)",
        ratings.num_users,
        ratings.num_videos,
        ratings.nnz,
        hyper.k,
        hyper.epochs,
    )
    liked_by = [ratings.user_videos(u) for u in range(ratings.num_users)]
    started = time.perf_counter()
    for epoch in range(1, hyper.epochs + 1):
        epoch_started = time.perf_counter()
        total, steps = 0.0, 0
        for at in rng.integers(ratings.nnz, size=ratings.nnz):
            user, pos = int(ratings.users[at]), int(ratings.videos[at])
            neg = sample_negative(rng, liked_by[user], ratings.num_videos)
            if neg is None:
                continue
            _step(model, user, pos, neg)
            total += float(log_expit(triplet_margin(model, user, pos, neg)))
            steps += 1
        value = total / steps if steps else 0.0
        if not np.isfinite(value):
            raise NumericalError(f"non-finite parameters during epoch {epoch}")
        elapsed = time.perf_counter() - epoch_started
        epoch_loglik.append(value)
        metrics.sweep_completed("bpr", elapsed, value)
        logger.debug("Epoch %d: log-likelihood=%.10g (%.3fs)", epoch, value, elapsed)

    logger.info(
        "Trained bpr in %d epochs (%.2fs)", hyper.epochs, time.perf_counter() - started
    )
    return model, epoch_loglik
