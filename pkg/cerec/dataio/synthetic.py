"""
Planted-model data for desk-scale experiments and tests.

User factors W*, an embedding E* and content vectors F are drawn from a
seeded generator; the true score of a pair is ``w*_iᵀE*ᵀf_j`` plus Gaussian
noise and each user likes the videos scoring above their ``like_quantile``
quantile.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Iterator

import numpy as np

from cerec.core import CerModel
from cerec.core import ContentFeatures
from cerec.core import FloatArray
from cerec.core import Hyperparams
from cerec.core import ParameterError
from cerec.core import RatingMatrix
from cerec.dataio.ratings import LIKE_THRESHOLD
from cerec.dataio.ratings import RawRatingRecord

logger = logging.getLogger(__name__)

# Ratings written for non-liked pairs, lowest score first.
DISLIKE_VALUES = tuple(np.arange(0.5, LIKE_THRESHOLD, 0.5))


@dataclasses.dataclass(frozen=True)
class SyntheticSpec:
    m: int = 200
    n: int = 100
    d: int = 20
    k_true: int = 5
    noise_std: float = 0.1
    like_quantile: float = 0.9
    seed: int = 0
    content_name: str = "synthetic"

    def __post_init__(self):
        for name in ("m", "n", "d", "k_true"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be at least 1")
        if self.noise_std < 0:
            raise ParameterError("noise_std must be nonnegative")
        if not 0 < self.like_quantile < 1:
            raise ParameterError("like_quantile must be in (0, 1)")


@dataclasses.dataclass(frozen=True, eq=False)
class GroundTruth:
    W: FloatArray
    E: FloatArray
    # Generating content vectors, before any normalization.
    F: FloatArray
    scores: FloatArray
    likes: np.ndarray

    def truth_model(self, hyper: Hyperparams | None = None) -> CerModel:
        """The generating parameters as a CER model with H = E*ᵀF."""
        k = self.W.shape[0]
        hyper = hyper or Hyperparams(k=k)
        if hyper.k != k:
            hyper = dataclasses.replace(hyper, k=k)
        return CerModel(self.W, self.E.T @ self.F, self.E, hyper)

    def raw_records(self) -> Iterator[RawRatingRecord]:
        """A rating for every (user, video) pair, users then videos.

        Likes get the top rating; the other pairs get a lower star rating by
        their rank in the user's scores. Loading the records in this order
        reproduces the user and video indices.
        """
        m, n = self.scores.shape
        levels = np.asarray(DISLIKE_VALUES)
        for user in range(m):
            liked = self.likes[user]
            rest = np.flatnonzero(~liked)
            ranks = np.empty(n, dtype=np.int64)
            ranks[rest[np.argsort(self.scores[user, rest], kind="stable")]] = np.arange(
                len(rest)
            )
            for video in range(n):
                if liked[video]:
                    value = LIKE_THRESHOLD
                else:
                    value = float(levels[ranks[video] * len(levels) // max(len(rest), 1)])
                yield RawRatingRecord(str(user), str(video), value)


def generate_synthetic(
    spec: SyntheticSpec, ssr: bool = False
) -> tuple[RatingMatrix, ContentFeatures, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    W = rng.normal(size=(spec.k_true, spec.m))
    E = rng.normal(scale=1 / np.sqrt(spec.d), size=(spec.d, spec.k_true))
    F = rng.normal(size=(spec.d, spec.n))
    scores = (W.T @ (E.T @ F)) + rng.normal(scale=spec.noise_std, size=(spec.m, spec.n))

    thresholds = np.quantile(scores, spec.like_quantile, axis=1, keepdims=True)
    likes = scores > thresholds
    users, videos = np.nonzero(likes)
    ratings = RatingMatrix(spec.m, spec.n, users, videos)

    features = ContentFeatures(spec.content_name, F)
    if ssr:
        features = features.ssr_normalized()
    logger.info(
        "Generated %d likes of %d users on %d videos (d=%d, k_true=%d)",
        ratings.nnz,
        spec.m,
        spec.n,
        spec.d,
        spec.k_true,
    )
    return ratings, features, GroundTruth(W, E, F, scores, likes)


def noise_features(content_name: str, d: int, n: int, seed: int) -> ContentFeatures:
    """Content vectors carrying no information about the likes."""
    rng = np.random.default_rng([seed, d, n])
    return ContentFeatures(content_name, rng.normal(size=(d, n)))
