"""
Split protocol, top-k recommendation and Accuracy@k.

Video ids are shuffled into ``num_folds`` folds. In configuration ``c`` the
likes of fold-``c`` videos are the out-of-matrix test set (those videos are
cold: nobody's likes on them are seen in training). The remaining likes are
shuffled into four sub-folds: three train the model and one is the in-matrix
test set. Both scenarios of a configuration are evaluated with the same
trained model.

In-matrix candidates for a user are the videos outside fold ``c`` that the
user did not like in training; out-of-matrix candidates are the fold-``c``
videos. A test like (i, j) is a hit at k when j is among the k best scored
candidates of user i, ties broken by ascending video id.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import time
from collections.abc import Callable
from collections.abc import Iterable
from collections.abc import Mapping
from collections.abc import Sequence
from typing import Protocol

import numpy as np
import numpy.typing as npt
import pandas as pd

from cerec import metrics
from cerec import settings
from cerec.core import CerModel
from cerec.core import ContentFeatures
from cerec.core import DataError
from cerec.core import FloatArray
from cerec.core import Hyperparams
from cerec.core import IntArray
from cerec.core import ParameterError
from cerec.core import RatingMatrix
from cerec.core import ShapeError
from cerec.core import UnsupportedScenarioError
from cerec.dataio.estimates import Estimates
from cerec.fusion import FusionMethod
from cerec.fusion import FusionSpec
from cerec.fusion import rank_contents
from cerec.training import bpr
from cerec.training import cer

logger = logging.getLogger(__name__)

DEFAULT_K_LIST = (5, 10, 15, 20, 25, 30)
DEFAULT_NUM_FOLDS = 5
SUB_FOLDS = 4
NO_CONTENT = "none"

CSV_COLUMNS = ["method", "content", "scenario", "fold", "k", "accuracy"]


class Partition(enum.IntEnum):
    TRAIN = 0
    IN_TEST = 1
    OUT_TEST = 2

    @property
    def letter(self) -> str:
        return "TIO"[self.value]

    @classmethod
    def from_letter(cls, letter: str) -> Partition:
        return cls("TIO".index(letter))


class Scenario(enum.Enum):
    IN_MATRIX = "in"
    OUT_MATRIX = "out"

    @property
    def partition(self) -> Partition:
        if self is Scenario.IN_MATRIX:
            return Partition.IN_TEST
        return Partition.OUT_TEST


@dataclasses.dataclass(frozen=True, eq=False)
class FoldPlan:
    """Assignment of videos to folds and of likes to partitions.

    ``labels[c]`` holds the ``Partition`` of every like, in the canonical
    order of the rating matrix, for configuration ``c``.
    """

    num_folds: int
    seed: int
    video_folds: IntArray
    labels: npt.NDArray[np.int8]

    def __post_init__(self):
        video_folds = np.asarray(self.video_folds, dtype=np.int64)
        labels = np.asarray(self.labels, dtype=np.int8)
        if labels.ndim != 2 or labels.shape[0] != self.num_folds:
            raise ShapeError(f"labels must have {self.num_folds} rows")
        if len(video_folds) and (
            video_folds.min() < 0 or video_folds.max() >= self.num_folds
        ):
            raise DataError(f"video fold outside [0, {self.num_folds})")
        if labels.size and (labels.min() < 0 or labels.max() > Partition.OUT_TEST):
            raise DataError("unknown partition label")
        video_folds.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "video_folds", video_folds)
        object.__setattr__(self, "labels", labels)

    def __eq__(self, other):
        if not isinstance(other, FoldPlan):
            return NotImplemented
        return (
            self.num_folds == other.num_folds
            and self.seed == other.seed
            and np.array_equal(self.video_folds, other.video_folds)
            and np.array_equal(self.labels, other.labels)
        )

    @property
    def num_videos(self) -> int:
        return len(self.video_folds)

    @property
    def num_ratings(self) -> int:
        return self.labels.shape[1]

    def _check_fold(self, fold: int):
        if not 0 <= fold < self.num_folds:
            raise ParameterError(f"fold {fold} outside [0, {self.num_folds})")

    def check_ratings(self, ratings: RatingMatrix):
        if ratings.num_videos != self.num_videos or ratings.nnz != self.num_ratings:
            raise DataError(
                f"plan covers {self.num_videos} videos and {self.num_ratings} likes, "
                f"ratings have {ratings.num_videos} and {ratings.nnz}"
            )

    def fold_videos(self, fold: int) -> IntArray:
        self._check_fold(fold)
        return np.flatnonzero(self.video_folds == fold)

    def warm_videos(self, fold: int) -> IntArray:
        self._check_fold(fold)
        return np.flatnonzero(self.video_folds != fold)

    def mask(self, fold: int, partition: Partition) -> npt.NDArray[np.bool_]:
        self._check_fold(fold)
        return self.labels[fold] == partition

    def train_ratings(self, ratings: RatingMatrix, fold: int) -> RatingMatrix:
        self.check_ratings(ratings)
        return ratings.select(self.mask(fold, Partition.TRAIN))

    def test_pairs(
        self, ratings: RatingMatrix, fold: int, scenario: Scenario
    ) -> IntArray:
        self.check_ratings(ratings)
        return ratings.pairs()[self.mask(fold, scenario.partition)]

    def proportions(self, fold: int) -> dict[Partition, float]:
        counts = np.bincount(self.labels[fold], minlength=len(Partition))
        total = max(self.num_ratings, 1)
        return {part: counts[part] / total for part in Partition}

    def check_leakage(self, ratings: RatingMatrix, fold: int):
        """No training like may touch a cold video of ``fold``."""
        self.check_ratings(ratings)
        cold = self.video_folds[ratings.videos] == fold
        train = self.mask(fold, Partition.TRAIN)
        if (cold & train).any():
            raise DataError(f"fold {fold} trains on likes of its cold videos")
        if not np.array_equal(cold, self.mask(fold, Partition.OUT_TEST)):
            raise DataError(f"fold {fold} out-of-matrix labels do not match its videos")


def make_fold_plan(
    ratings: RatingMatrix, num_folds: int = DEFAULT_NUM_FOLDS, seed: int = 0
) -> FoldPlan:
    if num_folds < 2:
        raise ParameterError(f"at least 2 folds are needed, got {num_folds}")
    if ratings.num_videos < num_folds:
        raise DataError(
            f"{ratings.num_videos} videos cannot be split into {num_folds} folds"
        )
    rng = np.random.default_rng(seed)

    video_folds = np.empty(ratings.num_videos, dtype=np.int64)
    for fold, chunk in enumerate(
        np.array_split(rng.permutation(ratings.num_videos), num_folds)
    ):
        video_folds[chunk] = fold

    labels = np.full((num_folds, ratings.nnz), Partition.TRAIN, dtype=np.int8)
    rating_folds = video_folds[ratings.videos]
    for fold in range(num_folds):
        cold = rating_folds == fold
        labels[fold, cold] = Partition.OUT_TEST
        warm = rng.permutation(np.flatnonzero(~cold))
        labels[fold, np.array_split(warm, SUB_FOLDS)[-1]] = Partition.IN_TEST

    plan = FoldPlan(num_folds, seed, video_folds, labels)
    for fold in range(num_folds):
        shares = plan.proportions(fold)
        logger.debug(
            "Fold %d: train=%.3f in=%.3f out=%.3f",
            fold,
            shares[Partition.TRAIN],
            shares[Partition.IN_TEST],
            shares[Partition.OUT_TEST],
        )
    return plan


def top_k(scores: npt.ArrayLike, candidates: npt.ArrayLike, k: int) -> IntArray:
    """The ``min(k, len(candidates))`` best scored candidates, best first.

    Ties are broken by ascending video id.
    """
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.int64)
    if scores.shape != candidates.shape:
        raise ShapeError(f"{scores.shape} scores for {candidates.shape} candidates")
    if k < 1:
        raise ParameterError(f"k must be at least 1, got {k}")
    size = len(candidates)
    if k < size:
        threshold = np.partition(scores, size - k)[size - k]
        keep = np.flatnonzero(scores >= threshold)
    else:
        keep = np.arange(size)
    order = np.lexsort((candidates[keep], -scores[keep]))
    return candidates[keep[order[:k]]]


class Scorer(Protocol):
    def score(self, users: IntArray, videos: IntArray) -> FloatArray:
        """Estimates of shape (len(users), len(videos))."""
        ...


class InMatrixScorer:
    def __init__(self, model: CerModel):
        self.model = model

    def score(self, users, videos):
        return self.model.W[:, users].T @ self.model.H[:, videos]


class OutMatrixScorer:
    def __init__(self, model: CerModel, features: ContentFeatures | None):
        if features is None:
            if not model.is_wmf:
                raise ParameterError(
                    "out-of-matrix estimates of a content model need content features"
                )
            self.latent = np.zeros((model.hyper.k, model.num_videos))
        else:
            self.latent = model.content_latent(features)
        self.model = model

    def score(self, users, videos):
        return self.model.W[:, users].T @ self.latent[:, videos]


class BprScorer:
    def __init__(self, model: bpr.BprModel):
        self.model = model

    def score(self, users, videos):
        model = self.model
        return model.W[:, users].T @ model.H[:, videos] + model.biases[videos]


class PopularityScorer:
    """Training like counts; cold videos all tie at zero."""

    def __init__(self, train: RatingMatrix):
        self.counts = train.video_counts().astype(np.float64)

    def score(self, users, videos):
        return np.broadcast_to(self.counts[videos], (len(users), len(videos)))


class RandomScorer:
    """Uniform scores, reproducible per (seed, user) whatever the batching."""

    def __init__(self, num_videos: int, seed: int = 0):
        self.num_videos = num_videos
        self.seed = seed

    def score(self, users, videos):
        return np.stack(
            [
                np.random.default_rng([self.seed, int(user)]).random(self.num_videos)[
                    videos
                ]
                for user in users
            ]
        ).reshape(len(users), len(videos))


class EstimatesScorer:
    """Serves precomputed estimates; only their candidates can be scored."""

    def __init__(self, estimates: Estimates):
        self.estimates = estimates
        self.columns = {int(video): at for at, video in enumerate(estimates.candidates)}

    def score(self, users, videos):
        try:
            columns = [self.columns[int(video)] for video in videos]
        except KeyError as err:
            raise DataError(
                f"no {self.estimates.content_name} estimate for video {err.args[0]}"
            ) from None
        return self.estimates.scores[np.ix_(users, columns)]


class FusedScorer:
    def __init__(
        self,
        scorers: Mapping[str, Scorer],
        spec: FusionSpec,
        normalize: bool | None = None,
    ):
        self.scorers = scorers
        self.spec = spec
        self.normalize = settings.FUSION_NORMALIZE if normalize is None else normalize

    def score(self, users, videos):
        return self.spec.fuse(
            {
                name: self.scorers[name].score(users, videos)
                for name in self.spec.ordered_contents
            },
            normalize=self.normalize,
        )


def make_scorer(
    model: CerModel | bpr.BprModel,
    scenario: Scenario,
    features: ContentFeatures | None = None,
) -> Scorer:
    if isinstance(model, bpr.BprModel):
        if scenario is Scenario.OUT_MATRIX:
            raise UnsupportedScenarioError("BPR has no out-of-matrix predictor")
        return BprScorer(model)
    if scenario is Scenario.IN_MATRIX:
        return InMatrixScorer(model)
    return OutMatrixScorer(model, features)


@dataclasses.dataclass
class RankedRecommendations:
    """Top-``k`` lists per user; shorter lists cover the whole pool."""

    k: int
    lists: dict[int, IntArray] = dataclasses.field(default_factory=dict)

    def __getitem__(self, user: int) -> IntArray:
        return self.lists[user]

    def __contains__(self, user: int) -> bool:
        return user in self.lists

    def __len__(self):
        return len(self.lists)


def recommend(
    scorer: Scorer,
    users: Iterable[int],
    candidates: npt.ArrayLike,
    k: int,
    exclude: Callable[[int], IntArray] | None = None,
    batch_size: int | None = None,
) -> RankedRecommendations:
    """Top-k of ``candidates`` per user, minus what ``exclude(user)`` returns."""
    users = np.asarray(list(users), dtype=np.int64)
    candidates = np.asarray(candidates, dtype=np.int64)
    batch_size = batch_size or settings.BATCH_SIZE
    recs = RankedRecommendations(k)
    for start in range(0, len(users), batch_size):
        batch = users[start : start + batch_size]
        scores = np.asarray(scorer.score(batch, candidates))
        for row, user in enumerate(batch):
            pool, user_scores = candidates, scores[row]
            if exclude is not None:
                keep = ~np.isin(pool, exclude(int(user)))
                pool, user_scores = pool[keep], user_scores[keep]
            recs.lists[int(user)] = top_k(user_scores, pool, k)
    return recs


def hit_positions(test_pairs: npt.ArrayLike, recommendations: RankedRecommendations):
    """0-based position of each test video in its user's list (k if absent)."""
    test_pairs = np.asarray(test_pairs, dtype=np.int64).reshape(-1, 2)
    positions = np.full(len(test_pairs), recommendations.k, dtype=np.int64)
    for at, (user, video) in enumerate(test_pairs):
        if user not in recommendations:
            raise DataError(f"no recommendations for user {user}")
        found = np.flatnonzero(recommendations[user] == video)
        if len(found):
            positions[at] = found[0]
    return positions


def accuracy_at_k(
    test_pairs: npt.ArrayLike, recommendations: RankedRecommendations, k: int
) -> float:
    """#Hit@k / |D_test|."""
    if k < 1 or k > recommendations.k:
        raise ParameterError(f"k must be in [1, {recommendations.k}], got {k}")
    positions = hit_positions(test_pairs, recommendations)
    if not len(positions):
        raise DataError("Accuracy@k is undefined without test cases")
    return float(np.mean(positions < k))


def _check_k_list(k_list: Sequence[int]) -> tuple[int, ...]:
    k_list = tuple(sorted(set(int(k) for k in k_list)))
    if not k_list or k_list[0] < 1:
        raise ParameterError("k values must be positive")
    return k_list


def evaluate(
    scorer: Scorer,
    ratings: RatingMatrix,
    plan: FoldPlan,
    fold: int,
    scenario: Scenario,
    k_list: Sequence[int] = DEFAULT_K_LIST,
    batch_size: int | None = None,
) -> dict[int, float]:
    """Accuracy@k of ``scorer`` for every k in ``k_list``."""
    k_list = _check_k_list(k_list)
    pairs = plan.test_pairs(ratings, fold, scenario)
    if not len(pairs):
        raise DataError(f"fold {fold} has no {scenario.value}-matrix test likes")
    users = np.unique(pairs[:, 0])
    if scenario is Scenario.IN_MATRIX:
        train = plan.train_ratings(ratings, fold)
        recs = recommend(
            scorer,
            users,
            plan.warm_videos(fold),
            k_list[-1],
            exclude=train.user_videos,
            batch_size=batch_size,
        )
    else:
        recs = recommend(
            scorer, users, plan.fold_videos(fold), k_list[-1], batch_size=batch_size
        )
    positions = hit_positions(pairs, recs)
    return {k: float(np.mean(positions < k)) for k in k_list}


class AccuracyTable:
    """Rows of (method, content, scenario, fold, k, accuracy)."""

    def __init__(self, frame: pd.DataFrame | None = None):
        if frame is None:
            frame = pd.DataFrame(columns=CSV_COLUMNS)
        self.frame = frame[CSV_COLUMNS].reset_index(drop=True)
        self.train_seconds: dict[tuple[str, str, int], float] = {}

    def __len__(self):
        return len(self.frame)

    def add(
        self,
        method: str,
        content: str,
        scenario: Scenario,
        fold: int,
        accuracies: Mapping[int, float],
    ):
        rows = pd.DataFrame(
            [
                (method, content, scenario.value, fold, k, accuracy)
                for k, accuracy in accuracies.items()
            ],
            columns=CSV_COLUMNS,
        )
        self.frame = (
            rows if self.frame.empty else pd.concat([self.frame, rows], ignore_index=True)
        )
        for k, accuracy in accuracies.items():
            metrics.accuracy_reported(method, scenario.value, k, accuracy)

    def extend(self, other: AccuracyTable):
        if not other.frame.empty:
            self.frame = (
                other.frame.copy()
                if self.frame.empty
                else pd.concat([self.frame, other.frame], ignore_index=True)
            )
        self.train_seconds.update(other.train_seconds)

    def accuracy(
        self, method: str, content: str, scenario: Scenario, fold: int, k: int
    ) -> float:
        frame = self.frame
        match = frame[
            (frame.method == method)
            & (frame.content == content)
            & (frame.scenario == scenario.value)
            & (frame.fold == fold)
            & (frame.k == k)
        ]
        if match.empty:
            raise KeyError((method, content, scenario.value, fold, k))
        return float(match.accuracy.iloc[0])

    def summary(self) -> pd.DataFrame:
        """Mean and sample stddev over folds."""
        grouped = self.frame.astype({"accuracy": float}).groupby(
            ["method", "content", "scenario", "k"], sort=True
        )["accuracy"]
        summary = grouped.agg(["mean", "std", "count"]).reset_index()
        summary["std"] = summary["std"].fillna(0.0)
        return summary

    def mean_accuracy(self, method: str, content: str, scenario: Scenario, k: int):
        summary = self.summary()
        match = summary[
            (summary.method == method)
            & (summary.content == content)
            & (summary.scenario == scenario.value)
            & (summary.k == k)
        ]
        if match.empty:
            raise KeyError((method, content, scenario.value, k))
        return float(match["mean"].iloc[0])

    def to_csv(self, path_or_buf):
        self.frame.to_csv(path_or_buf, index=False, lineterminator="\n")

    @classmethod
    def read_csv(cls, path_or_buf) -> AccuracyTable:
        try:
            frame = pd.read_csv(path_or_buf, keep_default_na=False)
            return cls(frame)
        except (KeyError, ValueError, pd.errors.ParserError) as err:
            raise DataError(f"invalid accuracy table: {err}") from err

    def validation_accuracies(
        self, scenario: Scenario, k: int, fold: int | None = None
    ) -> dict[str, float]:
        """Accuracy per content, as input to ``rank_contents``.

        Without ``fold`` the accuracies are averaged over the folds present.
        """
        frame = self.frame
        match = frame[(frame.scenario == scenario.value) & (frame.k == k)]
        if fold is not None:
            match = match[match.fold == fold]
        means = match.astype({"accuracy": float}).groupby("content")["accuracy"].mean()
        return {str(c): float(a) for c, a in means.items()}


@dataclasses.dataclass(frozen=True)
class MethodConfig:
    """What ``run_cross_validation`` trains and scores.

    ``name`` is one of cer, wmf, bpr, popularity or random. A ``fusion``
    method on a cer configuration also evaluates the fused out-of-matrix
    ranking of all the contents.
    """

    name: str = "cer"
    hyper: Hyperparams | bpr.BprHyperparams | None = None
    seed: int = 0
    fusion: FusionMethod | None = None
    p: float = 0.5
    validation_k: int | None = None

    NAMES = ("cer", "wmf", "bpr", "popularity", "random")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ParameterError(f"unknown method {self.name!r}")
        if self.fusion is not None and self.name != "cer":
            raise ParameterError("fusion needs the cer method")
        if self.fusion is FusionMethod.EXTERNAL:
            raise ParameterError("cross validation derives the fusion weights itself")

    @property
    def label(self) -> str:
        if self.fusion is None:
            return self.name
        return f"{self.name}+{self.fusion.value}"


def _train(
    method: MethodConfig,
    train: RatingMatrix,
    features: ContentFeatures | None,
    threads: int | None,
):
    if method.name == "bpr":
        hyper = method.hyper or bpr.BprHyperparams()
        if not isinstance(hyper, bpr.BprHyperparams):
            raise ParameterError("bpr needs BprHyperparams")
        return bpr.fit_bpr(train, hyper, method.seed)[0]
    hyper = method.hyper or (Hyperparams.wmf() if method.name == "wmf" else Hyperparams())
    if not isinstance(hyper, Hyperparams):
        raise ParameterError(f"{method.name} needs Hyperparams")
    return cer.fit(train, features, hyper, method.seed, threads=threads)[0]


def run_cross_validation(
    ratings: RatingMatrix,
    features_by_content: Mapping[str, ContentFeatures],
    method: MethodConfig,
    k_list: Sequence[int] = DEFAULT_K_LIST,
    num_folds: int = DEFAULT_NUM_FOLDS,
    seed: int = 0,
    folds: Sequence[int] | None = None,
    plan: FoldPlan | None = None,
    threads: int | None = None,
) -> AccuracyTable:
    """Train on every fold configuration and evaluate both scenarios."""
    k_list = _check_k_list(k_list)
    if plan is None:
        plan = make_fold_plan(ratings, num_folds, seed)
    plan.check_ratings(ratings)
    folds = list(range(plan.num_folds)) if folds is None else list(folds)
    if method.name == "cer" and not features_by_content:
        raise ParameterError("cer needs at least one content type")
    validation_k = method.validation_k or settings.VALIDATION_K
    if method.fusion is not None:
        k_list = _check_k_list([*k_list, validation_k])

    table = AccuracyTable()
    fusion_spec: FusionSpec | None = None
    for fold in folds:
        plan.check_leakage(ratings, fold)
        train = plan.train_ratings(ratings, fold)
        logger.info(
            "Fold %d/%d: %d training likes", fold + 1, plan.num_folds, train.nnz
        )

        if method.name == "popularity":
            scorers = {NO_CONTENT: PopularityScorer(train)}
            for scenario in Scenario:
                table.add(
                    method.label,
                    NO_CONTENT,
                    scenario,
                    fold,
                    evaluate(scorers[NO_CONTENT], ratings, plan, fold, scenario, k_list),
                )
            continue
        if method.name == "random":
            scorer = RandomScorer(ratings.num_videos, method.seed + fold)
            for scenario in Scenario:
                table.add(
                    method.label,
                    NO_CONTENT,
                    scenario,
                    fold,
                    evaluate(scorer, ratings, plan, fold, scenario, k_list),
                )
            continue

        contents: Mapping[str, ContentFeatures | None] = (
            features_by_content if method.name == "cer" else {NO_CONTENT: None}
        )
        out_scorers: dict[str, Scorer] = {}
        for content, features in contents.items():
            started = time.perf_counter()
            model = _train(method, train, features, threads)
            table.train_seconds[(method.label, content, fold)] = (
                time.perf_counter() - started
            )
            for scenario in Scenario:
                try:
                    scorer = make_scorer(model, scenario, features)
                except UnsupportedScenarioError:
                    continue
                if scenario is Scenario.OUT_MATRIX:
                    out_scorers[content] = scorer
                accuracies = evaluate(scorer, ratings, plan, fold, scenario, k_list)
                table.add(method.name, content, scenario, fold, accuracies)
                logger.info(
                    "Fold %d %s/%s %s-matrix: %s",
                    fold,
                    method.name,
                    content,
                    scenario.value,
                    ", ".join(f"@{k}={a:.4f}" for k, a in accuracies.items()),
                )

        if method.fusion is not None:
            if fusion_spec is None:
                # Contents are ranked once, on the first evaluated fold.
                order = rank_contents(
                    table.validation_accuracies(Scenario.OUT_MATRIX, validation_k, fold)
                )
                fusion_spec = (
                    FusionSpec.geometric(order, method.p)
                    if method.fusion is FusionMethod.GEOMETRIC
                    else FusionSpec.average(order)
                )
                logger.info(
                    "Fusion order %s with weights %s",
                    ", ".join(fusion_spec.ordered_contents),
                    fusion_spec.weights,
                )
            table.add(
                method.label,
                "+".join(fusion_spec.ordered_contents),
                Scenario.OUT_MATRIX,
                fold,
                evaluate(
                    FusedScorer(out_scorers, fusion_spec),
                    ratings,
                    plan,
                    fold,
                    Scenario.OUT_MATRIX,
                    k_list,
                ),
            )
    return table
