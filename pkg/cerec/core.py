"""
Domain types shared by the trainers, the evaluation harness and the loaders.

Matrices follow the column-per-entity convention: ``W`` is k×m (one column
per user), ``H`` is k×n (one column per video), the content matrix ``F`` is
d×n and the embedding ``E`` is d×k, so the content latent vector of video
``j`` is ``E.T @ F[:, j]``. All reals are 64-bit floats.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Iterable
from functools import cached_property

import numpy as np
import numpy.typing as npt
from scipy import sparse

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


class CerecError(Exception):
    """Base class of all the errors raised by this package."""


class ParameterError(CerecError, ValueError):
    """Invalid hyperparameter or argument value."""


class ShapeError(CerecError, ValueError):
    """Dimensions of the operands do not agree."""


class DataError(CerecError):
    """Malformed or inconsistent input data.

    ``position`` names the line (text formats) or byte offset (binary
    formats) where the problem was detected, when known.
    """

    def __init__(self, message: str, position: str | None = None):
        self.position = position
        if position is not None:
            message = f"{message} ({position})"
        super().__init__(message)


class FormatError(DataError):
    """Unrecognized, unsupported or truncated binary file."""


class ContractError(CerecError):
    """An operation was invoked with arguments violating its precondition."""


class NumericalError(CerecError):
    """Non-finite values appeared while training."""


class UnsupportedScenarioError(ParameterError):
    """The model cannot produce estimates for the requested scenario."""


class RatingMatrix:
    """Sparse binary implicit-feedback matrix.

    Only the likes (r_ij = 1) are stored; absent pairs mean r_ij = 0. Entries
    are kept in canonical order, sorted by user and then by video, and every
    per-rating array used elsewhere (e.g. fold plan labels) follows it.
    """

    def __init__(
        self,
        num_users: int,
        num_videos: int,
        users: Iterable[int] | npt.ArrayLike = (),
        videos: Iterable[int] | npt.ArrayLike = (),
    ):
        if num_users < 0 or num_videos < 0:
            raise ShapeError("matrix dimensions must be nonnegative")
        users = np.asarray(users, dtype=np.int64).ravel()
        videos = np.asarray(videos, dtype=np.int64).ravel()
        if users.shape != videos.shape:
            raise ShapeError(
                f"{len(users)} user ids but {len(videos)} video ids were given"
            )
        if len(users):
            if users.min() < 0 or users.max() >= num_users:
                raise DataError(f"user id out of range [0, {num_users})")
            if videos.min() < 0 or videos.max() >= num_videos:
                raise DataError(f"video id out of range [0, {num_videos})")

        order = np.lexsort((videos, users))
        users, videos = users[order], videos[order]
        duplicated = (users[1:] == users[:-1]) & (videos[1:] == videos[:-1])
        if duplicated.any():
            at = int(np.flatnonzero(duplicated)[0])
            raise DataError(
                f"duplicate rating for user {users[at]} and video {videos[at]}"
            )

        self.num_users = int(num_users)
        self.num_videos = int(num_videos)
        self.users: IntArray = users
        self.videos: IntArray = videos
        self.users.setflags(write=False)
        self.videos.setflags(write=False)

    def __repr__(self):
        return (
            f"RatingMatrix <{self.num_users} users, {self.num_videos} videos, "
            f"{self.nnz} likes>"
        )

    def __len__(self):
        return self.nnz

    def __eq__(self, other):
        if not isinstance(other, RatingMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.videos, other.videos)
        )

    @property
    def nnz(self) -> int:
        return len(self.users)

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_users, self.num_videos

    @cached_property
    def csr(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (np.ones(self.nnz), (self.users, self.videos)), shape=self.shape
        )

    @cached_property
    def csc(self) -> sparse.csc_matrix:
        return self.csr.tocsc()

    def user_videos(self, user_id: int) -> IntArray:
        """Videos liked by ``user_id`` (R_i), ascending."""
        csr = self.csr
        return csr.indices[csr.indptr[user_id] : csr.indptr[user_id + 1]]

    def video_users(self, video_id: int) -> IntArray:
        """Users who like ``video_id`` (R_j), ascending."""
        csc = self.csc
        return csc.indices[csc.indptr[video_id] : csc.indptr[video_id + 1]]

    def user_counts(self) -> IntArray:
        return np.bincount(self.users, minlength=self.num_users)

    def video_counts(self) -> IntArray:
        return np.bincount(self.videos, minlength=self.num_videos)

    def select(self, mask: npt.ArrayLike) -> RatingMatrix:
        """Return the likes flagged by ``mask`` (aligned with canonical order)."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.nnz,):
            raise ShapeError(f"mask of length {mask.shape} for {self.nnz} likes")
        return RatingMatrix(
            self.num_users, self.num_videos, self.users[mask], self.videos[mask]
        )

    def pairs(self) -> IntArray:
        """The likes as an (nnz, 2) array of (user, video)."""
        return np.column_stack([self.users, self.videos])

    def to_dense(self) -> FloatArray:
        return self.csr.toarray()


@dataclasses.dataclass(frozen=True, eq=False)
class ContentFeatures:
    """Content vectors of one content type, stored as the d×n matrix F."""

    content_name: str
    matrix: FloatArray
    ssr_applied: bool = False

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ShapeError(f"content matrix must be 2-D, got {matrix.ndim}-D")
        if not np.isfinite(matrix).all():
            row, col = np.argwhere(~np.isfinite(matrix))[0]
            raise DataError(
                f"non-finite component {row} of the {self.content_name} vector"
                f" of video {col}"
            )
        if (
            not self.content_name
            or not self.content_name.isascii()
            or any(c.isspace() for c in self.content_name)
        ):
            raise ParameterError(f"invalid content name {self.content_name!r}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    def __repr__(self):
        return f"ContentFeatures <{self.content_name} d={self.dim} n={self.num_videos}>"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_videos(self) -> int:
        return self.matrix.shape[1]

    def vector(self, video_id: int) -> FloatArray:
        return self.matrix[:, video_id]

    def ssr_normalized(self) -> ContentFeatures:
        """Apply signed square root normalization; it must happen only once."""
        if self.ssr_applied:
            raise ParameterError(
                f"SSR normalization was already applied to {self.content_name}"
            )
        return ContentFeatures(
            self.content_name, ssr_normalize(self.matrix), ssr_applied=True
        )

    @classmethod
    def zeros(cls, content_name: str, dim: int, num_videos: int) -> ContentFeatures:
        return cls(content_name, np.zeros((dim, num_videos)))


def ssr_normalize(vector: npt.ArrayLike) -> FloatArray:
    """Signed square root, x → sign(x)·sqrt(|x|), element-wise."""
    x = np.asarray(vector, dtype=np.float64)
    return np.sign(x) * np.sqrt(np.abs(x))


@dataclasses.dataclass(frozen=True)
class Hyperparams:
    """CER / WMF hyperparameters; defaults are the reported best CER setting."""

    k: int = 50
    lambda_u: float = 0.1
    lambda_v: float = 10.0
    lambda_e: float = 1000.0
    conf_pos: float = 1.0
    conf_neg: float = 0.01
    max_sweeps: int = 200
    # Relative objective decrease below which training stops early.
    tolerance: float | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"k must be at least 1, got {self.k}")
        if self.lambda_u <= 0:
            raise ParameterError("lambda_u must be positive")
        if self.lambda_v <= 0:
            raise ParameterError("lambda_v must be positive")
        if self.lambda_e < 0:
            raise ParameterError("lambda_e must be nonnegative")
        if not self.conf_pos > self.conf_neg > 0:
            raise ParameterError("confidences must satisfy conf_pos > conf_neg > 0")
        if self.max_sweeps < 1:
            raise ParameterError("max_sweeps must be at least 1")
        if self.tolerance is not None and self.tolerance < 0:
            raise ParameterError("tolerance must be nonnegative")

    @classmethod
    def wmf(cls, **kwargs) -> Hyperparams:
        """Best reported setting of the content-free WMF baseline."""
        kwargs.setdefault("lambda_u", 0.01)
        kwargs.setdefault("lambda_v", 0.01)
        return cls(**kwargs)


@dataclasses.dataclass(eq=False)
class CerModel:
    """Latent factors of a trained (or training) CER model.

    A model trained without content (WMF mode) has an embedding with d = 0,
    so its out-of-matrix estimate is identically zero.
    """

    W: FloatArray
    H: FloatArray
    E: FloatArray
    hyper: Hyperparams

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.H = np.asarray(self.H, dtype=np.float64)
        self.E = np.asarray(self.E, dtype=np.float64)
        k = self.hyper.k
        if self.W.ndim != 2 or self.W.shape[0] != k:
            raise ShapeError(f"W must be {k}×m, got {self.W.shape}")
        if self.H.ndim != 2 or self.H.shape[0] != k:
            raise ShapeError(f"H must be {k}×n, got {self.H.shape}")
        if self.E.ndim != 2 or self.E.shape[1] != k:
            raise ShapeError(f"E must be d×{k}, got {self.E.shape}")
        for name in ("W", "H", "E"):
            if not np.isfinite(getattr(self, name)).all():
                raise NumericalError(f"{name} has non-finite entries")

    def __repr__(self):
        return (
            f"CerModel <m={self.num_users} n={self.num_videos} d={self.dim} "
            f"k={self.hyper.k}>"
        )

    @property
    def num_users(self) -> int:
        return self.W.shape[1]

    @property
    def num_videos(self) -> int:
        return self.H.shape[1]

    @property
    def dim(self) -> int:
        return self.E.shape[0]

    @property
    def is_wmf(self) -> bool:
        return self.dim == 0

    def content_latent(self, features: ContentFeatures | FloatArray) -> FloatArray:
        """h'_j = Eᵀf_j for every column of the content matrix."""
        matrix = features.matrix if isinstance(features, ContentFeatures) else features
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape[0] != self.dim:
            raise ShapeError(
                f"content vectors have {matrix.shape[0]} dims, model expects {self.dim}"
            )
        return self.E.T @ matrix

    def offsets(self, features: ContentFeatures) -> FloatArray:
        """ε_j = h_j − Eᵀf_j for every video."""
        return self.H - self.content_latent(features)


def confidence(r: int, hyper: Hyperparams) -> float:
    """c_ij: ``conf_pos`` for a like, ``conf_neg`` otherwise."""
    if r == 1:
        return hyper.conf_pos
    if r == 0:
        return hyper.conf_neg
    raise ParameterError(f"ratings are binary, got {r!r}")


def _check_index(index: int, size: int, what: str):
    if not 0 <= index < size:
        raise IndexError(f"{what} {index} out of range [0, {size})")


def predict_in_matrix(model: CerModel, user_id: int, video_id: int) -> float:
    """w_iᵀh_j."""
    _check_index(user_id, model.num_users, "user")
    _check_index(video_id, model.num_videos, "video")
    return float(model.W[:, user_id] @ model.H[:, video_id])


def predict_out_matrix(model: CerModel, user_id: int, f: npt.ArrayLike) -> float:
    """w_iᵀEᵀf for a video known only by its content vector ``f``."""
    _check_index(user_id, model.num_users, "user")
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (model.dim,):
        raise ShapeError(f"content vector of shape {f.shape}, expected ({model.dim},)")
    return float(model.W[:, user_id] @ (model.E.T @ f))
