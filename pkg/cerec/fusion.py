"""
Late fusion of per-content rating estimates.

Every content type yields its own out-of-matrix estimate r̂ˡ_ij; the fused
estimate is the weighted sum Σ_l w_l·r̂ˡ_ij. With geometric weights
w_l = p(1 − p)^(l−1), p ∈ [0.5, 1), over contents ranked best-first, every
weight is at least the sum of all the weights after it, so a better ranked
content is never outvoted by the worse ones combined. Average fusion gives
every content 1/L.

Weights are not normalized; the fused ranking of every user is invariant to
one global scale factor.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import logging
from collections.abc import Mapping
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

from cerec.core import DataError
from cerec.core import FloatArray
from cerec.core import ParameterError
from cerec.core import ShapeError

logger = logging.getLogger(__name__)


class FusionMethod(enum.Enum):
    AVERAGE = "avg"
    GEOMETRIC = "geometric"
    EXTERNAL = "external"


def geometric_weights(num_contents: int, p: float) -> tuple[float, ...]:
    """[p(1−p)^(l−1) for l = 1..L]."""
    if num_contents < 1:
        raise ParameterError("at least one content is needed")
    if not 0.5 <= p < 1:
        raise ParameterError(f"p must be in [0.5, 1), got {p}")
    return tuple(p * (1 - p) ** (l - 1) for l in range(1, num_contents + 1))


def average_weights(num_contents: int) -> tuple[float, ...]:
    if num_contents < 1:
        raise ParameterError("at least one content is needed")
    return (1 / num_contents,) * num_contents


def zscore(estimates: npt.ArrayLike) -> FloatArray:
    """Center and scale along the last axis (one user's candidates).

    Constant rows become zeros.
    """
    estimates = np.asarray(estimates, dtype=np.float64)
    if estimates.ndim == 0:
        return np.zeros_like(estimates)
    centered = estimates - estimates.mean(axis=-1, keepdims=True)
    std = estimates.std(axis=-1, keepdims=True)
    return np.divide(centered, std, out=np.zeros_like(centered), where=std > 0)


def fuse_ratings(
    estimates: Sequence[npt.ArrayLike],
    weights: Sequence[float],
    normalize: bool = False,
) -> FloatArray:
    """Weighted sum of aligned per-content estimates.

    Each element of ``estimates`` is a scalar or an array of estimates for
    the same (user, video) pairs, in the order of ``weights``. With
    ``normalize`` each content's estimates are z-scored along their last
    axis first.
    """
    if len(estimates) != len(weights):
        raise ShapeError(f"{len(estimates)} estimates for {len(weights)} weights")
    if not len(weights):
        raise ShapeError("nothing to fuse")
    stacked = np.stack([np.asarray(e, dtype=np.float64) for e in estimates])
    if normalize:
        stacked = np.stack([zscore(e) for e in stacked])
    return np.tensordot(np.asarray(weights, dtype=np.float64), stacked, axes=1)


def rank_contents(per_content_accuracy: Mapping[str, float]) -> tuple[str, ...]:
    """Content names by validation accuracy, best first; ties by name."""
    if not per_content_accuracy:
        raise ParameterError("no content accuracies to rank")
    return tuple(
        name
        for name, _ in sorted(
            per_content_accuracy.items(), key=lambda item: (-item[1], item[0])
        )
    )


@dataclasses.dataclass(frozen=True)
class FusionSpec:
    ordered_contents: tuple[str, ...]
    weights: tuple[float, ...]
    method: FusionMethod = FusionMethod.GEOMETRIC
    p: float | None = None

    def __post_init__(self):
        if len(self.weights) != len(self.ordered_contents):
            raise ShapeError(
                f"{len(self.weights)} weights for {len(self.ordered_contents)} contents"
            )
        if len(set(self.ordered_contents)) != len(self.ordered_contents):
            raise ParameterError("content names must be unique")
        if self.method is FusionMethod.GEOMETRIC:
            self.check_dominance()

    def check_dominance(self):
        weights = self.weights
        for t in range(len(weights) - 1):
            if not weights[t] > weights[t + 1]:
                raise ParameterError("geometric weights must strictly decrease")
            if sum(weights[t + 1 :]) > weights[t]:
                raise ParameterError(
                    f"weight {t + 1} is smaller than the sum of the ones after it"
                )

    @classmethod
    def geometric(cls, ordered_contents: Sequence[str], p: float = 0.5) -> FusionSpec:
        return cls(
            tuple(ordered_contents),
            geometric_weights(len(ordered_contents), p),
            FusionMethod.GEOMETRIC,
            p,
        )

    @classmethod
    def average(cls, ordered_contents: Sequence[str]) -> FusionSpec:
        return cls(
            tuple(ordered_contents),
            average_weights(len(ordered_contents)),
            FusionMethod.AVERAGE,
        )

    @classmethod
    def external(
        cls, ordered_contents: Sequence[str], weights: Sequence[float]
    ) -> FusionSpec:
        """Weights computed elsewhere, e.g. by a learning-to-rank method."""
        return cls(
            tuple(ordered_contents),
            tuple(float(w) for w in weights),
            FusionMethod.EXTERNAL,
        )

    def fuse(
        self, estimates_by_content: Mapping[str, npt.ArrayLike], normalize=False
    ) -> FloatArray:
        missing = set(self.ordered_contents) - set(estimates_by_content)
        if missing:
            raise ShapeError(f"no estimates for {', '.join(sorted(missing))}")
        return fuse_ratings(
            [estimates_by_content[name] for name in self.ordered_contents],
            self.weights,
            normalize=normalize,
        )

    def dump(self, fp):
        parser = configparser.ConfigParser()
        parser["fusion"] = {
            "method": self.method.value,
            "contents": ",".join(self.ordered_contents),
            "p": "" if self.p is None else repr(self.p),
            "weights": ",".join(repr(w) for w in self.weights),
        }
        parser.write(fp)

    @classmethod
    def load(cls, fp) -> FusionSpec:
        parser = configparser.ConfigParser()
        try:
            parser.read_file(fp)
            section = parser["fusion"]
            p = section.get("p", "")
            return cls(
                tuple(section["contents"].split(",")),
                tuple(float(w) for w in section["weights"].split(",")),
                FusionMethod(section["method"]),
                float(p) if p else None,
            )
        except (configparser.Error, KeyError, ValueError) as err:
            raise DataError(f"invalid fusion spec: {err}") from err
