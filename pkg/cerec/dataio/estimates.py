"""
Per-content estimate files, the input of late fusion.

Header ``name num_users num_candidates``, then the candidate video ids as
little-endian int64, then the num_users × num_candidates estimates as
little-endian float64, row-major by user.
"""

import dataclasses
from pathlib import Path

import numpy as np

from cerec.core import DataError
from cerec.core import FloatArray
from cerec.core import IntArray
from cerec.core import ShapeError
from cerec.dataio.features import FLOAT
from cerec.dataio.features import check_length
from cerec.dataio.features import format_header
from cerec.dataio.features import parse_count
from cerec.dataio.features import split_header

INT = np.dtype("<i8")


@dataclasses.dataclass(frozen=True, eq=False)
class Estimates:
    content_name: str
    candidates: IntArray
    scores: FloatArray

    def __post_init__(self):
        candidates = np.asarray(self.candidates, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape[1] != len(candidates):
            raise ShapeError(
                f"{scores.shape} estimates for {len(candidates)} candidates"
            )
        object.__setattr__(self, "candidates", candidates)
        object.__setattr__(self, "scores", scores)

    @property
    def num_users(self) -> int:
        return self.scores.shape[0]


def save_estimates(estimates: Estimates, path: str | Path):
    with open(path, "wb") as fp:
        fp.write(
            format_header(
                estimates.content_name,
                estimates.num_users,
                len(estimates.candidates),
            )
        )
        fp.write(np.ascontiguousarray(estimates.candidates, dtype=INT).tobytes())
        fp.write(np.ascontiguousarray(estimates.scores, dtype=FLOAT).tobytes())


def load_estimates(path: str | Path) -> Estimates:
    data = Path(path).read_bytes()
    (name, m, c), offset = split_header(data, 3)
    m, c = parse_count(m, "user count"), parse_count(c, "candidate count")
    check_length(data, offset, c * INT.itemsize + m * c * FLOAT.itemsize, "estimates")
    candidates = np.frombuffer(data, dtype=INT, count=c, offset=offset)
    scores = np.frombuffer(
        data, dtype=FLOAT, count=m * c, offset=offset + c * INT.itemsize
    ).reshape(m, c)
    if not np.isfinite(scores).all():
        raise DataError(f"non-finite estimates in {name}")
    return Estimates(name, candidates.astype(np.int64), scores.astype(np.float64))
