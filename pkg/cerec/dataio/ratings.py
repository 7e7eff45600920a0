"""
Rating files in the MovieLens 10M convention: one ``user::video::rating::timestamp``
record per UTF-8 line. The timestamp is ignored.

Every record contributes its user and video to the id maps, liked or not, so
videos nobody likes still get an index. Only the likes are kept in the
resulting ``RatingMatrix``.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from collections.abc import Iterable
from collections.abc import Iterator
from pathlib import Path

from cerec.core import DataError
from cerec.core import RatingMatrix

logger = logging.getLogger(__name__)

SEPARATOR = "::"
LIKE_THRESHOLD = 5.0
MIN_RATING = 0.5
MAX_RATING = 5.0


@dataclasses.dataclass(frozen=True)
class RawRatingRecord:
    user_key: str
    video_key: str
    value: float
    timestamp: int = 0


def binarize(record: RawRatingRecord, threshold: float = LIKE_THRESHOLD) -> int:
    """1 when the rating is a like (value ≥ threshold), else 0."""
    return int(record.value >= threshold)


class IdPolicy(enum.Enum):
    # Indices in order of first appearance in the file.
    DENSE = "dense"
    # Indices in key order, numeric when every key is an integer.
    SORTED = "sorted"


class IdMap:
    """Bijection between external keys and dense indices."""

    def __init__(self, keys: Iterable[str] = ()):
        self.keys: list[str] = []
        self.index: dict[str, int] = {}
        for key in keys:
            self.add(key)

    def __len__(self):
        return len(self.keys)

    def __getitem__(self, key: str) -> int:
        return self.index[key]

    def __contains__(self, key: str) -> bool:
        return key in self.index

    def add(self, key: str) -> int:
        try:
            return self.index[key]
        except KeyError:
            self.index[key] = len(self.keys)
            self.keys.append(key)
            return self.index[key]

    def sorted(self) -> IdMap:
        if all(key.lstrip("-").isdigit() for key in self.keys):
            return IdMap(sorted(self.keys, key=int))
        return IdMap(sorted(self.keys))


@dataclasses.dataclass
class LoadedRatings:
    ratings: RatingMatrix
    users: IdMap
    videos: IdMap


def parse_line(line: str, lineno: int) -> RawRatingRecord:
    position = f"line {lineno}"
    fields = line.rstrip("\r\n").split(SEPARATOR)
    if len(fields) not in (3, 4):
        raise DataError(
            f"expected user{SEPARATOR}video{SEPARATOR}rating{SEPARATOR}timestamp, "
            f"found {len(fields)} fields",
            position,
        )
    user_key, video_key = fields[0].strip(), fields[1].strip()
    if not user_key or not video_key:
        raise DataError("empty user or video key", position)
    try:
        value = float(fields[2])
    except ValueError:
        raise DataError(f"rating {fields[2]!r} is not a number", position) from None
    if not math.isfinite(value) or not MIN_RATING <= value <= MAX_RATING:
        raise DataError(
            f"rating {value} outside [{MIN_RATING}, {MAX_RATING}]", position
        )
    timestamp = 0
    if len(fields) == 4 and fields[3].strip():
        try:
            timestamp = int(fields[3])
        except ValueError:
            raise DataError(
                f"timestamp {fields[3]!r} is not an integer", position
            ) from None
    return RawRatingRecord(user_key, video_key, value, timestamp)


def read_records(path: str | Path) -> Iterator[tuple[int, RawRatingRecord]]:
    """(line number, record) pairs; blank lines are skipped."""
    with open(path, "rb") as fp:
        for lineno, raw in enumerate(fp, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as err:
                raise DataError(
                    f"invalid UTF-8: {err.reason}", f"line {lineno}"
                ) from None
            if line.strip():
                yield lineno, parse_line(line, lineno)


def load_ratings(
    path: str | Path,
    policy: IdPolicy = IdPolicy.DENSE,
    threshold: float = LIKE_THRESHOLD,
) -> LoadedRatings:
    users, videos = IdMap(), IdMap()
    seen: dict[tuple[str, str], int] = {}
    liked: list[tuple[str, str]] = []
    total = 0
    for lineno, record in read_records(path):
        pair = (record.user_key, record.video_key)
        if pair in seen:
            raise DataError(
                f"duplicate rating of video {record.video_key} by user "
                f"{record.user_key} (first on line {seen[pair]})",
                f"line {lineno}",
            )
        seen[pair] = lineno
        users.add(record.user_key)
        videos.add(record.video_key)
        if binarize(record, threshold):
            liked.append(pair)
        total += 1

    if policy is IdPolicy.SORTED:
        users, videos = users.sorted(), videos.sorted()
    ratings = RatingMatrix(
        len(users),
        len(videos),
        [users[u] for u, _ in liked],
        [videos[v] for _, v in liked],
    )
    logger.info(
        "Loaded %d ratings (%d likes) of %d users on %d videos from %s",
        total,
        ratings.nnz,
        ratings.num_users,
        ratings.num_videos,
        path,
    )
    return LoadedRatings(ratings, users, videos)


def format_record(record: RawRatingRecord) -> str:
    return SEPARATOR.join(
        [record.user_key, record.video_key, f"{record.value:.1f}", str(record.timestamp)]
    )


def save_ratings(records: Iterable[RawRatingRecord], path: str | Path):
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        for record in records:
            fp.write(format_record(record) + "\n")
