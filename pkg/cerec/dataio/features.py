"""
Content feature files.

A one-line ASCII header ``name n d ssr_applied`` is followed by the n·d
components as little-endian 64-bit floats, row-major by video (the vector of
video 0 first). Rows follow the video index of the rating matrix.
"""

import logging
from pathlib import Path

import numpy as np

from cerec.core import ContentFeatures
from cerec.core import DataError
from cerec.core import FormatError

logger = logging.getLogger(__name__)

FLOAT = np.dtype("<f8")


def format_header(*fields) -> bytes:
    return (" ".join(str(field) for field in fields) + "\n").encode("ascii")


def split_header(data: bytes, fields: int) -> tuple[list[str], int]:
    """Header fields and the offset of the binary block."""
    end = data.find(b"\n")
    if end < 0:
        raise FormatError("missing header line", "byte 0")
    try:
        header = data[:end].decode("ascii").split()
    except UnicodeDecodeError:
        raise FormatError("header is not ASCII", "byte 0") from None
    if len(header) != fields:
        raise FormatError(f"header must have {fields} fields, found {len(header)}", "byte 0")
    return header, end + 1


def parse_count(value: str, what: str) -> int:
    try:
        count = int(value)
    except ValueError:
        raise FormatError(f"{what} {value!r} is not an integer", "byte 0") from None
    if count < 0:
        raise FormatError(f"{what} must be nonnegative", "byte 0")
    return count


def check_length(data: bytes, offset: int, expected: int, what: str):
    found = len(data) - offset
    if found < expected:
        raise FormatError(
            f"truncated {what}: expected {expected} bytes, found {found}",
            f"byte {len(data)}",
        )
    if found > expected:
        raise FormatError(
            f"{found - expected} trailing bytes after {what}",
            f"byte {offset + expected}",
        )


def save_features(features: ContentFeatures, path: str | Path):
    body = np.ascontiguousarray(features.matrix.T, dtype=FLOAT).tobytes()
    with open(path, "wb") as fp:
        fp.write(
            format_header(
                features.content_name,
                features.num_videos,
                features.dim,
                int(features.ssr_applied),
            )
        )
        fp.write(body)


def load_features(path: str | Path, num_videos: int | None = None) -> ContentFeatures:
    """Read a feature file; ``num_videos`` is the count the rows must cover."""
    data = Path(path).read_bytes()
    (name, n, d, flag), offset = split_header(data, 4)
    n, d = parse_count(n, "video count"), parse_count(d, "dimension")
    if flag not in ("0", "1"):
        raise FormatError(f"ssr_applied must be 0 or 1, found {flag!r}", "byte 0")
    if num_videos is not None and n != num_videos:
        raise DataError(
            f"{name} has vectors for {n} videos, the ratings have {num_videos}",
            "byte 0",
        )
    check_length(data, offset, n * d * FLOAT.itemsize, "feature vectors")

    rows = np.frombuffer(data, dtype=FLOAT, count=n * d, offset=offset).reshape(n, d)
    bad = np.argwhere(~np.isfinite(rows))
    if len(bad):
        video, component = bad[0]
        raise DataError(
            f"non-finite component {component} of video {video}",
            f"byte {offset + (video * d + component) * FLOAT.itemsize}",
        )
    features = ContentFeatures(name, rows.T.astype(np.float64), ssr_applied=flag == "1")
    logger.debug("Loaded %r from %s", features, path)
    return features
