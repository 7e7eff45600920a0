"""
Fold plan files.

Plain text::

    format 1
    num_folds 5
    seed 0
    num_videos 4
    num_ratings 6
    video_folds 3 0 1 2
    labels 0 TTIOTT
    ...

Each ``labels`` string holds one partition letter (T, I or O) per like, in
the canonical (user, video) order of the rating matrix.
"""

import logging
from pathlib import Path

import numpy as np

from cerec.core import DataError
from cerec.evaluation import FoldPlan
from cerec.evaluation import Partition

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
HEADER_KEYS = ("format", "num_folds", "seed", "num_videos", "num_ratings")


def save_plan(plan: FoldPlan, path: str | Path):
    letters = np.array([part.letter for part in Partition])
    with open(path, "w", encoding="ascii", newline="\n") as fp:
        fp.write(f"format {FORMAT_VERSION}\n")
        fp.write(f"num_folds {plan.num_folds}\n")
        fp.write(f"seed {plan.seed}\n")
        fp.write(f"num_videos {plan.num_videos}\n")
        fp.write(f"num_ratings {plan.num_ratings}\n")
        fp.write(" ".join(["video_folds", *map(str, plan.video_folds)]) + "\n")
        for fold in range(plan.num_folds):
            fp.write(f"labels {fold} {''.join(letters[plan.labels[fold]])}\n")


def _int(value: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise DataError(f"{value!r} is not an integer", f"line {lineno}") from None


def load_plan(path: str | Path) -> FoldPlan:
    with open(path, encoding="ascii") as fp:
        try:
            lines = [line.rstrip("\n") for line in fp]
        except UnicodeDecodeError:
            raise DataError("plan file is not ASCII") from None

    header: dict[str, int] = {}
    video_folds = None
    labels: dict[int, np.ndarray] = {}
    for lineno, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields:
            continue
        key, values = fields[0], fields[1:]
        if key in HEADER_KEYS:
            if len(values) != 1:
                raise DataError(f"{key} takes one value", f"line {lineno}")
            header[key] = _int(values[0], lineno)
        elif key == "video_folds":
            video_folds = np.array([_int(v, lineno) for v in values], dtype=np.int64)
        elif key == "labels":
            if len(values) not in (1, 2):
                raise DataError("labels takes a fold and a string", f"line {lineno}")
            fold = _int(values[0], lineno)
            string = values[1] if len(values) == 2 else ""
            try:
                labels[fold] = np.array(
                    [Partition.from_letter(c) for c in string], dtype=np.int8
                )
            except ValueError:
                raise DataError("labels must be T, I or O", f"line {lineno}") from None
        else:
            raise DataError(f"unknown key {key!r}", f"line {lineno}")

    missing = [key for key in HEADER_KEYS if key not in header]
    if missing:
        raise DataError(f"plan lacks {', '.join(missing)}")
    if header["format"] != FORMAT_VERSION:
        raise DataError(f"unsupported plan format {header['format']}")
    if video_folds is None or len(video_folds) != header["num_videos"]:
        raise DataError(f"video_folds must list {header['num_videos']} folds")
    num_folds = header["num_folds"]
    if sorted(labels) != list(range(num_folds)):
        raise DataError(f"labels must be given for folds 0 to {num_folds - 1}")
    for fold, row in labels.items():
        if len(row) != header["num_ratings"]:
            raise DataError(
                f"labels of fold {fold} cover {len(row)} likes, "
                f"expected {header['num_ratings']}"
            )
    matrix = (
        np.stack([labels[fold] for fold in range(num_folds)])
        if num_folds
        else np.zeros((0, header["num_ratings"]), dtype=np.int8)
    )
    plan = FoldPlan(num_folds, header["seed"], video_folds, matrix)
    logger.debug("Loaded %d-fold plan from %s", num_folds, path)
    return plan
