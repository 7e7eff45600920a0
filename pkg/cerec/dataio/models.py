"""
Trained model files.

A fixed little-endian header (8-byte magic, uint32 version, the dimensions
as uint64, the hyperparameters) is followed by the factor matrices as
little-endian float64 in C order. The payload length is checked against the
header before any matrix is read.
"""

import logging
import struct
from pathlib import Path

import numpy as np

from cerec.core import CerModel
from cerec.core import FormatError
from cerec.core import Hyperparams
from cerec.core import ParameterError
from cerec.core import ShapeError
from cerec.dataio.features import FLOAT
from cerec.training.bpr import BprHyperparams
from cerec.training.bpr import BprModel

logger = logging.getLogger(__name__)

VERSION = 1
CER_MAGIC = b"CERMODEL"
BPR_MAGIC = b"BPRMODEL"

# magic, version, m, n, d, k, lambda_u, lambda_v, lambda_e, conf_pos,
# conf_neg, max_sweeps
CER_HEADER = struct.Struct("<8sI4Q5dQ")
# magic, version, m, n, k, lambda_u, lambda_i, lambda_j, lambda_b,
# learning_rate, epochs
BPR_HEADER = struct.Struct("<8sI3Q5dQ")


def _matrices(*arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype=FLOAT).tobytes() for a in arrays)


def save_model(model: CerModel | BprModel, path: str | Path):
    if isinstance(model, BprModel):
        hyper = model.hyper
        header = BPR_HEADER.pack(
            BPR_MAGIC,
            VERSION,
            model.num_users,
            model.num_videos,
            hyper.k,
            hyper.lambda_u,
            hyper.lambda_i,
            hyper.lambda_j,
            hyper.lambda_b,
            hyper.learning_rate,
            hyper.epochs,
        )
        body = _matrices(model.W, model.H, model.biases)
    else:
        hyper = model.hyper
        header = CER_HEADER.pack(
            CER_MAGIC,
            VERSION,
            model.num_users,
            model.num_videos,
            model.dim,
            hyper.k,
            hyper.lambda_u,
            hyper.lambda_v,
            hyper.lambda_e,
            hyper.conf_pos,
            hyper.conf_neg,
            hyper.max_sweeps,
        )
        body = _matrices(model.W, model.H, model.E)
    with open(path, "wb") as fp:
        fp.write(header)
        fp.write(body)
    logger.debug("Saved %r to %s", model, path)


def _unpack(data: bytes, layout: struct.Struct) -> tuple:
    if len(data) < layout.size:
        raise FormatError(
            f"truncated header: expected {layout.size} bytes, found {len(data)}",
            f"byte {len(data)}",
        )
    fields = layout.unpack_from(data)
    if fields[1] != VERSION:
        raise FormatError(f"unsupported model version {fields[1]}", "byte 8")
    return fields


def _read_matrices(data: bytes, offset: int, shapes: list[tuple[int, ...]]):
    expected = sum(int(np.prod(shape)) for shape in shapes) * FLOAT.itemsize
    found = len(data) - offset
    if found != expected:
        what = "truncated" if found < expected else "oversized"
        raise FormatError(
            f"{what} model: expected {expected} matrix bytes, found {found}",
            f"byte {min(len(data), offset + expected)}",
        )
    matrices = []
    for shape in shapes:
        count = int(np.prod(shape))
        matrices.append(
            np.frombuffer(data, dtype=FLOAT, count=count, offset=offset)
            .reshape(shape)
            .astype(np.float64)
        )
        offset += count * FLOAT.itemsize
    return matrices


def load_model(path: str | Path) -> CerModel | BprModel:
    data = Path(path).read_bytes()
    magic = data[:8]
    try:
        if magic == CER_MAGIC:
            (_, _, m, n, d, k, lu, lv, le, cp, cn, sweeps) = _unpack(data, CER_HEADER)
            hyper = Hyperparams(
                k=k,
                lambda_u=lu,
                lambda_v=lv,
                lambda_e=le,
                conf_pos=cp,
                conf_neg=cn,
                max_sweeps=sweeps,
            )
            W, H, E = _read_matrices(
                data, CER_HEADER.size, [(k, m), (k, n), (d, k)]
            )
            model: CerModel | BprModel = CerModel(W, H, E, hyper)
        elif magic == BPR_MAGIC:
            (_, _, m, n, k, lu, li, lj, lb, rate, epochs) = _unpack(data, BPR_HEADER)
            hyper_bpr = BprHyperparams(
                k=k,
                lambda_u=lu,
                lambda_i=li,
                lambda_j=lj,
                lambda_b=lb,
                learning_rate=rate,
                epochs=epochs,
            )
            W, H, biases = _read_matrices(data, BPR_HEADER.size, [(k, m), (k, n), (n,)])
            model = BprModel(W, H, biases, hyper_bpr)
        else:
            raise FormatError(f"unknown model magic {magic!r}", "byte 0")
    except (ParameterError, ShapeError) as err:
        raise FormatError(f"inconsistent model header: {err}", "byte 8") from err
    logger.debug("Loaded %r from %s", model, path)
    return model
