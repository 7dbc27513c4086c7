"""Binary parameter checkpoints ("MSTP" container, little-endian)."""
import logging
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

from mstformer.core.binary import ByteReader
from mstformer.core.tensor import Tensor
from mstformer.exceptions import DataFormatError

MAGIC = b"MSTP"
VERSION = 1

logger = logging.getLogger(__name__)


def encode_params(params: Dict[str, Tensor]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    return b"".join(chunks)


def decode_params(payload: bytes) -> Dict[str, Tensor]:
    reader = ByteReader(payload, "checkpoint")
    if reader.take(4, "magic") != MAGIC:
        raise DataFormatError("bad checkpoint magic", 0)
    version, count = reader.unpack("<II", "header")
    if version != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}", 4)
    params: Dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H", "name length")
        start = reader.offset
        try:
            name = reader.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise DataFormatError("parameter name is not UTF-8", start) from None
        if name in params:
            raise DataFormatError(f"duplicate parameter '{name}'", start)
        (rank,) = reader.unpack("<B", "rank")
        dims = reader.unpack(f"<{rank}I", "dims")
        size = int(np.prod(dims, dtype=np.int64))
        values = np.frombuffer(reader.take(8 * size, f"values of '{name}'"), dtype="<f8")
        params[name] = Tensor(values.reshape(dims), requires_grad=True, name=name)
    reader.expect_end("last parameter")
    return params


def save_params(params: Dict[str, Tensor], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_params(params))
    logger.info(f"💾 Saved {len(params)} parameters to {path}")
    return path


def load_params(path: Union[str, Path]) -> Dict[str, Tensor]:
    path = Path(path)
    params = decode_params(path.read_bytes())
    logger.info(f"📖 Loaded {len(params)} parameters from {path}")
    return params
