"""The "MSTD" dataset container (little-endian, version 1)."""
import logging
import struct
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from mstformer.core.binary import ByteReader
from mstformer.exceptions import ContractError, DataFormatError, DatasetError
from mstformer.services.data_synth import SequenceSample

logger = logging.getLogger(__name__)

MAGIC = b"MSTD"
VERSION = 1
HEADER = struct.Struct("<4sIIIII")  # magic, version, num_sequences, H, W, C


def encode_dataset(samples: Sequence[SequenceSample]) -> bytes:
    if samples:
        height, width, channels = samples[0].images.shape[1:]
    else:
        height = width = channels = 0
    chunks = [HEADER.pack(MAGIC, VERSION, len(samples), height, width, channels)]
    for i, sample in enumerate(samples):
        length = sample.length
        if sample.images.shape != (length, height, width, channels):
            raise ContractError(
                f"sequence {i}: images {sample.images.shape} do not match {(length, height, width, channels)}"
            )
        if len(sample.labels) != length:
            raise ContractError(f"sequence {i}: {len(sample.labels)} labels for {length} visits")
        chunks.append(struct.pack("<IB", length, int(bool(sample.variant))))
        chunks.append(np.ascontiguousarray(sample.timestamps, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(sample.labels, dtype=np.uint8).tobytes())
        chunks.append(np.ascontiguousarray(sample.images, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_dataset(payload: bytes) -> List[SequenceSample]:
    """Parse a whole container; any defect raises before a sample is returned."""
    reader = ByteReader(payload, "dataset")
    magic, version, count, height, width, channels = HEADER.unpack(reader.take(HEADER.size, "header"))
    if magic != MAGIC:
        raise DataFormatError(f"bad dataset magic {magic!r}", 0)
    if version != VERSION:
        raise DataFormatError(f"unsupported dataset version {version}", 4)
    pixels = height * width * channels
    samples: List[SequenceSample] = []
    for i in range(count):
        length, variant = reader.unpack("<IB", f"sequence {i} header")
        if variant > 1:
            raise DataFormatError(f"sequence {i}: variant flag {variant} is not 0 or 1", reader.offset - 1)
        timestamps = np.frombuffer(reader.take(8 * length, f"sequence {i} timestamps"), dtype="<f8")
        labels = np.frombuffer(reader.take(length, f"sequence {i} labels"), dtype=np.uint8)
        images = np.frombuffer(reader.take(4 * length * pixels, f"sequence {i} images"), dtype="<f4")
        samples.append(
            SequenceSample(
                timestamps=timestamps.astype(np.float64),
                images=images.reshape(length, height, width, channels).astype(np.float32),
                labels=labels.astype(np.int64),
                variant=bool(variant),
            )
        )
    reader.expect_end(f"sequence {count - 1}" if count else "header")
    return samples


def save_dataset(samples: Sequence[SequenceSample], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_dataset(samples))
    logger.info(f"💾 Wrote {len(samples)} sequences to {path}")
    return path


def load_dataset(path: Union[str, Path]) -> List[SequenceSample]:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset not found: {path}")
    samples = decode_dataset(path.read_bytes())
    logger.info(f"📖 Read {len(samples)} sequences from {path}")
    return samples
