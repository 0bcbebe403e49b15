"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"CNX1" | u16 version | u32 header length | UTF-8 JSON header
    | float32 payload | u32 CRC32 of the payload

The header holds the model config, class labels, free-form metadata and a
tensor manifest of ``{name, shape, offset, nbytes}`` relative to the payload
start.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..autodiff import Tensor
from .convnext import Model, ModelConfig

MAGIC = b"CNX1"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_CRC = struct.Struct("<I")


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


def encode_checkpoint(model: Model) -> bytes:
    manifest = []
    chunks = []
    offset = 0
    for name, t in model.params.items():
        raw = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "config": model.config.to_dict(),
        "labels": model.labels,
        "metadata": model.metadata,
        "tensors": manifest,
        "payload_bytes": len(payload),
        "dtype": "float32",
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + payload + _CRC.pack(zlib.crc32(payload))


def decode_checkpoint(blob: bytes) -> Model:
    if len(blob) < _PREFIX.size:
        raise CheckpointTruncatedError(f"file is {len(blob)} bytes, shorter than the fixed prefix")
    magic, version, hlen = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, this build reads {VERSION}")
    hstart = _PREFIX.size
    if len(blob) < hstart + hlen:
        raise CheckpointTruncatedError("file ends inside the JSON header")
    try:
        header = json.loads(blob[hstart : hstart + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable header: {exc}") from exc
    pstart = hstart + hlen
    nbytes = int(header["payload_bytes"])
    if len(blob) < pstart + nbytes + _CRC.size:
        raise CheckpointTruncatedError(
            f"payload needs {nbytes + _CRC.size} bytes after the header, file has {len(blob) - pstart}"
        )
    payload = blob[pstart : pstart + nbytes]
    (stored,) = _CRC.unpack_from(blob, pstart + nbytes)
    if zlib.crc32(payload) != stored:
        raise CheckpointChecksumError("payload CRC32 mismatch; file is corrupted")

    params = {}
    for entry in header["tensors"]:
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(entry["shape"])
        params[entry["name"]] = Tensor(arr, requires_grad=True, name=entry["name"])
    config = ModelConfig.from_dict(header["config"])
    return Model(config, params, header["labels"], header.get("metadata") or {})


def save_checkpoint(model: Model, path) -> Path:
    """Write ``model`` to ``path``; parameters are stored as float32."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(model))
    return path


def load_checkpoint(path) -> Model:
    return decode_checkpoint(Path(path).read_bytes())
