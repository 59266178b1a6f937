"""
Binary checkpoint format.

    magic    4 bytes   b"PVTC"
    version  uint32 LE
    hlen     uint64 LE
    header   hlen bytes of UTF-8 JSON: config, optional head shape, manifest
    payload  raw little-endian tensors, laid out as the manifest says

Manifest offsets are relative to the start of the payload.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .backbone import BackboneWeights, init_weights
from .config import ModelConfig
from .errors import (
    BadMagicError,
    CheckpointError,
    ConfigError,
    ManifestError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from .heads import SegHeadWeights, init_seg_head
from .tensor import named_tensors

MAGIC = b"PVTC"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")

PathLike = Union[str, Path]


@dataclasses.dataclass
class Checkpoint:
    version: int
    config: ModelConfig
    weights: BackboneWeights
    head: Optional[SegHeadWeights] = None


def _entries(weights: BackboneWeights, head: Optional[SegHeadWeights]):
    yield from named_tensors(weights, "backbone")
    if head is not None:
        yield from named_tensors(head, "seg_head")


def encode_checkpoint(weights: BackboneWeights, config: ModelConfig, head: Optional[SegHeadWeights] = None) -> bytes:
    manifest, chunks, offset = [], [], 0
    for name, t in _entries(weights, head):
        raw = np.ascontiguousarray(t.data, dtype=t.dtype.newbyteorder("<")).tobytes()
        manifest.append(
            {"name": name, "shape": list(t.shape), "dtype": t.dtype.name, "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    header = {
        "config": config.to_dict(),
        "head": None if head is None else {"width": head.width, "num_classes": head.num_classes},
        "payload_bytes": offset,
        "tensors": manifest,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + b"".join(chunks)


def save_checkpoint(
    weights: BackboneWeights, config: ModelConfig, path: PathLike, head: Optional[SegHeadWeights] = None
) -> None:
    Path(path).write_bytes(encode_checkpoint(weights, config, head))


def _validate_manifest(manifest: list, payload_bytes: int) -> None:
    spans = []
    for e in manifest:
        try:
            dtype = np.dtype(e["dtype"])
            count = int(np.prod(e["shape"], dtype=np.int64))
            offset, nbytes = int(e["offset"]), int(e["nbytes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed manifest entry {e!r}: {exc}") from None
        if dtype not in (np.float32, np.float64):
            raise ManifestError(f"{e['name']}: unsupported dtype {dtype}")
        if nbytes != count * dtype.itemsize:
            raise ManifestError(f"{e['name']}: {nbytes} bytes does not match shape {e['shape']} of {dtype}")
        if offset < 0 or offset + nbytes > payload_bytes:
            raise ManifestError(f"{e['name']}: span [{offset}, {offset + nbytes}) outside payload of {payload_bytes}")
        spans.append((offset, offset + nbytes, e["name"]))
    spans.sort()
    for (_, end, a), (start, _, b) in zip(spans, spans[1:]):
        if start < end:
            raise ManifestError(f"tensors {a} and {b} overlap")


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError("not a checkpoint file (bad magic bytes)")
    if len(blob) < _PREFIX.size:
        raise TruncatedCheckpointError("file ends inside the fixed-size prefix")
    _, version, hlen = _PREFIX.unpack_from(blob)
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, this build reads version {VERSION}")
    start = _PREFIX.size + hlen
    if len(blob) < start:
        raise TruncatedCheckpointError("file ends inside the header")
    try:
        header = json.loads(blob[_PREFIX.size : start].decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        manifest = header["tensors"]
        payload_bytes = int(header["payload_bytes"])
    except (ValueError, KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from None
    _validate_manifest(manifest, payload_bytes)
    payload = memoryview(blob)[start:]
    if len(payload) < payload_bytes:
        raise TruncatedCheckpointError(f"payload has {len(payload)} of {payload_bytes} bytes")
    if len(payload) > payload_bytes:
        raise CheckpointError(f"{len(payload) - payload_bytes} trailing bytes after payload")

    arrays = {}
    for e in manifest:
        dtype = np.dtype(e["dtype"]).newbyteorder("<")
        raw = payload[e["offset"] : e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype=dtype).reshape(e["shape"])
        arrays[e["name"]] = arr.astype(dtype.newbyteorder("="))

    weights = init_weights(config, seed=0)
    head = None
    if header.get("head"):
        head_info = header["head"]
        head = init_seg_head(config, int(head_info["num_classes"]), int(head_info["width"]))
    expected = dict(_entries(weights, head))
    if set(expected) != set(arrays):
        missing = sorted(set(expected) - set(arrays))
        extra = sorted(set(arrays) - set(expected))
        raise ManifestError(f"tensor set does not match config (missing {missing[:3]}, unexpected {extra[:3]})")
    for name, t in expected.items():
        if t.shape != arrays[name].shape:
            raise ManifestError(f"{name}: shape {arrays[name].shape} does not match config shape {t.shape}")
        t.data = arrays[name]
    return Checkpoint(version, config, weights, head)


def read_checkpoint(path: PathLike) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


def load_checkpoint(path: PathLike) -> tuple[BackboneWeights, ModelConfig]:
    ckpt = read_checkpoint(path)
    return ckpt.weights, ckpt.config
