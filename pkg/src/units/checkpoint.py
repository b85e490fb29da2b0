"""Binary checkpoints of a whole `UniTSModel`.

Layout (all integers little-endian):

    offset 0   4 bytes   magic b"UNTS"
    offset 4   u32       format version (1)
    offset 8   u32       header length H
    offset 12  H bytes   UTF-8 JSON header: model config, creation seed, token-set variable
                         counts, class-embedding tasks and modes, pretraining-tower flag,
                         entry count
    then, per registry entry in lexicographic name order:
               u16       name length N, then N bytes UTF-8 name
               u8        dtype tag (0 = float64, 1 = float32)
               u8        rank R, then R × u32 extents
               raw little-endian values, row-major
    last 32 bytes        SHA-256 of every preceding byte

Serialization is canonical, so save → load → save reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

from units.errors import CheckpointError, ConfigError
from units.model import PRETRAIN_TOWER_PREFIX, ModelConfig, UniTSModel

logger = logging.getLogger(__name__)

MAGIC = b"UNTS"
VERSION = 1
_DIGEST_SIZE = 32
_DTYPE_TAGS = {np.dtype("<f8"): 0, np.dtype("<f4"): 1}
_TAG_DTYPES = {tag: dtype for dtype, tag in _DTYPE_TAGS.items()}


@dataclass(frozen=True, slots=True)
class Checkpoint:
    model: UniTSModel
    seed: int
    version: int = VERSION


def _header(model: UniTSModel, seed: int) -> dict[str, Any]:
    registry = model.registry
    return {
        "model": model.config.to_dict(),
        "seed": int(seed),
        "sources": {key: model.token_set(key).n_vars for key in model.sources()},
        "classes": {
            task: {
                "n_classes": model.class_embeddings(task).n_classes,
                "n_vars": model.class_embeddings(task).values.shape[1],
                "mode": mode,
            }
            for task, mode in model.class_modes().items()
        },
        "pretrain_tower": bool(registry.names(PRETRAIN_TOWER_PREFIX)),
        "entries": len(registry),
    }


def encode_checkpoint(model: UniTSModel, seed: int = 0) -> bytes:
    header = json.dumps(_header(model, seed), sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(header)), header]
    for name, tensor in model.registry.items():
        data = np.ascontiguousarray(tensor.data)
        dtype = data.dtype.newbyteorder("<")
        if dtype not in _DTYPE_TAGS:
            raise CheckpointError(f"{name}: unsupported dtype {data.dtype}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", _DTYPE_TAGS[dtype], data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.astype(dtype, copy=False).tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(path: Path, model: UniTSModel, seed: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(model, seed)
    path.write_bytes(blob)
    logger.info(
        "saved checkpoint %s (%d tensors, %d bytes)", path, len(model.registry), len(blob)
    )
    return path


class _Reader:
    def __init__(self, blob: bytes) -> None:
        self._blob = blob
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self._blob):
            raise CheckpointError(f"truncated checkpoint at byte {self.offset}")
        chunk = self._blob[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def done(self) -> bool:
        return self.offset == len(self._blob)


def _build(header: dict[str, Any]) -> UniTSModel:
    try:
        config = ModelConfig.from_dict(header["model"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"checkpoint header has an invalid model config: {exc}") from None
    model = UniTSModel(config, with_pretrain_tower=bool(header.get("pretrain_tower")))
    for key, n_vars in header.get("sources", {}).items():
        model.add_token_set(key, int(n_vars))
    for task, info in header.get("classes", {}).items():
        model.add_class_embeddings(
            task, int(info["n_classes"]), int(info["n_vars"]), info["mode"]
        )
    return model


def decode_checkpoint(blob: bytes, *, expect: Optional[ModelConfig] = None) -> Checkpoint:
    if len(blob) < len(MAGIC) + 8 + _DIGEST_SIZE or blob[:4] != MAGIC:
        raise CheckpointError("not a UNTS checkpoint")
    body, digest = blob[:-_DIGEST_SIZE], blob[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (file corrupt or truncated)")

    reader = _Reader(body)
    reader.take(len(MAGIC))
    version, header_len = reader.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from None

    model = _build(header)
    if expect is not None and expect != model.config:
        raise CheckpointError(
            f"checkpoint model config {model.config.to_dict()} does not match "
            f"the requested {expect.to_dict()}"
        )

    registry = model.registry
    seen = []
    for _ in range(int(header.get("entries", -1))):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        tag, rank = reader.unpack("<BB")
        if tag not in _TAG_DTYPES:
            raise CheckpointError(f"{name}: unknown dtype tag {tag}")
        dtype = _TAG_DTYPES[tag]
        shape = reader.unpack(f"<{rank}I")
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(count * dtype.itemsize), dtype=dtype).reshape(shape)
        if name not in registry:
            raise CheckpointError(f"checkpoint tensor {name} has no place in the model")
        target = registry[name]
        if target.shape != tuple(shape):
            raise CheckpointError(f"{name}: checkpoint shape {shape}, model shape {target.shape}")
        target.data = values.astype(target.dtype.newbyteorder("="), copy=True)
        seen.append(name)
    if not reader.done:
        raise CheckpointError("trailing bytes after the last checkpoint entry")
    missing = sorted(set(registry.names()) - set(seen))
    if missing:
        raise CheckpointError(f"checkpoint lacks {len(missing)} tensors (first: {missing[0]})")
    return Checkpoint(model, int(header.get("seed", 0)), version)


def load_checkpoint(path: Path, *, expect: Optional[ModelConfig] = None) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    checkpoint = decode_checkpoint(path.read_bytes(), expect=expect)
    logger.info("loaded checkpoint %s (%d tensors)", path, len(checkpoint.model.registry))
    return checkpoint
