"""Binary checkpoint container.

Layout (all integers little-endian)::

    0      8 bytes   magic b"GRADFILL"
    8      uint32    format version (currently 1)
    12     uint64    header length L
    20     L bytes   UTF-8 JSON header: {"config", "vocab", "meta", "arrays"}
    20+L   payload   raw array bytes in header order; each entry of "arrays"
                     gives name, dtype (always "<f8"), shape, offset (relative
                     to the payload start) and nbytes
    end    uint32    CRC-32 of every preceding byte
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .corpus import Vocab
from .seq2seq import ModelConfig, Seq2Seq

MAGIC = b"GRADFILL"
VERSION = 1
_DTYPE = "<f8"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: Seq2Seq, path: str | Path, meta: dict | None = None) -> None:
    arrays, chunks, offset = [], [], 0
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype=_DTYPE)
        raw = arr.tobytes()
        arrays.append({"name": name, "dtype": _DTYPE, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "config": model.cfg.to_dict(),
        "vocab": model.vocab.itos if model.vocab is not None else None,
        "meta": meta or {},
        "arrays": arrays,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<IQ", VERSION, len(hbytes)) + hbytes + b"".join(chunks)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if len(blob) < 24 or blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a gradfill checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<IQ", blob, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    if 20 + hlen + 4 > len(blob):
        raise CheckpointError(f"{path}: truncated header")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != crc:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupted)")
    header = json.loads(blob[20 : 20 + hlen].decode("utf-8"))
    payload = blob[20 + hlen : -4]
    params = {}
    for a in header["arrays"]:
        end = a["offset"] + a["nbytes"]
        if a["dtype"] != _DTYPE or end > len(payload):
            raise CheckpointError(f"{path}: bad array entry {a['name']}")
        arr = np.frombuffer(payload[a["offset"] : end], dtype=_DTYPE).reshape(a["shape"])
        params[a["name"]] = arr.astype(np.float64)  # native, writable copy
    return header, params


def load_checkpoint(path: str | Path) -> Seq2Seq:
    header, params = read_checkpoint(path)
    cfg = ModelConfig(**header["config"])
    vocab = Vocab(header["vocab"]) if header.get("vocab") else None
    return Seq2Seq(cfg, params, vocab=vocab)


def checkpoint_meta(path: str | Path) -> dict:
    return read_checkpoint(path)[0].get("meta", {})
