"""Single-file binary container used by every persisted pipeline artifact.

Layout: an 8-byte magic ``BIMFLOW1``, a length-prefixed UTF-8 JSON header,
then kind-specific records. Datasets store their sequences as compact
length-prefixed binary records (little-endian u32 ids, f32 features);
session streams store JSON records; checkpoints store a raw tensor blob
described by a manifest in the header. All integers are little-endian.
"""

from __future__ import annotations

import json
import struct
from typing import Any, BinaryIO

import numpy as np

from .types import (
    CommandMeta,
    Dataset,
    InteractionSequence,
    RawSession,
    Vocabulary,
)

MAGIC = b"BIMFLOW1"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Raised for structurally invalid container files."""


class VersionError(ContainerError):
    """Raised when a container was written by an incompatible format version."""


def _write_header(fh: BinaryIO, kind: str, header: dict[str, Any]) -> None:
    payload = dict(header)
    payload["kind"] = kind
    payload["format_version"] = FORMAT_VERSION
    blob = json.dumps(payload, ensure_ascii=False).encode("utf-8")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", len(blob)))
    fh.write(blob)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ContainerError("truncated container file")
    return data


def _read_header(fh: BinaryIO, expected_kind: str) -> dict[str, Any]:
    magic = fh.read(len(MAGIC))
    if magic != MAGIC:
        raise ContainerError(f"bad magic bytes: {magic!r}")
    (header_len,) = struct.unpack("<I", _read_exact(fh, 4))
    header = json.loads(_read_exact(fh, header_len).decode("utf-8"))
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"container format version {version} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    kind = header.get("kind")
    if kind != expected_kind:
        raise ContainerError(f"expected a {expected_kind!r} container, found {kind!r}")
    return header


# ---------------------------------------------------------------------------
# Session streams (intermediate artifacts between pipeline stages)
# ---------------------------------------------------------------------------


def write_sessions(sessions: list[RawSession], path: str, stage: str = "raw") -> None:
    with open(path, "wb") as fh:
        _write_header(fh, "sessions", {"stage": stage, "count": len(sessions)})
        fh.write(struct.pack("<I", len(sessions)))
        for session in sessions:
            blob = json.dumps(session.to_dict(), ensure_ascii=False).encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)


def read_sessions(path: str) -> list[RawSession]:
    with open(path, "rb") as fh:
        _read_header(fh, "sessions")
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        sessions = []
        for _ in range(count):
            (blob_len,) = struct.unpack("<I", _read_exact(fh, 4))
            data = json.loads(_read_exact(fh, blob_len).decode("utf-8"))
            sessions.append(RawSession.from_dict(data))
        return sessions


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

_SPLIT_CODES = {"train": 0, "validation": 1}
_SPLIT_NAMES = {v: k for k, v in _SPLIT_CODES.items()}


def _pack_sequence(seq: InteractionSequence) -> bytes:
    sid = seq.session_id.encode("utf-8")
    parts = [
        struct.pack("<H", len(sid)),
        sid,
        struct.pack("<B", _SPLIT_CODES[seq.split]),
        struct.pack("<I", len(seq.ids)),
        np.asarray(seq.ids, dtype="<u4").tobytes(),
        np.asarray(seq.dt, dtype="<f4").tobytes(),
        np.asarray(seq.occ, dtype="<f4").tobytes(),
    ]
    return b"".join(parts)


def _unpack_sequence(payload: bytes) -> InteractionSequence:
    offset = 0
    (sid_len,) = struct.unpack_from("<H", payload, offset)
    offset += 2
    sid = payload[offset : offset + sid_len].decode("utf-8")
    offset += sid_len
    (split_code,) = struct.unpack_from("<B", payload, offset)
    offset += 1
    (n,) = struct.unpack_from("<I", payload, offset)
    offset += 4
    ids = np.frombuffer(payload, dtype="<u4", count=n, offset=offset)
    offset += 4 * n
    dt = np.frombuffer(payload, dtype="<f4", count=n, offset=offset)
    offset += 4 * n
    occ = np.frombuffer(payload, dtype="<f4", count=n, offset=offset)
    return InteractionSequence(
        session_id=sid,
        ids=[int(i) for i in ids],
        dt=[float(v) for v in dt],
        occ=[int(v) for v in occ],
        split=_SPLIT_NAMES[split_code],
    )


def write_dataset(dataset: Dataset, path: str) -> None:
    header = {
        "vocabulary": dataset.vocabulary.to_dict(),
        "meta": {name: m.to_dict() for name, m in sorted(dataset.meta.items())},
        "type_labels": dataset.type_labels,
        "target_labels": dataset.target_labels,
        "norm_stats": dataset.norm_stats,
        "config": dataset.config,
        "counts": {
            "sequences": len(dataset.sequences),
            "train": sum(1 for s in dataset.sequences if s.split == "train"),
            "validation": sum(1 for s in dataset.sequences if s.split == "validation"),
            "vocabulary": len(dataset.vocabulary),
        },
    }
    with open(path, "wb") as fh:
        _write_header(fh, "dataset", header)
        fh.write(struct.pack("<I", len(dataset.sequences)))
        for seq in dataset.sequences:
            payload = _pack_sequence(seq)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)


def read_dataset(path: str) -> Dataset:
    with open(path, "rb") as fh:
        header = _read_header(fh, "dataset")
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        sequences = []
        for _ in range(count):
            (rec_len,) = struct.unpack("<I", _read_exact(fh, 4))
            sequences.append(_unpack_sequence(_read_exact(fh, rec_len)))
    dataset = Dataset(
        vocabulary=Vocabulary.from_dict(header["vocabulary"]),
        sequences=sequences,
        meta={name: CommandMeta.from_dict(d) for name, d in header.get("meta", {}).items()},
        type_labels=[str(t) for t in header.get("type_labels", [])],
        target_labels=[str(t) for t in header.get("target_labels", [])],
        norm_stats={k: float(v) for k, v in header.get("norm_stats", {}).items()},
        config=header.get("config", {}),
    )
    dataset.validate()
    return dataset


# ---------------------------------------------------------------------------
# Checkpoints (tensor blob + model/pipeline metadata)
# ---------------------------------------------------------------------------


def write_checkpoint(path: str, header: dict[str, Any], tensors: dict[str, np.ndarray]) -> None:
    """Persist named arrays plus metadata.

    The header gains a ``tensors`` manifest of name/shape/dtype/offset; the
    arrays follow as one concatenated little-endian blob.
    """
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        dtype = arr.dtype.newbyteorder("<")
        raw = arr.astype(dtype, copy=False).tobytes()
        manifest.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": str(arr.dtype.name),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    full_header = dict(header)
    full_header["tensors"] = manifest
    with open(path, "wb") as fh:
        _write_header(fh, "checkpoint", full_header)
        blob = b"".join(blobs)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)


def read_checkpoint(path: str) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        header = _read_header(fh, "checkpoint")
        (blob_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        blob = _read_exact(fh, blob_len)
    tensors: dict[str, np.ndarray] = {}
    for item in header.get("tensors", []):
        dtype = np.dtype(item["dtype"]).newbyteorder("<")
        arr = np.frombuffer(
            blob, dtype=dtype, count=int(np.prod(item["shape"], dtype=np.int64)),
            offset=item["offset"],
        )
        tensors[item["name"]] = arr.reshape(item["shape"]).astype(item["dtype"])
    return header, tensors
