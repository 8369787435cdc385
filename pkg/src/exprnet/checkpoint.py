"""Bit-exact checkpoint serialization (EXPR1 format).

Layout: 5-byte magic "EXPR1", newline, then a UTF-8 text header:

    version 1
    meta <key> <value...>
    param <name> <dtype> <extent> <extent> ...

terminated by a blank line, followed by every parameter's payload
concatenated in header order, row-major, little-endian. Two saves of the
same state are byte-identical.
"""

from __future__ import annotations

import io
from typing import Optional

import numpy as np

MAGIC = b"EXPR1"
FORMAT_VERSION = 1
_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}

HEAD_PARAM_NAMES = ("head.weight", "head.bias")


class CheckpointError(ValueError):
    pass


class Checkpoint:
    """In-memory parameter table + payloads + string metadata."""

    def __init__(self, entries: list[tuple[str, np.ndarray]],
                 metadata: Optional[dict[str, str]] = None,
                 format_version: int = FORMAT_VERSION):
        names = [n for n, _ in entries]
        if len(names) != len(set(names)):
            raise CheckpointError("duplicate parameter names in checkpoint")
        self.entries = [(n, np.ascontiguousarray(a)) for n, a in entries]
        self.metadata = dict(metadata or {})
        self.format_version = format_version

    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    def tensors(self) -> dict[str, np.ndarray]:
        return dict(self.entries)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(b"\n")
        header = [f"version {self.format_version}"]
        for key in sorted(self.metadata):
            if any(c.isspace() for c in key):
                raise CheckpointError(f"metadata key {key!r} contains whitespace")
            value = self.metadata[key]
            if "\n" in value:
                raise CheckpointError(f"metadata value for {key!r} contains newline")
            header.append(f"meta {key} {value}")
        for name, arr in self.entries:
            if arr.dtype == np.float32:
                dt = "float32"
            elif arr.dtype == np.float64:
                dt = "float64"
            else:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for {name}")
            dims = " ".join(str(d) for d in arr.shape)
            header.append(f"param {name} {dt} {dims}".rstrip())
        buf.write(("\n".join(header) + "\n\n").encode("utf-8"))
        for _, arr in self.entries:
            buf.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
        return buf.getvalue()

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        if not blob.startswith(MAGIC + b"\n"):
            raise CheckpointError("not an EXPR1 checkpoint (bad magic)")
        sep = blob.find(b"\n\n", len(MAGIC) + 1)
        if sep < 0:
            raise CheckpointError("truncated checkpoint: header not terminated")
        header = blob[len(MAGIC) + 1:sep].decode("utf-8").splitlines()
        payload = blob[sep + 2:]
        version = None
        metadata: dict[str, str] = {}
        table: list[tuple[str, str, tuple[int, ...]]] = []
        for line in header:
            kind, _, rest = line.partition(" ")
            if kind == "version":
                version = int(rest)
            elif kind == "meta":
                key, _, value = rest.partition(" ")
                metadata[key] = value
            elif kind == "param":
                fields = rest.split(" ")
                name, dt = fields[0], fields[1]
                if dt not in _DTYPES:
                    raise CheckpointError(f"unknown dtype {dt!r} for {name}")
                shape = tuple(int(d) for d in fields[2:])
                table.append((name, dt, shape))
            else:
                raise CheckpointError(f"unknown header line {line!r}")
        if version is None:
            raise CheckpointError("missing version line")
        entries = []
        offset = 0
        for name, dt, shape in table:
            dtype = _DTYPES[dt]
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            nbytes = count * dtype.itemsize
            if offset + nbytes > len(payload):
                raise CheckpointError(f"truncated payload at parameter {name}")
            arr = np.frombuffer(payload[offset:offset + nbytes], dtype=dtype).reshape(shape)
            entries.append((name, arr.copy()))
            offset += nbytes
        if offset != len(payload):
            raise CheckpointError(f"{len(payload) - offset} trailing payload bytes")
        return cls(entries, metadata, version)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def save_checkpoint(model, path, metadata: Optional[dict[str, str]] = None):
    meta = {"created_by": "exprnet", "num_classes": str(model.config.num_classes)}
    meta.update(metadata or {})
    Checkpoint(model.state_entries(), meta).save(path)


def _state_targets(model):
    """name -> writable target (Parameter or buffer array)."""
    targets = {}
    for p in model.parameters():
        targets[p.name] = p
    for bn in model._bn_layers():
        for name, buf in bn.buffers():
            targets[name] = buf
    return targets


def load_checkpoint(model, path, head_policy: str = "strict", head_seed: int = 0) -> Checkpoint:
    """Load an EXPR1 file into a model.

    strict: every name/shape must match exactly. reinit_head: the trunk must
    match; the final linear layer is ignored in the file and freshly seeded
    (covers loading an 8-class pre-trained head into a 7-class model).
    """
    if head_policy not in ("strict", "reinit_head"):
        raise CheckpointError(f"unknown head policy {head_policy!r}")
    ckpt = Checkpoint.load(path)
    targets = _state_targets(model)
    loaded = ckpt.tensors()

    skip_head = head_policy == "reinit_head"
    model_names = {n for n in targets if not (skip_head and n in HEAD_PARAM_NAMES)}
    file_names = {n for n in loaded if not (skip_head and n in HEAD_PARAM_NAMES)}
    for name in sorted(model_names - file_names):
        raise CheckpointError(f"checkpoint missing parameter {name}")
    for name in sorted(file_names - model_names):
        raise CheckpointError(f"checkpoint has unexpected parameter {name}")
    for name in sorted(model_names):
        src = loaded[name]
        dst = targets[name]
        dst_arr = dst if isinstance(dst, np.ndarray) else dst.data
        if src.shape != dst_arr.shape:
            raise CheckpointError(
                f"shape mismatch for parameter {name}: checkpoint {src.shape}, model {dst_arr.shape}")
        dst_arr[...] = src.astype(dst_arr.dtype)
    if skip_head:
        model.reinit_head(head_seed)
    return ckpt
