"""Named parameter blocks and exact-round-trip checkpoints.

A checkpoint is a single file: one JSON header line (format tag, version,
arbitrary metadata, and a tensor directory with shapes/offsets) followed by
the raw little-endian float64 blob of all blocks in directory order. Writing
is deterministic and reading restores bit-identical values.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

__all__ = ["ParamStore", "CheckpointError", "init_uniform"]

FORMAT_TAG = "corefine-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


class ParamStore:
    """Mutable mapping of name -> float64 array (C-contiguous)."""

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        self._arrays: dict[str, np.ndarray] = {}
        if arrays:
            for name, arr in arrays.items():
                self[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value) -> None:
        self._arrays[name] = np.ascontiguousarray(np.asarray(value, dtype=np.float64))

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self) -> list[str]:
        return sorted(self._arrays)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in self.names():
            yield name, self._arrays[name]

    def num_values(self) -> int:
        return sum(a.size for a in self._arrays.values())

    def clone(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self._arrays.items()})

    def save(self, path, meta: dict | None = None) -> None:
        """Write header + float64 blob; value-exact and byte-deterministic."""
        entries = []
        offset = 0
        for name, arr in self.items():
            entries.append(
                {"name": name, "shape": list(arr.shape), "offset": offset, "count": arr.size}
            )
            offset += arr.size
        header = {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "meta": meta or {},
            "tensors": entries,
        }
        blob = b"".join(arr.astype("<f8").tobytes() for _, arr in self.items())
        with open(path, "wb") as f:
            f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
            f.write(b"\n")
            f.write(blob)

    @classmethod
    def load(cls, path) -> tuple["ParamStore", dict]:
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"checkpoint not found: {path}")
        with open(path, "rb") as f:
            header_line = f.readline()
            blob = f.read()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"unreadable checkpoint header in {path}: {e}") from e
        if header.get("format") != FORMAT_TAG:
            raise CheckpointError(f"{path} is not a {FORMAT_TAG} file")
        if header.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
        flat = np.frombuffer(blob, dtype="<f8")
        store = cls()
        for entry in header["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            start, count = entry["offset"], entry["count"]
            if start + count > flat.size:
                raise CheckpointError(f"checkpoint blob truncated at tensor {name!r}")
            store[name] = flat[start : start + count].reshape(shape)
        return store, header.get("meta", {})


def init_uniform(
    shapes: Mapping[str, tuple[int, ...]], rng: np.random.Generator, scale: float = 0.1
) -> ParamStore:
    """Seeded uniform init in [-scale, scale], in sorted name order."""
    store = ParamStore()
    for name in sorted(shapes):
        store[name] = rng.uniform(-scale, scale, size=shapes[name])
    return store
