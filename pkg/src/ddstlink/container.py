"""Directory-backed tensor container for cross-component data exchange.

A container is a directory holding ``manifest.json`` plus one or more raw
payload files.  The manifest lists ``{name, dtype, shape, file, byte_offset}``
per tensor with dtype restricted to ``f32`` (little-endian float32) and
``c64`` (complex64, interleaved re/im float32 pairs), stored row-major.
Non-tensor metadata lives under the manifest's ``meta`` key.  Round trips
are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["write_container", "read_container", "container_meta", "ContainerWriter"]

MANIFEST_NAME = "manifest.json"
PAYLOAD_NAME = "data.bin"

_DTYPES = {"f32": np.dtype("<f4"), "c64": np.dtype("<c8")}


def _dtype_tag(array: np.ndarray) -> str:
    if np.iscomplexobj(array):
        return "c64"
    return "f32"


class ContainerWriter:
    """Streams named tensors into one payload file plus a manifest."""

    def __init__(self, directory: str | Path, meta: dict | None = None):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.meta = meta or {}
        self._entries: list[dict] = []
        self._payload = open(self.directory / PAYLOAD_NAME, "wb")
        self._offset = 0

    def add(self, name: str, array: np.ndarray) -> None:
        tag = _dtype_tag(np.asarray(array))
        data = np.asarray(array, dtype=_DTYPES[tag], order="C")
        if not np.all(np.isfinite(data.view(np.float32) if tag == "c64" else data)):
            raise ValueError(f"tensor {name!r} contains non-finite values")
        raw = data.tobytes()
        self._entries.append(
            {
                "name": name,
                "dtype": tag,
                "shape": list(data.shape),
                "file": PAYLOAD_NAME,
                "byte_offset": self._offset,
            }
        )
        self._payload.write(raw)
        self._offset += len(raw)

    def close(self) -> None:
        self._payload.close()
        manifest = {"meta": self.meta, "tensors": self._entries}
        with open(self.directory / MANIFEST_NAME, "w") as fh:
            json.dump(manifest, fh, indent=1)

    def __enter__(self) -> "ContainerWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_container(directory: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    with ContainerWriter(directory, meta) as writer:
        for name, array in tensors.items():
            writer.add(name, array)


def _load_manifest(directory: Path) -> dict:
    path = directory / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    return json.loads(path.read_text())


def container_meta(directory: str | Path) -> dict:
    return _load_manifest(Path(directory)).get("meta", {})


def read_container(
    directory: str | Path,
    names: list[str] | None = None,
    mmap: bool = True,
) -> dict[str, np.ndarray]:
    """Load tensors by name (all when `names` is None), validating sizes."""
    directory = Path(directory)
    manifest = _load_manifest(directory)
    wanted = None if names is None else set(names)
    out: dict[str, np.ndarray] = {}
    buffers: dict[str, np.memmap | bytes] = {}
    for entry in manifest["tensors"]:
        name = entry["name"]
        if wanted is not None and name not in wanted:
            continue
        dtype = _DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        fname = entry["file"]
        if fname not in buffers:
            path = directory / fname
            buffers[fname] = np.memmap(path, dtype=np.uint8, mode="r") if mmap else path.read_bytes()
        buf = buffers[fname]
        end = entry["byte_offset"] + nbytes
        if end > len(buf):
            raise ValueError(
                f"tensor {name!r}: payload file {fname} too short "
                f"({end} bytes needed, {len(buf)} present)"
            )
        flat = np.frombuffer(bytes(buf[entry["byte_offset"]: end]), dtype=dtype)
        out[name] = flat.reshape(shape)
    if wanted is not None:
        missing = wanted - out.keys()
        if missing:
            raise KeyError(f"container is missing tensors: {sorted(missing)}")
    return out
