"""Reader/writer for the simulator's tensor-container directories.

Independent implementation of the documented exchange format: a directory
with ``manifest.json`` listing ``{name, dtype, shape, file, byte_offset}``
entries (dtype ``f32`` or ``c64``, little-endian, row-major; complex as
interleaved re/im float32) plus raw payload files, with free-form metadata
under the manifest's ``meta`` key.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

DTYPES = {"f32": np.dtype("<f4"), "c64": np.dtype("<c8")}


def read_meta(directory: str | Path) -> dict:
    manifest = json.loads((Path(directory) / "manifest.json").read_text())
    return manifest.get("meta", {})


def read_tensors(directory: str | Path, prefix: str | None = None) -> dict[str, np.ndarray]:
    """Load tensors, optionally restricted to names starting with `prefix`."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    payloads: dict[str, np.memmap] = {}
    out = {}
    for entry in manifest["tensors"]:
        name = entry["name"]
        if prefix is not None and not name.startswith(prefix):
            continue
        dtype = DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        fname = entry["file"]
        if fname not in payloads:
            payloads[fname] = np.memmap(directory / fname, dtype=np.uint8, mode="r")
        start = entry["byte_offset"]
        raw = bytes(payloads[fname][start: start + count * dtype.itemsize])
        out[name] = np.frombuffer(raw, dtype=dtype).reshape(shape)
    if not out:
        raise KeyError(f"no tensors matching prefix {prefix!r} in {directory}")
    return out


def write_tensors(directory: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(directory / "data.bin", "wb") as payload:
        for name, array in tensors.items():
            tag = "c64" if np.iscomplexobj(array) else "f32"
            data = np.asarray(array, dtype=DTYPES[tag], order="C")
            raw = data.tobytes()
            entries.append(
                {
                    "name": name,
                    "dtype": tag,
                    "shape": list(data.shape),
                    "file": "data.bin",
                    "byte_offset": offset,
                }
            )
            payload.write(raw)
            offset += len(raw)
    manifest = {"meta": meta or {}, "tensors": entries}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))
