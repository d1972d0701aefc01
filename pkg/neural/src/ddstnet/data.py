"""Dataset access over exported container directories."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .containers import DTYPES
from .detection import LinkGeometry
from .features import preprocess_features

__all__ = ["DdstDataset"]


class _ContainerIndex:
    """Zero-copy view access into a container's payload via memmap."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        manifest = json.loads((self.directory / "manifest.json").read_text())
        self.meta = manifest.get("meta", {})
        self._entries = {e["name"]: e for e in manifest["tensors"]}
        self._payloads: dict[str, np.memmap] = {}

    def get(self, name: str) -> np.ndarray:
        entry = self._entries[name]
        fname = entry["file"]
        if fname not in self._payloads:
            self._payloads[fname] = np.memmap(self.directory / fname, dtype=np.uint8, mode="r")
        dtype = DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        return np.frombuffer(
            self._payloads[fname], dtype=dtype, count=count, offset=entry["byte_offset"]
        ).reshape(shape)


class DdstDataset:
    """Per-sample access to exported link tensors plus derived CE inputs."""

    def __init__(self, directory: str | Path):
        self.index = _ContainerIndex(directory)
        self.meta = self.index.meta
        self.config = self.meta["config"]
        self.geometry = LinkGeometry.from_config(self.config)
        self.n_samples = int(self.meta["n_samples"])

    def __len__(self) -> int:
        return self.n_samples

    def sample(self, i: int) -> dict[str, np.ndarray]:
        tag = f"s{i:06d}"
        return {
            "rx": self.index.get(f"{tag}.rx_grid"),
            "ls": self.index.get(f"{tag}.ls_per_re"),
            "despread": self.index.get(f"{tag}.despread"),
            "channel": self.index.get(f"{tag}.channel"),
            "bits": self.index.get(f"{tag}.bit_grid"),
            "noise_var": float(self.index.get(f"{tag}.noise_var").reshape(-1)[0]),
        }

    def ce_batch(self, indices) -> tuple[torch.Tensor, torch.Tensor]:
        """Patches and channel targets batched over (sample, receive antenna).

        Returns (patches (B*N_r, |K1|, 2N_t, T+P) float32,
                 targets (B*N_r, K, T, N_t) complex64).
        """
        patch_list, target_list = [], []
        for i in indices:
            s = self.sample(i)
            patch_list.append(preprocess_features(s["ls"], s["despread"]))
            target_list.append(np.transpose(s["channel"], (2, 0, 1, 3)))  # (N_r, K, T, N_t)
        patches = np.concatenate(patch_list, axis=0)
        targets = np.concatenate(target_list, axis=0)
        return torch.from_numpy(patches), torch.from_numpy(targets.astype(np.complex64))

    def link_batch(self, indices) -> dict[str, torch.Tensor]:
        """Everything the detection stage needs, batched over samples."""
        rx, channel, bits, noise = [], [], [], []
        for i in indices:
            s = self.sample(i)
            rx.append(s["rx"])
            channel.append(s["channel"])
            bits.append(s["bits"])
            noise.append(s["noise_var"])
        return {
            "rx": torch.from_numpy(np.stack(rx).astype(np.complex64)),
            "channel": torch.from_numpy(np.stack(channel).astype(np.complex64)),
            "bits": torch.from_numpy(np.stack(bits).astype(np.float32)),
            "noise_var": torch.tensor(noise, dtype=torch.float32),
        }
