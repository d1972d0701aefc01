"""Three-stage training schedule and inference for the neural receiver.

Stage 1 fits the channel-estimation network with a mean-squared error on
the complex channel coefficients.  Stage 2 freezes it, builds detection
inputs through pilot cancellation and per-RE LMMSE filtering, and trains
the demapping subnetworks with a binary cross-entropy on the transmitted
bits.  Stage 3 fine-tunes everything jointly with the weighted objective
ce_weight * L_CE + (1 - ce_weight) * L_SD.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .containers import write_tensors
from .data import DdstDataset
from .detection import LinkGeometry, cancel_and_detect
from .models import CeNet, CeNetHparams, DetectionSubnets, DetNetHparams

__all__ = ["TrainSchedule", "Trainer", "train", "infer", "complex_mse"]


@dataclass(frozen=True)
class TrainSchedule:
    stage1_epochs: int = 300
    stage2_epochs: int = 500
    stage3_epochs: int = 300
    lr_initial: float = 1e-3
    lr_finetune: float = 1e-4
    weight_decay: float = 1e-4
    ce_weight: float = 0.2  # joint-loss weighting toward channel estimation
    batch_size: int = 16

    def __post_init__(self):
        if not 0.0 < self.ce_weight < 1.0:
            raise ValueError("ce_weight must lie strictly between 0 and 1")

    @classmethod
    def desk_scale(cls, **over) -> "TrainSchedule":
        """Epochs reduced 10x for workstation-sized runs."""
        return cls(stage1_epochs=30, stage2_epochs=50, stage3_epochs=30, **over)


def complex_mse(estimate: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    diff = estimate - truth
    return (diff.real ** 2 + diff.imag ** 2).mean()


def hparams_for(geo: LinkGeometry, temporal_stage: bool = True) -> tuple[CeNetHparams, DetNetHparams]:
    ce = CeNetHparams(
        n_t=geo.n_t,
        n_symbols=geo.n_symbols,
        n_ddst_subcarriers=len(geo.ddst_subcarriers),
        n_interp=geo.interp_stages,
    )
    det = DetNetHparams(
        n_t=geo.n_t,
        n_symbols=geo.n_symbols,
        bits_per_symbol=geo.bits_per_symbol,
        temporal_stage=temporal_stage,
    )
    return ce, det


class NeuralReceiver(nn.Module):
    """Channel-estimation network plus detection subnets over one geometry."""

    def __init__(self, geo: LinkGeometry, ce_hp: CeNetHparams, det_hp: DetNetHparams):
        super().__init__()
        self.geo = geo
        self.ce = CeNet(ce_hp)
        self.det = DetectionSubnets(det_hp)

    def estimate_channel(self, patches: torch.Tensor) -> torch.Tensor:
        """(B*N_r, |K1|, 2N_t, T+P) patches -> (B, K, T, N_r, N_t) estimates."""
        est = self.ce(patches)  # (B*N_r, K, T, N_t)
        geo = self.geo
        est = est.reshape(-1, geo.n_r, geo.n_subcarriers, geo.n_symbols, geo.n_t)
        return est.permute(0, 2, 3, 1, 4)

    def llr_grid(
        self, rx: torch.Tensor, est: torch.Tensor, noise_var: torch.Tensor
    ) -> torch.Tensor:
        """Detection inputs then subnet demapping; output (B, N_t, K, T, Q)."""
        geo = self.geo
        u = cancel_and_detect(rx, est, noise_var, geo)  # (B, K, T, N_t)
        b = u.shape[0]
        q = self.det.hp.bits_per_symbol
        grid = u.new_zeros((b, geo.n_t, geo.n_subcarriers, geo.n_symbols, q), dtype=torch.float32)
        dd = torch.as_tensor(geo.ddst_subcarriers, device=u.device, dtype=torch.long)
        streams = u[:, dd].permute(0, 1, 3, 2).reshape(-1, geo.n_symbols)
        out1 = self.det.demap_superimposed(streams)
        out1 = out1.reshape(b, dd.numel(), geo.n_t, geo.n_symbols, q)
        grid[:, :, dd] = out1.permute(0, 2, 1, 3, 4)
        k2 = torch.as_tensor(geo.pure_data_subcarriers, device=u.device, dtype=torch.long)
        if k2.numel():
            maps = u[:, k2].permute(0, 1, 3, 2).reshape(-1, geo.n_t, geo.n_symbols)
            out2 = self.det.demap_pure(maps)
            out2 = out2.reshape(b, k2.numel(), geo.n_t, geo.n_symbols, q)
            grid[:, :, k2] = out2.permute(0, 2, 1, 3, 4)
        return grid


def _atomic_save(payload: dict, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)


class Trainer:
    def __init__(
        self,
        dataset: DdstDataset,
        schedule: TrainSchedule,
        out_dir: str | Path,
        temporal_stage: bool = True,
        device: str = "cpu",
        seed: int = 0,
    ):
        self.dataset = dataset
        self.schedule = schedule
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.device = torch.device(device)
        torch.manual_seed(seed)
        self.rng = np.random.default_rng(seed)
        self.geo = dataset.geometry
        ce_hp, det_hp = hparams_for(self.geo, temporal_stage)
        self.ce_hp, self.det_hp = ce_hp, det_hp
        self.model = NeuralReceiver(self.geo, ce_hp, det_hp).to(self.device)
        self.bce = nn.BCEWithLogitsLoss()
        self.log: list[dict] = []

    # ------------------------------------------------------------------
    def _batches(self):
        order = self.rng.permutation(len(self.dataset))
        bs = self.schedule.batch_size
        for start in range(0, len(order), bs):
            yield order[start: start + bs].tolist()

    def _ce_loss(self, indices) -> torch.Tensor:
        patches, targets = self.dataset.ce_batch(indices)
        est = self.model.ce(patches.to(self.device))
        return complex_mse(est, targets.to(self.device))

    def _sd_loss(self, indices, train_ce: bool) -> tuple[torch.Tensor, torch.Tensor]:
        patches, targets = self.dataset.ce_batch(indices)
        link = self.dataset.link_batch(indices)
        if train_ce:
            est_flat = self.model.ce(patches.to(self.device))
        else:
            with torch.no_grad():
                est_flat = self.model.ce(patches.to(self.device))
        geo = self.geo
        est = est_flat.reshape(-1, geo.n_r, geo.n_subcarriers, geo.n_symbols, geo.n_t)
        est = est.permute(0, 2, 3, 1, 4)
        llrs = self.model.llr_grid(
            link["rx"].to(self.device), est, link["noise_var"].to(self.device)
        )
        sd = self.bce(llrs, link["bits"].to(self.device))
        ce = complex_mse(est_flat, targets.to(self.device))
        return sd, ce

    def _run_stage(self, stage: int, epochs: int, optimizer, loss_fn) -> None:
        for epoch in range(epochs):
            t0 = time.time()
            total = 0.0
            count = 0
            for indices in self._batches():
                optimizer.zero_grad()
                loss = loss_fn(indices)
                loss.backward()
                optimizer.step()
                total += float(loss.detach())
                count += 1
            entry = {
                "stage": stage,
                "epoch": epoch,
                "loss": total / max(count, 1),
                "seconds": time.time() - t0,
            }
            self.log.append(entry)
        self._save()

    def stage1(self, epochs: int | None = None) -> None:
        opt = torch.optim.Adam(
            self.model.ce.parameters(),
            lr=self.schedule.lr_initial,
            weight_decay=self.schedule.weight_decay,
        )
        self._run_stage(1, epochs if epochs is not None else self.schedule.stage1_epochs,
                        opt, self._ce_loss)

    def stage2(self, epochs: int | None = None) -> None:
        for p in self.model.ce.parameters():
            p.requires_grad_(False)
        opt = torch.optim.Adam(self.model.det.parameters(), lr=self.schedule.lr_initial)

        def loss_fn(indices):
            sd, _ = self._sd_loss(indices, train_ce=False)
            return sd

        self._run_stage(2, epochs if epochs is not None else self.schedule.stage2_epochs,
                        opt, loss_fn)
        for p in self.model.ce.parameters():
            p.requires_grad_(True)

    def stage3(self, epochs: int | None = None) -> None:
        opt = torch.optim.Adam(self.model.parameters(), lr=self.schedule.lr_finetune)
        lam = self.schedule.ce_weight

        def loss_fn(indices):
            sd, ce = self._sd_loss(indices, train_ce=True)
            return lam * ce + (1.0 - lam) * sd

        self._run_stage(3, epochs if epochs is not None else self.schedule.stage3_epochs,
                        opt, loss_fn)

    def run(self, stages: str = "123") -> list[dict]:
        if "1" in stages:
            self.stage1()
        if "2" in stages:
            self.stage2()
        if "3" in stages:
            self.stage3()
        return self.log

    def _save(self) -> None:
        payload = {
            "ce_state": self.model.ce.state_dict(),
            "det_state": self.model.det.state_dict(),
            "ce_hparams": asdict(self.ce_hp),
            "det_hparams": asdict(self.det_hp),
            "geometry": asdict(self.geo),
            "config": self.dataset.config,
            "schedule": asdict(self.schedule),
        }
        _atomic_save(payload, self.out_dir / "receiver.pt")
        with open(self.out_dir / "training_log.jsonl", "w") as fh:
            for entry in self.log:
                fh.write(json.dumps(entry) + "\n")


def train(
    dataset_dir: str | Path,
    out_dir: str | Path,
    schedule: TrainSchedule,
    stages: str = "123",
    temporal_stage: bool = True,
    device: str = "cpu",
    seed: int = 0,
) -> list[dict]:
    dataset = DdstDataset(dataset_dir)
    trainer = Trainer(dataset, schedule, out_dir, temporal_stage, device, seed)
    return trainer.run(stages)


def load_receiver(checkpoint_dir: str | Path, device: str = "cpu") -> NeuralReceiver:
    payload = torch.load(Path(checkpoint_dir) / "receiver.pt", map_location=device, weights_only=False)
    geo = LinkGeometry(**payload["geometry"])
    model = NeuralReceiver(
        geo, CeNetHparams(**payload["ce_hparams"]), DetNetHparams(**payload["det_hparams"])
    )
    model.ce.load_state_dict(payload["ce_state"])
    model.det.load_state_dict(payload["det_state"])
    model.eval()
    return model.to(torch.device(device))


def infer(
    dataset_dir: str | Path,
    checkpoint_dir: str | Path,
    out_dir: str | Path,
    mode: str = "both",
    device: str = "cpu",
    batch_size: int = 8,
) -> Path:
    """Write channel estimates and/or LLR grids in the container format."""
    if mode not in ("estimates", "llrs", "both"):
        raise ValueError(f"unknown mode {mode!r}")
    dataset = DdstDataset(dataset_dir)
    model = load_receiver(checkpoint_dir, device)
    if asdict(model.geo) != asdict(dataset.geometry):
        raise ValueError("checkpoint geometry does not match the dataset plan")
    tensors: dict[str, np.ndarray] = {}
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            indices = list(range(start, min(start + batch_size, len(dataset))))
            patches, _ = dataset.ce_batch(indices)
            est = model.estimate_channel(patches.to(device))
            if mode in ("llrs", "both"):
                link = dataset.link_batch(indices)
                llrs = model.llr_grid(
                    link["rx"].to(device), est, link["noise_var"].to(device)
                ).cpu().numpy()
            est_np = est.cpu().numpy()
            for j, i in enumerate(indices):
                tag = f"s{i:06d}"
                if mode in ("estimates", "both"):
                    tensors[f"{tag}.channel_estimate"] = est_np[j].astype(np.complex64)
                if mode in ("llrs", "both"):
                    tensors[f"{tag}.llrs"] = llrs[j].astype(np.float32)
    out_dir = Path(out_dir)
    write_tensors(out_dir, tensors, meta={"source": "ddstnet", "mode": mode})
    return out_dir
