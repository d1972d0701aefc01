"""Link geometry and the model-based detection front end, in torch.

Detection inputs for the subnetworks follow the mix-frame receiver: the
estimated pilot contribution is subtracted on superimposed subcarriers,
then a regularized LMMSE filter built from the (scaled) channel estimate
produces per-RE stream estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

__all__ = ["LinkGeometry", "pilot_matrix", "cancel_and_detect"]

_BITS_PER_SYMBOL = {"qpsk": 2, "16qam": 4}


@dataclass(frozen=True)
class LinkGeometry:
    """Frame constants shared by training and inference, from dataset metadata."""

    n_t: int
    n_r: int
    n_subcarriers: int
    n_symbols: int
    rho: float
    ddst_subcarriers: tuple[int, ...]
    bits_per_symbol: int

    @classmethod
    def from_config(cls, config: dict) -> "LinkGeometry":
        ch = config["channel"]
        n_t = int(ch.get("n_t", 4))
        k = int(ch.get("subcarriers", 72))
        ratio = float(config.get("ddst_ratio", 1.0))
        if config.get("scheme", "fullddst") == "fullddst":
            ratio = 1.0
        subs = config.get("ddst_subcarriers")
        if subs is None:
            stride = int(round(1.0 / ratio))
            subs = tuple(range(0, k, stride))
        return cls(
            n_t=n_t,
            n_r=int(ch.get("n_r", 16)),
            n_subcarriers=k,
            n_symbols=int(ch.get("symbols", 28)),
            rho=float(config.get("rho", 0.3)),
            ddst_subcarriers=tuple(int(s) for s in subs),
            bits_per_symbol=_BITS_PER_SYMBOL[config.get("modulation", "16qam")],
        )

    @property
    def cycle_blocks(self) -> int:
        return self.n_symbols // self.n_t

    @property
    def alpha(self) -> float:
        return float(np.sqrt((1.0 - self.rho) / (1.0 - 1.0 / self.cycle_blocks)))

    @property
    def pure_data_subcarriers(self) -> tuple[int, ...]:
        dd = set(self.ddst_subcarriers)
        return tuple(k for k in range(self.n_subcarriers) if k not in dd)

    @property
    def interp_stages(self) -> int:
        """Frequency upsampling stages needed to reach the full band."""
        factor = self.n_subcarriers / len(self.ddst_subcarriers)
        n = int(round(np.log2(factor)))
        if 2 ** n * len(self.ddst_subcarriers) != self.n_subcarriers:
            raise ValueError(
                f"subcarrier count {self.n_subcarriers} is not a power-of-two "
                f"multiple of the {len(self.ddst_subcarriers)} superimposed ones"
            )
        return n


def pilot_matrix(n_t: int, n_symbols: int, device=None) -> torch.Tensor:
    """Cyclic unit-modulus training rows, complex64 (n_t, T)."""
    n = torch.arange(1, n_t + 1, dtype=torch.float64, device=device)[:, None]
    t = torch.arange(n_symbols, dtype=torch.float64, device=device)[None, :]
    return torch.exp(2j * torch.pi * n * t / n_t).to(torch.complex64)


def cancel_and_detect(
    rx: torch.Tensor,
    est: torch.Tensor,
    sigma_w2: torch.Tensor,
    geo: LinkGeometry,
) -> torch.Tensor:
    """Pilot cancellation and per-RE LMMSE detection.

    rx: (B, K, T, N_r) complex; est: (B, K, T, N_r, N_t) complex;
    sigma_w2: (B,) noise variances.  Returns (B, K, T, N_t) complex.
    """
    pilots = pilot_matrix(geo.n_t, geo.n_symbols, device=rx.device)
    dd = torch.as_tensor(geo.ddst_subcarriers, device=rx.device, dtype=torch.long)
    z = rx.clone()
    pilot_rx = torch.einsum("bktmn,nt->bktm", est[:, dd], pilots)
    z[:, dd] = z[:, dd] - np.sqrt(geo.rho) * pilot_rx

    h_eff = est.clone()
    h_eff[:, dd] = geo.alpha * h_eff[:, dd]
    gram = torch.einsum("xktma,xktmc->xktac", h_eff.conj(), h_eff)
    eye = torch.eye(geo.n_t, dtype=gram.dtype, device=rx.device)
    reg = sigma_w2.to(gram.real.dtype)[:, None, None, None, None]
    a_mat = gram + reg * eye
    rhs = torch.einsum("bktma,bktm->bkta", h_eff.conj(), z)
    return torch.linalg.solve(a_mat, rhs.unsqueeze(-1)).squeeze(-1)
