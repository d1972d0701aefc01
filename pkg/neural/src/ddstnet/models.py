"""Network architectures: attention-based channel estimation and CNN-LSTM detection.

The channel-estimation network processes each superimposed subcarrier
independently through a Transformer encoder over 2*N_t per-antenna
real/imag patches, then fuses the per-subcarrier embeddings with a
convolutional decoder that interpolates along frequency (nearest-neighbor
x2 per module) and projects onto the frame's time axis.  Weights are
shared across receive antennas; the batch dimension carries (sample,
receive antenna) pairs.

Detection uses two subnetworks: one for superimposed REs, whose input is
reshaped to (blocks x cycle) to expose the perturbation periodicity before
a CNN stack and an LSTM over time, and one for pure-data REs operating on
(streams x time) maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

__all__ = ["CeNetHparams", "DetNetHparams", "CeNet", "DetectionSubnets", "count_parameters"]


@dataclass(frozen=True)
class CeNetHparams:
    n_t: int = 4
    n_symbols: int = 28
    n_ddst_subcarriers: int = 18
    d_model: int = 128
    n_blocks: int = 2
    n_heads: int = 4
    decoder_channels: int = 16
    decoder_kernel: int = 5
    n_interp: int = 2  # frequency upsampling stages; 2^n_interp * |K1| = K

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by the head count")

    @property
    def n_patches(self) -> int:
        return 2 * self.n_t

    @property
    def patch_len(self) -> int:
        # per-antenna observation: T per-RE values plus T/n_t despread values
        return self.n_symbols + self.n_symbols // self.n_t

    @property
    def n_subcarriers_out(self) -> int:
        return self.n_ddst_subcarriers * (2 ** self.n_interp)


@dataclass(frozen=True)
class DetNetHparams:
    n_t: int = 4
    n_symbols: int = 28
    bits_per_symbol: int = 4
    channels: int = 32  # C1
    kernel_in: int = 4  # F1
    kernel_res: int = 3  # F2
    lstm_head: int = 16  # cells of the third recurrent layer
    temporal_stage: bool = True  # keep the LSTM stack in the pure-data subnet

    @property
    def cycle(self) -> int:
        return self.n_t

    @property
    def blocks(self) -> int:
        return self.n_symbols // self.n_t


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.query = nn.Linear(d_model, d_model)
        self.key = nn.Linear(d_model, d_model)
        self.value = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)

    def attention_weights(self, x: torch.Tensor) -> torch.Tensor:
        """Softmax score matrix per head, shape (B, H, tokens, tokens)."""
        b, n, _ = x.shape
        q = self.query(x).view(b, n, self.n_heads, self.head_dim).transpose(1, 2)
        k = self.key(x).view(b, n, self.n_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / (self.head_dim ** 0.5)
        return torch.softmax(scores, dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        weights = self.attention_weights(x)
        v = self.value(x).view(b, n, self.n_heads, self.head_dim).transpose(1, 2)
        mixed = (weights @ v).transpose(1, 2).reshape(b, n, -1)
        return self.out(mixed)


class EncoderBlock(nn.Module):
    """Pre-norm Transformer block: MSA and a GELU feed-forward, both residual."""

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = MultiHeadSelfAttention(d_model, n_heads)
        self.norm2 = nn.LayerNorm(d_model)
        self.ffn = nn.Sequential(
            nn.Linear(d_model, 2 * d_model), nn.GELU(), nn.Linear(2 * d_model, d_model)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.ffn(self.norm2(x))


class ResidualConvBlock(nn.Module):
    """Two same-size convolutions with an inner rectification and a skip."""

    def __init__(self, channels: int, kernel: int, batch_norm: bool):
        super().__init__()
        pad = kernel // 2
        layers1: list[nn.Module] = [nn.Conv2d(channels, channels, kernel, padding=pad)]
        layers2: list[nn.Module] = [nn.Conv2d(channels, channels, kernel, padding=pad)]
        if batch_norm:
            layers1.append(nn.BatchNorm2d(channels))
            layers2.append(nn.BatchNorm2d(channels))
        self.conv1 = nn.Sequential(*layers1)
        self.conv2 = nn.Sequential(*layers2)
        self.act = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(self.act(self.conv1(x)))


class CeNet(nn.Module):
    """Channel estimation: patch encoder per subcarrier, frequency-interpolating decoder.

    forward input: (batch, |K1|, 2 N_t, T + P) real patches.
    forward output: (batch, K, T, N_t) complex64 channel estimates.
    """

    def __init__(self, hp: CeNetHparams):
        super().__init__()
        self.hp = hp
        self.embed = nn.Linear(hp.patch_len, hp.d_model)
        self.pos = nn.Parameter(torch.zeros(hp.n_patches, hp.d_model))
        self.blocks = nn.ModuleList(
            [EncoderBlock(hp.d_model, hp.n_heads) for _ in range(hp.n_blocks)]
        )
        pad = hp.decoder_kernel // 2
        self.dec_in = nn.Conv2d(hp.n_patches, hp.decoder_channels, hp.decoder_kernel, padding=pad)
        self.interp = nn.ModuleList(
            [
                ResidualConvBlock(hp.decoder_channels, hp.decoder_kernel, batch_norm=False)
                for _ in range(hp.n_interp)
            ]
        )
        self.time_proj = nn.Linear(hp.d_model, hp.n_symbols)
        self.dec_out = nn.Conv2d(hp.decoder_channels, hp.n_patches, hp.decoder_kernel, padding=pad)

    def encode(self, patches: torch.Tensor) -> torch.Tensor:
        """(B, K1, 2N_t, T+P) -> per-subcarrier embeddings (B, K1, 2N_t, d_model)."""
        b, k1, n_p, plen = patches.shape
        tokens = self.embed(patches.reshape(b * k1, n_p, plen)) + self.pos
        for block in self.blocks:
            tokens = block(tokens)
        return tokens.reshape(b, k1, n_p, -1)

    def decode(self, embeddings: torch.Tensor) -> torch.Tensor:
        """(B, K1, 2N_t, d_model) -> (B, 2N_t, K, T)."""
        feats = embeddings.permute(0, 2, 1, 3)  # channels = patches, freq, embedding
        feats = self.dec_in(feats)
        for block in self.interp:
            feats = nn.functional.interpolate(feats, scale_factor=(2, 1), mode="nearest")
            feats = block(feats)
        feats = self.time_proj(feats)  # embedding axis -> time axis
        return self.dec_out(feats)

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        maps = self.decode(self.encode(patches))  # (B, 2N_t, K, T)
        n_t = self.hp.n_t
        real = maps[:, :n_t].permute(0, 2, 3, 1)
        imag = maps[:, n_t:].permute(0, 2, 3, 1)
        return torch.complex(real, imag)


class _CnnLstmStream(nn.Module):
    """Shared CNN front end plus the four-layer recurrent head over time."""

    def __init__(self, hp: DetNetHparams):
        super().__init__()
        c1, f1, f2 = hp.channels, hp.kernel_in, hp.kernel_res
        self.conv_in = nn.Conv2d(2, c1, f1, padding="same")
        self.res1 = ResidualConvBlock(c1, f2, batch_norm=True)
        self.res2 = ResidualConvBlock(c1, f2, batch_norm=True)
        self.conv_mid = nn.Conv2d(c1, c1, f1, padding="same")
        self.lstm_body = nn.LSTM(c1, c1, num_layers=2, batch_first=True)
        self.lstm_head = nn.LSTM(c1, hp.lstm_head, batch_first=True)
        self.proj = nn.Linear(hp.lstm_head, hp.bits_per_symbol)

    def forward(self, maps: torch.Tensor) -> torch.Tensor:
        """(B, 2, rows, cols) with rows*cols = T -> (B, T, Q)."""
        b = maps.shape[0]
        feats = self.conv_mid(self.res2(self.res1(self.conv_in(maps))))
        seq = feats.permute(0, 2, 3, 1).reshape(b, -1, feats.shape[1])  # (B, T, C1)
        seq, _ = self.lstm_body(seq)
        seq, _ = self.lstm_head(seq)
        return self.proj(seq)


class DetectionSubnets(nn.Module):
    """Bit-level demapping heads for superimposed and pure-data REs."""

    def __init__(self, hp: DetNetHparams):
        super().__init__()
        self.hp = hp
        self.subnet1 = _CnnLstmStream(hp)
        if hp.temporal_stage:
            self.subnet2 = _CnnLstmStream(hp)
        else:
            c1, f1, f2 = hp.channels, hp.kernel_in, hp.kernel_res
            self.subnet2 = nn.Sequential(
                nn.Conv2d(2, c1, f1, padding="same"),
                ResidualConvBlock(c1, f2, batch_norm=True),
                ResidualConvBlock(c1, f2, batch_norm=True),
                nn.Conv2d(c1, hp.bits_per_symbol, f1, padding="same"),
            )

    def demap_superimposed(self, streams: torch.Tensor) -> torch.Tensor:
        """(B, T) complex stream estimates -> (B, T, Q) LLRs.

        Streams are reshaped to (blocks, cycle) feature maps so the
        convolution sees the perturbation's cyclic similarity.
        """
        hp = self.hp
        maps = torch.stack([streams.real, streams.imag], dim=1).float()
        maps = maps.reshape(-1, 2, hp.blocks, hp.cycle)
        return self.subnet1(maps)

    def demap_pure(self, re_grid: torch.Tensor) -> torch.Tensor:
        """(B, N_t, T) complex detection outputs -> (B, N_t, T, Q) LLRs."""
        hp = self.hp
        maps = torch.stack([re_grid.real, re_grid.imag], dim=1).float()
        if hp.temporal_stage:
            b = maps.shape[0]
            rows = maps.permute(0, 2, 1, 3).reshape(b * hp.n_t, 2, 1, hp.n_symbols)
            rows = rows.reshape(b * hp.n_t, 2, hp.blocks, hp.cycle)
            out = self.subnet2(rows)
            return out.reshape(b, hp.n_t, hp.n_symbols, hp.bits_per_symbol)
        out = self.subnet2(maps)  # (B, Q, N_t, T)
        return out.permute(0, 2, 3, 1)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
