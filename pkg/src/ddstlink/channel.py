"""Time-varying frequency-selective MIMO channel, synthesized per RE.

The fading model is a tapped delay line: each tap carries an independent
sum-of-sinusoids process per antenna pair whose ensemble temporal
autocorrelation is the Jakes spectrum J0(2 pi f_D dt).  The frequency
response is evaluated directly per subcarrier, so the per-RE channel is
multiplicative by construction (no cyclic prefix or ISI modeling).

Conventions: transmit symbols have unit average power per antenna and
SNR(dB) = -10 log10(noise variance); the OFDM symbol period is
1/subcarrier_spacing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import RngStream, complex_gaussian, sample_covariance

__all__ = [
    "ChannelConfig",
    "ChannelRealization",
    "TDL_C_DELAYS",
    "TDL_C_POWERS_DB",
    "tdl_c_profile",
    "generate_channel",
    "generate_channel_batch",
    "apply_channel",
    "estimate_spatial_covariance",
    "nmse",
    "frequency_correlation",
    "time_correlation",
]

SPEED_OF_LIGHT = 299_792_458.0
SINUSOIDS_PER_TAP = 32

# 3GPP TR 38.901 Table 7.7.2-3 (TDL-C, NLOS): normalized delays and powers.
TDL_C_DELAYS = np.array(
    [0.0000, 0.2099, 0.2219, 0.2329, 0.2176, 0.6366, 0.6448, 0.6560,
     0.6584, 0.7935, 0.8213, 0.9336, 1.2285, 1.3083, 2.1704, 2.7105,
     4.2589, 4.6003, 5.4902, 5.6077, 6.3065, 6.6374, 7.0427, 8.6523]
)
TDL_C_POWERS_DB = np.array(
    [-4.4, -1.2, -3.5, -5.2, -2.5, 0.0, -2.2, -3.9,
     -7.4, -7.1, -10.7, -11.1, -5.1, -6.8, -8.7, -13.2,
     -13.9, -13.9, -15.8, -17.1, -16.0, -15.7, -21.6, -22.8]
)


def tdl_c_profile(delay_spread_s: float) -> list[tuple[float, float]]:
    """TDL-C tap list scaled to the given delay spread, powers summing to 1."""
    powers = 10.0 ** (TDL_C_POWERS_DB / 10.0)
    powers = powers / powers.sum()
    delays = TDL_C_DELAYS * delay_spread_s
    return [(float(d), float(p)) for d, p in zip(delays, powers)]


@dataclass(frozen=True)
class ChannelConfig:
    n_t: int = 4
    n_r: int = 16
    n_subcarriers: int = 72
    n_symbols: int = 28
    subcarrier_spacing_hz: float = 30e3
    carrier_frequency_hz: float = 2e9
    delay_spread_s: float = 363e-9
    ue_speed_mps: float = 0.0
    pdp: tuple[tuple[float, float], ...] = ()  # (delay s, linear power); empty -> TDL-C
    spatial_correlation: tuple[np.ndarray, np.ndarray] | None = None  # (R_tx, R_rx)

    def __post_init__(self):
        if min(self.n_t, self.n_r, self.n_subcarriers, self.n_symbols) < 1:
            raise ValueError("antenna and grid dimensions must be positive")
        if self.delay_spread_s <= 0 or self.ue_speed_mps < 0:
            raise ValueError("delay spread must be positive, speed non-negative")
        if not self.pdp:
            object.__setattr__(self, "pdp", tuple(tdl_c_profile(self.delay_spread_s)))
        total = sum(p for _, p in self.pdp)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"tap powers must sum to 1, got {total}")

    @property
    def doppler_hz(self) -> float:
        return self.ue_speed_mps * self.carrier_frequency_hz / SPEED_OF_LIGHT

    @property
    def symbol_period_s(self) -> float:
        return 1.0 / self.subcarrier_spacing_hz

    def tap_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        delays = np.array([d for d, _ in self.pdp])
        powers = np.array([p for _, p in self.pdp])
        return delays, powers


@dataclass(frozen=True)
class ChannelRealization:
    """Per-RE MIMO coefficients, shape (K, T, N_r, N_t)."""

    coefficients: np.ndarray
    config: ChannelConfig
    seed: tuple[int, int]  # (seed, stream) of the generating RngStream


def _subcarrier_phase_matrix(cfg: ChannelConfig) -> np.ndarray:
    """(L, K) frequency-domain tap phases exp(-j 2 pi k df tau_l)."""
    delays, _ = cfg.tap_arrays()
    k = np.arange(cfg.n_subcarriers)
    return np.exp(-2j * np.pi * np.outer(delays, k * cfg.subcarrier_spacing_hz))


def _tap_gains(cfg: ChannelConfig, gen: np.random.Generator, batch: int) -> np.ndarray:
    """Sum-of-sinusoids tap processes, shape (batch, T, L, N_r, N_t).

    Each (tap, rx, tx) pair sums SINUSOIDS_PER_TAP rays with uniform random
    arrival angle and phase, so the ensemble autocorrelation over time lags
    is J0(2 pi f_D dt) and the mean tap power equals the profile power.
    """
    delays, powers = cfg.tap_arrays()
    n_taps = delays.size
    shape = (batch, n_taps, cfg.n_r, cfg.n_t, SINUSOIDS_PER_TAP)
    phases = gen.uniform(0.0, 2.0 * np.pi, size=shape)
    rays = np.exp(1j * phases)
    amp = np.sqrt(powers / SINUSOIDS_PER_TAP)[None, :, None, None]  # rides (B, L, N_r, N_t)
    if cfg.ue_speed_mps == 0.0:
        g0 = amp * rays.sum(axis=-1)  # (B, L, N_r, N_t), constant over time
        g = np.broadcast_to(g0[:, None], (batch, cfg.n_symbols, n_taps, cfg.n_r, cfg.n_t))
        return np.ascontiguousarray(g)
    angles = gen.uniform(0.0, 2.0 * np.pi, size=shape)
    omega = 2.0 * np.pi * cfg.doppler_hz * np.cos(angles) * cfg.symbol_period_s
    rot = np.exp(1j * omega)
    g = np.empty((batch, cfg.n_symbols, n_taps, cfg.n_r, cfg.n_t), dtype=np.complex128)
    state = rays
    g[:, 0] = amp * state.sum(axis=-1)
    for t in range(1, cfg.n_symbols):
        state = state * rot  # advance every ray by one symbol period
        g[:, t] = amp * state.sum(axis=-1)
    return g


def _apply_spatial_coloring(g: np.ndarray, cfg: ChannelConfig) -> np.ndarray:
    if cfg.spatial_correlation is None:
        return g
    r_tx, r_rx = cfg.spatial_correlation
    sq_tx = np.linalg.cholesky(np.asarray(r_tx, dtype=np.complex128))
    sq_rx = np.linalg.cholesky(np.asarray(r_rx, dtype=np.complex128))
    return np.einsum("am,btlmn,nc->btlac", sq_rx, g, sq_tx.conj().T)


def generate_channel_batch(cfg: ChannelConfig, rng: RngStream, batch: int) -> np.ndarray:
    """Stacked realizations, shape (batch, K, T, N_r, N_t)."""
    gen = rng.generator()
    g = _apply_spatial_coloring(_tap_gains(cfg, gen, batch), cfg)
    phase = _subcarrier_phase_matrix(cfg)  # (L, K)
    if cfg.ue_speed_mps == 0.0:
        h0 = np.einsum("blmn,lk->bkmn", np.ascontiguousarray(g[:, 0]), phase)
        h = np.broadcast_to(
            h0[:, :, None], (batch, cfg.n_subcarriers, cfg.n_symbols, cfg.n_r, cfg.n_t)
        )
        return np.ascontiguousarray(h)
    h = np.einsum("btlmn,lk->bktmn", g, phase)
    return h


def generate_channel(cfg: ChannelConfig, rng: RngStream) -> ChannelRealization:
    """Draw one channel realization for the configured grid."""
    h = generate_channel_batch(cfg, rng, 1)[0]
    return ChannelRealization(coefficients=h, config=cfg, seed=(rng.seed, rng.stream))


def apply_channel(
    tx_grid: np.ndarray,
    ch: ChannelRealization | np.ndarray,
    noise_variance: float,
    rng: RngStream | np.random.Generator,
) -> np.ndarray:
    """Per-RE channel action y = H s + w, output shape (K, T, N_r)."""
    h = ch.coefficients if isinstance(ch, ChannelRealization) else np.asarray(ch)
    tx_grid = np.asarray(tx_grid)
    if tx_grid.shape != h.shape[:2] + (h.shape[3],):
        raise ValueError(f"tx grid {tx_grid.shape} does not match channel {h.shape}")
    rx = np.einsum("ktmn,ktn->ktm", h, tx_grid)
    return rx + complex_gaussian(rx.shape, noise_variance, rng)


def estimate_spatial_covariance(ensemble: list[ChannelRealization | np.ndarray]) -> np.ndarray:
    """Sample covariance of vec(H) pooled over REs and realizations.

    vec stacks receive antennas first (column-major), matching the vector
    form consumed by the block LMMSE estimator.
    """
    if not ensemble:
        raise ValueError("need a non-empty channel ensemble")
    rows = []
    for item in ensemble:
        h = item.coefficients if isinstance(item, ChannelRealization) else np.asarray(item)
        k, t, n_r, n_t = h.shape
        rows.append(np.transpose(h, (0, 1, 3, 2)).reshape(k * t, n_r * n_t))
    return sample_covariance(np.concatenate(rows, axis=0))


def nmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Sum |est - truth|^2 / sum |truth|^2."""
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch {estimate.shape} vs {truth.shape}")
    denom = float(np.sum(np.abs(truth) ** 2))
    if denom == 0.0:
        raise ValueError("truth tensor is all-zero")
    return float(np.sum(np.abs(estimate - truth) ** 2) / denom)


def frequency_correlation(cfg: ChannelConfig) -> np.ndarray:
    """r[d] = E[h^{k+d} conj(h^k)] for d = 0..K-1, from the power delay profile."""
    delays, powers = cfg.tap_arrays()
    d = np.arange(cfg.n_subcarriers)
    phases = np.exp(-2j * np.pi * np.outer(delays, d * cfg.subcarrier_spacing_hz))
    return (powers[:, None] * phases).sum(axis=0)


def time_correlation(cfg: ChannelConfig) -> np.ndarray:
    """Jakes temporal autocorrelation J0(2 pi f_D d T_sym) for d = 0..T-1."""
    from scipy.special import j0

    d = np.arange(cfg.n_symbols)
    return j0(2.0 * np.pi * cfg.doppler_hz * d * cfg.symbol_period_s)
