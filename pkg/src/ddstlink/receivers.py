"""Model-based receiver processing.

Block-fading estimators and detection operate per subcarrier on whole-frame
matrices; the per-RE path (pilot cancellation, LMMSE detection, despreading)
supports the mix frame and time-varying channels.  All estimators consume
the receiver-known noise variance; LLRs follow the convention
sigmoid(L) = P(bit = 1) and are clipped at +-LLR_CLIP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import hermitian_solve
from .phy import Constellation, FramePlan, hard_slice

__all__ = [
    "LLR_CLIP",
    "ChannelEstimate",
    "ls_block",
    "lmmse_block",
    "cancel_data",
    "lmmse_detect_block",
    "iterative_hard_detect",
    "ls_per_re",
    "despread",
    "cancel_pilot",
    "lmmse_detect_re",
    "soft_demap",
    "op_ls_tdm",
    "op_lmmse_ce",
    "mix_baseline_interpolate",
    "expand_block_estimate",
]

LLR_CLIP = 30.0


@dataclass(frozen=True)
class ChannelEstimate:
    """Per-RE channel estimate with a validity mask.

    `tensor` has shape (K, T, N_r, N_t); `mask` is (K, T) and marks the REs
    where `method` actually defines an estimate.
    """

    tensor: np.ndarray
    method: str
    mask: np.ndarray

    @classmethod
    def full(cls, tensor: np.ndarray, method: str) -> "ChannelEstimate":
        return cls(tensor, method, np.ones(tensor.shape[:2], dtype=bool))


# ---------------------------------------------------------------------------
# Block-fading path (whole-frame processing per subcarrier)
# ---------------------------------------------------------------------------

def ls_block(rx: np.ndarray, pilots: np.ndarray, rho: float) -> np.ndarray:
    """Least-squares estimate Y P^H / (T sqrt(rho)), shape (K, N_r, N_t).

    The precoded data rows are orthogonal to every pilot row, so the result
    is independent of the transmitted payload on quasi-static channels.
    """
    t_len = pilots.shape[1]
    return np.einsum("ktm,nt->kmn", rx, np.conj(pilots)) / (t_len * np.sqrt(rho))


def lmmse_block(
    h_ls: np.ndarray,
    r_spat: np.ndarray,
    sigma_w2: float,
    t_len: int,
    rho: float,
) -> np.ndarray:
    """Wiener filtering of the block LS estimate with spatial statistics.

    h_ls has shape (K, N_r, N_t); r_spat is the (N_r N_t) x (N_r N_t)
    covariance of vec(H) with receive antennas stacked first.
    """
    k_count, n_r, n_t = h_ls.shape
    dim = n_r * n_t
    if r_spat.shape != (dim, dim):
        raise ValueError(f"spatial covariance must be {dim}x{dim}, got {r_spat.shape}")
    obs = np.transpose(h_ls, (0, 2, 1)).reshape(k_count, dim)  # vec with m fastest
    gram = r_spat + (sigma_w2 / (t_len * rho)) * np.eye(dim)
    filtered = np.conj(r_spat.T) @ hermitian_solve(gram, obs.T)
    return np.transpose(filtered.T.reshape(k_count, n_t, n_r), (0, 2, 1))


def cancel_data(rx: np.ndarray, projector: np.ndarray) -> np.ndarray:
    """Project out the precoded-data subspace: Z^k = Y^k (I - J)."""
    eye_minus = np.eye(projector.shape[0]) - projector
    return np.einsum("ktm,ts->ksm", rx, eye_minus)


def lmmse_detect_block(
    z: np.ndarray,
    h_hat: np.ndarray,
    sigma_w2: float,
    n_blocks: int,
) -> np.ndarray:
    """Regularized LMMSE detection on the data observations, (K, N_t, T).

    `h_hat` (K, N_r, N_t) must already carry the data power scaling; the
    regularizer (1 - 1/P) sigma_w^2 matches the projected noise statistics.
    """
    gram = np.einsum("kma,kmb->kab", np.conj(h_hat), h_hat)
    reg = (1.0 - 1.0 / n_blocks) * sigma_w2
    gram = gram + reg * np.eye(h_hat.shape[2])
    rhs = np.einsum("kma,ktm->kat", np.conj(h_hat), z)
    return hermitian_solve(gram, rhs)


def iterative_hard_detect(
    u: np.ndarray,
    projector: np.ndarray,
    constellation: Constellation,
    iterations: int,
) -> np.ndarray:
    """Symbol-by-symbol hard detection with perturbation re-estimation.

    Slice once, then refine: each pass adds back the perturbation implied by
    the current decisions before re-slicing.  `u` is (..., N_t, T).
    """
    if iterations < 1:
        raise ValueError("need at least one iteration")
    detected = hard_slice(u, constellation)
    for _ in range(iterations - 1):
        detected = hard_slice(u + detected @ projector, constellation)
    return detected


# ---------------------------------------------------------------------------
# Per-RE path (mix frame, time-varying channels)
# ---------------------------------------------------------------------------

def ls_per_re(
    rx: np.ndarray,
    pilots: np.ndarray,
    rho: float,
    plan: FramePlan,
) -> np.ndarray:
    """Per-RE pilot inversion on the superimposed subcarriers.

    Returns (|K1|, T, N_r, N_t) with h[k, t, m, n] = conj(p_n(t)) y_m(t) / sqrt(rho);
    the residual carries pilot contamination, data interference, and the
    perturbation-induced term on time-varying channels.
    """
    if plan.ddst_subcarriers.size == 0:
        raise ValueError("plan has no superimposed subcarriers")
    sel = rx[plan.ddst_subcarriers]  # (|K1|, T, N_r)
    return np.einsum("ktm,nt->ktmn", sel, np.conj(pilots)) / np.sqrt(rho)


def despread(ls_estimates: np.ndarray, n_cycle: int) -> np.ndarray:
    """Average per-RE estimates over each cycle-length time block.

    Input (|K1|, T, N_r, N_t) -> output (|K1|, T/n_cycle, N_r, N_t).  Within
    a block the cross-antenna pilot products sum to zero, so the pilot
    contamination term vanishes whenever the channel is block-constant.
    """
    k1, t_len, n_r, n_t = ls_estimates.shape
    if t_len % n_cycle != 0:
        raise ValueError(f"frame length {t_len} not divisible by cycle {n_cycle}")
    blocks = ls_estimates.reshape(k1, t_len // n_cycle, n_cycle, n_r, n_t)
    return blocks.mean(axis=2)


def _as_estimate_tensor(est: ChannelEstimate | np.ndarray, plan: FramePlan) -> np.ndarray:
    if isinstance(est, ChannelEstimate):
        if not est.mask[plan.ddst_subcarriers].all() or not est.mask[plan.data_re_mask].all():
            raise ValueError("channel estimate does not cover all required REs")
        return est.tensor
    return np.asarray(est)


def cancel_pilot(
    rx: np.ndarray,
    est: ChannelEstimate | np.ndarray,
    pilots: np.ndarray,
    rho: float,
    plan: FramePlan,
) -> np.ndarray:
    """Subtract the estimated pilot contribution on superimposed subcarriers."""
    h = _as_estimate_tensor(est, plan)
    z = rx.copy()
    dd = plan.ddst_subcarriers
    if dd.size:
        pilot_rx = np.einsum("ktmn,nt->ktm", h[dd], pilots)
        z[dd] = z[dd] - np.sqrt(rho) * pilot_rx
    return z


def lmmse_detect_re(
    z: np.ndarray,
    est: ChannelEstimate | np.ndarray,
    sigma_w2: float,
    plan: FramePlan,
    alpha: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-RE LMMSE detection with bias correction.

    Returns (u, sigma_eff), both (K, T, N_t).  The effective channel is the
    estimate scaled by `alpha` on superimposed subcarriers and unscaled on
    pure-data REs; u_n is divided by the MMSE bias mu_n and sigma_eff_n is
    (1 - mu_n) / mu_n, the post-equalization noise variance for unit-power
    symbols.
    """
    h = _as_estimate_tensor(est, plan).copy()
    dd = plan.ddst_subcarriers
    if dd.size:
        h[dd] = alpha * h[dd]
    n_t = h.shape[3]
    gram = np.einsum("ktma,ktmb->ktab", np.conj(h), h)
    a_mat = gram + sigma_w2 * np.eye(n_t)
    a_inv = hermitian_solve(a_mat, np.broadcast_to(np.eye(n_t), a_mat.shape))
    u_raw = np.einsum("ktab,ktmb,ktm->kta", a_inv, np.conj(h), z)
    mu = 1.0 - sigma_w2 * np.real(np.einsum("ktaa->kta", a_inv))
    mu = np.clip(mu, 1e-12, None)
    sigma_eff = (1.0 - mu) / mu
    return u_raw / mu, sigma_eff


def soft_demap(
    u: np.ndarray,
    sigma_eff: np.ndarray | float,
    constellation: Constellation,
) -> np.ndarray:
    """Max-log per-bit LLRs, shape u.shape + (Q,), clipped at +-LLR_CLIP.

    L_q = (min_{s: bit q = 0} |u - s|^2 - min_{s: bit q = 1} |u - s|^2) / sigma_eff,
    so positive LLRs favor bit 1.
    """
    dist = np.abs(u[..., None] - constellation.points) ** 2
    labels = constellation.labels()  # (M, Q)
    q = constellation.bits_per_symbol
    llrs = np.empty(u.shape + (q,), dtype=np.float64)
    for bit in range(q):
        ones = labels[:, bit] == 1
        d0 = dist[..., ~ones].min(axis=-1)
        d1 = dist[..., ones].min(axis=-1)
        llrs[..., bit] = d0 - d1
    denom = np.maximum(np.asarray(sigma_eff, dtype=np.float64), 1e-30)
    llrs = llrs / denom[..., None]
    return np.clip(llrs, -LLR_CLIP, LLR_CLIP)


# ---------------------------------------------------------------------------
# Orthogonal-pilot baselines
# ---------------------------------------------------------------------------

def op_ls_tdm(rx: np.ndarray, pilots: np.ndarray, plan: FramePlan) -> np.ndarray:
    """Block LS over the TDM pilot symbols, shape (K, N_r, N_t)."""
    if plan.op_pattern != "tdm":
        raise ValueError("plan is not a TDM orthogonal-pilot frame")
    syms = plan.op_pilot_symbols
    p_block = pilots[:, syms]  # (N_t, T_p), orthogonal since T_p is a multiple of N_t
    return np.einsum("ktm,nt->kmn", rx[:, syms], np.conj(p_block)) / syms.size


def _toeplitz_from_lags(corr: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Covariance block R[i, j] = r(left_i - right_j) with r(-d) = conj(r(d))."""
    diff = left[:, None] - right[None, :]
    mags = np.abs(diff)
    vals = corr[mags]
    return np.where(diff >= 0, vals, np.conj(vals))


def _wiener_filter(
    corr: np.ndarray,
    targets: np.ndarray,
    observed: np.ndarray,
    noise_var: float,
) -> np.ndarray:
    """W = R_{target,obs} (R_{obs,obs} + noise I)^{-1}, shape (targets, observed)."""
    r_to = _toeplitz_from_lags(corr, targets, observed)
    r_oo = _toeplitz_from_lags(corr, observed, observed)
    reg = max(noise_var, 1e-12)  # keep the zero-noise limit solvable
    return np.conj(hermitian_solve(r_oo + reg * np.eye(observed.size), np.conj(r_to.T)).T)


def op_lmmse_ce(
    rx: np.ndarray,
    plan: FramePlan,
    pilots: np.ndarray,
    freq_corr: np.ndarray,
    time_corr: np.ndarray,
    sigma_w2: float,
) -> ChannelEstimate:
    """Pilot LS followed by separable Wiener interpolation (frequency, time)."""
    if plan.op_pilot_symbols.size == 0:
        raise ValueError("plan carries no pilot symbols")
    k_count, t_count = plan.n_subcarriers, plan.n_symbols
    n_r, n_t = rx.shape[2], plan.n_t
    all_k = np.arange(k_count)
    all_t = np.arange(t_count)
    out = np.empty((k_count, t_count, n_r, n_t), dtype=np.complex128)

    if plan.op_pattern == "tdm":
        h_ls = op_ls_tdm(rx, pilots, plan)  # (K, N_r, N_t), noise var sigma/Tp per entry
        noise = sigma_w2 / plan.op_pilot_symbols.size
        w_f = _wiener_filter(freq_corr, all_k, all_k, noise)
        smoothed = np.einsum("kj,jmn->kmn", w_f, h_ls)
        t_center = np.array([int(np.round(plan.op_pilot_symbols.mean()))])
        w_t = _wiener_filter(time_corr.astype(np.complex128), all_t, t_center, noise)
        out = np.einsum("ts,kmn->ktmn", np.real(w_t[:, :1]), smoothed)
        return ChannelEstimate.full(out, "op-lmmse")

    comb = plan.op_comb_mask()  # (K, N_t)
    pilot_t = plan.op_pilot_symbols
    per_symbol = np.empty((k_count, pilot_t.size, n_r, n_t), dtype=np.complex128)
    for a in range(n_t):
        k_obs = np.flatnonzero(comb[:, a])
        w_f = _wiener_filter(freq_corr, all_k, k_obs, sigma_w2)
        obs = rx[k_obs][:, pilot_t]  # (n_obs, n_tp, N_r); unit pilots, LS is identity
        per_symbol[:, :, :, a] = np.einsum("kj,jtm->ktm", w_f, obs)
    w_t = np.real(_wiener_filter(time_corr.astype(np.complex128), all_t, pilot_t, sigma_w2))
    out = np.einsum("ts,ksmn->ktmn", w_t, per_symbol)
    return ChannelEstimate.full(out, "op-lmmse")


def mix_baseline_interpolate(
    despread_feats: np.ndarray,
    plan: FramePlan,
    n_cycle: int,
) -> ChannelEstimate:
    """Nearest-block time expansion plus linear frequency interpolation.

    `despread_feats` is (|K1|, P, N_r, N_t); each despread value covers its
    cycle block in time, then pure-data subcarriers are filled by linear
    interpolation (clamped at the band edges).
    """
    dd = plan.ddst_subcarriers
    if dd.size < 2:
        raise ValueError("need at least two superimposed subcarriers to interpolate")
    k1, n_blocks, n_r, n_t = despread_feats.shape
    t_count = n_blocks * n_cycle
    on_k1 = np.repeat(despread_feats, n_cycle, axis=1)  # (|K1|, T, N_r, N_t)

    weights = np.zeros((plan.n_subcarriers, k1))
    for k in range(plan.n_subcarriers):
        j = np.searchsorted(dd, k)
        if j == 0:
            weights[k, 0] = 1.0
        elif j >= k1:
            weights[k, k1 - 1] = 1.0
        elif dd[j] == k:
            weights[k, j] = 1.0
        else:
            lo, hi = dd[j - 1], dd[j]
            frac = (k - lo) / (hi - lo)
            weights[k, j - 1] = 1.0 - frac
            weights[k, j] = frac
    full = np.einsum("kj,jtmn->ktmn", weights, on_k1)
    return ChannelEstimate(full, "despread-interp", np.ones((plan.n_subcarriers, t_count), bool))


def expand_block_estimate(h_block: np.ndarray, t_count: int, method: str) -> ChannelEstimate:
    """Broadcast a per-subcarrier block estimate over the frame's symbols."""
    k_count, n_r, n_t = h_block.shape
    tensor = np.broadcast_to(h_block[:, None], (k_count, t_count, n_r, n_t)).copy()
    return ChannelEstimate.full(tensor, method)
