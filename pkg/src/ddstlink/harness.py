"""Configuration, Monte-Carlo sweeps, metrics, and dataset exchange.

A sweep point runs independent trials (one frame each) with per-trial
derived random streams, so results are bitwise reproducible for a fixed
seed and order-independent under sharding.  SNR convention:
snr_db = -10 log10(noise variance) with unit-power transmit symbols.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channel as ch_mod
from . import receivers as rx_mod
from .coding import (
    DEFAULT_MAX_ITERS,
    DEFAULT_MIN_SUM_FACTOR,
    LdpcCode,
    SegmentationPlan,
    builtin_code,
    ldpc_decode,
    ldpc_encode,
    segment_payload,
)
from .container import ContainerWriter, container_meta, read_container
from .numerics import RngStream
from .phy import (
    Constellation,
    DdstParams,
    FramePlan,
    assemble_frame,
    build_pilot_matrix,
    map_bits,
    plan_fullddst,
    plan_mix,
    plan_op,
    qam_constellation,
)

__all__ = [
    "ConfigError",
    "SimulationConfig",
    "MetricsRecord",
    "SimContext",
    "load_config",
    "config_from_dict",
    "make_context",
    "run_sweep",
    "throughput",
    "export_dataset",
    "score_external",
    "emit_results",
]

RE_PER_RB = 168  # 12 subcarriers x 14 symbols

# role salts for derived random streams
_ROLE_CHANNEL, _ROLE_NOISE, _ROLE_DATA, _ROLE_COV = 1, 2, 3, 4
_SPLIT_SALTS = {"train": 101, "val": 102, "test": 103}

_SCHEMES = ("fullddst", "mix", "op")
_ESTIMATORS = {
    "fullddst": ("ls-block", "lmmse-block", "despread-interp", "genie"),
    "mix": ("despread-interp", "genie"),
    "op": ("op-lmmse", "genie"),
}
_MODULATIONS = {"qpsk": 4, "16qam": 16}

METADATA_NOTES = {
    "snr_convention": "snr_db = -10*log10(noise_variance); unit average tx symbol power per antenna",
    "llr_convention": "sigmoid(L) = P(bit=1)",
    "llr_clip": rx_mod.LLR_CLIP,
    "bler_granularity": "codeword",
    "decoder": "normalized min-sum, default factor 0.75, max 25 iterations",
    "demap_noise": "effective MMSE variance plus 1/P perturbation variance on superimposed REs",
    "re_order": "subcarrier-major over data-bearing REs",
}


class ConfigError(ValueError):
    """Invalid or unknown simulation configuration."""


_TOP_KEYS = {
    "seed", "trials", "snr_db", "scheme", "rho", "ddst_ratio", "ddst_subcarriers",
    "op_pattern", "op_tp", "modulation", "code", "estimator", "spatial_stats",
    "decoder_iters", "min_sum_factor", "channel",
}
_CH_KEYS = {
    "n_t", "n_r", "subcarriers", "symbols", "subcarrier_spacing_hz",
    "carrier_frequency_hz", "delay_spread_s", "ue_speed_mps", "pdp",
}


@dataclass(frozen=True)
class SimulationConfig:
    seed: int
    trials: int
    snr_db: tuple[float, ...]
    scheme: str
    rho: float
    ddst_ratio: float
    modulation: str
    code: str
    estimator: str
    channel: ch_mod.ChannelConfig
    op_pattern: str = "2p"
    op_tp: int = 4
    spatial_stats: str = "genie"
    decoder_iters: int = DEFAULT_MAX_ITERS
    min_sum_factor: float = DEFAULT_MIN_SUM_FACTOR
    ddst_subcarriers: tuple[int, ...] | None = None
    raw: dict = field(default_factory=dict, compare=False)


def config_from_dict(data: dict) -> SimulationConfig:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        ch_raw = dict(data["channel"])
    except KeyError:
        raise ConfigError("missing 'channel' section") from None
    unknown = set(ch_raw) - _CH_KEYS
    if unknown:
        raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
    pdp = ch_raw.pop("pdp", "tdlc")
    try:
        cfg_channel = ch_mod.ChannelConfig(
            n_t=int(ch_raw.get("n_t", 4)),
            n_r=int(ch_raw.get("n_r", 16)),
            n_subcarriers=int(ch_raw.get("subcarriers", 72)),
            n_symbols=int(ch_raw.get("symbols", 28)),
            subcarrier_spacing_hz=float(ch_raw.get("subcarrier_spacing_hz", 30e3)),
            carrier_frequency_hz=float(ch_raw.get("carrier_frequency_hz", 2e9)),
            delay_spread_s=float(ch_raw.get("delay_spread_s", 363e-9)),
            ue_speed_mps=float(ch_raw.get("ue_speed_mps", 0.0)),
            pdp=() if pdp == "tdlc" else tuple((float(d), float(p)) for d, p in pdp),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    scheme = data.get("scheme", "fullddst")
    if scheme not in _SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {_SCHEMES}")
    estimator = data.get("estimator", "genie")
    if estimator not in _ESTIMATORS[scheme]:
        raise ConfigError(
            f"estimator {estimator!r} is not valid for scheme {scheme!r}; "
            f"choose from {_ESTIMATORS[scheme]}"
        )
    modulation = data.get("modulation", "16qam")
    if modulation not in _MODULATIONS:
        raise ConfigError(f"unknown modulation {modulation!r}")
    snr_db = tuple(float(s) for s in data.get("snr_db", ()))
    if not snr_db:
        raise ConfigError("snr_db list must be non-empty")
    trials = int(data.get("trials", 2000))
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    ddst_ratio = float(data.get("ddst_ratio", 1.0))
    if scheme == "fullddst":
        ddst_ratio = 1.0
    subs = data.get("ddst_subcarriers")
    return SimulationConfig(
        seed=int(data.get("seed", 0)),
        trials=trials,
        snr_db=snr_db,
        scheme=scheme,
        rho=float(data.get("rho", 0.3)),
        ddst_ratio=ddst_ratio,
        modulation=modulation,
        code=data.get("code", "ldpc4032"),
        estimator=estimator,
        channel=cfg_channel,
        op_pattern=data.get("op_pattern", "2p"),
        op_tp=int(data.get("op_tp", 4)),
        spatial_stats=data.get("spatial_stats", "genie"),
        decoder_iters=int(data.get("decoder_iters", DEFAULT_MAX_ITERS)),
        min_sum_factor=float(data.get("min_sum_factor", DEFAULT_MIN_SUM_FACTOR)),
        ddst_subcarriers=tuple(subs) if subs is not None else None,
        raw=dict(data),
    )


def load_config(path: str | Path) -> SimulationConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(data)


@dataclass(frozen=True)
class MetricsRecord:
    scheme: str
    snr_db: float
    nmse: float
    ber_raw: float
    ber_coded: float
    bler: float
    throughput: float
    trials: int
    wall_time_s: float = 0.0

    def as_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "snr_db": self.snr_db,
            "nmse": self.nmse,
            "ber_raw": self.ber_raw,
            "ber_coded": self.ber_coded,
            "bler": self.bler,
            "throughput": self.throughput,
            "trials": self.trials,
            "wall_time_s": self.wall_time_s,
        }


def throughput(bler: float, omega: float, code_rate: float, q: int, n_rb: float) -> float:
    """Correctly received information bits per slot."""
    return n_rb * RE_PER_RB * omega * code_rate * q * (1.0 - bler)


@dataclass
class SimContext:
    """Precomputed per-configuration state shared by all trials."""

    cfg: SimulationConfig
    plan: FramePlan
    pilots: np.ndarray
    constellation: Constellation
    code: LdpcCode
    seg: SegmentationPlan
    ddst: DdstParams | None
    alpha: float
    pert_var: float  # perturbation power on superimposed REs
    r_spat: np.ndarray | None
    freq_corr: np.ndarray | None
    time_corr: np.ndarray | None

    @property
    def capacity(self) -> int:
        return self.plan.data_capacity_per_antenna()


def make_context(cfg: SimulationConfig) -> SimContext:
    chc = cfg.channel
    try:
        pilots = build_pilot_matrix(chc.n_t, chc.n_symbols)
        if cfg.scheme == "fullddst":
            plan = plan_fullddst(chc.n_subcarriers, chc.n_symbols, chc.n_t, cfg.rho)
        elif cfg.scheme == "mix":
            subs = np.asarray(cfg.ddst_subcarriers) if cfg.ddst_subcarriers else None
            plan = plan_mix(chc.n_subcarriers, chc.n_symbols, chc.n_t, cfg.rho, cfg.ddst_ratio, subs)
        else:
            plan = plan_op(chc.n_subcarriers, chc.n_symbols, chc.n_t, cfg.op_pattern, cfg.op_tp)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    ddst = None
    alpha = 1.0
    pert_var = 0.0
    if cfg.scheme in ("fullddst", "mix"):
        try:
            ddst = DdstParams.create(cfg.rho, chc.n_t, chc.n_symbols)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        alpha = ddst.alpha
        pert_var = 1.0 / ddst.n_blocks

    constellation = qam_constellation(_MODULATIONS[cfg.modulation])
    code = builtin_code(cfg.code)
    try:
        seg = segment_payload(plan.data_capacity_per_antenna(), constellation.bits_per_symbol, code)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    r_spat = None
    if cfg.estimator == "lmmse-block":
        dim = chc.n_r * chc.n_t
        if cfg.spatial_stats == "genie":
            if chc.spatial_correlation is None:
                r_spat = np.eye(dim, dtype=np.complex128)
            else:
                r_tx, r_rx = chc.spatial_correlation
                r_spat = np.kron(np.conj(r_tx), r_rx)
        elif cfg.spatial_stats == "estimated":
            draws = ch_mod.generate_channel_batch(
                chc, RngStream(cfg.seed).derive(_ROLE_COV), 64
            )
            r_spat = ch_mod.estimate_spatial_covariance(list(draws))
        else:
            raise ConfigError(f"unknown spatial_stats {cfg.spatial_stats!r}")

    freq_corr = time_corr = None
    if cfg.estimator == "op-lmmse":
        freq_corr = ch_mod.frequency_correlation(chc)
        time_corr = ch_mod.time_correlation(chc)

    return SimContext(
        cfg=cfg,
        plan=plan,
        pilots=pilots,
        constellation=constellation,
        code=code,
        seg=seg,
        ddst=ddst,
        alpha=alpha,
        pert_var=pert_var,
        r_spat=r_spat,
        freq_corr=freq_corr,
        time_corr=time_corr,
    )


@dataclass
class Payload:
    info_bits: np.ndarray  # (N_t, n_cw, k)
    coded_bits: np.ndarray  # (N_t, used_bits) codeword bits in RE order
    bit_grid: np.ndarray  # (N_t, K, T, Q) transmitted bits, zero off the data mask
    symbols: np.ndarray  # (N_t, capacity)


def make_payload(ctx: SimContext, rng: RngStream) -> Payload:
    gen = rng.generator()
    n_t = ctx.plan.n_t
    seg = ctx.seg
    q = ctx.constellation.bits_per_symbol
    info = gen.integers(0, 2, size=(n_t, seg.codewords_per_antenna, ctx.code.k)).astype(np.uint8)
    coded = ldpc_encode(info.reshape(-1, ctx.code.k), ctx.code).reshape(
        n_t, seg.codewords_per_antenna * ctx.code.n
    )
    filler = gen.integers(0, 2, size=(n_t, seg.filler_bits)).astype(np.uint8)
    all_bits = np.concatenate([coded, filler], axis=1)  # (N_t, capacity*Q)
    symbols = np.stack([map_bits(all_bits[n], ctx.constellation) for n in range(n_t)])
    grid = np.zeros((n_t, ctx.plan.n_subcarriers, ctx.plan.n_symbols, q), dtype=np.uint8)
    per_re = all_bits.reshape(n_t, ctx.capacity, q)
    grid[:, ctx.plan.data_re_mask, :] = per_re
    return Payload(info_bits=info, coded_bits=coded, bit_grid=grid, symbols=symbols)


def estimate_channel(
    ctx: SimContext,
    rx: np.ndarray,
    truth: ch_mod.ChannelRealization,
    sigma_w2: float,
) -> rx_mod.ChannelEstimate:
    cfg = ctx.cfg
    t_count = ctx.plan.n_symbols
    if cfg.estimator == "genie":
        return rx_mod.ChannelEstimate.full(truth.coefficients, "genie")
    if cfg.estimator == "ls-block":
        h = rx_mod.ls_block(rx, ctx.pilots, ctx.plan.rho)
        return rx_mod.expand_block_estimate(h, t_count, "ls-block")
    if cfg.estimator == "lmmse-block":
        h_ls = rx_mod.ls_block(rx, ctx.pilots, ctx.plan.rho)
        h = rx_mod.lmmse_block(h_ls, ctx.r_spat, sigma_w2, t_count, ctx.plan.rho)
        return rx_mod.expand_block_estimate(h, t_count, "lmmse-block")
    if cfg.estimator == "despread-interp":
        per_re = rx_mod.ls_per_re(rx, ctx.pilots, ctx.plan.rho, ctx.plan)
        feats = rx_mod.despread(per_re, ctx.ddst.n_cycle)
        return rx_mod.mix_baseline_interpolate(feats, ctx.plan, ctx.ddst.n_cycle)
    if cfg.estimator == "op-lmmse":
        return rx_mod.op_lmmse_ce(
            rx, ctx.plan, ctx.pilots, ctx.freq_corr, ctx.time_corr, sigma_w2
        )
    raise ConfigError(f"unknown estimator {cfg.estimator!r}")


def detect_llrs(
    ctx: SimContext,
    rx: np.ndarray,
    est: rx_mod.ChannelEstimate | np.ndarray,
    sigma_w2: float,
) -> np.ndarray:
    """Pilot cancellation, per-RE LMMSE detection, soft demapping.

    Returns LLRs of shape (K, T, N_t, Q); superimposed REs demap with the
    perturbation power added to the effective noise variance.
    """
    z = rx_mod.cancel_pilot(rx, est, ctx.pilots, ctx.plan.rho, ctx.plan)
    u, sigma_eff = rx_mod.lmmse_detect_re(z, est, sigma_w2, ctx.plan, ctx.alpha)
    if ctx.pert_var > 0.0 and ctx.plan.ddst_subcarriers.size:
        sigma_eff = sigma_eff.copy()
        sigma_eff[ctx.plan.ddst_subcarriers] += ctx.pert_var
    return rx_mod.soft_demap(u, sigma_eff, ctx.constellation)


@dataclass
class TrialCounts:
    nmse_num: float = 0.0
    nmse_den: float = 0.0
    raw_errors: int = 0
    raw_bits: int = 0
    coded_errors: int = 0
    coded_bits: int = 0
    block_errors: int = 0
    blocks: int = 0

    def add(self, other: "TrialCounts") -> None:
        for name in ("nmse_num", "nmse_den", "raw_errors", "raw_bits",
                     "coded_errors", "coded_bits", "block_errors", "blocks"):
            setattr(self, name, getattr(self, name) + getattr(other, name))


def decode_payload(ctx: SimContext, llr_grid: np.ndarray, payload: Payload) -> TrialCounts:
    """Slice LLRs into codewords, decode, and count errors against the payload."""
    n_t = ctx.plan.n_t
    seg = ctx.seg
    counts = TrialCounts()
    llr_flat = llr_grid[ctx.plan.data_re_mask]  # (capacity, N_t, Q), subcarrier-major
    llr_per_ant = np.transpose(llr_flat, (1, 0, 2)).reshape(n_t, -1)
    used = llr_per_ant[:, : seg.used_bits]
    hard = (used > 0).astype(np.uint8)
    counts.raw_errors = int((hard != payload.coded_bits).sum())
    counts.raw_bits = int(payload.coded_bits.size)
    cw_llrs = used.reshape(n_t * seg.codewords_per_antenna, ctx.code.n).T
    info, _conv = ldpc_decode(
        cw_llrs, ctx.code, max_iters=ctx.cfg.decoder_iters,
        min_sum_factor=ctx.cfg.min_sum_factor,
    )
    truth = payload.info_bits.reshape(-1, ctx.code.k).T
    errors = info != truth
    counts.coded_errors = int(errors.sum())
    counts.coded_bits = int(truth.size)
    per_block = errors.any(axis=0)
    counts.block_errors = int(per_block.sum())
    counts.blocks = int(per_block.size)
    return counts


def run_trial(ctx: SimContext, snr_idx: int, trial: int) -> TrialCounts:
    cfg = ctx.cfg
    sigma_w2 = 10.0 ** (-cfg.snr_db[snr_idx] / 10.0)
    base = RngStream(cfg.seed)
    payload = make_payload(ctx, base.derive(snr_idx, trial, _ROLE_DATA))
    frame = assemble_frame(payload.symbols, ctx.plan, ctx.ddst, ctx.pilots)
    truth = ch_mod.generate_channel(cfg.channel, base.derive(snr_idx, trial, _ROLE_CHANNEL))
    rx = ch_mod.apply_channel(
        frame.grid, truth, sigma_w2, base.derive(snr_idx, trial, _ROLE_NOISE)
    )
    est = estimate_channel(ctx, rx, truth, sigma_w2)
    llrs = detect_llrs(ctx, rx, est, sigma_w2)
    counts = decode_payload(ctx, llrs, payload)
    est_tensor = est.tensor if isinstance(est, rx_mod.ChannelEstimate) else est
    counts.nmse_num = float(np.sum(np.abs(est_tensor - truth.coefficients) ** 2))
    counts.nmse_den = float(np.sum(np.abs(truth.coefficients) ** 2))
    return counts


def _record_from_counts(
    ctx: SimContext, scheme: str, snr_db: float, counts: TrialCounts,
    trials: int, wall: float,
) -> MetricsRecord:
    bler = counts.block_errors / counts.blocks if counts.blocks else 0.0
    omega = ctx.plan.data_fraction()
    n_rb = ctx.plan.n_subcarriers / 12.0
    return MetricsRecord(
        scheme=scheme,
        snr_db=snr_db,
        nmse=counts.nmse_num / counts.nmse_den if counts.nmse_den else float("nan"),
        ber_raw=counts.raw_errors / counts.raw_bits if counts.raw_bits else 0.0,
        ber_coded=counts.coded_errors / counts.coded_bits if counts.coded_bits else 0.0,
        bler=bler,
        throughput=throughput(
            bler, omega, ctx.code.rate, ctx.constellation.bits_per_symbol, n_rb
        ),
        trials=trials,
        wall_time_s=wall,
    )


def run_sweep(cfg: SimulationConfig) -> list[MetricsRecord]:
    """Monte-Carlo sweep over the configured SNR list; deterministic per seed."""
    ctx = make_context(cfg)
    scheme_tag = f"{cfg.scheme}/{cfg.estimator}"
    records = []
    for snr_idx, snr_db in enumerate(cfg.snr_db):
        t0 = time.perf_counter()
        totals = TrialCounts()
        for trial in range(cfg.trials):
            totals.add(run_trial(ctx, snr_idx, trial))
        records.append(
            _record_from_counts(
                ctx, scheme_tag, snr_db, totals, cfg.trials, time.perf_counter() - t0
            )
        )
    return records


# ---------------------------------------------------------------------------
# Dataset exchange with the neural component
# ---------------------------------------------------------------------------

def export_dataset(
    cfg: SimulationConfig, split: str, n_samples: int, out_dir: str | Path
) -> Path:
    """Write per-sample training tensors in the container format.

    Each sample stores the received grid, per-RE LS estimates and despread
    features on the superimposed subcarriers, the ground-truth channel, the
    transmitted bits, and the noise variance (cycled through the configured
    SNR list).  Only superimposed schemes are exportable.
    """
    if cfg.scheme not in ("fullddst", "mix"):
        raise ConfigError("dataset export requires a superimposed scheme (fullddst or mix)")
    if split not in _SPLIT_SALTS:
        raise ConfigError(f"unknown split {split!r}; expected one of {sorted(_SPLIT_SALTS)}")
    ctx = make_context(cfg)
    salt = _SPLIT_SALTS[split]
    base = RngStream(cfg.seed)
    out_dir = Path(out_dir)
    meta = {
        "config": cfg.raw,
        "split": split,
        "n_samples": int(n_samples),
        "seed": cfg.seed,
        "notes": METADATA_NOTES,
        "format_version": 1,
    }
    with ContainerWriter(out_dir, meta) as writer:
        for i in range(n_samples):
            sigma_w2 = 10.0 ** (-cfg.snr_db[i % len(cfg.snr_db)] / 10.0)
            payload = make_payload(ctx, base.derive(salt, i, _ROLE_DATA))
            frame = assemble_frame(payload.symbols, ctx.plan, ctx.ddst, ctx.pilots)
            truth = ch_mod.generate_channel(cfg.channel, base.derive(salt, i, _ROLE_CHANNEL))
            rx = ch_mod.apply_channel(
                frame.grid, truth, sigma_w2, base.derive(salt, i, _ROLE_NOISE)
            )
            per_re = rx_mod.ls_per_re(rx, ctx.pilots, ctx.plan.rho, ctx.plan)
            feats = rx_mod.despread(per_re, ctx.ddst.n_cycle)
            tag = f"s{i:06d}"
            writer.add(f"{tag}.rx_grid", rx)
            writer.add(f"{tag}.ls_per_re", per_re)
            writer.add(f"{tag}.despread", feats)
            writer.add(f"{tag}.channel", truth.coefficients)
            writer.add(f"{tag}.bit_grid", payload.bit_grid.astype(np.float32))
            writer.add(f"{tag}.info_bits", payload.info_bits.astype(np.float32))
            writer.add(f"{tag}.noise_var", np.float32(sigma_w2))
    return out_dir


def _replay_payload(ctx: SimContext, split: str, index: int, seed: int) -> Payload:
    return make_payload(ctx, RngStream(seed).derive(_SPLIT_SALTS[split], index, _ROLE_DATA))


def _all_errored_counts(ctx: SimContext, payload: Payload) -> TrialCounts:
    """Worst-case bookkeeping for a sample whose detection was unsolvable."""
    blocks = ctx.plan.n_t * ctx.seg.codewords_per_antenna
    return TrialCounts(
        raw_errors=payload.coded_bits.size,
        raw_bits=payload.coded_bits.size,
        coded_errors=payload.info_bits.size,
        coded_bits=payload.info_bits.size,
        block_errors=blocks,
        blocks=blocks,
    )


def score_external(
    dataset_dir: str | Path,
    import_dir: str | Path,
    mode: str,
) -> list[MetricsRecord]:
    """Grade externally produced channel estimates or LLRs on a dataset.

    `mode='estimates'` expects tensors named sNNNNNN.channel_estimate of
    shape (K, T, N_r, N_t); the primary detection/decoding chain then runs
    on them.  `mode='llrs'` expects sNNNNNN.llrs of shape (N_t, K, T, Q)
    and decodes them directly.  One record is emitted per distinct noise
    variance, flagged as external.  Estimates that leave the detector
    singular (for example an all-zero import) score their NMSE normally
    and count every bit and block of the sample as errored.
    """
    if mode not in ("estimates", "llrs"):
        raise ConfigError(f"unknown scoring mode {mode!r}")
    meta = container_meta(dataset_dir)
    cfg = config_from_dict(meta["config"])
    ctx = make_context(cfg)
    split = meta["split"]
    n_samples = int(meta["n_samples"])
    data = read_container(dataset_dir)
    imported = read_container(import_dir)

    by_sigma: dict[float, TrialCounts] = {}
    trials: dict[float, int] = {}
    t0 = time.perf_counter()
    k_count, t_count = ctx.plan.n_subcarriers, ctx.plan.n_symbols
    n_r, n_t = cfg.channel.n_r, cfg.channel.n_t
    q = ctx.constellation.bits_per_symbol
    for i in range(n_samples):
        tag = f"s{i:06d}"
        sigma_w2 = float(data[f"{tag}.noise_var"])
        payload = _replay_payload(ctx, split, i, meta["seed"])
        truth = np.asarray(data[f"{tag}.channel"], dtype=np.complex128)
        counts = TrialCounts()
        if mode == "estimates":
            name = f"{tag}.channel_estimate"
            if name not in imported:
                raise KeyError(f"import is missing tensor {name!r}")
            est = np.asarray(imported[name], dtype=np.complex128)
            if est.shape != (k_count, t_count, n_r, n_t):
                raise ValueError(
                    f"tensor {name!r} has shape {est.shape}, "
                    f"expected {(k_count, t_count, n_r, n_t)}"
                )
            rx = np.asarray(data[f"{tag}.rx_grid"], dtype=np.complex128)
            try:
                llrs = detect_llrs(ctx, rx, est, sigma_w2)
                counts = decode_payload(ctx, llrs, payload)
            except np.linalg.LinAlgError:
                counts = _all_errored_counts(ctx, payload)
            counts.nmse_num = float(np.sum(np.abs(est - truth) ** 2))
            counts.nmse_den = float(np.sum(np.abs(truth) ** 2))
        else:
            name = f"{tag}.llrs"
            if name not in imported:
                raise KeyError(f"import is missing tensor {name!r}")
            grid = np.asarray(imported[name], dtype=np.float64)
            if grid.shape != (n_t, k_count, t_count, q):
                raise ValueError(
                    f"tensor {name!r} has shape {grid.shape}, "
                    f"expected {(n_t, k_count, t_count, q)}"
                )
            llrs = np.transpose(grid, (1, 2, 0, 3))  # (K, T, N_t, Q)
            counts = decode_payload(ctx, llrs, payload)
            counts.nmse_num = counts.nmse_den = 0.0
        key = round(sigma_w2, 15)
        if key not in by_sigma:
            by_sigma[key] = TrialCounts()
            trials[key] = 0
        by_sigma[key].add(counts)
        trials[key] += 1

    wall = time.perf_counter() - t0
    records = []
    for key in sorted(by_sigma, reverse=True):
        snr_db = -10.0 * np.log10(key)
        records.append(
            _record_from_counts(
                ctx, f"{cfg.scheme}/external-{mode}", float(snr_db),
                by_sigma[key], trials[key], wall,
            )
        )
    return records


# ---------------------------------------------------------------------------
# Result serialization
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("scheme", "snr_db", "nmse", "ber_raw", "ber_coded", "bler", "throughput", "trials")


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.9g}"


def emit_results(
    records: list[MetricsRecord], path: str | Path, config: dict | None = None
) -> Path:
    """Write the CSV table plus a JSON sidecar with config and metadata."""
    if not records:
        raise ValueError("no records to emit")
    path = Path(path)
    lines = [",".join(_CSV_COLUMNS)]
    for rec in records:
        row = rec.as_dict()
        lines.append(",".join(_fmt(row[col]) for col in _CSV_COLUMNS))
    path.write_text("\n".join(lines) + "\n")
    sidecar = {
        "config": config if config is not None else {},
        "metadata": METADATA_NOTES,
        "records": [rec.as_dict() for rec in records],
    }
    sidecar_path = Path(str(path) + ".json")
    sidecar_path.write_text(json.dumps(sidecar, indent=1) + "\n")
    return path
