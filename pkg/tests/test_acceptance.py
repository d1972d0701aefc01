"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
report.  Monte-Carlo checks use batched block-fading helpers so the stated
trial counts finish within the runtime budgets; per-entry estimator error
statistics do not depend on the receive array size, so those checks use a
reduced N_r with the full Table-geometry frame (K=72, T=28, N_t=4).
"""

import itertools
import time

import numpy as np
import pytest

from ddstlink.container import read_container, write_container
from ddstlink.harness import config_from_dict, emit_results, run_sweep, throughput
from ddstlink.numerics import RngStream
from ddstlink.phy import (
    DdstParams,
    build_pilot_matrix,
    ddst_matrix,
    plan_fullddst,
    plan_mix,
    power_factor,
    qam_constellation,
)
from ddstlink.receivers import (
    LLR_CLIP,
    cancel_data,
    cancel_pilot,
    despread,
    iterative_hard_detect,
    lmmse_detect_block,
    lmmse_detect_re,
    ls_per_re,
    soft_demap,
)

K, T, N_T = 72, 28, 4


def _report(criterion: int, label: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[criterion {criterion:02d}] {status}: {label} {detail}".rstrip())
    assert passed, f"criterion {criterion} failed: {label} {detail}"


# ---------------------------------------------------------------------------
# batched block-fading Monte-Carlo helpers
# ---------------------------------------------------------------------------

def _iid_block_channel(rng, batch, n_r):
    return (
        rng.standard_normal((batch, K, n_r, N_T))
        + 1j * rng.standard_normal((batch, K, n_r, N_T))
    ) / np.sqrt(2.0)


def _random_symbols(rng, constellation, shape):
    return constellation.points[rng.integers(0, constellation.order, size=shape)]


def _block_mean_expand(d, n_cycle):
    """d @ J without the matmul: per-cycle-position mean over the blocks."""
    b, k, n_t, t_len = d.shape
    blocks = d.reshape(b, k, n_t, t_len // n_cycle, n_cycle)
    means = blocks.mean(axis=3, keepdims=True)
    return np.broadcast_to(means, blocks.shape).reshape(d.shape)


def _ddst_ls_nmse(rho, sigma2, n_trials, seed, n_r=4, chunk=250):
    """Full-chain LS NMSE on superimposed frames, batched over trials."""
    pilots = build_pilot_matrix(N_T, T)
    qpsk = qam_constellation(4)
    alpha = power_factor(rho, T // N_T)
    num = den = 0.0
    done = chunk_idx = 0
    while done < n_trials:
        b = min(chunk, n_trials - done)
        gen = RngStream(seed).derive(chunk_idx).generator()
        h = _iid_block_channel(gen, b, n_r)
        d = _random_symbols(gen, qpsk, (b, K, N_T, T))
        precoded = d - _block_mean_expand(d, N_T)
        s = np.sqrt(rho) * pilots[None, None] + alpha * precoded
        w = (
            gen.standard_normal((b, K, n_r, T)) + 1j * gen.standard_normal((b, K, n_r, T))
        ) * np.sqrt(sigma2 / 2.0)
        y = np.einsum("bkmn,bknt->bkmt", h, s, optimize=True) + w
        est = np.einsum("bkmt,nt->bkmn", y, pilots.conj(), optimize=True) / (T * np.sqrt(rho))
        num += np.sum(np.abs(est - h) ** 2)
        den += np.sum(np.abs(h) ** 2)
        done += b
        chunk_idx += 1
    return num / den


def _op_tdm_ls_nmse(tp, sigma2, n_trials, seed, n_r=4, chunk=250):
    """Block LS over a TDM pilot burst, data on the remaining symbols."""
    pilots = build_pilot_matrix(N_T, T)
    qpsk = qam_constellation(4)
    p_block = pilots[:, :tp]
    num = den = 0.0
    done = chunk_idx = 0
    while done < n_trials:
        b = min(chunk, n_trials - done)
        gen = RngStream(seed).derive(chunk_idx).generator()
        h = _iid_block_channel(gen, b, n_r)
        s = np.zeros((b, K, N_T, T), dtype=np.complex128)
        s[..., :tp] = p_block
        s[..., tp:] = _random_symbols(gen, qpsk, (b, K, N_T, T - tp))
        w = (
            gen.standard_normal((b, K, n_r, T)) + 1j * gen.standard_normal((b, K, n_r, T))
        ) * np.sqrt(sigma2 / 2.0)
        y = np.einsum("bkmn,bknt->bkmt", h, s, optimize=True) + w
        est = np.einsum("bkmt,nt->bkmn", y[..., :tp], p_block.conj(), optimize=True) / tp
        num += np.sum(np.abs(est - h) ** 2)
        den += np.sum(np.abs(h) ** 2)
        done += b
        chunk_idx += 1
    return num / den


def _ls_and_lmmse_nmse(rho, sigma2, n_trials, seed, n_r=4, chunk=250):
    """LS and identity-prior Wiener NMSE on the same frames."""
    pilots = build_pilot_matrix(N_T, T)
    qpsk = qam_constellation(4)
    alpha = power_factor(rho, T // N_T)
    shrink = 1.0 / (1.0 + sigma2 / (T * rho))  # Wiener gain for an identity prior
    num_ls = num_lm = den = 0.0
    done = chunk_idx = 0
    while done < n_trials:
        b = min(chunk, n_trials - done)
        gen = RngStream(seed).derive(chunk_idx).generator()
        h = _iid_block_channel(gen, b, n_r)
        d = _random_symbols(gen, qpsk, (b, K, N_T, T))
        s = np.sqrt(rho) * pilots[None, None] + alpha * (d - _block_mean_expand(d, N_T))
        w = (
            gen.standard_normal((b, K, n_r, T)) + 1j * gen.standard_normal((b, K, n_r, T))
        ) * np.sqrt(sigma2 / 2.0)
        y = np.einsum("bkmn,bknt->bkmt", h, s, optimize=True) + w
        est = np.einsum("bkmt,nt->bkmn", y, pilots.conj(), optimize=True) / (T * np.sqrt(rho))
        num_ls += np.sum(np.abs(est - h) ** 2)
        num_lm += np.sum(np.abs(shrink * est - h) ** 2)
        den += np.sum(np.abs(h) ** 2)
        done += b
        chunk_idx += 1
    return num_ls / den, num_lm / den


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_01_orthogonality_identities():
    worst = 0.0
    for n_t, t_len in ((2, 8), (4, 28), (4, 56)):
        pilots = build_pilot_matrix(n_t, t_len)
        proj = ddst_matrix(t_len, n_t)
        worst = max(worst, np.abs((np.eye(t_len) - proj) @ pilots.conj().T).max())
        worst = max(worst, np.abs(pilots @ pilots.conj().T - t_len * np.eye(n_t)).max())
    _report(1, "orthogonality identities (I-J)P^H=0 and PP^H=TI", worst <= 1e-10,
            f"(max deviation {worst:.2e})")


def test_criterion_02_power_normalization():
    pilots = build_pilot_matrix(N_T, T)
    qpsk = qam_constellation(4)
    results = {}
    for rho in (1 / 7, 0.3):
        alpha = power_factor(rho, T // N_T)
        total = count = 0.0
        for chunk_idx in range(10):
            gen = RngStream(20 + chunk_idx).generator()
            d = _random_symbols(gen, qpsk, (1000, K, N_T, T))
            s = np.sqrt(rho) * pilots[None, None] + alpha * (d - _block_mean_expand(d, N_T))
            total += np.sum(np.abs(s) ** 2)
            count += s.size
        results[rho] = total / count
    ok = all(abs(p - 1.0) < 0.01 for p in results.values())
    detail = ", ".join(f"rho={r:.4f}: {p:.5f}" for r, p in results.items())
    _report(2, "mean per-RE transmit power = 1 +- 1% over 1e4 frames", ok, f"({detail})")


def test_criterion_03_ls_nmse_analytic():
    rho = 1 / 7
    rows = []
    ok = True
    for snr_db in (0.0, 10.0, 20.0):
        sigma2 = 10.0 ** (-snr_db / 10.0)
        got = _ddst_ls_nmse(rho, sigma2, 10_000, seed=31)
        theory = sigma2 / (T * rho)
        rel = abs(got - theory) / theory
        ok &= rel < 0.03
        rows.append(f"{snr_db:g}dB: {got:.5f} vs {theory:.5f} ({rel * 100:.2f}%)")
    _report(3, "block LS NMSE equals sigma^2/(T rho) within 3%", ok, "; ".join(rows))


def test_criterion_04_op_ddst_equivalence():
    rows = []
    ok = True
    for snr_db in (-10.0, -5.0, 0.0, 5.0, 10.0):
        sigma2 = 10.0 ** (-snr_db / 10.0)
        ddst_nmse = _ddst_ls_nmse(1 / 7, sigma2, 10_000, seed=41)
        op_nmse = _op_tdm_ls_nmse(4, sigma2, 10_000, seed=42)
        rel = abs(ddst_nmse - op_nmse) / op_nmse
        ok &= rel < 0.03
        rows.append(f"{snr_db:g}dB: {rel * 100:.2f}%")
    _report(4, "OP-TDM (Tp=4) and superimposed (rho=1/7) LS NMSE within 3%", ok,
            "; ".join(rows))


def test_criterion_05_lmmse_dominance():
    rho = 1 / 7
    rows = []
    ok = True
    gap_at_minus10 = None
    for snr_db in (-10.0, -5.0, 0.0, 5.0, 10.0):
        sigma2 = 10.0 ** (-snr_db / 10.0)
        nmse_ls, nmse_lm = _ls_and_lmmse_nmse(rho, sigma2, 10_000, seed=51)
        ok &= nmse_lm <= nmse_ls
        if snr_db == -10.0:
            gap_at_minus10 = 10.0 * np.log10(nmse_ls / nmse_lm)
        rows.append(f"{snr_db:g}dB: LS {nmse_ls:.4f} vs LMMSE {nmse_lm:.4f}")
    ok &= gap_at_minus10 is not None and gap_at_minus10 >= 3.0
    _report(5, "LMMSE NMSE <= LS NMSE, gap >= 3 dB at -10 dB", ok,
            f"(gap {gap_at_minus10:.2f} dB; " + "; ".join(rows) + ")")


def test_criterion_06_detection_algebra():
    rng = np.random.default_rng(61)
    pilots = build_pilot_matrix(N_T, T)
    ddst = DdstParams.create(0.3, N_T, T)
    c16 = qam_constellation(16)
    plan = plan_fullddst(K, T, N_T, 0.3)

    # block path: zero noise + perfect scaled CSI gives U = D (I - J)
    d = _random_symbols(rng, c16, (K, N_T, T))
    precoded = d - d @ ddst.projector
    s = np.sqrt(0.3) * pilots[None] + ddst.alpha * precoded
    h = (rng.standard_normal((K, 6, N_T)) + 1j * rng.standard_normal((K, 6, N_T))) / np.sqrt(2)
    rx = np.einsum("kmn,knt->ktm", h, s)
    u_block = lmmse_detect_block(cancel_data(rx, ddst.projector), ddst.alpha * h, 0.0, ddst.n_blocks)
    err_block = np.abs(u_block - precoded).max()

    # per-RE path on a mix frame: u = d - e on superimposed REs, u = d elsewhere
    mix = plan_mix(K, T, N_T, 0.3, 0.25)
    d_mix = _random_symbols(rng, c16, (K, N_T, T))
    grid = np.transpose(d_mix, (0, 2, 1)).copy()
    dd = mix.ddst_subcarriers
    pre_mix = d_mix[dd] - d_mix[dd] @ ddst.projector
    grid[dd] = np.transpose(np.sqrt(0.3) * pilots[None] + ddst.alpha * pre_mix, (0, 2, 1))
    h_re = (rng.standard_normal((K, T, 6, N_T)) + 1j * rng.standard_normal((K, T, 6, N_T))) / np.sqrt(2)
    rx_re = np.einsum("ktmn,ktn->ktm", h_re, grid)
    z = cancel_pilot(rx_re, h_re, pilots, 0.3, mix)
    u_re, _ = lmmse_detect_re(z, h_re, 0.0, mix, ddst.alpha)
    data_kt = np.transpose(d_mix, (0, 2, 1))
    err_k2 = np.abs(u_re[mix.pure_data_subcarriers] - data_kt[mix.pure_data_subcarriers]).max()
    pert_kt = np.transpose(d_mix[dd] @ ddst.projector, (0, 2, 1))
    err_k1 = np.abs(u_re[dd] - (data_kt[dd] - pert_kt)).max()

    # exhaustive micro-frame oracle (rows decouple, enumeration is complete)
    qpsk = qam_constellation(4)
    j_micro = ddst_matrix(4, 2)
    eye_m = np.eye(4) - j_micro
    rows = list(itertools.product(range(4), repeat=4))
    fits = {}
    for row in rows:
        key = tuple(np.round(qpsk.points[list(row)] @ eye_m, 9))
        fits.setdefault(key, []).append(row)
    iter_errors = 0
    oracle_expected = 0.0
    for row in rows:
        truth = qpsk.points[list(row)]
        u = truth @ eye_m
        cands = fits[tuple(np.round(u, 9))]
        oracle_expected += np.mean([sum(a != b for a, b in zip(row, c)) for c in cands])
        detected = iterative_hard_detect(u[None, :], j_micro, qpsk, 3)[0]
        iter_errors += int(np.sum(np.abs(detected - truth) > 1e-9))
    total = len(rows) * 4
    iter_ser = iter_errors / total
    oracle_ser = oracle_expected / total

    ok = (
        err_block <= 1e-8
        and err_k1 <= 1e-8
        and err_k2 <= 1e-8
        and iter_ser == pytest.approx(0.4375)
        and oracle_ser == pytest.approx(0.4375)
    )
    _report(6, "zero-noise detection algebra and exhaustive micro oracle", ok,
            f"(block {err_block:.1e}, K1 {err_k1:.1e}, K2 {err_k2:.1e}, "
            f"iter SER {iter_ser:.4f} = oracle {oracle_ser:.4f})")


def test_criterion_07_despreading_contamination():
    rng = np.random.default_rng(71)
    pilots = build_pilot_matrix(N_T, T)
    plan = plan_fullddst(K, T, N_T, 0.3)
    h = (rng.standard_normal((K, 8, N_T)) + 1j * rng.standard_normal((K, 8, N_T))) / np.sqrt(2)
    rx = np.einsum("kmn,nt->ktm", h, np.sqrt(0.3) * pilots)
    feats = despread(ls_per_re(rx, pilots, 0.3, plan), N_T)
    err = np.abs(feats - h[:, None]).max()
    _report(7, "despread pilot contamination vanishes on block-constant channels",
            err <= 1e-10, f"(max residual {err:.2e})")


def test_criterion_08_demapper_oracle():
    ok = True
    details = []
    for order in (4, 16):
        c = qam_constellation(order)
        labels = c.labels()
        rng = np.random.default_rng(80 + order)
        u = (rng.standard_normal(100_000) + 1j * rng.standard_normal(100_000)) * 0.9
        s2 = rng.uniform(0.05, 3.0, size=100_000)
        fast = soft_demap(u, s2, c)
        worst = 0.0
        dist = np.abs(u[:, None] - c.points[None, :]) ** 2
        for q in range(c.bits_per_symbol):
            ones = labels[:, q] == 1
            ref = np.clip(
                (dist[:, ~ones].min(axis=1) - dist[:, ones].min(axis=1)) / s2,
                -LLR_CLIP, LLR_CLIP,
            )
            worst = max(worst, np.abs(fast[:, q] - ref).max())
        ok &= worst <= 1e-12
        details.append(f"{c.name}: {worst:.1e}")
    _report(8, "soft demapper equals exhaustive max-log on 1e5 inputs", ok,
            "(" + ", ".join(details) + ")")


def _chain_config(scheme, estimator, speed, snrs, trials):
    data = {
        "seed": 90,
        "trials": trials,
        "snr_db": snrs,
        "scheme": scheme,
        "rho": 1 / 7 if scheme == "fullddst" else 0.3,
        "modulation": "qpsk",
        "code": "ldpc648",
        "estimator": estimator,
        "channel": {
            "n_t": 4, "n_r": 16, "subcarriers": 72, "symbols": 28,
            "ue_speed_mps": speed, "delay_spread_s": 363e-9,
        },
    }
    if scheme == "mix":
        data["ddst_ratio"] = 0.25
    if scheme == "op":
        data["op_pattern"] = "2p"
    return config_from_dict(data)


def test_criterion_09_coded_chain_sanity():
    t_start = time.time()
    # >= 2000 codewords per point: OP carries 20 per frame, the superimposed
    # schemes 24 (QPSK with the desk-scale code)
    chains = [
        ("op", "op-lmmse", 100),
        ("fullddst", "ls-block", 84),
        ("mix", "despread-interp", 84),
    ]
    speeds = (0.0, 30.0)  # 0 and 108 km/h
    snrs = [-14.0, -11.0, -8.0, -5.0, -2.0]
    failures = []

    # zero-noise sanity with genie CSI
    for scheme, _est, _tr in chains:
        for speed in speeds:
            cfg = _chain_config(scheme, "genie", speed, [200.0], 5)
            rec = run_sweep(cfg)[0]
            if rec.ber_coded != 0.0:
                failures.append(f"zero-noise {scheme} v={speed}: BER {rec.ber_coded}")

    # waterfall monotonicity and genie dominance
    for scheme, estimator, trials in chains:
        for speed in speeds:
            est_recs = run_sweep(_chain_config(scheme, estimator, speed, snrs, trials))
            gen_recs = run_sweep(_chain_config(scheme, "genie", speed, snrs, trials))
            blers_est = [r.bler for r in est_recs]
            blers_gen = [r.bler for r in gen_recs]
            for i in range(len(snrs) - 1):
                if blers_est[i + 1] > blers_est[i]:
                    failures.append(f"{scheme}/{estimator} v={speed}: estimated BLER rises at {snrs[i+1]} dB")
                if blers_gen[i + 1] > blers_gen[i]:
                    failures.append(f"{scheme} genie v={speed}: BLER rises at {snrs[i+1]} dB")
            for snr, ge, es in zip(snrs, blers_gen, blers_est):
                if ge > es:
                    failures.append(f"{scheme} v={speed} at {snr} dB: genie {ge:.4f} > estimated {es:.4f}")
            print(f"    {scheme:9s} v={speed:4.0f}: est {['%.3f' % b for b in blers_est]} "
                  f"genie {['%.3f' % b for b in blers_gen]}")

    elapsed = time.time() - t_start
    _report(9, "coded-chain sanity (zero-noise, monotone BLER, genie dominance)",
            not failures, f"({elapsed:.0f}s) " + "; ".join(failures))


def test_criterion_10_throughput():
    op = throughput(0.0, 12 / 14, 0.5, 4, 6)
    mix = throughput(0.0, 1.0, 0.5, 4, 6)
    zero = throughput(1.0, 1.0, 0.5, 4, 6)
    ok = op == 1728.0 and mix == 2016.0 and zero == 0.0 and mix / op == 7 / 6
    _report(10, "throughput: OP 1728, superimposed 2016 bits/slot, ratio 7/6", ok,
            f"(op {op}, mix {mix}, ratio {mix / op:.6f})")


def test_criterion_11_determinism_and_container(tmp_path):
    # fixed-seed sweeps are bitwise reproducible at the CSV level
    cfg = {
        "seed": 110, "trials": 3, "snr_db": [-8.0, -2.0],
        "scheme": "mix", "rho": 0.3, "ddst_ratio": 0.25,
        "modulation": "qpsk", "code": "ldpc648", "estimator": "despread-interp",
        "channel": {"n_t": 4, "n_r": 8, "subcarriers": 24, "symbols": 28,
                    "ue_speed_mps": 30.0, "delay_spread_s": 363e-9},
    }
    paths = []
    for run in range(2):
        out = tmp_path / f"run{run}.csv"
        emit_results(run_sweep(config_from_dict(cfg)), out, cfg)
        paths.append(out.read_bytes())
    deterministic = paths[0] == paths[1]

    # 1 GB mixed-tensor container round trip, bit-exact
    rng = np.random.default_rng(111)
    tensors = {}
    total = 0
    i = 0
    while total < 1_000_000_000:
        if i % 2 == 0:
            arr = rng.standard_normal(8_000_000).astype(np.float32)
        else:
            arr = (
                rng.standard_normal(4_000_000) + 1j * rng.standard_normal(4_000_000)
            ).astype(np.complex64)
        tensors[f"t{i:03d}"] = arr
        total += arr.nbytes
        i += 1
    cont = tmp_path / "bulk"
    write_container(cont, tensors)
    back = read_container(cont)
    exact = all(back[k].tobytes() == v.tobytes() for k, v in tensors.items())
    finite = all(np.isfinite(v.view(np.float32) if v.dtype.kind == "c" else v).all()
                 for v in back.values())
    _report(11, "fixed-seed reproducibility and 1 GB container round trip",
            deterministic and exact and finite,
            f"(csv identical: {deterministic}, {total / 1e9:.2f} GB bit-exact: {exact})")
