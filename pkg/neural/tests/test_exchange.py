"""End-to-end exchange with the link simulator through its CLI and containers.

Covers the dataset -> train -> infer -> score loop: inferred channel
estimates must beat the simulator's despread-interpolation reference NMSE,
and inferred LLRs must decode to a block error rate strictly below their
own uncoded hard-decision error rate.
"""

import json
import subprocess
import sys

import numpy as np
import pytest
import torch

from ddstnet.containers import read_meta, read_tensors
from ddstnet.data import DdstDataset
from ddstnet.training import TrainSchedule, infer, train

from conftest import export_dataset, requires_simulator, small_config

pytestmark = requires_simulator


def _run_cli(*args):
    result = subprocess.run(
        [sys.executable, "-m", "ddstlink.cli", *args], capture_output=True, text=True
    )
    assert result.returncode == 0, result.stderr
    return result


def _score(dataset, imported, mode, out):
    _run_cli("score", "--dataset", str(dataset), "--import", str(imported),
             "--mode", mode, "--out", str(out))
    header, row = out.read_text().strip().split("\n")
    return dict(zip(header.split(","), row.split(",")))


@pytest.fixture(scope="module")
def trained_setup(tmp_path_factory):
    """Exported train/test data plus a briefly trained receiver at 10 dB."""
    tmp = tmp_path_factory.mktemp("exchange")
    config = small_config(
        seed=6, snr_db=[10.0],
        channel={"n_r": 8, "subcarriers": 16},
    )
    train_dir = export_dataset(tmp, config, "train", 160)
    test_dir = export_dataset(tmp, config, "test", 24)
    ckpt = tmp / "ckpt"
    schedule = TrainSchedule(stage1_epochs=15, stage2_epochs=30, stage3_epochs=0,
                             batch_size=16)
    train(train_dir, ckpt, schedule, stages="12", seed=0)
    out = tmp / "inferred"
    infer(test_dir, ckpt, out, mode="both")
    return tmp, config, train_dir, test_dir, ckpt, out


class TestExchange:
    def test_inferred_tensors_pass_shape_validation(self, trained_setup):
        _tmp, config, _train, test_dir, _ckpt, out = trained_setup
        tensors = read_tensors(out)
        ch = config["channel"]
        est = tensors["s000000.channel_estimate"]
        assert est.shape == (ch["subcarriers"], 28, ch["n_r"], ch["n_t"])
        assert est.dtype == np.complex64
        llrs = tensors["s000000.llrs"]
        assert llrs.shape == (ch["n_t"], ch["subcarriers"], 28, 2)
        assert llrs.dtype == np.float32

    def test_estimates_beat_interpolation_reference(self, trained_setup):
        tmp, config, _train, test_dir, _ckpt, out = trained_setup
        row = _score(test_dir, out, "estimates", tmp / "score_est.csv")
        nn_nmse = float(row["nmse"])
        ref_csv = tmp / "reference.csv"
        cfg_path = tmp / "ref_config.json"
        cfg_path.write_text(json.dumps({**config, "trials": 50}))
        _run_cli("simulate", "--config", str(cfg_path), "--out", str(ref_csv))
        ref_nmse = float(ref_csv.read_text().strip().split("\n")[1].split(",")[2])
        assert nn_nmse < ref_nmse, f"network {nn_nmse} vs reference {ref_nmse}"

    def test_llrs_decode_below_hard_decision_rate(self, trained_setup):
        tmp, _config, _train, test_dir, _ckpt, out = trained_setup
        row = _score(test_dir, out, "llrs", tmp / "score_llr.csv")
        bler = float(row["bler"])
        raw = float(row["ber_raw"])
        assert raw > 0.0
        assert bler < raw, f"BLER {bler} not below hard-decision rate {raw}"

    def test_llr_sign_convention(self, trained_setup):
        # hard-thresholding trained LLRs at zero recovers the transmitted
        # bits far above chance, confirming sigmoid(L) = P(b=1)
        _tmp, _config, _train, test_dir, _ckpt, out = trained_setup
        dataset = DdstDataset(test_dir)
        tensors = read_tensors(out)
        agree = total = 0
        for i in range(len(dataset)):
            bits = dataset.sample(i)["bits"]  # (N_t, K, T, Q)
            llrs = tensors[f"s{i:06d}.llrs"]
            agree += np.sum((llrs > 0) == (bits > 0.5))
            total += bits.size
        assert agree / total > 0.9

    def test_infer_rejects_mismatched_geometry(self, trained_setup, tmp_path_factory):
        tmp, config, _train, _test, ckpt, _out = trained_setup
        other = tmp_path_factory.mktemp("othergeo")
        mismatched = small_config(seed=1, snr_db=[10.0],
                                  channel={"n_r": 8, "subcarriers": 32})
        ds = export_dataset(other, mismatched, "test", 2)
        with pytest.raises(ValueError, match="geometry"):
            infer(ds, ckpt, other / "x", mode="estimates")

    def test_identity_regression_sanity(self, trained_setup):
        # the genie import path: feeding the dataset's own ground truth as
        # estimates scores zero NMSE, bounding what any network can reach
        tmp, _config, _train, test_dir, _ckpt, _out = trained_setup
        from ddstnet.containers import write_tensors

        data = read_tensors(test_dir)
        truth = {
            f"s{i:06d}.channel_estimate": data[f"s{i:06d}.channel"] for i in range(24)
        }
        gdir = tmp / "genie"
        write_tensors(gdir, truth)
        row = _score(test_dir, gdir, "estimates", tmp / "score_genie.csv")
        assert float(row["nmse"]) == 0.0
