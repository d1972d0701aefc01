"""Shared fixtures: exported datasets from the link simulator CLI."""

import json
import subprocess
import sys

import pytest


def simulator_available() -> bool:
    probe = subprocess.run(
        [sys.executable, "-c", "import ddstlink"], capture_output=True
    )
    return probe.returncode == 0


requires_simulator = pytest.mark.skipif(
    not simulator_available(), reason="link simulator package not installed"
)


def export_dataset(tmp_dir, config: dict, split: str, samples: int):
    cfg_path = tmp_dir / "config.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_dir / split
    subprocess.run(
        [
            sys.executable, "-m", "ddstlink.cli", "export-dataset",
            "--config", str(cfg_path), "--split", split,
            "--samples", str(samples), "--out", str(out),
        ],
        check=True, capture_output=True,
    )
    return out


def small_config(**over) -> dict:
    cfg = {
        "seed": 9, "trials": 1, "snr_db": [14.0],
        "scheme": "mix", "rho": 0.3, "ddst_ratio": 0.25,
        "modulation": "qpsk", "code": "ldpc648", "estimator": "despread-interp",
        "channel": {"n_t": 4, "n_r": 2, "subcarriers": 16, "symbols": 28,
                    "ue_speed_mps": 30.0, "delay_spread_s": 363e-9},
    }
    channel = over.pop("channel", {})
    cfg.update(over)
    cfg["channel"] = {**cfg["channel"], **channel}
    return cfg


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    if not simulator_available():
        pytest.skip("link simulator package not installed")
    tmp = tmp_path_factory.mktemp("tiny")
    return export_dataset(tmp, small_config(), "train", 32)
