"""Input feature construction for the channel-estimation network."""

from __future__ import annotations

import numpy as np

__all__ = ["preprocess_features"]


def preprocess_features(ls_per_re: np.ndarray, despread: np.ndarray) -> np.ndarray:
    """Assemble per-antenna patch sets from LS and despread observations.

    `ls_per_re` has shape (|K1|, T, N_r, N_t) and `despread`
    (|K1|, P, N_r, N_t).  For each receive antenna and superimposed
    subcarrier the per-transmit-antenna time series and its despread
    summary are concatenated and split into real and imaginary rows,
    giving 2*N_t patches of length T+P.

    Returns float32 of shape (N_r, |K1|, 2*N_t, T+P); the first N_t rows
    of each patch set are real parts, the last N_t imaginary parts.
    """
    if ls_per_re.shape[0] != despread.shape[0] or ls_per_re.shape[2:] != despread.shape[2:]:
        raise ValueError(
            f"mismatched inputs: ls {ls_per_re.shape} vs despread {despread.shape}"
        )
    merged = np.concatenate([ls_per_re, despread], axis=1)  # (|K1|, T+P, N_r, N_t)
    merged = np.transpose(merged, (2, 0, 3, 1))  # (N_r, |K1|, N_t, T+P)
    patches = np.concatenate([merged.real, merged.imag], axis=2)
    return patches.astype(np.float32)
