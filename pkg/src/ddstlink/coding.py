"""LDPC encoding and decoding for the coded link.

Parity-check matrices load from the alist text format.  Encoding is
systematic through a precomputed GF(2) parity generator; decoding is
normalized min-sum belief propagation with early exit on a zero syndrome,
vectorized across a batch of codewords.

LLR convention: positive means bit 1 is more likely (sigmoid(L) = P(b=1)).
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "LdpcCode",
    "load_alist",
    "write_alist",
    "builtin_code",
    "ldpc_encode",
    "ldpc_decode",
    "SegmentationPlan",
    "segment_payload",
]

DEFAULT_MAX_ITERS = 25
DEFAULT_MIN_SUM_FACTOR = 0.75


def load_alist(path: str | Path) -> np.ndarray:
    """Parse an alist file into a dense uint8 parity-check matrix (m, n)."""
    tokens = Path(path).read_text().split()
    it = iter(tokens)
    n, m = int(next(it)), int(next(it))
    max_col, _max_row = int(next(it)), int(next(it))
    [int(next(it)) for _ in range(n)]  # column degrees, implied by the lists
    [int(next(it)) for _ in range(m)]  # row degrees
    h = np.zeros((m, n), dtype=np.uint8)
    for col in range(n):
        for _ in range(max_col):
            row = int(next(it))
            if row > 0:
                h[row - 1, col] = 1
    return h


def write_alist(h: np.ndarray, path: str | Path) -> None:
    """Write a dense binary parity-check matrix in alist format."""
    m, n = h.shape
    col_lists = [np.flatnonzero(h[:, c]) + 1 for c in range(n)]
    row_lists = [np.flatnonzero(h[r]) + 1 for r in range(m)]
    max_col = max(len(c) for c in col_lists)
    max_row = max(len(r) for r in row_lists)
    lines = [f"{n} {m}", f"{max_col} {max_row}"]
    lines.append(" ".join(str(len(c)) for c in col_lists))
    lines.append(" ".join(str(len(r)) for r in row_lists))
    for lst, width in ((col_lists, max_col), (row_lists, max_row)):
        for entries in lst:
            padded = list(entries) + [0] * (width - len(entries))
            lines.append(" ".join(str(v) for v in padded))
    Path(path).write_text("\n".join(lines) + "\n")


def _gf2_parity_generator(h: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column split and parity map for systematic encoding.

    Returns (info_cols, parity_cols, gen) with parity = gen @ u mod 2, where
    gen solves B p = A u for an invertible parity block B of H.
    """
    m, n = h.shape
    work = np.packbits(h, axis=1)
    width = work.shape[1]
    parity_cols: list[int] = []
    row_order = np.arange(m)
    # Gaussian elimination, choosing pivot columns greedily from the right
    pivot_row = 0
    col_bit = lambda c: (work[:, c >> 3] >> (7 - (c & 7))) & 1
    for col in range(n - 1, -1, -1):
        if pivot_row >= m:
            break
        bits = col_bit(col)
        candidates = np.flatnonzero(bits[pivot_row:])
        if candidates.size == 0:
            continue
        swap = pivot_row + candidates[0]
        work[[pivot_row, swap]] = work[[swap, pivot_row]]
        row_order[[pivot_row, swap]] = row_order[[swap, pivot_row]]
        bits = col_bit(col)
        others = np.flatnonzero(bits)
        others = others[others != pivot_row]
        work[others] ^= work[pivot_row]
        parity_cols.append(col)
        pivot_row += 1
    if pivot_row < m:
        raise ValueError("parity-check matrix is rank deficient over GF(2)")
    parity_cols_arr = np.array(sorted(parity_cols))
    info_mask = np.ones(n, dtype=bool)
    info_mask[parity_cols_arr] = False
    info_cols = np.flatnonzero(info_mask)
    # After elimination, rows are a permuted reduced system: row r has a
    # single 1 among parity columns (its pivot) plus info-column entries.
    reduced = np.unpackbits(work, axis=1, count=n)
    pivot_of_row = np.empty(m, dtype=int)
    for r in range(m):
        on = np.flatnonzero(reduced[r][parity_cols_arr])
        if on.size != 1:
            raise ValueError("elimination did not reach systematic form")
        pivot_of_row[r] = on[0]
    gen = np.zeros((m, info_cols.size), dtype=np.uint8)
    gen[pivot_of_row] = reduced[:, info_cols]
    return info_cols, parity_cols_arr, gen


@dataclass
class LdpcCode:
    """Binary LDPC code with systematic encoder tables and decoder adjacency."""

    h: np.ndarray  # (m, n) uint8 parity-check matrix
    info_cols: np.ndarray
    parity_cols: np.ndarray
    parity_gen: np.ndarray  # (m, k) uint8, parity = gen @ info mod 2

    def __post_init__(self):
        m, n = self.h.shape
        self.n = n
        self.k = n - m
        self.rate = self.k / n
        row_deg = self.h.sum(axis=1).astype(int)
        d_max = int(row_deg.max())
        adj = np.full((m, d_max), n, dtype=np.int64)  # pad with dummy var index n
        for r in range(m):
            cols = np.flatnonzero(self.h[r])
            adj[r, : cols.size] = cols
        self._check_adj = adj
        self._edge_valid = adj < n
        flat_vars = adj.reshape(-1)
        order = np.argsort(flat_vars[self._edge_valid.reshape(-1)], kind="stable")
        valid_idx = np.flatnonzero(self._edge_valid.reshape(-1))
        self._edge_perm = valid_idx[order]
        sorted_vars = flat_vars[self._edge_perm]
        self._var_starts = np.searchsorted(sorted_vars, np.arange(n))
        self._enc_f32 = self.parity_gen.astype(np.float32)

    @classmethod
    def from_parity_check(cls, h: np.ndarray) -> "LdpcCode":
        info_cols, parity_cols, gen = _gf2_parity_generator(np.asarray(h, dtype=np.uint8))
        return cls(np.asarray(h, dtype=np.uint8), info_cols, parity_cols, gen)

    @classmethod
    def from_alist(cls, path: str | Path) -> "LdpcCode":
        return cls.from_parity_check(load_alist(path))

    def save_tables(self, path: str | Path) -> None:
        np.savez_compressed(
            path,
            h=np.packbits(self.h, axis=1),
            n=self.n,
            info_cols=self.info_cols,
            parity_cols=self.parity_cols,
            parity_gen=np.packbits(self.parity_gen, axis=1),
        )

    @classmethod
    def load_tables(cls, path: str | Path) -> "LdpcCode":
        data = np.load(path)
        n = int(data["n"])
        h = np.unpackbits(data["h"], axis=1, count=n)
        k = n - h.shape[0]
        gen = np.unpackbits(data["parity_gen"], axis=1, count=k)
        return cls(h, data["info_cols"], data["parity_cols"], gen)

    def syndrome(self, codewords: np.ndarray) -> np.ndarray:
        """Parity sums mod 2, shape (m,) or (m, batch)."""
        return (self.h.astype(np.int64) @ codewords.astype(np.int64)) % 2


_BUILTIN_CACHE: dict[str, LdpcCode] = {}


def builtin_code(name: str) -> LdpcCode:
    """Load a code shipped with the package: 'ldpc4032' or 'ldpc648'."""
    sizes = {"ldpc4032": "ldpc_4032_2016", "ldpc648": "ldpc_648_324"}
    if name not in sizes:
        raise ValueError(f"unknown code {name!r}; expected one of {sorted(sizes)}")
    if name not in _BUILTIN_CACHE:
        root = importlib.resources.files("ddstlink") / "codes"
        _BUILTIN_CACHE[name] = LdpcCode.load_tables(str(root / f"{sizes[name]}.npz"))
    return _BUILTIN_CACHE[name]


def ldpc_encode(info_bits: np.ndarray, code: LdpcCode) -> np.ndarray:
    """Systematic encoding; accepts (k,) or (batch, k), returns same leading shape."""
    info_bits = np.asarray(info_bits)
    single = info_bits.ndim == 1
    if single:
        info_bits = info_bits[None]
    if info_bits.shape[1] != code.k:
        raise ValueError(f"expected {code.k} information bits, got {info_bits.shape[1]}")
    parity = (code._enc_f32 @ info_bits.T.astype(np.float32)) % 2  # exact: counts < 2^24
    out = np.empty((info_bits.shape[0], code.n), dtype=np.uint8)
    out[:, code.info_cols] = info_bits
    out[:, code.parity_cols] = parity.T.astype(np.uint8)
    return out[0] if single else out


def ldpc_decode(
    llrs: np.ndarray,
    code: LdpcCode,
    max_iters: int = DEFAULT_MAX_ITERS,
    min_sum_factor: float = DEFAULT_MIN_SUM_FACTOR,
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized min-sum decoding.

    `llrs` is (n,) or (n, batch) with positive values favoring bit 1.
    Returns (info_bits, converged); convergence means a zero syndrome was
    reached with an informative posterior (all-zero input never converges).
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    single = llrs.ndim == 1
    if single:
        llrs = llrs[:, None]
    if llrs.shape[0] != code.n:
        raise ValueError(f"expected {code.n} LLRs, got {llrs.shape[0]}")
    batch = llrs.shape[1]
    # internal sign convention: positive favors bit 0
    prior = -llrs
    totals = prior.copy()
    m, d_max = code._check_adj.shape
    c2v = np.zeros((m, d_max, batch))
    adj = code._check_adj
    valid = code._edge_valid[..., None]
    out_bits = np.zeros((code.n, batch), dtype=np.uint8)
    converged = np.zeros(batch, dtype=bool)

    for _ in range(max_iters):
        bits = (totals < 0).astype(np.uint8)
        bits_pad = np.vstack([bits, np.zeros((1, batch), np.uint8)])
        synd = bits_pad[adj].sum(axis=1) % 2  # (m, batch)
        informative = np.abs(totals).max(axis=0) > 0
        ok = (synd.max(axis=0) == 0) & informative & ~converged
        out_bits[:, ok] = bits[:, ok]
        converged |= ok
        if converged.all():
            break
        totals_pad = np.vstack([totals, np.zeros((1, batch))])
        v2c = totals_pad[adj] - c2v  # (m, d, batch)
        mag = np.where(valid, np.abs(v2c), np.inf)
        sgn = np.where(valid, np.where(v2c < 0, -1.0, 1.0), 1.0)
        total_sign = sgn.prod(axis=1)  # (m, batch)
        first = mag.argmin(axis=1)
        min1 = np.take_along_axis(mag, first[:, None], axis=1)[:, 0]
        masked = mag.copy()
        np.put_along_axis(masked, first[:, None], np.inf, axis=1)
        min2 = masked.min(axis=1)
        others_min = np.where(
            np.arange(d_max)[None, :, None] == first[:, None], min2[:, None], min1[:, None]
        )
        c2v = min_sum_factor * total_sign[:, None] * sgn * others_min
        c2v = np.where(valid, c2v, 0.0)
        flat = c2v.reshape(m * d_max, batch)[code._edge_perm]
        ext = np.add.reduceat(flat, code._var_starts, axis=0)
        totals = prior + ext

    bits = (totals < 0).astype(np.uint8)
    out_bits[:, ~converged] = bits[:, ~converged]
    info = out_bits[code.info_cols]
    if single:
        return info[:, 0], bool(converged[0])
    return info, converged


@dataclass(frozen=True)
class SegmentationPlan:
    """How coded bits tile the data REs of one antenna over one frame."""

    codewords_per_antenna: int
    bits_per_antenna: int  # data-RE capacity in bits
    filler_bits: int  # trailing capacity not covered by codewords
    code_n: int
    code_k: int

    @property
    def used_bits(self) -> int:
        return self.codewords_per_antenna * self.code_n


def segment_payload(capacity_res: int, bits_per_symbol: int, code: LdpcCode) -> SegmentationPlan:
    """One or more whole codewords per antenna; leftover REs carry filler bits."""
    total_bits = capacity_res * bits_per_symbol
    n_cw = total_bits // code.n
    if n_cw < 1:
        raise ValueError(
            f"frame capacity {total_bits} bits cannot hold a length-{code.n} codeword"
        )
    return SegmentationPlan(
        codewords_per_antenna=int(n_cw),
        bits_per_antenna=int(total_bits),
        filler_bits=int(total_bits - n_cw * code.n),
        code_n=code.n,
        code_k=code.k,
    )
