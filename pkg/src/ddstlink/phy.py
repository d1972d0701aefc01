"""Constellations, pilot construction, superimposed-training precoding, frames.

Transmission schemes
--------------------
* ``fullddst``: every subcarrier carries pilot + perturbed data superimposed.
* ``mix``: a fraction ``ddst_ratio`` of subcarriers carries superimposed
  symbols, the rest carry plain data.
* ``op``: orthogonal pilots on dedicated resource elements (TDM block or a
  5G-style comb on one/two symbols per 14-symbol slot), data elsewhere.

Per-antenna transmit symbols have unit average power on active REs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import kron

__all__ = [
    "Constellation",
    "qam_constellation",
    "DdstParams",
    "FramePlan",
    "TxFrame",
    "build_pilot_matrix",
    "ddst_matrix",
    "ddst_precode",
    "power_factor",
    "map_bits",
    "hard_slice",
    "plan_fullddst",
    "plan_mix",
    "plan_op",
    "assemble_frame",
]

SLOT_SYMBOLS = 14  # OFDM symbols per slot
RB_SUBCARRIERS = 12  # subcarriers per resource block


@dataclass(frozen=True)
class Constellation:
    """Unit-power Gray-labeled QAM constellation.

    ``points[w]`` is the symbol whose bit label is the Q-bit big-endian
    expansion of ``w``; the first Q/2 bits select the in-phase level, the
    last Q/2 the quadrature level, with per-axis Gray order
    (00, 01, 11, 10) -> (-3, -1, +1, +3) style amplitudes.
    """

    name: str
    points: np.ndarray  # (M,) complex128, indexed by bit word
    bits_per_symbol: int

    @property
    def order(self) -> int:
        return self.points.size

    def labels(self) -> np.ndarray:
        """(M, Q) bit array, row w = label of points[w]."""
        words = np.arange(self.order)
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return ((words[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def _gray_axis_levels(bits_per_axis: int) -> np.ndarray:
    """Amplitude for each axis bit word under binary-reflected Gray order."""
    n_levels = 1 << bits_per_axis
    amps = 2 * np.arange(n_levels) - (n_levels - 1)  # -3,-1,1,3 style
    levels = np.empty(n_levels)
    for pos, amp in enumerate(amps):
        word = pos ^ (pos >> 1)  # Gray code of the position
        levels[word] = amp
    return levels


def qam_constellation(order: int) -> Constellation:
    """Square Gray QAM with E|point|^2 = 1 (order 4 or 16 supported)."""
    if order not in (4, 16):
        raise ValueError(f"unsupported QAM order {order}")
    q = int(np.log2(order))
    axis_bits = q // 2
    levels = _gray_axis_levels(axis_bits)
    n_axis = 1 << axis_bits
    words = np.arange(order)
    i_word = words >> axis_bits
    q_word = words & (n_axis - 1)
    raw = levels[i_word] + 1j * levels[q_word]
    norm = np.sqrt(np.mean(np.abs(raw) ** 2))
    name = "qpsk" if order == 4 else f"{order}qam"
    return Constellation(name, (raw / norm).astype(np.complex128), q)


def build_pilot_matrix(n_t: int, t_len: int) -> np.ndarray:
    """Cyclic unit-modulus training rows p_n(t) = exp(j 2 pi n t / n_t).

    Shape (n_t, t_len); rows are mutually orthogonal with P P^H = t_len * I
    when t_len is a multiple of n_t.
    """
    if t_len % n_t != 0:
        raise ValueError(f"frame length {t_len} not divisible by {n_t} antennas")
    n = np.arange(1, n_t + 1)[:, None]
    t = np.arange(t_len)[None, :]
    return np.exp(2j * np.pi * n * t / n_t)


def ddst_matrix(t_len: int, n_cycle: int) -> np.ndarray:
    """Time-averaging projector (1/P) * ones(P) kron I_{n_cycle}, P = T/n_cycle."""
    if t_len % n_cycle != 0:
        raise ValueError(f"frame length {t_len} not divisible by cycle {n_cycle}")
    n_blocks = t_len // n_cycle
    return kron(np.ones((n_blocks, n_blocks)) / n_blocks, np.eye(n_cycle))


def ddst_precode(data: np.ndarray, projector: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split data rows into (data - perturbation, perturbation = data @ J)."""
    perturbation = data @ projector
    return data - perturbation, perturbation


def power_factor(rho: float, n_blocks: float) -> float:
    """Data scaling that restores unit per-RE power after precoding."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"power allocation must lie in (0,1), got {rho}")
    if n_blocks <= 1:
        raise ValueError(f"need more than one cycle block, got {n_blocks}")
    return float(np.sqrt((1.0 - rho) / (1.0 - 1.0 / n_blocks)))


@dataclass(frozen=True)
class DdstParams:
    """Derived superimposed-training quantities for one frame geometry."""

    rho: float
    n_cycle: int
    n_blocks: int
    alpha: float
    projector: np.ndarray  # (T, T)

    @classmethod
    def create(cls, rho: float, n_t: int, t_len: int) -> "DdstParams":
        n_cycle = n_t  # pilot cycle equals the transmit antenna count
        n_blocks = t_len // n_cycle
        return cls(
            rho=rho,
            n_cycle=n_cycle,
            n_blocks=n_blocks,
            alpha=power_factor(rho, n_blocks),
            projector=ddst_matrix(t_len, n_cycle),
        )


def map_bits(bits: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Gray-map a flat bit array onto constellation symbols."""
    bits = np.asarray(bits)
    q = constellation.bits_per_symbol
    if bits.size % q != 0:
        raise ValueError(f"bit count {bits.size} not a multiple of {q}")
    groups = bits.reshape(-1, q).astype(np.int64)
    weights = 1 << np.arange(q - 1, -1, -1)
    return constellation.points[groups @ weights]


def hard_slice(symbols: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Nearest constellation point in Euclidean distance (first index on ties)."""
    dist = np.abs(symbols[..., None] - constellation.points) ** 2
    return constellation.points[np.argmin(dist, axis=-1)]


def demap_hard(symbols: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Bits of the nearest constellation point, shape symbols.shape + (Q,)."""
    dist = np.abs(symbols[..., None] - constellation.points) ** 2
    return constellation.labels()[np.argmin(dist, axis=-1)]


@dataclass(frozen=True)
class FramePlan:
    """Resource-element allocation for one transmission scheme."""

    scheme: str  # fullddst | mix | op
    n_subcarriers: int
    n_symbols: int
    n_t: int
    rho: float
    ddst_subcarriers: np.ndarray  # sorted subcarrier indices carrying superimposed symbols
    data_re_mask: np.ndarray  # (K, T) True where data symbols are transmitted
    ddst_ratio: float = 1.0
    op_pattern: str | None = None  # tdm | 1p | 2p
    op_pilot_symbols: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    op_tp: int = 0

    @property
    def pure_data_subcarriers(self) -> np.ndarray:
        mask = np.ones(self.n_subcarriers, dtype=bool)
        mask[self.ddst_subcarriers] = False
        return np.flatnonzero(mask)

    def is_ddst_subcarrier(self) -> np.ndarray:
        mask = np.zeros(self.n_subcarriers, dtype=bool)
        mask[self.ddst_subcarriers] = True
        return mask

    def data_capacity_per_antenna(self) -> int:
        """Number of data-bearing REs per transmit antenna per frame."""
        return int(self.data_re_mask.sum())

    def data_fraction(self) -> float:
        """Proportion of REs carrying data symbols (the throughput factor)."""
        return float(self.data_re_mask.mean())

    def op_comb_mask(self) -> np.ndarray:
        """(K, n_t) True where antenna a owns pilot subcarrier k (comb patterns)."""
        k = np.arange(self.n_subcarriers)
        return (k[:, None] % self.n_t) == np.arange(self.n_t)[None, :]

    def describe(self) -> dict:
        """Serializable plan summary for result metadata."""
        return {
            "scheme": self.scheme,
            "rho": self.rho,
            "ddst_ratio": self.ddst_ratio,
            "n_ddst_subcarriers": int(self.ddst_subcarriers.size),
            "op_pattern": self.op_pattern,
            "op_tp": self.op_tp,
            "data_fraction": self.data_fraction(),
        }


def plan_fullddst(n_subcarriers: int, n_symbols: int, n_t: int, rho: float) -> FramePlan:
    return FramePlan(
        scheme="fullddst",
        n_subcarriers=n_subcarriers,
        n_symbols=n_symbols,
        n_t=n_t,
        rho=rho,
        ddst_subcarriers=np.arange(n_subcarriers),
        data_re_mask=np.ones((n_subcarriers, n_symbols), dtype=bool),
        ddst_ratio=1.0,
    )


def plan_mix(
    n_subcarriers: int,
    n_symbols: int,
    n_t: int,
    rho: float,
    ddst_ratio: float,
    subcarriers: np.ndarray | None = None,
) -> FramePlan:
    """Mix frame: superimposed symbols on a uniform subcarrier subset.

    Default placement is a global uniform stride of 1/ddst_ratio starting at
    index 0; pass `subcarriers` for a custom layout.
    """
    count = ddst_ratio * n_subcarriers
    if abs(count - round(count)) > 1e-9:
        raise ValueError(f"ddst_ratio {ddst_ratio} does not give an integer subcarrier count")
    count = int(round(count))
    if subcarriers is None:
        stride = n_subcarriers / count
        if abs(stride - round(stride)) > 1e-9:
            raise ValueError(f"1/ddst_ratio must be an integer stride, got {stride}")
        subcarriers = np.arange(0, n_subcarriers, int(round(stride)))
    subcarriers = np.asarray(subcarriers, dtype=int)
    if subcarriers.size != count:
        raise ValueError(f"expected {count} superimposed subcarriers, got {subcarriers.size}")
    return FramePlan(
        scheme="mix",
        n_subcarriers=n_subcarriers,
        n_symbols=n_symbols,
        n_t=n_t,
        rho=rho,
        ddst_subcarriers=subcarriers,
        data_re_mask=np.ones((n_subcarriers, n_symbols), dtype=bool),
        ddst_ratio=ddst_ratio,
    )


def plan_op(
    n_subcarriers: int,
    n_symbols: int,
    n_t: int,
    pattern: str,
    tp: int = 4,
) -> FramePlan:
    """Orthogonal-pilot frame.

    ``tdm``: the first `tp` symbols of the frame carry the cyclic training
    rows from every antenna at full power; remaining symbols carry data.
    ``1p``/``2p``: demodulation-reference symbols at position 2 (and 11) of
    each 14-symbol slot, antennas separated by a frequency comb of period
    n_t; pilot symbols carry no data on any antenna.
    """
    data_mask = np.ones((n_subcarriers, n_symbols), dtype=bool)
    if pattern == "tdm":
        if tp % n_t != 0 or not 0 < tp <= n_symbols:
            raise ValueError(f"tdm pilot length {tp} must be a multiple of {n_t}")
        pilot_symbols = np.arange(tp)
    elif pattern in ("1p", "2p"):
        if n_symbols % SLOT_SYMBOLS != 0:
            raise ValueError(f"comb patterns need whole {SLOT_SYMBOLS}-symbol slots")
        offsets = [2] if pattern == "1p" else [2, 11]
        starts = np.arange(0, n_symbols, SLOT_SYMBOLS)
        pilot_symbols = np.sort(np.concatenate([starts + off for off in offsets]))
        tp = 0
    else:
        raise ValueError(f"unknown OP pattern {pattern!r}")
    data_mask[:, pilot_symbols] = False
    return FramePlan(
        scheme="op",
        n_subcarriers=n_subcarriers,
        n_symbols=n_symbols,
        n_t=n_t,
        rho=1.0,
        ddst_subcarriers=np.array([], dtype=int),
        data_re_mask=data_mask,
        ddst_ratio=0.0,
        op_pattern=pattern,
        op_pilot_symbols=pilot_symbols,
        op_tp=tp,
    )


@dataclass(frozen=True)
class TxFrame:
    """Assembled transmit frame plus the quantities needed by exact tests."""

    grid: np.ndarray  # (K, T, N_t) complex transmit symbols
    plan: FramePlan
    data: np.ndarray  # (K, N_t, T) pre-perturbation data symbols (0 on non-data REs)
    perturbation: np.ndarray  # (K, N_t, T) subtracted perturbation (0 off the DDST set)
    payload_bits: np.ndarray | None = None


def op_pilot_grid(plan: FramePlan, pilots: np.ndarray) -> np.ndarray:
    """(K, T, N_t) pilot values of an OP frame (zero on non-pilot REs)."""
    k_count, t_count, n_t = plan.n_subcarriers, plan.n_symbols, plan.n_t
    grid = np.zeros((k_count, t_count, n_t), dtype=np.complex128)
    if plan.op_pattern == "tdm":
        # full-power reuse of the cyclic training rows on the pilot block
        for t in plan.op_pilot_symbols:
            grid[:, t, :] = pilots[:, t][None, :]
    else:
        comb = plan.op_comb_mask()  # (K, N_t)
        for t in plan.op_pilot_symbols:
            grid[:, t, :] = np.where(comb, 1.0 + 0.0j, 0.0)
    return grid


def assemble_frame(
    payload_symbols: np.ndarray,
    plan: FramePlan,
    ddst: DdstParams | None,
    pilots: np.ndarray,
) -> TxFrame:
    """Build the (K, T, N_t) transmit grid from per-antenna payload symbols.

    `payload_symbols` has shape (N_t, capacity) in canonical RE order
    (subcarrier-major, then symbol index over data-bearing REs).
    """
    k_count, t_count, n_t = plan.n_subcarriers, plan.n_symbols, plan.n_t
    capacity = plan.data_capacity_per_antenna()
    payload_symbols = np.asarray(payload_symbols)
    if payload_symbols.shape != (n_t, capacity):
        raise ValueError(
            f"payload shape {payload_symbols.shape} does not match plan capacity ({n_t}, {capacity})"
        )
    data = np.zeros((k_count, n_t, t_count), dtype=np.complex128)
    flat_mask = plan.data_re_mask  # (K, T)
    for n in range(n_t):
        layer = np.zeros((k_count, t_count), dtype=np.complex128)
        layer[flat_mask] = payload_symbols[n]
        data[:, n, :] = layer

    perturbation = np.zeros_like(data)
    grid = np.transpose(data, (0, 2, 1)).copy()  # (K, T, N_t), plain data everywhere

    if plan.scheme in ("fullddst", "mix"):
        assert ddst is not None
        dd = plan.ddst_subcarriers
        precoded, pert = ddst_precode(data[dd], ddst.projector)
        perturbation[dd] = pert
        superimposed = np.sqrt(plan.rho) * pilots[None, :, :] + ddst.alpha * precoded
        grid[dd] = np.transpose(superimposed, (0, 2, 1))
    elif plan.scheme == "op":
        grid += op_pilot_grid(plan, pilots)
    else:
        raise ValueError(f"unknown scheme {plan.scheme!r}")
    return TxFrame(grid=grid, plan=plan, data=data, perturbation=perturbation)
