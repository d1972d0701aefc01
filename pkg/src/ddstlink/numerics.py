"""Complex linear-algebra and randomness primitives shared by all modules.

All computation runs in complex128/float64; 32-bit precision appears only at
file boundaries (see `container`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "hermitian_solve",
    "kron",
    "complex_gaussian",
    "sample_covariance",
]


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by a (seed, stream) pair.

    Identical (seed, stream) pairs reproduce identical draws.  A stream is
    owned by exactly one consumer; derive disjoint child streams with
    :meth:`derive` instead of sharing one generator.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng((self.seed, self.stream))

    def derive(self, *indices: int) -> "RngStream":
        """Child stream with an id mixed from this stream and the indices."""
        mixed = self.stream
        for idx in indices:
            # splitmix-style mixing keeps distinct index tuples distinct
            mixed = (mixed * 0x9E3779B97F4A7C15 + idx + 1) % (1 << 63)
        return RngStream(self.seed, mixed)


def hermitian_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A X = B for Hermitian positive-definite A via Cholesky.

    Accepts stacked systems: `a` of shape (..., n, n) with `b` of shape
    (..., n, m) or (..., n).  Raises ValueError on shape mismatch or a
    non-Hermitian input and numpy.linalg.LinAlgError when A is not positive
    definite.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"matrix A must be square, got shape {a.shape}")
    vector_rhs = b.ndim == a.ndim - 1
    if vector_rhs:
        b = b[..., None]
    if b.shape[-2] != a.shape[-1]:
        raise ValueError(f"dimension mismatch: A {a.shape} vs B {b.shape}")
    herm_err = np.abs(a - np.conj(np.swapaxes(a, -1, -2))).max()
    scale = max(np.abs(a).max(), 1.0)
    if herm_err > 1e-8 * scale:
        raise ValueError("matrix A is not Hermitian")
    chol = np.linalg.cholesky(a)  # raises LinAlgError if not PD
    y = np.linalg.solve(chol, b)
    x = np.linalg.solve(np.conj(np.swapaxes(chol, -1, -2)), y)
    return x[..., 0] if vector_rhs else x


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, shape (r_a r_b) x (c_a c_b)."""
    return np.kron(np.asarray(a), np.asarray(b))


def complex_gaussian(
    shape: tuple[int, ...] | int, variance: float, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """I.i.d. circularly-symmetric complex Gaussian entries, E|w|^2 = variance."""
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    if np.isscalar(shape):
        shape = (int(shape),)
    if variance == 0.0:
        return np.zeros(shape, dtype=np.complex128)
    scale = np.sqrt(variance / 2.0)
    re = gen.standard_normal(shape)
    im = gen.standard_normal(shape)
    return scale * (re + 1j * im)


def sample_covariance(vectors: np.ndarray) -> np.ndarray:
    """(1/N) sum of v v^H over the rows of `vectors`; Hermitian PSD output."""
    vectors = np.asarray(vectors, dtype=np.complex128)
    if vectors.ndim != 2 or vectors.shape[0] < 1:
        raise ValueError("need a non-empty (N, n) array of row vectors")
    cov = np.einsum("ia,ib->ab", vectors, np.conj(vectors)) / vectors.shape[0]
    return 0.5 * (cov + np.conj(cov.T))
