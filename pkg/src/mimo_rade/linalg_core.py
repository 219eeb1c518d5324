"""Complex linear algebra, seeded sampling and even-degree chi-square helpers.

Vectors and matrices are plain ``numpy`` arrays of ``complex128``; nothing
here wraps them in custom containers.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SvdFactors",
    "SeededRng",
    "SingularSystemError",
    "svd",
    "sample_complex_normal",
    "chi2_cdf_even",
    "chi2_sf_even",
    "solve_2x2",
    "chi2_pdf_even",
    "as_complex_vector",
    "as_complex_matrix",
]

MAX_SVD_DIM = 64


class SingularSystemError(ArithmeticError):
    """Raised by :func:`solve_2x2` when the determinant is below tolerance."""


def as_complex_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.complex128)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"expected a non-empty 1-d complex vector, got shape {arr.shape}")
    return arr


def as_complex_matrix(h) -> np.ndarray:
    arr = np.asarray(h, dtype=np.complex128)
    if arr.ndim != 2 or 0 in arr.shape:
        raise ValueError(f"expected a non-empty 2-d complex matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """``h = u @ diag(singular_values) @ v.conj().T`` with non-increasing values."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v.conj().T


def svd(h) -> SvdFactors:
    """Singular value decomposition of a square complex matrix.

    Backed by LAPACK through :func:`numpy.linalg.svd`. The right factor is
    returned as ``V`` (not ``V*``), so ``v[:, k]`` is the k-th right singular
    vector.
    """
    h = as_complex_matrix(h)
    rows, cols = h.shape
    if rows != cols:
        raise ValueError(f"svd expects a square matrix, got {rows}x{cols}")
    if rows > MAX_SVD_DIM:
        raise ValueError(f"matrix dimension {rows} exceeds {MAX_SVD_DIM}")
    if not np.all(np.isfinite(h)):
        raise ValueError("matrix has non-finite entries")
    u, s, vh = np.linalg.svd(h)
    return SvdFactors(u=u, singular_values=s, v=vh.conj().T)


def _key_part(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        value = int(part)
        if value < 0:
            raise ValueError("substream keys must be non-negative")
        return value
    if isinstance(part, (float, np.floating)):
        return struct.unpack("<Q", struct.pack("<d", float(part)))[0]
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"unsupported substream key component: {part!r}")


class SeededRng:
    """Deterministic generator with keyed substreams.

    Substreams are derived through :class:`numpy.random.SeedSequence` spawn
    keys, so ``SeededRng(s).substream("noise", 3)`` is reproducible and
    statistically independent of ``SeededRng(s).substream("noise", 4)``.
    Instances are single-owner; never share one between workers.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        self.seed = int(seed)
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.key = tuple(key)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def substream(self, *parts) -> "SeededRng":
        return SeededRng(self.seed, self.key + tuple(_key_part(p) for p in parts))

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, high: int, size=None):
        return self.generator.integers(0, high, size=size)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, key={self.key})"


def sample_complex_normal(rng: SeededRng, size=None):
    """Draw ``X + iY`` with ``X, Y`` independent N(0, 1).

    Note ``E|Z|^2 = 2``. Returns a Python ``complex`` when ``size`` is None.
    """
    if size is None:
        x, y = rng.standard_normal(2)
        return complex(x, y)
    shape = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
    pairs = rng.standard_normal(shape + (2,))
    return pairs.view(np.complex128)[..., 0]


def _check_chi2_args(two_n: int, x):
    if isinstance(two_n, bool) or int(two_n) != two_n or two_n < 2 or two_n % 2:
        raise ValueError(f"degrees of freedom must be an even integer >= 2, got {two_n!r}")
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise ValueError("chi-square argument must be non-negative")
    return int(two_n) // 2, x


def chi2_sf_even(two_n: int, x):
    """Upper tail ``P(chi2(two_n) > x)`` via the finite Poisson sum."""
    n, x = _check_chi2_args(two_n, x)
    half = x / 2.0
    term = np.ones_like(half)
    total = np.ones_like(half)
    for k in range(1, n):
        term = term * half / k
        total = total + term
    with np.errstate(invalid="ignore"):
        sf = np.exp(-half) * total
    # inf * 0 at x = inf
    sf = np.where(np.isinf(half), 0.0, sf)
    sf = np.minimum(sf, 1.0)
    return float(sf) if sf.ndim == 0 else sf


def chi2_cdf_even(two_n: int, x):
    """Cumulative distribution function of chi-square with even degrees."""
    sf = chi2_sf_even(two_n, x)
    return 1.0 - sf


def solve_2x2(a11, a12, a21, a22, rhs1, rhs2):
    """Solve ``[[a11, a12], [a21, a22]] @ z = rhs`` by Cramer's rule.

    ``rhs1`` and ``rhs2`` may be arrays (one system per entry, same matrix).
    Raises :class:`SingularSystemError` when
    ``|det| <= 1e-12 * max|a_ij|**2``.
    """
    det = a11 * a22 - a12 * a21
    scale = max(abs(a11), abs(a12), abs(a21), abs(a22))
    if not abs(det) > 1e-12 * scale * scale:
        raise SingularSystemError(f"2x2 system is singular (|det|={abs(det):.3e})")
    z1 = (a22 * rhs1 - a12 * rhs2) / det
    z2 = (a11 * rhs2 - a21 * rhs1) / det
    return z1, z2


def chi2_pdf_even(two_n: int, t: float) -> float:
    n, _ = _check_chi2_args(two_n, t)
    if t <= 0:
        return 0.0 if n > 1 else 0.5
    return math.exp((n - 1) * math.log(t) - t / 2.0 - n * math.log(2.0) - math.lgamma(n))
