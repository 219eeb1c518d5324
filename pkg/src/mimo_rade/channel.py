"""Transmission model: PSK constellation, channel matrices, messages and noise.

Indices in this package are 0-based: ``j_rade1`` is a column position in
``range(n)``, and ``s[k, j]`` holds the per-coordinate noise amplification of
the (k+1)-th singular direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg_core import (
    SeededRng,
    SvdFactors,
    as_complex_matrix,
    as_complex_vector,
    chi2_sf_even,
    sample_complex_normal,
    svd,
)

__all__ = [
    "Constellation",
    "Message",
    "ChannelModel",
    "DecodeOutcome",
    "NearSingularChannelError",
    "make_constellation_psk",
    "generate_channel",
    "precompute",
    "sample_message",
    "transmit",
    "residual_stat",
    "normalized_residual",
]

SINGULAR_RATIO = 1e-12


class NearSingularChannelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Constellation:
    points: np.ndarray
    is_psk: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128).reshape(-1)
        if pts.size == 0:
            raise ValueError("constellation needs at least one point")
        if np.unique(pts).size != pts.size:
            raise ValueError("constellation points must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.size

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, Constellation):
            return NotImplemented
        return self.is_psk == other.is_psk and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.is_psk, self.points.tobytes()))


def make_constellation_psk(m: int) -> Constellation:
    """``m`` equispaced unit-circle points ``exp(2*pi*i*k/m)``, k = 0..m-1."""
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise ValueError(f"constellation size must be a positive integer, got {m!r}")
    k = np.arange(int(m))
    pts = np.exp(2j * np.pi * k / m)
    # exact values on the axes keep lattice points reproducible
    pts.real[np.abs(pts.real) < 1e-15] = 0.0
    pts.imag[np.abs(pts.imag) < 1e-15] = 0.0
    return Constellation(pts, is_psk=True)


@dataclass(frozen=True)
class Message:
    """A point of X = C^n stored as symbol indices into a constellation."""

    symbol_indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "symbol_indices", tuple(int(i) for i in self.symbol_indices))

    @classmethod
    def from_array(cls, indices) -> "Message":
        return cls(tuple(np.asarray(indices).tolist()))

    @property
    def n(self) -> int:
        return len(self.symbol_indices)

    def indices(self) -> np.ndarray:
        return np.array(self.symbol_indices, dtype=np.int64)

    def vector(self, constellation: Constellation) -> np.ndarray:
        idx = self.indices()
        if idx.size and (idx.min() < 0 or idx.max() >= constellation.m):
            raise ValueError("symbol index out of range for constellation")
        return constellation.points[idx]


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Channel matrix plus everything the decoders precompute from it."""

    h: np.ndarray
    svd: SvdFactors
    sigma: float
    s: np.ndarray
    s_cum: np.ndarray
    j_rade1: int
    j1_rade2: int
    j2_rade2: int
    constellation: Constellation = field(default_factory=lambda: make_constellation_psk(8))

    @property
    def n(self) -> int:
        return self.h.shape[0]

    @cached_property
    def h_inv(self) -> np.ndarray:
        f = self.svd
        return (f.v / f.singular_values) @ f.u.conj().T

    def equalize(self, y_obs) -> np.ndarray:
        """Zero-forcing estimate ``H^{-1} y`` through the stored SVD."""
        return self.h_inv @ y_obs


@dataclass(frozen=True)
class DecodeOutcome:
    x: Message
    r: float
    chi: float
    # un-normalized ||y - Hx||^2; decoders compare on this so sigma = 0 works
    residual_sq: float = float("nan")


def precompute(h, sigma: float, constellation: Constellation | None = None) -> ChannelModel:
    """SVD of ``h`` and the per-coordinate quantities used by the decoders.

    ``sigma = 0`` is accepted and models a noiseless channel.
    """
    h = as_complex_matrix(h)
    n, cols = h.shape
    if n != cols:
        raise ValueError(f"channel matrix must be square, got {n}x{cols}")
    if not np.isfinite(sigma) or sigma < 0:
        raise ValueError(f"noise deviation must be finite and >= 0, got {sigma!r}")
    factors = svd(h)
    sv = factors.singular_values
    if sv[-1] <= SINGULAR_RATIO * sv[0]:
        raise NearSingularChannelError(
            f"channel is numerically singular (sigma_n / sigma_1 = {sv[-1] / sv[0]:.3e})"
        )
    s = np.abs(factors.v.T) / sv[:, None]
    s_cum = np.sqrt(np.cumsum(s * s, axis=0))
    # np.argmin / stable argsort pick the smallest index among ties
    j_rade1 = int(np.argmin(s_cum[n - 2])) if n >= 2 else 0
    if n >= 3:
        order = np.argsort(s_cum[n - 3], kind="stable")
        j1, j2 = int(order[0]), int(order[1])
    elif n == 2:
        j1, j2 = 0, 1
    else:
        j1 = j2 = 0
    h = h.copy()
    h.setflags(write=False)
    return ChannelModel(
        h=h,
        svd=factors,
        sigma=float(sigma),
        s=s,
        s_cum=s_cum,
        j_rade1=j_rade1,
        j1_rade2=j1,
        j2_rade2=j2,
        constellation=constellation if constellation is not None else make_constellation_psk(8),
    )


def generate_channel(
    n: int, sigma: float, rng: SeededRng, constellation: Constellation | None = None
) -> ChannelModel:
    """Draw ``H`` with i.i.d. standard complex normal entries and precompute."""
    if isinstance(n, bool) or int(n) != n or not 2 <= n <= 32:
        raise ValueError(f"channel dimension must be in [2, 32], got {n!r}")
    h = sample_complex_normal(rng, (n, n))
    return precompute(h, sigma, constellation)


def sample_message(constellation: Constellation, n: int, rng: SeededRng) -> Message:
    return Message.from_array(rng.integers(constellation.m, size=n))


def sample_messages(constellation: Constellation, n: int, count: int, rng: SeededRng) -> np.ndarray:
    """``count`` uniform messages as a ``(count, n)`` index array."""
    return rng.integers(constellation.m, size=(count, n))


def transmit(model: ChannelModel, x: Message, rng: SeededRng) -> np.ndarray:
    xv = x.vector(model.constellation)
    if xv.size != model.n:
        raise ValueError(f"message length {xv.size} does not match channel dimension {model.n}")
    z = sample_complex_normal(rng, model.n)
    return model.h @ xv + model.sigma * z


def normalized_residual(residual_sq, sigma: float, scale=1.0):
    """``residual_sq / sigma**2``; with ``sigma = 0`` rounding-level residuals map to 0."""
    residual_sq = np.asarray(residual_sq, dtype=float)
    if sigma > 0:
        r = residual_sq / (sigma * sigma)
    else:
        tiny = 1e-20 * (1.0 + np.asarray(scale, dtype=float))
        r = np.where(residual_sq <= tiny, 0.0, np.inf)
    return float(r) if r.ndim == 0 else r


def residual_stat(model: ChannelModel, x: Message, y_obs) -> tuple[float, float]:
    """Normalized squared residual ``r`` and confidence ``1 - F_chi2(2n)(r)``."""
    y_obs = as_complex_vector(y_obs)
    w = y_obs - model.h @ x.vector(model.constellation)
    res = float(np.vdot(w, w).real)
    r = normalized_residual(res, model.sigma, np.vdot(y_obs, y_obs).real)
    return r, chi2_sf_even(2 * model.n, r)


def outcome_for(model: ChannelModel, indices, y_obs, residual_sq: float | None = None) -> DecodeOutcome:
    x = Message.from_array(indices)
    if residual_sq is None:
        w = y_obs - model.h @ model.constellation.points[x.indices()]
        residual_sq = float(np.vdot(w, w).real)
    r = normalized_residual(residual_sq, model.sigma, np.vdot(y_obs, y_obs).real)
    return DecodeOutcome(x=x, r=r, chi=chi2_sf_even(2 * model.n, r), residual_sq=residual_sq)
