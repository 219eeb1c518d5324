"""Maximum-likelihood decoders for ``y = H x + sigma z`` over X = C^n.

Every decoder returns a :class:`~mimo_rade.channel.DecodeOutcome` whose
``r`` and ``chi`` are recomputed directly from ``y - H x`` so outcomes from
different schemes compare exactly when they agree on ``x``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel, DecodeOutcome, outcome_for
from .linalg_core import (
    SeededRng,
    SingularSystemError,
    as_complex_vector,
    chi2_sf_even,
    sample_complex_normal,
    solve_2x2,
)
from .neighbors import NeighborList, rotate_neighbors, round_to_lattice

__all__ = [
    "Rade1Params",
    "Rade2Params",
    "DecoderTrace",
    "BruteForceBudgetError",
    "DecoderDegenerateError",
    "BRUTE_MAX_CANDIDATES",
    "brute",
    "brute_batch",
    "nnx",
    "rade1_search",
    "rade1_all",
    "rade2_search",
    "rade2_noise_solve",
    "rade2_all",
    "supercharge",
]

BRUTE_MAX_CANDIDATES = 2**32
RADE1_PIVOT_GUARD = 1e-8


class BruteForceBudgetError(RuntimeError):
    """Raised when ``m**n`` exceeds the enumeration budget."""


class DecoderDegenerateError(ArithmeticError):
    """Raised when the RaDe1 pivot coordinate makes the noise estimate meaningless."""


@dataclass(frozen=True)
class Rade1Params:
    min_iters: int = 1
    max_iters: int = 1
    chi_thresh: float = 0.5

    def __post_init__(self):
        if self.min_iters < 1 or self.max_iters < self.min_iters:
            raise ValueError(f"need 1 <= min_iters <= max_iters, got {self.min_iters}, {self.max_iters}")
        if not 0.0 <= self.chi_thresh <= 1.0:
            raise ValueError("chi_thresh must lie in [0, 1]")

    @classmethod
    def fixed(cls, iterations: int) -> "Rade1Params":
        return cls(iterations, iterations)


@dataclass(frozen=True)
class Rade2Params:
    min_iters: int = 1
    max_iters: int = 1
    chi_thresh: float = 0.5
    chi_stop: float = 1e-3

    def __post_init__(self):
        if self.min_iters < 1 or self.max_iters < self.min_iters:
            raise ValueError(f"need 1 <= min_iters <= max_iters, got {self.min_iters}, {self.max_iters}")
        if not 0.0 <= self.chi_thresh <= 1.0 or not 0.0 <= self.chi_stop <= 1.0:
            raise ValueError("chi_thresh and chi_stop must lie in [0, 1]")

    @classmethod
    def fixed(cls, iterations: int, chi_stop: float = 1e-3) -> "Rade2Params":
        return cls(iterations, iterations, chi_stop=chi_stop)


@dataclass
class DecoderTrace:
    iterations_used: int = 0
    pairs_skipped: int = 0
    fallback_used: bool = False


def _residuals(model: ChannelModel, cand_indices: np.ndarray, y_obs: np.ndarray) -> np.ndarray:
    """``||y - H x||^2`` for each row of a ``(K, n)`` index array."""
    cand = model.constellation.points[cand_indices]
    w = y_obs - cand @ model.h.T
    return np.einsum("ij,ij->i", w.real, w.real) + np.einsum("ij,ij->i", w.imag, w.imag)


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------

_SUFFIX_ROWS = 2**18
_CHUNK_ELEMS = 2**22
_EPS32 = float(np.finfo(np.float32).eps)


class _BruteTables:
    """Partial sums of ``H x`` over X split into a prefix and a suffix block.

    Tables are grown one coordinate at a time (``T' = T[:, None] + h_j c``),
    which enumerates each block in lexicographic symbol order at O(n) cost per
    entry. The full candidate with prefix ``p`` and suffix ``s`` has flat
    lexicographic rank ``p * m**len(suffix) + s``.
    """

    def __init__(self, model: ChannelModel):
        h = model.h
        pts = model.constellation.points
        m, n = pts.size, model.n
        ns = n
        while ns > 0 and m**ns > _SUFFIX_ROWS:
            ns -= 1
        ns = max(ns, 1)
        self.m, self.n, self.ns = m, n, ns
        self.prefix = self._partial_sums(h[:, : n - ns], pts)
        self.suffix = self._partial_sums(h[:, n - ns :], pts)
        suf = self.suffix
        self.suffix_norm = np.einsum("ij,ij->i", suf.real, suf.real) + np.einsum(
            "ij,ij->i", suf.imag, suf.imag
        )
        self.suffix_real32 = np.ascontiguousarray(
            np.concatenate([suf.real, suf.imag], axis=1), dtype=np.float32
        )
        self.suffix_norm32 = self.suffix_norm.astype(np.float32)
        self.suffix_max = float(np.sqrt(self.suffix_norm.max()))

    @staticmethod
    def _partial_sums(cols: np.ndarray, pts: np.ndarray) -> np.ndarray:
        rows = cols.shape[0]
        table = np.zeros((1, rows), dtype=np.complex128)
        for j in range(cols.shape[1]):
            step = pts[:, None] * cols[:, j][None, :]
            table = (table[:, None, :] + step[None, :, :]).reshape(-1, rows)
        return table

    def decode(self, y: np.ndarray) -> tuple[int, float]:
        targets = y[None, :] - self.prefix
        t_norm = np.einsum("ij,ij->i", targets.real, targets.real) + np.einsum(
            "ij,ij->i", targets.imag, targets.imag
        )
        t_max = float(np.sqrt(t_norm.max()))
        # float32 screening error is far below this margin; survivors are
        # re-scored in float64
        margin = 64.0 * self.n * _EPS32 * (self.suffix_max + t_max) ** 2 + 1e-12
        t32 = np.concatenate([targets.real, targets.imag], axis=1).T.astype(np.float32)
        t_norm32 = t_norm.astype(np.float32)
        rows = self.suffix_real32.shape[0]
        width = max(1, _CHUNK_ELEMS // rows)
        cand_p: list[np.ndarray] = []
        cand_s: list[np.ndarray] = []
        best = np.inf
        for start in range(0, targets.shape[0], width):
            stop = min(start + width, targets.shape[0])
            d = self.suffix_real32 @ t32[:, start:stop]
            d *= -2.0
            d += self.suffix_norm32[:, None]
            d += t_norm32[None, start:stop]
            col_min = d.min(axis=0)
            chunk_best = float(col_min.min())
            if chunk_best > best + margin:
                continue
            best = min(best, chunk_best)
            s_idx, p_idx = np.nonzero(d <= best + margin)
            cand_p.append(p_idx + start)
            cand_s.append(s_idx)
        p_all = np.concatenate(cand_p)
        s_all = np.concatenate(cand_s)
        diff = targets[p_all] - self.suffix[s_all]
        exact = np.einsum("ij,ij->i", diff.real, diff.real) + np.einsum(
            "ij,ij->i", diff.imag, diff.imag
        )
        flat = p_all.astype(np.int64) * (self.m**self.ns) + s_all
        order = np.lexsort((flat, exact))
        return int(flat[order[0]]), float(exact[order[0]])

    def unrank(self, flat: int) -> np.ndarray:
        digits = np.empty(self.n, dtype=np.int64)
        for pos in range(self.n - 1, -1, -1):
            flat, digits[pos] = divmod(flat, self.m)
        return digits


# tables depend on H and the constellation only, so models that differ in sigma share them
_BRUTE_CACHE_SIZE = 8
_brute_cache: "OrderedDict[bytes, _BruteTables]" = OrderedDict()


def _brute_tables(model: ChannelModel) -> _BruteTables:
    key = model.h.tobytes() + model.constellation.points.tobytes()
    tables = _brute_cache.get(key)
    if tables is None:
        tables = _BruteTables(model)
        _brute_cache[key] = tables
        while len(_brute_cache) > _BRUTE_CACHE_SIZE:
            _brute_cache.popitem(last=False)
    else:
        _brute_cache.move_to_end(key)
    return tables


def brute(model: ChannelModel, y_obs, max_candidates: int = BRUTE_MAX_CANDIDATES) -> DecodeOutcome:
    """Exhaustive maximum-likelihood decode over all of X.

    Ties go to the lexicographically smallest symbol-index vector.
    """
    size = model.constellation.m**model.n
    if size > max_candidates:
        raise BruteForceBudgetError(
            f"|X| = {model.constellation.m}**{model.n} = {size} exceeds the budget of {max_candidates}"
        )
    y_obs = as_complex_vector(y_obs)
    if y_obs.size != model.n:
        raise ValueError("received vector length does not match the channel")
    tables = _brute_tables(model)
    flat, _ = tables.decode(y_obs)
    return outcome_for(model, tables.unrank(flat), y_obs)


def brute_batch(model: ChannelModel, y_batch, max_candidates: int = BRUTE_MAX_CANDIDATES) -> list[DecodeOutcome]:
    return [brute(model, y, max_candidates) for y in np.asarray(y_batch, dtype=np.complex128)]


# ---------------------------------------------------------------------------
# nearest neighbours in X
# ---------------------------------------------------------------------------


def nnx(model: ChannelModel, y_obs, k: int, base: NeighborList | None = None):
    """Round ``H^{-1} y`` to X and score it together with its k-1 nearest neighbours.

    ``k`` counts the rounded point itself, so ``k = 1`` is plain zero-forcing
    rounding and ``base`` may be omitted.
    Returns ``(x_tilde_obs, outcome)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    y_obs = as_complex_vector(y_obs)
    x_tilde = model.equalize(y_obs)
    centre = round_to_lattice(model.constellation.points, x_tilde)
    if k == 1:
        return x_tilde, outcome_for(model, centre, y_obs)
    if base is None or base.k < k - 1:
        raise ValueError(f"nnx with k={k} needs a base neighbour list with >= {k - 1} entries")
    cands = np.vstack([centre[None, :], rotate_neighbors(centre, base, k - 1)])
    best = int(np.argmin(_residuals(model, cands, y_obs)))
    return x_tilde, outcome_for(model, cands[best], y_obs)


# ---------------------------------------------------------------------------
# RaDe1
# ---------------------------------------------------------------------------


def _rade1_core(model: ChannelModel, y_obs: np.ndarray, x_tilde: np.ndarray, rng: SeededRng):
    n = model.n
    j = model.j_rade1
    v_n = model.svd.v[:, n - 1]
    pivot = v_n[j]
    if abs(pivot) < RADE1_PIVOT_GUARD:
        raise DecoderDegenerateError(f"|v_n({j})| = {abs(pivot):.3e} below guard {RADE1_PIVOT_GUARD}")
    pts = model.constellation.points
    z = sample_complex_normal(rng, pts.size)
    # the estimate carries the sigma / sigma_n factor, hence no rescaling of v_n
    zn = (x_tilde[j] - pts - z * (model.sigma * model.s_cum[n - 2, j])) / pivot
    trial = x_tilde[None, :] - zn[:, None] * v_n[None, :]
    cands = round_to_lattice(pts, trial)
    res = _residuals(model, cands, y_obs)
    return cands[int(np.argmin(res))]


def rade1_search(model: ChannelModel, y_obs, rng: SeededRng) -> DecodeOutcome:
    """One randomized pass: guess the pivot symbol, strip the weakest-direction noise, round."""
    y_obs = as_complex_vector(y_obs)
    best = _rade1_core(model, y_obs, model.equalize(y_obs), rng)
    return outcome_for(model, best, y_obs)


def _iterate(search, min_iters: int, max_iters: int, chi_thresh: float):
    best = search()
    used = 1
    while used < max_iters:
        if used >= min_iters and best.chi > chi_thresh:
            break
        nxt = search()
        used += 1
        if nxt.residual_sq < best.residual_sq:
            best = nxt
    return best, used


def rade1_all(model: ChannelModel, y_obs, params: Rade1Params, rng: SeededRng):
    """Repeat :func:`rade1_search`, keep the smallest ``r``, stop once ``chi > chi_thresh``.

    At least ``min_iters`` and at most ``max_iters`` searches are run.
    Returns ``(outcome, trace)``.
    """
    y_obs = as_complex_vector(y_obs)
    x_tilde = model.equalize(y_obs)

    def search():
        return outcome_for(model, _rade1_core(model, y_obs, x_tilde, rng), y_obs)

    best, used = _iterate(search, params.min_iters, params.max_iters, params.chi_thresh)
    return best, DecoderTrace(iterations_used=used)


# ---------------------------------------------------------------------------
# RaDe2
# ---------------------------------------------------------------------------


def rade2_noise_solve(model: ChannelModel, x_tilde, c1, c2, z_low):
    """Noise components along ``v_{n-1}`` and ``v_n`` implied by pivot guesses.

    ``c1`` and ``c2`` are the guessed symbols at ``j1`` and ``j2``; ``z_low``
    holds samples for the first ``n - 2`` components in its last axis. All
    three broadcast against each other. Raises
    :class:`~mimo_rade.linalg_core.SingularSystemError` for a singular system.
    """
    n = model.n
    sig = model.sigma
    sv = model.svd.singular_values
    v = model.svd.v
    j1, j2 = model.j1_rade2, model.j2_rade2
    weights = sig / sv[: n - 2]
    u_hat = z_low @ (weights * v[j1, : n - 2])
    w_hat = z_low @ (weights * v[j2, : n - 2])
    a11 = sig * v[j1, n - 2] / sv[n - 2]
    a12 = sig * v[j1, n - 1] / sv[n - 1]
    a21 = sig * v[j2, n - 2] / sv[n - 2]
    a22 = sig * v[j2, n - 1] / sv[n - 1]
    return solve_2x2(a11, a12, a21, a22, x_tilde[j1] - c1 - u_hat, x_tilde[j2] - c2 - w_hat)


def _rade2_core(model: ChannelModel, y_obs, x_tilde, chi_stop: float, rng: SeededRng):
    n = model.n
    pts = model.constellation.points
    m = pts.size
    sig = model.sigma
    sv = model.svd.singular_values
    v = model.svd.v

    # one fresh draw per (i1, i2) pair, i1 outer
    z_low = sample_complex_normal(rng, (m, m, n - 2))
    try:
        z1, z2 = rade2_noise_solve(model, x_tilde, pts[:, None], pts[None, :], z_low)
    except SingularSystemError:
        return None, m * m
    z1 = z1.reshape(-1)
    z2 = z2.reshape(-1)
    r = np.abs(z1) ** 2 + np.abs(z2) ** 2
    keep = ~(chi2_sf_even(4, r) < chi_stop)
    skipped = int(m * m - keep.sum())
    if not keep.any():
        return None, skipped
    trial = (
        x_tilde[None, :]
        - (z1[keep] * (sig / sv[n - 2]))[:, None] * v[None, :, n - 2]
        - (z2[keep] * (sig / sv[n - 1]))[:, None] * v[None, :, n - 1]
    )
    cands = round_to_lattice(pts, trial)
    res = _residuals(model, cands, y_obs)
    return cands[int(np.argmin(res))], skipped


def rade2_search(model: ChannelModel, y_obs, chi_stop: float, rng: SeededRng):
    """One randomized pass over all ``m**2`` guesses of the two pivot symbols.

    Pairs whose reconstructed noise has chi-square(4) tail below ``chi_stop``
    are dropped; if none survive the result falls back to ``nnx(k=1)``.
    Returns ``(outcome, trace)``.
    """
    if model.n < 3:
        raise ValueError("RaDe2 needs n >= 3")
    y_obs = as_complex_vector(y_obs)
    x_tilde = model.equalize(y_obs)
    return _rade2_once(model, y_obs, x_tilde, chi_stop, rng)


def _rade2_once(model, y_obs, x_tilde, chi_stop, rng):
    best, skipped = _rade2_core(model, y_obs, x_tilde, chi_stop, rng)
    trace = DecoderTrace(iterations_used=1, pairs_skipped=skipped)
    if best is None:
        trace.fallback_used = True
        best = round_to_lattice(model.constellation.points, x_tilde)
    return outcome_for(model, best, y_obs), trace


def rade2_all(model: ChannelModel, y_obs, params: Rade2Params, rng: SeededRng):
    if model.n < 3:
        raise ValueError("RaDe2 needs n >= 3")
    y_obs = as_complex_vector(y_obs)
    x_tilde = model.equalize(y_obs)
    total = DecoderTrace()

    def search():
        outcome, trace = _rade2_once(model, y_obs, x_tilde, params.chi_stop, rng)
        total.pairs_skipped += trace.pairs_skipped
        total.fallback_used |= trace.fallback_used
        return outcome

    best, used = _iterate(search, params.min_iters, params.max_iters, params.chi_thresh)
    total.iterations_used = used
    return best, total


# ---------------------------------------------------------------------------
# supercharging
# ---------------------------------------------------------------------------


def _single_shift_residuals(model: ChannelModel, x_idx, y_obs, offsets) -> np.ndarray:
    # each offset row changes one coordinate, so ||w - h_j delta||^2 is O(n)
    pts = model.constellation.points
    m = pts.size
    h = model.h
    w = y_obs - h @ pts[x_idx]
    base = float(np.vdot(w, w).real)
    g = w.conj() @ h
    col_norm = np.einsum("ij,ij->j", h.real, h.real) + np.einsum("ij,ij->j", h.imag, h.imag)
    coord = np.argmax(offsets != 0, axis=1)
    shift = offsets[np.arange(offsets.shape[0]), coord]
    delta = pts[(x_idx[coord] + shift) % m] - pts[x_idx[coord]]
    return base - 2.0 * (g[coord] * delta).real + (delta.real**2 + delta.imag**2) * col_norm[coord]


def supercharge(
    model: ChannelModel,
    y_obs,
    k1: int,
    base: NeighborList,
    seed_outcome: DecodeOutcome,
    fast: bool = True,
) -> DecodeOutcome:
    """Replace a candidate by the best of its ``k1`` nearest neighbours if that lowers ``r``."""
    if k1 < 1:
        raise ValueError("k1 must be >= 1")
    if base.k < k1:
        raise ValueError(f"base neighbour list holds {base.k} entries, need {k1}")
    y_obs = as_complex_vector(y_obs)
    x_idx = seed_outcome.x.indices()
    if fast and base.single_coordinate_prefix() >= k1:
        res = _single_shift_residuals(model, x_idx, y_obs, base.offsets[:k1])
        cands = None
    else:
        cands = rotate_neighbors(x_idx, base, k1)
        res = _residuals(model, cands, y_obs)
    pick = int(np.argmin(res))
    best_idx = cands[pick] if cands is not None else (base.offsets[pick] + x_idx) % base.m
    seed_res = seed_outcome.residual_sq
    if not np.isfinite(seed_res):
        seed_res = outcome_for(model, x_idx, y_obs).residual_sq
    challenger = outcome_for(model, best_idx, y_obs)
    if challenger.residual_sq < seed_res:
        return challenger
    return seed_outcome
