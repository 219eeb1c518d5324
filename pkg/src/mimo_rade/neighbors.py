"""Nearest neighbours inside the message lattice X = C^n.

For a PSK constellation every message is a coordinate-wise rotation of the
base message ``x0 = (c_0, ..., c_0)``, so the k-nearest list of ``x0`` can be
built once and transported to any ``x`` by adding symbol-index shifts
modulo ``m``.
"""

from __future__ import annotations

import heapq
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import Constellation, Message

__all__ = [
    "NeighborList",
    "nearest_in_x",
    "round_to_lattice",
    "build_base_neighbor_list",
    "neighbors_of",
    "rotate_neighbors",
    "distance_key",
    "save_neighbor_list",
    "load_neighbor_list",
]

# squared distances are compared after rounding to this many decimals so that
# mathematically equal sums (e.g. d(1) + d(3) == d(4) for 8-PSK) tie exactly
_KEY_SCALE = 1e9
_TIE_RTOL = 1e-12


def distance_key(dist_sq: float) -> int:
    return int(round(dist_sq * _KEY_SCALE))


def round_to_lattice(points: np.ndarray, v) -> np.ndarray:
    """Per-coordinate nearest constellation index for an array of vectors.

    ``v`` may have any shape; the result has the same shape. Near-ties go to
    the smallest constellation index.
    """
    v = np.asarray(v, dtype=np.complex128)
    diff = v[..., None] - points
    d = diff.real * diff.real + diff.imag * diff.imag
    dmin = d.min(axis=-1, keepdims=True)
    close = d <= dmin * (1.0 + _TIE_RTOL) + 1e-300
    return np.argmax(close, axis=-1)


def nearest_in_x(constellation: Constellation, v) -> Message:
    """Closest point of X to ``v``; decomposes into n one-dimensional searches."""
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    return Message.from_array(round_to_lattice(constellation.points, v))


@dataclass(frozen=True, eq=False)
class NeighborList:
    """The ``k`` nearest messages to ``x0``, excluding ``x0`` itself.

    ``offsets[i]`` holds per-coordinate symbol shifts; ``distances`` is
    non-decreasing and ordered by (distance, shift tuple).
    """

    m: int
    n: int
    offsets: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.offsets.shape[0]

    def __len__(self) -> int:
        return self.k

    def __eq__(self, other):
        if not isinstance(other, NeighborList):
            return NotImplemented
        return (
            self.m == other.m
            and self.n == other.n
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.distances, other.distances)
        )

    def single_coordinate_prefix(self) -> int:
        """Length of the leading run of entries that change exactly one coordinate."""
        nonzero = np.count_nonzero(self.offsets, axis=1)
        bad = np.flatnonzero(nonzero != 1)
        return int(bad[0]) if bad.size else self.k


def _class_sq_distances(m: int) -> np.ndarray:
    # |1 - exp(2 pi i c / m)|^2 for shift classes c = 0..m//2
    c = np.arange(m // 2 + 1)
    return 4.0 * np.sin(np.pi * c / m) ** 2


def _descriptors_for_counts(m: int, n: int, counts: tuple[int, ...]):
    """All shift tuples whose class histogram is ``counts``, in lexicographic order.

    ``counts[c-1]`` is the number of coordinates in shift class ``c``; the
    remaining coordinates carry shift 0.
    """
    remaining = [n - sum(counts), *counts]
    out: list[tuple[int, ...]] = []
    prefix: list[int] = []

    def walk(pos: int):
        if pos == n:
            out.append(tuple(prefix))
            return
        for shift in range(m):
            cls = min(shift, m - shift)
            if remaining[cls]:
                remaining[cls] -= 1
                prefix.append(shift)
                walk(pos + 1)
                prefix.pop()
                remaining[cls] += 1

    walk(0)
    return out


def build_base_neighbor_list(constellation: Constellation, n: int, k: int) -> NeighborList:
    """k nearest neighbours of ``x0`` in X by best-first search over shift classes.

    Per-coordinate distances take only ``m // 2 + 1`` distinct values, so the
    search walks histograms of shift classes in increasing total distance and
    only expands the groups it needs; it never touches all ``m**n`` points.
    """
    if not constellation.is_psk:
        raise ValueError("neighbour rotation requires a PSK (unit-modulus, equispaced) constellation")
    m = constellation.m
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if k >= m**n:
        raise ValueError(f"k={k} must be smaller than |X| = {m}**{n}")

    n_classes = m // 2
    class_d2 = _class_sq_distances(m)

    def d2_of(counts):
        return float(sum(cnt * class_d2[c + 1] for c, cnt in enumerate(counts)))

    start = (0,) * n_classes
    heap: list[tuple[int, tuple[int, ...], float]] = []
    seen = {start}

    def push_successors(counts):
        if sum(counts) == n:
            return
        for c in range(n_classes):
            nxt = counts[:c] + (counts[c] + 1,) + counts[c + 1 :]
            if nxt not in seen:
                seen.add(nxt)
                d2 = d2_of(nxt)
                heapq.heappush(heap, (distance_key(d2), nxt, d2))

    push_successors(start)
    offsets: list[tuple[int, ...]] = []
    dists: list[float] = []
    while len(offsets) < k:
        key, counts, d2 = heapq.heappop(heap)
        group = [(counts, d2)]
        push_successors(counts)
        while heap and heap[0][0] == key:
            _, more, more_d2 = heapq.heappop(heap)
            group.append((more, more_d2))
            push_successors(more)
        members = []
        for cnts, gd2 in group:
            dist = math.sqrt(gd2)
            members.extend((desc, dist) for desc in _descriptors_for_counts(m, n, cnts))
        members.sort(key=lambda item: item[0])
        for desc, dist in members[: k - len(offsets)]:
            offsets.append(desc)
            dists.append(dist)

    off = np.array(offsets, dtype=np.int64).reshape(k, n)
    dist_arr = np.array(dists, dtype=float)
    off.setflags(write=False)
    dist_arr.setflags(write=False)
    return NeighborList(m=m, n=int(n), offsets=off, distances=dist_arr)


def rotate_neighbors(x_indices, base: NeighborList, count: int | None = None) -> np.ndarray:
    """Index array ``(count, n)`` of the first ``count`` neighbours of ``x``."""
    x_indices = np.asarray(x_indices, dtype=np.int64)
    count = base.k if count is None else count
    if count > base.k:
        raise ValueError(f"requested {count} neighbours but the base list holds {base.k}")
    return (base.offsets[:count] + x_indices) % base.m


def neighbors_of(x: Message, base: NeighborList, j: int) -> Message:
    """The j-th (1-based) nearest neighbour of ``x`` in X."""
    if not 1 <= j <= base.k:
        raise IndexError(f"neighbour rank {j} outside [1, {base.k}]")
    if x.n != base.n:
        raise ValueError("message length does not match the neighbour list")
    return Message.from_array((base.offsets[j - 1] + x.indices()) % base.m)


_HEADER = struct.Struct("<III")


def _record_dtype(n: int) -> np.dtype:
    return np.dtype([("shift", "<u2", (n,)), ("distance", "<f8")])


def save_neighbor_list(base: NeighborList, path) -> None:
    """Binary cache: ``<III`` header (m, n, k) then k records of n uint16 + float64."""
    records = np.zeros(base.k, dtype=_record_dtype(base.n))
    records["shift"] = base.offsets
    records["distance"] = base.distances
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(base.m, base.n, base.k))
        fh.write(records.tobytes())


def load_neighbor_list(path) -> NeighborList:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated neighbour cache header")
    m, n, k = _HEADER.unpack_from(data)
    dtype = _record_dtype(n)
    body = data[_HEADER.size :]
    if len(body) != k * dtype.itemsize:
        raise ValueError(f"{path}: expected {k} records, file holds {len(body) / dtype.itemsize:g}")
    records = np.frombuffer(body, dtype=dtype)
    off = records["shift"].astype(np.int64).reshape(k, n)
    dist = records["distance"].copy()
    off.setflags(write=False)
    dist.setflags(write=False)
    return NeighborList(m=m, n=n, offsets=off, distances=dist)
