import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimo_rade.channel import Constellation, Message, make_constellation_psk
from mimo_rade.neighbors import (
    build_base_neighbor_list,
    distance_key,
    load_neighbor_list,
    nearest_in_x,
    neighbors_of,
    rotate_neighbors,
    round_to_lattice,
    save_neighbor_list,
)

C8 = make_constellation_psk(8)


def exhaustive(m, n):
    """All non-base messages sorted by (distance, shift tuple)."""
    pts = make_constellation_psk(m).points
    allx = np.array(list(itertools.product(range(m), repeat=n)), dtype=np.int64)
    d2 = np.sum(np.abs(pts[allx] - pts[0]) ** 2, axis=1)
    keys = [(distance_key(d), tuple(row)) for d, row in zip(d2, allx.tolist())]
    order = sorted(range(len(keys)), key=keys.__getitem__)
    order = [i for i in order if d2[i] > 0]
    return allx[order], np.sqrt(d2[order])


class TestNearest:
    def test_lattice_point(self):
        x = Message((3, 0, 7))
        assert nearest_in_x(C8, x.vector(C8)) == x

    def test_off_lattice(self):
        assert nearest_in_x(C8, [0.9 + 0.1j]).symbol_indices == (0,)
        brute = int(np.argmin(np.abs(C8.points - (0.9 + 0.1j))))
        assert brute == 0

    def test_bisector_tie(self):
        assert nearest_in_x(C8, [np.exp(1j * np.pi / 8)]).symbol_indices == (0,)

    @settings(max_examples=100)
    @given(st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
                    min_size=1, max_size=6))
    def test_global_minimizer(self, vals):
        v = np.array(vals)
        got = round_to_lattice(C8.points, v)
        best = np.min(np.abs(v[:, None] - C8.points) ** 2, axis=1)
        np.testing.assert_allclose(np.abs(v - C8.points[got]) ** 2, best, rtol=1e-11, atol=1e-15)


class TestBaseList:
    def test_2n_single_steps(self):
        for n in (3, 6, 8):
            base = build_base_neighbor_list(C8, n, 2 * n)
            np.testing.assert_allclose(base.distances, 2 * np.sin(np.pi / 8))
            assert np.all(np.count_nonzero(base.offsets, axis=1) == 1)
            shifts = base.offsets[base.offsets != 0]
            assert set(shifts.tolist()) == {1, 7}
            assert base.single_coordinate_prefix() == 2 * n

    def test_complete_small(self):
        m4 = make_constellation_psk(4)
        base = build_base_neighbor_list(m4, 2, 15)
        got = {tuple(r) for r in base.offsets.tolist()}
        assert got == set(itertools.product(range(4), repeat=2)) - {(0, 0)}

    def test_m8_n3_k100(self):
        base = build_base_neighbor_list(C8, 3, 100)
        offs, dist = exhaustive(8, 3)
        assert np.array_equal(base.offsets, offs[:100])
        np.testing.assert_allclose(base.distances, dist[:100], rtol=1e-12)

    def test_exhaustive_oracle_all_small_configs(self):
        checked = 0
        for m in (2, 3, 4, 5, 8):
            for n in range(1, 9):
                if m**n > 10**5:
                    break
                offs, dist = exhaustive(m, n)
                total = offs.shape[0]
                for k in sorted({1, min(2 * n, total), min(37, total), total}):
                    base = build_base_neighbor_list(make_constellation_psk(m), n, k)
                    assert np.array_equal(base.offsets, offs[:k]), (m, n, k)
                    np.testing.assert_allclose(base.distances, dist[:k], rtol=1e-12)
                    checked += 1
        assert checked > 40

    def test_invariants(self):
        base = build_base_neighbor_list(C8, 5, 500)
        assert np.all(np.diff(base.distances) >= -1e-12)
        assert base.distances[0] > 0
        assert len({tuple(r) for r in base.offsets.tolist()}) == base.k
        assert not np.any(np.all(base.offsets == 0, axis=1))

    def test_distance_depends_on_shift_multiset_only(self):
        base = build_base_neighbor_list(C8, 4, 800)
        groups = {}
        for row, d in zip(base.offsets.tolist(), base.distances):
            groups.setdefault(tuple(sorted(min(s, 8 - s) for s in row)), set()).add(round(d, 12))
        assert all(len(v) == 1 for v in groups.values())

    def test_large_k_is_cheap(self):
        base = build_base_neighbor_list(C8, 8, 8**5 + 1)
        assert base.k == 8**5 + 1
        assert np.all(np.diff(base.distances) >= -1e-12)

    def test_rejects(self):
        with pytest.raises(ValueError):
            build_base_neighbor_list(C8, 2, 64)
        with pytest.raises(ValueError):
            build_base_neighbor_list(C8, 2, 0)
        with pytest.raises(ValueError):
            build_base_neighbor_list(Constellation(np.array([0, 1, 2.5])), 2, 3)


class TestRotation:
    def test_identity_rotation(self):
        base = build_base_neighbor_list(C8, 3, 20)
        x0 = Message((0, 0, 0))
        for j in (1, 7, 20):
            assert neighbors_of(x0, base, j).symbol_indices == tuple(base.offsets[j - 1])

    def test_isometry(self):
        base = build_base_neighbor_list(C8, 5, 200)
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = Message.from_array(rng.integers(0, 8, 5))
            for j in (1, 50, 200):
                d = np.linalg.norm(neighbors_of(x, base, j).vector(C8) - x.vector(C8))
                assert d == pytest.approx(base.distances[j - 1], rel=1e-12)

    def test_rotated_list_matches_exhaustive(self):
        base = build_base_neighbor_list(C8, 2, 63)
        allx = np.array(list(itertools.product(range(8), repeat=2)))
        rng = np.random.default_rng(4)
        for _ in range(20):
            x = rng.integers(0, 8, 2)
            rot = rotate_neighbors(x, base)
            d = np.linalg.norm(C8.points[allx] - C8.points[x], axis=1)
            ranked = sorted(d[i] for i in range(64) if d[i] > 0)
            np.testing.assert_allclose(np.linalg.norm(C8.points[rot] - C8.points[x], axis=1), ranked,
                                       rtol=1e-12)
            assert {tuple(r) for r in rot.tolist()} == {tuple(r) for r in allx.tolist()} - {tuple(x)}

    def test_distinct_and_exclude_x(self):
        base = build_base_neighbor_list(C8, 4, 300)
        x = np.array([5, 2, 7, 0])
        rot = rotate_neighbors(x, base)
        assert len({tuple(r) for r in rot.tolist()}) == 300
        assert not np.any(np.all(rot == x, axis=1))

    def test_bad_rank(self):
        base = build_base_neighbor_list(C8, 3, 5)
        with pytest.raises(IndexError):
            neighbors_of(Message((0, 0, 0)), base, 6)


class TestCache:
    def test_round_trip(self, tmp_path):
        base = build_base_neighbor_list(C8, 6, 1000)
        path = tmp_path / "nb.bin"
        save_neighbor_list(base, path)
        assert load_neighbor_list(path) == base
        raw = path.read_bytes()
        assert raw[:12] == np.array([8, 6, 1000], dtype="<u4").tobytes()
        assert len(raw) == 12 + 1000 * (6 * 2 + 8)

    def test_truncated(self, tmp_path):
        base = build_base_neighbor_list(C8, 3, 10)
        path = tmp_path / "nb.bin"
        save_neighbor_list(base, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ValueError):
            load_neighbor_list(path)
