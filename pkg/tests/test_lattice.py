import itertools
import json

import numpy as np
import pytest

from gfflab.lattice import (
    DeskScaleError, LatticeSpec, Region, SparseAnchor, build_box, edges,
    generate_delta_sparse, neighbors, outer_boundary, region_from_file,
    region_to_file, sparse_complement,
)


class TestBuildBox:
    def test_smallest_box(self):
        box = build_box(LatticeSpec(d=1, N=1))
        assert box.sites == ((-1,), (0,), (1,))

    def test_d3_count(self):
        assert len(build_box(LatticeSpec(d=3, N=2))) == 125

    def test_lexicographic_order(self):
        box = build_box(LatticeSpec(d=2, N=3))
        assert len(box) == 49
        assert box.sites[0] == (-3, -3)
        assert box.sites[-1] == (3, 3)
        assert list(box.sites) == sorted(box.sites)

    @pytest.mark.parametrize("d,N", [(1, 5), (2, 4), (3, 3)])
    def test_size_formula(self, d, N):
        assert len(build_box(LatticeSpec(d=d, N=N))) == (2 * N + 1) ** d

    def test_desk_scale_cap(self):
        with pytest.raises(DeskScaleError):
            build_box(LatticeSpec(d=3, N=40))

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            LatticeSpec(d=0, N=1)
        with pytest.raises(ValueError):
            LatticeSpec(d=2, N=0)


class TestRegion:
    def test_sites_must_be_inside_box(self):
        with pytest.raises(ValueError):
            Region(LatticeSpec(d=1, N=2), [(3,)])

    def test_dedup_and_order(self):
        r = Region(LatticeSpec(d=1, N=2), [(1,), (-1,), (1,)])
        assert r.sites == ((-1,), (1,))

    def test_json_round_trip(self, tmp_path):
        r = Region(LatticeSpec(d=2, N=2), [(0, 0), (1, 0), (0, -1)])
        path = tmp_path / "region.json"
        region_to_file(r, path)
        assert region_from_file(path) == r


class TestOuterBoundary:
    def test_single_site_d1(self):
        r = Region(LatticeSpec(d=1, N=1), [(0,)])
        assert outer_boundary(r) == {(-1,), (1,)}

    def test_single_site_d2(self):
        r = Region(LatticeSpec(d=2, N=1), [(0, 0)])
        assert outer_boundary(r) == {(1, 0), (-1, 0), (0, 1), (0, -1)}

    def test_two_site_d2_hand_enumeration(self):
        r = Region(LatticeSpec(d=2, N=2), [(0, 0), (1, 0)])
        expected = {(-1, 0), (0, 1), (0, -1), (2, 0), (1, 1), (1, -1)}
        assert outer_boundary(r) == expected

    def test_disjoint_and_adjacent(self):
        rng = np.random.default_rng(0)
        from conftest import random_region

        for _ in range(20):
            r = random_region(rng, n_sites=int(rng.integers(1, 9)))
            bd = outer_boundary(r)
            assert not bd & set(r.sites)
            for s in bd:
                assert any(nb in r for nb in neighbors(s))

    def test_boundary_may_leave_box(self):
        box = build_box(LatticeSpec(d=1, N=1))
        assert (2,) in outer_boundary(box)


class TestEdges:
    def test_single_site_d1(self):
        r = Region(LatticeSpec(d=1, N=1), [(0,)])
        assert sorted(edges(r)) == [((-1,), (0,)), ((0,), (1,))]

    def test_single_site_d2(self):
        r = Region(LatticeSpec(d=2, N=1), [(0, 0)])
        assert len(edges(r)) == 4

    def test_d3_box_brute_force(self):
        box = build_box(LatticeSpec(d=3, N=1))
        cloud = set(box.sites) | outer_boundary(box)
        expected = set()
        for x, y in itertools.combinations(sorted(cloud), 2):
            if sum((a - b) ** 2 for a, b in zip(x, y)) == 1 and (
                x in box or y in box
            ):
                expected.add((x, y))
        assert set(edges(box)) == expected

    def test_no_duplicates_unit_length(self):
        rng = np.random.default_rng(3)
        from conftest import random_region

        for _ in range(10):
            r = random_region(rng, n_sites=int(rng.integers(1, 10)))
            es = edges(r)
            assert len(es) == len(set(es))
            for x, y in es:
                assert sum((a - b) ** 2 for a, b in zip(x, y)) == 1


class TestSparseAnchors:
    def test_small_delta_is_exact_sublattice(self):
        sa = generate_delta_sparse(LatticeSpec(d=3, N=10), 5)
        expected = {
            (5 * i, 5 * j, 5 * k)
            for i in range(-2, 3) for j in range(-2, 3) for k in range(-2, 3)
        }
        assert set(sa.anchors) == expected
        assert len(sa.anchors) == 125
        assert sa.is_valid()

    def test_jitter_stays_close(self):
        sa = generate_delta_sparse(LatticeSpec(d=1, N=20), 20, jitter_seed=4)
        assert len(sa.anchors) == 3
        for z, y in zip(sorted(sa.anchors), [(-20,), (0,), (20,)]):
            assert abs(z[0] - y[0]) < 2
            assert -20 <= z[0] <= 20

    def test_jittered_instance_valid(self):
        sa = generate_delta_sparse(LatticeSpec(d=2, N=15), 12, jitter_seed=7)
        assert sa.is_valid()

    @pytest.mark.parametrize("d,N,delta", [
        (1, 8, 1), (1, 20, 13), (2, 6, 4), (2, 12, 11), (3, 4, 3), (3, 6, 15),
    ])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_definition_predicate_always_holds(self, d, N, delta, seed):
        sa = generate_delta_sparse(LatticeSpec(d=d, N=N), delta, jitter_seed=seed)
        assert sa.is_valid()

    def test_deterministic_below_eleven(self):
        a0 = generate_delta_sparse(LatticeSpec(d=2, N=9), 10, jitter_seed=0)
        a1 = generate_delta_sparse(LatticeSpec(d=2, N=9), 10, jitter_seed=99)
        assert a0.anchors == a1.anchors

    def test_validity_catches_bad_sets(self):
        spec = LatticeSpec(d=1, N=10)
        good = generate_delta_sparse(spec, 5)
        bad = SparseAnchor(spec=spec, delta=5,
                           anchors=good.anchors[:-1] + ((1,),))
        assert not bad.is_valid()
        stray = SparseAnchor(spec=spec, delta=5,
                             anchors=good.anchors + ((7,),))
        assert not stray.is_valid()

    def test_anchor_json_round_trip(self):
        sa = generate_delta_sparse(LatticeSpec(d=2, N=15), 12, jitter_seed=7)
        assert SparseAnchor.from_json(sa.to_json()).anchors == sa.anchors


class TestSparseComplement:
    def test_d1_example(self):
        sa = SparseAnchor(spec=LatticeSpec(d=1, N=2), delta=5, anchors=((0,),))
        assert sparse_complement(sa).sites == ((-2,), (-1,), (1,), (2,))

    def test_counts(self):
        sa = generate_delta_sparse(LatticeSpec(d=3, N=10), 5)
        assert len(sparse_complement(sa)) == 9261 - 125

    def test_empty_anchor_gives_full_box(self):
        sa = SparseAnchor(spec=LatticeSpec(d=2, N=2), delta=3, anchors=())
        assert sparse_complement(sa) == build_box(LatticeSpec(d=2, N=2))

    def test_region_file_accepts_anchor_doc(self, tmp_path):
        sa = generate_delta_sparse(LatticeSpec(d=1, N=4), 3)
        path = tmp_path / "anchor.json"
        path.write_text(json.dumps(sa.to_json()))
        assert region_from_file(path) == sparse_complement(sa)
