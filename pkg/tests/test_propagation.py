import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coexsim import kernels
from coexsim.propagation import (DEFAULT_PROFILE, PropagationProfile, _boxes, build_link_budgets,
                                 count_crossings, dump_link_budgets, free_space_loss, los_street_canyon,
                                 mwf_loss, nlos_over_rooftop, outdoor_loss, pair_shadowing, sample_shadowing,
                                 segment_losses)
from coexsim.scenario import (Building, dual_stripe_building, generate_indoor_indoor, generate_indoor_outdoor,
                              generate_outdoor_outdoor)

from oracles import voxel_walk

L0 = free_space_loss(1.0, 5e9)


class TestMwf:
    def test_reference_loss(self):
        assert L0 == pytest.approx(46.42, abs=0.01)
        assert mwf_loss(1.0, 0, 0) == pytest.approx(L0)

    def test_two_walls(self):
        assert mwf_loss(1.0, 2, 0) - L0 == pytest.approx(30.0, abs=1e-12)

    def test_wall_and_floor(self):
        assert mwf_loss(1.0, 1, 1) - L0 == pytest.approx(45.0, abs=1e-12)

    def test_increments(self):
        assert mwf_loss(1.0, 3, 0) - L0 == pytest.approx(16 + 14 + 14)
        assert mwf_loss(1.0, 0, 2) - L0 == pytest.approx(29 + 24)

    def test_distance_term(self):
        assert mwf_loss(10.0, 0, 0) - L0 == pytest.approx(20.0)

    @pytest.mark.parametrize("d", [0.0, -1.0])
    def test_domain(self, d):
        with pytest.raises(ValueError):
            mwf_loss(d, 0, 0)

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            PropagationProfile(wall_first_db=-1)
        with pytest.raises(ValueError):
            PropagationProfile(shadow_sigma_indoor_db=-1)


class TestOutdoor:
    def test_los_anchor(self):
        assert los_street_canyon(1.0) == pytest.approx(L0, abs=0.1)

    def test_los_doubling_before_breakpoint(self):
        # breakpoint 4*h1*h2/lambda = 1000 m at 10 m / 1.5 m and 5 GHz
        for d in (5.0, 20.0, 100.0, 400.0):
            assert los_street_canyon(2 * d) - los_street_canyon(d) == pytest.approx(20 * math.log10(2), abs=1e-9)

    def test_nlos_above_los_at_100m(self):
        assert nlos_over_rooftop(100.0) > los_street_canyon(100.0)
        assert outdoor_loss(100.0, False) > outdoor_loss(100.0, True)

    @given(d=st.floats(1.0, 3000.0), h=st.floats(1.5, 30.0))
    @settings(max_examples=200, deadline=None)
    def test_nlos_dominates(self, d, h):
        assert nlos_over_rooftop(d, h_tx=h) >= los_street_canyon(d, h_tx=h)

    def test_monotone(self):
        d = np.linspace(1, 3000, 2000)
        for los in (True, False):
            assert np.all(np.diff(outdoor_loss(d, los)) >= 0)

    def test_clamped_below_1m(self):
        assert outdoor_loss(0.3, True) == outdoor_loss(1.0, True)


def _box_building():
    # one 10 x 10 x 3 m apartment at the origin
    return Building((0.0, 0.0), (1, 1), floors=1)


class TestCascade:
    def test_indoor_to_outdoor(self):
        b = _box_building()
        med, d, c, same = segment_losses([9.0, 5.0, 1.5], [20.0, 5.0, 1.5], [0], [-1], [b])
        expect = mwf_loss(1.0, 0, 0) + 19.1 + outdoor_loss(10.0, True, h_tx=1.5, h_rx=1.5)
        assert med[0] == pytest.approx(expect, abs=1e-9)
        assert c["external"][0] == 1 and not same[0]

    def test_two_buildings(self):
        b1 = Building((0.0, 0.0), (2, 1), floors=1)
        b2 = Building((40.0, 0.0), (2, 1), floors=1)
        p0, p1 = [15.0, 5.0, 1.5], [48.0, 5.0, 1.5]
        med, d, c, same = segment_losses(p0, p1, [0], [1], [b1, b2])
        expect = (mwf_loss(5.0, 0, 0) + 19.1 + outdoor_loss(20.0, True, h_tx=1.5, h_rx=1.5)
                  + mwf_loss(8.0, 0, 0) + 19.1)
        assert med[0] == pytest.approx(expect, abs=1e-9)
        assert c["external"][0] == 2

    def test_entry_loss_per_wall(self):
        b = _box_building()
        base = segment_losses([9.0, 5.0, 1.5], [20.0, 5.0, 1.5], [0], [-1], [b])[0][0]
        prof = PropagationProfile(entry_loss_db=0.0)
        no_entry = segment_losses([9.0, 5.0, 1.5], [20.0, 5.0, 1.5], [0], [-1], [b], prof)[0][0]
        assert base - no_entry == pytest.approx(19.1, abs=1e-12)

    def test_same_building_is_mwf(self):
        b, _ = dual_stripe_building()
        med, d, c, same = segment_losses([6.0, 6.0, 1.0], [36.0, 6.0, 1.0], [0], [0], [b])
        assert same[0] and c["walls"][0] == 3
        assert med[0] == pytest.approx(mwf_loss(30.0, 3, 0))

    def test_occluded_link_is_nlos(self):
        blocker = Building((40.0, 40.0), (2, 2), floors=3)
        p0, p1 = [0.0, 50.0, 10.0], [100.0, 50.0, 1.5]
        med, d, c, _ = segment_losses(p0, p1, [-1], [-1], [blocker])
        assert c["occluded"][0]
        assert med[0] == pytest.approx(outdoor_loss(d[0], False, h_tx=10.0, h_rx=1.5))


class TestCrossings:
    def test_same_apartment(self):
        b, _ = dual_stripe_building()
        assert count_crossings([6, 6, 1], [14, 14, 2], [b]) == (0, 0, 0)

    def test_adjacent_apartments(self):
        b, _ = dual_stripe_building()
        assert count_crossings([6, 6, 1], [16, 6, 1], [b]) == (1, 0, 0)

    def test_indoor_to_outdoor(self):
        b, _ = dual_stripe_building()
        # from column 2 of the lower stripe straight down out of the building
        assert count_crossings([27, 8, 1], [27, 1, 1], [b]) == (0, 0, 1)
        # diagonally through two more apartments then out of the end wall
        w, f, e = count_crossings([86, 7, 1], [120, 7, 1], [b])
        assert (w, f, e) == (1, 0, 1)

    def test_floors(self):
        b = Building((0.0, 0.0), (1, 1), floors=4)
        assert count_crossings([5, 5, 1], [5, 5, 10], [b]) == (0, 3, 0)


def _random_segments(n, seed):
    rng = np.random.default_rng(seed)
    real = generate_indoor_outdoor(seed, 5000.0, 20)
    dual, _ = dual_stripe_building()
    buildings = list(real.buildings)
    boxes, cells = _boxes(buildings)
    nodes = np.concatenate([real.ap_positions, real.user_positions])
    nb = np.concatenate([real.ap_buildings, real.user_buildings])
    # plus free points: random heights outdoors and inside buildings
    free = np.column_stack([rng.uniform(0, 346, n), rng.uniform(0, 389, n), rng.uniform(0, 20, n)])
    fb = np.array([next((k for k, b in enumerate(buildings) if b.contains(p)), -1) for p in free])
    pts = np.concatenate([nodes, free])
    bl = np.concatenate([nb, fb])
    i, j = rng.integers(0, len(pts), (2, n))
    keep = i != j
    return pts[i[keep]], pts[j[keep]], bl[i[keep]], bl[j[keep]], boxes, cells


@pytest.fixture(scope="module")
def crossing_cases():
    p0, p1, b0, b1, boxes, cells = _random_segments(10_000, 21)
    oracle = [voxel_walk(p0[q], p1[q], boxes, cells, b0[q], b1[q]) for q in range(len(p0))]
    return (p0, p1, b0, b1, boxes, cells), oracle


_BACKENDS = {"numpy": kernels.segment_crossings_py, "cython": kernels.segment_crossings_compiled}


@pytest.mark.parametrize("backend", sorted(_BACKENDS))
def test_crossings_match_voxel_walk(crossing_cases, backend):
    fn = _BACKENDS[backend]
    if fn is None:
        pytest.skip("compiled kernel not built")
    args, oracle = crossing_cases
    res = fn(*args)
    assert len(oracle) > 9_900
    for key in ("walls", "floors", "external", "walls0", "floors0", "walls1", "floors1", "occluded"):
        got = res[key]
        want = np.array([o[key] for o in oracle])
        assert np.array_equal(got, want), (key, np.flatnonzero(got != want)[:5])
    for key in ("t_exit", "t_entry"):
        want = np.array([o[key] for o in oracle])
        np.testing.assert_allclose(res[key], want, atol=1e-9)
    assert res["walls"].sum() > 0 and res["floors"].sum() > 0 and res["occluded"].any()


def test_backends_identical():
    if kernels.segment_crossings_compiled is None:
        pytest.skip("compiled kernel not built")
    args = _random_segments(5000, 5)
    a = kernels.segment_crossings_py(*args)
    b = kernels.segment_crossings_compiled(*args)
    for k in a:
        assert np.array_equal(a[k], b[k]), k


class TestShadowing:
    def test_statistics(self):
        keys = np.arange(1_000_000, dtype=np.uint64)
        s = pair_shadowing(12345, keys * 2, keys * 2 + 1, 4.0)
        assert abs(s.mean()) < 0.05
        assert s.std() == pytest.approx(4.0, abs=0.05)

    def test_symmetric_and_repeatable(self):
        a = pair_shadowing(9, np.array([3, 10]), np.array([10, 3]), 7.0)
        assert a[0] == a[1]
        assert pair_shadowing(9, 3, 10, 7.0) == pair_shadowing(9, 3, 10, 7.0)
        assert pair_shadowing(9, 3, 10, 7.0) != pair_shadowing(10, 3, 10, 7.0)

    def test_sample_shadowing_sigmas(self):
        rng = np.random.default_rng(0)
        assert sample_shadowing(rng, "indoor", 1_000_000).std() == pytest.approx(4.0, abs=0.05)
        assert sample_shadowing(rng, "other", 1_000_000).std() == pytest.approx(7.0, abs=0.05)
        assert abs(sample_shadowing(rng, "other", 1_000_000).mean()) < 0.05


@pytest.mark.parametrize("make", [lambda: generate_indoor_indoor(3, 10, 10),
                                  lambda: generate_indoor_outdoor(3, 500, 10),
                                  lambda: generate_outdoor_outdoor(3, 10, 10)])
def test_link_budget_invariants(make):
    r = make()
    t = build_link_budgets(r)
    n = len(r.aps)
    off = ~np.eye(n, dtype=bool)
    # reciprocity of median loss and shadowing on AP-to-AP links
    assert np.array_equal(t.ap_median[off], t.ap_median.T[off])
    assert np.array_equal(t.ap_shadow, t.ap_shadow.T)
    assert np.all(t.ap_distance[off] > 0) and np.all(t.user_distance > 0)
    np.testing.assert_array_equal(t.ap_total, t.ap_median + t.ap_shadow)
    assert np.all(t.user_total >= t.user_median - 6 * 7.0)
    assert np.all(np.isinf(np.diag(t.ap_median)))
    link = t.user_link(0, 0)
    assert link.total_loss == pytest.approx(link.median_loss + link.shadowing)


def test_median_monotone_in_distance():
    b, _ = dual_stripe_building()
    p0 = np.array([[6.0, 6.0, 1.0]] * 4)
    p1 = np.array([[6.5, 6.0, 1.0], [7.0, 6.0, 1.0], [8.0, 6.0, 1.0], [9.5, 6.0, 1.0]])
    med = segment_losses(p0, p1, [0] * 4, [0] * 4, [b])[0]
    assert np.all(np.diff(med) >= 0)


def test_link_budget_dump(tmp_path):
    r = generate_indoor_indoor(2, 3, 2)
    t = build_link_budgets(r)
    f = tmp_path / "lb.csv"
    dump_link_budgets(t, f)
    rows = list(csv.DictReader(f.open()))
    assert list(rows[0]) == ["from", "to", "distance_m", "walls", "floors", "median_db", "shadow_db", "total_db"]
    assert len(rows) == 5 * 4 + 5 * 5


def test_prefix_budgets_are_slices():
    r = generate_indoor_indoor(4, 10, 10)
    t = build_link_budgets(r)
    p = r.entrant_prefix(3).link_budgets
    np.testing.assert_array_equal(p.ap_total, t.ap_total[:13, :13])
    np.testing.assert_array_equal(p.user_total, t.user_total[:13, :13])
    q = t.subset([0, 2, 5])
    np.testing.assert_array_equal(q.ap_median, t.ap_median[np.ix_([0, 2, 5], [0, 2, 5])])
