import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coexsim.mac import ENTRANT_VARIANTS, MacMechanism, MacVariant
from coexsim.propagation import build_link_budgets
from coexsim.scenario import Phy, generate_indoor_indoor, generate_indoor_outdoor, generate_outdoor_outdoor
from coexsim.spectrum import (ChannelScheme, assign_channels, build_cs_graph, dump_cs_sets, received_power,
                              threshold_matrix)

from oracles import brute_force_detected


def _real(kind, seed, n_ent=5):
    r = {"ii": lambda: generate_indoor_indoor(seed, 10, n_ent),
         "io": lambda: generate_indoor_outdoor(seed, 500, n_ent),
         "oo": lambda: generate_outdoor_outdoor(seed, 10, n_ent)}[kind]()
    build_link_budgets(r)
    return r


def _phys(real, variant):
    return np.array([ap.population.value == "legacy" or variant.phy is Phy.DOT11N for ap in real.aps])


@pytest.mark.parametrize("kind", ["ii", "io", "oo"])
@pytest.mark.parametrize("name", sorted(ENTRANT_VARIANTS))
@pytest.mark.parametrize("scheme", list(ChannelScheme))
def test_graph_matches_brute_force(kind, name, scheme):
    v = ENTRANT_VARIANTS[name]
    real = _real(kind, 17).with_entrant_phy(v.phy)
    plan = assign_channels(real, scheme, v.mac)
    g = build_cs_graph(real, plan, v.mac)
    rx = received_power(real)
    want = brute_force_detected(rx, plan.assignment, real.entrant_mask, _phys(real, v),
                                v.mac.detection_threshold_dbm)
    assert np.array_equal(g.detected, want)
    for x in range(len(real.aps)):
        a = set(g.legacy_in_range(x))
        b = set(g.entrant_in_range(x))
        assert len(a) == g.n_legacy[x] and len(b) == g.n_entrant[x]
        assert all(not real.entrant_mask[z] for z in a) and all(real.entrant_mask[z] for z in b)
        assert x not in a | b


def test_threshold_arithmetic():
    real = generate_indoor_indoor(1, 1, 1)
    t = build_link_budgets(real)
    # 23 dBm through exactly 100 dB: -77 dBm, above -82 and below -62
    t.ap_total = np.array([[np.inf, 100.0], [100.0, np.inf]])
    real._arrays.pop("rx_ap", None)
    assert received_power(real)[0, 1] == pytest.approx(-77.0)
    for thr, heard in ((-82.0, True), (-62.0, False)):
        real11 = real.with_entrant_phy(Phy.DOT11N)
        mac = MacMechanism(MacVariant.LBT, thr)
        g = build_cs_graph(real11, assign_channels(real11, "single", mac), mac)
        assert g.detected[1, 0] == heard
        # the legacy AP applies -82 dBm toward an 802.11n entrant
        assert g.detected[0, 1]
    lte = real.with_entrant_phy(Phy.LTE)
    mac = MacMechanism(MacVariant.LBT, -82.0)
    g = build_cs_graph(lte, assign_channels(lte, "single", mac), mac)
    assert not g.detected[0, 1] and g.detected[1, 0]


def test_threshold_matrix_rows():
    real = generate_indoor_indoor(2, 3, 2).with_entrant_phy(Phy.LTE)
    theta = threshold_matrix(real, MacMechanism(MacVariant.ADAPTIVE, -82.0))
    assert np.all(theta[3:] == -62.0)
    assert np.all(theta[:3, :3] == -82.0) and np.all(theta[:3, 3:] == -62.0)
    theta = threshold_matrix(real, MacMechanism(MacVariant.LBT, -72.0))
    assert np.all(theta[3:] == -72.0)


@given(seed=st.integers(0, 10_000), thr=st.floats(-95.0, -40.0), delta=st.floats(0.0, 20.0))
@settings(max_examples=30, deadline=None)
def test_detection_monotone_in_threshold(seed, thr, delta):
    real = _real("ii", seed).with_entrant_phy(Phy.LTE)
    hi = MacMechanism(MacVariant.LBT, min(thr + delta, -30.0))
    lo = MacMechanism(MacVariant.LBT, thr)
    g_hi = build_cs_graph(real, assign_channels(real, "single", hi), hi)
    g_lo = build_cs_graph(real, assign_channels(real, "single", lo), lo)
    # a more sensitive threshold detects a superset
    assert np.all(g_lo.detected >= g_hi.detected)


class TestChannels:
    def test_single(self):
        real = _real("ii", 3)
        plan = assign_channels(real, "single", ENTRANT_VARIANTS["lbt62_lte"].mac)
        assert np.all(plan.assignment == 0)
        assert plan.cochannel().all()

    @pytest.mark.parametrize("kind", ["ii", "io", "oo"])
    def test_random_range(self, kind):
        for seed in range(20):
            real = _real(kind, seed)
            plan = assign_channels(real, "random", ENTRANT_VARIANTS["always_on"].mac)
            sizes = np.where(real.indoor_mask, 19, 11)
            assert np.all((plan.assignment >= 0) & (plan.assignment < sizes))

    def test_random_uniform(self):
        counts = np.zeros(19)
        for seed in range(400):
            real = generate_indoor_indoor(seed, 10, 0)
            build_link_budgets(real)
            plan = assign_channels(real, "random", ENTRANT_VARIANTS["always_on"].mac)
            counts += np.bincount(plan.assignment, minlength=19)
        expected = counts.sum() / 19
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < 45.0   # 18 degrees of freedom, p < 0.001

    def test_legacy_channels_shared_across_schemes_and_variants(self):
        real = _real("ii", 8)
        ref = assign_channels(real, "random", ENTRANT_VARIANTS["always_on"].mac).assignment[:10]
        for name, v in ENTRANT_VARIANTS.items():
            for scheme in ("random", "sense"):
                assert np.array_equal(assign_channels(real, scheme, v.mac).assignment[:10], ref)

    @pytest.mark.parametrize("kind", ["ii", "io", "oo"])
    @pytest.mark.parametrize("name", ["lbt82_11n", "lbt62_lte", "adaptive_dc"])
    def test_sense_avoids_detected_legacy(self, kind, name):
        mac = ENTRANT_VARIANTS[name].mac
        for seed in range(15):
            real = _real(kind, seed, 8 if kind == "ii" else 10)
            plan = assign_channels(real, "sense", mac)
            rx = received_power(real)
            leg = np.flatnonzero(~real.entrant_mask)
            for y in np.flatnonzero(real.entrant_mask):
                n_ch = 19 if real.indoor_mask[y] else 11
                heard = leg[rx[y, leg] >= mac.detection_threshold_dbm]
                counts = np.bincount(plan.assignment[heard], minlength=n_ch)[:n_ch]
                assert plan.assignment[y] < n_ch
                assert counts[plan.assignment[y]] == counts.min()

    def test_sense_least_detected_fallback(self):
        # three channels, every AP hears every other: all channels are occupied
        real = _real("ii", 4, 6)
        real.link_budgets.ap_total = np.full((16, 16), 60.0)
        real._arrays.pop("rx_ap", None)
        mac = ENTRANT_VARIANTS["lbt62_lte"].mac
        plan = assign_channels(real, "sense", mac, channels_indoor=3)
        leg_counts = np.bincount(plan.assignment[:10], minlength=3)
        assert leg_counts.min() > 0
        for y in range(10, 16):
            assert leg_counts[plan.assignment[y]] == leg_counts.min()


def test_dump_cs_sets(tmp_path):
    real = _real("ii", 5, 3)
    mac = ENTRANT_VARIANTS["lbt62_lte"].mac
    g = build_cs_graph(real, assign_channels(real, "single", mac), mac)
    f = tmp_path / "cs.csv"
    dump_cs_sets(g, f)
    rows = list(csv.DictReader(f.open()))
    assert len(rows) == 13 and rows[0]["population"] == "legacy" and rows[-1]["population"] == "entrant"
    assert rows[0]["legacy_in_range"].split() == [str(z) for z in g.legacy_in_range(0)]
