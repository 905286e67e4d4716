import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coexsim.mac import ENTRANT_VARIANTS, MacMechanism, MacVariant, efficiency_from_times, frame_times
from coexsim.phy import (DOT11N_PROFILE, LTE_PROFILE, AutoRateProfile, LinkState, ThroughputReport, auto_rate,
                         dbm_to_mw, evaluate, interference_at_users, link_state, sinr_db)
from coexsim.propagation import build_link_budgets
from coexsim.scenario import Phy, generate_indoor_indoor
from coexsim.spectrum import CsGraph, assign_channels, build_cs_graph

from oracles import literal_interference

ORACLE_NAMES = {MacVariant.LBT: "lbt", MacVariant.ALWAYS_ON: "always_on",
                MacVariant.FIXED50_COORDINATED: "fixed50_coord",
                MacVariant.FIXED50_UNCOORDINATED: "fixed50_uncoord", MacVariant.ADAPTIVE: "adaptive",
                MacVariant.IDEAL_TDMA: "ideal_tdma"}


def random_instance(rng, n=5):
    entrant = rng.random(n) < 0.5
    entrant[0], entrant[1] = False, True
    ch = rng.integers(0, 2, n)
    co = ch[:, None] == ch[None, :]
    np.fill_diagonal(co, False)
    detected = co & (rng.random((n, n)) < 0.5)
    power = 10 ** rng.uniform(-12, -5, (n, n))
    return CsGraph(co, detected, entrant), power


@pytest.mark.parametrize("variant", list(ORACLE_NAMES))
def test_interference_matches_literal_tables(variant):
    rng = np.random.default_rng(list(ORACLE_NAMES).index(variant))
    mac = MacMechanism(variant, -62.0)
    nonzero = 0
    for _ in range(100):
        g, power = random_instance(rng)
        i_leg, i_ent = interference_at_users(g, power, mac)
        o_leg, o_ent = literal_interference(ORACLE_NAMES[variant], g.detected, g.entrant, g.cochannel, power)
        np.testing.assert_allclose(i_leg, o_leg, rtol=1e-12, atol=0)
        np.testing.assert_allclose(i_ent, o_ent, rtol=1e-12, atol=0)
        nonzero += int((o_ent > 0).sum() + (o_leg > 0).sum())
    assert nonzero > 100


class TestAutoRate:
    def test_dot11n_steps(self):
        assert auto_rate(3.99, DOT11N_PROFILE) == 0.0
        assert auto_rate(4.0, DOT11N_PROFILE) * 20 == pytest.approx(6.5)
        assert auto_rate(21.5, DOT11N_PROFILE) * 20 == pytest.approx(58.5)
        assert auto_rate(40.0, DOT11N_PROFILE) * 20 == pytest.approx(65.0)

    def test_lte_curve(self):
        assert auto_rate(-10.5, LTE_PROFILE) == 0.0
        assert auto_rate(0.0, LTE_PROFILE) == pytest.approx(0.75)
        assert auto_rate(10.0, LTE_PROFILE) == pytest.approx(0.75 * math.log2(11))
        assert auto_rate(60.0, LTE_PROFILE) == pytest.approx(4.32)

    @given(a=st.floats(-30, 60), b=st.floats(-30, 60))
    def test_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        for prof in (DOT11N_PROFILE, LTE_PROFILE):
            assert auto_rate(lo, prof) <= auto_rate(hi, prof) <= prof.peak_efficiency

    def test_noise_floor(self):
        assert DOT11N_PROFILE.noise_dbm == pytest.approx(-174 + 10 * math.log10(20e6) + 15)
        assert LTE_PROFILE.noise_dbm == pytest.approx(-174 + 10 * math.log10(20e6) + 9)

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            AutoRateProfile(Phy.DOT11N, 15.0, steps=((5.0, 1.0), (4.0, 2.0)))


def test_sinr():
    assert sinr_db(dbm_to_mw(-60.0), 0.0, -90.0) == pytest.approx(30.0)
    assert sinr_db(dbm_to_mw(-60.0), dbm_to_mw(-60.0), -200.0) == pytest.approx(0.0, abs=1e-9)
    assert sinr_db(0.0, 0.0, -90.0) == -np.inf


def test_report_product():
    r = ThroughputReport(np.array([False, True]), np.zeros(2), np.array([3.25, 2.0]), np.array([0.5, 1.0]),
                         np.array([1.0, 0.9]), np.array([0.5, 0.25]), np.array([1.0, 1.0]), np.full(2, 20e6))
    np.testing.assert_allclose(r.throughput_mbps, [0.5 * 0.5 * 3.25 * 20, 0.9 * 0.25 * 2 * 20])
    assert len(r) == 2 and r.population(True).tolist() == [r.throughput_mbps[1]]
    rows = list(r.rows())
    assert rows[0]["population"] == "legacy" and rows[1]["COLL"] == 0.9


def _lone_link(signal_dbm):
    g = CsGraph(np.zeros((1, 1), bool), np.zeros((1, 1), bool), np.array([False]))
    s = dbm_to_mw(signal_dbm)
    return g, LinkState(np.array([s]), np.array([[s]]))


def test_isolated_legacy_ap():
    g, links = _lone_link(-40.0)
    rep = evaluate(g, links, [Phy.DOT11N], ENTRANT_VARIANTS["always_on"].mac)
    s1 = efficiency_from_times(*frame_times(Phy.DOT11N, 65.0), 1)
    assert rep.throughput_mbps[0] == pytest.approx(s1 * 65.0)
    assert rep.air_time[0] == 1.0 and rep.coll[0] == 1.0


def test_out_of_range_ap_gets_zero():
    g, links = _lone_link(-100.0)
    rep = evaluate(g, links, [Phy.DOT11N], ENTRANT_VARIANTS["lbt62_lte"].mac)
    assert rep.rho[0] == 0.0 and rep.throughput_mbps[0] == 0.0 and 0 < rep.s[0] <= 1


@pytest.mark.parametrize("name", sorted(ENTRANT_VARIANTS))
def test_evaluate_invariants(name):
    v = ENTRANT_VARIANTS[name]
    for seed in range(5):
        real = generate_indoor_indoor(seed, 10, 10).with_entrant_phy(v.phy)
        build_link_budgets(real)
        g = build_cs_graph(real, assign_channels(real, "single", v.mac), v.mac)
        links = link_state(real)
        rep = evaluate(g, links, [ap.phy for ap in real.aps], v.mac)
        peak = np.where([ap.phy is Phy.DOT11N for ap in real.aps], 65.0, 4.32 * 20)
        assert np.all(rep.throughput_mbps >= 0) and np.all(rep.throughput_mbps <= peak + 1e-9)
        assert np.all((rep.coll > 0) & (rep.coll <= 1))
        np.testing.assert_allclose(links.signal_mw, np.diagonal(links.rx_user_mw))
        if v.mac.variant is MacVariant.ALWAYS_ON:
            assert np.all(rep.air_time[10:] == 1.0)


def test_link_state_signal_is_serving_ap():
    real = generate_indoor_indoor(3, 4, 2)
    t = build_link_budgets(real)
    links = link_state(real)
    for x in range(6):
        assert 10 * math.log10(links.rx_user_mw[x, 2]) == pytest.approx(23.0 - t.user_total[2, x])
        assert 10 * math.log10(links.signal_mw[x]) == pytest.approx(23.0 - t.user_total[x, x])
