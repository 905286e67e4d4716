"""Interference aggregation, SINR, auto-rate and per-AP throughput."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mac import (DEFAULT_TIMING, LEGACY_MAC, PRINTED_TS_US, FrameTiming, MacMechanism, MacVariant,
                  adaptive_period, air_time_all, collision_degradation_all, f_dut_all, frame_times,
                  frames_per_slot, mac_efficiency)
from .scenario import Phy

THERMAL_NOISE_DBM_HZ = -174.0
BANDWIDTH_HZ = 20e6


@dataclass(frozen=True)
class AutoRateProfile:
    """SINR-to-spectral-efficiency map.

    Either a step table ``steps`` of (min SINR dB, bps/Hz), or the truncated
    capacity form ``min(alpha * log2(1 + sinr), cap)`` above ``min_sinr_db``.
    """
    phy: Phy
    noise_figure_db: float
    bandwidth_hz: float = BANDWIDTH_HZ
    steps: Optional[tuple] = None
    alpha: float = 0.75
    cap: float = 4.32
    min_sinr_db: float = -10.0

    def __post_init__(self):
        if self.steps is not None:
            thr = [s[0] for s in self.steps]
            eff = [s[1] for s in self.steps]
            if thr != sorted(thr) or eff != sorted(eff) or min(eff) <= 0:
                raise ValueError("auto-rate steps must be increasing in SINR and efficiency")

    @property
    def noise_dbm(self) -> float:
        return THERMAL_NOISE_DBM_HZ + 10 * math.log10(self.bandwidth_hz) + self.noise_figure_db

    @property
    def peak_efficiency(self) -> float:
        return self.steps[-1][1] if self.steps is not None else self.cap


# 802.11n single stream, 20 MHz, long GI: 6.5 ... 65 Mbps; thresholds follow
# the receiver-sensitivity spacing of the MCS ladder
DOT11N_RATES_MBPS = (6.5, 13.0, 19.5, 26.0, 39.0, 52.0, 58.5, 65.0)
DOT11N_THRESHOLDS_DB = (4.0, 7.0, 9.0, 12.0, 16.0, 20.0, 21.0, 22.0)
MEDIAN_DOT11N_RATE_MBPS = 32.5

DOT11N_PROFILE = AutoRateProfile(
    Phy.DOT11N, 15.0,
    steps=tuple((t, r * 1e6 / BANDWIDTH_HZ) for t, r in zip(DOT11N_THRESHOLDS_DB, DOT11N_RATES_MBPS)))
LTE_PROFILE = AutoRateProfile(Phy.LTE, 9.0)
DEFAULT_PROFILES = {Phy.DOT11N: DOT11N_PROFILE, Phy.LTE: LTE_PROFILE}


def auto_rate(sinr_db, profile: AutoRateProfile):
    """Spectral efficiency (bps/Hz) for the given SINR (dB)."""
    s = np.asarray(sinr_db, float)
    if profile.steps is not None:
        thr = np.array([t for t, _ in profile.steps])
        eff = np.concatenate([[0.0], [e for _, e in profile.steps]])
        out = eff[np.searchsorted(thr, s, side="right")]
    else:
        lin = 10 ** (s / 10)
        out = np.where(s >= profile.min_sinr_db,
                       np.minimum(profile.alpha * np.log2(1 + lin), profile.cap), 0.0)
    return out if out.ndim else float(out)


def dbm_to_mw(dbm):
    return 10 ** (np.asarray(dbm, float) / 10)


# ----------------------------------------------------------------------------
# interference

def interference_weights(graph, entrant_mac: MacMechanism, fdut=None) -> np.ndarray:
    """``w[x, z]``: fraction of time AP z's power counts at the user of AP x.

    Only co-channel z contribute. Within x's CS set, legacy never interferes;
    entrants interfere at a user served by an entrant according to the
    duty-cycle variant (in full when coordinated on the same slot, half when
    uncoordinated, at the neighbour's share when adaptive). Outside the CS
    set each AP counts with its own transmission time.
    """
    v = entrant_mac.variant
    ent = graph.entrant
    a, b = graph.n_legacy.astype(float), graph.n_entrant.astype(float)
    if fdut is None:
        fdut = f_dut_all(graph, entrant_mac)

    # out-of-range weight of each transmitter z
    if v in (MacVariant.LBT, MacVariant.IDEAL_TDMA):
        w_leg = 1.0 / (1 + a + b)
    else:
        w_leg = fdut / (1 + a)
    if v is MacVariant.ALWAYS_ON:
        w_ent = np.ones_like(a)
    elif entrant_mac.is_fixed50:
        w_ent = np.full_like(a, 0.5)
    else:
        w_ent = 1.0 / adaptive_period(graph)
    w_out = np.where(ent, w_ent, w_leg)

    # in-range weight of entrant z at an entrant-served user
    if v is MacVariant.ALWAYS_ON or v is MacVariant.FIXED50_COORDINATED:
        w_in = np.ones_like(a)
    elif v is MacVariant.FIXED50_UNCOORDINATED:
        w_in = np.full_like(a, 0.5)
    elif v is MacVariant.ADAPTIVE:
        w_in = 1.0 / adaptive_period(graph)
    else:
        w_in = np.zeros_like(a)

    w = np.where(graph.cochannel & ~graph.detected, w_out[None, :], 0.0)
    e = np.flatnonzero(ent)
    if e.size:
        block = graph.detected[np.ix_(e, e)] & graph.cochannel[np.ix_(e, e)]
        w[np.ix_(e, e)] += np.where(block, w_in[e][None, :], 0.0)
    np.fill_diagonal(w, 0.0)
    return w


def interference_at_users(graph, rx_user_mw: np.ndarray, entrant_mac: MacMechanism, fdut=None):
    """(I from legacy, I from entrants) in mW at each AP's user.

    ``rx_user_mw[x, z]`` is AP z's power at the user of AP x.
    """
    w = interference_weights(graph, entrant_mac, fdut)
    w *= rx_user_mw
    ent = graph.entrant
    return w[:, ~ent].sum(axis=1), w[:, ent].sum(axis=1)


def sinr_db(signal_mw, interference_mw, noise_dbm):
    lin = np.asarray(signal_mw, float) / (dbm_to_mw(noise_dbm) + np.asarray(interference_mw, float))
    with np.errstate(divide="ignore"):
        out = 10 * np.log10(lin)
    return out if out.ndim else float(out)


def throughput(s, coll, air, rho, bandwidth_hz: float = BANDWIDTH_HZ):
    """Throughput in Mbps."""
    return s * coll * air * rho * (bandwidth_hz / 1e6)


# ----------------------------------------------------------------------------
# per-realization evaluation

@dataclass
class ThroughputReport:
    entrant: np.ndarray
    sinr_db: np.ndarray
    rho: np.ndarray
    s: np.ndarray
    coll: np.ndarray
    air_time: np.ndarray
    f_dut: np.ndarray
    bandwidth_hz: np.ndarray
    throughput_mbps: np.ndarray = field(init=False)

    def __post_init__(self):
        self.throughput_mbps = throughput(self.s, self.coll, self.air_time, self.rho, self.bandwidth_hz)

    def __len__(self) -> int:
        return len(self.entrant)

    def population(self, entrant: bool) -> np.ndarray:
        return self.throughput_mbps[self.entrant == entrant]

    def rows(self):
        for x in range(len(self)):
            yield {"ap": x, "population": "entrant" if self.entrant[x] else "legacy",
                   "sinr_db": float(self.sinr_db[x]), "rho": float(self.rho[x]), "S": float(self.s[x]),
                   "COLL": float(self.coll[x]), "air_time": float(self.air_time[x]),
                   "f_dut": float(self.f_dut[x]), "throughput_mbps": float(self.throughput_mbps[x])}


@dataclass(frozen=True)
class LinkState:
    """Linear-domain inputs to the SINR model for one realization."""
    signal_mw: np.ndarray        # serving AP at own user
    rx_user_mw: np.ndarray       # [x, z]: AP z at user of x


def link_state(realization) -> LinkState:
    table = realization.link_budgets
    ptx = realization.tx_power_dbm
    n = len(ptx)
    # users are indexed like their serving APs
    rx_dbm = ptx[None, :] - table.user_total.T[:n, :]
    rx = dbm_to_mw(rx_dbm)
    return LinkState(np.diagonal(rx).copy(), rx)


def evaluate(graph, links: LinkState, phys, entrant_mac: MacMechanism, *,
             profiles=None, timing: FrameTiming = DEFAULT_TIMING, legacy_mac: MacMechanism = LEGACY_MAC,
             t_s_us: Optional[float] = PRINTED_TS_US) -> ThroughputReport:
    """Throughput decomposition for every AP.

    ``phys`` holds each AP's :class:`Phy`. ``t_s_us`` sets the frame count
    per duty-cycle slot; ``None`` derives it from the 802.11n timing at the
    median 802.11n rate instead of the fixed default.
    """
    profiles = DEFAULT_PROFILES if profiles is None else profiles
    is_11n = np.fromiter((p == Phy.DOT11N for p in phys), bool, len(phys))
    fdut = f_dut_all(graph, entrant_mac)
    air = air_time_all(graph, entrant_mac, fdut)
    i_leg, i_ent = interference_at_users(graph, links.rx_user_mw, entrant_mac, fdut)

    p11, plte = profiles[Phy.DOT11N], profiles[Phy.LTE]
    noise = np.where(is_11n, p11.noise_dbm, plte.noise_dbm)
    sinr = sinr_db(links.signal_mw, i_leg + i_ent, noise)
    rho = np.where(is_11n, auto_rate(sinr, p11), auto_rate(sinr, plte))
    bw = np.where(is_11n, p11.bandwidth_hz, plte.bandwidth_hz)

    # 802.11n frame time at the AP's own rate; APs out of range use the lowest rate
    rate = np.maximum(rho * bw / 1e6, timing.r_wifi_min_mbps)
    tf11, ts11, tc11 = frame_times(Phy.DOT11N, rate, timing)
    tflte, tslte, tclte = frame_times(Phy.LTE, rate, timing)
    t_f = np.where(is_11n, tf11, tflte)
    t_s = np.where(is_11n, ts11, tslte)
    t_c = np.where(is_11n, tc11, tclte)
    s = mac_efficiency(graph, t_f, t_s, t_c, entrant_mac, legacy_mac, timing)

    if t_s_us is None:
        t_s_us = float(frame_times(Phy.DOT11N, MEDIAN_DOT11N_RATE_MBPS, timing)[1])
    m = frames_per_slot(entrant_mac.slot_duration_ms, t_s_us)
    coll = 1.0 - collision_degradation_all(graph, entrant_mac, m)
    return ThroughputReport(graph.entrant.copy(), sinr, rho, s, coll, air, np.where(graph.entrant, 1.0, fdut), bw)
