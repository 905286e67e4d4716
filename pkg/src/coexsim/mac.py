"""Time-domain MAC model: air-time shares, duty-cycle vacancy, LBT
efficiency and collision degradation.

Per-AP quantities are computed for all APs at once from a carrier-sense
graph (see :class:`coexsim.spectrum.CsGraph`): ``graph.detected[x, z]``,
``graph.entrant`` and the counts ``graph.n_legacy`` / ``graph.n_entrant``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .scenario import Phy

OTHER_TECH_THRESHOLD_DBM = -62.0
PRINTED_TS_US = 419.0


class MacVariant(str, Enum):
    LBT = "lbt"
    ALWAYS_ON = "always_on"
    FIXED50_COORDINATED = "fixed50_coordinated"
    FIXED50_UNCOORDINATED = "fixed50_uncoordinated"
    ADAPTIVE = "adaptive_duty_cycle"
    IDEAL_TDMA = "ideal_tdma"


DUTY_CYCLE_FAMILY = frozenset({MacVariant.FIXED50_COORDINATED, MacVariant.FIXED50_UNCOORDINATED,
                               MacVariant.ADAPTIVE, MacVariant.IDEAL_TDMA})


@dataclass(frozen=True)
class MacMechanism:
    variant: MacVariant = MacVariant.LBT
    cs_threshold_dbm: float = -82.0
    slot_duration_ms: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "variant", MacVariant(self.variant))
        if not -100.0 <= self.cs_threshold_dbm <= -30.0:
            raise ValueError(f"CS threshold {self.cs_threshold_dbm} dBm outside [-100, -30]")
        if self.slot_duration_ms <= 0:
            raise ValueError("slot duration must be positive")

    @property
    def is_lbt(self) -> bool:
        return self.variant is MacVariant.LBT

    @property
    def is_fixed50(self) -> bool:
        return self.variant in (MacVariant.FIXED50_COORDINATED, MacVariant.FIXED50_UNCOORDINATED)

    @property
    def detection_threshold_dbm(self) -> float:
        """Threshold used to count neighbours (and to pick channels)."""
        return self.cs_threshold_dbm if self.is_lbt else OTHER_TECH_THRESHOLD_DBM


LEGACY_MAC = MacMechanism(MacVariant.LBT, -82.0)


@dataclass(frozen=True)
class EntrantVariant:
    name: str
    mac: MacMechanism
    phy: Phy

    def with_slot(self, slot_duration_ms: float) -> "EntrantVariant":
        m = self.mac
        return EntrantVariant(self.name, MacMechanism(m.variant, m.cs_threshold_dbm, slot_duration_ms), self.phy)


ENTRANT_VARIANTS = {
    v.name: v for v in (
        EntrantVariant("lbt82_11n", MacMechanism(MacVariant.LBT, -82.0), Phy.DOT11N),
        EntrantVariant("lbt62_11n", MacMechanism(MacVariant.LBT, -62.0), Phy.DOT11N),
        EntrantVariant("always_on", MacMechanism(MacVariant.ALWAYS_ON, -62.0), Phy.LTE),
        EntrantVariant("lbt62_lte", MacMechanism(MacVariant.LBT, -62.0), Phy.LTE),
        EntrantVariant("fixed50_coord", MacMechanism(MacVariant.FIXED50_COORDINATED, -62.0), Phy.LTE),
        EntrantVariant("fixed50_uncoord", MacMechanism(MacVariant.FIXED50_UNCOORDINATED, -62.0), Phy.LTE),
        EntrantVariant("adaptive_dc", MacMechanism(MacVariant.ADAPTIVE, -62.0), Phy.LTE),
        EntrantVariant("ideal_tdma", MacMechanism(MacVariant.IDEAL_TDMA, -62.0), Phy.LTE),
    )
}


# ----------------------------------------------------------------------------
# frame timing and LBT efficiency

@dataclass(frozen=True)
class FrameTiming:
    """802.11n 5 GHz timing; durations in microseconds, sizes in bits."""
    sigma: float = 9.0
    sifs: float = 16.0
    phy_header: float = 40.0
    ack_bits: float = 112.0
    mac_header_bits: float = 112.0
    msdu_bits: float = 12000.0
    r_wifi_min_mbps: float = 6.5
    lte_subframe: float = 1000.0

    @property
    def difs(self) -> float:
        return self.sifs + 2 * self.sigma


DEFAULT_TIMING = FrameTiming()


def frame_times(phy: Phy, rate_mbps=None, timing: FrameTiming = DEFAULT_TIMING):
    """(T_f, T_s, T_c) in microseconds for an LBT AP; vectorised over rates."""
    phy = Phy(phy)
    if phy is Phy.LTE:
        t_f = np.full(np.shape(rate_mbps) if rate_mbps is not None else (), timing.lte_subframe)
        t_s = t_f + timing.difs
        t_c = t_f + timing.difs
    else:
        r = np.asarray(rate_mbps, float)
        if np.any(~(r > 0)):
            raise ValueError("802.11n frame timing needs a positive rate")
        t_f = timing.phy_header + (timing.mac_header_bits + timing.msdu_bits) / r
        t_s = t_f + timing.difs + timing.sifs + timing.phy_header + timing.ack_bits / timing.r_wifi_min_mbps
        t_c = t_f + timing.difs
    if np.ndim(t_f) == 0:
        return float(t_f), float(t_s), float(t_c)
    return t_f, t_s, t_c


@lru_cache(maxsize=None)
def bianchi_tau(n: int, w: int = 16, stages: int = 6, tol: float = 1e-14, max_iter: int = 200) -> float:
    """Per-slot transmission probability of a saturated station among ``n``.

    Solves tau = 2 / (1 + W + p W sum_{i<m} (2p)^i), p = 1 - (1 - tau)^(n-1).
    The right-hand side falls as tau grows, so the root is unique in
    (0, 2 / (W + 1)] and bisection finds it for any ``n``.
    """
    if n < 1:
        raise ValueError("need at least one station")

    def g(tau):
        p = 1.0 - (1.0 - tau) ** (n - 1)
        series = sum((2 * p) ** i for i in range(stages))
        return 2.0 / (1.0 + w + p * w * series)

    lo, hi = 0.0, 2.0 / (w + 1)
    if g(hi) >= hi:
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if g(mid) > mid:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            return 0.5 * (lo + hi)
    raise ArithmeticError(f"tau fixed point for n={n} did not converge")


def efficiency_from_times(t_f, t_s, t_c, n, sigma: float = DEFAULT_TIMING.sigma):
    """MAC efficiency from (average) frame times and contender count ``n``."""
    n = np.asarray(n, np.int64)
    tau = np.vectorize(bianchi_tau, otypes=[float])(n) if n.ndim else bianchi_tau(int(n))
    t_c = np.asarray(t_c, float)
    tc_star = t_c / sigma
    idle = 1.0 - tau
    backoff = sigma * (tc_star - idle ** n * (tc_star - 1.0)) / (n * tau * idle ** (n - 1))
    s = np.asarray(t_f, float) / (np.asarray(t_s, float) - t_c + backoff)
    s = np.clip(s, np.finfo(float).tiny, 1.0)
    return s if s.ndim else float(s)


def contention_matrix(graph, entrant_mac: MacMechanism, legacy_mac: MacMechanism = LEGACY_MAC) -> np.ndarray:
    """``contend[x, z]``: LBT AP z is among the stations x contends with."""
    lbt = lbt_mask(graph, entrant_mac, legacy_mac)
    return graph.detected & lbt[None, :] & lbt[:, None]


def lbt_mask(graph, entrant_mac: MacMechanism, legacy_mac: MacMechanism = LEGACY_MAC) -> np.ndarray:
    return np.where(graph.entrant, entrant_mac.is_lbt, legacy_mac.is_lbt)


def mac_efficiency(graph, t_f, t_s, t_c, entrant_mac: MacMechanism,
                   legacy_mac: MacMechanism = LEGACY_MAC, timing: FrameTiming = DEFAULT_TIMING) -> np.ndarray:
    """S per AP: LBT APs average frame times over themselves and their
    LBT contenders; non-LBT APs have S = 1."""
    contend = contention_matrix(graph, entrant_mac, legacy_mac).astype(float)
    k = contend.sum(axis=1)
    avg = [(np.asarray(t, float) + contend @ np.asarray(t, float)) / (1.0 + k) for t in (t_f, t_s, t_c)]
    n = (1 + k).astype(np.int64)
    s = np.ones(graph.n_aps)
    lbt = lbt_mask(graph, entrant_mac, legacy_mac)
    if lbt.any():
        s[lbt] = efficiency_from_times(avg[0][lbt], avg[1][lbt], avg[2][lbt], n[lbt], timing.sigma)
    return s


# ----------------------------------------------------------------------------
# duty-cycle coupling

def adaptive_period(graph) -> np.ndarray:
    """Slots per period of an adaptive duty-cycle AP: 1 + |C_y| + |D_y|."""
    return 1 + graph.n_legacy + graph.n_entrant


def _entrant_product(graph, factor_per_entrant: np.ndarray) -> np.ndarray:
    """Product over B_x of a per-entrant factor, for every AP row."""
    b = graph.detected & graph.entrant[None, :]
    return np.prod(np.where(b, factor_per_entrant[None, :], 1.0), axis=1)


def f_dut_all(graph, entrant_mac: MacMechanism) -> np.ndarray:
    """Probability a duty-cycle slot is vacant of entrants in each AP's CS range.

    Defined for legacy rows; entrant rows are filled but meaningless.
    """
    a, b = graph.n_legacy.astype(float), graph.n_entrant.astype(float)
    v = entrant_mac.variant
    if v is MacVariant.LBT:
        out = np.ones_like(a)
    elif v is MacVariant.FIXED50_COORDINATED:
        out = np.full_like(a, 0.5)
    elif v is MacVariant.FIXED50_UNCOORDINATED:
        out = 0.5 ** b
    elif v is MacVariant.ADAPTIVE:
        out = _entrant_product(graph, 1.0 - 1.0 / adaptive_period(graph))
    elif v is MacVariant.IDEAL_TDMA:
        out = (1 + a) / (1 + a + b)
    else:  # always on
        out = np.zeros_like(a)
    return np.where(b == 0, 1.0, out)


def f_dut(graph, x: int, entrant_mac: MacMechanism) -> float:
    return float(f_dut_all(graph, entrant_mac)[x])


def air_time_all(graph, entrant_mac: MacMechanism, fdut=None) -> np.ndarray:
    a, b = graph.n_legacy.astype(float), graph.n_entrant.astype(float)
    v = entrant_mac.variant
    if v is MacVariant.LBT:
        legacy = 1.0 / (1 + a + b)
    else:
        legacy = (f_dut_all(graph, entrant_mac) if fdut is None else fdut) / (1 + a)
    if v is MacVariant.ALWAYS_ON:
        entrant = np.ones_like(a)
    elif entrant_mac.is_fixed50:
        entrant = np.full_like(a, 0.5)
    else:
        entrant = 1.0 / (1 + a + b)
    return np.where(graph.entrant, entrant, legacy)


def air_time(graph, x: int, entrant_mac: MacMechanism) -> float:
    return float(air_time_all(graph, entrant_mac)[x])


def frames_per_slot(slot_duration_ms: float, t_s_us: float = PRINTED_TS_US) -> int:
    """LBT frames that fit in one duty-cycle slot (at least one)."""
    if slot_duration_ms <= 0 or t_s_us <= 0:
        raise ValueError("slot and frame durations must be positive")
    return max(1, math.floor(slot_duration_ms * 1000.0 / t_s_us))


def collision_degradation_all(graph, entrant_mac: MacMechanism, m: int) -> np.ndarray:
    """Fraction of legacy LBT frames lost at duty-cycle slot boundaries.

    Zero when no entrant is in range. The adaptive bracket uses
    ``max(|C_z| + |D_z|, 1)`` so entrants that detect nobody (possible with
    asymmetric detection) count as always following.
    """
    if m < 1:
        raise ValueError("frames per slot must be at least 1")
    b = graph.n_entrant
    v = entrant_mac.variant
    if entrant_mac.is_fixed50:
        r = np.full(graph.n_aps, 1.0 / m)
    elif v is MacVariant.ADAPTIVE:
        k = np.maximum(graph.n_legacy + graph.n_entrant, 1).astype(float)
        r = (1.0 - _entrant_product(graph, 1.0 - 1.0 / k)) / m
    else:
        r = np.zeros(graph.n_aps)
    r = np.where(b > 0, r, 0.0)
    return np.where(graph.entrant, 0.0, r)


def collision_degradation(graph, x: int, entrant_mac: MacMechanism, m: int) -> float:
    return float(collision_degradation_all(graph, entrant_mac, m)[x])


@dataclass
class AirTimeBreakdown:
    s: np.ndarray
    coll: np.ndarray
    air_time: np.ndarray
    f_dut: np.ndarray
