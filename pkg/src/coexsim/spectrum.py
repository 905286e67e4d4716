"""Channel assignment and carrier-sense graphs.

Legacy APs pick channels first, uniformly at random. Entrant APs then pick
uniformly (``random``), uniformly among channels on which they detect no
legacy AP (``sense``), or everything shares channel 0 (``single``).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .mac import LEGACY_MAC, MacMechanism
from .scenario import NetworkRealization, Phy, stream

N_CHANNELS_INDOOR = 19
N_CHANNELS_OUTDOOR = 11
WIFI_CS_THRESHOLD_DBM = -82.0
OTHER_CS_THRESHOLD_DBM = -62.0
LEGACY_CHANNELS, ENTRANT_CHANNELS = 3, 4


class ChannelScheme(str, Enum):
    RANDOM = "random"
    SENSE = "sense"
    SINGLE = "single"


@dataclass
class ChannelPlan:
    scheme: ChannelScheme
    assignment: np.ndarray
    channels_indoor: int = N_CHANNELS_INDOOR
    channels_outdoor: int = N_CHANNELS_OUTDOOR

    def __getitem__(self, ap_index: int) -> int:
        return int(self.assignment[ap_index])

    def cochannel(self) -> np.ndarray:
        a = self.assignment
        return a[:, None] == a[None, :]


def received_power(realization: NetworkRealization) -> np.ndarray:
    """``rx[x, z]``: power (dBm) of AP z received at AP x."""
    table = realization.link_budgets
    if table is None:
        raise ValueError("link budgets have not been computed for this realization")
    # cached alongside the table it was computed from; callers must not modify it
    cached = realization._arrays.get("rx_ap")
    if cached is not None and cached[0] is table:
        return cached[1]
    rx = realization.tx_power_dbm[None, :] - table.ap_total
    np.fill_diagonal(rx, -np.inf)
    realization._arrays["rx_ap"] = (table, rx)
    return rx


def threshold_matrix(realization: NetworkRealization, entrant_mac: MacMechanism,
                     legacy_mac: MacMechanism = LEGACY_MAC) -> np.ndarray:
    """``theta[x, z]``: threshold AP x applies to AP z.

    Legacy APs use their own threshold toward 802.11n transmitters (legacy
    and 802.11n entrants alike) and -62 dBm toward other technologies. An
    entrant uses one threshold toward everything: its LBT threshold, or
    -62 dBm for the duty-cycle family, which senses only to adapt.
    """
    ent = realization.entrant_mask
    phys = np.array([ap.phy is Phy.DOT11N for ap in realization.aps], bool)
    legacy_row = np.where(phys, legacy_mac.cs_threshold_dbm, OTHER_CS_THRESHOLD_DBM)
    theta = np.broadcast_to(legacy_row, (len(ent), len(ent))).copy()
    theta[ent, :] = entrant_mac.detection_threshold_dbm
    return theta


def assign_channels(realization: NetworkRealization, scheme: ChannelScheme | str,
                    entrant_mac: MacMechanism, *, channels_indoor: int = N_CHANNELS_INDOOR,
                    channels_outdoor: int = N_CHANNELS_OUTDOOR) -> ChannelPlan:
    """Channel per AP, drawn from dedicated streams of the realization seed.

    Each AP consumes exactly one uniform draw regardless of scheme or
    threshold, so different entrant variants see common random numbers.
    """
    scheme = ChannelScheme(scheme)
    n = len(realization.aps)
    ent = realization.entrant_mask
    indoor = realization.indoor_mask
    sizes = np.where(indoor, channels_indoor, channels_outdoor)
    assignment = np.zeros(n, np.int64)
    if scheme is ChannelScheme.SINGLE:
        return ChannelPlan(scheme, assignment, channels_indoor, channels_outdoor)

    leg_idx = np.flatnonzero(~ent)
    ent_idx = np.flatnonzero(ent)
    u_leg = stream(realization.seed, LEGACY_CHANNELS).random(len(leg_idx))
    u_ent = stream(realization.seed, ENTRANT_CHANNELS).random(len(ent_idx))
    assignment[leg_idx] = np.floor(u_leg * sizes[leg_idx]).astype(np.int64)

    if scheme is ChannelScheme.RANDOM:
        assignment[ent_idx] = np.floor(u_ent * sizes[ent_idx]).astype(np.int64)
        return ChannelPlan(scheme, assignment, channels_indoor, channels_outdoor)

    rx = received_power(realization)
    thr = entrant_mac.detection_threshold_dbm
    for k, y in enumerate(ent_idx):
        n_ch = int(sizes[y])
        heard = leg_idx[rx[y, leg_idx] >= thr]
        counts = np.bincount(assignment[heard], minlength=max(n_ch, channels_indoor))[:n_ch]
        candidates = np.flatnonzero(counts == 0)
        if candidates.size == 0:
            # every channel occupied: least-detected, ties broken uniformly
            candidates = np.flatnonzero(counts == counts.min())
        assignment[y] = candidates[int(u_ent[k] * candidates.size)]
    return ChannelPlan(scheme, assignment, channels_indoor, channels_outdoor)


@dataclass
class CsGraph:
    """Directed carrier-sense graph: ``detected[x, z]`` means x defers to / counts z.

    Only co-channel pairs can be detected. For a legacy AP x, ``n_legacy[x]``
    and ``n_entrant[x]`` are |A_x| and |B_x|; for an entrant y they are
    |C_y| and |D_y|.
    """
    cochannel: np.ndarray
    detected: np.ndarray
    entrant: np.ndarray

    def __post_init__(self):
        self.n_legacy = (self.detected & ~self.entrant[None, :]).sum(axis=1)
        self.n_entrant = (self.detected & self.entrant[None, :]).sum(axis=1)

    @property
    def n_aps(self) -> int:
        return len(self.entrant)

    def _members(self, x: int, entrant: bool) -> np.ndarray:
        return np.flatnonzero(self.detected[x] & (self.entrant == entrant))

    def legacy_in_range(self, x: int) -> np.ndarray:
        """A_x (legacy x) or C_y (entrant y)."""
        return self._members(x, False)

    def entrant_in_range(self, x: int) -> np.ndarray:
        """B_x (legacy x) or D_y (entrant y)."""
        return self._members(x, True)


def build_cs_graph(realization: NetworkRealization, plan: ChannelPlan, entrant_mac: MacMechanism,
                   legacy_mac: MacMechanism = LEGACY_MAC) -> CsGraph:
    rx = received_power(realization)
    theta = threshold_matrix(realization, entrant_mac, legacy_mac)
    co = plan.cochannel()
    np.fill_diagonal(co, False)
    detected = co & (rx >= theta)
    return CsGraph(co, detected, realization.entrant_mask.copy())


def dump_cs_sets(graph: CsGraph, path) -> None:
    """Debug CSV: ``ap,population,legacy_in_range,entrant_in_range`` (ids space-separated)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["ap", "population", "legacy_in_range", "entrant_in_range"])
        for x in range(graph.n_aps):
            w.writerow([x, "entrant" if graph.entrant[x] else "legacy",
                        " ".join(map(str, graph.legacy_in_range(x))),
                        " ".join(map(str, graph.entrant_in_range(x)))])


__all__ = ["ChannelScheme", "ChannelPlan", "CsGraph", "assign_channels", "build_cs_graph",
           "received_power", "threshold_matrix", "dump_cs_sets"]
