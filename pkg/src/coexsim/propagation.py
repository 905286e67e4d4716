"""Link budgets: indoor multi-wall-and-floor loss, outdoor street-canyon
LOS / NLOS loss, indoor-outdoor cascades and log-normal shadowing.

All functions accept scalars or numpy arrays. Losses are in dB, distances
in metres.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from .kernels import segment_crossings
from .scenario import NetworkRealization

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class PropagationProfile:
    carrier_freq_hz: float = 5.0e9
    wall_first_db: float = 16.0
    wall_next_db: float = 14.0
    floor_first_db: float = 29.0
    floor_next_db: float = 24.0
    entry_loss_db: float = 19.1
    shadow_sigma_indoor_db: float = 4.0
    shadow_sigma_other_db: float = 7.0
    indoor_exponent: float = 2.0
    # None -> free-space loss at 1 m
    indoor_ref_loss_db: Optional[float] = None
    # NLOS site-general coefficients: 10*a*log10(d) + b + 10*g*log10(f_GHz)
    nlos_alpha: float = 4.0
    nlos_beta: float = 10.2
    nlos_gamma: float = 2.36
    min_distance_m: float = 1.0

    def __post_init__(self):
        atten = (self.wall_first_db, self.wall_next_db, self.floor_first_db,
                 self.floor_next_db, self.entry_loss_db)
        if min(atten) < 0:
            raise ValueError("attenuations must be non-negative")
        if min(self.shadow_sigma_indoor_db, self.shadow_sigma_other_db) < 0:
            raise ValueError("shadowing sigmas must be non-negative")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def ref_loss_db(self) -> float:
        if self.indoor_ref_loss_db is not None:
            return self.indoor_ref_loss_db
        return free_space_loss(1.0, self.carrier_freq_hz)


DEFAULT_PROFILE = PropagationProfile()


def free_space_loss(distance, freq_hz):
    return 20 * np.log10(4 * math.pi * np.asarray(distance, float) * freq_hz / SPEED_OF_LIGHT)


def _stepped(count, first, nxt):
    count = np.asarray(count)
    return np.where(count > 0, first + nxt * (count - 1), 0.0)


def mwf_loss(distance, walls, floors, profile: PropagationProfile = DEFAULT_PROFILE):
    """Multi-wall-and-floor indoor loss."""
    d = np.asarray(distance, float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    loss = (profile.ref_loss_db + 10 * profile.indoor_exponent * np.log10(d)
            + _stepped(walls, profile.wall_first_db, profile.wall_next_db)
            + _stepped(floors, profile.floor_first_db, profile.floor_next_db))
    return loss if loss.ndim else float(loss)


def los_street_canyon(distance, profile: PropagationProfile = DEFAULT_PROFILE, h_tx=10.0, h_rx=1.5):
    """Median LOS loss within a street canyon (two-slope, breakpoint model).

    20 dB/decade up to the breakpoint ``4 h_tx h_rx / lambda``, 40 dB/decade
    beyond; anchored so that the loss at 1 m equals free space.
    """
    lam = profile.wavelength
    d = np.maximum(np.asarray(distance, float), profile.min_distance_m)
    h1 = np.maximum(np.asarray(h_tx, float), 1.0)
    h2 = np.maximum(np.asarray(h_rx, float), 1.0)
    r_bp = 4 * h1 * h2 / lam
    l_bp = np.abs(20 * np.log10(lam ** 2 / (8 * math.pi * h1 * h2)))
    slope = np.where(d <= r_bp, 20.0, 40.0)
    loss = l_bp + 6.0 + slope * np.log10(d / r_bp)
    return loss if loss.ndim else float(loss)


def nlos_over_rooftop(distance, profile: PropagationProfile = DEFAULT_PROFILE, h_tx=10.0, h_rx=1.5):
    """NLOS loss, never below the LOS loss at the same distance."""
    d = np.maximum(np.asarray(distance, float), profile.min_distance_m)
    f_ghz = profile.carrier_freq_hz / 1e9
    nlos = (10 * profile.nlos_alpha * np.log10(d) + profile.nlos_beta
            + 10 * profile.nlos_gamma * math.log10(f_ghz))
    loss = np.maximum(nlos, los_street_canyon(d, profile, h_tx, h_rx))
    return loss if loss.ndim else float(loss)


def outdoor_loss(distance, los, profile: PropagationProfile = DEFAULT_PROFILE, h_tx=10.0, h_rx=1.5):
    """Outdoor median loss; distances below 1 m are clamped to 1 m."""
    los = np.asarray(los, bool)
    loss = np.where(los, los_street_canyon(distance, profile, h_tx, h_rx),
                    nlos_over_rooftop(distance, profile, h_tx, h_rx))
    return loss if loss.ndim else float(loss)


class Crossings(NamedTuple):
    walls: int
    floors: int
    external_walls: int


def _boxes(buildings):
    boxes = np.array([b.box for b in buildings], float).reshape(-1, 6)
    cells = np.array([b.apartment_size for b in buildings], float).reshape(-1, 3)
    return boxes, cells


def count_crossings(p0, p1, buildings) -> Crossings:
    """Internal walls, floors and external walls crossed by the open segment."""
    boxes, cells = _boxes(buildings)
    p0 = np.asarray(p0, float).reshape(1, 3)
    p1 = np.asarray(p1, float).reshape(1, 3)
    b0 = np.array([_locate(buildings, p0[0])])
    b1 = np.array([_locate(buildings, p1[0])])
    r = segment_crossings(p0, p1, b0, b1, boxes, cells)
    return Crossings(int(r["walls"][0]), int(r["floors"][0]), int(r["external"][0]))


def _locate(buildings, point) -> int:
    for k, b in enumerate(buildings):
        if b.contains(point):
            return k
    return -1


def cascade_loss(distance, t_exit, t_entry, indoor0, indoor1, walls0, floors0, walls1, floors1, los,
                 profile: PropagationProfile = DEFAULT_PROFILE, h_tx=10.0, h_rx=1.5,
                 internal_walls: bool = True):
    """Loss of a link leaving and/or entering a building.

    The segment is split at the facade crossings: the piece inside each
    endpoint's building takes the MWF loss, each endpoint building adds one
    entry loss, and the piece in between takes the outdoor loss.
    """
    d = np.asarray(distance, float)
    t_exit = np.asarray(t_exit, float)
    t_entry = np.asarray(t_entry, float)
    in0 = np.asarray(indoor0, bool)
    in1 = np.asarray(indoor1, bool)
    wscale = 1.0 if internal_walls else 0.0
    dmin = profile.min_distance_m
    seg0 = np.maximum(t_exit * d, dmin)
    seg1 = np.maximum((1.0 - t_entry) * d, dmin)
    mid = np.maximum((t_entry - t_exit) * d, dmin)
    loss = outdoor_loss(mid, los, profile, h_tx, h_rx)
    loss = loss + np.where(in0, mwf_loss(seg0, np.asarray(walls0) * wscale, floors0, profile)
                           + profile.entry_loss_db, 0.0)
    loss = loss + np.where(in1, mwf_loss(seg1, np.asarray(walls1) * wscale, floors1, profile)
                           + profile.entry_loss_db, 0.0)
    return loss if np.ndim(loss) else float(loss)


# ----------------------------------------------------------------------------
# shadowing

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _unit(x: np.ndarray) -> np.ndarray:
    # 53 high bits -> (0, 1)
    return ((x >> np.uint64(11)).astype(np.float64) + 0.5) / float(1 << 53)


def pair_shadowing(seed: int, key_a, key_b, sigma):
    """Zero-mean normal shadowing (dB) for unordered node pairs.

    Counter-based: the value depends only on (seed, {key_a, key_b}), so it
    is identical in both directions and independent of evaluation order.
    """
    a = np.asarray(key_a, np.uint64)
    b = np.asarray(key_b, np.uint64)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    with np.errstate(over="ignore"):
        base = _splitmix64(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF) ^ _splitmix64(lo * np.uint64(0x100000001B3) + hi))
    u1 = _unit(_splitmix64(base))
    u2 = _unit(_splitmix64(base ^ np.uint64(0xD1B54A32D192ED03)))
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2 * math.pi * u2)
    out = np.asarray(sigma, float) * z
    return out if out.ndim else float(out)


def sample_shadowing(rng: np.random.Generator, link_kind: str, size=None,
                     profile: PropagationProfile = DEFAULT_PROFILE):
    """Plain shadowing draw for a link kind (``"indoor"`` or ``"other"``)."""
    sigma = profile.shadow_sigma_indoor_db if link_kind == "indoor" else profile.shadow_sigma_other_db
    return rng.normal(0.0, sigma, size)


def ap_key(ap_id) -> np.ndarray:
    return np.asarray(ap_id, np.uint64) * np.uint64(2)


def user_key(ap_id) -> np.ndarray:
    return np.asarray(ap_id, np.uint64) * np.uint64(2) + np.uint64(1)


# ----------------------------------------------------------------------------
# link-budget table

@dataclass(frozen=True)
class LinkBudget:
    src: int
    dst: int
    distance: float
    walls_crossed: int
    floors_crossed: int
    external_walls_crossed: int
    median_loss: float
    shadowing: float
    total_loss: float


_TABLE_FIELDS = ("ap_distance", "ap_median", "ap_shadow", "ap_walls", "ap_floors", "ap_external",
                 "user_distance", "user_median", "user_shadow", "user_walls", "user_floors", "user_external")


@dataclass
class LinkBudgetTable:
    """Per-pair budgets; row index is the transmitting AP.

    ``ap_*`` arrays are (n_ap, n_ap) AP-to-AP, ``user_*`` arrays are
    (n_ap, n_user) AP-to-user. Diagonal AP-to-AP entries are unused (inf loss).
    """
    ap_distance: np.ndarray
    ap_median: np.ndarray
    ap_shadow: np.ndarray
    ap_walls: np.ndarray
    ap_floors: np.ndarray
    ap_external: np.ndarray
    user_distance: np.ndarray
    user_median: np.ndarray
    user_shadow: np.ndarray
    user_walls: np.ndarray
    user_floors: np.ndarray
    user_external: np.ndarray
    clamped: int = 0

    @cached_property
    def ap_total(self) -> np.ndarray:
        return self.ap_median + self.ap_shadow

    @cached_property
    def user_total(self) -> np.ndarray:
        return self.user_median + self.user_shadow

    def subset(self, idx) -> "LinkBudgetTable":
        """Budgets restricted to the APs (and their users) at ``idx``.

        A leading prefix ``0..k-1`` is served with views, not copies.
        """
        idx = np.asarray(idx)
        if np.array_equal(idx, np.arange(len(idx))):
            sel = (slice(0, len(idx)), slice(0, len(idx)))
        else:
            sel = np.ix_(idx, idx)
        out = LinkBudgetTable(*(getattr(self, f)[sel] for f in _TABLE_FIELDS), clamped=self.clamped)
        for cached in ("ap_total", "user_total"):
            if cached in self.__dict__:
                out.__dict__[cached] = self.__dict__[cached][sel]
        return out

    def ap_link(self, i: int, j: int) -> LinkBudget:
        return LinkBudget(i, j, float(self.ap_distance[i, j]), int(self.ap_walls[i, j]),
                          int(self.ap_floors[i, j]), int(self.ap_external[i, j]),
                          float(self.ap_median[i, j]), float(self.ap_shadow[i, j]),
                          float(self.ap_total[i, j]))

    def user_link(self, i: int, u: int) -> LinkBudget:
        return LinkBudget(i, u, float(self.user_distance[i, u]), int(self.user_walls[i, u]),
                          int(self.user_floors[i, u]), int(self.user_external[i, u]),
                          float(self.user_median[i, u]), float(self.user_shadow[i, u]),
                          float(self.user_total[i, u]))


def segment_losses(p0, p1, b0, b1, buildings, profile: PropagationProfile = DEFAULT_PROFILE,
                   internal_walls: bool = True):
    """Median loss and crossing counts for a batch of segments."""
    p0 = np.asarray(p0, float).reshape(-1, 3)
    p1 = np.asarray(p1, float).reshape(-1, 3)
    b0 = np.asarray(b0, np.int64)
    b1 = np.asarray(b1, np.int64)
    boxes, cells = _boxes(buildings)
    c = segment_crossings(p0, p1, b0, b1, boxes, cells)
    d = np.linalg.norm(p1 - p0, axis=1)
    d_eff = np.maximum(d, profile.min_distance_m)
    same = (b0 >= 0) & (b0 == b1)
    wscale = 1.0 if internal_walls else 0.0
    indoor = mwf_loss(d_eff, c["walls"] * wscale, c["floors"], profile)
    h_tx = np.maximum(p0[:, 2], p1[:, 2])
    h_rx = np.minimum(p0[:, 2], p1[:, 2])
    casc = cascade_loss(d, c["t_exit"], c["t_entry"], b0 >= 0, b1 >= 0, c["walls0"], c["floors0"],
                        c["walls1"], c["floors1"], ~c["occluded"], profile, h_tx, h_rx, internal_walls)
    median = np.where(same, indoor, casc)
    return median, d, c, same


def build_link_budgets(realization: NetworkRealization,
                       profile: PropagationProfile = DEFAULT_PROFILE) -> LinkBudgetTable:
    """Compute every AP-to-AP and AP-to-user budget and attach it to the realization."""
    ap_pos = realization.ap_positions
    user_pos = realization.user_positions
    ap_b = realization.ap_buildings
    user_b = realization.user_buildings
    n, m = len(ap_pos), len(user_pos)
    buildings = realization.buildings
    walls_on = realization.internal_walls
    ids = np.array([ap.id for ap in realization.aps], np.int64)
    uids = np.array([u.id for u in realization.users], np.int64)

    # AP-to-AP: upper triangle, mirrored (median loss is reciprocal)
    iu, ju = np.triu_indices(n, k=1)
    med, dist, c, same = segment_losses(ap_pos[iu], ap_pos[ju], ap_b[iu], ap_b[ju], buildings,
                                        profile, walls_on)
    sigma = np.where(same, profile.shadow_sigma_indoor_db, profile.shadow_sigma_other_db)
    shadow = pair_shadowing(realization.seed, ap_key(ids[iu]), ap_key(ids[ju]), sigma)

    def sym(values, fill, dtype=float):
        out = np.full((n, n), fill, dtype=dtype)
        out[iu, ju] = values
        out[ju, iu] = values
        return out

    ap_distance = sym(dist, 0.0)
    ap_median = sym(med, np.inf)
    ap_shadow = sym(shadow, 0.0)
    ap_walls = sym(c["walls"], 0, np.int64)
    ap_floors = sym(c["floors"], 0, np.int64)
    ap_external = sym(c["external"], 0, np.int64)
    clamped = int(np.count_nonzero(dist < profile.min_distance_m))

    # AP-to-user: full matrix
    ii, uu = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    ii, uu = ii.ravel(), uu.ravel()
    med_u, dist_u, cu, same_u = segment_losses(ap_pos[ii], user_pos[uu], ap_b[ii], user_b[uu], buildings,
                                               profile, walls_on)
    sigma_u = np.where(same_u, profile.shadow_sigma_indoor_db, profile.shadow_sigma_other_db)
    shadow_u = pair_shadowing(realization.seed, ap_key(ids[ii]), user_key(uids[uu]), sigma_u)
    clamped += int(np.count_nonzero(dist_u < profile.min_distance_m))

    table = LinkBudgetTable(
        ap_distance, ap_median, ap_shadow, ap_walls, ap_floors, ap_external,
        dist_u.reshape(n, m), med_u.reshape(n, m), shadow_u.reshape(n, m),
        cu["walls"].reshape(n, m), cu["floors"].reshape(n, m), cu["external"].reshape(n, m),
        clamped,
    )
    realization.link_budgets = table
    return table


def dump_link_budgets(table: LinkBudgetTable, path, realization: Optional[NetworkRealization] = None) -> None:
    """Write all budgets as ``from,to,distance_m,walls,floors,median_db,shadow_db,total_db``.

    Node names are ``ap<i>`` and ``user<i>``.
    """
    n = table.ap_median.shape[0]
    m = table.user_median.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["from", "to", "distance_m", "walls", "floors", "median_db", "shadow_db", "total_db"])
        for i in range(n):
            for j in range(n):
                if i != j:
                    lb = table.ap_link(i, j)
                    w.writerow([f"ap{i}", f"ap{j}", f"{lb.distance:.3f}", lb.walls_crossed, lb.floors_crossed,
                                f"{lb.median_loss:.3f}", f"{lb.shadowing:.3f}", f"{lb.total_loss:.3f}"])
            for u in range(m):
                lb = table.user_link(i, u)
                w.writerow([f"ap{i}", f"user{u}", f"{lb.distance:.3f}", lb.walls_crossed, lb.floors_crossed,
                            f"{lb.median_loss:.3f}", f"{lb.shadowing:.3f}", f"{lb.total_loss:.3f}"])
