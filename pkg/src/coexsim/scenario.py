"""Deployment geometries and node placement.

Four scenario kinds are supported: a single-floor dual-stripe building with
both populations indoors (with or without internal wall attenuation), indoor
legacy APs under outdoor entrant APs, and both populations outdoors. Every
generator is a pure function of its seed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

APARTMENT_SIZE = (10.0, 10.0, 3.0)
INDOOR_TX_POWER_DBM = 23.0
OUTDOOR_TX_POWER_DBM = 30.0
OUTDOOR_USER_HEIGHT_M = 1.5
MAX_USER_DISTANCE_M = 50.0
DEFAULT_AREA_M = (346.0, 389.0)
MAX_ATTEMPTS = 1000


class ConfigurationError(ValueError):
    """Requested deployment is inconsistent with the scenario geometry."""


class GenerationError(RuntimeError):
    """Random placement failed within the retry budget."""


class ScenarioKind(str, Enum):
    INDOOR_INDOOR = "indoor_indoor"
    INDOOR_INDOOR_NO_WALLS = "indoor_indoor_no_walls"
    INDOOR_OUTDOOR = "indoor_outdoor"
    OUTDOOR_OUTDOOR = "outdoor_outdoor"


class Population(str, Enum):
    LEGACY = "legacy"
    ENTRANT = "entrant"


class Phy(str, Enum):
    DOT11N = "dot11n"
    LTE = "lte"


@dataclass(frozen=True)
class Building:
    origin: tuple[float, float]
    grid: tuple[int, int]
    floors: int = 1
    apartment_size: tuple[float, float, float] = APARTMENT_SIZE

    def __post_init__(self):
        if min(self.apartment_size) <= 0:
            raise ConfigurationError("apartment dimensions must be positive")
        if self.floors < 1 or min(self.grid) < 1:
            raise ConfigurationError("building needs at least one apartment and one floor")

    @property
    def size(self) -> tuple[float, float, float]:
        ax, ay, az = self.apartment_size
        return (self.grid[0] * ax, self.grid[1] * ay, self.floors * az)

    @property
    def height(self) -> float:
        return self.size[2]

    @property
    def box(self) -> tuple[float, float, float, float, float, float]:
        sx, sy, sz = self.size
        x0, y0 = self.origin
        return (x0, x0 + sx, y0, y0 + sy, 0.0, sz)

    @property
    def n_apartments(self) -> int:
        return self.grid[0] * self.grid[1] * self.floors

    def contains(self, point, *, footprint_only: bool = False) -> bool:
        x0, x1, y0, y1, z0, z1 = self.box
        inside = x0 < point[0] < x1 and y0 < point[1] < y1
        if footprint_only:
            return inside
        return inside and z0 < point[2] < z1

    def apartment_index(self, point) -> tuple[int, int, int]:
        """(column, row, floor) of the apartment holding ``point``."""
        if not self.contains(point):
            raise ValueError(f"{tuple(point)} is not inside the building")
        ax, ay, az = self.apartment_size
        return (int((point[0] - self.origin[0]) // ax),
                int((point[1] - self.origin[1]) // ay),
                int(point[2] // az))

    def apartment_bounds(self, flat_index: int) -> np.ndarray:
        """Box ``[x0, x1, y0, y1, z0, z1]`` of apartment number ``flat_index``."""
        cols, rows = self.grid
        floor_, rem = divmod(flat_index, cols * rows)
        row, col = divmod(rem, cols)
        ax, ay, az = self.apartment_size
        x0 = self.origin[0] + col * ax
        y0 = self.origin[1] + row * ay
        z0 = floor_ * az
        return np.array([x0, x0 + ax, y0, y0 + ay, z0, z0 + az])

    def overlaps(self, other: "Building", gap: float = 0.0) -> bool:
        a, b = self.box, other.box
        return not (a[1] + gap <= b[0] or b[1] + gap <= a[0]
                    or a[3] + gap <= b[2] or b[3] + gap <= a[2])


@dataclass
class AccessPoint:
    id: int
    population: Population
    position: tuple[float, float, float]
    tx_power_dbm: float
    phy: Phy
    indoor: bool
    building: int = -1
    channel: Optional[int] = None
    mac: Optional[object] = None


@dataclass
class UserTerminal:
    id: int
    serving_ap: int
    position: tuple[float, float, float]
    indoor: bool
    building: int = -1


@dataclass
class NetworkRealization:
    seed: int
    scenario_kind: ScenarioKind
    buildings: list[Building]
    aps: list[AccessPoint]
    users: list[UserTerminal]
    area: tuple[float, float]
    internal_walls: bool = True
    link_budgets: Optional[object] = None
    _arrays: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_legacy(self) -> int:
        return sum(ap.population is Population.LEGACY for ap in self.aps)

    @property
    def n_entrant(self) -> int:
        return len(self.aps) - self.n_legacy

    @property
    def area_km2(self) -> float:
        return self.area[0] * self.area[1] / 1e6

    def density(self, population: Optional[Population] = None) -> float:
        """AP density in APs/km^2 over the study area."""
        n = len(self.aps) if population is None else sum(
            ap.population is population for ap in self.aps)
        return n / self.area_km2

    def _cached(self, key, build):
        if key not in self._arrays:
            self._arrays[key] = build()
        return self._arrays[key]

    @property
    def ap_positions(self) -> np.ndarray:
        return self._cached("ap_pos", lambda: np.array([ap.position for ap in self.aps], float).reshape(-1, 3))

    @property
    def user_positions(self) -> np.ndarray:
        return self._cached("user_pos", lambda: np.array([u.position for u in self.users], float).reshape(-1, 3))

    @property
    def ap_buildings(self) -> np.ndarray:
        return self._cached("ap_bld", lambda: np.array([ap.building for ap in self.aps], np.int64))

    @property
    def user_buildings(self) -> np.ndarray:
        return self._cached("user_bld", lambda: np.array([u.building for u in self.users], np.int64))

    @property
    def tx_power_dbm(self) -> np.ndarray:
        return self._cached("ptx", lambda: np.array([ap.tx_power_dbm for ap in self.aps], float))

    @property
    def entrant_mask(self) -> np.ndarray:
        return self._cached("ent", lambda: np.array(
            [ap.population is Population.ENTRANT for ap in self.aps], bool))

    @property
    def indoor_mask(self) -> np.ndarray:
        return self._cached("indoor", lambda: np.array([ap.indoor for ap in self.aps], bool))

    def entrant_prefix(self, n_entrant: int) -> "NetworkRealization":
        """All legacy APs plus the first ``n_entrant`` entrants (and their users).

        Entrants are placed as a uniformly random sequence, so any prefix is
        itself a valid placement; sweeps over the entrant count reuse one
        realization this way. Link budgets, when present, are sliced too.
        """
        if not 0 <= n_entrant <= self.n_entrant:
            raise ConfigurationError(f"prefix of {n_entrant} entrants from {self.n_entrant}")
        keep = self.n_legacy + n_entrant
        idx = np.arange(keep)
        budgets = None if self.link_budgets is None else self.link_budgets.subset(idx)
        return NetworkRealization(self.seed, self.scenario_kind, self.buildings, self.aps[:keep],
                                  self.users[:keep], self.area, self.internal_walls, budgets)

    def with_entrant_phy(self, phy: Phy) -> "NetworkRealization":
        """Same geometry with the entrant PHY relabelled (geometry arrays shared)."""
        aps = [AccessPoint(ap.id, ap.population, ap.position, ap.tx_power_dbm,
                           phy if ap.population is Population.ENTRANT else ap.phy,
                           ap.indoor, ap.building) for ap in self.aps]
        return NetworkRealization(self.seed, self.scenario_kind, self.buildings, aps,
                                  self.users, self.area, self.internal_walls,
                                  self.link_budgets, dict(self._arrays))


# ----------------------------------------------------------------------------
# random streams

GEOMETRY, LEGACY_PLACEMENT, ENTRANT_PLACEMENT = 0, 1, 2


def stream(seed: int, key: int) -> np.random.Generator:
    """Independent generator for one purpose within a realization.

    Legacy and entrant placement draw from separate streams so the legacy
    layout does not change when only the entrant count is swept.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))


def _uniform_in_box(rng, box) -> tuple[float, float, float]:
    u = rng.random(3)
    return (float(box[0] + u[0] * (box[1] - box[0])),
            float(box[2] + u[1] * (box[3] - box[2])),
            float(box[4] + u[2] * (box[5] - box[4])))


def _place_in_apartments(rng, buildings, n, population, phy, start_id, exclude=(), allow_replacement=False):
    """Place ``n`` AP/user pairs in uniformly chosen apartments.

    Draws are sequential per pair, so the first k pairs do not depend on
    ``n``: a placement of k pairs is a prefix of any larger one.
    """
    slots = [(b, a) for b, bld in enumerate(buildings) for a in range(bld.n_apartments)]
    taken = set(exclude)
    free = [s for s in slots if s not in taken]
    if n <= len(free):
        order = rng.permutation(len(free)) if n else []
        pick = lambda k: free[order[k]]  # noqa: E731
    elif allow_replacement:
        pick = lambda k: slots[int(rng.integers(0, len(slots)))]  # noqa: E731
    else:
        raise ConfigurationError(
            f"{n} {population.value} APs requested but only {len(free)} free apartments")
    aps, users, picks = [], [], []
    for k in range(n):
        b, a = pick(k)
        picks.append((b, a))
        box = buildings[b].apartment_bounds(a)
        ap_id = start_id + k
        aps.append(AccessPoint(ap_id, population, _uniform_in_box(rng, box), INDOOR_TX_POWER_DBM,
                               phy, True, b))
        users.append(UserTerminal(ap_id, ap_id, _uniform_in_box(rng, box), True, b))
    return aps, users, picks


def dual_stripe_building(grid=(10, 2), margin=5.0) -> tuple[Building, tuple[float, float]]:
    b = Building(origin=(margin, margin), grid=tuple(grid), floors=1)
    sx, sy, _ = b.size
    return b, (sx + 2 * margin, sy + 2 * margin)


def generate_indoor_indoor(seed: int, n_legacy: int, n_entrant: int, internal_walls: bool = True, *,
                           grid=(10, 2), margin: float = 5.0, entrant_phy: Phy = Phy.LTE) -> NetworkRealization:
    """Both populations inside one single-floor dual-stripe building."""
    if n_legacy < 0 or n_entrant < 0:
        raise ConfigurationError("AP counts must be non-negative")
    building, area = dual_stripe_building(grid, margin)
    if n_legacy + n_entrant > building.n_apartments:
        raise ConfigurationError(
            f"{n_legacy + n_entrant} APs requested for {building.n_apartments} apartments")
    leg_aps, leg_users, taken = _place_in_apartments(
        stream(seed, LEGACY_PLACEMENT), [building], n_legacy, Population.LEGACY, Phy.DOT11N, 0)
    ent_aps, ent_users, _ = _place_in_apartments(
        stream(seed, ENTRANT_PLACEMENT), [building], n_entrant, Population.ENTRANT, entrant_phy,
        n_legacy, exclude=taken)
    kind = ScenarioKind.INDOOR_INDOOR if internal_walls else ScenarioKind.INDOOR_INDOOR_NO_WALLS
    return NetworkRealization(seed, kind, [building], leg_aps + ent_aps, leg_users + ent_users,
                              area, internal_walls)


# ----------------------------------------------------------------------------
# outdoor layouts

def place_buildings(rng, n_buildings: int, area=DEFAULT_AREA_M, *, length_range=(3, 10), depth: int = 2,
                    floors_range=(3, 5), street: float = 10.0, keep_clear: Sequence = ()) -> list[Building]:
    """Random non-overlapping buildings of random length and height."""
    ax, ay, _ = APARTMENT_SIZE
    buildings: list[Building] = []
    for _ in range(n_buildings):
        for _attempt in range(MAX_ATTEMPTS):
            length = int(rng.integers(length_range[0], length_range[1] + 1))
            floors = int(rng.integers(floors_range[0], floors_range[1] + 1))
            grid = (length, depth) if rng.random() < 0.5 else (depth, length)
            sx, sy = grid[0] * ax, grid[1] * ay
            if sx > area[0] or sy > area[1]:
                continue
            origin = (float(rng.uniform(0, area[0] - sx)), float(rng.uniform(0, area[1] - sy)))
            cand = Building(origin, grid, floors)
            if any(cand.overlaps(b, street) for b in buildings):
                continue
            if any(cand.contains((x, y, 0.0), footprint_only=True) for x, y in keep_clear):
                continue
            buildings.append(cand)
            break
        else:
            raise GenerationError(
                f"could not place building {len(buildings) + 1} of {n_buildings} "
                f"in {area[0]:.0f}x{area[1]:.0f} m after {MAX_ATTEMPTS} attempts")
    return buildings


def _outside_all(buildings, x, y) -> bool:
    return not any(b.contains((x, y, 0.0), footprint_only=True) for b in buildings)


def sample_outdoor_sites(rng, n_sites: int, buildings, area=DEFAULT_AREA_M,
                         min_separation: float = 20.0) -> np.ndarray:
    """Uniform street-level sites outside all footprints, pairwise separated."""
    sites: list[tuple[float, float]] = []
    attempts = 0
    while len(sites) < n_sites:
        attempts += 1
        if attempts > MAX_ATTEMPTS * max(n_sites, 1):
            raise GenerationError(f"placed only {len(sites)} of {n_sites} outdoor sites")
        x, y = float(rng.uniform(0, area[0])), float(rng.uniform(0, area[1]))
        if not _outside_all(buildings, x, y):
            continue
        if any(math.hypot(x - sx, y - sy) < min_separation for sx, sy in sites):
            continue
        sites.append((x, y))
    return np.array(sites, float).reshape(-1, 2)


def load_outdoor_sites(path) -> np.ndarray:
    """Read an ``x_m,y_m`` CSV of outdoor AP sites."""
    path = Path(path)
    sites = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty site file")
        if [h.strip() for h in header] != ["x_m", "y_m"]:
            raise ValueError(f"{path}:1: expected header 'x_m,y_m', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                sites.append((float(row[0]), float(row[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric coordinate in {row!r}") from None
    if not sites:
        raise ValueError(f"{path}: no sites")
    return np.array(sites, float)


def rooftop_height(buildings, x: float, y: float, default: float) -> float:
    """Roof level of the building nearest to (x, y)."""
    if not buildings:
        return default
    best, best_d = default, math.inf
    for b in buildings:
        x0, x1, y0, y1, _, _ = b.box
        d = math.hypot(max(x0 - x, 0.0, x - x1), max(y0 - y, 0.0, y - y1))
        if d < best_d:
            best, best_d = b.height, d
    return best


def _outdoor_user(rng, buildings, area, ap_xy, max_distance=MAX_USER_DISTANCE_M):
    for _ in range(MAX_ATTEMPTS):
        r = max_distance * math.sqrt(rng.random())
        phi = 2 * math.pi * rng.random()
        x, y = ap_xy[0] + r * math.cos(phi), ap_xy[1] + r * math.sin(phi)
        if 0 <= x <= area[0] and 0 <= y <= area[1] and _outside_all(buildings, x, y):
            return (x, y, OUTDOOR_USER_HEIGHT_M)
    raise GenerationError(f"no outdoor user position within {max_distance} m of {tuple(ap_xy)}")


def _outdoor_pairs(rng, buildings, area, sites, population, phy, start_id, default_height):
    aps, users = [], []
    for k, (x, y) in enumerate(sites):
        ap_id = start_id + k
        z = rooftop_height(buildings, x, y, default_height)
        aps.append(AccessPoint(ap_id, population, (float(x), float(y), z), OUTDOOR_TX_POWER_DBM, phy, False))
        users.append(UserTerminal(ap_id, ap_id, _outdoor_user(rng, buildings, area, (x, y)), False))
    return aps, users


@dataclass(frozen=True)
class OutdoorLayout:
    """Knobs shared by the two outdoor scenario generators."""
    area: tuple[float, float] = DEFAULT_AREA_M
    n_buildings: int = 24
    building_depth: int = 2
    street: float = 10.0
    n_sites: int = 20
    min_site_separation: float = 20.0
    sites: Optional[tuple] = None

    @property
    def mean_building_height(self) -> float:
        return 4 * APARTMENT_SIZE[2]


def _layout_buildings_and_sites(seed, layout: OutdoorLayout):
    rng = stream(seed, GEOMETRY)
    keep_clear = () if layout.sites is None else tuple(map(tuple, layout.sites))
    buildings = place_buildings(rng, layout.n_buildings, layout.area, depth=layout.building_depth,
                                street=layout.street, keep_clear=keep_clear)
    if layout.sites is not None:
        sites = np.asarray(layout.sites, float).reshape(-1, 2)
    else:
        sites = sample_outdoor_sites(rng, layout.n_sites, buildings, layout.area, layout.min_site_separation)
    return buildings, sites


def indoor_count_for_density(density_per_km2: float, area) -> int:
    return int(round(density_per_km2 * area[0] * area[1] / 1e6))


def generate_indoor_outdoor(seed: int, indoor_density: float, n_outdoor: int,
                            layout: OutdoorLayout = OutdoorLayout(), *,
                            entrant_phy: Phy = Phy.LTE) -> NetworkRealization:
    """Legacy APs in random buildings, entrant APs on outdoor rooftop sites."""
    if indoor_density < 0 or n_outdoor < 0:
        raise ConfigurationError("density and AP count must be non-negative")
    buildings, sites = _layout_buildings_and_sites(seed, layout)
    if n_outdoor > len(sites):
        raise ConfigurationError(f"{n_outdoor} outdoor APs requested but only {len(sites)} sites")
    n_legacy = indoor_count_for_density(indoor_density, layout.area)
    leg_aps, leg_users, _ = _place_in_apartments(
        stream(seed, LEGACY_PLACEMENT), buildings, n_legacy, Population.LEGACY, Phy.DOT11N, 0,
        allow_replacement=True)
    rng = stream(seed, ENTRANT_PLACEMENT)
    order = rng.permutation(len(sites))[:n_outdoor]
    ent_aps, ent_users = _outdoor_pairs(rng, buildings, layout.area, sites[order], Population.ENTRANT,
                                        entrant_phy, n_legacy, layout.mean_building_height)
    return NetworkRealization(seed, ScenarioKind.INDOOR_OUTDOOR, buildings, leg_aps + ent_aps,
                              leg_users + ent_users, layout.area)


def generate_outdoor_outdoor(seed: int, n_legacy: int, n_entrant: int,
                             layout: OutdoorLayout = OutdoorLayout(), *,
                             entrant_phy: Phy = Phy.LTE) -> NetworkRealization:
    """Both populations on disjoint random subsets of the outdoor sites."""
    if n_legacy < 0 or n_entrant < 0:
        raise ConfigurationError("AP counts must be non-negative")
    buildings, sites = _layout_buildings_and_sites(seed, layout)
    if n_legacy + n_entrant > len(sites):
        raise ConfigurationError(
            f"{n_legacy + n_entrant} outdoor APs requested but only {len(sites)} sites")
    # legacy take a prefix of one permutation, entrants a prefix of the rest,
    # so sweeping the entrant count keeps the legacy sites fixed
    order = stream(seed, GEOMETRY + 10).permutation(len(sites))
    leg_sites = sites[order[:n_legacy]]
    ent_sites = sites[order[n_legacy:n_legacy + n_entrant]]
    h = layout.mean_building_height
    leg_aps, leg_users = _outdoor_pairs(stream(seed, LEGACY_PLACEMENT), buildings, layout.area,
                                        leg_sites, Population.LEGACY, Phy.DOT11N, 0, h)
    ent_aps, ent_users = _outdoor_pairs(stream(seed, ENTRANT_PLACEMENT), buildings, layout.area,
                                        ent_sites, Population.ENTRANT, entrant_phy, n_legacy, h)
    return NetworkRealization(seed, ScenarioKind.OUTDOOR_OUTDOOR, buildings, leg_aps + ent_aps,
                              leg_users + ent_users, layout.area)
