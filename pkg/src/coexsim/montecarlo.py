"""Campaign orchestration: seeding, the realization loop, pooled statistics
and result files.
"""
from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .mac import ENTRANT_VARIANTS, PRINTED_TS_US, EntrantVariant
from .phy import LinkState, ThroughputReport, evaluate, link_state
from .propagation import DEFAULT_PROFILE, PropagationProfile, build_link_budgets
from .scenario import (NetworkRealization, OutdoorLayout, Phy, ScenarioKind, generate_indoor_indoor,
                       generate_indoor_outdoor, generate_outdoor_outdoor)
from .spectrum import ChannelScheme, assign_channels, build_cs_graph, received_power

RESULT_FORMAT = "coexsim-campaign"
POPULATIONS = ("legacy", "entrant")


class RealizationError(RuntimeError):
    """A realization failed; carries the index and seed that reproduce it."""

    def __init__(self, index: int, seed: int, cause: BaseException):
        super().__init__(f"realization {index} (seed {seed}) failed: {type(cause).__name__}: {cause}")
        self.index = index
        self.seed = seed


class ResultFileError(ValueError):
    """A result file is unreadable, truncated or from another version."""


# ----------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class CampaignConfig:
    scenario_kind: ScenarioKind = ScenarioKind.INDOOR_INDOOR
    n_legacy: int = 10
    # indoor/outdoor only: legacy APs per km^2 of the study area
    legacy_density: float = 500.0
    entrant_counts: tuple[int, ...] = tuple(range(1, 11))
    variants: tuple[str, ...] = tuple(ENTRANT_VARIANTS)
    channel_scheme: ChannelScheme = ChannelScheme.SENSE
    realizations: int = 300
    master_seed: int = 1
    slot_duration_ms: float = 100.0
    # frames per duty-cycle slot from the fixed 419 us frame, or derived
    # from 802.11n timing at the median rate
    frames_per_slot_mode: str = "fixed"
    grid: tuple[int, int] = (10, 2)
    layout: OutdoorLayout = OutdoorLayout()
    propagation: PropagationProfile = DEFAULT_PROFILE
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "scenario_kind", ScenarioKind(self.scenario_kind))
        object.__setattr__(self, "channel_scheme", ChannelScheme(self.channel_scheme))
        object.__setattr__(self, "entrant_counts", tuple(int(n) for n in self.entrant_counts))
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "grid", tuple(self.grid))
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")
        if not self.entrant_counts:
            raise ValueError("entrant_counts must not be empty")
        if min(self.entrant_counts) < 0 or self.n_legacy < 0 or self.legacy_density < 0:
            raise ValueError("AP counts and densities must be non-negative")
        unknown = [v for v in self.variants if v not in ENTRANT_VARIANTS]
        if unknown or not self.variants:
            raise ValueError(f"unknown entrant variants {unknown}")
        if self.frames_per_slot_mode not in ("fixed", "derived"):
            raise ValueError("frames_per_slot_mode must be 'fixed' or 'derived'")

    @property
    def entrant_variants(self) -> list[EntrantVariant]:
        return [ENTRANT_VARIANTS[v].with_slot(self.slot_duration_ms) for v in self.variants]

    @property
    def t_s_us(self) -> Optional[float]:
        return PRINTED_TS_US if self.frames_per_slot_mode == "fixed" else None

    def replace(self, **changes) -> "CampaignConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scenario_kind"] = self.scenario_kind.value
        d["channel_scheme"] = self.channel_scheme.value
        d["entrant_counts"] = list(self.entrant_counts)
        d["variants"] = list(self.variants)
        d["grid"] = list(self.grid)
        lay = d["layout"]
        lay["area"] = list(self.layout.area)
        lay["sites"] = None if self.layout.sites is None else [list(map(float, s)) for s in self.layout.sites]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        d = dict(d)
        if "layout" in d and isinstance(d["layout"], dict):
            lay = dict(d["layout"])
            if "area" in lay:
                lay["area"] = tuple(lay["area"])
            if lay.get("sites") is not None:
                lay["sites"] = tuple(tuple(s) for s in lay["sites"])
            d["layout"] = OutdoorLayout(**lay)
        if "propagation" in d and isinstance(d["propagation"], dict):
            d["propagation"] = PropagationProfile(**d["propagation"])
        return cls(**d)


def derive_seeds(master_seed: int, indices) -> np.ndarray:
    """64-bit realization seeds; a bijection of the index for a fixed master."""
    idx = np.asarray(indices, np.uint64)
    with np.errstate(over="ignore"):
        z = idx + np.uint64(int(master_seed) & 0xFFFFFFFFFFFFFFFF) * np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def derive_seed(master_seed: int, index: int) -> int:
    return int(derive_seeds(master_seed, [index])[0])


# ----------------------------------------------------------------------------
# one realization

def generate(config: CampaignConfig, seed: int, n_entrant: int) -> NetworkRealization:
    kind = config.scenario_kind
    if kind in (ScenarioKind.INDOOR_INDOOR, ScenarioKind.INDOOR_INDOOR_NO_WALLS):
        return generate_indoor_indoor(seed, config.n_legacy, n_entrant,
                                      kind is ScenarioKind.INDOOR_INDOOR, grid=config.grid)
    if kind is ScenarioKind.INDOOR_OUTDOOR:
        return generate_indoor_outdoor(seed, config.legacy_density, n_entrant, config.layout)
    return generate_outdoor_outdoor(seed, config.n_legacy, n_entrant, config.layout)


def evaluate_realization(realization: NetworkRealization, variant: EntrantVariant,
                         config: CampaignConfig, links: Optional[LinkState] = None) -> ThroughputReport:
    """Channels, CS graph and throughput for one entrant variant."""
    labelled = realization.with_entrant_phy(variant.phy)
    phys = [ap.phy for ap in labelled.aps]
    plan = assign_channels(labelled, config.channel_scheme, variant.mac)
    graph = build_cs_graph(labelled, plan, variant.mac)
    links = link_state(labelled) if links is None else links
    return evaluate(graph, links, phys, variant.mac, t_s_us=config.t_s_us)


def run_realization(config: CampaignConfig, seed: int, n_entrant: Optional[int] = None
                    ) -> dict[str, ThroughputReport]:
    """Reports per entrant variant at one sweep point (default: the first)."""
    n = config.entrant_counts[0] if n_entrant is None else n_entrant
    real = generate(config, seed, n)
    build_link_budgets(real, config.propagation)
    return {v.name: evaluate_realization(real, v, config) for v in config.entrant_variants}


def _sweep_seed(config: CampaignConfig, index: int, seed: int) -> dict:
    """Per-AP throughputs of one seed at every sweep point and variant.

    The realization is generated once with the largest entrant count and
    each sweep point takes an entrant prefix, so all points and variants
    share placements and link budgets.
    """
    try:
        full = generate(config, seed, max(config.entrant_counts))
        build_link_budgets(full, config.propagation)
        out = {}
        for n in sorted(set(config.entrant_counts)):
            real = full.entrant_prefix(n)
            links = link_state(real)
            received_power(real)   # cached on the prefix, shared by every variant
            for v in config.entrant_variants:
                rep = evaluate_realization(real, v, config, links)
                out[(n, v.name)] = (rep.population(False), rep.population(True))
        return out
    except Exception as exc:  # noqa: BLE001
        raise RealizationError(index, seed, exc) from exc


def _sweep_chunk(args):
    config, pairs = args
    return [_sweep_seed(config, i, s) for i, s in pairs]


# ----------------------------------------------------------------------------
# statistics and results

def median(samples) -> float:
    """Sample median; even counts average the two middle values."""
    a = np.asarray(samples, float)
    return float(np.median(a)) if a.size else float("nan")


def ecdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Distinct sorted values and the cumulative probability at each."""
    a = np.sort(np.asarray(samples, float))
    if a.size == 0:
        return a, a
    values, counts = np.unique(a, return_counts=True)
    return values, np.cumsum(counts) / a.size


@dataclass
class PointResult:
    """Pooled per-AP samples for one (sweep point, variant)."""
    legacy: np.ndarray
    entrant: np.ndarray
    realizations: int

    def samples(self, population: str) -> np.ndarray:
        if population not in POPULATIONS:
            raise KeyError(f"unknown population {population!r}; valid: {', '.join(POPULATIONS)}")
        return getattr(self, population)

    def median(self, population: str) -> float:
        return median(self.samples(population))

    def cdf(self, population: str):
        return ecdf(self.samples(population))


@dataclass
class CampaignResult:
    config: CampaignConfig
    points: dict = field(default_factory=dict)   # (n_entrant, variant) -> PointResult
    version: str = __version__

    @property
    def sweep(self) -> list[int]:
        return sorted({n for n, _ in self.points})

    def median(self, n_entrant: int, variant: str, population: str) -> float:
        return self.points[(n_entrant, variant)].median(population)

    def medians(self, variant: str, population: str) -> np.ndarray:
        return np.array([self.median(n, variant, population) for n in self.sweep])

    def restrict(self, n_entrant: int) -> "CampaignResult":
        return CampaignResult(self.config, {k: v for k, v in self.points.items() if k[0] == n_entrant},
                              self.version)

    def merge(self, other: "CampaignResult") -> "CampaignResult":
        """Pool two campaigns over disjoint realization ranges."""
        if set(self.points) != set(other.points):
            raise ValueError("cannot merge campaigns with different sweep points or variants")
        pts = {k: PointResult(np.sort(np.concatenate([p.legacy, other.points[k].legacy])),
                              np.sort(np.concatenate([p.entrant, other.points[k].entrant])),
                              p.realizations + other.points[k].realizations)
               for k, p in self.points.items()}
        return CampaignResult(self.config, pts, self.version)

    def median_rows(self):
        """``(sweep, population, variant, median)`` in a stable order."""
        for n in self.sweep:
            for pop in POPULATIONS:
                for v in self.config.variants:
                    yield n, pop, v, self.median(n, v, pop)

    def __eq__(self, other):
        if not isinstance(other, CampaignResult):
            return NotImplemented
        if self.config != other.config or self.version != other.version or set(self.points) != set(other.points):
            return False
        return all(np.array_equal(p.legacy, other.points[k].legacy)
                   and np.array_equal(p.entrant, other.points[k].entrant)
                   and p.realizations == other.points[k].realizations for k, p in self.points.items())


def run_campaign(config: CampaignConfig, *, workers: int = 1, indices: Optional[Iterable[int]] = None,
                 progress=None) -> CampaignResult:
    """Run every realization and pool per-AP samples.

    ``indices`` selects realization numbers (default ``range(realizations)``);
    seeds depend only on (master seed, index), so splitting a campaign over
    disjoint index ranges and merging gives the same result.
    """
    idx = list(range(config.realizations) if indices is None else indices)
    seeds = derive_seeds(config.master_seed, idx)
    pairs = [(i, int(s)) for i, s in zip(idx, seeds)]
    if workers <= 1:
        per_seed = []
        for k, (i, s) in enumerate(pairs):
            per_seed.append(_sweep_seed(config, i, s))
            if progress:
                progress(k + 1, len(pairs))
    else:
        n_chunks = min(len(pairs), workers * 4)
        chunks = [pairs[c::n_chunks] for c in range(n_chunks)]
        per_seed_by_index = {}
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk, outs in zip(chunks, pool.map(_sweep_chunk, [(config, c) for c in chunks])):
                for (i, _), o in zip(chunk, outs):
                    per_seed_by_index[i] = o
                if progress:
                    progress(len(per_seed_by_index), len(pairs))
        per_seed = [per_seed_by_index[i] for i, _ in pairs]

    points = {}
    for key in per_seed[0] if per_seed else []:
        leg = np.sort(np.concatenate([r[key][0] for r in per_seed]))
        ent = np.sort(np.concatenate([r[key][1] for r in per_seed]))
        points[key] = PointResult(leg, ent, len(per_seed))
    return CampaignResult(config, points)


# ----------------------------------------------------------------------------
# persistence

def _to_json(result: CampaignResult) -> dict:
    return {
        "format": RESULT_FORMAT,
        "version": result.version,
        "config": result.config.to_dict(),
        "points": [
            {"n_entrant": n, "variant": v, "realizations": p.realizations,
             "legacy_median_mbps": p.median("legacy"), "entrant_median_mbps": p.median("entrant"),
             "legacy_mbps": [float(x) for x in p.legacy], "entrant_mbps": [float(x) for x in p.entrant]}
            for (n, v), p in sorted(result.points.items())
        ],
    }


def persist(result: CampaignResult, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(_to_json(result), separators=(",", ":")), encoding="utf-8")
    os.replace(tmp, path)


def load(path) -> CampaignResult:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ResultFileError(f"{path}: unreadable result file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != RESULT_FORMAT:
        raise ResultFileError(f"{path}: not a campaign result file")
    if doc.get("version") != __version__:
        raise ResultFileError(f"{path}: written by version {doc.get('version')}, this is {__version__}")
    try:
        config = CampaignConfig.from_dict(doc["config"])
        points = {(int(p["n_entrant"]), str(p["variant"])):
                  PointResult(np.asarray(p["legacy_mbps"], float), np.asarray(p["entrant_mbps"], float),
                              int(p["realizations"])) for p in doc["points"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise ResultFileError(f"{path}: malformed result file ({exc})") from None
    return CampaignResult(config, points, doc["version"])


def sweep_medians(results: Sequence[CampaignResult]) -> list[tuple]:
    """Rows ``(campaign, sweep, population, variant, median)`` over several campaigns."""
    return [(r.config.name,) + row for r in results for row in r.median_rows()]
