"""Command-line front end.

``coexsim run``      run campaigns from a preset and/or a YAML file
``coexsim cdf``      emit the empirical CDF of one population from a result file
``coexsim validate`` resolve a configuration and report problems

Exit codes: 0 success, 2 configuration or input error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import difflib
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from . import __version__
from .mac import ENTRANT_VARIANTS
from .montecarlo import (POPULATIONS, CampaignConfig, CampaignResult, RealizationError, ResultFileError, load,
                         persist, run_campaign, sweep_medians)
from .propagation import PropagationProfile
from .scenario import OutdoorLayout, ScenarioKind, dual_stripe_building
from .spectrum import ChannelScheme

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

MEDIAN_COLUMNS = ("campaign", "sweep", "population", "mac", "median_mbps")
CDF_COLUMNS = ("throughput_mbps", "cumulative_prob")

# overall AP density (APs/km^2) expected for the indoor dual-stripe building,
# and legacy / entrant densities for indoor legacy under outdoor entrants
INDOOR_DENSITY_BAND = (600.0, 6000.0)
INDOOR_OUTDOOR_LEGACY_BAND = (500.0, 5000.0)
OUTDOOR_ENTRANT_BAND = (7.0, 150.0)
# tolerance on band edges: 10+10 APs in the default building give 6061 APs/km^2
BAND_TOLERANCE = 0.02

SWEEP_1_10 = tuple(range(1, 11))
ALL_VARIANTS = tuple(ENTRANT_VARIANTS)

PRESETS = {
    "fig3": [dict(name="fig3", scenario_kind="indoor_indoor", channel_scheme="sense", n_legacy=10,
                  entrant_counts=SWEEP_1_10, realizations=3000)],
    "fig4": [dict(name="fig4", scenario_kind="indoor_indoor", channel_scheme="sense", n_legacy=10,
                  entrant_counts=(10,), realizations=3000)],
    "fig5": [dict(name="fig5_walls", scenario_kind="indoor_indoor", channel_scheme="single", n_legacy=10,
                  entrant_counts=SWEEP_1_10, realizations=3000),
             dict(name="fig5_no_walls", scenario_kind="indoor_indoor_no_walls", channel_scheme="single",
                  n_legacy=10, entrant_counts=SWEEP_1_10, realizations=3000)],
    "fig6": [dict(name="fig6_indoor_outdoor_5000", scenario_kind="indoor_outdoor", channel_scheme="single",
                  legacy_density=5000.0, entrant_counts=tuple(range(2, 21, 2)), realizations=1500),
             dict(name="fig6_indoor_outdoor_500", scenario_kind="indoor_outdoor", channel_scheme="single",
                  legacy_density=500.0, entrant_counts=tuple(range(2, 21, 2)), realizations=1500),
             dict(name="fig6_outdoor_outdoor", scenario_kind="outdoor_outdoor", channel_scheme="single",
                  n_legacy=10, entrant_counts=SWEEP_1_10, realizations=1500)],
    "fig7": [dict(name="fig7", scenario_kind="indoor_indoor_no_walls", channel_scheme="single", n_legacy=1,
                  entrant_counts=SWEEP_1_10, realizations=3000)],
}

FIELD_HELP = {
    "name": "campaign label, used for output file names and the campaign CSV column",
    "scenario_kind": "one of " + ", ".join(k.value for k in ScenarioKind),
    "n_legacy": "legacy AP count (indoor/indoor and outdoor/outdoor)",
    "legacy_density": "legacy APs per km^2 (indoor/outdoor only)",
    "entrant_counts": "entrant AP counts to sweep",
    "variants": "entrant MAC/PHY variants: " + ", ".join(ALL_VARIANTS),
    "channel_scheme": "one of " + ", ".join(s.value for s in ChannelScheme),
    "realizations": "network realizations per sweep point",
    "master_seed": "seed from which every realization seed is derived",
    "slot_duration_ms": "duty-cycle slot length in ms",
    "frames_per_slot_mode": "'fixed' (419 us frames) or 'derived' (802.11n timing at the median rate)",
    "grid": "dual-stripe apartment grid (columns, stripes)",
    "layout": "outdoor geometry: area_m, buildings, street width, rooftop sites",
    "propagation": "path-loss and shadowing constants (dB, Hz)",
}

CAMPAIGN_FIELDS = tuple(f.name for f in dataclasses.fields(CampaignConfig))
LAYOUT_FIELDS = tuple(f.name for f in dataclasses.fields(OutdoorLayout))
PROPAGATION_FIELDS = tuple(f.name for f in dataclasses.fields(PropagationProfile))
DOCUMENT_KEYS = ("preset", "campaigns") + CAMPAIGN_FIELDS


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class RunManifest:
    """Everything a ``run`` needs: config source, output location, overrides."""
    config_path: Optional[Path] = None
    out_dir: Path = Path("results")
    preset: str = "custom"
    seed: Optional[int] = None
    realizations: Optional[int] = None
    workers: int = 1
    timestamp: bool = True
    overrides: dict = field(default_factory=dict)

    def cli_overrides(self) -> dict:
        o = dict(self.overrides)
        if self.seed is not None:
            o["master_seed"] = self.seed
        if self.realizations is not None:
            o["realizations"] = self.realizations
        return o


# ----------------------------------------------------------------------------
# configuration resolution

def _suggest(word: str, choices) -> str:
    close = difflib.get_close_matches(str(word), list(choices), n=1, cutoff=0.5)
    return f" (did you mean {close[0]!r}?)" if close else ""


def _check_keys(mapping: dict, allowed, path: str) -> None:
    if not isinstance(mapping, dict):
        raise ConfigError(path, "expected a mapping")
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown field" + _suggest(key, allowed))


def _int(value, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return int(value)


def _number(value, path: str, minimum: float, strict: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if value < minimum or (strict and value == minimum):
        raise ConfigError(path, f"must be {'>' if strict else '>='} {minimum}, got {value}")
    return float(value)


def _enum(value, enum, path: str):
    valid = [e.value for e in enum]
    if value not in valid:
        raise ConfigError(path, f"unknown value {value!r}{_suggest(value, valid)}; valid: {', '.join(valid)}")
    return enum(value)


def _sweep(value, path: str) -> tuple:
    if isinstance(value, dict):
        _check_keys(value, ("start", "stop", "step"), path)
        start = _int(value.get("start", 1), f"{path}.start", 0)
        stop = _int(value.get("stop", start), f"{path}.stop", start)
        step = _int(value.get("step", 1), f"{path}.step", 1)
        return tuple(range(start, stop + 1, step))
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(path, "expected a non-empty list of entrant counts")
    return tuple(_int(v, f"{path}[{i}]", 0) for i, v in enumerate(value))


def _variants(value, path: str) -> tuple:
    if isinstance(value, str):
        value = ALL_VARIANTS if value == "all" else [value]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(path, "expected a non-empty list of variant names")
    for i, v in enumerate(value):
        if v not in ENTRANT_VARIANTS:
            raise ConfigError(f"{path}[{i}]", f"unknown MAC variant {v!r}{_suggest(v, ALL_VARIANTS)}")
    return tuple(value)


def _coerce_campaign(raw: dict, path: str) -> dict:
    """Field-by-field checks so every problem is reported with its path."""
    _check_keys(raw, CAMPAIGN_FIELDS, path)
    out = dict(raw)
    p = (lambda k: f"{path}.{k}" if path else k)
    if "name" in out:
        out["name"] = str(out["name"])
    if "scenario_kind" in out:
        out["scenario_kind"] = _enum(out["scenario_kind"], ScenarioKind, p("scenario_kind"))
    if "channel_scheme" in out:
        out["channel_scheme"] = _enum(out["channel_scheme"], ChannelScheme, p("channel_scheme"))
    if "n_legacy" in out:
        out["n_legacy"] = _int(out["n_legacy"], p("n_legacy"), 0)
    if "legacy_density" in out:
        out["legacy_density"] = _number(out["legacy_density"], p("legacy_density"), 0.0)
    if "entrant_counts" in out:
        out["entrant_counts"] = _sweep(out["entrant_counts"], p("entrant_counts"))
    if "variants" in out:
        out["variants"] = _variants(out["variants"], p("variants"))
    if "realizations" in out:
        out["realizations"] = _int(out["realizations"], p("realizations"), 1)
    if "master_seed" in out:
        out["master_seed"] = _int(out["master_seed"], p("master_seed"), 0)
    if "slot_duration_ms" in out:
        out["slot_duration_ms"] = _number(out["slot_duration_ms"], p("slot_duration_ms"), 0.0, strict=True)
    if "frames_per_slot_mode" in out and out["frames_per_slot_mode"] not in ("fixed", "derived"):
        raise ConfigError(p("frames_per_slot_mode"), "must be 'fixed' or 'derived'")
    if "grid" in out:
        g = out["grid"]
        if not isinstance(g, (list, tuple)) or len(g) != 2:
            raise ConfigError(p("grid"), "expected [columns, stripes]")
        out["grid"] = (_int(g[0], p("grid") + "[0]", 1), _int(g[1], p("grid") + "[1]", 1))
    if "layout" in out and not isinstance(out["layout"], OutdoorLayout):
        lay = out["layout"]
        _check_keys(lay, LAYOUT_FIELDS, p("layout"))
        lay = dict(lay)
        if "area" in lay:
            lay["area"] = tuple(_number(a, p("layout.area"), 0.0, strict=True) for a in lay["area"])
        if lay.get("sites") is not None:
            lay["sites"] = tuple(tuple(float(c) for c in s) for s in lay["sites"])
        out["layout"] = lay
    if "propagation" in out and not isinstance(out["propagation"], PropagationProfile):
        _check_keys(out["propagation"], PROPAGATION_FIELDS, p("propagation"))
    return out


def _merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _capacity_check(cfg: CampaignConfig, path: str) -> None:
    n_max = max(cfg.entrant_counts)
    kind = cfg.scenario_kind
    if kind in (ScenarioKind.INDOOR_INDOOR, ScenarioKind.INDOOR_INDOOR_NO_WALLS):
        building, _ = dual_stripe_building(cfg.grid)
        if cfg.n_legacy + n_max > building.n_apartments:
            raise ConfigError(f"{path}.entrant_counts" if path else "entrant_counts",
                              f"{cfg.n_legacy} legacy + {n_max} entrant APs exceed the "
                              f"{building.n_apartments} apartments of the building")
    else:
        sites = cfg.layout.n_sites if cfg.layout.sites is None else len(cfg.layout.sites)
        need = n_max + (cfg.n_legacy if kind is ScenarioKind.OUTDOOR_OUTDOOR else 0)
        if need > sites:
            raise ConfigError(f"{path}.entrant_counts" if path else "entrant_counts",
                              f"{need} outdoor APs requested but only {sites} rooftop sites")


def resolve(document: Optional[dict], preset: Optional[str] = None, overrides: Optional[dict] = None
            ) -> list[CampaignConfig]:
    """Expand a configuration document into fully specified campaigns.

    Precedence, lowest first: built-in defaults, preset campaigns, top-level
    fields of the document, per-campaign entries, command-line overrides.
    Per-campaign entries whose ``name`` matches a preset campaign refine it;
    others add campaigns.
    """
    document = {} if document is None else document
    _check_keys(document, DOCUMENT_KEYS, "")
    preset = document.get("preset", preset) if preset in (None, "custom") else preset
    if preset not in (None, "custom") and preset not in PRESETS:
        raise ConfigError("preset", f"unknown preset {preset!r}{_suggest(preset, PRESETS)}; "
                                    f"valid: {', '.join(PRESETS)}, custom")
    shared = _coerce_campaign({k: v for k, v in document.items() if k in CAMPAIGN_FIELDS}, "")
    entries = document.get("campaigns", [])
    if isinstance(entries, dict):
        entries = [entries]
    if not isinstance(entries, list):
        raise ConfigError("campaigns", "expected a list of campaign mappings")
    entries = [_coerce_campaign(e, f"campaigns[{i}]") for i, e in enumerate(entries)]

    base = [dict(c) for c in PRESETS.get(preset, [])]
    by_name = {c["name"]: i for i, c in enumerate(base)}
    layered = [_merge(c, shared) for c in base]
    for i, e in enumerate(entries):
        name = e.get("name")
        if name in by_name:
            layered[by_name[name]] = _merge(layered[by_name[name]], e)
        else:
            layered.append(_merge(shared, e))
    if not layered:
        layered = [shared]

    cli = _coerce_campaign(overrides or {}, "")
    configs = []
    for i, raw in enumerate(layered):
        raw = _merge(raw, cli)
        path = f"campaigns[{i}]" if len(layered) > 1 or entries else ""
        try:
            cfg = CampaignConfig.from_dict(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(path, str(exc)) from None
        _capacity_check(cfg, path)
        configs.append(cfg)
    names = [c.name for c in configs]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ConfigError("campaigns", f"duplicate campaign names {sorted(dup)}")
    return configs


def load_document(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{path} is not valid YAML: {exc}") from None
    return {} if doc is None else doc


def density_flags(cfg: CampaignConfig) -> list[str]:
    """Human-readable notes for densities outside the usual study bands."""
    def outside(value, band):
        lo, hi = band
        return value < lo * (1 - BAND_TOLERANCE) or value > hi * (1 + BAND_TOLERANCE)

    flags = []
    kind = cfg.scenario_kind
    if kind in (ScenarioKind.INDOOR_INDOOR, ScenarioKind.INDOOR_INDOOR_NO_WALLS):
        _, (w, h) = dual_stripe_building(cfg.grid)
        for n in cfg.entrant_counts:
            d = (cfg.n_legacy + n) / (w * h / 1e6)
            if outside(d, INDOOR_DENSITY_BAND):
                flags.append(f"{cfg.name}: {cfg.n_legacy}+{n} APs give {d:.0f} APs/km^2, outside "
                             f"{INDOOR_DENSITY_BAND[0]:.0f}-{INDOOR_DENSITY_BAND[1]:.0f}")
        return flags
    area_km2 = cfg.layout.area[0] * cfg.layout.area[1] / 1e6
    if kind is ScenarioKind.INDOOR_OUTDOOR and outside(cfg.legacy_density, INDOOR_OUTDOOR_LEGACY_BAND):
        flags.append(f"{cfg.name}: legacy density {cfg.legacy_density:g} APs/km^2 outside "
                     f"{INDOOR_OUTDOOR_LEGACY_BAND[0]:.0f}-{INDOOR_OUTDOOR_LEGACY_BAND[1]:.0f}")
    for n in cfg.entrant_counts:
        d = n / area_km2
        if n and outside(d, OUTDOOR_ENTRANT_BAND):
            flags.append(f"{cfg.name}: {n} outdoor entrant APs give {d:.1f} APs/km^2, outside "
                         f"{OUTDOOR_ENTRANT_BAND[0]:.0f}-{OUTDOOR_ENTRANT_BAND[1]:.0f}")
    return flags


def config_yaml(configs) -> str:
    """Resolved campaigns as a YAML document that ``run`` accepts back."""
    return yaml.safe_dump({"campaigns": [c.to_dict() for c in configs]}, sort_keys=False)


def reference_yaml() -> str:
    """Every campaign field with its default value and a one-line description."""
    defaults = CampaignConfig().to_dict()
    buf = io.StringIO()
    buf.write("# coexsim configuration reference; top-level fields apply to every campaign\n")
    buf.write(f"# preset: one of {', '.join(PRESETS)}, custom\n")
    for key in CAMPAIGN_FIELDS:
        buf.write(f"\n# {FIELD_HELP[key]}\n")
        value = defaults[key]
        # inline lists, block mappings
        flow = None if isinstance(value, (list, dict)) else False
        buf.write(yaml.safe_dump({key: value}, sort_keys=False, default_flow_style=flow))
    return buf.getvalue()


# ----------------------------------------------------------------------------
# commands

def _progress(name: str, stream):
    step = [0]

    def report(done: int, total: int):
        tenth = done * 10 // total
        if tenth > step[0] or done == total:
            step[0] = tenth
            print(f"{name}: {done}/{total} realizations", file=stream, flush=True)
    return report


def write_median_csv(results, path, timestamp: bool = True) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if timestamp:
            stamp = dt.datetime.now(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
            fh.write(f"# generated {stamp} by coexsim {__version__}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEDIAN_COLUMNS)
        for campaign, n, pop, mac, med in sweep_medians(results):
            w.writerow([campaign, n, pop, mac, repr(float(med))])


def cmd_run(manifest: RunManifest, *, stream=sys.stderr) -> int:
    document = load_document(manifest.config_path) if manifest.config_path else None
    configs = resolve(document, manifest.preset, manifest.cli_overrides())
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for cfg in configs:
        result = run_campaign(cfg, workers=manifest.workers, progress=_progress(cfg.name, stream))
        results.append(result)
        for n in result.sweep:
            persist(result.restrict(n), out / cfg.name / f"{cfg.name}_n{n:02d}.json")
    write_median_csv(results, out / "medians.csv", manifest.timestamp)
    print(f"wrote {out / 'medians.csv'}", file=stream)
    return EXIT_OK


def cdf_rows(result: CampaignResult, population: str, mac: Optional[str] = None,
             sweep: Optional[int] = None) -> list[tuple[float, float]]:
    if population not in POPULATIONS:
        raise ConfigError("population", f"unknown population {population!r}; valid: {', '.join(POPULATIONS)}")
    variants = sorted({v for _, v in result.points})
    if mac is None:
        if len(variants) != 1:
            raise ConfigError("mac", f"result holds several variants; choose one of {', '.join(variants)}")
        mac = variants[0]
    elif mac not in variants:
        raise ConfigError("mac", f"variant {mac!r} not in result{_suggest(mac, variants)}; "
                                 f"valid: {', '.join(variants)}")
    if sweep is None:
        if len(result.sweep) != 1:
            raise ConfigError("sweep", f"result holds several sweep points; choose one of {result.sweep}")
        sweep = result.sweep[0]
    elif sweep not in result.sweep:
        raise ConfigError("sweep", f"sweep point {sweep} not in result; valid: {result.sweep}")
    values, probs = result.points[(sweep, mac)].cdf(population)
    return list(zip(values.tolist(), probs.tolist()))


def cmd_cdf(path, population: str, mac: Optional[str] = None, sweep: Optional[int] = None,
            out=None) -> int:
    try:
        result = load(path)
    except ResultFileError as exc:
        raise ConfigError("result", str(exc)) from None
    rows = cdf_rows(result, population, mac, sweep)
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CDF_COLUMNS)
        for v, p in rows:
            w.writerow([repr(v), repr(p)])
    finally:
        if out:
            fh.close()
    return EXIT_OK


def cmd_validate(config_path=None, preset: Optional[str] = None, overrides: Optional[dict] = None,
                 *, stream=sys.stdout) -> int:
    try:
        document = load_document(config_path) if config_path else None
        configs = resolve(document, preset, overrides)
    except ConfigError as exc:
        print(f"invalid: {exc}", file=stream)
        return EXIT_CONFIG
    stream.write(config_yaml(configs))
    flags = [f for c in configs for f in density_flags(c)]
    for f in flags:
        print(f"# note: {f}", file=stream)
    print(f"# valid: {len(configs)} campaign(s)", file=stream)
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coexsim", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"coexsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("config", nargs="?", type=Path, help="YAML configuration file")
        p.add_argument("--preset", choices=sorted(PRESETS) + ["custom"], default=None,
                       help="figure preset to start from")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--realizations", type=int, help="realization count override")

    run = sub.add_parser("run", help="run campaigns and write result files")
    add_config_args(run)
    run.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    run.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    run.add_argument("--no-timestamp", action="store_true", help="omit the timestamp line of medians.csv")

    cdf = sub.add_parser("cdf", help="empirical CDF of one population from a result file")
    cdf.add_argument("result", type=Path)
    cdf.add_argument("--population", default="legacy", help=f"one of {', '.join(POPULATIONS)}")
    cdf.add_argument("--mac", help="entrant variant (required if the file holds several)")
    cdf.add_argument("--sweep", type=int, help="entrant count (required if the file holds several)")
    cdf.add_argument("--out", type=Path, help="output CSV (default stdout)")

    val = sub.add_parser("validate", help="print the resolved configuration and diagnostics")
    add_config_args(val)
    val.add_argument("--reference", action="store_true", help="print the documented defaults and exit")
    return parser


def _overrides(args) -> dict:
    o = {}
    if args.seed is not None:
        o["master_seed"] = args.seed
    if args.realizations is not None:
        o["realizations"] = args.realizations
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            if args.reference:
                sys.stdout.write(reference_yaml())
                return EXIT_OK
            return cmd_validate(args.config, args.preset, _overrides(args))
        if args.command == "cdf":
            return cmd_cdf(args.result, args.population, args.mac, args.sweep, args.out)
        if args.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        manifest = RunManifest(args.config, args.out, args.preset or "custom", args.seed, args.realizations,
                               args.workers, not args.no_timestamp)
        return cmd_run(manifest)
    except ConfigError as exc:
        print(f"coexsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RealizationError as exc:
        print(f"coexsim: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ArithmeticError, RuntimeError) as exc:
        print(f"coexsim: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
