import json

import numpy as np
import pytest

from coexsim import __version__
from coexsim.montecarlo import (CampaignConfig, CampaignResult, RealizationError, ResultFileError,
                                _sweep_seed, derive_seed, derive_seeds, ecdf, load, median, persist,
                                run_campaign, run_realization, sweep_medians)
from coexsim.scenario import ScenarioKind

SMALL = CampaignConfig(n_legacy=4, entrant_counts=(0, 2, 4), variants=("lbt62_lte", "adaptive_dc", "lbt82_11n"),
                       realizations=6, master_seed=11, channel_scheme="single", name="small")


@pytest.fixture(scope="module")
def small_result():
    return run_campaign(SMALL)


def test_deterministic(small_result):
    assert run_campaign(SMALL) == small_result


def test_worker_count_invariant(small_result):
    assert run_campaign(SMALL, workers=2) == small_result


def test_merge_of_disjoint_ranges(small_result):
    a = run_campaign(SMALL, indices=range(0, 4))
    b = run_campaign(SMALL, indices=range(4, 6))
    assert a.merge(b) == small_result
    assert b.merge(a) == small_result


def test_sample_counts(small_result):
    for (n, v), p in small_result.points.items():
        assert p.realizations == 6
        assert len(p.legacy) == 6 * 4 and len(p.entrant) == 6 * n
    assert np.isnan(small_result.median(0, "lbt62_lte", "entrant"))


def test_prefix_matches_standalone_generation():
    seed = derive_seed(SMALL.master_seed, 3)
    swept = _sweep_seed(SMALL, 3, seed)
    for n in (2, 4):
        alone = run_realization(SMALL, seed, n)
        for v, rep in alone.items():
            np.testing.assert_allclose(swept[(n, v)][0], rep.population(False), rtol=1e-12)
            np.testing.assert_allclose(swept[(n, v)][1], rep.population(True), rtol=1e-12)


def test_seeds_collision_free():
    s = derive_seeds(1, np.arange(1_000_000))
    assert np.unique(s).size == 1_000_000
    t = derive_seeds(2, np.arange(1_000_000))
    assert np.intersect1d(s, t).size < 5
    assert derive_seed(1, 7) == int(s[7])


def test_median_and_ecdf():
    assert median([3, 1, 2]) == 2.0
    assert median([4, 1, 2, 3]) == 2.5
    assert np.isnan(median([]))
    v, p = ecdf([2.0, 1.0, 2.0, 5.0])
    assert v.tolist() == [1.0, 2.0, 5.0] and p.tolist() == [0.25, 0.75, 1.0]


def test_cdf_ends_at_one(small_result):
    for p in small_result.points.values():
        for pop in ("legacy", "entrant"):
            v, c = p.cdf(pop)
            if v.size:
                assert c[-1] == 1.0 and np.all(np.diff(c) > 0) and np.all(np.diff(v) > 0)


def test_unknown_population(small_result):
    with pytest.raises(KeyError, match="valid: legacy, entrant"):
        next(iter(small_result.points.values())).samples("wifi")


def test_persist_round_trip(small_result, tmp_path):
    f = tmp_path / "deep" / "r.json"
    persist(small_result, f)
    assert load(f) == small_result
    assert not list(f.parent.glob("*.tmp"))


def test_truncated_file(small_result, tmp_path):
    f = tmp_path / "r.json"
    persist(small_result, f)
    f.write_text(f.read_text()[:200])
    with pytest.raises(ResultFileError, match="unreadable"):
        load(f)


def test_version_mismatch(small_result, tmp_path):
    f = tmp_path / "r.json"
    persist(small_result, f)
    doc = json.loads(f.read_text())
    doc["version"] = "0.0.0-other"
    f.write_text(json.dumps(doc))
    with pytest.raises(ResultFileError, match="version"):
        load(f)


def test_foreign_file(tmp_path):
    f = tmp_path / "r.json"
    f.write_text('{"hello": 1}')
    with pytest.raises(ResultFileError):
        load(f)


def test_restrict_and_rows(small_result):
    r = small_result.restrict(2)
    assert r.sweep == [2] and len(list(r.median_rows())) == 2 * 3
    rows = sweep_medians([small_result])
    assert rows[0][0] == "small" and len(rows) == 3 * 2 * 3


def test_merge_mismatch(small_result):
    with pytest.raises(ValueError):
        small_result.merge(small_result.restrict(2))


def test_config_round_trip():
    cfg = SMALL.replace(scenario_kind=ScenarioKind.OUTDOOR_OUTDOOR, slot_duration_ms=10.0)
    assert CampaignConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("bad", [dict(realizations=0), dict(entrant_counts=()), dict(n_legacy=-1),
                                 dict(variants=("nope",)), dict(frames_per_slot_mode="x")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SMALL.replace(**bad)


def test_failure_names_realization():
    cfg = SMALL.replace(n_legacy=30)   # more APs than apartments
    with pytest.raises(RealizationError) as err:
        run_campaign(cfg, indices=[5])
    assert err.value.index == 5 and err.value.seed == derive_seed(11, 5)


def test_progress_callback():
    calls = []
    run_campaign(SMALL.replace(realizations=3), progress=lambda k, n: calls.append((k, n)))
    assert calls == [(1, 3), (2, 3), (3, 3)]


def test_version_recorded(small_result):
    assert small_result.version == __version__
