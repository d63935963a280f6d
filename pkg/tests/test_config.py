import json
from pathlib import Path

import numpy as np
import pytest

from ccrbsde.config import ScenarioConfig, load_config
from ccrbsde.errors import ConfigError
from ccrbsde.paths import build_time_grid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "model": {"family": "geometric", "s0": 1.0, "drift": 0.02, "vol": 0.3},
    "grid": {"T": 1.0, "m": 10},
    "mc": {"N": 500, "seed": 1},
    "netting": {"kind": "call", "strike": 1.0},
}


def with_(**sections):
    doc = json.loads(json.dumps(BASE))
    doc.update(sections)
    return doc


def test_defaults_filled():
    cfg = ScenarioConfig.from_dict(BASE)
    assert cfg.convention == "MV"
    assert cfg.doc["basis"]["K"] == 4
    assert cfg.N == 500 and cfg.m == 10 and cfg.seed == 1 and cfg.dimension == 1


def test_round_trip():
    for p in sorted(CONFIGS.glob("*.json")):
        cfg = load_config(p)
        again = ScenarioConfig.from_json(cfg.to_json())
        assert again == cfg
        assert again.to_dict() == cfg.to_dict()
        assert again.digest() == cfg.digest()


def test_unknown_top_level_key():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(with_(colour="red"))


def test_unknown_nested_key():
    doc = with_()
    doc["model"]["volatility"] = 0.2
    with pytest.raises(ConfigError, match="model"):
        ScenarioConfig.from_dict(doc)


def test_missing_section():
    doc = with_()
    del doc["mc"]
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(doc)


def test_bad_rate_spec():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(with_(deck={"r": {"constant": 0.01, "curve": [[0, 0.01]]}}))


def test_invalid_json():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_json("{not json")


def test_link_cycle():
    deck = {"r": {"constant": 0.01},
            "r_B": {"linked": {"to": "r_F", "spread": 0.01}},
            "r_F": {"linked": {"to": "r_B", "spread": 0.01}}}
    with pytest.raises(ConfigError, match="cyclic"):
        ScenarioConfig.from_dict(with_(deck=deck))


def test_link_to_unset_rate():
    with pytest.raises(ConfigError, match="unset"):
        ScenarioConfig.from_dict(with_(deck={"r_B": {"linked": {"to": "r_F"}}}))


def test_link_state_out_of_range():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(with_(deck={"r_B": {"linked": {"state": 3}}}))


def test_linear_needs_sigma():
    doc = with_(model={"family": "linear", "s0": [1.0, 1.0], "A": [[0, 0], [0, 0]]})
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(doc)


def test_overrides_replace_entries_whole():
    cfg = ScenarioConfig.from_dict(with_(deck={"r": {"constant": 0.01}}))
    cfg2 = cfg.with_overrides(deck={"r": {"curve": [[0, 0.01], [1, 0.03]]}})
    assert cfg2.doc["deck"]["r"] == {"curve": [[0, 0.01], [1, 0.03]]}
    assert cfg2 != cfg and cfg2.digest() != cfg.digest()


def test_rate_values():
    deck = {"r": {"constant": 0.01},
            "r_F": {"linked": {"to": "r", "scale": 2.0, "spread": 0.005}},
            "r_X": {"curve": [[0.0, 0.0], [1.0, 0.02]]},
            "r_K": {"linked": {"state": 0, "scale": 0.1}},
            "r_C": {"linked": {"to": "intensity_C", "scale": 0.6, "spread": 0.02}}}
    cfg = ScenarioConfig.from_dict(with_(deck=deck))
    g = build_time_grid(1.0, 4)
    states = np.ones((3, 5, 1)) * 2.0
    lam = {"intensity_C": np.full((3, 5), 0.1)}
    vals = cfg.rate_values(g, states, lam)
    assert vals["r_F"] == pytest.approx(0.025)
    np.testing.assert_allclose(vals["r_X"], [0.0, 0.005, 0.01, 0.015, 0.02])
    np.testing.assert_allclose(vals["r_K"], 0.2)
    np.testing.assert_allclose(vals["r_C"], 0.08)


def test_builders():
    cfg = load_config(CONFIGS / "call_mv.json")
    assert cfg.build_model().dimension == 1
    assert cfg.build_recovery().R_C == 0.4
    assert cfg.build_intensity("B") is not None
    assert load_config(CONFIGS / "factor_sweep.json").dimension == 4
