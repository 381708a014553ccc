import json

import numpy as np
import pytest

from equalpeak.config import load_config, robust_parameter, validate_config
from equalpeak.errors import ConfigError, UnsupportedParameterError


def base():
    return {
        "name": "t",
        "model": {"chain": {"masses": [1.0, 1.0], "springs": [1.0, 1.0, 1.0]}},
        "channel": {"force": 0, "measurement": 0},
        "absorbers": [{"mode": 0, "attach": 0}],
        "budget": {"m_max": 0.1},
        "output": {"omega_min": 0.4, "omega_max": 2.2, "n_points": 11},
    }


def test_valid_config_round_trip(tmp_path):
    path = tmp_path / "t.cfg"
    path.write_text(json.dumps(base()))
    cfg = load_config(path)
    assert cfg.model_kind == "chain" and cfg.n_absorbers == 1 and cfg.m_max == 0.1
    grid = cfg.frequency_grid()
    assert grid[0] == 0.4 and grid[-1] == 2.2 and grid.size == 11


def test_log_grid():
    d = base()
    d["output"]["spacing"] = "log"
    g = validate_config(d).frequency_grid()
    np.testing.assert_allclose(np.diff(np.log(g)), np.log(2.2 / 0.4) / 10)


def test_every_violation_is_listed():
    d = base()
    d["model"]["chain"]["masses"] = [1.0, -1.0]
    d["channel"]["force"] = 7
    d["absorbers"] = [{"mode": 5, "attach": 0}]
    d["budget"]["m_max"] = -1
    d["output"]["n_points"] = 1
    d["optimizer"] = {"k_max": -2, "colour": "red"}
    d["bogus"] = 1
    with pytest.raises(ConfigError) as err:
        validate_config(d)
    text = str(err.value)
    for key in ("masses", "channel.force", "absorbers[0].mode", "m_max", "n_points",
                "k_max", "colour", "bogus"):
        assert key in text, key
    assert len(err.value.problems) >= 8


def test_exactly_one_model_variant():
    d = base()
    d["model"]["plate"] = {"length": 1.0}
    with pytest.raises(ConfigError, match="model"):
        validate_config(d)


def test_zero_absorbers_allowed_without_budget():
    d = base()
    d["absorbers"] = []
    del d["budget"]
    assert validate_config(d).n_absorbers == 0


def test_unreadable_and_malformed(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")
    bad = tmp_path / "bad.cfg"
    bad.write_text("{ not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)


def test_plate_locations_and_modes():
    d = base()
    d["model"] = {"plate": {"length": 1.0, "width": 0.7, "thickness": 1e-3,
                            "young_modulus": 68e9, "poisson_ratio": 0.36, "density": 2700.0}}
    d["channel"] = {"force": [0.25, 0.175], "measurement": [0.75, 0.525]}
    d["absorbers"] = [{"mode": [1, 1], "attach": [0.5, 0.35]}]
    validate_config(d)
    d["absorbers"] = [{"mode": [1, 1], "attach": [1.5, 0.35]}]
    with pytest.raises(ConfigError, match="attach"):
        validate_config(d)


def test_robust_parameter_by_model_kind():
    d = base()
    d["robustness"] = {"parameter": "springs", "deltas": [0.05]}
    assert robust_parameter(validate_config(d)) == "springs"
    d["robustness"]["parameter"] = "E"
    with pytest.raises(UnsupportedParameterError):
        robust_parameter(validate_config(d))
    d["model"] = {"modal": {"frequencies": [1.0], "damping_ratios": [0.0], "mode_shapes": [[1.0]]}}
    with pytest.raises(UnsupportedParameterError):
        robust_parameter(validate_config(d))
    del d["robustness"]
    with pytest.raises(ConfigError):
        robust_parameter(validate_config(d))
