import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffnav.config import (ConfigError, apply_layers, coerce, dump_config, load_config, parse_overrides,
                            parse_text)
from diffnav.runner import ScenarioConfig


def test_parse_sections_comments_and_dotted_keys():
    text = """
    # top level
    planner = dwa   # trailing comment
    mpc.horizon = 12
    [dwa]
    weights = 0.8, 0.2, 0.2
    """
    assert parse_text(text) == {"planner": "dwa", "mpc.horizon": "12", "dwa.weights": "0.8, 0.2, 0.2"}


def test_parse_rejects_line_without_equals():
    with pytest.raises(ConfigError, match=":2:"):
        parse_text("seed = 1\nnonsense\n", "f.cfg")


def test_coerce_types():
    assert coerce("42", int) == 42 and coerce("0x10", int) == 16
    assert coerce("2.5", float) == 2.5
    assert coerce("yes", bool) is True and coerce("off", bool) is False
    assert coerce("none", float | None) is None
    assert coerce("1, 2", tuple[float, float]) == (1.0, 2.0)
    assert coerce("(1, 2, 3)", tuple[float, ...]) == (1.0, 2.0, 3.0)
    assert coerce('"corner"', str) == "corner"


@pytest.mark.parametrize("raw,tp", [("x", int), ("1.5", int), ("abc", float), ("nan", float), ("maybe", bool),
                                    ("1, 2, 3", tuple[float, float])])
def test_coerce_rejects_bad_values(raw, tp):
    with pytest.raises(ConfigError):
        coerce(raw, tp)


def test_later_layers_override_earlier():
    cfg = apply_layers(ScenarioConfig(), {"seed": "1", "mpc.horizon": "10"}, {"seed": "5"})
    assert cfg.seed == 5 and cfg.mpc.horizon == 10


def test_files_then_overrides(tmp_path):
    a = tmp_path / "a.cfg"
    b = tmp_path / "b.cfg"
    a.write_text("scenario = corner\nseed = 3\n[kinematics]\nv_max = 1.5\n")
    b.write_text("seed = 4\n")
    cfg = load_config([a, b], ["planner=dwa"])
    assert (cfg.scenario, cfg.seed, cfg.planner) == ("corner", 4, "dwa")
    assert cfg.kinematics.v_max == 1.5


def test_unknown_keys_rejected():
    for layer in ({"nonsense": "1"}, {"mpc.nonsense": "1"}, {"seed.x": "1"}):
        with pytest.raises(ConfigError):
            apply_layers(ScenarioConfig(), layer)


def test_invalid_value_becomes_config_error():
    with pytest.raises(ConfigError):
        apply_layers(ScenarioConfig(), {"max_time": "-3"})


def test_override_needs_equals():
    with pytest.raises(ConfigError):
        parse_overrides(["seed"])


def test_ekf_subsettings_start_from_noise_model():
    cfg = apply_layers(ScenarioConfig(), {"ekf.gyro_noise": "0.25"})
    assert cfg.ekf is not None and cfg.ekf.gyro_noise == 0.25


def test_dump_round_trip_default():
    cfg = ScenarioConfig()
    assert apply_layers(ScenarioConfig(), parse_text(dump_config(cfg))) == cfg


@given(seed=st.integers(0, 2**63 - 1), max_time=st.floats(0.1, 1e4, allow_nan=False),
       horizon=st.integers(2, 40), tol=st.floats(1e-3, 1.0))
def test_dump_round_trip_property(seed, max_time, horizon, tol):
    cfg = apply_layers(ScenarioConfig(), {"seed": str(seed), "max_time": repr(max_time),
                                          "mpc.horizon": str(horizon), "goal_tolerance": f"{tol!r}, {math.pi!r}"})
    assert apply_layers(ScenarioConfig(), parse_text(dump_config(cfg))) == cfg
