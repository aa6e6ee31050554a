"""Settings, run configuration and the error hierarchy."""
import json
from pathlib import Path
from unittest.mock import patch

import pytest

ROOT = Path(__file__).resolve().parent.parent


def test_settings_load_from_env():
    """Settings read POSEGAN_* variables and normalize the log level."""
    from posegan.core.config import Settings
    with patch.dict("os.environ", {
        "POSEGAN_LOG_LEVEL": " debug ",
        "POSEGAN_DEVICE": "auto",
        "POSEGAN_PREFETCH_DEPTH": "2",
    }):
        s = Settings()
        assert s.APP_NAME == "posegan"
        assert s.LOG_LEVEL == "DEBUG"
        assert s.DEVICE == "auto"
        assert s.PREFETCH_DEPTH == 2
        assert s.POSE_TOLERANCE == 1e-9
        assert s.GROUND_TRUTH_TOLERANCE == 1e-6


def test_example_config_is_valid():
    """config.example.yaml validates as a TrainConfig."""
    from posegan.core.config import resolve_train_config
    config = resolve_train_config(ROOT / "config.example.yaml")
    assert config.regime.value == "semi_supervised"
    assert config.test_sequence == "09"
    assert config.model.pose_hidden == (1024, 128)
    assert config.iterations == 50000


def test_overrides_beat_file_values(tmp_path):
    """CLI overrides win over the file; None overrides are ignored."""
    from posegan.core.config import resolve_train_config
    path = tmp_path / "run.yaml"
    path.write_text("regime: only_vo\ntotal_iters: 30\nbatch_size: 8\n")
    config = resolve_train_config(path, {"batch_size": 4, "beta": None})
    assert config.total_iters == 30
    assert config.batch_size == 4
    assert config.beta == 100.0


def test_json_config_file(tmp_path):
    """JSON files load through the same reader."""
    from posegan.core.config import resolve_train_config
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"regime": "simultaneous", "total_iters": 7}))
    config = resolve_train_config(path)
    assert config.phase_plan()[0][1] == 7


def test_config_file_errors(tmp_path):
    """Missing, unparsable and non-mapping files raise ConfigError."""
    from posegan.core.config import load_config_file
    from posegan.core.exceptions import ConfigError
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("regime: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config_file(bad)
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config_file(listing)


def test_invalid_values_raise_config_error():
    """Validation failures surface as ConfigError with per-field details."""
    from posegan.core.config import resolve_train_config
    from posegan.core.exceptions import ConfigError
    with pytest.raises(ConfigError) as exc:
        resolve_train_config(overrides={"batch_size": 0})
    assert exc.value.details["errors"][0]["loc"] == ["batch_size"]
    with pytest.raises(ConfigError):
        resolve_train_config(overrides={"no_such_key": 1})


def test_regime_field_consistency():
    """Semi-supervised totals must add up; phase lengths only apply to it."""
    from posegan.core.config import resolve_train_config
    from posegan.core.exceptions import ConfigError
    with pytest.raises(ConfigError):
        resolve_train_config(overrides={"adversarial_iters": 10, "pose_iters": 10, "total_iters": 25})
    with pytest.raises(ConfigError):
        resolve_train_config(overrides={"regime": "only_vo", "pose_iters": 10})
    ok = resolve_train_config(overrides={"adversarial_iters": 10, "pose_iters": 15, "total_iters": 25})
    assert ok.iterations == 25


def test_phase_plans():
    """Each regime maps to its ordered phases."""
    from posegan.schemas.training import Phase, TrainConfig
    assert TrainConfig(adversarial_iters=3, pose_iters=4).phase_plan() == [(Phase.ADVERSARIAL, 3), (Phase.POSE, 4)]
    assert TrainConfig(regime="only_vo", total_iters=5).phase_plan() == [(Phase.POSE, 5)]
    assert TrainConfig(regime="simultaneous", total_iters=5).phase_plan() == [(Phase.SIMULTANEOUS, 5)]
    assert TrainConfig(regime="adversarial_only", total_iters=5).phase_plan() == [(Phase.ADVERSARIAL, 5)]
    assert not TrainConfig(regime="only_vo").adversarial


def test_error_payload():
    """Errors serialize with class name, message and details."""
    from posegan.core.exceptions import DimensionError, NonFiniteLossError, PoseganError
    err = DimensionError("too narrow", axis="width")
    assert isinstance(err, PoseganError)
    assert err.to_dict() == {"error": "DimensionError", "message": "too narrow", "details": {"axis": "width"}}
    assert err.user_error
    assert not NonFiniteLossError("nan").user_error
