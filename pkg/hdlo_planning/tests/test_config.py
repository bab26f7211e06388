# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import logging

import pytest

from hdlo_planning.config import Settings, configure_logging, get_settings


def test_defaults():
    settings = get_settings()
    assert settings == Settings()
    assert settings.derivative_blocks == "analytic"
    assert settings.nlp_method == "interior_point"


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("HDLO_NUM_POINTS", "31")
    monkeypatch.setenv("HDLO_GOAL_TOL", "1e-5")
    monkeypatch.setenv("HDLO_LOG_LEVEL", "debug")
    get_settings.cache_clear()
    settings = get_settings()
    assert settings.num_points == 31
    assert settings.goal_tol == pytest.approx(1e-5)
    assert settings.log_level == "DEBUG"


def test_blank_values_fall_back_to_defaults(monkeypatch):
    monkeypatch.setenv("HDLO_STATICS_MAX_ITER", "  ")
    get_settings.cache_clear()
    assert get_settings().statics_max_iter == 100


def test_bad_values_are_rejected(monkeypatch):
    monkeypatch.setenv("HDLO_DERIVATIVE_BLOCKS", "symbolic")
    get_settings.cache_clear()
    with pytest.raises(ValueError, match="HDLO_DERIVATIVE_BLOCKS"):
        get_settings()
    monkeypatch.setenv("HDLO_DERIVATIVE_BLOCKS", "fd")
    monkeypatch.setenv("HDLO_NUM_POINTS", "many")
    get_settings.cache_clear()
    with pytest.raises(ValueError, match="HDLO_NUM_POINTS"):
        get_settings()


def test_env_file_is_loaded(monkeypatch, tmp_path):
    env_file = tmp_path / "hdlo.env"
    env_file.write_text("HDLO_BASIS_ORDER=1\nHDLO_NLP_METHOD=sqp\n", encoding="utf-8")
    monkeypatch.setenv("HDLO_ENV_FILE", str(env_file))
    # registered with monkeypatch so the values load_dotenv writes are removed afterwards
    for name in ("HDLO_BASIS_ORDER", "HDLO_NLP_METHOD"):
        monkeypatch.setenv(name, "")
        monkeypatch.delenv(name)
    get_settings.cache_clear()
    settings = get_settings()
    assert settings.basis_order == 1
    assert settings.nlp_method == "sqp"


def test_overrides_skip_missing_values():
    base = Settings()
    changed = base.with_overrides(num_points=9, goal_tol=None)
    assert changed.num_points == 9
    assert changed.goal_tol == base.goal_tol
    assert base.num_points == 21


def test_configure_logging_accepts_names(monkeypatch):
    calls = []
    monkeypatch.setattr(logging, "basicConfig", lambda **kwargs: calls.append(kwargs))
    configure_logging("info")
    configure_logging("nonsense")
    assert [c["level"] for c in calls] == [logging.INFO, logging.WARNING]
