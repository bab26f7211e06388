# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import logging
import os
from dataclasses import dataclass, replace
from functools import lru_cache

from dotenv import load_dotenv


@dataclass(frozen=True)
class Settings:
    log_level: str = "WARNING"
    num_points: int = 21
    basis_order: int = 3
    log_angle_margin: float = 1e-6
    statics_tol: float = 1e-9
    statics_max_iter: int = 100
    nlp_method: str = "interior_point"
    nlp_max_iter: int = 3000
    derivative_blocks: str = "analytic"
    goal_tol: float = 1e-6

    def with_overrides(self, **overrides):
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides)


def _env(name, cast, default):
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    try:
        return cast(value)
    except ValueError as err:
        raise ValueError(f"environment variable {name}={value!r} is not a valid {cast.__name__}") from err


@lru_cache(maxsize=1)
def get_settings():
    # Load .env (if present) before reading the environment
    env_path = os.getenv("HDLO_ENV_FILE", os.path.join(os.getcwd(), ".env"))
    if os.path.exists(env_path):
        load_dotenv(dotenv_path=env_path)

    defaults = Settings()
    settings = Settings(
        log_level=_env("HDLO_LOG_LEVEL", str, defaults.log_level).upper(),
        num_points=_env("HDLO_NUM_POINTS", int, defaults.num_points),
        basis_order=_env("HDLO_BASIS_ORDER", int, defaults.basis_order),
        log_angle_margin=_env("HDLO_LOG_ANGLE_MARGIN", float, defaults.log_angle_margin),
        statics_tol=_env("HDLO_STATICS_TOL", float, defaults.statics_tol),
        statics_max_iter=_env("HDLO_STATICS_MAX_ITER", int, defaults.statics_max_iter),
        nlp_method=_env("HDLO_NLP_METHOD", str, defaults.nlp_method),
        nlp_max_iter=_env("HDLO_NLP_MAX_ITER", int, defaults.nlp_max_iter),
        derivative_blocks=_env("HDLO_DERIVATIVE_BLOCKS", str, defaults.derivative_blocks),
        goal_tol=_env("HDLO_GOAL_TOL", float, defaults.goal_tol),
    )
    if settings.derivative_blocks not in ("analytic", "fd"):
        raise ValueError(f"HDLO_DERIVATIVE_BLOCKS must be 'analytic' or 'fd', got {settings.derivative_blocks!r}")
    return settings


def configure_logging(level=None):
    level = level or get_settings().log_level
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
