# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import numpy as np
import pytest

from hdlo_planning.assembly import Assembly, FrameRef, JointSpec, LinkSpec
from hdlo_planning.config import get_settings
from hdlo_planning.gvs_rod import LinkGeometry, StrainBasis
from hdlo_planning.liegroup import make_pose
from hdlo_planning.scene_io import bundled, load_scene

# Nitinol tube used by the desk set-ups
NITINOL = dict(outer_diameter=0.0018, inner_diameter=0.0014, youngs_modulus=7.5e10,
               poisson_ratio=0.33, density=6450.0)
# local x pointing down the world z axis
HANGING = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: planner runs on the full desk assemblies")


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """Every test sees the built-in defaults, not the developer's .env."""
    monkeypatch.setenv("HDLO_ENV_FILE", str(tmp_path / "missing.env"))
    for name in ("HDLO_LOG_LEVEL", "HDLO_NUM_POINTS", "HDLO_BASIS_ORDER", "HDLO_LOG_ANGLE_MARGIN",
                 "HDLO_STATICS_TOL", "HDLO_STATICS_MAX_ITER", "HDLO_NLP_METHOD", "HDLO_NLP_MAX_ITER",
                 "HDLO_DERIVATIVE_BLOCKS", "HDLO_GOAL_TOL"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def cantilever(length=0.3, order=3, num_points=11, modes=(True,) * 6, gravity=(0.0, 0.0, -9.81)):
    rod = LinkSpec(name="rod", geometry=LinkGeometry(length=length, **NITINOL),
                   basis=StrainBasis(order=order, modes=modes))
    return Assembly(links=(rod,), end_effector=FrameRef("rod", 1.0), gravity=gravity,
                    num_points=num_points, name="cantilever")


def hanging_stick(length=1.0, top=1.0):
    """Rigid stick on a free six-axis base, hanging from z = top along -z."""
    joint = JointSpec(kind="free6", actuated=True, lower=(-1.0,) * 6, upper=(1.0,) * 6)
    stick = LinkSpec(name="stick", geometry=LinkGeometry(length=length, kind="rigid", section="none", mass=0.1),
                     joint=joint, offset=make_pose(HANGING, (0.0, 0.0, top)))
    return Assembly(links=(stick,), end_effector=FrameRef("stick", 1.0), name="stick")


def hanging_rod(num_points=7, order=1):
    """Actuated-base Nitinol tube hanging along -z with bending and torsion modes."""
    joint = JointSpec(kind="free6", actuated=True, lower=(-0.5,) * 3 + (-0.2,) * 3, upper=(0.5,) * 3 + (0.2,) * 3)
    rod = LinkSpec(name="rod", geometry=LinkGeometry(length=0.68, **NITINOL), joint=joint,
                   offset=make_pose(HANGING, (0.0, 0.0, 1.0)),
                   basis=StrainBasis(order=order, modes=(True, True, True, False, False, False)))
    return Assembly(links=(rod,), end_effector=FrameRef("rod", 1.0), num_points=num_points, name="hanging_rod")


@pytest.fixture
def planar_scene():
    return load_scene(bundled("planar_2r"))


@pytest.fixture
def planar(planar_scene):
    return planar_scene.assembly


@pytest.fixture(scope="session")
def desk_scene():
    return load_scene(bundled("desk_two_rod"), num_points=5)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
