# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hdlo_planning.assembly import forward_kinematics
from hdlo_planning.env_constraints import (
    Aperture,
    aperture_constraint_jacobians,
    aperture_constraints,
    aperture_feasible,
    initial_crossing,
    initial_crossings,
    plane_crossings,
    position_at,
    validate_apertures,
)
from hdlo_planning.exceptions import MalformedAssembly
from hdlo_planning.nlp import central_difference_jacobian
from hdlo_planning.statics import EquilibriumState, solve_forward_statics
from hdlo_planning.tests.conftest import hanging_rod, hanging_stick

RING = Aperture(center=(0.01, 0.0), height=0.4, radius=0.05, link="stick", name="ring")


@pytest.fixture
def stick():
    return hanging_stick()


def test_crossing_of_a_straight_stick(stick):
    cache = forward_kinematics(stick, np.zeros(stick.layout.n_d))
    assert plane_crossings(cache, RING) == pytest.approx([0.6])
    assert initial_crossing(cache, RING) == pytest.approx(0.6)
    assert_allclose(position_at(cache, "stick", 0.6), [0.0, 0.0, 0.4], atol=1e-12)


def test_constraint_values_at_the_crossing(stick):
    cache = forward_kinematics(stick, np.zeros(stick.layout.n_d))
    c_e, c_in = aperture_constraints(stick, cache, (RING,), [0.6])
    assert c_e[0] == pytest.approx(0.0, abs=1e-12)
    assert c_in[0] == pytest.approx(0.01**2 - 0.05**2)
    c_e, _ = aperture_constraints(stick, cache, (RING,), [0.5])
    assert c_e[0] == pytest.approx(-0.1)


def test_plane_out_of_reach_falls_back_to_the_nearest_node(stick):
    cache = forward_kinematics(stick, np.zeros(stick.layout.n_d))
    high = Aperture(center=(0.0, 0.0), height=2.0, radius=0.05, link="stick")
    assert plane_crossings(cache, high) == []
    assert initial_crossing(cache, high) == 0.0
    assert not aperture_feasible(stick, cache, (high,))


def test_feasibility_checks_the_shrunk_disk(stick):
    cache = forward_kinematics(stick, np.zeros(stick.layout.n_d))
    assert aperture_feasible(stick, cache, (RING,))
    off_center = Aperture(center=(0.2, 0.0), height=0.4, radius=0.05, link="stick")
    assert not aperture_feasible(stick, cache, (RING, off_center))


def test_jacobians_against_central_differences(stick, rng):
    q = 0.1 * rng.normal(size=stick.layout.n_d)
    xd = np.array([0.55])

    def values(z, x):
        c = forward_kinematics(stick, z)
        return np.concatenate(aperture_constraints(stick, c, (RING,), x))

    jac = aperture_constraint_jacobians(stick, forward_kinematics(stick, q), (RING,), xd)
    fd_q = central_difference_jacobian(lambda z: values(z, xd), q)
    fd_x = central_difference_jacobian(lambda x: values(q, x), xd)
    assert_allclose(np.vstack([jac.ce_q, jac.cin_q]), fd_q, atol=1e-8)
    assert_allclose(np.vstack([jac.ce_x, jac.cin_x]), fd_x, atol=1e-8)


def test_jacobians_on_a_bent_rod(rng):
    asm = hanging_rod(num_points=5, order=1)
    ring = Aperture(center=(0.0, 0.0), height=0.66, radius=0.05, link="rod")
    lay = asm.layout
    q = np.zeros(lay.n_d)
    q[lay.passive] = 0.3 * rng.normal(size=lay.passive.size)
    xd = np.array([0.47])

    def values(z, x):
        return np.concatenate(aperture_constraints(asm, forward_kinematics(asm, z), (ring,), x))

    jac = aperture_constraint_jacobians(asm, forward_kinematics(asm, q), (ring,), xd)
    assert_allclose(np.vstack([jac.ce_q, jac.cin_q]), central_difference_jacobian(lambda z: values(z, xd), q),
                    atol=1e-7)
    assert_allclose(np.vstack([jac.ce_x, jac.cin_x]), central_difference_jacobian(lambda x: values(q, x), xd),
                    atol=1e-7)


def test_curved_crossing_is_refined_onto_the_plane(rng):
    asm = hanging_rod(num_points=5, order=1)
    ring = Aperture(center=(0.0, 0.0), height=0.66, radius=0.05, link="rod")
    q_a = np.array([0.2, -0.1, 0.0, 0.0, 0.0, 0.0])
    state = solve_forward_statics(asm, q_a, EquilibriumState.zeros(asm))
    cache = forward_kinematics(asm, state.q)
    x = initial_crossings(cache, (ring,))[0]
    assert 0.0 < x < 1.0
    assert position_at(cache, "rod", x)[2] == pytest.approx(0.66, abs=1e-12)


def test_desk_start_threads_both_apertures(desk_scene):
    asm = desk_scene.assembly
    state = solve_forward_statics(asm, desk_scene.start_q_a, EquilibriumState.zeros(asm))
    cache = forward_kinematics(asm, state.q)
    assert_allclose(initial_crossings(cache, desk_scene.apertures), [0.5, 0.5], atol=1e-3)
    assert aperture_feasible(asm, cache, desk_scene.apertures)


def test_aperture_must_be_wider_than_the_rod(desk_scene):
    tight = Aperture(center=(0.0, -0.1), height=0.66, radius=0.0005, link="rod1")
    with pytest.raises(MalformedAssembly, match=r"apertures\[0\]\.radius"):
        validate_apertures(desk_scene.assembly, (tight,))
    with pytest.raises(MalformedAssembly, match=r"apertures\[0\]\.link"):
        validate_apertures(desk_scene.assembly, (Aperture((0.0, 0.0), 0.5, 0.05, "rod9"),))
