# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hdlo_planning.assembly import forward_kinematics, gravity_force
from hdlo_planning.exceptions import MalformedAssembly, OutOfRange, RigidLink
from hdlo_planning.gvs_rod import (
    LinkGeometry,
    QuadratureGrid,
    ReferenceStrain,
    StrainBasis,
    cross_section_stiffness,
    eval_basis,
    forward_kinematics_link,
    link_gravity,
    link_jacobian,
    link_stiffness,
)
from hdlo_planning.liegroup import log_se3, pose_inverse
from hdlo_planning.tests.conftest import NITINOL, cantilever

BENDING_Z_ONLY = (False, False, True, False, False, False)


def test_grid_has_weightless_endpoints():
    grid = QuadratureGrid.gauss_legendre(5)
    assert grid.size == 7
    assert grid.points[0] == 0.0 and grid.points[-1] == 1.0
    assert grid.weights[0] == 0.0 and grid.weights[-1] == 0.0
    assert grid.weights.sum() == pytest.approx(1.0)
    assert np.all(np.diff(grid.points) > 0)
    with pytest.raises(OutOfRange):
        QuadratureGrid.gauss_legendre(0)


def test_basis_mask_and_order():
    basis = StrainBasis(order=2, modes=(True, False, True, False, False, False))
    assert basis.n_coords == 6
    Phi = eval_basis(basis, 0.3)
    assert Phi.shape == (6, 6)
    assert np.all(Phi[[1, 3, 4, 5]] == 0.0)
    # shifted Legendre P0, P1, P2 at 0.3
    assert_allclose(Phi[0, :3], [1.0, 2 * 0.3 - 1.0, 6 * 0.09 - 6 * 0.3 + 1.0])
    with pytest.raises(OutOfRange):
        eval_basis(basis, 1.5)
    with pytest.raises(MalformedAssembly):
        StrainBasis(order=1, modes=(False,) * 6)


def test_straight_reference_gives_a_straight_rod():
    basis = StrainBasis(order=1)
    grid = QuadratureGrid.gauss_legendre(4)
    poses, omegas = forward_kinematics_link(basis, ReferenceStrain(), np.zeros(basis.n_coords), grid, length=0.5)
    for x, g in zip(grid.points, poses):
        assert_allclose(g[:3, :3], np.eye(3), atol=1e-14)
        assert_allclose(g[:3, 3], [0.5 * x, 0.0, 0.0], atol=1e-14)
    assert omegas.shape == (grid.size - 1, 6)


def test_constant_curvature_bends_into_an_arc():
    basis = StrainBasis(order=0, modes=BENDING_Z_ONLY)
    kappa, length = 2.0, 0.9
    poses, _ = forward_kinematics_link(basis, ReferenceStrain(), np.array([kappa]),
                                       QuadratureGrid.gauss_legendre(3), length)
    s = kappa * length
    assert_allclose(poses[-1][:3, 3], [np.sin(s) / kappa, (1.0 - np.cos(s)) / kappa, 0.0], atol=1e-12)


def test_body_jacobian_against_central_differences(rng):
    basis = StrainBasis(order=1)
    grid = QuadratureGrid.gauss_legendre(4)
    q = 0.5 * rng.normal(size=basis.n_coords)
    J = link_jacobian(basis, ReferenceStrain(), q, grid, length=0.7)
    g, _ = forward_kinematics_link(basis, ReferenceStrain(), q, grid, length=0.7)
    h = 1e-6
    for m in range(basis.n_coords):
        dq = np.zeros_like(q)
        dq[m] = h
        gp, _ = forward_kinematics_link(basis, ReferenceStrain(), q + dq, grid, length=0.7)
        gm, _ = forward_kinematics_link(basis, ReferenceStrain(), q - dq, grid, length=0.7)
        for j in range(grid.size):
            fd = (log_se3(pose_inverse(g[j]) @ gp[j]) - log_se3(pose_inverse(g[j]) @ gm[j])) / (2.0 * h)
            assert_allclose(J[j][:, m], fd, atol=1e-6)


def test_stiffness_of_a_constant_basis_is_length_times_section():
    geom = LinkGeometry(length=0.4, **NITINOL)
    basis = StrainBasis(order=0)
    K = link_stiffness(basis, geom, QuadratureGrid.gauss_legendre(5))
    assert_allclose(K, 0.4 * cross_section_stiffness(geom), rtol=1e-12)


def test_stiffness_is_symmetric_positive_definite():
    geom = LinkGeometry(length=0.68, **NITINOL)
    K = link_stiffness(StrainBasis(order=3), geom, QuadratureGrid.gauss_legendre(8))
    assert_allclose(K, K.T)
    assert np.min(np.linalg.eigvalsh(K)) > 0.0


def test_section_properties_and_rigid_links():
    geom = LinkGeometry(length=1.0, **NITINOL)
    assert geom.area == pytest.approx(np.pi * (0.0009**2 - 0.0007**2))
    assert geom.second_moment == pytest.approx(0.25 * np.pi * (0.0009**4 - 0.0007**4))
    assert geom.radius == pytest.approx(0.0009)
    rigid = LinkGeometry(length=0.2, kind="rigid", section="none", mass=0.048)
    assert rigid.rigid_mass == 0.048
    with pytest.raises(RigidLink):
        cross_section_stiffness(rigid)
    with pytest.raises(MalformedAssembly):
        LinkGeometry(length=1.0, outer_diameter=0.001, inner_diameter=0.002).validate()


def test_tip_pose_converges_at_fourth_order(rng):
    basis = StrainBasis(order=3)
    q = 0.6 * rng.normal(size=basis.n_coords)

    def tip(n):
        poses, _ = forward_kinematics_link(basis, ReferenceStrain(), q, QuadratureGrid.gauss_legendre(n))
        return poses[-1]

    reference = tip(96)
    errors = [np.linalg.norm(log_se3(pose_inverse(reference) @ tip(n))) for n in (6, 12, 24)]
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders > 3.5), orders


def test_distributed_load_on_a_straight_rod():
    geom = LinkGeometry(length=0.3, **NITINOL)
    basis = StrainBasis(order=0)
    F = link_gravity(basis, geom, QuadratureGrid.gauss_legendre(5), (0.0, 0.0, -9.81), np.zeros(6))
    w = geom.mass_per_length * 9.81
    # shear along z carries the weight, bending about y its moment about the base
    assert F[5] == pytest.approx(-w * geom.length**2 / 2.0, rel=1e-10)
    assert F[1] == pytest.approx(w * geom.length**3 / 6.0, rel=1e-10)
    assert_allclose(F[[0, 2, 3, 4]], 0.0, atol=1e-14)


def test_link_gravity_matches_the_assembled_load(rng):
    asm = cantilever(order=2, num_points=6)
    rod = asm.links[0]
    q = 0.3 * rng.normal(size=asm.layout.n_d)
    F = link_gravity(rod.basis, rod.geometry, asm.layout.grids[0], asm.gravity, q)
    assert_allclose(F, gravity_force(asm, forward_kinematics(asm, q)), rtol=1e-10, atol=1e-16)
