# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
Variable-strain Cosserat rod model of a single link.

Abscissae are normalized (X in [0, 1]); strains are per unit physical length,
so the link length enters through the Magnus step size and the quadrature.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import eval_sh_legendre

from hdlo_planning.exceptions import MalformedAssembly, OutOfRange, RigidLink
from hdlo_planning.liegroup import adjoint_inverse, bracket, exp_se3, small_adjoint, tangent_T, tangent_T_derivatives

SQRT3 = np.sqrt(3.0)
# Gauss collocation offsets inside a segment (two-point rule)
ZANNA_NODES = (0.5 - SQRT3 / 6.0, 0.5 + SQRT3 / 6.0)
MODE_NAMES = ("torsion", "bending_y", "bending_z", "axial", "shear_y", "shear_z")
STRAIGHT = (0.0, 0.0, 0.0, 1.0, 0.0, 0.0)


@dataclass(frozen=True)
class StrainBasis:
    order: int = 3
    modes: tuple = (True, True, True, True, True, True)

    def __post_init__(self):
        if self.order < 0:
            raise MalformedAssembly("basis.order", f"order must be >= 0, got {self.order}")
        if len(self.modes) != 6:
            raise MalformedAssembly("basis.modes", "mode mask needs six entries")
        if not any(self.modes):
            raise MalformedAssembly("basis.modes", "at least one strain mode must be active")

    @property
    def active_modes(self):
        return [m for m in range(6) if self.modes[m]]

    @property
    def n_coords(self):
        return len(self.active_modes) * (self.order + 1)


@dataclass(frozen=True)
class ReferenceStrain:
    value: tuple = STRAIGHT
    function: Optional[Callable] = None

    def __call__(self, x):
        if self.function is not None:
            return np.asarray(self.function(x), dtype=float)
        return np.asarray(self.value, dtype=float)


@dataclass(frozen=True)
class LinkGeometry:
    length: float
    kind: str = "deformable"
    section: str = "tube"
    outer_diameter: float = 0.0
    inner_diameter: float = 0.0
    thickness: float = 0.0
    youngs_modulus: float = 1.0
    poisson_ratio: float = 0.3
    density: float = 1.0
    # explicit rigid-body mass overrides the density-based value
    mass: Optional[float] = None

    def validate(self, path="geometry"):
        if not self.length > 0:
            raise MalformedAssembly(f"{path}.length", "length must be positive")
        if self.kind not in ("rigid", "deformable"):
            raise MalformedAssembly(f"{path}.kind", f"unknown link kind {self.kind!r}")
        if self.section not in ("tube", "disk", "none"):
            raise MalformedAssembly(f"{path}.section", f"unknown cross-section {self.section!r}")
        if self.section == "tube" and not self.outer_diameter > self.inner_diameter >= 0:
            raise MalformedAssembly(f"{path}.outer_diameter", "need outer > inner >= 0")
        if self.section == "disk" and not (self.outer_diameter > 0 and self.thickness > 0):
            raise MalformedAssembly(f"{path}.outer_diameter", "disk needs positive diameter and thickness")
        if self.kind == "deformable" and self.section == "none":
            raise MalformedAssembly(f"{path}.section", "deformable links need a cross-section")
        if not self.youngs_modulus > 0:
            raise MalformedAssembly(f"{path}.youngs_modulus", "E must be positive")
        if not 0 <= self.poisson_ratio < 0.5:
            raise MalformedAssembly(f"{path}.poisson_ratio", "need 0 <= nu < 0.5")
        if not self.density > 0:
            raise MalformedAssembly(f"{path}.density", "density must be positive")
        if self.mass is not None and self.mass < 0:
            raise MalformedAssembly(f"{path}.mass", "mass must be non-negative")

    @property
    def radius(self):
        return 0.5 * self.outer_diameter

    @property
    def area(self):
        r_o, r_i = 0.5 * self.outer_diameter, 0.5 * self.inner_diameter
        if self.section == "none":
            return 0.0
        return np.pi * (r_o**2 - r_i**2)

    @property
    def second_moment(self):
        r_o, r_i = 0.5 * self.outer_diameter, 0.5 * self.inner_diameter
        if self.section == "none":
            return 0.0
        return 0.25 * np.pi * (r_o**4 - r_i**4)

    @property
    def shear_modulus(self):
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def mass_per_length(self):
        return self.density * self.area

    @property
    def rigid_mass(self):
        if self.mass is not None:
            return self.mass
        if self.section == "disk":
            return self.density * self.area * self.thickness
        return self.density * self.area * self.length


@dataclass(frozen=True)
class QuadratureGrid:
    """Computation points on [0, 1]; endpoints carry zero weight."""
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_legendre(cls, n_points):
        if n_points < 1:
            raise OutOfRange(f"need at least one Gauss-Legendre point, got {n_points}")
        nodes, weights = leggauss(n_points)
        points = np.concatenate([[0.0], 0.5 * (nodes + 1.0), [1.0]])
        weights = np.concatenate([[0.0], 0.5 * weights, [0.0]])
        return cls(points=points, weights=weights)

    @classmethod
    def endpoints(cls):
        return cls(points=np.array([0.0, 1.0]), weights=np.array([0.5, 0.5]))

    @property
    def size(self):
        return len(self.points)


def eval_basis(basis, x):
    if not 0.0 <= x <= 1.0:
        raise OutOfRange(f"basis abscissa {x!r} outside [0, 1]")
    values = eval_sh_legendre(np.arange(basis.order + 1), x)
    Phi = np.zeros((6, basis.n_coords))
    for i, mode in enumerate(basis.active_modes):
        Phi[mode, i * (basis.order + 1):(i + 1) * (basis.order + 1)] = values
    return Phi


@dataclass
class MagnusStep:
    """One fourth-order Zanna step between consecutive computation points."""
    omega: np.ndarray
    S: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    coupling: float

    def dS(self):
        """Second derivative of Omega: dS[:, k, m] = d S[:, k] / d q_m."""
        a = bracket(self.phi1[:, None, :], self.phi2[:, :, None])
        b = bracket(self.phi2[:, None, :], self.phi1[:, :, None])
        return self.coupling * (a - b)


def magnus_step(basis, xi_star, q, x0, x1, length):
    h = x1 - x0
    H = length * h
    xa, xb = x0 + h * ZANNA_NODES[0], x0 + h * ZANNA_NODES[1]
    phi1, phi2 = eval_basis(basis, xa), eval_basis(basis, xb)
    xi1 = phi1 @ q + xi_star(xa)
    xi2 = phi2 @ q + xi_star(xb)
    coupling = SQRT3 * H**2 / 12.0
    omega = 0.5 * H * (xi1 + xi2) + coupling * bracket(xi1, xi2)
    S = 0.5 * H * (phi1 + phi2) + coupling * (small_adjoint(xi1) @ phi2 - small_adjoint(xi2) @ phi1)
    return MagnusStep(omega=omega, S=S, phi1=phi1, phi2=phi2, coupling=coupling)


def exponential_step(J, omega, S, dJ=None, dS=None):
    """
    Carry a body Jacobian (and optionally its q-derivative) across
    g -> g exp(Omega(q)) where S = dOmega/dq and dS = dS/dq.
    """
    E = exp_se3(omega)
    T = tangent_T(omega)
    Ad_inv = adjoint_inverse(E)
    TS = T @ S
    J_new = Ad_inv @ (J + TS)
    if dJ is None:
        return E, J_new, None
    dT = np.einsum("aij,am->ijm", tangent_T_derivatives(omega), S)
    dP = dJ + np.einsum("ijm,jk->ikm", dT, S)
    if dS is not None:
        dP = dP + np.einsum("ij,jkm->ikm", T, dS)
    zeta = Ad_inv @ TS
    dJ_new = np.einsum("ij,jkm->ikm", Ad_inv, dP) + bracket(J_new[:, :, None], zeta[:, None, :])
    return E, J_new, dJ_new


def constant_step(J, c, dJ=None):
    """Carry a body Jacobian across a fixed transform g -> g c."""
    Ad_inv = adjoint_inverse(c)
    J_new = Ad_inv @ J
    dJ_new = None if dJ is None else np.einsum("ij,jkm->ikm", Ad_inv, dJ)
    return J_new, dJ_new


def _sweep(basis, xi_star, q_i, grid, length, jacobian):
    q_i = np.asarray(q_i, dtype=float)
    if q_i.shape != (basis.n_coords,):
        raise OutOfRange(f"expected {basis.n_coords} strain coordinates, got shape {q_i.shape}")
    xs = grid.points
    poses = np.empty((len(xs), 4, 4))
    omegas = np.empty((len(xs) - 1, 6))
    jacs = np.zeros((len(xs), 6, basis.n_coords)) if jacobian else None
    poses[0] = np.eye(4)
    # the first computation point may sit away from the link base
    if xs[0] > 0.0:
        step = magnus_step(basis, xi_star, q_i, 0.0, xs[0], length)
        E, J0, _ = exponential_step(np.zeros((6, basis.n_coords)), step.omega, step.S)
        poses[0] = E
        if jacobian:
            jacs[0] = J0
    for j in range(len(xs) - 1):
        step = magnus_step(basis, xi_star, q_i, xs[j], xs[j + 1], length)
        omegas[j] = step.omega
        if jacobian:
            E, jacs[j + 1], _ = exponential_step(jacs[j], step.omega, step.S)
        else:
            E = exp_se3(step.omega)
        poses[j + 1] = poses[j] @ E
    return poses, omegas, jacs


def forward_kinematics_link(basis, xi_star, q_i, grid, length=1.0):
    """Link-local poses at the computation points and the Magnus twists between them."""
    poses, omegas, _ = _sweep(basis, xi_star, q_i, grid, length, jacobian=False)
    return poses, omegas


def link_jacobian(basis, xi_star, q_i, grid, length=1.0):
    _, _, jacs = _sweep(basis, xi_star, q_i, grid, length, jacobian=True)
    return jacs


def cross_section_stiffness(geom):
    if geom.kind == "rigid":
        raise RigidLink("cross-section stiffness is undefined for rigid links")
    E, G = geom.youngs_modulus, geom.shear_modulus
    A, I = geom.area, geom.second_moment
    # polar moment of a circular section; shear correction factor 1
    return np.diag([G * 2.0 * I, E * I, E * I, E * A, G * A, G * A])


def link_stiffness(basis, geom, grid):
    Sigma = cross_section_stiffness(geom)
    K = np.zeros((basis.n_coords, basis.n_coords))
    for x, w in zip(grid.points, grid.weights):
        if w == 0.0:
            continue
        Phi = eval_basis(basis, x)
        K += w * Phi.T @ Sigma @ Phi
    K *= geom.length
    return 0.5 * (K + K.T)


def gravity_wrench(pose, mass, g_world):
    """Body-frame wrench of a point mass at the frame origin."""
    return np.concatenate([np.zeros(3), mass * pose[:3, :3].T @ np.asarray(g_world, dtype=float)])


def link_gravity(basis, geom, grid, g_world, q_i, base_pose=None, xi_star=None):
    xi_star = xi_star or ReferenceStrain()
    base_pose = np.eye(4) if base_pose is None else base_pose
    poses, _, jacs = _sweep(basis, xi_star, q_i, grid, geom.length, jacobian=True)
    F = np.zeros(basis.n_coords)
    rho_a = geom.mass_per_length
    for pose, J, w in zip(poses, jacs, grid.weights):
        if w == 0.0:
            continue
        F += w * J.T @ gravity_wrench(base_pose @ pose, rho_a, g_world)
    return geom.length * F
