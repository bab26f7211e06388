# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
hDLO-manipulator assemblies.

Links form a tree rooted at the world frame. Each link carries a joint
(exponential of a constant twist basis) followed by its body: a straight
rigid segment or a variable-strain rod. Closure joints cut the loops.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from hdlo_planning.config import get_settings
from hdlo_planning.exceptions import MalformedAssembly, OutOfRange
from hdlo_planning.gvs_rod import (
    LinkGeometry,
    QuadratureGrid,
    ReferenceStrain,
    StrainBasis,
    constant_step,
    exponential_step,
    gravity_wrench,
    link_stiffness,
    magnus_step,
)
from hdlo_planning.liegroup import (
    adjoint,
    bracket,
    exp_se3,
    locate,
    log_se3,
    pose_inverse,
    skew,
    tangent_T_inverse,
)

logger = logging.getLogger(__name__)

JOINT_DOF = {"fixed": 0, "revolute": 1, "prismatic": 1, "spherical": 3, "free6": 6}
CLOSURE_ROWS = {"fixed": 6, "spherical": 3}


def _pose(value):
    return np.eye(4) if value is None else np.asarray(value, dtype=float)


@dataclass(frozen=True)
class JointSpec:
    kind: str = "fixed"
    axis: tuple = (0.0, 0.0, 1.0)
    actuated: bool = False
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None

    @property
    def n_dof(self):
        return JOINT_DOF[self.kind]

    def twist_basis(self):
        axis = np.asarray(self.axis, dtype=float)
        Phi = np.zeros((6, self.n_dof))
        if self.kind == "revolute":
            Phi[:3, 0] = axis / np.linalg.norm(axis)
        elif self.kind == "prismatic":
            Phi[3:, 0] = axis / np.linalg.norm(axis)
        elif self.kind == "spherical":
            Phi[:3, :] = np.eye(3)
        elif self.kind == "free6":
            Phi[:, :] = np.eye(6)
        return Phi

    def limits(self):
        n = self.n_dof
        lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(n)
        upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(n)
        return lower, upper


@dataclass(frozen=True)
class LinkSpec:
    name: str
    geometry: LinkGeometry
    joint: JointSpec = field(default_factory=JointSpec)
    parent: Optional[str] = None
    # fixed transform from the parent tip (or world) to the joint frame
    offset: Optional[np.ndarray] = None
    basis: Optional[StrainBasis] = None
    num_points: Optional[int] = None
    reference_strain: ReferenceStrain = field(default_factory=ReferenceStrain)

    @property
    def deformable(self):
        return self.geometry.kind == "deformable"


@dataclass(frozen=True)
class FrameRef:
    """A frame attached to ``link`` at abscissa ``x`` followed by a fixed ``offset``."""
    link: str
    x: float = 1.0
    offset: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ClosureSpec:
    frame_a: FrameRef
    frame_b: FrameRef
    kind: str = "fixed"

    @property
    def n_rows(self):
        return CLOSURE_ROWS[self.kind]


@dataclass
class Layout:
    index: dict
    parents: list
    joint_slices: list
    rod_slices: list
    joint_bases: list
    grids: list
    closure_slices: list
    actuated: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    stiffness: np.ndarray
    coordinate_names: list
    n_d: int
    n_a: int
    n_c: int

    @property
    def passive(self):
        mask = np.ones(self.n_d, dtype=bool)
        mask[self.actuated] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class Assembly:
    links: tuple
    closures: tuple = ()
    end_effector: Optional[FrameRef] = None
    gravity: tuple = (0.0, 0.0, -9.81)
    markers: tuple = ()
    num_points: Optional[int] = None
    name: str = "assembly"

    @cached_property
    def layout(self):
        validate(self)
        return _build_layout(self)

    def link(self, name):
        return self.links[self.layout.index[name]]


def _grid_for(asm, link):
    if not link.deformable:
        return QuadratureGrid.endpoints()
    n_p = link.num_points or asm.num_points or get_settings().num_points
    return QuadratureGrid.gauss_legendre(n_p)


def _check_frame(asm, ref, path, names, grids, node_only):
    if ref.link not in names:
        raise MalformedAssembly(f"{path}.link", f"unknown link {ref.link!r}")
    if not 0.0 <= ref.x <= 1.0:
        raise MalformedAssembly(f"{path}.x", f"abscissa {ref.x} outside [0, 1]")
    link = asm.links[names[ref.link]]
    if node_only and link.deformable:
        points = grids[names[ref.link]].points
        if not np.any(points == ref.x):
            raise MalformedAssembly(f"{path}.x", "frames on deformable links must sit on a computation point")
    if ref.offset is not None and np.asarray(ref.offset).shape != (4, 4):
        raise MalformedAssembly(f"{path}.offset", "offset must be a 4x4 pose")


def validate(asm):
    """Check the tree structure, indices and masks; raise MalformedAssembly on the first problem."""
    if not asm.links:
        raise MalformedAssembly("links", "assembly has no links")
    names = {}
    grids = []
    for i, link in enumerate(asm.links):
        path = f"links[{i}]"
        if link.name in names:
            raise MalformedAssembly(f"{path}.name", f"duplicate link name {link.name!r}")
        if link.parent is not None and link.parent not in names:
            raise MalformedAssembly(f"{path}.parent", f"parent {link.parent!r} must be declared before {link.name!r}")
        link.geometry.validate(f"{path}.geometry")
        joint = link.joint
        if joint.kind not in JOINT_DOF:
            raise MalformedAssembly(f"{path}.joint.kind", f"unknown joint kind {joint.kind!r}")
        if joint.kind in ("revolute", "prismatic") and not np.linalg.norm(joint.axis) > 0:
            raise MalformedAssembly(f"{path}.joint.axis", "joint axis must be nonzero")
        try:
            lower, upper = joint.limits()
        except ValueError as err:
            raise MalformedAssembly(f"{path}.joint.limits", f"limits need {joint.n_dof} entries") from err
        if np.any(lower >= upper):
            raise MalformedAssembly(f"{path}.joint.limits", "lower limits must be below upper limits")
        if joint.actuated and joint.n_dof > 0 and not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise MalformedAssembly(f"{path}.joint.limits", "actuated joints need finite limits")
        if link.deformable and link.basis is None:
            raise MalformedAssembly(f"{path}.basis", "deformable links need a strain basis")
        if link.offset is not None and np.asarray(link.offset).shape != (4, 4):
            raise MalformedAssembly(f"{path}.offset", "offset must be a 4x4 pose")
        names[link.name] = i
        grids.append(_grid_for(asm, link))

    for c, closure in enumerate(asm.closures):
        path = f"closures[{c}]"
        if closure.kind not in CLOSURE_ROWS:
            raise MalformedAssembly(f"{path}.kind", f"unknown closure kind {closure.kind!r}")
        _check_frame(asm, closure.frame_a, f"{path}.frame_a", names, grids, node_only=True)
        _check_frame(asm, closure.frame_b, f"{path}.frame_b", names, grids, node_only=True)
    if asm.end_effector is not None:
        _check_frame(asm, asm.end_effector, "end_effector", names, grids, node_only=False)
    for m, marker in enumerate(asm.markers):
        _check_frame(asm, marker, f"markers[{m}]", names, grids, node_only=False)
    if len(asm.gravity) != 3 or not np.all(np.isfinite(asm.gravity)):
        raise MalformedAssembly("gravity", "gravity must be a finite 3-vector")

    n_d = sum(l.joint.n_dof + (l.basis.n_coords if l.deformable else 0) for l in asm.links)
    n_a = sum(l.joint.n_dof for l in asm.links if l.joint.actuated)
    if n_a > n_d:
        raise MalformedAssembly("links", "more actuated than total coordinates")


def _build_layout(asm):
    index, parents = {}, []
    joint_slices, rod_slices, joint_bases, grids = [], [], [], []
    actuated, lower, upper, names = [], [], [], []
    offset = 0
    for i, link in enumerate(asm.links):
        index[link.name] = i
        parents.append(-1 if link.parent is None else index[link.parent])
        n_j = link.joint.n_dof
        joint_slices.append(slice(offset, offset + n_j))
        joint_bases.append(link.joint.twist_basis())
        lo, hi = link.joint.limits()
        lower.extend(lo)
        upper.extend(hi)
        names.extend(f"{link.name}.joint{k}" for k in range(n_j))
        if link.joint.actuated:
            actuated.extend(range(offset, offset + n_j))
        offset += n_j
        n_r = link.basis.n_coords if link.deformable else 0
        rod_slices.append(slice(offset, offset + n_r))
        lower.extend([-np.inf] * n_r)
        upper.extend([np.inf] * n_r)
        names.extend(f"{link.name}.strain{k}" for k in range(n_r))
        offset += n_r
        grids.append(_grid_for(asm, link))

    n_d = offset
    K = np.zeros((n_d, n_d))
    for link, rs, grid in zip(asm.links, rod_slices, grids):
        if link.deformable:
            K[rs, rs] = link_stiffness(link.basis, link.geometry, grid)

    closure_slices, row = [], 0
    for closure in asm.closures:
        closure_slices.append(slice(row, row + closure.n_rows))
        row += closure.n_rows

    logger.debug("assembly %s: n_d=%d n_a=%d n_c=%d", asm.name, n_d, len(actuated), row)
    return Layout(
        index=index, parents=parents, joint_slices=joint_slices, rod_slices=rod_slices,
        joint_bases=joint_bases, grids=grids, closure_slices=closure_slices,
        actuated=np.asarray(actuated, dtype=int), lower=np.asarray(lower), upper=np.asarray(upper),
        stiffness=K, coordinate_names=names, n_d=n_d, n_a=len(actuated), n_c=row,
    )


@dataclass
class LinkFrames:
    points: np.ndarray
    poses: np.ndarray
    omegas: np.ndarray
    jac: np.ndarray
    djac: Optional[np.ndarray] = None


@dataclass
class KinematicsCache:
    q: np.ndarray
    links: list
    second_order: bool = False
    index: dict = field(default_factory=dict)

    def frames(self, link):
        return self.links[self.index[link] if isinstance(link, str) else link]

    def matches(self, q, second_order=False):
        return (self.second_order or not second_order) and np.array_equal(self.q, q)


def forward_kinematics(asm, q, second_order=False):
    """World poses, Jacobians (and optionally their q-derivatives) at every computation point."""
    lay = asm.layout
    q = np.array(q, dtype=float)
    if q.shape != (lay.n_d,):
        raise OutOfRange(f"expected {lay.n_d} coordinates, got shape {q.shape}")
    n = lay.n_d
    frames = []
    for i, link in enumerate(asm.links):
        parent = lay.parents[i]
        if parent < 0:
            g = np.eye(4)
            J = np.zeros((6, n))
            dJ = np.zeros((6, n, n)) if second_order else None
        else:
            pf = frames[parent]
            g = pf.poses[-1]
            J = pf.jac[-1]
            dJ = pf.djac[-1] if second_order else None

        if link.offset is not None:
            c = _pose(link.offset)
            g = g @ c
            J, dJ = constant_step(J, c, dJ)

        js = lay.joint_slices[i]
        if js.stop > js.start:
            S = np.zeros((6, n))
            S[:, js] = lay.joint_bases[i]
            E, J, dJ = exponential_step(J, S[:, js] @ q[js], S, dJ)
            g = g @ E

        grid = lay.grids[i]
        count = grid.size
        poses = np.empty((count, 4, 4))
        omegas = np.empty((count - 1, 6))
        jacs = np.empty((count, 6, n))
        djacs = np.empty((count, 6, n, n)) if second_order else None
        poses[0], jacs[0] = g, J
        if second_order:
            djacs[0] = dJ

        if link.deformable:
            rs = lay.rod_slices[i]
            q_i = q[rs]
            for j in range(count - 1):
                step = magnus_step(link.basis, link.reference_strain, q_i, grid.points[j], grid.points[j + 1],
                                   link.geometry.length)
                S = np.zeros((6, n))
                S[:, rs] = step.S
                dS = None
                if second_order:
                    dS = np.zeros((6, n, n))
                    dS[:, rs, rs] = step.dS()
                E, J, dJ = exponential_step(J, step.omega, S, dJ, dS)
                g = g @ E
                omegas[j] = step.omega
                poses[j + 1], jacs[j + 1] = g, J
                if second_order:
                    djacs[j + 1] = dJ
        else:
            omegas[0] = np.array([0.0, 0.0, 0.0, link.geometry.length, 0.0, 0.0])
            c = exp_se3(omegas[0])
            J, dJ = constant_step(J, c, dJ)
            poses[1], jacs[1] = g @ c, J
            if second_order:
                djacs[1] = dJ

        frames.append(LinkFrames(points=grid.points, poses=poses, omegas=omegas, jac=jacs, djac=djacs))
    return KinematicsCache(q=q, links=frames, second_order=second_order, index=dict(lay.index))


def frame_kinematics(asm, cache, ref, second_order=False):
    """
    Pose, body Jacobian and (optionally) its q-derivative of a FrameRef.

    Between computation points the pose follows g_j exp(alpha Omega_j); its
    Jacobian uses dOmega/dq = T(Omega)^-1 (Ad_exp(Omega) J_{j+1} - J_j).
    """
    idx = asm.layout.index[ref.link]
    link = asm.links[idx]
    lf = cache.links[idx]
    if second_order and not cache.second_order:
        raise ValueError("second-order frame kinematics need a second-order cache")
    j, alpha = locate(lf.points, ref.x)
    if alpha == 1.0:
        j, alpha = j + 1, 0.0
    g, J = lf.poses[j], lf.jac[j]
    dJ = lf.djac[j] if second_order else None
    if alpha != 0.0:
        omega = lf.omegas[j]
        if not link.deformable:
            c = exp_se3(alpha * omega)
            g = g @ c
            J, dJ = constant_step(J, c, dJ)
        else:
            if second_order:
                raise OutOfRange("second-order derivatives on a deformable link need a computation point")
            dOmega = tangent_T_inverse(omega) @ (adjoint(exp_se3(omega)) @ lf.jac[j + 1] - J)
            E, J, _ = exponential_step(J, alpha * omega, alpha * dOmega)
            g = g @ E
    if ref.offset is not None:
        c = _pose(ref.offset)
        g = g @ c
        J, dJ = constant_step(J, c, dJ)
    return g, J, dJ


def _closure_terms(asm, cache, closure, second_order=False):
    g_a, J_a, dJ_a = frame_kinematics(asm, cache, closure.frame_a, second_order)
    g_b, J_b, dJ_b = frame_kinematics(asm, cache, closure.frame_b, second_order)
    return pose_inverse(g_a) @ g_b, J_a, J_b, dJ_a, dJ_b


def closure_error(asm, cache):
    lay = asm.layout
    e = np.zeros(lay.n_c)
    for closure, rows in zip(asm.closures, lay.closure_slices):
        g_rel = _closure_terms(asm, cache, closure)[0]
        if closure.kind == "fixed":
            e[rows] = log_se3(g_rel)
        else:
            e[rows] = g_rel[:3, 3]
    return e


def _spherical_rows(g_rel, J_a, J_b):
    R, t = g_rel[:3, :3], g_rel[:3, 3]
    return R @ J_b[3:] + skew(t) @ J_a[:3] - J_a[3:]


def closure_jacobian(asm, cache):
    """A-bar: Ad(g_rel) J_B - J_A for fixed closures, exact translation rows for spherical ones."""
    lay = asm.layout
    A = np.zeros((lay.n_c, lay.n_d))
    for closure, rows in zip(asm.closures, lay.closure_slices):
        g_rel, J_a, J_b, _, _ = _closure_terms(asm, cache, closure)
        if closure.kind == "fixed":
            # the rows are only meaningful inside the log chart
            log_se3(g_rel)
            A[rows] = adjoint(g_rel) @ J_b - J_a
        else:
            A[rows] = _spherical_rows(g_rel, J_a, J_b)
    return A


def closure_error_jacobian(asm, cache):
    """Exact derivative of closure_error: T(eps)^-1 A-bar on fixed rows."""
    lay = asm.layout
    D = closure_jacobian(asm, cache)
    for closure, rows in zip(asm.closures, lay.closure_slices):
        if closure.kind == "fixed":
            g_rel = _closure_terms(asm, cache, closure)[0]
            D[rows] = tangent_T_inverse(log_se3(g_rel)) @ D[rows]
    return D


def _with_second_order(asm, cache):
    if cache.second_order:
        return cache
    return forward_kinematics(asm, cache.q, second_order=True)


def closure_force_jacobian(asm, cache, lambda_bar):
    """d(A-bar^T lambda_bar)/dq."""
    lay = asm.layout
    n = lay.n_d
    M = np.zeros((n, n))
    lambda_bar = np.asarray(lambda_bar, dtype=float)
    if np.any(lambda_bar):
        cache = _with_second_order(asm, cache)
    for closure, rows in zip(asm.closures, lay.closure_slices):
        lam = lambda_bar[rows]
        if not np.any(lam):
            continue
        g_rel, J_a, J_b, dJ_a, dJ_b = _closure_terms(asm, cache, closure, second_order=True)
        Ad_rel = adjoint(g_rel)
        if closure.kind == "fixed":
            zeta = J_b - adjoint(pose_inverse(g_rel)) @ J_a
            inner = bracket(zeta[:, None, :], J_b[:, :, None]) + dJ_b
            dA = np.einsum("ij,jkm->ikm", Ad_rel, inner) - dJ_a
        else:
            R, t = g_rel[:3, :3], g_rel[:3, 3]
            zeta = J_b - adjoint(pose_inverse(g_rel)) @ J_a
            dt = R @ zeta[3:]
            dA = (np.einsum("ij,jkm->ikm", R, np.cross(zeta[:3, None, :], J_b[3:, :, None], axis=0) + dJ_b[3:])
                  + np.cross(dt[:, None, :], J_a[:3, :, None], axis=0)
                  + np.cross(t[:, None, None], dJ_a[:3], axis=0)
                  - dJ_a[3:])
        M += np.einsum("r,rkm->km", lam, dA)
    return M


def _mass_points(asm, cache, second_order):
    """Yield (pose, J, dJ, mass) for every gravity sample point."""
    for i, link in enumerate(asm.links):
        lf = cache.links[i]
        geom = link.geometry
        if link.deformable:
            weights = asm.layout.grids[i].weights
            for j, w in enumerate(weights):
                if w == 0.0:
                    continue
                dJ = lf.djac[j] if second_order else None
                yield lf.poses[j], lf.jac[j], dJ, w * geom.length * geom.mass_per_length
        else:
            mass = geom.rigid_mass
            if mass > 0.0:
                g, J, dJ = frame_kinematics(asm, cache, FrameRef(link.name, 0.5), second_order)
                yield g, J, dJ, mass


def gravity_force(asm, cache):
    F = np.zeros(asm.layout.n_d)
    if not np.any(asm.gravity):
        return F
    for pose, J, _, mass in _mass_points(asm, cache, second_order=False):
        F += J.T @ gravity_wrench(pose, mass, asm.gravity)
    return F


def gravity_jacobian(asm, cache):
    """dF/dq from the second-order kinematics."""
    n = asm.layout.n_d
    dF = np.zeros((n, n))
    if not np.any(asm.gravity):
        return dF
    cache = _with_second_order(asm, cache)
    g_world = np.asarray(asm.gravity, dtype=float)
    for pose, J, dJ, mass in _mass_points(asm, cache, second_order=True):
        W = gravity_wrench(pose, mass, g_world)
        dF += np.einsum("akm,a->km", dJ, W)
        dF += J[3:].T @ skew(W[3:]) @ J[:3]
    return dF


def selection_matrix(asm):
    lay = asm.layout
    B = np.zeros((lay.n_d, lay.n_a))
    B[lay.actuated, np.arange(lay.n_a)] = 1.0
    return B


def assemble_global(asm, cache, q=None):
    """Stiffness K, gravity generalized force F and actuation map B."""
    return asm.layout.stiffness, gravity_force(asm, cache), selection_matrix(asm)


def end_effector_pose(asm, cache):
    if asm.end_effector is None:
        raise MalformedAssembly("end_effector", "assembly has no end-effector")
    return frame_kinematics(asm, cache, asm.end_effector)[0]


def end_effector_jacobian(asm, cache):
    if asm.end_effector is None:
        raise MalformedAssembly("end_effector", "assembly has no end-effector")
    return frame_kinematics(asm, cache, asm.end_effector)[1]


def marker_positions(asm, cache):
    if not asm.markers:
        return np.zeros((0, 3))
    return np.array([frame_kinematics(asm, cache, m)[0][:3, 3] for m in asm.markers])
