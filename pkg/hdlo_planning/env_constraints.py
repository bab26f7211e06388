# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
Circular apertures in horizontal planes.

A rod passes an aperture when its centerline point at the free abscissa X
lies on the plane z = z_h (equality) and inside the disk shrunk by the rod
radius (inequality, c_in <= 0).
"""

import logging
from dataclasses import dataclass

import numpy as np

from hdlo_planning.assembly import FrameRef, frame_kinematics
from hdlo_planning.exceptions import MalformedAssembly
from hdlo_planning.liegroup import exp_se3, locate

logger = logging.getLogger(__name__)

NEWTON_STEPS = 30


@dataclass(frozen=True)
class Aperture:
    center: tuple
    height: float
    radius: float
    link: str
    name: str = "aperture"

    @property
    def center_xy(self):
        return np.asarray(self.center, dtype=float).reshape(2)


def validate_apertures(asm, apertures):
    for k, ap in enumerate(apertures):
        path = f"apertures[{k}]"
        if ap.link not in asm.layout.index:
            raise MalformedAssembly(f"{path}.link", f"unknown link {ap.link!r}")
        if len(ap.center) != 2:
            raise MalformedAssembly(f"{path}.center", "aperture center is an (x, y) pair")
        rho = asm.link(ap.link).geometry.radius
        if not ap.radius > rho:
            raise MalformedAssembly(f"{path}.radius", f"radius {ap.radius} must exceed the rod radius {rho}")


def _link_name(asm, link):
    return asm.links[link].name if isinstance(link, (int, np.integer)) else link


def _segment_point(lf, j, alpha):
    """Pose on segment j at fraction alpha, and d(position)/d(alpha)."""
    omega = lf.omegas[j]
    g = lf.poses[j] @ exp_se3(alpha * omega)
    return g, g[:3, :3] @ omega[3:]


def position_at(cache, link, x_dagger):
    lf = cache.frames(link)
    j, alpha = locate(lf.points, x_dagger)
    if alpha == 0.0:
        return lf.poses[j][:3, 3].copy()
    if alpha == 1.0:
        return lf.poses[j + 1][:3, 3].copy()
    return _segment_point(lf, j, alpha)[0][:3, 3]


def position_jacobian_q(asm, cache, link, x_dagger):
    g, J, _ = frame_kinematics(asm, cache, FrameRef(_link_name(asm, link), float(x_dagger)))
    return g[:3, :3] @ J[3:]


def position_derivative_x(cache, link, x_dagger):
    lf = cache.frames(link)
    j, alpha = locate(lf.points, x_dagger)
    h = lf.points[j + 1] - lf.points[j]
    return _segment_point(lf, j, alpha)[1] / h


def aperture_constraints(asm, cache, apertures, x_daggers):
    """(c_e, c_in) with one entry per aperture."""
    c_e = np.zeros(len(apertures))
    c_in = np.zeros(len(apertures))
    for k, (ap, x) in enumerate(zip(apertures, x_daggers)):
        p = position_at(cache, ap.link, x)
        rho = asm.link(ap.link).geometry.radius
        d = ap.center_xy - p[:2]
        c_e[k] = ap.height - p[2]
        c_in[k] = d @ d - (ap.radius - rho) ** 2
    return c_e, c_in


@dataclass
class ApertureJacobians:
    ce_q: np.ndarray
    ce_x: np.ndarray
    cin_q: np.ndarray
    cin_x: np.ndarray


def aperture_constraint_jacobians(asm, cache, apertures, x_daggers):
    """Derivatives of aperture_constraints; the X blocks are diagonal."""
    m, n = len(apertures), asm.layout.n_d
    out = ApertureJacobians(np.zeros((m, n)), np.zeros((m, m)), np.zeros((m, n)), np.zeros((m, m)))
    for k, (ap, x) in enumerate(zip(apertures, x_daggers)):
        p = position_at(cache, ap.link, x)
        Jr = position_jacobian_q(asm, cache, ap.link, x)
        dr = position_derivative_x(cache, ap.link, x)
        d = ap.center_xy - p[:2]
        out.ce_q[k] = -Jr[2]
        out.ce_x[k, k] = -dr[2]
        out.cin_q[k] = -2.0 * d @ Jr[:2]
        out.cin_x[k, k] = -2.0 * d @ dr[:2]
    return out


def _refine_crossing(lf, j, height):
    """Safeguarded Newton for z(alpha) = height on a segment whose ends straddle the plane."""
    lo, hi = 0.0, 1.0
    f_lo = lf.poses[j][2, 3] - height
    f_hi = lf.poses[j + 1][2, 3] - height
    alpha = f_lo / (f_lo - f_hi)
    for _ in range(NEWTON_STEPS):
        g, dr = _segment_point(lf, j, alpha)
        f = g[2, 3] - height
        if abs(f) < 1e-15:
            break
        if np.sign(f) == np.sign(f_lo):
            lo, f_lo = alpha, f
        else:
            hi = alpha
        trial = alpha - f / dr[2] if dr[2] != 0.0 else -1.0
        alpha = trial if lo < trial < hi else 0.5 * (lo + hi)
    return lf.points[j] + alpha * (lf.points[j + 1] - lf.points[j])


def plane_crossings(cache, aperture):
    """Sorted abscissae where the link centerline meets the aperture plane."""
    lf = cache.frames(aperture.link)
    d = lf.poses[:, 2, 3] - aperture.height
    found = []
    for j in range(len(lf.points) - 1):
        if d[j] == 0.0:
            found.append(float(lf.points[j]))
        elif d[j] * d[j + 1] < 0.0:
            found.append(float(_refine_crossing(lf, j, aperture.height)))
    if d[-1] == 0.0:
        found.append(float(lf.points[-1]))
    return sorted(set(found))


def initial_crossing(cache, aperture):
    """
    Starting X for an aperture: the plane crossing nearest the aperture
    center (ties go to the smaller X), or the node closest to the plane
    when the centerline does not reach it.
    """
    best, best_dist = None, np.inf
    for x in plane_crossings(cache, aperture):
        dist = np.linalg.norm(position_at(cache, aperture.link, x)[:2] - aperture.center_xy)
        if dist < best_dist:
            best, best_dist = x, dist
    if best is not None:
        return best
    lf = cache.frames(aperture.link)
    j = int(np.argmin(np.abs(lf.poses[:, 2, 3] - aperture.height)))
    logger.debug("%s: centerline does not reach z=%.4f, starting at node X=%.4f",
                 aperture.name, aperture.height, lf.points[j])
    return float(lf.points[j])


def initial_crossings(cache, apertures):
    return np.array([initial_crossing(cache, ap) for ap in apertures])


def aperture_feasible(asm, cache, apertures, tol=1e-9):
    """True when every aperture is pierced at some crossing inside its margin disk."""
    for ap in apertures:
        rho = asm.link(ap.link).geometry.radius
        margin = (ap.radius - rho) ** 2
        inside = False
        for x in plane_crossings(cache, ap):
            d = ap.center_xy - position_at(cache, ap.link, x)[:2]
            if d @ d - margin <= tol:
                inside = True
                break
        if not inside:
            return False
    return True
