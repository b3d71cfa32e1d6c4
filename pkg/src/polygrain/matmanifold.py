"""Matrix-manifold primitives around O(d): ball truncation, distance to O(d),
polar projection, geodesics on the rotation components, misorientation angles.
"""

import math

import numpy as np

from .errors import (ComponentMismatch, LogBranchFailure, SingularMatrix,
                     SvdFailure, UnsupportedDimension)
from .pointgroup import _as_matrix, orbit

SINGULAR_FLOOR = 1e-8


def project_ball(x):
    """Radial projection onto the closed Frobenius ball of radius sqrt(d).

    O(d) lies on the sphere ||R||_F = sqrt(d), so this truncation never moves
    points away from O(d); it commutes with left-multiplication by any
    orthogonal matrix and is 1-Lipschitz.
    """
    x = _as_matrix(x)
    d = x.shape[0]
    nrm = float(np.linalg.norm(x))
    r = math.sqrt(d)
    if nrm <= r:
        return x.copy()
    return (r / nrm) * x


def _svd(x):
    try:
        u, s, vt = np.linalg.svd(x)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc
    if not np.all(np.isfinite(s)):
        raise SvdFailure("non-finite singular values")
    return u, s, vt


def dist_orthogonal(x):
    """Frobenius distance from x to O(d): sqrt(sum (sigma_i - 1)^2)."""
    x = _as_matrix(x)
    _, s, _ = _svd(x)
    return float(np.sqrt(((s - 1.0) ** 2).sum()))


def polar_project(x, floor=SINGULAR_FLOOR):
    """Nearest matrix in O(d): the orthogonal polar factor U V^T.

    Undefined near singular matrices; raises SingularMatrix when the smallest
    singular value drops below the floor (same exclusion as the fidelity
    mask's well-conditioning test).
    """
    x = _as_matrix(x)
    u, s, vt = _svd(x)
    if s[-1] < floor:
        raise SingularMatrix(f"smallest singular value {s[-1]:.3e} below floor {floor:.1e}")
    return u @ vt


def _rotation_log_2d(r):
    # principal log of a 2D rotation: angle from atan2
    theta = math.atan2(r[1, 0], r[0, 0])
    return theta


def _rotation_log_3d(r):
    # principal axis-angle of a 3D rotation (Rodrigues)
    tr = float(np.trace(r))
    c = max(-1.0, min(1.0, (tr - 1.0) / 2.0))
    theta = math.acos(c)
    if theta > math.pi - 1e-7:
        raise LogBranchFailure("rotation angle at pi: antipodal log ambiguity")
    if theta < 1e-12:
        return np.zeros(3), 0.0
    ax = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    ax = ax / (2.0 * math.sin(theta))
    return ax, theta


def _rotation_exp_3d(ax, theta):
    k = np.array([[0, -ax[2], ax[1]], [ax[2], 0, -ax[0]], [-ax[1], ax[0], 0]])
    return np.eye(3) + math.sin(theta) * k + (1 - math.cos(theta)) * (k @ k)


def so_geodesic(r0, r1, t):
    """Constant-speed geodesic r0 exp(t log(r0^T r1)) within one O(d) component.

    Requires det(r0) = det(r1); the connecting rotation r0^T r1 is then proper
    and the principal log exists except at the antipodal angle pi.
    """
    r0 = _as_matrix(r0)
    r1 = _as_matrix(r1, r0.shape[0])
    d = r0.shape[0]
    if np.sign(np.linalg.det(r0)) != np.sign(np.linalg.det(r1)):
        raise ComponentMismatch("endpoints have different determinant signs")
    q = r0.T @ r1
    if d == 2:
        theta = _rotation_log_2d(q)
        if abs(abs(theta) - math.pi) < 1e-9:
            raise LogBranchFailure("rotation angle at pi: antipodal log ambiguity")
        c, s = math.cos(t * theta), math.sin(t * theta)
        return r0 @ np.array([[c, -s], [s, c]])
    if d == 3:
        ax, theta = _rotation_log_3d(q)
        return r0 @ _rotation_exp_3d(ax, t * theta)
    raise UnsupportedDimension("so_geodesic supports d in {2, 3}")


def geodesic_arc_length(r0, r1):
    """||log(r0^T r1)||_F, the exact in-manifold arc length between endpoints."""
    r0 = _as_matrix(r0)
    r1 = _as_matrix(r1, r0.shape[0])
    d = r0.shape[0]
    q = r0.T @ r1
    if d == 2:
        return math.sqrt(2.0) * abs(_rotation_log_2d(q))
    if d == 3:
        tr = float(np.trace(q))
        c = max(-1.0, min(1.0, (tr - 1.0) / 2.0))
        return math.sqrt(2.0) * math.acos(c)
    raise UnsupportedDimension("geodesic_arc_length supports d in {2, 3}")


def misorientation_angle(group, a, b):
    """Smallest rotation angle between the orbits of a and b (d = 2 only).

    This is a reporting convenience: the energies always consume the
    Frobenius mismatch, never the angle.
    """
    a = _as_matrix(a, group.d)
    b = _as_matrix(b, group.d)
    if group.d != 2:
        raise UnsupportedDimension("misorientation_angle is the d=2 convenience form")
    _check_orth_input(a)
    _check_orth_input(b)
    sa = np.sign(np.linalg.det(a))
    dets = np.sign(np.linalg.det(group.elements)) * np.sign(np.linalg.det(b))
    if not np.any(dets == sa):
        raise ComponentMismatch("no orbit element matches the determinant sign")
    orb = orbit(group, b)
    dmin = math.inf
    for g, e in zip(group.elements, orb):
        if np.sign(np.linalg.det(g)) * np.sign(np.linalg.det(b)) == sa:
            dmin = min(dmin, float(np.linalg.norm(a - e)))
    return 2.0 * math.asin(max(-1.0, min(1.0, dmin / (2.0 * math.sqrt(2.0)))))


def _check_orth_input(m):
    if np.linalg.norm(m.T @ m - np.eye(m.shape[0])) > 1e-6:
        raise ValueError("input is not orthogonal")
