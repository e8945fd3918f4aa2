"""Pinhole camera model"""
from dataclasses import dataclass

import numpy as np

from . import calculate as calc
from .errors import DegenerateProjection, SingularCamera

LAMBDA_MIN = 1e-12


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths and principal point, all in pixels."""
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError('focal lengths must be positive, got fx={}, fy={}'.format(self.fx, self.fy))

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraPose:
    """Camera extrinsics: translation in metres, rotation angles in radians."""
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        values = (self.tx, self.ty, self.tz, self.alpha, self.beta, self.gamma)
        if not np.all(np.isfinite(values)):
            raise ValueError('camera pose must be finite, got {}'.format(values))

    @classmethod
    def from_degrees(cls, tx=0.0, ty=0.0, tz=0.0, alpha=0.0, beta=0.0, gamma=0.0):
        return cls(tx, ty, tz, np.radians(alpha), np.radians(beta), np.radians(gamma))

    @property
    def rotation(self):
        return calc.rotation_matrix(self.alpha, self.beta, self.gamma)

    @property
    def translation(self):
        return np.array([self.tx, self.ty, self.tz])


@dataclass(frozen=True)
class ViewpointLimits:
    """Half-widths of the uniform box viewpoints are drawn from (radians, metres)."""
    alpha: float = np.radians(30.0)
    beta: float = np.radians(30.0)
    gamma: float = np.radians(30.0)
    tx: float = 0.5
    ty: float = 0.5
    tz: float = 0.5

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.tx, self.ty, self.tz) < 0:
            raise ValueError('viewpoint limits must be non-negative')

    @classmethod
    def from_degrees(cls, max_angle_deg=30.0, max_translation_m=0.5):
        angle = np.radians(max_angle_deg)
        return cls(angle, angle, angle, max_translation_m, max_translation_m, max_translation_m)


@dataclass(frozen=True)
class ProjectionMatrix:
    """3x4 projection matrix with columns p1..p4."""
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (3, 4):
            raise ValueError('projection matrix must be 3x4, got {}'.format(p.shape))
        object.__setattr__(self, 'p', p)

    @property
    def block(self):
        return self.p[:, :3]

    @property
    def offset(self):
        return self.p[:, 3]


@dataclass(frozen=True)
class Joint3D:
    x: float
    y: float
    z: float

    def as_array(self):
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class JointImage:
    """Image coordinates u/lambda, v/lambda (pixels) and projective scale lambda."""
    u_over_lambda: float
    v_over_lambda: float
    lam: float

    def as_array(self):
        return np.array([self.u_over_lambda, self.v_over_lambda, self.lam])


def build_projection(intr, pose):
    r"""
    Compose the projection matrix of a calibrated camera.

    Parameters
    ----------
    intr : CameraIntrinsics
            Intrinsic calibration.
    pose : CameraPose
            Camera extrinsics.

    Returns
    -------
    pm : ProjectionMatrix
            :math:`K [R_z(\gamma) R_x(\beta) R_y(\alpha) \,|\, t]`.
    """
    rt = np.hstack([pose.rotation, pose.translation[:, None]])
    return ProjectionMatrix(intr.matrix @ rt)


def build_projection_about(intr, pose, pivot):
    r"""
    Projection of a camera whose pose perturbation is applied about a pivot point.

    Parameters
    ----------
    intr : CameraIntrinsics
            Intrinsic calibration.
    pose : CameraPose
            Rotation and translation offsets of the viewpoint.
    pivot : array_like, shape(3,)
            World point (metres) the rotation turns about, usually the body centre.

    Returns
    -------
    pm : ProjectionMatrix
            :math:`K [R \,|\, t + c - R c]`, identical to :func:`build_projection`
            for a zero pivot or a zero rotation.
    """
    pivot = np.asarray(pivot, dtype=float)
    rot = pose.rotation
    t = pose.translation + pivot - rot @ pivot
    return ProjectionMatrix(intr.matrix @ np.hstack([rot, t[:, None]]))


def project_points(pm, xyz):
    r"""
    Project world points to stacked image states.

    Parameters
    ----------
    pm : ProjectionMatrix
            Camera projection.
    xyz : array_like, shape(n,3)
            World coordinates in metres.

    Returns
    -------
    uvl : np.ndarray, shape(n,3)
            Rows of :math:`(u/\lambda, v/\lambda, \lambda)`.

    Raises
    ------
    DegenerateProjection
        If a point lies on the camera plane (:math:`|\lambda| < 10^{-12}`).
    """
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    uvl = xyz @ pm.block.T + pm.offset
    lam = uvl[:, 2]
    bad = np.flatnonzero(np.abs(lam) < LAMBDA_MIN)
    if bad.size:
        raise DegenerateProjection('point {} projects with lambda={:.3g}'.format(bad[0], lam[bad[0]]))
    out = np.empty_like(uvl)
    out[:, 0] = uvl[:, 0] / lam
    out[:, 1] = uvl[:, 1] / lam
    out[:, 2] = lam
    return out


def backproject_points(pm, uvl):
    r"""
    Recover world points from stacked image states.

    Parameters
    ----------
    pm : ProjectionMatrix
            Camera projection.
    uvl : array_like, shape(n,3)
            Rows of :math:`(u/\lambda, v/\lambda, \lambda)`.

    Returns
    -------
    xyz : np.ndarray, shape(n,3)
            World coordinates

            .. math:: [X, Y, Z]^T = [p_1\, p_2\, p_3]^{-1} ([u, v, \lambda]^T - p_4)

    Raises
    ------
    SingularCamera
        If the left 3x3 block of the projection is numerically singular.
    """
    block = pm.block
    cond = np.linalg.cond(block)
    if not np.isfinite(cond) or cond * np.finfo(float).eps >= 1.0:
        raise SingularCamera('left 3x3 block of the projection is singular (condition number {:.3g})'.format(cond))
    uvl = np.atleast_2d(np.asarray(uvl, dtype=float))
    lam = uvl[:, 2]
    homog = np.column_stack([uvl[:, 0] * lam, uvl[:, 1] * lam, lam])
    return np.linalg.solve(block, (homog - pm.offset).T).T


def project(pm, j):
    """Project a single joint, see :func:`project_points`."""
    u, v, lam = project_points(pm, j.as_array())[0]
    return JointImage(u, v, lam)


def backproject(pm, ji):
    """Back-project a single joint image, see :func:`backproject_points`."""
    x, y, z = backproject_points(pm, ji.as_array())[0]
    return Joint3D(x, y, z)


def sample_viewpoint(rng_seed, limits=None):
    r"""
    Draw a camera pose uniformly inside a box of angles and translations.

    Parameters
    ----------
    rng_seed : int or np.random.Generator
            Seed (or generator) of the draw.
    limits : ViewpointLimits, optional
            Half-widths of the box, default 30 degrees and 0.5 m on every axis.

    Returns
    -------
    pose : CameraPose
            Sampled pose.
    """
    if limits is None:
        limits = ViewpointLimits()
    rng = np.random.default_rng(rng_seed)
    half = np.array([limits.tx, limits.ty, limits.tz, limits.alpha, limits.beta, limits.gamma])
    draw = rng.uniform(-1.0, 1.0, size=6) * half
    return CameraPose(*draw)
