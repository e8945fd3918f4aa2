"""Tracking accuracy metrics: pixel errors, PCP curves and aligned 3D errors"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import bodymodel as bm
from . import reconstruct
from .errors import DegenerateConfiguration, LengthMismatch, MissingJoint, ZeroLengthLimb, with_context

logger = logging.getLogger(__name__)

PCP_THRESHOLDS = np.round(np.arange(1, 21) * 0.05, 2)
ALIGN_JOINTS = ('head', 'neck', 'left_shoulder', 'right_shoulder')


@dataclass(frozen=True)
class PcpCurve:
    thresholds: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        thresholds = np.asarray(self.thresholds, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if thresholds.shape != values.shape or np.any(np.diff(thresholds) <= 0):
            raise ValueError('PCP thresholds must be ascending and match the values')
        object.__setattr__(self, 'thresholds', thresholds)
        object.__setattr__(self, 'values', values)

    def to_frame(self):
        return pd.DataFrame({'threshold': self.thresholds, 'pcp': self.values})


@dataclass(frozen=True)
class AlignmentResult:
    """Rigid transform ``x -> rotation @ x + translation`` with unit scale."""
    rotation: np.ndarray
    translation: np.ndarray
    rms: float = 0.0

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation


def _as_points(x, joints=bm.JOINTS):
    """Per-frame joint array (T, J, k) from full-body estimates, a recording or an array."""
    if hasattr(x, 'positions'):
        positions = np.asarray(x.positions, dtype=float)
        try:
            idx = [list(x.joints).index(j) for j in joints]
        except ValueError:
            missing = next(j for j in joints if j not in x.joints)
            raise MissingJoint('joint {!r} is missing from the recording'.format(missing), joint=missing) from None
        return positions[:, idx]
    if len(x) and isinstance(x[0], bm.FullBodyEstimate):
        idx = [bm.JOINTS.index(j) for j in joints]
        return np.stack([e.values[idx] for e in x])
    return np.asarray(x, dtype=float)


def _check_lengths(est, truth):
    if est.shape[0] != truth.shape[0]:
        raise LengthMismatch('estimate has {} frames but ground truth has {}'.format(est.shape[0], truth.shape[0]))
    if est.shape[1] != truth.shape[1]:
        raise LengthMismatch('estimate has {} joints but ground truth has {}'.format(est.shape[1], truth.shape[1]))


def joint_pixel_error(est, truth, joints=bm.JOINTS):
    r"""
    Euclidean image error of every joint in every frame.

    Parameters
    ----------
    est : list of FullBodyEstimate or array_like, shape(T,J,>=2)
            Estimated joints, image coordinates in the first two columns.
    truth : array_like, shape(T,J,>=2)
            Ground-truth joints in the same order.
    joints : sequence of str
            Joint names, used as column labels.

    Returns
    -------
    errors : pd.DataFrame, shape(T,J)
            Pixel distance per frame and joint.
    means : pd.Series
            Mean error of every joint over the sequence.

    Raises
    ------
    LengthMismatch
        If the frame or joint counts differ.
    """
    est = _as_points(est, joints)
    truth = _as_points(truth, joints)
    _check_lengths(est, truth)
    err = np.linalg.norm(est[..., :2] - truth[..., :2], axis=-1)
    errors = pd.DataFrame(err, columns=list(joints))
    errors.index.name = 'frame'
    return errors, errors.mean()


def mean_joint_error(est, truth, joints=bm.JOINTS):
    """Mean pixel error over the given joints and all frames."""
    errors, _ = joint_pixel_error(est, truth, joints)
    return float(errors.to_numpy().mean())


def pcp(est, truth, limbs=bm.ARM_LIMBS, thresholds=None, joints=bm.JOINTS):
    r"""
    Probability of correct pose curve.

    Parameters
    ----------
    est : list of FullBodyEstimate or array_like, shape(T,J,>=2)
            Estimated joints.
    truth : array_like, shape(T,J,>=2)
            Ground-truth joints.
    limbs : sequence of (str, str)
            Limbs as joint-name pairs, default the four arm limbs.
    thresholds : array_like, optional
            Ascending fractions of the ground-truth limb length, default 0.05 to 1.0.
    joints : sequence of str
            Joint order of ``est`` and ``truth``.

    Returns
    -------
    curve : PcpCurve
            Fraction of (limb, frame) pairs whose two endpoint errors are both
            at most the threshold times the ground-truth limb length.

    Raises
    ------
    ZeroLengthLimb
        If a ground-truth limb has zero length.
    LengthMismatch
        If the frame counts differ.
    """
    thresholds = PCP_THRESHOLDS if thresholds is None else np.asarray(thresholds, dtype=float)
    est = _as_points(est, joints)
    truth = _as_points(truth, joints)
    _check_lengths(est, truth)
    joints = list(joints)
    endpoint_err = np.linalg.norm(est[..., :2] - truth[..., :2], axis=-1)
    worst = np.empty((truth.shape[0], len(limbs)))
    for k, (a, b) in enumerate(limbs):
        ia, ib = joints.index(a), joints.index(b)
        length = np.linalg.norm(truth[:, ia, :2] - truth[:, ib, :2], axis=-1)
        if np.any(length == 0):
            frame = int(np.flatnonzero(length == 0)[0])
            raise ZeroLengthLimb('limb {}-{} has zero length in frame {}'.format(a, b, frame))
        worst[:, k] = np.maximum(endpoint_err[:, ia], endpoint_err[:, ib]) / length
    # inclusive boundary, tolerant to the rounding of f * L
    correct = worst[None] <= thresholds[:, None, None] * (1 + 1e-12)
    return PcpCurve(thresholds, correct.mean(axis=(1, 2)))


def procrustes_fixed_scale(source, target):
    r"""
    Rigid least-squares alignment of paired 3D points without scaling.

    Parameters
    ----------
    source : array_like, shape(n,3)
            Points to move.
    target : array_like, shape(n,3)
            Reference points, n >= 3.

    Returns
    -------
    alignment : AlignmentResult
            Rotation (det = +1) and translation minimising
            :math:`\sum_i \|R s_i + t - x_i\|^2`, with the residual RMS.

    Raises
    ------
    DegenerateConfiguration
        If fewer than three points are given or they are collinear.

    Notes
    -----
    With centred point sets :math:`S_0, X_0` and the decomposition
    :math:`S_0^T X_0 = U \Sigma V^T` the solution is
    :math:`R = V\,diag(1, 1, \det(VU^T))\,U^T` and :math:`t = \bar{x} - R\bar{s}`.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape != target.shape or source.ndim != 2 or source.shape[1] != 3:
        raise LengthMismatch('point sets of shapes {} and {} cannot be paired'.format(source.shape, target.shape))
    if source.shape[0] < 3:
        raise DegenerateConfiguration('at least three point pairs are needed, got {}'.format(source.shape[0]))
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    s0 = source - mu_s
    t0 = target - mu_t
    for pts in (s0, t0):
        sv = np.linalg.svd(pts, compute_uv=False)
        if sv[0] == 0 or sv[1] <= 1e-10 * sv[0]:
            raise DegenerateConfiguration('alignment points are collinear or coincident')
    u, _, vt = np.linalg.svd(s0.T @ t0)
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    rotation = v @ np.diag([1.0, 1.0, d]) @ u.T
    translation = mu_t - rotation @ mu_s
    residual = source @ rotation.T + translation - target
    rms = float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))
    return AlignmentResult(rotation, translation, rms)


def error_3d(est_states, truth_3d, pm, align_joints=ALIGN_JOINTS, joints=bm.JOINTS):
    r"""
    Per-joint 3D error after a per-frame rigid alignment.

    Parameters
    ----------
    est_states : list of FullBodyEstimate or array_like, shape(T,J,3)
            Estimated (u/lambda, v/lambda, lambda) states.
    truth_3d : SkeletonRecording or array_like, shape(T,J,3)
            Ground-truth world positions in metres.
    pm : ProjectionMatrix
            Camera used to back-project the estimates.
    align_joints : sequence of str
            Joints aligned by :func:`procrustes_fixed_scale`, default head, neck
            and shoulders.
    joints : sequence of str
            Joint order of both inputs.

    Returns
    -------
    errors : pd.DataFrame, shape(T,J)
            Distance in metres per frame and joint.
    means : pd.Series
            Mean error of every joint.

    Raises
    ------
    DegenerateConfiguration
        With the frame index, when the alignment joints of a frame are
        collinear or coincident.
    """
    est = reconstruct.states_to_points3d(_as_points(est_states, joints), pm)
    truth = _as_points(truth_3d, joints)
    _check_lengths(est, truth)
    joints = list(joints)
    idx = [joints.index(j) for j in align_joints]
    err = np.empty(est.shape[:2])
    for t in range(est.shape[0]):
        try:
            alignment = procrustes_fixed_scale(est[t, idx], truth[t, idx])
        except DegenerateConfiguration as e:
            raise with_context(e, 'frame {}'.format(t)) from e
        err[t] = np.linalg.norm(alignment.apply(est[t]) - truth[t], axis=-1)
    errors = pd.DataFrame(err, columns=joints)
    errors.index.name = 'frame'
    return errors, errors.mean()
