"""Reconstruction of 3D skeletons from tracked image states"""
import numpy as np

from . import geometry as geo
from .bodymodel import JOINTS
from .dataio import SkeletonRecording
from .errors import DimensionMismatch


def states_to_points3d(states, pm):
    r"""
    Back-project stacked joint states to world coordinates.

    Parameters
    ----------
    states : array_like, shape(T,J,3)
            Rows of :math:`(u/\lambda, v/\lambda, \lambda)`.
    pm : ProjectionMatrix
            Camera of the sequence.

    Returns
    -------
    points : np.ndarray, shape(T,J,3)
            World coordinates in metres.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim != 3 or states.shape[-1] != 3:
        raise DimensionMismatch('states must have shape (T, J, 3), got {}'.format(states.shape))
    flat = geo.backproject_points(pm, states.reshape(-1, 3))
    return flat.reshape(states.shape)


def estimates_to_recording(estimates, pm, frame_rate=30.0):
    """Turn a list of :class:`FullBodyEstimate` into a :class:`SkeletonRecording`."""
    states = np.stack([e.values for e in estimates])
    return SkeletonRecording(JOINTS, states_to_points3d(states, pm), frame_rate,
                             frame_ids=np.array([e.index for e in estimates]))
