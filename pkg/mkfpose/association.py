"""Edge-based validation of the hand association and measurement corruption"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from . import bodymodel as bm
from . import calculate as calc

logger = logging.getLogger(__name__)

KEEP = 'keep'
SWAP = 'swap'


@dataclass(frozen=True)
class EdgeSegment:
    """Linear edge segment: midpoint in pixels, undirected orientation in [0, pi)."""
    mid_x: float
    mid_y: float
    orientation: float

    def __post_init__(self):
        object.__setattr__(self, 'orientation', float(np.mod(self.orientation, np.pi)))

    @property
    def midpoint(self):
        return np.array([self.mid_x, self.mid_y])


@dataclass(frozen=True)
class LimbHypothesis:
    """Estimated limb between two joint image positions."""
    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        start = np.asarray(self.start, dtype=float)[:2]
        end = np.asarray(self.end, dtype=float)[:2]
        if np.allclose(start, end, rtol=0.0, atol=1e-12):
            raise ValueError('limb endpoints must be distinct, got {} twice'.format(start))
        object.__setattr__(self, 'start', start)
        object.__setattr__(self, 'end', end)

    @property
    def midpoint(self):
        return 0.5 * (self.start + self.end)

    @property
    def orientation(self):
        d = self.end - self.start
        return float(np.mod(np.arctan2(d[1], d[0]), np.pi))


@dataclass(frozen=True)
class EdgeSupportParams:
    r"""
    Gaussian edge-support kernel over (orientation, x, y) with diagonal covariance.

    When ``tau`` is omitted it is set to the kernel density at
    :math:`(2\sigma_\theta, 2\sigma_x, 2\sigma_y)`.
    """
    sigma_orientation: float = np.radians(15.0)
    sigma_x: float = 20.0
    sigma_y: float = 20.0
    tau: float = None

    def __post_init__(self):
        if min(self.sigma_orientation, self.sigma_x, self.sigma_y) <= 0:
            raise ValueError('edge support standard deviations must be positive')
        if self.tau is None:
            object.__setattr__(self, 'tau', self.peak * np.exp(-0.5 * 12.0))
        if self.tau <= 0:
            raise ValueError('edge support threshold must be positive, got {}'.format(self.tau))

    @property
    def std(self):
        return np.array([self.sigma_orientation, self.sigma_x, self.sigma_y])

    @property
    def sigma(self):
        return np.diag(self.std ** 2)

    @property
    def peak(self):
        return 1.0 / ((2 * np.pi) ** 1.5 * np.prod(self.std))

    @property
    def mahalanobis_limit(self):
        """Squared Mahalanobis distance at which the density falls to ``tau``."""
        return 2.0 * np.log(self.peak / self.tau)


def _edge_array(edges):
    return np.array([[e.orientation, e.mid_x, e.mid_y] for e in edges], dtype=float).reshape(-1, 3)


def _limb_array(limbs):
    return np.array([[l.orientation, *l.midpoint] for l in limbs], dtype=float).reshape(-1, 3)


def _density(edge_rows, limb_rows, p):
    diff = edge_rows[:, None, :] - limb_rows[None, :, :]
    diff[..., 0] = calc.wrap_half_turn(diff[..., 0])
    maha = np.sum((diff / p.std) ** 2, axis=-1)
    return p.peak * np.exp(-0.5 * maha)


def edge_density(e, l, p):
    r"""Kernel value :math:`\mathcal{N}(x_{edge}|x_{pose}, \Sigma)` of one edge against one limb."""
    return float(_density(_edge_array([e]), _limb_array([l]), p)[0, 0])


def edge_supports(e, l, p=None):
    r"""
    Whether an edge segment supports a limb.

    Parameters
    ----------
    e : EdgeSegment
            Edge segment.
    l : LimbHypothesis
            Limb estimate.
    p : EdgeSupportParams, optional
            Kernel covariance and threshold.

    Returns
    -------
    supports : bool
            :math:`\mathcal{N}(x_{edge}|x_{pose}, \Sigma) > \tau` with the orientation
            difference wrapped to :math:`[-\pi/2, \pi/2)`.
    """
    p = p or EdgeSupportParams()
    return edge_density(e, l, p) > p.tau


def support_matrix(edges, limbs, p=None):
    """Boolean support of every edge (rows) for every limb (columns)."""
    p = p or EdgeSupportParams()
    return _density(_edge_array(edges), _limb_array(limbs), p) > p.tau


def support_count(edges, limbs, p=None):
    r"""
    Number of supporting edges of each limb.

    Parameters
    ----------
    edges : list of EdgeSegment
            Edge segments of the frame.
    limbs : list of LimbHypothesis
            Limb estimates.
    p : EdgeSupportParams, optional
            Kernel covariance and threshold.

    Returns
    -------
    counts : np.ndarray, shape(n_limbs,)
            An edge may support several limbs.

    Notes
    -----
    Candidate edges are first gathered with a k-d tree inside the radius
    :math:`\sqrt{\tau_M}\max(\sigma_x, \sigma_y)`, outside of which the density
    is always below :math:`\tau` (:math:`\tau_M` is the squared Mahalanobis
    distance at which the kernel equals :math:`\tau`).
    """
    p = p or EdgeSupportParams()
    counts = np.zeros(len(limbs), dtype=int)
    if len(edges) == 0 or len(limbs) == 0 or p.mahalanobis_limit <= 0:
        return counts
    edge_rows = _edge_array(edges)
    limb_rows = _limb_array(limbs)
    radius = np.sqrt(p.mahalanobis_limit) * max(p.sigma_x, p.sigma_y)
    candidates = calc.find_neighbors(edge_rows[:, 1:], limb_rows[:, 1:], radius)
    for k, idx in enumerate(candidates):
        if len(idx):
            counts[k] = int(np.sum(_density(edge_rows[idx], limb_rows[k:k + 1], p) > p.tau))
    return counts


def forearm_limbs(estimate):
    """Elbow-to-hand limbs of both sides; a degenerate forearm is returned as None."""
    limbs = []
    for side in bm.SIDES:
        elbow, hand = bm.FOREARMS[side]
        try:
            limbs.append(LimbHypothesis(estimate.joint(elbow), estimate.joint(hand)))
        except ValueError:
            limbs.append(None)
    return limbs


def _forearm_support(estimate, edges, p):
    limbs = [l for l in forearm_limbs(estimate) if l is not None]
    return int(support_count(edges, limbs, p).sum())


def check_hand_swap(estimate, edges, p=None, margin=2):
    r"""
    Decide whether the hands of an estimate are attached to the wrong arms.

    Parameters
    ----------
    estimate : FullBodyEstimate
            Estimate with both elbows and hands.
    edges : list of EdgeSegment
            Edge segments of the frame.
    p : EdgeSupportParams, optional
            Kernel covariance and threshold.
    margin : int
            Extra number of supporting edges the swapped assignment needs.

    Returns
    -------
    decision : str
            ``'swap'`` if the forearms with exchanged hands gather at least
            ``margin`` more (and strictly more) supporting edges than the
            forearms as estimated, ``'keep'`` otherwise.
    """
    p = p or EdgeSupportParams()
    if len(edges) == 0:
        return KEEP
    as_is = _forearm_support(estimate, edges, p)
    swapped = _forearm_support(estimate.swap_hands(), edges, p)
    if swapped > as_is and swapped - as_is >= margin:
        return SWAP
    return KEEP


def correct_hand_swap(frame, reference, edges, p=None, margin=2):
    r"""
    Check the hand measurements of a frame against the elbows of a reference estimate.

    Parameters
    ----------
    frame : MeasurementFrame
            Current measurement.
    reference : FullBodyEstimate
            Estimate supplying the elbow positions, usually the previous frame's.
    edges : list of EdgeSegment
            Edge segments of the current frame.
    p : EdgeSupportParams, optional
            Kernel covariance and threshold.
    margin : int
            See :func:`check_hand_swap`.

    Returns
    -------
    frame : MeasurementFrame
            The frame, with the hands exchanged when the decision is ``'swap'``.
    decision : str
            ``'keep'`` or ``'swap'``; always ``'keep'`` unless both hands are visible.
    """
    if not (frame.is_visible('left_hand') and frame.is_visible('right_hand')) or len(edges) == 0:
        return frame, KEEP
    values = reference.as_states()
    for hand in ('left_hand', 'right_hand'):
        values[bm.JOINTS.index(hand), :2] = frame.points[hand]
    decision = check_hand_swap(bm.FullBodyEstimate(frame.index, values), edges, p, margin)
    if decision == SWAP:
        return frame.swap_hands(), decision
    return frame, decision


def synth_edges(points, limbs=bm.ARM_LIMBS, per_limb=5, position_jitter_px=5.0,
                orientation_jitter=np.radians(5.0), n_clutter=0, image_size=(640, 480), rng=None):
    r"""
    Synthetic edge segments along limbs.

    Parameters
    ----------
    points : dict
            Joint name to image position (u, v) in pixels.
    limbs : sequence of (str, str)
            Joint pairs the edges are generated along.
    per_limb : int
            Number of segments per limb, spread evenly along it.
    position_jitter_px : float
            Standard deviation of the midpoint jitter.
    orientation_jitter : float
            Standard deviation of the orientation jitter in radians.
    n_clutter : int
            Additional segments with uniform midpoints and orientations.
    image_size : (int, int)
            Width and height of the clutter area.
    rng : int or np.random.Generator, optional
            Random stream.

    Returns
    -------
    edges : list of EdgeSegment
    """
    rng = np.random.default_rng(rng)
    edges = []
    fractions = (np.arange(per_limb) + 0.5) / per_limb
    for a, b in limbs:
        start = np.asarray(points[a], dtype=float)[:2]
        end = np.asarray(points[b], dtype=float)[:2]
        d = end - start
        theta = np.arctan2(d[1], d[0])
        mids = start + fractions[:, None] * d + rng.normal(0.0, 1.0, (per_limb, 2)) * position_jitter_px
        angles = theta + rng.normal(0.0, 1.0, per_limb) * orientation_jitter
        edges.extend(EdgeSegment(m[0], m[1], ang) for m, ang in zip(mids, angles))
    if n_clutter:
        mids = rng.uniform(0.0, 1.0, (n_clutter, 2)) * np.asarray(image_size, dtype=float)
        angles = rng.uniform(0.0, np.pi, n_clutter)
        edges.extend(EdgeSegment(m[0], m[1], ang) for m, ang in zip(mids, angles))
    return edges


@dataclass(frozen=True)
class CorruptionModel:
    """Detector failure simulator: pixel noise, hand dropout and persistent hand swaps."""
    noise_sigma_px: float = 0.0
    p_drop: float = 0.0
    p_swap_onset: float = 0.0
    swap_mean_duration: float = 10.0

    def __post_init__(self):
        if self.noise_sigma_px < 0:
            raise ValueError('noise_sigma_px must be non-negative')
        for name in ('p_drop', 'p_swap_onset'):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError('{} must lie in [0, 1], got {}'.format(name, value))
        if self.swap_mean_duration < 1:
            raise ValueError('swap_mean_duration must be at least one frame')

    def to_dict(self):
        return {'noise_sigma_px': self.noise_sigma_px, 'p_drop': self.p_drop,
                'p_swap_onset': self.p_swap_onset, 'swap_mean_duration': self.swap_mean_duration}


def corrupt_measurements(clean, model, rng_seed):
    r"""
    Apply simulated detector failures to a clean measurement sequence.

    Parameters
    ----------
    clean : MeasurementSequence
            Clean measurements.
    model : CorruptionModel
            Failure rates.
    rng_seed : int
            Seed of the corruption.

    Returns
    -------
    corrupted : MeasurementSequence
            Sequence whose provenance gains a ``corruption`` entry with the model,
            the seed, the swapped frame indices and the swap onsets.

    Notes
    -----
    On every frame that is not already swapped a swap starts with probability
    ``p_swap_onset`` and lasts a geometric number of frames of mean
    ``swap_mean_duration``. Visible measurements then receive i.i.d. Gaussian
    noise and each hand is dropped with probability ``p_drop``.
    """
    rng = np.random.default_rng(rng_seed)
    frames = []
    swapped_frames, onsets = [], []
    eligible = 0
    dropped = 0
    swapped_until = -1
    for t, frame in enumerate(clean.frames):
        if t >= swapped_until:
            eligible += 1
            if model.p_swap_onset > 0 and rng.random() < model.p_swap_onset:
                swapped_until = t + int(rng.geometric(1.0 / model.swap_mean_duration))
                onsets.append(frame.index)
        if t < swapped_until:
            frame = frame.swap_hands()
            swapped_frames.append(frame.index)
        points = dict(frame.points)
        visible = dict(frame.visible)
        if model.noise_sigma_px > 0:
            for j in points:
                if visible[j]:
                    points[j] = points[j] + rng.normal(0.0, model.noise_sigma_px, 2)
        if model.p_drop > 0:
            for hand in ('left_hand', 'right_hand'):
                if hand in visible and rng.random() < model.p_drop:
                    dropped += visible[hand]
                    visible[hand] = False
        frames.append(bm.MeasurementFrame(frame.index, points, visible))

    provenance = dict(clean.provenance or {})
    provenance['corruption'] = dict(model.to_dict(), seed=rng_seed, swap_onsets=onsets,
                                    swapped_frames=swapped_frames, eligible_frames=eligible,
                                    dropped_hands=int(dropped))
    logger.info('corrupted %d frames: %d swap onsets, %d swapped frames, %d dropped hands',
                len(frames), len(onsets), len(swapped_frames), dropped)
    return replace(clean, frames=frames, provenance=provenance)
