"""Upper-body state-space model: state layout, transition and observation densities"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import logsumexp
from tqdm import tqdm

from . import geometry as geo
from . import gaussian as gs
from .errors import (DegenerateProjection, DimensionMismatch, InsufficientData, MissingJoint,
                     NoVisibleJoints, with_context)

logger = logging.getLogger(__name__)

JOINTS = ('head', 'neck',
          'left_shoulder', 'left_elbow', 'left_hand',
          'right_shoulder', 'right_elbow', 'right_hand')
SIDES = ('left', 'right')
TRUNK = ('head', 'neck')
ARM_LIMBS = (('left_shoulder', 'left_elbow'), ('left_elbow', 'left_hand'),
             ('right_shoulder', 'right_elbow'), ('right_elbow', 'right_hand'))
FOREARMS = {'left': ('left_elbow', 'left_hand'), 'right': ('right_elbow', 'right_hand')}
MEASURABLE = ('head', 'neck', 'left_hand', 'right_hand')
LOG_2PI = np.log(2 * np.pi)


def arm_joints(side):
    """Joints of one arm chain: the shared trunk followed by the shoulder, elbow and hand of ``side``."""
    if side not in SIDES:
        raise ValueError('side must be one of {}, got {!r}'.format(SIDES, side))
    return TRUNK + tuple('{}_{}'.format(side, part) for part in ('shoulder', 'elbow', 'hand'))


@dataclass(frozen=True)
class StateLayout:
    """Ordered joints stacked as (u/lambda, v/lambda, lambda) triples."""
    joints: tuple
    side: str = None
    dims_per_joint: int = 3

    def __post_init__(self):
        joints = tuple(self.joints)
        if len(joints) == 0 or len(set(joints)) != len(joints):
            raise ValueError('layout joints must be non-empty and unique, got {}'.format(joints))
        unknown = [j for j in joints if j not in JOINTS]
        if unknown:
            raise MissingJoint('unknown joint {!r} in layout'.format(unknown[0]), joint=unknown[0])
        if self.dims_per_joint != 3:
            raise ValueError('dims_per_joint must be 3, got {}'.format(self.dims_per_joint))
        object.__setattr__(self, 'joints', joints)

    @classmethod
    def arm(cls, side):
        return cls(arm_joints(side), side)

    @property
    def dim(self):
        return self.dims_per_joint * len(self.joints)

    def index(self, joint):
        try:
            return self.joints.index(joint)
        except ValueError:
            raise MissingJoint('joint {!r} is not part of the layout {}'.format(joint, self.joints),
                               joint=joint) from None

    def slot(self, joint):
        start = self.dims_per_joint * self.index(joint)
        return slice(start, start + self.dims_per_joint)

    @property
    def scale_rows(self):
        return np.arange(2, self.dim, self.dims_per_joint)

    def to_dict(self):
        return {'joints': list(self.joints), 'side': self.side, 'dims_per_joint': self.dims_per_joint}

    @classmethod
    def from_dict(cls, payload):
        return cls(tuple(payload['joints']), payload.get('side'), int(payload.get('dims_per_joint', 3)))


@dataclass(frozen=True)
class PoseState:
    layout: StateLayout
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.shape[0] != self.layout.dim:
            raise DimensionMismatch('state of dimension {} for a layout of dimension {}'.format(
                values.shape[0], self.layout.dim))
        if not np.all(np.isfinite(values)):
            raise ValueError('pose state must be finite')
        if np.any(values[self.layout.scale_rows] == 0):
            raise ValueError('pose state has a zero projective scale')
        object.__setattr__(self, 'values', values)

    def joint(self, name):
        return geo.JointImage(*self.values[self.layout.slot(name)])

    def points(self):
        """Joint triples as an array of shape (n_joints, 3)."""
        return self.values.reshape(-1, self.layout.dims_per_joint)


@dataclass(frozen=True)
class TransitionParams:
    """Random-walk covariance Q of one arm chain."""
    q: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        if q.shape[0] != q.shape[1] or np.any(q != np.diag(np.diag(q))) or np.any(np.diag(q) <= 0):
            raise ValueError('Q must be a diagonal matrix with positive entries')
        object.__setattr__(self, 'q', q)

    @classmethod
    def default(cls, layout, pixel_std=4.0, scale_std=0.02):
        diag = np.tile([pixel_std ** 2, pixel_std ** 2, scale_std ** 2], len(layout.joints))
        return cls(np.diag(diag))

    def inflated(self, factor):
        return TransitionParams(self.q * factor)


@dataclass(frozen=True)
class ObservationParams:
    r"""
    Linear Gaussian observation of the (u/lambda, v/lambda) entries of the measured joints.

    ``rows`` holds the state indices picked by H, two per measured joint, and
    ``r`` the diagonal measurement covariance R in pixels squared.
    """
    layout: StateLayout
    joints: tuple
    r: np.ndarray

    def __post_init__(self):
        joints = tuple(self.joints)
        for j in joints:
            self.layout.index(j)
        r = np.asarray(self.r, dtype=float)
        if r.ndim == 1:
            r = np.diag(r)
        m = 2 * len(joints)
        if r.shape != (m, m) or np.any(r != np.diag(np.diag(r))):
            raise ValueError('R must be a diagonal {}x{} matrix'.format(m, m))
        if np.any(np.diag(r) <= 0):
            raise ValueError('measurement noise R must have positive entries')
        object.__setattr__(self, 'joints', joints)
        object.__setattr__(self, 'r', r)

    @classmethod
    def for_layout(cls, layout, measured=MEASURABLE, pixel_std=8.0):
        joints = tuple(j for j in measured if j in layout.joints)
        return cls(layout, joints, np.full(2 * len(joints), pixel_std ** 2))

    @property
    def rows(self):
        return np.array([self.layout.slot(j).start + k for j in self.joints for k in (0, 1)], dtype=int)

    @property
    def H(self):
        h = np.zeros((len(self.rows), self.layout.dim))
        h[np.arange(len(self.rows)), self.rows] = 1.0
        return h

    def select(self, frame):
        r"""
        Visible part of a measurement frame.

        Parameters
        ----------
        frame : MeasurementFrame
                Measurement of the current time step.

        Returns
        -------
        rows : np.ndarray
                State indices of the visible measured coordinates.
        z : np.ndarray
                Measured values in the same order.
        r_diag : np.ndarray
                Measurement variances in the same order.

        Raises
        ------
        NoVisibleJoints
            If none of the measured joints is visible.
        """
        keep = [i for i, j in enumerate(self.joints) if frame.is_visible(j)]
        if not keep:
            raise NoVisibleJoints('frame {} has no visible measured joint'.format(frame.index))
        rows = self.rows.reshape(-1, 2)[keep].ravel()
        z = np.concatenate([frame.points[self.joints[i]] for i in keep])
        r_diag = np.diag(self.r).reshape(-1, 2)[keep].ravel()
        return rows, z, r_diag


@dataclass(frozen=True)
class MeasurementFrame:
    """Image positions (u/lambda, v/lambda) of the measured joints at one time step."""
    index: int
    points: dict
    visible: dict

    def __post_init__(self):
        points = {j: np.asarray(p, dtype=float).reshape(2) for j, p in self.points.items()}
        visible = {j: bool(self.visible.get(j, False)) for j in points}
        for j in points:
            if j not in JOINTS:
                raise MissingJoint('unknown joint {!r} in frame {}'.format(j, self.index), joint=j)
            if visible[j] and not np.all(np.isfinite(points[j])):
                raise ValueError('visible joint {!r} of frame {} is not finite'.format(j, self.index))
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'visible', visible)

    def is_visible(self, joint):
        return self.visible.get(joint, False)

    @property
    def any_visible(self):
        return any(self.visible.values())

    def swap_hands(self):
        """Copy of the frame with the left and right hand measurements exchanged."""
        mapping = {'left_hand': 'right_hand', 'right_hand': 'left_hand'}
        points = {mapping.get(j, j): p for j, p in self.points.items()}
        visible = {mapping.get(j, j): v for j, v in self.visible.items()}
        return MeasurementFrame(self.index, points, visible)


@dataclass(frozen=True)
class FullBodyEstimate:
    """Per-frame estimate of the 8 upper-body joints as (u/lambda, v/lambda, lambda) rows."""
    index: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(JOINTS), 3):
            raise DimensionMismatch('full-body estimate must have shape {}, got {}'.format(
                (len(JOINTS), 3), values.shape))
        object.__setattr__(self, 'values', values)

    def joint(self, name):
        return self.values[JOINTS.index(name)]

    def image_points(self):
        return self.values[:, :2].copy()

    def as_states(self):
        return self.values.copy()

    def swap_hands(self):
        values = self.values.copy()
        left, right = JOINTS.index('left_hand'), JOINTS.index('right_hand')
        values[[left, right]] = values[[right, left]]
        return FullBodyEstimate(self.index, values)


class PriorTransition:
    r"""
    Prior-modulated random walk of one arm chain, batched over previous states.

    For the prior :math:`\Phi = \sum_i \pi_i \mathcal{N}(\mu_i, \Sigma_i)` and the
    random-walk covariance Q the transition density is

    .. math::

        p(x_t|x_{t-1}) = \frac{\sum_i \pi_i c_i \mathcal{N}(x_t|\mu_c^i, \Sigma_c^i)}
                              {\sum_i \pi_i c_i},\quad
        c_i = \mathcal{N}(x_{t-1}|\mu_i, Q + \Sigma_i)

    with :math:`\mu_c^i = F_i x_{t-1} + B_i \mu_i` and
    :math:`\Sigma_c^i = (Q^{-1} + \Sigma_i^{-1})^{-1}`.

    Parameters
    ----------
    prior : GaussianMixture
            Pose prior of the chain.
    q : array_like, shape(d,d)
            Random-walk covariance.
    """

    def __init__(self, prior, q):
        self.prior = prior
        self.q = np.asarray(q, dtype=float)
        self.dynamics = [gs.component_dynamics(comp, self.q) for comp in prior.components]
        self.f = np.stack([dyn.f for dyn in self.dynamics])
        self.b = np.stack([dyn.b for dyn in self.dynamics])
        self.b_mu = np.stack([dyn.b_mu for dyn in self.dynamics])
        self.cov = np.stack([dyn.cov for dyn in self.dynamics])
        self.chol = np.stack([dyn.chol for dyn in self.dynamics])
        with np.errstate(divide='ignore'):
            self.log_weights = np.log(prior.weights)

    @property
    def n_components(self):
        return self.prior.n_components

    @property
    def dim(self):
        return self.prior.dim

    def log_component_evidence(self, x_prev):
        """``log(pi_i c_i(x_prev))`` for every previous state and component, shape (n, N)."""
        x_prev = np.atleast_2d(x_prev)
        out = np.empty((x_prev.shape[0], self.n_components))
        for i, dyn in enumerate(self.dynamics):
            out[:, i] = self.log_weights[i] + gs.gauss_logpdf(dyn.evidence, x_prev)
        return out

    def log_evidence(self, x_prev):
        r"""Log of :math:`\sum_i \pi_i c_i(x_{prev})`, shape (n,)."""
        return logsumexp(self.log_component_evidence(x_prev), axis=1)

    def conditional_mean(self, x_prev, i):
        return np.atleast_2d(x_prev) @ self.f[i].T + self.b_mu[i]

    def logpdf(self, x_prev, x):
        r"""
        Log transition density for paired rows of previous and current states.

        Parameters
        ----------
        x_prev : array_like, shape(n,d)
        x : array_like, shape(n,d)

        Returns
        -------
        logp : np.ndarray, shape(n,)
        """
        x_prev = np.atleast_2d(x_prev)
        x = np.atleast_2d(x)
        log_ce = self.log_component_evidence(x_prev)
        terms = np.empty_like(log_ce)
        for i in range(self.n_components):
            mean = self.conditional_mean(x_prev, i)
            diff = x - mean
            soln = scipy.linalg.solve_triangular(self.chol[i], diff.T, lower=True, check_finite=False)
            terms[:, i] = log_ce[:, i] - 0.5 * (self.dim * LOG_2PI + np.sum(soln ** 2, axis=0)) \
                - np.sum(np.log(np.diag(self.chol[i])))
        return logsumexp(terms, axis=1) - logsumexp(log_ce, axis=1)

    def sample(self, x_prev, rng):
        r"""
        Draw one successor per previous state from the mixture transition.

        A candidate is drawn from every component for every previous state, then
        the component of each state is selected with probabilities
        :math:`\propto \pi_i c_i(x_{prev})`; every state consumes the same block
        of random numbers whatever component is chosen.

        Parameters
        ----------
        x_prev : np.ndarray, shape(n,d)
        rng : np.random.Generator

        Returns
        -------
        x : np.ndarray, shape(n,d)
        components : np.ndarray, shape(n,)
                Selected component of every state.
        """
        x_prev = np.atleast_2d(x_prev)
        n = x_prev.shape[0]
        noise = rng.standard_normal((self.n_components, n, self.dim))
        u = rng.random(n)
        log_ce = self.log_component_evidence(x_prev)
        probs = np.exp(log_ce - logsumexp(log_ce, axis=1, keepdims=True))
        cdf = np.cumsum(probs, axis=1)
        components = np.minimum((cdf < (u * cdf[:, -1])[:, None]).sum(axis=1), self.n_components - 1)
        candidates = np.empty((self.n_components, n, self.dim))
        for i in range(self.n_components):
            candidates[i] = self.conditional_mean(x_prev, i) + noise[i] @ self.chol[i].T
        return candidates[components, np.arange(n)], components


@dataclass
class ChainModel:
    """State-space model of one arm chain."""
    layout: StateLayout
    prior: gs.GaussianMixture
    transition: TransitionParams
    observation: ObservationParams
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.prior.dim != self.layout.dim:
            raise DimensionMismatch('prior of dimension {} does not match the {} layout of dimension {}'.format(
                self.prior.dim, self.layout.side or 'state', self.layout.dim))
        if self.transition.q.shape != (self.layout.dim, self.layout.dim):
            raise DimensionMismatch('Q of shape {} does not match the layout dimension {}'.format(
                self.transition.q.shape, self.layout.dim))
        if self.observation.layout != self.layout:
            raise DimensionMismatch('observation and chain use different layouts')

    @classmethod
    def default(cls, prior, layout, q_pixel_std=4.0, q_scale_std=0.02, r_pixel_std=8.0, measured=MEASURABLE):
        return cls(layout, prior,
                   TransitionParams.default(layout, q_pixel_std, q_scale_std),
                   ObservationParams.for_layout(layout, measured, r_pixel_std))

    @property
    def side(self):
        return self.layout.side

    def prior_transition(self, factor=1.0):
        """Cached :class:`PriorTransition` for Q scaled by ``factor``."""
        key = float(factor)
        if key not in self._cache:
            self._cache[key] = PriorTransition(self.prior, self.transition.q * key)
        return self._cache[key]


def transition_logpdf(prior, tp, x_prev, x):
    r"""
    Log-density of the prior-modulated transition.

    Parameters
    ----------
    prior : GaussianMixture
            Pose prior :math:`\Phi`.
    tp : TransitionParams
            Random-walk covariance Q.
    x_prev : PoseState or array_like, shape(d,)
            Previous state.
    x : PoseState or array_like, shape(d,)
            Current state.

    Returns
    -------
    logp : float
            .. math::

                \log \frac{\sum_i \pi_i c_i \mathcal{N}(x|\mu_c^i,\Sigma_c^i)}{\sum_i \pi_i c_i}

    Raises
    ------
    DimensionMismatch
        If the states do not have the prior dimension.
    """
    x_prev = _values(x_prev)
    x = _values(x)
    for v in (x_prev, x):
        if v.shape[0] != prior.dim:
            raise DimensionMismatch('state of dimension {} for a prior of dimension {}'.format(v.shape[0], prior.dim))
    with np.errstate(divide='ignore'):
        log_w = np.log(prior.weights)
    num = np.empty(prior.n_components)
    den = np.empty(prior.n_components)
    for i, comp in enumerate(prior.components):
        prod = gs.gaussian_product(comp, x_prev, tp.q)
        den[i] = log_w[i] + prod.log_scale
        num[i] = den[i] + gs.gauss_logpdf(prod.product, x)
    return float(logsumexp(num) - logsumexp(den))


def transition_conditional(prior_component, tp, x_prev):
    r"""
    Transition conditioned on the mixture indicator.

    Parameters
    ----------
    prior_component : Gaussian
            Component :math:`\mathcal{N}(\mu_i, \Sigma_i)` selected by the indicator.
    tp : TransitionParams
            Random-walk covariance Q.
    x_prev : PoseState or array_like, shape(d,)
            Previous state.

    Returns
    -------
    g : Gaussian
            :math:`\mathcal{N}((\Sigma_i^{-1}+Q^{-1})^{-1}(\Sigma_i^{-1}\mu_i + Q^{-1}x_{t-1}), (\Sigma_i^{-1}+Q^{-1})^{-1})`
    """
    return gs.gaussian_product(prior_component, _values(x_prev), tp.q).product


def observation_logpdf(op, x, z):
    r"""
    Log-likelihood of a measurement frame given a state.

    Parameters
    ----------
    op : ObservationParams
            Measurement model H, R.
    x : PoseState or array_like, shape(d,)
            State.
    z : MeasurementFrame
            Measurement; invisible joints drop their rows of H and R.

    Returns
    -------
    logp : float
            :math:`\log \mathcal{N}(z|Hx, R)` over the visible rows.

    Raises
    ------
    NoVisibleJoints
        If every measured joint is invisible.
    """
    rows, zv, r_diag = op.select(z)
    res = zv - _values(x)[rows]
    return float(-0.5 * np.sum(LOG_2PI + np.log(r_diag) + res ** 2 / r_diag))


def observation_loglik(op, states, z):
    """Batched :func:`observation_logpdf` over states of shape (n, d); zero when nothing is visible."""
    states = np.atleast_2d(states)
    try:
        rows, zv, r_diag = op.select(z)
    except NoVisibleJoints:
        return np.zeros(states.shape[0])
    res = zv - states[:, rows]
    return -0.5 * (np.sum(LOG_2PI + np.log(r_diag)) + np.sum(res ** 2 / r_diag, axis=1))


def _values(x):
    return x.values if isinstance(x, PoseState) else np.asarray(x, dtype=float).ravel()


def stack_states(states):
    """Stack a list of :class:`PoseState` into an (n, d) array."""
    if len(states) == 0:
        raise InsufficientData('no states to stack')
    return np.stack([s.values for s in states])


def _chain_states(uvl, joints, layout):
    idx = [joints.index(j) for j in layout.joints]
    return uvl[:, idx, :].reshape(uvl.shape[0], -1)


def generate_training_set(skeleton3d, intr, n_views, limits=None, rng_seed=0, layouts=None, progress=False):
    r"""
    Project a 3D skeleton recording through random viewpoints into arm-chain states.

    Parameters
    ----------
    skeleton3d : SkeletonRecording
            Recording with ``joints`` and ``positions`` of shape (T, J, 3) in metres.
    intr : CameraIntrinsics
            Intrinsics of the virtual camera.
    n_views : int
            Number of viewpoints sampled for the whole recording.
    limits : ViewpointLimits, optional
            Box the viewpoints are drawn from.
    rng_seed : int or np.random.Generator
            Seed of the viewpoint draws.
    layouts : dict, optional
            Side to :class:`StateLayout`, default both arm chains.
    progress : bool
            Show a progress bar over viewpoints.

    Returns
    -------
    states : dict
            Side to list of :class:`PoseState`, ``T * n_views`` states per side
            ordered view by view.

    Raises
    ------
    DegenerateProjection
        With the frame and view index of the first joint on the camera plane.

    Notes
    -----
    Viewpoints turn about the mean neck position of the recording so that the
    body stays in view; a zero viewpoint keeps the camera ``K [I | 0]``.
    """
    positions = np.asarray(skeleton3d.positions, dtype=float)
    joints = tuple(skeleton3d.joints)
    if positions.shape[0] == 0:
        raise InsufficientData('skeleton recording has no frames')
    if n_views < 1:
        raise ValueError('n_views must be at least one, got {}'.format(n_views))
    if layouts is None:
        layouts = {side: StateLayout.arm(side) for side in SIDES}
    rng = np.random.default_rng(rng_seed)
    pivot = positions[:, joints.index('neck')].mean(axis=0) if 'neck' in joints else positions.mean(axis=(0, 1))
    n_frames, n_joints = positions.shape[:2]

    out = {side: [] for side in layouts}
    for view in tqdm(range(n_views), desc='viewpoints', disable=not progress):
        pose = geo.sample_viewpoint(rng, limits)
        pm = geo.build_projection_about(intr, pose, pivot)
        try:
            uvl = geo.project_points(pm, positions.reshape(-1, 3)).reshape(n_frames, n_joints, 3)
        except DegenerateProjection as err:
            for frame in range(n_frames):
                try:
                    geo.project_points(pm, positions[frame])
                except DegenerateProjection as frame_err:
                    raise with_context(frame_err, 'frame {}, view {}'.format(frame, view)) from err
            raise
        for side, layout in layouts.items():
            chain = _chain_states(uvl, joints, layout)
            out[side].extend(PoseState(layout, row) for row in chain)
    logger.info('generated %d training states per side from %d frames and %d views',
                n_frames * n_views, n_frames, n_views)
    return out


def merge_arm_estimates(left, right, index=0):
    r"""
    Merge the two arm-chain estimates into a full-body estimate.

    Parameters
    ----------
    left : PoseState
            Estimate of the left chain.
    right : PoseState
            Estimate of the right chain.
    index : int
            Frame index of the estimate.

    Returns
    -------
    estimate : FullBodyEstimate
            Head and neck are the average of both chains, the arm joints come
            from their own chain.
    """
    values = np.empty((len(JOINTS), 3))
    for k, name in enumerate(JOINTS):
        sources = [s for s in (left, right) if name in s.layout.joints]
        if not sources:
            raise MissingJoint('joint {!r} is estimated by neither chain'.format(name), joint=name)
        values[k] = np.mean([s.values[s.layout.slot(name)] for s in sources], axis=0)
    return FullBodyEstimate(index, values)
