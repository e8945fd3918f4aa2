"""Particle filters and mixture Kalman filters for arm-chain tracking"""
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import association as assoc
from . import bodymodel as bm
from . import calculate as calc
from . import gaussian as gs
from .errors import (AllWeightsZero, ConfigError, InsufficientData, MkfPoseError, SingularInnovation,
                     with_context)

logger = logging.getLogger(__name__)

PF_VARIANTS = ('pf-gmm', 'pf-simple-scaled', 'pf-simple-unscaled')
MKF_VARIANTS = ('mkf-sampled', 'mkf-fixed')
VARIANTS = PF_VARIANTS + MKF_VARIANTS
LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class AnnealingSchedule:
    r"""
    Linear decay of the random-walk inflation over a burn-in period.

    The factor applied to Q at step t is
    :math:`1 + (\kappa - 1)(1 - t/T_b)` for :math:`t < T_b` and 1 afterwards.
    """
    inflation: float = 100.0
    burn_in: int = 50

    def __post_init__(self):
        if self.inflation < 1 or self.burn_in < 0:
            raise ConfigError('annealing needs inflation >= 1 and burn_in >= 0, got {} and {}'.format(
                self.inflation, self.burn_in))

    def factor(self, t):
        if t >= self.burn_in:
            return 1.0
        return 1.0 + (self.inflation - 1.0) * (1.0 - t / self.burn_in)


@dataclass(frozen=True)
class TrackerConfig:
    variant: str = 'mkf-fixed'
    n_particles: int = 1000
    n_tracks: int = None
    resample_threshold: float = 0.5
    epsilon_floor: float = None
    annealing: AnnealingSchedule = field(default_factory=AnnealingSchedule)
    anneal_gmm: bool = False
    gmm_noise_scale: float = 1.0
    hand_swap_margin: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError('unknown tracker variant {!r}, expected one of {}'.format(self.variant, VARIANTS))
        if not 0 < self.resample_threshold <= 1:
            raise ConfigError('resample_threshold must lie in (0, 1], got {}'.format(self.resample_threshold))
        if self.epsilon_floor is not None and self.epsilon_floor < 0:
            raise ConfigError('epsilon_floor must be non-negative, got {}'.format(self.epsilon_floor))
        if self.n_particles < 1 or (self.n_tracks is not None and self.n_tracks < 1):
            raise ConfigError('particle and track counts must be positive')
        if self.gmm_noise_scale <= 0:
            raise ConfigError('gmm_noise_scale must be positive, got {}'.format(self.gmm_noise_scale))

    @property
    def is_particle_filter(self):
        return self.variant in PF_VARIANTS

    def tracks_for(self, n_components):
        """Track count M: N for mkf-fixed, ``n_tracks`` or 3N for mkf-sampled."""
        if self.variant == 'mkf-fixed':
            return n_components
        return self.n_tracks if self.n_tracks is not None else 3 * n_components

    def epsilon_for(self, n_components):
        return self.epsilon_floor if self.epsilon_floor is not None else 1e-3 / n_components

    def q_factor(self, t):
        """Random-walk inflation of the particle filters at step ``t``."""
        if self.variant == 'pf-gmm':
            factor = self.gmm_noise_scale
            return factor * self.annealing.factor(t) if self.anneal_gmm else factor
        return self.annealing.factor(t)


@dataclass(frozen=True)
class ParticleSet:
    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        if particles.shape[0] < 1 or weights.shape != (particles.shape[0],):
            raise ValueError('{} weights for {} particles'.format(weights.shape, particles.shape[0]))
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError('particle weights must be non-negative and sum to one')
        object.__setattr__(self, 'particles', particles)
        object.__setattr__(self, 'weights', weights / weights.sum())

    def __len__(self):
        return self.particles.shape[0]


@dataclass(frozen=True)
class MkfTrack:
    indicator: int
    mean: np.ndarray
    cov: np.ndarray
    weight: float


@dataclass(frozen=True)
class TrackBank:
    """Stacked mixture Kalman filter tracks: indicators (M,), means (M,d), covs (M,d,d), weights (M,)."""
    indicators: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        m = len(self.indicators)
        if m < 1 or self.means.shape[0] != m or self.covs.shape[0] != m or self.weights.shape != (m,):
            raise ValueError('inconsistent track bank of {} tracks'.format(m))
        if np.any(self.weights < 0):
            raise ValueError('track weights must be non-negative')

    def __len__(self):
        return len(self.indicators)

    def __iter__(self):
        for i in range(len(self)):
            yield MkfTrack(int(self.indicators[i]), self.means[i], self.covs[i], float(self.weights[i]))

    @classmethod
    def from_tracks(cls, tracks):
        tracks = list(tracks)
        return cls(np.array([t.indicator for t in tracks], dtype=int),
                   np.stack([np.asarray(t.mean, dtype=float) for t in tracks]),
                   np.stack([np.asarray(t.cov, dtype=float) for t in tracks]),
                   np.array([t.weight for t in tracks], dtype=float))

    def take(self, idx):
        return TrackBank(self.indicators[idx], self.means[idx], self.covs[idx],
                         np.full(len(idx), 1.0 / len(idx)))


@dataclass(frozen=True)
class StepInfo:
    neff: float
    resampled: bool


@dataclass
class TrackingResult:
    """Per-frame full-body estimates with tracker diagnostics."""
    estimates: list
    diagnostics: pd.DataFrame
    variant: str = None

    @property
    def mean_iter_time(self):
        return float(self.diagnostics['iter_time_seconds'].mean())

    def estimates_frame(self):
        """Estimates as a DataFrame: one row per frame, ``<joint>_u``, ``<joint>_v``, ``<joint>_lambda`` columns."""
        columns = ['{}_{}'.format(j, c) for j in bm.JOINTS for c in ('u', 'v', 'lambda')]
        data = np.stack([e.values.ravel() for e in self.estimates])
        frame = pd.DataFrame(data, columns=columns)
        frame.insert(0, 'frame', [e.index for e in self.estimates])
        return frame

    def to_frame(self):
        return self.estimates_frame().merge(self.diagnostics, on='frame')


def effective_particles(weights):
    r"""
    Effective number of particles.

    Parameters
    ----------
    weights : array_like
            Normalised importance weights.

    Returns
    -------
    neff : float
            :math:`\hat{N}_{eff} = 1 / \sum_k (w^k)^2`
    """
    weights = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(weights ** 2))


def systematic_indices(weights, rng):
    r"""
    Systematic resampling indices.

    Parameters
    ----------
    weights : array_like, shape(n,)
            Normalised weights.
    rng : np.random.Generator
            Source of the single uniform offset.

    Returns
    -------
    idx : np.ndarray, shape(n,)
            Ancestor indices; particle k is copied either
            :math:`\lfloor n w_k \rfloor` or :math:`\lceil n w_k \rceil` times.
    """
    weights = np.asarray(weights, dtype=float)
    n = weights.shape[0]
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.minimum(np.searchsorted(cumulative, positions, side='right'), n - 1)


def resample(ps, rng_seed):
    r"""
    Systematic resampling of a particle set.

    Parameters
    ----------
    ps : ParticleSet
            Weighted particles.
    rng_seed : int or np.random.Generator
            Seed of the resampling offset.

    Returns
    -------
    resampled : ParticleSet
            Copies of the particles with uniform weights; the expected number of
            copies of particle k is :math:`N_s w_k`.
    """
    rng = np.random.default_rng(rng_seed)
    idx = systematic_indices(ps.weights, rng)
    n = len(ps)
    return ParticleSet(ps.particles[idx], np.full(n, 1.0 / n))


def _normalise(log_w, what):
    w, _ = calc.log_normalize(log_w)
    if not np.all(np.isfinite(w)):
        raise AllWeightsZero('all {0} weights vanished: the measurement is incompatible with every {0}'.format(what))
    return w


def init_particles(model, cfg, rng):
    """Particles drawn from the pose prior with uniform weights."""
    n = cfg.n_particles
    return ParticleSet(gs.gmm_sample(model.prior, n, rng), np.full(n, 1.0 / n))


def pf_step(ps, model, z, variant=None, cfg=None, t=0, rng=None):
    r"""
    One sampling importance resampling step of an arm-chain particle filter.

    Parameters
    ----------
    ps : ParticleSet
            Particles of the previous step.
    model : ChainModel
            Prior, random walk and observation model of the chain.
    z : MeasurementFrame
            Current measurement.
    variant : str, optional
            ``pf-gmm``, ``pf-simple-scaled`` or ``pf-simple-unscaled``; default ``cfg.variant``.
    cfg : TrackerConfig
            Resampling threshold and annealing.
    t : int
            Step counter, drives the annealing schedule.
    rng : np.random.Generator, optional
            Random stream of this step, default derived from ``cfg.rng_seed`` and ``t``.

    Returns
    -------
    ps : ParticleSet
            Updated (and possibly resampled) particles.
    info : StepInfo
            Effective particle count before resampling and the resampling flag.

    Raises
    ------
    AllWeightsZero
        If every particle weight vanishes.

    Notes
    -----
    ``pf-gmm`` proposes from the full mixture transition and weights by the
    observation likelihood alone. The simple samplers propose from the random
    walk :math:`\mathcal{N}(x_t|x_{t-1}, Q)` and weight by

    .. math::

        w_t \propto w_{t-1} \frac{p(z_t|x_t)\,\Phi(x_t)}{\sum_i \pi_i c_i(x_{t-1})}

    where ``pf-simple-unscaled`` drops the denominator.
    """
    cfg = cfg or TrackerConfig(variant=variant or 'pf-gmm')
    if variant is not None and variant != cfg.variant:
        cfg = replace(cfg, variant=variant)
    variant = cfg.variant
    if variant not in PF_VARIANTS:
        raise ConfigError('pf_step cannot run variant {!r}'.format(variant))
    if rng is None:
        rng = calc.rng_stream(cfg.rng_seed, 0, t + 1)
    factor = cfg.q_factor(t)
    x_prev = ps.particles
    with np.errstate(divide='ignore'):
        log_w = np.log(ps.weights)

    if variant == 'pf-gmm':
        x, _ = model.prior_transition(factor).sample(x_prev, rng)
    else:
        std = np.sqrt(np.diag(model.transition.q) * factor)
        x = x_prev + rng.standard_normal(x_prev.shape) * std
        log_w = log_w + gs.gmm_logpdf(model.prior, x)
        if variant == 'pf-simple-scaled':
            log_w = log_w - model.prior_transition(factor).log_evidence(x_prev)
    log_w = log_w + bm.observation_loglik(model.observation, x, z)

    w = _normalise(log_w, 'particle')
    neff = effective_particles(w)
    resampled = neff < cfg.resample_threshold * len(w)
    out = ParticleSet(x, w)
    if resampled:
        logger.debug('step %d: resampling %d particles (neff %.1f)', t, len(w), neff)
        out = resample(out, rng)
    return out, StepInfo(neff, resampled)


def init_tracks(model, cfg, rng):
    r"""
    Initial mixture Kalman filter tracks.

    ``mkf-fixed`` starts one track per component at :math:`(\mu_j, \Sigma_j)`
    weighted by :math:`\pi_j`; ``mkf-sampled`` draws :math:`\lambda_0 \sim \pi`
    for each of its M tracks and weights them uniformly.
    """
    prior = model.prior
    n = prior.n_components
    if cfg.variant == 'mkf-fixed':
        idx = np.arange(n)
        weights = prior.weights.copy()
    else:
        m = cfg.tracks_for(n)
        idx = rng.choice(n, size=m, p=prior.weights)
        weights = np.full(m, 1.0 / m)
    return TrackBank(idx, prior.means[idx], prior.covs[idx], weights)


def predict_bank(bank, transition, indicators):
    """Batched Kalman prediction of every track with its own component."""
    f = transition.f[indicators]
    means = np.einsum('mij,mj->mi', f, bank.means) + transition.b_mu[indicators]
    covs = calc.symmetrize(f @ bank.covs @ np.swapaxes(f, -1, -2) + transition.cov[indicators])
    return means, covs


def kalman_update(means, covs, rows, z, r_diag):
    r"""
    Batched Kalman measurement update with a row-selection observation matrix.

    Parameters
    ----------
    means : np.ndarray, shape(M,d)
            Predicted means :math:`\hat{x}`.
    covs : np.ndarray, shape(M,d,d)
            Predicted covariances :math:`\hat{P}`.
    rows : array_like, shape(m,)
            State indices observed by H.
    z : array_like, shape(m,)
            Measurement.
    r_diag : array_like, shape(m,)
            Diagonal of R.

    Returns
    -------
    means : np.ndarray, shape(M,d)
            :math:`\tilde{x} = \hat{x} + K y`
    covs : np.ndarray, shape(M,d,d)
            :math:`\tilde{P} = (I - KH)\hat{P}`
    log_marginal : np.ndarray, shape(M,)
            :math:`\log \mathcal{N}(z|H\hat{x}, H\hat{P}H^T + R)`

    Raises
    ------
    SingularInnovation
        If an innovation covariance S is not positive definite.

    Notes
    -----
    With :math:`y = z - H\hat{x}`, :math:`S = H\hat{P}H^T + R` and
    :math:`K = \hat{P}H^T S^{-1}`.
    """
    rows = np.asarray(rows, dtype=int)
    z = np.asarray(z, dtype=float)
    hp = covs[:, rows, :]
    s = hp[:, :, rows] + np.diag(np.asarray(r_diag, dtype=float))
    y = z - means[:, rows]
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as err:
        raise SingularInnovation('innovation covariance is not positive definite') from err
    # S^-1 H P, transposed gives K since S and P are symmetric
    s_inv_hp = np.linalg.solve(s, hp)
    k = np.swapaxes(s_inv_hp, -1, -2)
    means = means + np.einsum('mdk,mk->md', k, y)
    covs = calc.symmetrize(covs - k @ hp)
    s_inv_y = np.linalg.solve(s, y[..., None])[..., 0]
    log_det = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    log_marginal = -0.5 * (len(rows) * LOG_2PI + log_det + np.sum(y * s_inv_y, axis=-1))
    return means, covs, log_marginal


def mkf_predict(track, component, tp):
    r"""
    Kalman prediction of one track under a prior component.

    Parameters
    ----------
    track : MkfTrack
            Updated track of the previous step.
    component : Gaussian
            Prior component of the track's indicator.
    tp : TransitionParams
            Random-walk covariance Q.

    Returns
    -------
    mean : np.ndarray, shape(d,)
            :math:`\hat{x} = F\tilde{x} + B\mu`
    cov : np.ndarray, shape(d,d)
            :math:`\hat{P} = F\tilde{P}F^T + (Q^{-1}+\Sigma^{-1})^{-1}`

    Notes
    -----
    :math:`F = (Q^{-1}+\Sigma^{-1})^{-1}Q^{-1}` and
    :math:`B = (Q^{-1}+\Sigma^{-1})^{-1}\Sigma^{-1}`, so that :math:`F + B = I`.
    """
    dyn = gs.component_dynamics(component, tp.q)
    mean = dyn.f @ np.asarray(track.mean, dtype=float) + dyn.b_mu
    cov = calc.symmetrize(dyn.f @ np.asarray(track.cov, dtype=float) @ dyn.f.T + dyn.cov)
    return mean, cov


def mkf_update(predicted, op, z):
    """Kalman update of one predicted ``(mean, cov)`` pair, see :func:`kalman_update`."""
    mean, cov = predicted
    rows, zv, r_diag = op.select(z)
    means, covs, log_marginal = kalman_update(np.asarray(mean, dtype=float)[None],
                                              np.asarray(cov, dtype=float)[None], rows, zv, r_diag)
    return means[0], covs[0], float(log_marginal[0])


def mkf_step(bank, model, z, cfg, t=0, rng=None):
    r"""
    One step of the mixture Kalman filter over a bank of indicator trajectories.

    Parameters
    ----------
    bank : TrackBank or list of MkfTrack
            Tracks of the previous step.
    model : ChainModel
            Prior, random walk and observation model of the chain.
    z : MeasurementFrame
            Current measurement; without visible joints the tracks are only predicted.
    cfg : TrackerConfig
            ``mkf-sampled`` or ``mkf-fixed`` with its threshold and floor.
    t : int
            Step counter.
    rng : np.random.Generator, optional
            Random stream of this step.

    Returns
    -------
    bank : TrackBank
            Updated tracks.
    info : StepInfo
            Effective track count before resampling and the resampling flag.

    Raises
    ------
    AllWeightsZero
        If every track weight vanishes.

    Notes
    -----
    ``mkf-sampled`` draws :math:`\lambda_t \sim \pi` for every track and sets
    :math:`w_t \propto w_{t-1} p(z_t|\lambda_{1:t}, z_{1:t-1})`, resampling the
    tracks when the effective count drops below the threshold.
    ``mkf-fixed`` keeps :math:`\lambda_t^j = j` and sets
    :math:`w_t \propto \pi_j\, w_{t-1} p(z_t|\lambda_{1:t}, z_{1:t-1})`, then adds
    the uniform floor :math:`\epsilon` and renormalises.
    """
    if cfg.variant not in MKF_VARIANTS:
        raise ConfigError('mkf_step cannot run variant {!r}'.format(cfg.variant))
    if not isinstance(bank, TrackBank):
        bank = TrackBank.from_tracks(bank)
    if rng is None:
        rng = calc.rng_stream(cfg.rng_seed, 0, t + 1)
    transition = model.prior_transition()
    prior = model.prior
    m = len(bank)

    if cfg.variant == 'mkf-sampled':
        indicators = rng.choice(prior.n_components, size=m, p=prior.weights)
    else:
        indicators = bank.indicators
    means, covs = predict_bank(bank, transition, indicators)

    with np.errstate(divide='ignore'):
        log_w = np.log(bank.weights)
    if any(z.is_visible(j) for j in model.observation.joints):
        rows, zv, r_diag = model.observation.select(z)
        means, covs, log_marginal = kalman_update(means, covs, rows, zv, r_diag)
        log_w = log_w + log_marginal
    if cfg.variant == 'mkf-fixed':
        with np.errstate(divide='ignore'):
            log_w = log_w + np.log(prior.weights[indicators])

    w = _normalise(log_w, 'track')
    resampled = False
    if cfg.variant == 'mkf-fixed':
        eps = cfg.epsilon_for(prior.n_components)
        w = (w + eps) / (1.0 + m * eps)
        neff = effective_particles(w)
        out = TrackBank(indicators, means, covs, w)
    else:
        neff = effective_particles(w)
        out = TrackBank(indicators, means, covs, w)
        if neff < cfg.resample_threshold * m:
            logger.debug('step %d: resampling %d tracks (neff %.1f)', t, m, neff)
            out = out.take(systematic_indices(w, rng))
            resampled = True
    return out, StepInfo(neff, resampled)


def point_estimate(state, layout=None):
    r"""
    Posterior mean of a particle set or a bank of tracks.

    Parameters
    ----------
    state : ParticleSet, TrackBank or list of MkfTrack
            Weighted particles or tracks.
    layout : StateLayout, optional
            When given the estimate is returned as a :class:`PoseState`.

    Returns
    -------
    estimate : np.ndarray or PoseState
            :math:`\bar{x}_t = \sum_j w^j \tilde{x}^j / \sum_j w^j`
    """
    if isinstance(state, ParticleSet):
        points, weights = state.particles, state.weights
    else:
        if not isinstance(state, TrackBank):
            state = TrackBank.from_tracks(state)
        points, weights = state.means, state.weights
    mean = weights @ points / weights.sum()
    return bm.PoseState(layout, mean) if layout is not None else mean


def init_state(model, cfg, rng):
    if cfg.is_particle_filter:
        return init_particles(model, cfg, rng)
    return init_tracks(model, cfg, rng)


def step(state, model, z, cfg, t, rng):
    if cfg.is_particle_filter:
        return pf_step(state, model, z, cfg=cfg, t=t, rng=rng)
    return mkf_step(state, model, z, cfg, t=t, rng=rng)


def track_sequence(seq, models, cfg, edges=None, edge_params=None, progress=False):
    r"""
    Track both arm chains over a measurement sequence.

    Parameters
    ----------
    seq : MeasurementSequence
            Frames to track.
    models : dict
            Side (``'left'``, ``'right'``) to :class:`ChainModel`.
    cfg : TrackerConfig
            Tracker variant and its parameters.
    edges : dict, optional
            Frame index to a list of :class:`EdgeSegment`; enables the
            edge-based correction of swapped hand measurements.
    edge_params : EdgeSupportParams, optional
            Edge support kernel, default parameters when omitted.
    progress : bool
            Show a progress bar over frames.

    Returns
    -------
    result : TrackingResult
            Merged full-body estimate of every frame and the diagnostics table
            (frame, effective counts and resampling flags per chain, hand swap
            corrections, wall-clock time per iteration).

    Raises
    ------
    InsufficientData
        If the sequence has no frame.
    MkfPoseError
        Any per-frame failure, prefixed with the frame index.
    """
    frames = list(seq.frames)
    if not frames:
        raise InsufficientData('measurement sequence has no frames')
    missing = [side for side in bm.SIDES if side not in models]
    if missing:
        raise ConfigError('no chain model for side(s) {}'.format(missing))
    sides = bm.SIDES
    if edges is not None and edge_params is None:
        edge_params = assoc.EdgeSupportParams()

    states = {}
    for chain, side in enumerate(sides):
        states[side] = init_state(models[side], cfg, calc.rng_stream(cfg.rng_seed, chain, 0))

    estimates = []
    rows = []
    previous = None
    for t, frame in enumerate(tqdm(frames, desc=cfg.variant, disable=not progress)):
        start = time.perf_counter()
        hand_swap = False
        if edges is not None and previous is not None:
            frame, decision = assoc.correct_hand_swap(frame, previous, edges.get(frame.index, []),
                                                      edge_params, cfg.hand_swap_margin)
            hand_swap = decision == 'swap'
            if hand_swap:
                logger.info('frame %d: hand measurements swapped by edge support', frame.index)
        if not frame.any_visible:
            logger.warning('frame %d has no visible joint, predicting only', frame.index)

        row = {'frame': frame.index}
        chain_estimates = {}
        for chain, side in enumerate(sides):
            try:
                states[side], info = step(states[side], models[side], frame, cfg, t,
                                          calc.rng_stream(cfg.rng_seed, chain, t + 1))
                chain_estimates[side] = point_estimate(states[side], models[side].layout)
            except MkfPoseError as err:
                raise with_context(err, 'frame {}'.format(frame.index)) from err
            row['neff_{}'.format(side)] = info.neff
            row['resampled_{}'.format(side)] = info.resampled
        previous = bm.merge_arm_estimates(*(chain_estimates[s] for s in sides), index=frame.index)
        estimates.append(previous)
        row['hand_swap'] = hand_swap
        row['iter_time_seconds'] = time.perf_counter() - start
        rows.append(row)

    diagnostics = pd.DataFrame(rows)
    logger.info('tracked %d frames with %s: mean iteration time %.4g s, %d resampling events, %d hand swaps',
                len(frames), cfg.variant, diagnostics['iter_time_seconds'].mean(),
                int(diagnostics.filter(like='resampled').to_numpy().sum()), int(diagnostics['hand_swap'].sum()))
    return TrackingResult(estimates, diagnostics, cfg.variant)
