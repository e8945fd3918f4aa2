"""Configuration defaults, YAML loading and builders of the model objects"""
import copy
import logging

import numpy as np
import yaml

from . import association as assoc
from . import bodymodel as bm
from . import dataio
from . import geometry as geo
from . import trackers
from .errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULTS = {
    'camera': {'fx': 500.0, 'fy': 500.0, 'cx': 320.0, 'cy': 240.0,
               'tx': 0.0, 'ty': 0.0, 'tz': 0.0, 'alpha_deg': 0.0, 'beta_deg': 0.0, 'gamma_deg': 0.0},
    'viewpoints': {'max_angle_deg': 30.0, 'max_translation_m': 0.5, 'n_views': 10},
    'prior': {'n_components': 15, 'max_iters': 200, 'tol': 1e-6, 'seed': 0},
    'transition': {'pixel_std': 4.0, 'scale_std': 0.02},
    'observation': {'pixel_std': 8.0, 'measured': list(bm.MEASURABLE)},
    'tracker': {'variant': 'mkf-fixed', 'n_particles': 1000, 'n_tracks': None, 'resample_threshold': 0.5,
                'epsilon_floor': None, 'annealing_inflation': 100.0, 'annealing_burn_in': 50,
                'anneal_gmm': False, 'gmm_noise_scale': 1.0, 'hand_swap_margin': 2, 'seed': 0},
    'association': {'sigma_orientation_deg': 15.0, 'sigma_x_px': 20.0, 'sigma_y_px': 20.0, 'tau': None},
    'edges': {'per_limb': 5, 'position_jitter_px': 5.0, 'orientation_jitter_deg': 5.0, 'n_clutter': 0},
    'corruption': {'noise_sigma_px': 4.0, 'p_drop': 0.0, 'p_swap_onset': 0.0, 'swap_mean_duration': 10.0},
    'synth': {'primitives': ['random', 'wave', 'reach', 'hands_crossed', 'clap'], 'n_frames': 500,
              'segment_frames': 120, 'blend_frames': 20, 'frame_rate': 30.0, 'upper_arm': 0.30,
              'forearm': 0.28, 'shoulder_half_width': 0.18, 'neck_to_head': 0.22, 'shoulder_drop': 0.03,
              'depth': 2.5, 'sway': 0.02, 'seed': 0},
    'evaluation': {'pcp_thresholds': None, 'align_joints': ['head', 'neck', 'left_shoulder', 'right_shoulder']},
    'bench': {'variants': list(trackers.VARIANTS), 'seeds': [0], 'n_particles': 10000, 'n_tracks': 30},
}


def _merge(base, update, where=''):
    for key, value in update.items():
        path = '{}.{}'.format(where, key) if where else key
        if key not in base:
            raise ConfigError('unknown configuration key {!r}'.format(path))
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError('configuration key {!r} must be a section'.format(path))
            _merge(base[key], value, path)
        else:
            base[key] = value


def parse_override(text):
    """Turn ``section.key=value`` into a nested dict, the value parsed as a YAML scalar or list."""
    key, sep, value = text.partition('=')
    if not sep or not key.strip():
        raise ConfigError('override {!r} is not of the form section.key=value'.format(text))
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError as err:
        raise ConfigError('cannot parse the value of override {!r}: {}'.format(text, err)) from err
    nested = parsed
    for part in reversed(key.strip().split('.')):
        nested = {part: nested}
    return nested


def load_config(path=None, overrides=()):
    r"""
    Effective configuration.

    Parameters
    ----------
    path : str, optional
            YAML file whose sections override the defaults.
    overrides : sequence of str
            ``section.key=value`` items applied last.

    Returns
    -------
    config : dict
            Deep copy of :data:`DEFAULTS` with the file and the overrides merged in.

    Raises
    ------
    ConfigError
        For unknown keys, malformed YAML or malformed overrides.
    """
    config = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, encoding='utf-8') as fh:
                loaded = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            raise ConfigError('configuration file not found: {}'.format(path)) from None
        except yaml.YAMLError as err:
            raise ConfigError('{}: invalid YAML: {}'.format(path, err)) from err
        if not isinstance(loaded, dict):
            raise ConfigError('{}: the configuration must be a mapping'.format(path))
        _merge(config, loaded)
        logger.debug('configuration loaded from %s', path)
    for item in overrides:
        _merge(config, parse_override(item))
    return config


def dump_config(config):
    return yaml.safe_dump(config, sort_keys=False, default_flow_style=None)


def _build(factory, what, **kwargs):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError('invalid {} configuration: {}'.format(what, err)) from err


def camera_from_config(config):
    """Intrinsics and pose of the ``camera`` section (angles in degrees)."""
    c = config['camera']
    intr = _build(geo.CameraIntrinsics, 'camera', fx=c['fx'], fy=c['fy'], cx=c['cx'], cy=c['cy'])
    pose = _build(geo.CameraPose.from_degrees, 'camera', tx=c['tx'], ty=c['ty'], tz=c['tz'],
                  alpha=c['alpha_deg'], beta=c['beta_deg'], gamma=c['gamma_deg'])
    return intr, pose


def viewpoint_limits_from_config(config):
    v = config['viewpoints']
    return _build(geo.ViewpointLimits.from_degrees, 'viewpoints',
                  max_angle_deg=v['max_angle_deg'], max_translation_m=v['max_translation_m'])


def transition_params_from_config(config, layout):
    t = config['transition']
    return _build(bm.TransitionParams.default, 'transition', layout=layout,
                  pixel_std=t['pixel_std'], scale_std=t['scale_std'])


def observation_params_from_config(config, layout):
    o = config['observation']
    unknown = [j for j in o['measured'] if j not in bm.JOINTS]
    if unknown:
        raise ConfigError('unknown measured joint {!r}'.format(unknown[0]))
    return _build(bm.ObservationParams.for_layout, 'observation', layout=layout,
                  measured=tuple(o['measured']), pixel_std=o['pixel_std'])


def chain_models_from_config(config, priors):
    """One :class:`ChainModel` per side from ``{side: (mixture, layout)}``."""
    return {side: bm.ChainModel(layout, mixture,
                                transition_params_from_config(config, layout),
                                observation_params_from_config(config, layout))
            for side, (mixture, layout) in priors.items()}


def _tracker_config(t):
    annealing = trackers.AnnealingSchedule(float(t['annealing_inflation']), int(t['annealing_burn_in']))
    return trackers.TrackerConfig(
        variant=t['variant'], n_particles=int(t['n_particles']),
        n_tracks=None if t['n_tracks'] is None else int(t['n_tracks']),
        resample_threshold=float(t['resample_threshold']),
        epsilon_floor=None if t['epsilon_floor'] is None else float(t['epsilon_floor']),
        annealing=annealing, anneal_gmm=bool(t['anneal_gmm']), gmm_noise_scale=float(t['gmm_noise_scale']),
        hand_swap_margin=int(t['hand_swap_margin']), rng_seed=int(t['seed']))


def tracker_config_from_config(config, **overrides):
    """:class:`TrackerConfig` of the ``tracker`` section, ``overrides`` applied on top."""
    return _build(_tracker_config, 'tracker', t=dict(config['tracker'], **overrides))


def edge_params_from_config(config):
    a = config['association']
    return _build(assoc.EdgeSupportParams, 'association', sigma_orientation=np.radians(a['sigma_orientation_deg']),
                  sigma_x=a['sigma_x_px'], sigma_y=a['sigma_y_px'], tau=a['tau'])


def corruption_model_from_config(config):
    return _build(assoc.CorruptionModel, 'corruption', **config['corruption'])


def motion_spec_from_config(config):
    s = {k: v for k, v in config['synth'].items() if k not in ('n_frames', 'seed')}
    s['primitives'] = tuple(s['primitives'])
    return _build(dataio.MotionSpec, 'synth', **s)
