"""Command-line interface: prior training, synthetic data, tracking, evaluation and benchmark"""
import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import association as assoc
from . import bodymodel as bm
from . import config as cfgmod
from . import dataio
from . import evaluation as ev
from . import gaussian as gs
from . import geometry as geo
from . import reconstruct
from . import trackers
from .errors import ConfigError, DataError, MkfPoseError, NumericalError, with_context

logger = logging.getLogger('mkfpose')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
ERROR_JOINTS = ('left_elbow', 'left_hand', 'right_elbow', 'right_hand')


class ArgumentParser(argparse.ArgumentParser):
    """Parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, '{}: error: {}\n'.format(self.prog, message))


def _progress(args):
    return not args.no_progress and sys.stderr.isatty()


def _camera(args, config):
    """Camera of a measurement file when given, else of the configuration."""
    if getattr(args, 'measurements', None):
        seq = dataio.load_measurements(args.measurements)
        return seq.intrinsics, seq.pose
    return cfgmod.camera_from_config(config)


def cmd_train_prior(args, config):
    """Fit one pose prior per arm chain to projected skeleton recordings."""
    prior_cfg = config['prior']
    k = args.k if args.k is not None else prior_cfg['n_components']
    n_views = args.n_views if args.n_views is not None else config['viewpoints']['n_views']
    seed = args.seed if args.seed is not None else prior_cfg['seed']
    intr, _ = cfgmod.camera_from_config(config)
    limits = cfgmod.viewpoint_limits_from_config(config)
    rng = np.random.default_rng(seed)

    states = {side: [] for side in bm.SIDES}
    for path in args.skeletons:
        rec = dataio.load_skeleton_csv(path)
        try:
            chunk = bm.generate_training_set(rec, intr, n_views, limits, rng, progress=_progress(args))
        except MkfPoseError as err:
            raise with_context(err, path) from err
        for side in bm.SIDES:
            states[side].extend(chunk[side])

    log = {}
    for side in bm.SIDES:
        data = bm.stack_states(states[side])
        result = gs.em_run(data, k, init_seed=seed, max_iters=prior_cfg['max_iters'], tol=prior_cfg['tol'],
                           progress=_progress(args))
        dataio.save_prior(result.mixture, bm.StateLayout.arm(side), dataio.prior_path(args.out, side))
        log[side] = {'n_states': int(data.shape[0]), 'n_components': k, 'log_likelihood': result.log_likelihood[-1],
                     'n_iter': result.n_iter, 'converged': result.converged,
                     'reinitialised': {str(j): n for j, n in result.reinitialised.items()}}
        logger.info('%s prior: %d components, log-likelihood %.6g after %d iterations',
                    side, k, result.log_likelihood[-1], result.n_iter)
    dataio.atomic_write(os.path.join(args.out, 'train_log.json'), json.dumps(log, indent=1, sort_keys=True) + '\n')
    return EXIT_OK


def cmd_gen_synth(args, config):
    """Synthetic skeleton, clean measurements and edges along the true limbs."""
    synth = config['synth']
    n_frames = args.n_frames if args.n_frames is not None else synth['n_frames']
    seed = args.seed if args.seed is not None else synth['seed']
    spec = cfgmod.motion_spec_from_config(config)
    rec = dataio.synth_skeleton(spec, n_frames, seed)
    intr, pose = cfgmod.camera_from_config(config)
    seq = dataio.make_measurements(rec, intr, pose, tuple(config['observation']['measured']), seed)
    seq.provenance.update({'source': 'gen-synth', 'primitives': list(spec.primitives), 'n_frames': n_frames,
                           'frame_rate': spec.frame_rate})

    e = config['edges']
    rng = np.random.default_rng([seed, 1])
    truth = dataio.truth_image_states(rec, seq.projection)
    edges = {}
    for t, fid in enumerate(rec.frame_ids):
        points = {j: truth[t, k, :2] for k, j in enumerate(rec.joints)}
        edges[int(fid)] = assoc.synth_edges(points, bm.ARM_LIMBS, e['per_limb'], e['position_jitter_px'],
                                            np.radians(e['orientation_jitter_deg']), e['n_clutter'],
                                            (2 * config['camera']['cx'], 2 * config['camera']['cy']), rng)
    dataio.save_skeleton_csv(rec, os.path.join(args.out, 'skeleton.csv'))
    dataio.save_measurements(seq, os.path.join(args.out, 'measurements.jsonl'))
    dataio.save_edges_csv(edges, os.path.join(args.out, 'edges.csv'))
    return EXIT_OK


def cmd_corrupt(args, config):
    """Apply simulated detector failures to a measurement file."""
    seq = dataio.load_measurements(args.measurements)
    model = cfgmod.corruption_model_from_config(config)
    seed = args.seed if args.seed is not None else 0
    dataio.save_measurements(assoc.corrupt_measurements(seq, model, seed), args.out)
    return EXIT_OK


def _tracker_config(args, config, **overrides):
    if getattr(args, 'variant', None):
        overrides['variant'] = args.variant
    if getattr(args, 'seed', None) is not None:
        overrides.setdefault('seed', args.seed)
    return cfgmod.tracker_config_from_config(config, **overrides)


def cmd_track(args, config):
    """Track a measurement sequence and write the estimates with diagnostics."""
    seq = dataio.load_measurements(args.measurements)
    models = cfgmod.chain_models_from_config(config, dataio.load_priors(args.prior))
    tcfg = _tracker_config(args, config)
    edges = dataio.load_edges_csv(args.edge_file) if args.edge_file else None
    result = trackers.track_sequence(seq, models, tcfg, edges=edges,
                                     edge_params=cfgmod.edge_params_from_config(config) if edges else None,
                                     progress=_progress(args))
    dataio.save_estimates_csv(result, os.path.join(args.out, 'estimates.csv'))
    frame_rate = float((seq.provenance or {}).get('frame_rate', 30.0))
    rec = reconstruct.estimates_to_recording(result.estimates, seq.projection, frame_rate)
    dataio.save_skeleton_csv(rec, os.path.join(args.out, 'estimates_3d.csv'))
    logger.info('%s: %d frames, mean iteration time %.4g s', tcfg.variant, len(result.estimates),
                result.mean_iter_time)
    return EXIT_OK


def _write_table(frame, path, gnuplot=False):
    if gnuplot:
        text = '# ' + ' '.join(frame.columns) + '\n' + frame.to_csv(sep=' ', header=False, index=False,
                                                                 float_format='%.10g', lineterminator='\n')
    else:
        text = frame.to_csv(float_format='%.10g', lineterminator='\n')
    dataio.atomic_write(path, text)


def cmd_eval(args, config):
    """Pixel errors, PCP curve and aligned 3D errors of an estimates file."""
    estimates = dataio.load_estimates_csv(args.estimates)
    truth = dataio.load_skeleton_csv(args.truth)
    intr, pose = _camera(args, config)
    pm = geo.build_projection(intr, pose)
    truth_states = dataio.truth_image_states(truth, pm)
    truth_states = truth_states[:, [truth.joints.index(j) for j in bm.JOINTS]]
    thresholds = config['evaluation']['pcp_thresholds']

    pixel, pixel_means = ev.joint_pixel_error(estimates, truth_states)
    curve = ev.pcp(estimates, truth_states, thresholds=thresholds)
    err3d, err3d_means = ev.error_3d(estimates, truth, pm, tuple(config['evaluation']['align_joints']))

    _write_table(pixel, os.path.join(args.out, 'pixel_errors.csv'))
    _write_table(err3d, os.path.join(args.out, 'errors_3d.csv'))
    _write_table(curve.to_frame(), os.path.join(args.out, 'pcp.dat'), gnuplot=True)
    pixel_plot = pixel.reset_index()
    _write_table(pixel_plot, os.path.join(args.out, 'pixel_errors.dat'), gnuplot=True)
    summary = {
        'n_frames': len(estimates),
        'mean_pixel_error': {j: float(v) for j, v in pixel_means.items()},
        'mean_error_3d': {j: (None if np.isnan(v) else float(v)) for j, v in err3d_means.items()},
        'pcp': {'thresholds': curve.thresholds.tolist(), 'values': curve.values.tolist()},
    }
    dataio.atomic_write(os.path.join(args.out, 'summary.json'), json.dumps(summary, indent=1) + '\n')
    for j, v in pixel_means.items():
        logger.info('mean pixel error %-15s %.3f', j, v)
    return EXIT_OK


def _bench_sequence(args, config):
    """Measurements and image-plane truth of the arm joints scored by the benchmark."""
    if args.measurements is None:
        synth = config['synth']
        n_frames = args.n_frames if args.n_frames is not None else synth['n_frames']
        rec = dataio.synth_skeleton(cfgmod.motion_spec_from_config(config), n_frames, synth['seed'])
        intr, pose = cfgmod.camera_from_config(config)
        clean = dataio.make_measurements(rec, intr, pose, tuple(config['observation']['measured']), synth['seed'])
        seq = assoc.corrupt_measurements(clean, cfgmod.corruption_model_from_config(config), synth['seed'])
    else:
        if not args.truth:
            raise ConfigError('bench needs --truth to score the measurement file {}'.format(args.measurements))
        seq = dataio.load_measurements(args.measurements)
        rec = dataio.load_skeleton_csv(args.truth)
    truth = dataio.truth_image_states(rec, seq.projection)
    return seq, truth[:, [rec.joints.index(j) for j in ERROR_JOINTS]]


def cmd_bench(args, config):
    """Mean iteration time and joint error of tracker variants over seeds."""
    bench = config['bench']
    variants = args.variants or bench['variants']
    seeds = args.seeds if args.seeds is not None else bench['seeds']
    if not variants:
        raise ConfigError('bench needs at least one variant')
    seq, truth_states = _bench_sequence(args, config)
    models = cfgmod.chain_models_from_config(config, dataio.load_priors(args.prior))

    rows = []
    runs = [(v, s) for v in variants for s in seeds]
    for variant, seed in tqdm(runs, desc='bench', disable=not _progress(args)):
        tcfg = cfgmod.tracker_config_from_config(
            config, variant=variant, seed=seed,
            n_particles=args.n_particles or bench['n_particles'],
            n_tracks=args.n_tracks or bench['n_tracks'])
        result = trackers.track_sequence(seq, models, tcfg)
        error = ev.mean_joint_error(result.estimates, truth_states, ERROR_JOINTS)
        rows.append({'variant': variant, 'seed': seed, 'n_frames': len(result.estimates),
                     'mean_iter_time': result.mean_iter_time, 'mean_error_px': error})
        logger.info('%s seed %d: %.4g s per iteration, error %.3f px', variant, seed, result.mean_iter_time, error)

    raw = pd.DataFrame(rows)
    summary = (raw.groupby('variant', sort=False)
               .agg(mean_iter_time=('mean_iter_time', 'mean'), mean_error_px=('mean_error_px', 'mean'),
                    n_seeds=('seed', 'count'))
               .sort_values('mean_iter_time').reset_index())
    dataio.atomic_write(os.path.join(args.out, 'bench_raw.csv'),
                        raw.to_csv(index=False, float_format='%.10g', lineterminator='\n'))
    dataio.atomic_write(os.path.join(args.out, 'bench_summary.csv'),
                        summary.to_csv(index=False, float_format='%.10g', lineterminator='\n'))
    print(summary.to_string(index=False))
    return EXIT_OK


def cmd_show_config(args, config):
    """Print the effective configuration as YAML."""
    sys.stdout.write(cfgmod.dump_config(config))
    return EXIT_OK


def build_parser():
    parser = ArgumentParser(prog='mkfpose', description='3D upper-body pose tracking with mixture Kalman filters')
    parser.add_argument('-c', '--config', help='YAML configuration file')
    parser.add_argument('-s', '--set', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='override a configuration value')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='more logging (repeatable)')
    parser.add_argument('-q', '--quiet', action='count', default=0, help='less logging (repeatable)')
    parser.add_argument('--no-progress', action='store_true', help='disable progress bars')
    sub = parser.add_subparsers(dest='command', metavar='command', parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser('train-prior', help='fit the left and right arm pose priors')
    p.add_argument('skeletons', nargs='+', help='skeleton CSV recordings')
    p.add_argument('-o', '--out', required=True, help='output directory of the prior files')
    p.add_argument('-k', type=int, help='number of mixture components')
    p.add_argument('--n-views', type=int, help='viewpoints sampled per recording')
    p.add_argument('--seed', type=int)
    p.set_defaults(func=cmd_train_prior)

    p = sub.add_parser('gen-synth', help='generate a synthetic recording with measurements and edges')
    p.add_argument('-o', '--out', required=True, help='output directory')
    p.add_argument('-n', '--n-frames', type=int)
    p.add_argument('--seed', type=int)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser('corrupt', help='simulate detector failures on a measurement file')
    p.add_argument('measurements', help='measurement JSON-lines file')
    p.add_argument('-o', '--out', required=True, help='output measurement file')
    p.add_argument('--seed', type=int)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser('track', help='track a measurement sequence')
    p.add_argument('measurements', help='measurement JSON-lines file')
    p.add_argument('-p', '--prior', required=True, help='directory holding prior_left.json and prior_right.json')
    p.add_argument('-o', '--out', required=True, help='output directory')
    p.add_argument('--variant', choices=trackers.VARIANTS)
    p.add_argument('--edge-file', help='edge CSV enabling the hand-swap correction')
    p.add_argument('--seed', type=int)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser('eval', help='evaluate estimates against a ground-truth skeleton')
    p.add_argument('estimates', help='estimates CSV written by track')
    p.add_argument('truth', help='ground-truth skeleton CSV')
    p.add_argument('-m', '--measurements', help='measurement file providing the camera')
    p.add_argument('-o', '--out', required=True, help='output directory')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('bench', help='compare iteration times and errors of tracker variants')
    p.add_argument('measurements', nargs='?',
                   help='measurement JSON-lines file, default a synthetic sequence from the configuration')
    p.add_argument('-p', '--prior', required=True, help='directory holding the prior files')
    p.add_argument('-t', '--truth', help='ground-truth skeleton CSV of the measurement file')
    p.add_argument('-n', '--n-frames', type=int, help='length of the synthetic sequence')
    p.add_argument('--variants', nargs='+', choices=trackers.VARIANTS)
    p.add_argument('--seeds', nargs='+', type=int)
    p.add_argument('--n-particles', type=int)
    p.add_argument('--n-tracks', type=int)
    p.add_argument('-o', '--out', required=True, help='output directory')
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser('show-config', help='print the effective configuration')
    p.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=max(logging.DEBUG, logging.WARNING - 10 * (args.verbose - args.quiet)),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        config = cfgmod.load_config(args.config, args.set)
        return args.func(args, config)
    except ConfigError as err:
        logger.error('configuration error: %s', err)
        return EXIT_USAGE
    except DataError as err:
        logger.error('data error: %s', err)
        return EXIT_DATA
    except NumericalError as err:
        logger.error('numerical error: %s', err)
        return EXIT_NUMERICAL
    except OSError as err:
        logger.error('%s', err)
        return EXIT_DATA
