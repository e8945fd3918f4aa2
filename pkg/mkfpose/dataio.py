"""Dataset schemas, loaders, savers and the synthetic skeleton generator"""
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import association as assoc
from . import bodymodel as bm
from . import geometry as geo
from .errors import (DegenerateProjection, DataError, MissingJoint, ParseError, SchemaError,
                     with_context)
from .gaussian import GaussianMixture

logger = logging.getLogger(__name__)

SKELETON_SCHEMA = 'mkfpose.skeleton'
MEASUREMENTS_SCHEMA = 'mkfpose.measurements'
EDGES_SCHEMA = 'mkfpose.edges'
ESTIMATES_SCHEMA = 'mkfpose.estimates'
SCHEMA_VERSION = 1
SKELETON_COLUMNS = ['frame', 'joint', 'X', 'Y', 'Z']
EDGE_COLUMNS = ['frame', 'mid_x', 'mid_y', 'orientation_radians']
FLOAT_FORMAT = '%.17g'
PRIMITIVES = ('neutral', 'random', 'wave', 'reach', 'hands_crossed', 'clap')


@dataclass(eq=False)
class SkeletonRecording:
    """3D joint positions (metres) of a recording, shape (T, J, 3)."""
    joints: tuple
    positions: np.ndarray
    frame_rate: float = 30.0
    frame_ids: np.ndarray = None

    def __post_init__(self):
        self.joints = tuple(self.joints)
        for j in self.joints:
            if j not in bm.JOINTS:
                raise MissingJoint('unknown joint {!r}'.format(j), joint=j)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 3 or self.positions.shape[1:] != (len(self.joints), 3):
            raise DataError('positions of shape {} do not match {} joints'.format(
                self.positions.shape, len(self.joints)))
        if not np.all(np.isfinite(self.positions)):
            raise DataError('skeleton positions must be finite')
        if self.frame_ids is None:
            self.frame_ids = np.arange(self.positions.shape[0])
        self.frame_ids = np.asarray(self.frame_ids, dtype=int)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def n_frames(self):
        return self.positions.shape[0]

    def joint(self, name):
        try:
            return self.positions[:, self.joints.index(name)]
        except ValueError:
            raise MissingJoint('joint {!r} is not recorded'.format(name), joint=name) from None

    def frame(self, t):
        return {j: geo.Joint3D(*p) for j, p in zip(self.joints, self.positions[t])}

    @property
    def frames(self):
        return [self.frame(t) for t in range(self.n_frames)]


@dataclass(eq=False)
class MeasurementSequence:
    """2D measurement frames observed by a single calibrated camera."""
    frames: list
    intrinsics: geo.CameraIntrinsics
    pose: geo.CameraPose = field(default_factory=geo.CameraPose)
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)

    @property
    def projection(self):
        return geo.build_projection(self.intrinsics, self.pose)


@dataclass(frozen=True)
class MotionSpec:
    """Synthetic upper-body motion: primitive schedule and body proportions (metres)."""
    primitives: tuple = ('random',)
    segment_frames: int = 120
    blend_frames: int = 20
    frame_rate: float = 30.0
    upper_arm: float = 0.30
    forearm: float = 0.28
    shoulder_half_width: float = 0.18
    neck_to_head: float = 0.22
    shoulder_drop: float = 0.03
    depth: float = 2.5
    sway: float = 0.02

    def __post_init__(self):
        primitives = (self.primitives,) if isinstance(self.primitives, str) else tuple(self.primitives)
        unknown = [p for p in primitives if p not in PRIMITIVES]
        if not primitives or unknown:
            raise ValueError('unknown motion primitive(s) {}, expected {}'.format(unknown, PRIMITIVES))
        if self.segment_frames < 1 or not 0 <= self.blend_frames <= self.segment_frames:
            raise ValueError('need segment_frames >= 1 and 0 <= blend_frames <= segment_frames')
        if min(self.upper_arm, self.forearm, self.shoulder_half_width, self.neck_to_head, self.depth) <= 0:
            raise ValueError('body proportions and depth must be positive')
        object.__setattr__(self, 'primitives', primitives)

    @property
    def reach(self):
        return self.upper_arm + self.forearm


# ---------------------------------------------------------------------------
# synthetic skeletons
# ---------------------------------------------------------------------------

SIDE_SIGN = {'left': 1.0, 'right': -1.0}


def _direction(sign, azimuth, elevation):
    """Unit arm direction: azimuth 0 is sideways, pi/2 is towards the camera; positive elevation is down."""
    ce = np.cos(elevation)
    return np.stack([sign * ce * np.cos(azimuth), np.sin(elevation), -ce * np.sin(azimuth)], axis=-1)


def solve_arm(shoulder, target, upper_arm, forearm, pole):
    r"""
    Two-link inverse kinematics of an arm.

    Parameters
    ----------
    shoulder : np.ndarray, shape(T,3)
            Shoulder positions.
    target : np.ndarray, shape(T,3)
            Desired hand positions, clamped to the reachable shell.
    upper_arm, forearm : float
            Bone lengths.
    pole : np.ndarray, shape(3,)
            Direction the elbow bends towards.

    Returns
    -------
    elbow, hand : np.ndarray, shape(T,3)
            Joint positions with exact bone lengths.
    """
    offset = target - shoulder
    dist = np.linalg.norm(offset, axis=-1, keepdims=True)
    axis = offset / np.maximum(dist, 1e-12)
    d = np.clip(dist, abs(upper_arm - forearm) + 1e-6, upper_arm + forearm)
    hand = shoulder + axis * d
    cos_a = np.clip((upper_arm ** 2 + d ** 2 - forearm ** 2) / (2 * upper_arm * d), -1.0, 1.0)
    normal = pole - np.sum(pole * axis, axis=-1, keepdims=True) * axis
    norm = np.linalg.norm(normal, axis=-1, keepdims=True)
    # pole parallel to the arm: bend downwards
    fallback = np.array([0.0, 1.0, 0.0]) - axis[..., 1:2] * axis
    normal = np.where(norm > 1e-9, normal, fallback)
    normal = normal / np.linalg.norm(normal, axis=-1, keepdims=True)
    elbow = shoulder + upper_arm * (cos_a * axis + np.sqrt(1.0 - cos_a ** 2) * normal)
    # hand from the elbow keeps the forearm length exact
    forearm_dir = hand - elbow
    hand = elbow + forearm * forearm_dir / np.linalg.norm(forearm_dir, axis=-1, keepdims=True)
    return elbow, hand


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def _primitive_targets(name, tau, side, spec, rng):
    """Hand targets relative to the shoulder for ``tau`` local frame times."""
    sign = SIDE_SIGN[side]
    secs = tau / spec.frame_rate
    reach = spec.reach
    shoulder = np.array([sign * spec.shoulder_half_width, spec.shoulder_drop, 0.0])
    if name == 'neutral':
        return np.broadcast_to(_direction(sign, 0.0, 0.0) * reach, (len(tau), 3))
    if name == 'random':
        freq = rng.uniform(0.1, 0.5, 3)
        phase = rng.uniform(0, 2 * np.pi, 3)
        wave = np.sin(2 * np.pi * freq[:, None] * secs[None] + phase[:, None])
        azimuth = np.radians(30.0 + 55.0 * wave[0])
        elevation = np.radians(5.0 + 60.0 * wave[1])
        r = reach * (0.7 + 0.25 * wave[2])
        return _direction(sign, azimuth, elevation) * r[:, None]
    if name == 'wave':
        if side == 'right':
            azimuth = np.radians(20.0 + 25.0 * np.sin(2 * np.pi * secs))
            return _direction(sign, azimuth, np.full_like(secs, np.radians(-50.0))) * (0.9 * reach)
        return np.broadcast_to(_direction(sign, np.radians(10.0), np.radians(70.0)) * (0.95 * reach),
                               (len(tau), 3))
    if name == 'reach':
        s = 0.5 * (1 - np.cos(2 * np.pi * secs / 4.0))
        azimuth = np.radians(20.0 + 65.0 * s)
        return _direction(sign, azimuth, np.zeros_like(secs)) * (reach * (0.6 + 0.38 * s))[:, None]
    # hands_crossed and clap: targets in front of the chest, relative to the neck
    if name == 'hands_crossed':
        s = _smoothstep(tau / max(spec.segment_frames / 3.0, 1.0))
        x = sign * (0.25 - 0.37 * s)
        # the right hand passes behind the left one
        z = -0.30 if side == 'left' else -0.36
        target = np.stack([x, np.full_like(x, 0.25), np.full_like(x, z)], axis=-1)
    else:
        # apex (hands together) every 30 frames
        s = 0.5 * (1 - np.cos(2 * np.pi * tau / 30.0))
        x = sign * 0.25 * s
        target = np.stack([x, np.full_like(x, 0.30), np.full_like(x, -0.35)], axis=-1)
    return target - shoulder


def synth_skeleton(motion_spec, n_frames, rng_seed):
    r"""
    Synthetic upper-body recording with constant bone lengths.

    Parameters
    ----------
    motion_spec : MotionSpec
            Primitive schedule and body proportions.
    n_frames : int
            Number of frames.
    rng_seed : int
            Seed of the random trajectories and trunk sway.

    Returns
    -------
    recording : SkeletonRecording
            Camera-facing body in a frame with x to the right, y down and z away
            from the camera; the neck is near ``(0, 0, depth)``.

    Notes
    -----
    The primitives of ``motion_spec`` are played in turn, one segment each, and
    cross-fade over ``blend_frames``. Every primitive defines hand targets; a
    two-link inverse kinematics solve with an outward and downward elbow pole
    places the elbow and hand, so upper arm and forearm lengths are exact.
    """
    if n_frames < 1:
        raise ValueError('n_frames must be at least one, got {}'.format(n_frames))
    spec = motion_spec
    rng = np.random.default_rng(rng_seed)
    t = np.arange(n_frames, dtype=float)
    sway_phase = rng.uniform(0, 2 * np.pi, 2)
    sway = spec.sway * np.sin(2 * np.pi * 0.1 * t[:, None] / spec.frame_rate + sway_phase[None])
    neck = np.column_stack([sway[:, 0], np.zeros(n_frames), spec.depth + sway[:, 1]])
    head = neck + np.array([0.0, -spec.neck_to_head, 0.0])

    positions = np.empty((n_frames, len(bm.JOINTS), 3))
    positions[:, bm.JOINTS.index('head')] = head
    positions[:, bm.JOINTS.index('neck')] = neck
    n_segments = int(np.ceil(n_frames / spec.segment_frames))
    segment_seeds = rng.integers(0, 2 ** 32, size=(n_segments, len(bm.SIDES)))
    for s_idx, side in enumerate(bm.SIDES):
        sign = SIDE_SIGN[side]
        shoulder = neck + np.array([sign * spec.shoulder_half_width, spec.shoulder_drop, 0.0])
        targets = np.empty((n_frames, 3))
        for k in range(n_segments):
            name = spec.primitives[k % len(spec.primitives)]
            lo, hi = k * spec.segment_frames, min((k + 1) * spec.segment_frames, n_frames)
            tau = t[lo:hi] - lo
            current = _primitive_targets(name, tau, side, spec, np.random.default_rng(segment_seeds[k, s_idx]))
            if k > 0 and spec.blend_frames > 0:
                # cross-fade from the previous primitive, continued past its segment
                prev_name = spec.primitives[(k - 1) % len(spec.primitives)]
                prev = _primitive_targets(prev_name, tau + spec.segment_frames, side, spec,
                                          np.random.default_rng(segment_seeds[k - 1, s_idx]))
                w = _smoothstep(tau / spec.blend_frames)[:, None]
                current = (1 - w) * prev + w * current
            targets[lo:hi] = current
        pole = np.array([sign * 0.5, 1.0, 0.3])
        elbow, hand = solve_arm(shoulder, shoulder + targets, spec.upper_arm, spec.forearm, pole)
        positions[:, bm.JOINTS.index('{}_shoulder'.format(side))] = shoulder
        positions[:, bm.JOINTS.index('{}_elbow'.format(side))] = elbow
        positions[:, bm.JOINTS.index('{}_hand'.format(side))] = hand
    return SkeletonRecording(bm.JOINTS, positions, spec.frame_rate)


def make_measurements(rec, intr, pose=None, subset=bm.MEASURABLE, rng_seed=None):
    r"""
    Clean 2D measurements of a recording seen by a camera.

    Parameters
    ----------
    rec : SkeletonRecording
            3D recording.
    intr : CameraIntrinsics
            Camera intrinsics.
    pose : CameraPose, optional
            Camera extrinsics, default the identity pose.
    subset : sequence of str
            Measured joints, default head, neck and hands.
    rng_seed : int, optional
            Seed recorded in the provenance of the sequence.

    Returns
    -------
    seq : MeasurementSequence
            One frame per recording frame, every measured joint visible.

    Raises
    ------
    MissingJoint
        If a joint of ``subset`` is not recorded.
    DegenerateProjection
        With the frame index of a joint on the camera plane.
    """
    missing = [j for j in subset if j not in rec.joints]
    if missing:
        raise MissingJoint('joint {!r} is not recorded'.format(missing[0]), joint=missing[0])
    pose = pose or geo.CameraPose()
    pm = geo.build_projection(intr, pose)
    idx = [rec.joints.index(j) for j in subset]
    frames = []
    for t in range(rec.n_frames):
        try:
            uvl = geo.project_points(pm, rec.positions[t, idx])
        except DegenerateProjection as err:
            raise with_context(err, 'frame {}'.format(int(rec.frame_ids[t]))) from err
        frames.append(bm.MeasurementFrame(int(rec.frame_ids[t]),
                                          {j: uvl[k, :2] for k, j in enumerate(subset)},
                                          {j: True for j in subset}))
    provenance = {'source': 'make_measurements', 'joints': list(subset), 'seed': rng_seed}
    return MeasurementSequence(frames, intr, pose, provenance)


def truth_image_states(rec, pm):
    """Projected (u/lambda, v/lambda, lambda) rows of every joint, shape (T, J, 3)."""
    flat = geo.project_points(pm, rec.positions.reshape(-1, 3))
    return flat.reshape(rec.positions.shape)


# ---------------------------------------------------------------------------
# file IO
# ---------------------------------------------------------------------------

def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.info('wrote %s', path)


def _read_text(path):
    try:
        with open(path, encoding='utf-8') as fh:
            return fh.read()
    except FileNotFoundError:
        raise DataError('file not found: {}'.format(path)) from None


def _parse_header(line, schema, path):
    """Parse a ``# <schema> v<version> key=value ...`` line into a dict of metadata."""
    parts = line.lstrip('#').split()
    if len(parts) < 2 or parts[0] != schema:
        raise SchemaError('{}: expected a "# {} v{}" header'.format(path, schema, SCHEMA_VERSION))
    if parts[1] != 'v{}'.format(SCHEMA_VERSION):
        raise SchemaError('{}: unsupported {} version {}'.format(path, schema, parts[1]))
    meta = {}
    for item in parts[2:]:
        key, _, value = item.partition('=')
        meta[key] = value
    return meta


def _read_table(path, schema, columns, numeric):
    """Strictly parse a commented CSV table; returns the frame and the file line of every row."""
    text = _read_text(path)
    lines = text.splitlines()
    n_comments = 0
    while n_comments < len(lines) and lines[n_comments].startswith('#'):
        n_comments += 1
    meta = _parse_header(lines[0], schema, path) if n_comments else {}
    if n_comments >= len(lines):
        raise ParseError('missing column header', line=n_comments + 1)
    header = [c.strip() for c in lines[n_comments].split(',')]
    if header != columns:
        raise ParseError('expected columns {}, got {}'.format(columns, header), line=n_comments + 1)
    try:
        df = pd.read_csv(io.StringIO(text), skiprows=n_comments, dtype=str, keep_default_na=False,
                         skip_blank_lines=False)
    except pd.errors.ParserError as err:
        raise ParseError('malformed CSV: {}'.format(err)) from err
    first_line = n_comments + 2
    for col in numeric:
        values = pd.to_numeric(df[col], errors='coerce')
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            raise ParseError('{} value {!r} is not a number'.format(col, df[col].iloc[bad[0]]),
                             line=first_line + int(bad[0]))
        df[col] = df[col].astype(float)
    return df, meta, first_line


def load_skeleton_csv(path):
    r"""
    Load a skeleton recording.

    Parameters
    ----------
    path : str
            CSV file with columns ``frame, joint, X, Y, Z`` after an optional
            ``# mkfpose.skeleton v1 frame_rate=<fps>`` header.

    Returns
    -------
    recording : SkeletonRecording

    Raises
    ------
    ParseError
        With the line number of a malformed row.
    MissingJoint
        For an unknown joint name or a frame lacking a joint of the recording.
    """
    df, meta, first_line = _read_table(path, SKELETON_SCHEMA, SKELETON_COLUMNS, ('frame', 'X', 'Y', 'Z'))
    if df.empty:
        raise ParseError('{}: no skeleton rows'.format(path), line=first_line)
    for k, joint in enumerate(df['joint']):
        if joint not in bm.JOINTS:
            raise MissingJoint('line {}: unknown joint {!r}'.format(first_line + k, joint), joint=joint)
    frames = df['frame'].to_numpy()
    if np.any(frames != np.round(frames)):
        k = int(np.flatnonzero(frames != np.round(frames))[0])
        raise ParseError('frame index {!r} is not an integer'.format(frames[k]), line=first_line + k)
    frames = frames.astype(int)
    frame_ids = list(dict.fromkeys(frames.tolist()))
    first = df['joint'][frames == frame_ids[0]].tolist()
    if len(set(first)) != len(first):
        raise ParseError('frame {} lists a joint twice'.format(frame_ids[0]), line=first_line)
    joints = tuple(first)
    positions = np.empty((len(frame_ids), len(joints), 3))
    for t, fid in enumerate(frame_ids):
        rows = df[frames == fid]
        names = rows['joint'].tolist()
        missing = [j for j in joints if j not in names]
        if missing:
            raise MissingJoint('frame {} is missing joint {!r}'.format(fid, missing[0]), joint=missing[0])
        if len(names) != len(joints):
            extra = [j for j in names if j not in joints] or names
            raise MissingJoint('frame {} has an unexpected joint set'.format(fid), joint=extra[0])
        order = [names.index(j) for j in joints]
        positions[t] = rows[['X', 'Y', 'Z']].to_numpy()[order]
    frame_rate = float(meta.get('frame_rate', 30.0))
    return SkeletonRecording(joints, positions, frame_rate, frame_ids=np.array(frame_ids))


def save_skeleton_csv(rec, path):
    """Write a recording in the format read by :func:`load_skeleton_csv`."""
    n_frames, n_joints = rec.positions.shape[:2]
    df = pd.DataFrame({
        'frame': np.repeat(rec.frame_ids, n_joints),
        'joint': np.tile(rec.joints, n_frames),
        'X': rec.positions[..., 0].ravel(),
        'Y': rec.positions[..., 1].ravel(),
        'Z': rec.positions[..., 2].ravel(),
    })
    header = '# {} v{} frame_rate={}\n'.format(SKELETON_SCHEMA, SCHEMA_VERSION, FLOAT_FORMAT % rec.frame_rate)
    atomic_write(path, header + df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n'))


def _camera_to_dict(intr, pose):
    return {'intrinsics': {'fx': intr.fx, 'fy': intr.fy, 'cx': intr.cx, 'cy': intr.cy},
            'pose': {'tx': pose.tx, 'ty': pose.ty, 'tz': pose.tz,
                     'alpha': pose.alpha, 'beta': pose.beta, 'gamma': pose.gamma}}


def _number(value):
    value = float(value)
    return value if np.isfinite(value) else None


def save_measurements(seq, path):
    """Write a measurement sequence as JSON lines: a header object then one object per frame."""
    header = {'schema': MEASUREMENTS_SCHEMA, 'version': SCHEMA_VERSION,
              'camera': _camera_to_dict(seq.intrinsics, seq.pose), 'provenance': seq.provenance}
    lines = [json.dumps(header, sort_keys=True)]
    for frame in seq.frames:
        joints = {j: {'u': _number(p[0]), 'v': _number(p[1]), 'visible': frame.visible[j]}
                  for j, p in frame.points.items()}
        lines.append(json.dumps({'frame': frame.index, 'joints': joints}, sort_keys=True))
    atomic_write(path, '\n'.join(lines) + '\n')


def load_measurements(path):
    r"""
    Load a measurement sequence written by :func:`save_measurements`.

    Raises
    ------
    ParseError
        With the line number of malformed JSON or a missing field.
    SchemaError
        If the header names another schema or version.
    """
    lines = _read_text(path).splitlines()
    if not lines:
        raise ParseError('{}: empty measurement file'.format(path), line=1)
    records = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append((number, json.loads(line)))
        except json.JSONDecodeError as err:
            raise ParseError('invalid JSON: {}'.format(err.msg), line=number) from err
    number, header = records[0]
    if header.get('schema') != MEASUREMENTS_SCHEMA or header.get('version') != SCHEMA_VERSION:
        raise SchemaError('{}: expected {} v{}, got {!r} v{!r}'.format(
            path, MEASUREMENTS_SCHEMA, SCHEMA_VERSION, header.get('schema'), header.get('version')))
    try:
        camera = header['camera']
        intr = geo.CameraIntrinsics(**camera['intrinsics'])
        pose = geo.CameraPose(**camera['pose'])
    except (KeyError, TypeError, ValueError) as err:
        raise ParseError('invalid camera: {}'.format(err), line=number) from err
    frames = []
    for number, record in records[1:]:
        try:
            points = {j: (np.nan if v['u'] is None else v['u'], np.nan if v['v'] is None else v['v'])
                      for j, v in record['joints'].items()}
            visible = {j: bool(v['visible']) for j, v in record['joints'].items()}
            frames.append(bm.MeasurementFrame(int(record['frame']), points, visible))
        except MissingJoint as err:
            raise with_context(err, 'line {}'.format(number)) from err
        except (KeyError, TypeError, ValueError) as err:
            raise ParseError('invalid frame record: {}'.format(err), line=number) from err
    return MeasurementSequence(frames, intr, pose, header.get('provenance') or {})


def save_prior(mixture, layout, path):
    """Write a pose prior and its state layout as versioned JSON."""
    atomic_write(path, json.dumps(mixture.to_dict(layout.to_dict()), indent=1) + '\n')


def load_prior(path):
    r"""
    Load a pose prior.

    Returns
    -------
    mixture : GaussianMixture
    layout : StateLayout
    """
    try:
        payload = json.loads(_read_text(path))
    except json.JSONDecodeError as err:
        raise ParseError('{}: invalid JSON: {}'.format(path, err.msg), line=err.lineno) from err
    try:
        mixture = GaussianMixture.from_dict(payload)
        layout = bm.StateLayout.from_dict(payload['layout'])
    except (KeyError, TypeError) as err:
        raise SchemaError('{}: incomplete prior file: {}'.format(path, err)) from err
    return mixture, layout


def prior_path(directory, side):
    return os.path.join(directory, 'prior_{}.json'.format(side))


def load_priors(directory):
    """Load ``prior_left.json`` and ``prior_right.json`` of a directory, keyed by side."""
    return {side: load_prior(prior_path(directory, side)) for side in bm.SIDES}


def save_edges_csv(edges, path):
    """Write edge segments keyed by frame index."""
    rows = [(frame, e.mid_x, e.mid_y, e.orientation) for frame, segs in sorted(edges.items()) for e in segs]
    df = pd.DataFrame(rows, columns=EDGE_COLUMNS)
    header = '# {} v{}\n'.format(EDGES_SCHEMA, SCHEMA_VERSION)
    atomic_write(path, header + df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n'))


def load_edges_csv(path):
    """Load edge segments as a mapping from frame index to a list of :class:`EdgeSegment`."""
    df, _, _ = _read_table(path, EDGES_SCHEMA, EDGE_COLUMNS, EDGE_COLUMNS)
    edges = {}
    for frame, mx, my, theta in df.itertuples(index=False):
        edges.setdefault(int(frame), []).append(assoc.EdgeSegment(mx, my, theta))
    return edges


def save_estimates_csv(result, path):
    """Write a :class:`TrackingResult` (estimates and diagnostics) as CSV."""
    header = '# {} v{} variant={}\n'.format(ESTIMATES_SCHEMA, SCHEMA_VERSION, result.variant)
    atomic_write(path, header + result.to_frame().to_csv(index=False, float_format=FLOAT_FORMAT,
                                                         lineterminator='\n'))


def load_estimates_csv(path):
    """Load the full-body estimates of an estimates CSV, diagnostics columns are ignored."""
    text = _read_text(path)
    lines = text.splitlines()
    n_comments = 0
    while n_comments < len(lines) and lines[n_comments].startswith('#'):
        n_comments += 1
    if n_comments:
        _parse_header(lines[0], ESTIMATES_SCHEMA, path)
    df = pd.read_csv(io.StringIO(text), skiprows=n_comments, float_precision='round_trip')
    columns = ['{}_{}'.format(j, c) for j in bm.JOINTS for c in ('u', 'v', 'lambda')]
    missing = [c for c in ['frame'] + columns if c not in df.columns]
    if missing:
        raise ParseError('{}: missing column {!r}'.format(path, missing[0]), line=n_comments + 1)
    values = df[columns].to_numpy(dtype=float).reshape(len(df), len(bm.JOINTS), 3)
    return [bm.FullBodyEstimate(int(f), v) for f, v in zip(df['frame'], values)]
