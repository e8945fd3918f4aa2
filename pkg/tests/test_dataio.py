import json

import numpy as np
import pandas as pd
import pytest

from mkfpose import association as assoc
from mkfpose import bodymodel as bm
from mkfpose import dataio
from mkfpose import gaussian as gs
from mkfpose import geometry as geo
from mkfpose import trackers
from mkfpose.errors import DataError, MissingJoint, ParseError, SchemaError

INTRINSICS = geo.CameraIntrinsics(500.0, 500.0, 320.0, 240.0)
HEADER = '# mkfpose.skeleton v1 frame_rate=25\n'
COLUMNS = 'frame,joint,X,Y,Z\n'


def _write(path, text):
    path.write_text(text, encoding='utf-8')
    return str(path)


def _distance(rec, a, b):
    return np.linalg.norm(rec.joint(a) - rec.joint(b), axis=-1)


class TestSkeletonCsv:

    def test_round_trip(self, recording, tmp_path):
        path = str(tmp_path / 'skeleton.csv')
        dataio.save_skeleton_csv(recording, path)
        loaded = dataio.load_skeleton_csv(path)
        assert loaded.joints == recording.joints
        assert loaded.frame_rate == recording.frame_rate
        np.testing.assert_array_equal(loaded.positions, recording.positions)
        np.testing.assert_array_equal(loaded.frame_ids, recording.frame_ids)

    def test_headerless(self, tmp_path):
        path = _write(tmp_path / 's.csv', COLUMNS + '0,head,0,0,2\n0,neck,0,0.2,2\n1,head,0,0,2\n1,neck,0,0.2,2\n')
        rec = dataio.load_skeleton_csv(path)
        assert rec.positions.shape == (2, 2, 3)
        assert rec.frame_rate == 30.0

    def test_bad_number_line(self, tmp_path):
        path = _write(tmp_path / 's.csv', HEADER + COLUMNS + '0,head,0,0,2\n0,neck,0,0.2,2\n1,head,abc,0,2\n')
        with pytest.raises(ParseError) as info:
            dataio.load_skeleton_csv(path)
        assert info.value.line == 5

    def test_bad_columns(self, tmp_path):
        path = _write(tmp_path / 's.csv', HEADER + 'frame,joint,x,y\n0,head,0,0\n')
        with pytest.raises(ParseError) as info:
            dataio.load_skeleton_csv(path)
        assert info.value.line == 2

    def test_wrong_version(self, tmp_path):
        path = _write(tmp_path / 's.csv', '# mkfpose.skeleton v2\n' + COLUMNS + '0,head,0,0,2\n')
        with pytest.raises(SchemaError):
            dataio.load_skeleton_csv(path)

    def test_unknown_joint(self, tmp_path):
        path = _write(tmp_path / 's.csv', HEADER + COLUMNS + '0,head,0,0,2\n0,tail,0,0,2\n')
        with pytest.raises(MissingJoint):
            dataio.load_skeleton_csv(path)

    def test_frame_missing_joint(self, tmp_path):
        path = _write(tmp_path / 's.csv', HEADER + COLUMNS + '0,head,0,0,2\n0,neck,0,0.2,2\n1,head,0,0,2\n')
        with pytest.raises(MissingJoint) as info:
            dataio.load_skeleton_csv(path)
        assert info.value.joint == 'neck'

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            dataio.load_skeleton_csv(str(tmp_path / 'nope.csv'))


class TestMeasurementFile:

    def test_round_trip(self, measurements, tmp_path):
        path = str(tmp_path / 'm.jsonl')
        dataio.save_measurements(measurements, path)
        loaded = dataio.load_measurements(path)
        assert len(loaded) == len(measurements)
        assert loaded.intrinsics == measurements.intrinsics
        assert loaded.provenance == measurements.provenance
        for a, b in zip(measurements.frames, loaded.frames):
            assert a.index == b.index
            assert a.visible == b.visible
            for j in a.points:
                np.testing.assert_array_equal(a.points[j], b.points[j])

    def test_hidden_nan(self, tmp_path):
        frame = bm.MeasurementFrame(0, {'head': (np.nan, np.nan), 'neck': (1.0, 2.0)}, {'head': False, 'neck': True})
        path = str(tmp_path / 'm.jsonl')
        dataio.save_measurements(dataio.MeasurementSequence([frame], INTRINSICS), path)
        loaded = dataio.load_measurements(path).frames[0]
        assert not loaded.is_visible('head')
        assert np.all(np.isnan(loaded.points['head']))

    def test_invalid_json_line(self, measurements, tmp_path):
        path = tmp_path / 'm.jsonl'
        dataio.save_measurements(measurements, str(path))
        lines = path.read_text().splitlines()
        lines[2] = '{"frame": 1, "joints": '
        path.write_text('\n'.join(lines) + '\n')
        with pytest.raises(ParseError) as info:
            dataio.load_measurements(str(path))
        assert info.value.line == 3

    def test_missing_field(self, tmp_path):
        header = {'schema': dataio.MEASUREMENTS_SCHEMA, 'version': 1,
                  'camera': {'intrinsics': {'fx': 500, 'fy': 500, 'cx': 320, 'cy': 240},
                             'pose': {'tx': 0, 'ty': 0, 'tz': 0, 'alpha': 0, 'beta': 0, 'gamma': 0}}}
        body = json.dumps(header) + '\n' + json.dumps({'frame': 0}) + '\n'
        with pytest.raises(ParseError) as info:
            dataio.load_measurements(_write(tmp_path / 'm.jsonl', body))
        assert info.value.line == 2

    def test_wrong_schema(self, tmp_path):
        path = _write(tmp_path / 'm.jsonl', json.dumps({'schema': 'other', 'version': 1}) + '\n')
        with pytest.raises(SchemaError):
            dataio.load_measurements(path)


class TestOtherFiles:

    def test_prior(self, tmp_path):
        layout = bm.StateLayout.arm('left')
        rng = np.random.default_rng(0)
        comps = tuple(gs.Gaussian(rng.normal(size=layout.dim), np.eye(layout.dim) * (k + 1)) for k in range(2))
        mixture = gs.GaussianMixture([0.3, 0.7], comps)
        dataio.save_prior(mixture, layout, dataio.prior_path(str(tmp_path), 'left'))
        loaded, loaded_layout = dataio.load_prior(dataio.prior_path(str(tmp_path), 'left'))
        assert loaded_layout == layout
        np.testing.assert_array_equal(loaded.weights, mixture.weights)
        np.testing.assert_array_equal(loaded.means, mixture.means)
        np.testing.assert_array_equal(loaded.covs, mixture.covs)

    def test_missing_prior_side(self, tmp_path):
        with pytest.raises(DataError):
            dataio.load_priors(str(tmp_path))

    def test_edges(self, tmp_path):
        edges = {0: [assoc.EdgeSegment(1.5, 2.5, 0.25)], 4: [assoc.EdgeSegment(3.0, 4.0, 3.0), assoc.EdgeSegment(0.0, 0.0, 0.0)]}
        path = str(tmp_path / 'edges.csv')
        dataio.save_edges_csv(edges, path)
        assert dataio.load_edges_csv(path) == edges

    def test_estimates(self, tmp_path):
        rng = np.random.default_rng(2)
        estimates = [bm.FullBodyEstimate(t, rng.normal(size=(len(bm.JOINTS), 3))) for t in (3, 4, 5)]
        diagnostics = pd.DataFrame({'frame': [3, 4, 5], 'iter_time_seconds': [0.1, 0.2, 0.3]})
        path = str(tmp_path / 'estimates.csv')
        dataio.save_estimates_csv(trackers.TrackingResult(estimates, diagnostics, 'mkf-fixed'), path)
        loaded = dataio.load_estimates_csv(path)
        assert [e.index for e in loaded] == [3, 4, 5]
        for a, b in zip(estimates, loaded):
            np.testing.assert_array_equal(a.values, b.values)

    def test_atomic_write_creates_directory(self, tmp_path):
        path = tmp_path / 'a' / 'b' / 'out.txt'
        dataio.atomic_write(str(path), 'ok\n')
        assert path.read_text() == 'ok\n'
        assert [p.name for p in path.parent.iterdir()] == ['out.txt']


class TestSynthSkeleton:

    def test_constant_bones(self, recording):
        spec = dataio.MotionSpec()
        for side in bm.SIDES:
            np.testing.assert_allclose(_distance(recording, side + '_shoulder', side + '_elbow'), spec.upper_arm, atol=1e-9)
            np.testing.assert_allclose(_distance(recording, side + '_elbow', side + '_hand'), spec.forearm, atol=1e-9)
        np.testing.assert_allclose(_distance(recording, 'neck', 'head'), spec.neck_to_head, atol=1e-12)

    def test_in_front_of_camera(self, recording):
        assert np.all(recording.positions[..., 2] > 1.0)

    def test_clap_apex(self):
        rec = dataio.synth_skeleton(dataio.MotionSpec(primitives=('clap',), segment_frames=90, blend_frames=0), 90, 0)
        gap = _distance(rec, 'left_hand', 'right_hand')
        assert gap.min() < 0.05
        assert gap.max() > 0.2

    def test_hands_crossed(self):
        rec = dataio.synth_skeleton(dataio.MotionSpec(primitives=('hands_crossed',), segment_frames=90,
                                                      blend_frames=0), 90, 0)
        left, right = rec.joint('left_hand')[:, 0], rec.joint('right_hand')[:, 0]
        assert left[0] > right[0]
        assert np.all(left[30:] < right[30:])

    def test_deterministic(self):
        spec = dataio.MotionSpec(primitives=('random',), segment_frames=30, blend_frames=5)
        a = dataio.synth_skeleton(spec, 60, 3)
        b = dataio.synth_skeleton(spec, 60, 3)
        c = dataio.synth_skeleton(spec, 60, 4)
        np.testing.assert_array_equal(a.positions, b.positions)
        assert not np.allclose(a.positions, c.positions)

    def test_unknown_primitive(self):
        with pytest.raises(ValueError):
            dataio.MotionSpec(primitives=('cartwheel',))

    def test_measurements(self, recording, measurements):
        assert len(measurements) == len(recording)
        frame = measurements.frames[7]
        assert set(frame.points) == set(bm.MEASURABLE)
        assert frame.any_visible
        expected = geo.project_points(measurements.projection, recording.joint('head')[7][None])[0, :2]
        np.testing.assert_allclose(frame.points['head'], expected)

    def test_measurements_of_unrecorded_joint(self, recording):
        keep = [k for k, j in enumerate(recording.joints) if j != 'left_hand']
        partial = dataio.SkeletonRecording([recording.joints[k] for k in keep], recording.positions[:, keep])
        with pytest.raises(MissingJoint) as info:
            dataio.make_measurements(partial, INTRINSICS)
        assert info.value.joint == 'left_hand'
