import numpy as np
import pytest

from mkfpose import bodymodel as bm
from mkfpose import dataio
from mkfpose import gaussian as gs
from mkfpose import geometry as geo

INTRINSICS = geo.CameraIntrinsics(500.0, 500.0, 320.0, 240.0)


@pytest.fixture
def head_layout():
    """Single-joint layout: a 3-dimensional state observed in its first two entries."""
    return bm.StateLayout(('head',))


@pytest.fixture
def head_model(head_layout):
    """Factory of single-joint chain models with diagonal Q, R and a given prior."""
    def make(means, covs, weights=None, q=(1.0, 1.0, 0.01), r=(4.0, 4.0)):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        weights = np.full(len(means), 1.0 / len(means)) if weights is None else np.asarray(weights, dtype=float)
        comps = tuple(gs.Gaussian(mu, cov) for mu, cov in zip(means, covs))
        return bm.ChainModel(head_layout, gs.GaussianMixture(weights, comps),
                             bm.TransitionParams(np.diag(q)), bm.ObservationParams(head_layout, ('head',), r))
    return make


@pytest.fixture
def head_frame():
    def make(index, u, v, visible=True):
        return bm.MeasurementFrame(index, {'head': (u, v)}, {'head': visible})
    return make


@pytest.fixture(scope='session')
def recording():
    """Short synthetic recording with hands well apart."""
    spec = dataio.MotionSpec(primitives=('random', 'wave', 'reach'), segment_frames=40, blend_frames=10)
    return dataio.synth_skeleton(spec, 120, rng_seed=1)


@pytest.fixture(scope='session')
def measurements(recording):
    return dataio.make_measurements(recording, INTRINSICS, geo.CameraPose(), rng_seed=1)


@pytest.fixture(scope='session')
def broad_models(recording):
    """Chain models whose single-component priors are centred on the recording's mean state."""
    pm = geo.build_projection(INTRINSICS, geo.CameraPose())
    models = {}
    for side in bm.SIDES:
        layout = bm.StateLayout.arm(side)
        uvl = dataio.truth_image_states(recording, pm)
        states = uvl[:, [recording.joints.index(j) for j in layout.joints]].reshape(len(recording), -1)
        cov = np.diag(np.tile([60.0 ** 2, 60.0 ** 2, 0.3 ** 2], len(layout.joints)))
        prior = gs.GaussianMixture([1.0], (gs.Gaussian(states.mean(axis=0), cov),))
        models[side] = bm.ChainModel.default(prior, layout)
    return models
