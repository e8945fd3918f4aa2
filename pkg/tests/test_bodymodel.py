import numpy as np
import pytest
from scipy.integrate import trapezoid

from mkfpose import bodymodel as bm
from mkfpose import dataio
from mkfpose import gaussian as gs
from mkfpose import geometry as geo
from mkfpose.errors import DimensionMismatch, NoVisibleJoints

GRID = np.linspace(-20.0, 20.0, 40001)


def _mixture_1d(weights, means, variances):
    return gs.GaussianMixture(weights, tuple(gs.Gaussian([m], [[v]]) for m, v in zip(means, variances)))


def _transition_on_grid(prior, q, x_prev):
    transition = bm.PriorTransition(prior, [[q]])
    return np.exp(transition.logpdf(np.full((len(GRID), 1), x_prev), GRID[:, None]))


class TestLayout:

    def test_arm_chains(self):
        left = bm.StateLayout.arm('left')
        assert left.joints == ('head', 'neck', 'left_shoulder', 'left_elbow', 'left_hand')
        assert left.dim == 15
        np.testing.assert_array_equal(left.scale_rows, [2, 5, 8, 11, 14])

    def test_duplicate_joints_rejected(self):
        with pytest.raises(ValueError):
            bm.StateLayout(('head', 'head'))

    def test_observation_rows(self):
        op = bm.ObservationParams.for_layout(bm.StateLayout.arm('right'))
        assert op.joints == ('head', 'neck', 'right_hand')
        np.testing.assert_array_equal(op.rows, [0, 1, 3, 4, 12, 13])
        assert op.H.shape == (6, 15)

    def test_zero_measurement_noise_rejected(self, head_layout):
        with pytest.raises(ValueError):
            bm.ObservationParams(head_layout, ('head',), [0.0, 1.0])

    def test_zero_scale_rejected(self, head_layout):
        with pytest.raises(ValueError):
            bm.PoseState(head_layout, [1.0, 2.0, 0.0])


class TestTransition:

    def test_flat_prior_is_random_walk(self):
        d = 3
        q = np.diag([4.0, 4.0, 0.01])
        prior = gs.GaussianMixture([1.0], (gs.Gaussian(np.zeros(d), 1e6 * np.eye(d)),))
        x_prev = np.array([1.0, -2.0, 2.0])
        x = x_prev + np.array([1.5, 0.5, 0.05])
        logp = bm.transition_logpdf(prior, bm.TransitionParams(q), x_prev, x)
        expected = gs.gauss_logpdf(gs.Gaussian(x_prev, q), x)
        assert np.exp(logp) == pytest.approx(np.exp(expected), rel=1e-3)

    def test_quadrature_single_component(self):
        prior = _mixture_1d([1.0], [2.0], [3.0])
        q, x_prev = 0.7, -1.0
        dens = _transition_on_grid(prior, q, x_prev)
        product = gs.gauss_pdf(gs.Gaussian([x_prev], [[q]]), GRID[:, None]) * gs.gmm_pdf(prior, GRID[:, None])
        np.testing.assert_allclose(dens, product / trapezoid(product, GRID), rtol=1e-6, atol=1e-300)

    def test_integrates_to_one(self):
        prior = _mixture_1d([0.3, 0.7], [-3.0, 4.0], [1.0, 2.0])
        assert trapezoid(_transition_on_grid(prior, 1.5, 0.5), GRID) == pytest.approx(1.0, abs=1e-6)

    def test_evidence_matches_quadrature(self):
        prior = _mixture_1d([0.4, 0.6], [-1.0, 2.0], [0.5, 1.5])
        q, x_prev = 0.8, 0.3
        integrand = gs.gauss_pdf(gs.Gaussian([x_prev], [[q]]), GRID[:, None]) * gs.gmm_pdf(prior, GRID[:, None])
        evidence = np.exp(bm.PriorTransition(prior, [[q]]).log_evidence([[x_prev]])[0])
        assert evidence == pytest.approx(trapezoid(integrand, GRID), rel=1e-6)

    def test_batched_density_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        prior = gs.GaussianMixture([0.2, 0.5, 0.3], tuple(
            gs.Gaussian(rng.standard_normal(3), np.diag(rng.uniform(0.5, 2.0, 3))) for _ in range(3)))
        tp = bm.TransitionParams(np.diag([0.5, 0.4, 0.3]))
        x_prev = rng.standard_normal((5, 3))
        x = rng.standard_normal((5, 3))
        batched = bm.PriorTransition(prior, tp.q).logpdf(x_prev, x)
        direct = [bm.transition_logpdf(prior, tp, a, b) for a, b in zip(x_prev, x)]
        np.testing.assert_allclose(batched, direct, rtol=1e-10)

    def test_dimension_mismatch(self):
        prior = _mixture_1d([1.0], [0.0], [1.0])
        with pytest.raises(DimensionMismatch):
            bm.transition_logpdf(prior, bm.TransitionParams([[1.0]]), [0.0, 1.0], [0.0, 1.0])

    def test_sampler_matches_density_moments(self):
        prior = _mixture_1d([0.5, 0.5], [-2.0, 2.0], [0.5, 0.5])
        q, x_prev = 1.0, 0.5
        x, _ = bm.PriorTransition(prior, [[q]]).sample(np.full((200000, 1), x_prev), np.random.default_rng(1))
        dens = _transition_on_grid(prior, q, x_prev)
        mean = trapezoid(GRID * dens, GRID)
        var = trapezoid((GRID - mean) ** 2 * dens, GRID)
        assert x.mean() == pytest.approx(mean, abs=4 * np.sqrt(var / 200000))


class TestConditional:

    def test_fixed_point(self):
        comp = gs.Gaussian([1.0, 2.0, 3.0], np.diag([1.0, 2.0, 3.0]))
        g = bm.transition_conditional(comp, bm.TransitionParams(np.diag([0.5, 0.5, 0.5])), comp.mean)
        np.testing.assert_allclose(g.mean, comp.mean, atol=1e-12)

    def test_unit_covariances(self):
        comp = gs.Gaussian([2.0, 4.0], np.eye(2))
        g = bm.transition_conditional(comp, bm.TransitionParams(np.eye(2)), [0.0, 0.0])
        np.testing.assert_allclose(g.mean, [1.0, 2.0], atol=1e-12)
        np.testing.assert_allclose(g.cov, 0.5 * np.eye(2), atol=1e-12)

    def test_frozen_state_limit(self):
        comp = gs.Gaussian([5.0, 5.0], np.eye(2))
        g = bm.transition_conditional(comp, bm.TransitionParams(1e-9 * np.eye(2)), [1.0, -1.0])
        np.testing.assert_allclose(g.mean, [1.0, -1.0], atol=1e-6)

    def test_mean_is_affine_in_previous_state(self):
        rng = np.random.default_rng(3)
        comp = gs.Gaussian(rng.standard_normal(3), np.diag(rng.uniform(0.5, 2, 3)))
        tp = bm.TransitionParams(np.diag(rng.uniform(0.5, 2, 3)))
        x0 = rng.standard_normal(3)
        base = bm.transition_conditional(comp, tp, x0)
        f = np.linalg.inv(np.linalg.inv(tp.q) + np.linalg.inv(comp.cov)) @ np.linalg.inv(tp.q)
        for k in range(3):
            step = np.eye(3)[k]
            moved = bm.transition_conditional(comp, tp, x0 + step)
            np.testing.assert_allclose(moved.mean - base.mean, f[:, k], atol=1e-10)
            np.testing.assert_allclose(moved.cov, base.cov, atol=1e-14)

    def test_isotropic_mean_on_segment(self):
        comp = gs.Gaussian([4.0, 0.0, 2.0], 3.0 * np.eye(3))
        x_prev = np.array([0.0, 2.0, 1.0])
        g = bm.transition_conditional(comp, bm.TransitionParams(np.eye(3)), x_prev)
        # weight of the prior mean is q / (q + s)
        np.testing.assert_allclose(g.mean, x_prev + 0.25 * (comp.mean - x_prev), atol=1e-12)


class TestObservation:

    def _op(self):
        layout = bm.StateLayout.arm('left')
        return bm.ObservationParams.for_layout(layout, pixel_std=8.0), layout

    def _state_and_frame(self, layout, op):
        x = np.tile([100.0, 50.0, 2.0], len(layout.joints)) + np.arange(layout.dim)
        points = {j: x[layout.slot(j)][:2] for j in op.joints}
        return x, bm.MeasurementFrame(0, points, {j: True for j in op.joints})

    def test_exact_measurement(self):
        op, layout = self._op()
        x, z = self._state_and_frame(layout, op)
        m = len(op.rows)
        assert bm.observation_logpdf(op, x, z) == pytest.approx(-0.5 * np.log((2 * np.pi) ** m * 64.0 ** m))

    def test_offset_joint(self):
        op, layout = self._op()
        x, z = self._state_and_frame(layout, op)
        base = bm.observation_logpdf(op, x, z)
        points = dict(z.points)
        points['left_hand'] = points['left_hand'] + [3.0, 0.0]
        shifted = bm.MeasurementFrame(0, points, z.visible)
        assert bm.observation_logpdf(op, x, shifted) == pytest.approx(base - 9.0 / (2 * 64.0))

    def test_invisible_rows_dropped(self):
        op, layout = self._op()
        x, z = self._state_and_frame(layout, op)
        visible = dict(z.visible, left_hand=False)
        rows, zv, _ = op.select(bm.MeasurementFrame(0, z.points, visible))
        assert len(rows) == len(op.rows) - 2 == len(zv)

    def test_nothing_visible(self):
        op, layout = self._op()
        x, z = self._state_and_frame(layout, op)
        hidden = bm.MeasurementFrame(0, z.points, {j: False for j in z.points})
        with pytest.raises(NoVisibleJoints):
            bm.observation_logpdf(op, x, hidden)
        np.testing.assert_array_equal(bm.observation_loglik(op, x[None], hidden), [0.0])


class TestTrainingSet:

    def test_single_identity_view(self, recording):
        intr = geo.CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
        zero = geo.ViewpointLimits(0, 0, 0, 0, 0, 0)
        states = bm.generate_training_set(recording, intr, 1, zero, rng_seed=0)
        hand = recording.joint('left_hand')
        got = np.array([s.values[12:15] for s in states['left']])
        np.testing.assert_allclose(got[:, 0], hand[:, 0] / hand[:, 2], rtol=1e-12)
        np.testing.assert_allclose(got[:, 1], hand[:, 1] / hand[:, 2], rtol=1e-12)
        np.testing.assert_allclose(got[:, 2], hand[:, 2], rtol=1e-12)

    def test_counts_and_positive_scale(self):
        spec = dataio.MotionSpec(primitives=('random',))
        rec = dataio.synth_skeleton(spec, 100, rng_seed=2)
        states = bm.generate_training_set(rec, geo.CameraIntrinsics(500, 500, 320, 240), 50, rng_seed=4)
        for side in bm.SIDES:
            assert len(states[side]) == 5000
            data = bm.stack_states(states[side])
            assert np.all(data[:, 2::3] > 0)


class TestMerge:

    def _states(self, head_left, head_right):
        left = bm.StateLayout.arm('left')
        right = bm.StateLayout.arm('right')
        lv = np.arange(1.0, 16.0)
        rv = np.arange(101.0, 116.0)
        lv[0:3] = head_left
        rv[0:3] = head_right
        return bm.PoseState(left, lv), bm.PoseState(right, rv)

    def test_identical_heads(self):
        est = bm.merge_arm_estimates(*self._states([5.0, 6.0, 2.0], [5.0, 6.0, 2.0]))
        np.testing.assert_array_equal(est.joint('head'), [5.0, 6.0, 2.0])

    def test_heads_averaged(self):
        est = bm.merge_arm_estimates(*self._states([10.0, 10.0, 2.0], [14.0, 14.0, 2.4]))
        np.testing.assert_allclose(est.joint('head'), [12.0, 12.0, 2.2])

    def test_arm_joints_from_own_side(self):
        left, right = self._states([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
        est = bm.merge_arm_estimates(left, right, index=7)
        assert est.index == 7
        np.testing.assert_array_equal(est.joint('left_hand'), left.values[12:15])
        np.testing.assert_array_equal(est.joint('right_elbow'), right.values[9:12])
