import numpy as np
import pytest
import yaml

from mkfpose import bodymodel as bm
from mkfpose import config as cfgmod
from mkfpose import gaussian as gs
from mkfpose import trackers
from mkfpose.errors import ConfigError


def _write(tmp_path, payload):
    path = tmp_path / 'config.yaml'
    path.write_text(payload if isinstance(payload, str) else yaml.safe_dump(payload))
    return str(path)


def _priors():
    priors = {}
    for side in bm.SIDES:
        layout = bm.StateLayout.arm(side)
        priors[side] = (gs.GaussianMixture([1.0], (gs.Gaussian(np.zeros(layout.dim), np.eye(layout.dim)),)), layout)
    return priors


class TestLoadConfig:

    def test_defaults(self):
        config = cfgmod.load_config()
        assert config == cfgmod.DEFAULTS
        config['tracker']['n_particles'] = 1
        assert cfgmod.DEFAULTS['tracker']['n_particles'] == 1000

    def test_file(self, tmp_path):
        config = cfgmod.load_config(_write(tmp_path, {'tracker': {'variant': 'pf-gmm'}, 'prior': {'n_components': 4}}))
        assert config['tracker']['variant'] == 'pf-gmm'
        assert config['tracker']['n_particles'] == 1000
        assert config['prior']['n_components'] == 4

    def test_empty_file(self, tmp_path):
        assert cfgmod.load_config(_write(tmp_path, '')) == cfgmod.DEFAULTS

    def test_overrides_win(self, tmp_path):
        path = _write(tmp_path, {'tracker': {'n_particles': 50}})
        config = cfgmod.load_config(path, ['tracker.n_particles=70', 'bench.seeds=[1, 2]'])
        assert config['tracker']['n_particles'] == 70
        assert config['bench']['seeds'] == [1, 2]

    @pytest.mark.parametrize('payload', [
        {'tracker': {'particles': 5}},
        {'trackers': {}},
        {'tracker': 3},
        '- a list\n',
        'tracker: [unclosed\n',
    ])
    def test_invalid_file(self, tmp_path, payload):
        with pytest.raises(ConfigError):
            cfgmod.load_config(_write(tmp_path, payload))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cfgmod.load_config(str(tmp_path / 'missing.yaml'))

    @pytest.mark.parametrize('item', ['tracker', '=3', 'tracker.nope=1', 'tracker.variant=[a'])
    def test_invalid_override(self, item):
        with pytest.raises(ConfigError):
            cfgmod.load_config(overrides=[item])

    def test_dump_round_trip(self):
        config = cfgmod.load_config(overrides=['tracker.variant=mkf-sampled'])
        assert yaml.safe_load(cfgmod.dump_config(config)) == config


class TestBuilders:

    def test_tracker_config(self):
        config = cfgmod.load_config(overrides=['tracker.epsilon_floor=0.01', 'tracker.annealing_burn_in=10'])
        tcfg = cfgmod.tracker_config_from_config(config, variant='pf-simple-scaled')
        assert tcfg.variant == 'pf-simple-scaled'
        assert tcfg.epsilon_floor == 0.01
        assert tcfg.annealing == trackers.AnnealingSchedule(100.0, 10)

    def test_unknown_variant(self):
        config = cfgmod.load_config(overrides=['tracker.variant=ukf'])
        with pytest.raises(ConfigError):
            cfgmod.tracker_config_from_config(config)

    @pytest.mark.parametrize('override', ['tracker.n_particles=abc', 'tracker.resample_threshold=[1, 2]',
                                          'tracker.seed=null'])
    def test_non_numeric_tracker_value(self, override):
        config = cfgmod.load_config(overrides=[override])
        with pytest.raises(ConfigError, match='tracker'):
            cfgmod.tracker_config_from_config(config)

    def test_camera(self):
        intr, pose = cfgmod.camera_from_config(cfgmod.load_config(overrides=['camera.gamma_deg=90']))
        assert intr.fx == 500.0
        assert pose.gamma == pytest.approx(np.pi / 2)

    def test_invalid_camera(self):
        with pytest.raises(ConfigError):
            cfgmod.camera_from_config(cfgmod.load_config(overrides=['camera.fx=-1']))

    def test_chain_models(self):
        config = cfgmod.load_config(overrides=['observation.pixel_std=2', 'observation.measured=[head, left_hand]'])
        models = cfgmod.chain_models_from_config(config, _priors())
        assert models['left'].observation.joints == ('head', 'left_hand')
        assert models['right'].observation.joints == ('head',)
        np.testing.assert_allclose(np.diag(models['left'].observation.r), 4.0)
        np.testing.assert_allclose(np.diag(models['left'].transition.q)[:3], [16.0, 16.0, 0.02 ** 2])

    def test_unknown_measured_joint(self):
        config = cfgmod.load_config(overrides=['observation.measured=[head, left_foot]'])
        with pytest.raises(ConfigError):
            cfgmod.chain_models_from_config(config, _priors())

    def test_edge_params(self):
        p = cfgmod.edge_params_from_config(cfgmod.load_config())
        assert p.sigma_orientation == pytest.approx(np.radians(15.0))
        assert p.mahalanobis_limit == pytest.approx(12.0)

    def test_invalid_corruption(self):
        with pytest.raises(ConfigError):
            cfgmod.corruption_model_from_config(cfgmod.load_config(overrides=['corruption.p_drop=2']))

    def test_motion_spec(self):
        spec = cfgmod.motion_spec_from_config(cfgmod.load_config(overrides=['synth.primitives=[clap]']))
        assert spec.primitives == ('clap',)
        with pytest.raises(ConfigError):
            cfgmod.motion_spec_from_config(cfgmod.load_config(overrides=['synth.primitives=[jump]']))
