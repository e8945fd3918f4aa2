import json

import numpy as np
import pandas as pd
import pytest
import yaml

from mkfpose import cli
from mkfpose import dataio

SMALL = ['-q', '--no-progress', '-s', 'synth.segment_frames=20', '-s', 'synth.blend_frames=5']


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    """Synthetic data and priors shared by the end-to-end tests."""
    root = tmp_path_factory.mktemp('cli')
    assert cli.main(SMALL + ['gen-synth', '-o', str(root / 'data'), '-n', '40', '--seed', '2']) == 0
    assert cli.main(SMALL + ['train-prior', str(root / 'data' / 'skeleton.csv'), '-o', str(root / 'prior'),
                             '-k', '2', '--n-views', '3', '--seed', '0']) == 0
    return root


class TestCommands:

    def test_gen_synth_outputs(self, workspace):
        data = workspace / 'data'
        rec = dataio.load_skeleton_csv(str(data / 'skeleton.csv'))
        seq = dataio.load_measurements(str(data / 'measurements.jsonl'))
        edges = dataio.load_edges_csv(str(data / 'edges.csv'))
        assert len(rec) == len(seq) == 40
        assert seq.provenance['source'] == 'gen-synth'
        assert len(edges) == 40
        assert all(len(segments) == 20 for segments in edges.values())

    def test_train_prior_outputs(self, workspace):
        priors = dataio.load_priors(str(workspace / 'prior'))
        assert set(priors) == {'left', 'right'}
        for side, (mixture, layout) in priors.items():
            assert mixture.n_components == 2
            assert layout.side == side
        log = json.loads((workspace / 'prior' / 'train_log.json').read_text())
        assert log['left']['n_states'] == 120

    @pytest.mark.parametrize('variant', ['mkf-fixed', 'pf-gmm'])
    def test_track_and_eval(self, workspace, tmp_path, variant):
        data = workspace / 'data'
        out = tmp_path / 'track'
        code = cli.main(SMALL + ['-s', 'tracker.n_particles=200', 'track', str(data / 'measurements.jsonl'),
                                 '-p', str(workspace / 'prior'), '-o', str(out), '--variant', variant,
                                 '--edge-file', str(data / 'edges.csv')])
        assert code == 0
        estimates = dataio.load_estimates_csv(str(out / 'estimates.csv'))
        assert len(estimates) == 40
        assert len(dataio.load_skeleton_csv(str(out / 'estimates_3d.csv'))) == 40

        code = cli.main(SMALL + ['eval', str(out / 'estimates.csv'), str(data / 'skeleton.csv'),
                                 '-m', str(data / 'measurements.jsonl'), '-o', str(tmp_path / 'eval')])
        assert code == 0
        summary = json.loads((tmp_path / 'eval' / 'summary.json').read_text())
        assert summary['n_frames'] == 40
        assert len(summary['pcp']['values']) == 20
        assert np.all(np.diff(summary['pcp']['values']) >= 0)
        assert (tmp_path / 'eval' / 'pcp.dat').read_text().startswith('# threshold pcp')
        assert len(pd.read_csv(tmp_path / 'eval' / 'pixel_errors.csv')) == 40

    def test_corrupt(self, workspace, tmp_path):
        out = tmp_path / 'corrupted.jsonl'
        code = cli.main(SMALL + ['-s', 'corruption.p_swap_onset=0.2', 'corrupt',
                                 str(workspace / 'data' / 'measurements.jsonl'), '-o', str(out), '--seed', '4'])
        assert code == 0
        info = dataio.load_measurements(str(out)).provenance['corruption']
        assert info['seed'] == 4
        assert info['p_swap_onset'] == 0.2

    def test_bench(self, workspace, tmp_path, capsys):
        data = workspace / 'data'
        code = cli.main(SMALL + ['bench', str(data / 'measurements.jsonl'), '-p', str(workspace / 'prior'),
                                 '-t', str(data / 'skeleton.csv'), '--variants', 'mkf-fixed', 'pf-simple-scaled',
                                 '--seeds', '0', '1', '--n-particles', '100', '-o', str(tmp_path)])
        assert code == 0
        raw = pd.read_csv(tmp_path / 'bench_raw.csv')
        summary = pd.read_csv(tmp_path / 'bench_summary.csv')
        assert len(raw) == 4
        assert set(summary['variant']) == {'mkf-fixed', 'pf-simple-scaled'}
        assert summary['mean_iter_time'].is_monotonic_increasing
        assert raw['mean_error_px'].notna().all()
        assert 'mean_iter_time' in capsys.readouterr().out

    def test_bench_on_synthetic_sequence(self, workspace, tmp_path):
        code = cli.main(SMALL + ['bench', '-p', str(workspace / 'prior'), '-n', '15', '--variants', 'mkf-fixed',
                                 '--seeds', '0', '--n-particles', '50', '-o', str(tmp_path)])
        assert code == 0
        raw = pd.read_csv(tmp_path / 'bench_raw.csv')
        summary = pd.read_csv(tmp_path / 'bench_summary.csv')
        assert raw['n_frames'].tolist() == [15]
        assert np.isfinite(summary['mean_error_px']).all()

    def test_bench_file_without_truth(self, workspace, tmp_path):
        code = cli.main(SMALL + ['bench', str(workspace / 'data' / 'measurements.jsonl'),
                                 '-p', str(workspace / 'prior'), '-o', str(tmp_path)])
        assert code == cli.EXIT_USAGE
        assert not (tmp_path / 'bench_raw.csv').exists()

    def test_show_config(self, capsys):
        assert cli.main(['-s', 'tracker.variant=pf-gmm', 'show-config']) == 0
        assert yaml.safe_load(capsys.readouterr().out)['tracker']['variant'] == 'pf-gmm'


class TestExitCodes:

    def test_no_command(self):
        with pytest.raises(SystemExit) as info:
            cli.main([])
        assert info.value.code == cli.EXIT_USAGE

    def test_bad_variant_choice(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            cli.main(['track', 'm.jsonl', '-p', str(tmp_path), '-o', str(tmp_path), '--variant', 'ukf'])
        assert info.value.code == cli.EXIT_USAGE

    def test_unknown_config_key(self):
        assert cli.main(['-s', 'nope.key=1', 'show-config']) == cli.EXIT_USAGE

    def test_non_numeric_override(self, workspace, tmp_path):
        code = cli.main(['-q', '-s', 'tracker.n_particles=abc', 'track',
                         str(workspace / 'data' / 'measurements.jsonl'), '-p', str(workspace / 'prior'),
                         '-o', str(tmp_path)])
        assert code == cli.EXIT_USAGE

    def test_missing_input(self, tmp_path):
        code = cli.main(['track', str(tmp_path / 'missing.jsonl'), '-p', str(tmp_path), '-o', str(tmp_path)])
        assert code == cli.EXIT_DATA

    def test_missing_prior(self, workspace, tmp_path):
        code = cli.main(['-q', 'track', str(workspace / 'data' / 'measurements.jsonl'), '-p', str(tmp_path),
                         '-o', str(tmp_path)])
        assert code == cli.EXIT_DATA
