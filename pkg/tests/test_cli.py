"""Tests for the command-line interface: exit codes, artifacts and the end-to-end pipeline."""

import json

import numpy as np
import pandas as pd
import pytest

from chf_survival.boosting import load_model, save_model
from chf_survival.cli import load_manifest, main, split_dataset
from chf_survival.exceptions import DatasetError
from chf_survival.feature_engineering import FEATURE_COLUMNS

from .conftest import manifest_for

FAST_CONFIG = (
    "n_boot = 20\n"
    "progress = false\n"
    "explain.n_coalitions = 256\n"
    "explain.background_size = 30\n"
)


@pytest.fixture(scope='module')
def feature_run(tmp_path_factory, small_cohort, toy_model):
    """Feature-level run directory: manifest, features, model, split and a fast config."""
    out = tmp_path_factory.mktemp('feature_run')
    data = small_cohort.dataset
    manifest_for(data).to_csv(out / 'manifest.csv', index=False)
    data.to_frame().drop(columns=['time', 'event']).to_csv(out / 'features.csv', index=False)
    save_model(toy_model, out / 'model.json')
    train, test = split_dataset(data, 0.3, seed=0)
    labels = np.full(len(data), 'train', dtype=object)
    labels[test] = 'test'
    pd.DataFrame({'record_id': data.record_ids, 'split': labels}).to_csv(out / 'split.csv', index=False)
    (out / 'run.cfg').write_text(FAST_CONFIG)
    return out


def _args(run, *extra):
    return [str(a) for a in extra] + ['--config', str(run / 'run.cfg')]


class TestManifest:

    def test_duplicate_record_id(self, tmp_path, small_cohort):
        manifest = manifest_for(small_cohort.dataset.subset(range(4)))
        manifest.loc[2, 'record_id'] = manifest.loc[0, 'record_id']
        manifest.to_csv(tmp_path / 'manifest.csv', index=False)
        with pytest.raises(DatasetError, match=r"manifest row 4: duplicate record_id 'S000'"):
            load_manifest(tmp_path / 'manifest.csv', check_paths=False)

    def test_bad_flag(self, tmp_path, small_cohort):
        manifest = manifest_for(small_cohort.dataset.subset(range(4)))
        manifest['sex'] = manifest['sex'].astype(object)
        manifest.loc[1, 'sex'] = 'male'
        manifest.to_csv(tmp_path / 'manifest.csv', index=False)
        with pytest.raises(DatasetError, match="manifest row 3: sex"):
            load_manifest(tmp_path / 'manifest.csv', check_paths=False)

    def test_missing_record_file(self, tmp_path, small_cohort):
        manifest_for(small_cohort.dataset.subset(range(2))).to_csv(tmp_path / 'manifest.csv', index=False)
        with pytest.raises(DatasetError, match="record file not found"):
            load_manifest(tmp_path / 'manifest.csv')

    def test_wrong_header(self, tmp_path, small_cohort):
        manifest = manifest_for(small_cohort.dataset.subset(range(2))).drop(columns=['fs'])
        manifest.to_csv(tmp_path / 'manifest.csv', index=False)
        with pytest.raises(DatasetError, match="header"):
            load_manifest(tmp_path / 'manifest.csv', check_paths=False)


class TestCommands:

    def test_config(self, tmp_path, capsys):
        assert main(['config', '--out', str(tmp_path / 'run.cfg')]) == 0
        assert "seed = 42" in (tmp_path / 'run.cfg').read_text()
        assert "wrote" in capsys.readouterr().out

    def test_describe(self, feature_run, tmp_path):
        out = tmp_path / 'describe.csv'
        code = main(['describe'] + _args(feature_run, '--features', feature_run / 'features.csv',
                                         '--manifest', feature_run / 'manifest.csv', '--out', out))
        assert code == 0
        table = pd.read_csv(out)
        assert set(FEATURE_COLUMNS) <= set(table['feature'])

    def test_evaluate_with_comparator(self, feature_run, tmp_path):
        out = tmp_path / 'report.json'
        code = main(['evaluate'] + _args(feature_run, '--model', feature_run / 'model.json',
                                         '--features', feature_run / 'features.csv',
                                         '--manifest', feature_run / 'manifest.csv',
                                         '--split', feature_run / 'split.csv', '--cox', '--out', out))
        assert code == 0
        report = json.loads(out.read_text())
        assert set(report['models']) == {'aft_boosting', 'cox'}
        c_index = report['models']['aft_boosting']['metrics']['C-index']
        assert 0.0 <= c_index['lo'] <= c_index['hi'] <= 1.0
        assert report['models']['aft_boosting']['n_subjects'] == 90
        assert report['models']['aft_boosting']['n_boot'] == 20
        assert out.with_suffix('.csv').exists()

    def test_evaluate_is_reproducible(self, feature_run, tmp_path):
        reports = []
        for name in ('first.json', 'second.json'):
            out = tmp_path / name
            main(['evaluate'] + _args(feature_run, '--model', feature_run / 'model.json',
                                      '--features', feature_run / 'features.csv',
                                      '--manifest', feature_run / 'manifest.csv', '--out', out))
            reports.append(json.loads(out.read_text()))
        assert reports[0] == reports[1]

    def test_comparator_without_split_is_a_usage_error(self, feature_run, tmp_path, capsys):
        code = main(['evaluate'] + _args(feature_run, '--model', feature_run / 'model.json',
                                         '--features', feature_run / 'features.csv',
                                         '--manifest', feature_run / 'manifest.csv', '--cox',
                                         '--out', tmp_path / 'report.json'))
        assert code == 2
        assert capsys.readouterr().err.startswith("error: usage:")

    def test_feature_schema_mismatch(self, feature_run, tmp_path, capsys):
        features = pd.read_csv(feature_run / 'features.csv').drop(columns=['sdnn'])
        features.to_csv(tmp_path / 'features.csv', index=False)
        code = main(['evaluate'] + _args(feature_run, '--model', feature_run / 'model.json',
                                         '--features', tmp_path / 'features.csv',
                                         '--manifest', feature_run / 'manifest.csv',
                                         '--out', tmp_path / 'report.json'))
        assert code == 1
        assert "feature schema mismatch" in capsys.readouterr().err

    def test_corrupt_model_file(self, feature_run, tmp_path, capsys):
        (tmp_path / 'model.json').write_text("{}")
        code = main(['evaluate'] + _args(feature_run, '--model', tmp_path / 'model.json',
                                         '--features', feature_run / 'features.csv',
                                         '--manifest', feature_run / 'manifest.csv',
                                         '--out', tmp_path / 'report.json'))
        assert code == 1
        assert capsys.readouterr().err.startswith("error: ModelFormatError:")

    @pytest.mark.parametrize('content', [None, "record_id,fold\nS000,1\n"], ids=['missing', 'no_split_column'])
    def test_evaluate_bad_split_file(self, feature_run, tmp_path, capsys, content):
        split = tmp_path / 'split.csv'
        if content is not None:
            split.write_text(content)
        code = main(['--log-level', 'ERROR', 'evaluate'] + _args(
            feature_run, '--model', feature_run / 'model.json', '--features', feature_run / 'features.csv',
            '--manifest', feature_run / 'manifest.csv', '--split', split, '--out', tmp_path / 'report.json'))
        assert code == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        assert err[0].startswith("error: DatasetError: cannot read split file")
        assert str(split) in err[0]

    def test_explain_missing_split_file(self, feature_run, tmp_path, capsys):
        split = tmp_path / 'missing.csv'
        code = main(['--log-level', 'ERROR', 'explain', '--global'] + _args(
            feature_run, '--model', feature_run / 'model.json', '--features', feature_run / 'features.csv',
            '--split', split, '--out', tmp_path / 'shap'))
        assert code == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        assert err[0].startswith("error: DatasetError: cannot read split file")

    def test_explain_global(self, feature_run, tmp_path):
        out = tmp_path / 'shap'
        code = main(['explain', '--global'] + _args(feature_run, '--model', feature_run / 'model.json',
                                                    '--features', feature_run / 'features.csv',
                                                    '--split', feature_run / 'split.csv', '--out', out))
        assert code == 0
        importance = json.loads((out / 'importance.json').read_text())
        assert importance['n_rows'] == 90
        assert importance['window'] == 90
        assert len(importance['top_features']) == 10
        long = pd.read_csv(out / 'shap_long.csv')
        assert len(long) == 90 * len(FEATURE_COLUMNS)

    def test_explain_patient(self, feature_run, small_cohort, tmp_path):
        out = tmp_path / 'shap'
        patient = small_cohort.dataset.record_ids[5]
        code = main(['explain', '--patient', patient] + _args(
            feature_run, '--model', feature_run / 'model.json', '--features', feature_run / 'features.csv',
            '--split', feature_run / 'split.csv', '--horizon', 730, '--out', out))
        assert code == 0
        report = json.loads((out / f'patient_{patient}.json').read_text())
        assert report['horizon_days'] == 730.0
        total = report['base_value'] + sum(c['contribution'] for c in report['contributions'])
        assert total == pytest.approx(report['probability'], abs=1e-9)
        model = load_model(feature_run / 'model.json')
        row = small_cohort.dataset.features.iloc[[5]]
        assert report['probability'] == pytest.approx(model.predict_event_probability(row, 730.0)[0])

    def test_explain_unknown_patient(self, feature_run, tmp_path):
        code = main(['explain', '--patient', 'nobody'] + _args(
            feature_run, '--model', feature_run / 'model.json', '--features', feature_run / 'features.csv',
            '--out', tmp_path))
        assert code == 2

    def test_seglen_rejects_partial_segments(self, ecg_cohort_dir, tmp_path, capsys):
        code = main(['seglen', '--manifest', str(ecg_cohort_dir / 'manifest.csv'), '--lengths', '30,45',
                     '--out', str(tmp_path / 'seglen.csv')])
        assert code == 2
        assert "45" in capsys.readouterr().err

    def test_extract(self, ecg_cohort_dir, tmp_path):
        code = main(['extract', '--no-progress', '--manifest', str(ecg_cohort_dir / 'manifest.csv'),
                     '--out', str(tmp_path), '--dump-cycles'])
        assert code == 0
        features = pd.read_csv(tmp_path / 'features.csv', dtype={'record_id': str})
        diagnostics = json.loads((tmp_path / 'diagnostics.json').read_text())
        assert diagnostics['n_extracted'] == len(features)
        assert len(list((tmp_path / 'cycles').glob('*.csv'))) == len(features)

    def test_simulate(self, tmp_path, capsys):
        out = tmp_path / 'cohort'
        code = main(['simulate', '--no-progress', '--out', str(out), '--n', '20', '--duration', '30',
                     '--event-rate', '0.4', '--seed', '3'])
        assert code == 0
        manifest = load_manifest(out / 'manifest.csv')
        assert len(manifest) == 20
        truth = json.loads((out / 'truth.json').read_text())
        assert truth['expected_event_rate'] == pytest.approx(0.4, abs=0.01)
        assert truth['seed'] == 3
        assert "oracle C-index" in capsys.readouterr().out

    def test_missing_required_argument(self):
        with pytest.raises(SystemExit) as info:
            main(['train', '--features', 'f.csv'])
        assert info.value.code == 2


@pytest.mark.slow
class TestPipeline:

    def test_simulate_extract_train_evaluate(self, tmp_path):
        cohort, run = tmp_path / 'cohort', tmp_path / 'run'
        config = tmp_path / 'run.cfg'
        config.write_text("cv_folds = 2\nn_boot = 50\nprogress = false\n")
        common = ['--config', str(config)]

        assert main(['simulate', '--out', str(cohort), '--n', '150', '--event-rate', '0.5'] + common) == 0
        assert main(['extract', '--manifest', str(cohort / 'manifest.csv'), '--out', str(run)] + common) == 0
        assert main(['train', '--features', str(run / 'features.csv'), '--manifest', str(cohort / 'manifest.csv'),
                     '--out', str(run)] + common) == 0
        assert (run / 'model.json').exists() and (run / 'cv.csv').exists()
        split = pd.read_csv(run / 'split.csv')
        assert set(split['split']) == {'train', 'test'}

        code = main(['evaluate', '--model', str(run / 'model.json'), '--features', str(run / 'features.csv'),
                     '--manifest', str(cohort / 'manifest.csv'), '--split', str(run / 'split.csv'),
                     '--out', str(run / 'report.json')] + common)
        assert code == 0
        report = json.loads((run / 'report.json').read_text())
        assert report['models']['aft_boosting']['metrics']['C-index']['point'] > 0.6

        cv = pd.read_csv(run / 'cv.csv')
        assert len(cv) == 12
