"""Smoke tests for the figure writers."""

import pandas as pd
import pytest

from chf_survival.explanation import explain_patient, global_summary, sample_background
from chf_survival.feature_engineering import wave_features
from chf_survival.visualization import Visualizer, _patient_label

from .conftest import gaussian_cycle


@pytest.fixture
def visualizer(tmp_path):
    return Visualizer(tmp_path / 'figures', dpi=40)


def test_mean_cycles(visualizer):
    cycles = {'upright': gaussian_cycle(), 'inverted': gaussian_cycle(t_amplitude=-0.3)}
    waves = {label: wave_features(cycle) for label, cycle in cycles.items()}
    path = visualizer.plot_mean_cycles(cycles, waves)
    assert path.name == 'mean_cycles.png'
    assert path.stat().st_size > 0


def test_seglen(visualizer):
    table = pd.DataFrame({
        'length_s': [30, 60, 90, 30, 60, 90],
        'model': ['aft_boosting'] * 3 + ['cox'] * 3,
        'c_index': [0.70, 0.74, 0.75, 0.66, 0.68, 0.69],
        'lo': [0.65, 0.70, 0.71, 0.61, 0.63, 0.64],
        'hi': [0.75, 0.78, 0.79, 0.71, 0.73, 0.74],
    })
    assert visualizer.plot_seglen(table).exists()


def test_global_summary(visualizer, toy_model, small_cohort):
    summary = global_summary(toy_model, small_cohort.dataset.features.iloc[:60])
    assert visualizer.plot_global_summary(summary, k=6).exists()


def test_patient(visualizer, toy_model, small_cohort):
    rows = small_cohort.dataset.features
    report = explain_patient(toy_model, rows.iloc[3], sample_background(rows, size=20, seed=0),
                             horizon=365.0, n_samples=128, seed=0, record_id='S003')
    path = visualizer.plot_patient(report)
    assert path.name == 'patient_S003.png'
    assert path.exists()


@pytest.mark.parametrize('row, label', [
    ({'feature': 'age', 'value': 71.0, 'percentile': 62.5}, "age = 62.5% percentile"),
    ({'feature': 'q_amplitude', 'value': None, 'percentile': None}, "q_amplitude = missing"),
    ({'feature': 'sex', 'value': 1.0, 'percentile': None}, "sex = 1"),
])
def test_patient_label(row, label):
    assert _patient_label(row) == label
