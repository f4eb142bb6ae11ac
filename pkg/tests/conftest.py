"""Shared fixtures: seeded generators, small synthetic cohorts and fitted toy models."""

import numpy as np
import pandas as pd
import pytest

from chf_survival.boosting import fit
from chf_survival.config import BoostParams
from chf_survival.feature_engineering import DISEASE_FLAGS, MANIFEST_COLUMNS
from chf_survival.simulation import CohortGenParams, EcgGenParams, synth_cohort, write_cohort
from chf_survival.survival_core import SurvivalDataset


def gaussian_cycle(p=25.0, q=44.0, s=56.0, t=85.0, t_amplitude=0.3, length=100):
    """Mean-cycle shaped vector built from Gaussian bumps, rescaled to [0, 1]."""
    x = np.arange(length, dtype=np.float64)
    bumps = [(p, 2.5, 0.15), (q, 1.0, -0.15), (50.0, 1.2, 1.0), (s, 1.0, -0.25), (t, 5.0, t_amplitude)]
    cycle = sum(a * np.exp(-0.5 * ((x - c) / w) ** 2) for c, w, a in bumps)
    return (cycle - cycle.min()) / (cycle.max() - cycle.min())


def manifest_for(dataset: SurvivalDataset, fs: float = 250.0) -> pd.DataFrame:
    """Manifest rows for a feature-level dataset (record paths are not checked)."""
    frame = pd.DataFrame({
        'record_id': dataset.record_ids,
        'ecg_path': [f"records/{rid}.csv" for rid in dataset.record_ids],
        'fs': fs,
        'age': dataset.features['age'].to_numpy(),
        'sex': dataset.features['sex'].astype(int).to_numpy(),
    })
    for name in DISEASE_FLAGS:
        frame[name] = dataset.features[name].astype(int).to_numpy()
    frame['time'] = dataset.time
    frame['event'] = dataset.event
    return frame[MANIFEST_COLUMNS]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope='session')
def small_cohort():
    return synth_cohort(CohortGenParams(n=300, seed=7))


@pytest.fixture(scope='session')
def toy_model(small_cohort):
    params = BoostParams(n_trees=20, max_depth=3, learning_rate=0.1, sigma=0.5)
    return fit(small_cohort.dataset, params)


@pytest.fixture(scope='session')
def ecg_cohort_dir(tmp_path_factory):
    """Twelve synthetic subjects written as manifest.csv + records/<id>.csv (30 s each)."""
    out = tmp_path_factory.mktemp('ecg_cohort')
    cohort = synth_cohort(CohortGenParams(n=12, seed=3))
    write_cohort(cohort, out, ecg=EcgGenParams(fs=250.0, duration=30.0), root_seed=5)
    return out
