"""Tests for the synthetic ECG and cohort generators."""

import numpy as np
import pandas as pd
import pytest
from scipy.stats import kstest

from chf_survival.exceptions import ChfSurvivalError
from chf_survival.feature_engineering import FEATURE_COLUMNS, MANIFEST_COLUMNS
from chf_survival.simulation import (
    FEATURE_RANGES,
    CohortGenParams,
    EcgGenParams,
    calibrate_intercept,
    ecg_params_for,
    expected_event_rate,
    oracle_cindex,
    synth_cohort,
    synth_ecg,
    true_survival,
    true_tau,
    write_cohort,
)


class TestSynthEcg:

    def test_beats_and_length(self):
        ecg = synth_ecg(EcgGenParams(heart_rate=60.0, rr_std=0.0, duration=20.0, seed=0))
        assert ecg.samples.shape == (5000,)
        np.testing.assert_allclose(np.diff(ecg.r_peaks), 250, atol=1)
        assert list(ecg.wave_centers.columns) == ['P', 'Q', 'R', 'S', 'T']
        np.testing.assert_array_equal(ecg.wave_centers['R'], ecg.r_peaks)

    def test_r_apex_is_the_maximum(self):
        ecg = synth_ecg(EcgGenParams(seed=1))
        for peak in ecg.r_peaks[1:-1]:
            window = ecg.samples[peak - 20:peak + 21]
            assert abs(int(np.argmax(window)) - 20) <= 1

    def test_inverted_t_wave(self):
        ecg = synth_ecg(EcgGenParams(t_sign=-1.0, seed=2))
        t_centers = ecg.wave_centers['T'].to_numpy()[:-1]
        assert np.all(ecg.samples[t_centers] < 0)

    def test_noise_level_follows_snr(self):
        clean = synth_ecg(EcgGenParams(seed=3))
        noisy = synth_ecg(EcgGenParams(seed=3, snr_db=10.0))
        residual = noisy.samples - clean.samples
        assert residual.var() == pytest.approx(clean.samples.var() / 10.0, rel=0.1)

    def test_seeded(self):
        first = synth_ecg(EcgGenParams(seed=9, snr_db=20.0))
        second = synth_ecg(EcgGenParams(seed=9, snr_db=20.0))
        np.testing.assert_array_equal(first.samples, second.samples)

    def test_rejects_low_sampling_rate(self):
        with pytest.raises(ChfSurvivalError, match="90 Hz"):
            EcgGenParams(fs=80.0)


class TestSynthCohort:

    def test_labels_and_schema(self, small_cohort):
        data = small_cohort.dataset
        assert data.feature_names == FEATURE_COLUMNS
        assert data.record_ids[0] == 'S000' and data.record_ids[-1] == 'S299'
        censored = data.event == 0
        np.testing.assert_array_equal(data.time[censored], 1500.0)
        assert np.all(data.time[~censored] <= 1500.0)
        for name, (lo, hi) in FEATURE_RANGES.items():
            assert data.features[name].between(lo, hi).all()

    def test_seeded(self):
        first = synth_cohort(CohortGenParams(n=50, seed=4))
        second = synth_cohort(CohortGenParams(n=50, seed=4))
        pd.testing.assert_frame_equal(first.dataset.features, second.dataset.features)
        np.testing.assert_array_equal(first.dataset.time, second.dataset.time)

    def test_probability_integral_transform_is_uniform(self):
        params = CohortGenParams(n=3000, seed=5, censor_time=1e12)
        cohort = synth_cohort(params)
        assert cohort.event_rate == 1.0
        u = true_survival(params, cohort.dataset.features, cohort.dataset.time)
        assert kstest(u, 'uniform').pvalue > 0.01

    def test_t_amplitude_raises_survival(self):
        row = {name: float(np.mean(FEATURE_RANGES[name])) for name in FEATURE_RANGES}
        row.update({name: 0 for name in FEATURE_COLUMNS if name not in FEATURE_RANGES})
        low, high = dict(row, t_amplitude=0.1), dict(row, t_amplitude=0.9)
        for effect in ('linear', 'nonlinear'):
            assert true_tau(high, effect)[0] > true_tau(low, effect)[0]

    def test_heart_rate_acts_only_for_sex_one(self):
        row = {name: float(np.mean(FEATURE_RANGES[name])) for name in FEATURE_RANGES}
        row.update({name: 0 for name in FEATURE_COLUMNS if name not in FEATURE_RANGES})
        slow, fast = dict(row, mean_hr=55.0), dict(row, mean_hr=105.0)
        assert true_tau(slow)[0] == pytest.approx(true_tau(fast)[0])
        assert true_tau(dict(slow, sex=1))[0] > true_tau(dict(fast, sex=1))[0]

    def test_calibrated_event_rate(self):
        params = calibrate_intercept(CohortGenParams(n=4000, seed=6), 0.3, n_draws=50_000, seed=1)
        assert expected_event_rate(params, n_draws=50_000, seed=1) == pytest.approx(0.3, abs=1e-6)
        assert synth_cohort(params).event_rate == pytest.approx(0.3, abs=0.03)

    def test_invalid_parameters(self):
        with pytest.raises(ChfSurvivalError):
            CohortGenParams(n=5)
        with pytest.raises(ChfSurvivalError):
            CohortGenParams(effect='quadratic')
        with pytest.raises(ChfSurvivalError):
            calibrate_intercept(CohortGenParams(), 1.5)

    def test_oracle_beats_chance(self, small_cohort):
        value = oracle_cindex(small_cohort.dataset, small_cohort.true_tau, small_cohort.params.sigma_true)
        assert 0.7 < value <= 1.0


class TestWriteCohort:

    def test_layout(self, ecg_cohort_dir):
        manifest = pd.read_csv(ecg_cohort_dir / 'manifest.csv', dtype={'record_id': str})
        assert list(manifest.columns) == MANIFEST_COLUMNS
        assert len(manifest) == 12
        for path in manifest['ecg_path']:
            samples = pd.read_csv(ecg_cohort_dir / path, header=None)
            assert samples.shape == (7500, 1)

    def test_ecg_params_follow_features(self):
        features = {'mean_hr': 80.0, 'sdnn': 0.2, 't_amplitude': 0.1}
        params = ecg_params_for(features, EcgGenParams(), seed=3)
        assert params.heart_rate == 80.0
        assert params.rr_std == pytest.approx(0.075)
        assert params.t_sign == -1.0
        assert params.waves['T'].amplitude == pytest.approx(0.125)
