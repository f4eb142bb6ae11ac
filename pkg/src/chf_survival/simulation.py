"""
Simulation Module

Ground-truth generators: synthetic single-lead ECG built from Gaussian
waves with known beat positions, and synthetic survival cohorts drawn from
a log-logistic AFT model with a known location tau*(x). The cohort writer
emits the same manifest + per-record CSV layout the CLI ingests.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.optimize import brentq
from scipy.special import expit
from tqdm.auto import tqdm

from .config import derive_seed
from .evaluation import SurvivalPredictions, antolini_cindex
from .exceptions import ChfSurvivalError
from .feature_engineering import BINARY_FEATURES, DISEASE_FLAGS, FEATURE_COLUMNS, MANIFEST_COLUMNS
from .survival_core import SurvivalDataset, loglogistic_survival

logger = logging.getLogger(__name__)

WAVES = ('P', 'Q', 'R', 'S', 'T')


@dataclass(frozen=True)
class WaveShape:
    """Gaussian bump: offset from the R apex and width as fractions of the mean RR."""

    offset: float
    width: float
    amplitude: float


# offsets land near the cycle indices p~25, q~44, s~56, t~85
DEFAULT_WAVES: Dict[str, WaveShape] = {
    'P': WaveShape(offset=-0.25, width=0.025, amplitude=0.15),
    'Q': WaveShape(offset=-0.06, width=0.010, amplitude=-0.15),
    'R': WaveShape(offset=0.0, width=0.012, amplitude=1.0),
    'S': WaveShape(offset=0.06, width=0.010, amplitude=-0.25),
    'T': WaveShape(offset=0.35, width=0.050, amplitude=0.30),
}


@dataclass(frozen=True)
class EcgGenParams:
    """Synthetic ECG settings; `snr_db`, when set, overrides `noise_std`."""

    fs: float = 250.0
    duration: float = 30.0
    heart_rate: float = 70.0
    rr_std: float = 0.03
    waves: Mapping[str, WaveShape] = field(default_factory=lambda: dict(DEFAULT_WAVES))
    t_sign: float = 1.0
    noise_std: float = 0.0
    snr_db: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if not self.fs > 2 * 45.0:
            raise ChfSurvivalError(f"fs must exceed 90 Hz, got {self.fs}")
        if not (self.duration > 0 and self.heart_rate > 0 and self.rr_std >= 0 and self.noise_std >= 0):
            raise ChfSurvivalError("duration and heart_rate must be positive, rr_std and noise_std non-negative")
        if set(self.waves) != set(WAVES):
            raise ChfSurvivalError(f"waves must define exactly {', '.join(WAVES)}")
        for name, wave in self.waves.items():
            if not wave.width > 0 or not np.isfinite(wave.amplitude):
                raise ChfSurvivalError(f"wave {name}: width must be positive and amplitude finite")


@dataclass
class SyntheticEcg:
    """Generated samples with beat-level ground truth (sample indices)."""

    samples: np.ndarray
    r_peaks: np.ndarray
    wave_centers: pd.DataFrame
    fs: float


def synth_ecg(params: EcgGenParams) -> SyntheticEcg:
    """
    Generate a synthetic ECG.

    Beat times follow a lognormal RR process around 60 / heart_rate; each
    beat is the sum of five Gaussian bumps at fixed fractions of the mean
    RR from its R apex. Gaussian noise is added last.

    Returns:
    --------
    SyntheticEcg
        Samples, true R-peak indices and per-beat wave centers
    """
    rng = np.random.default_rng(params.seed)
    mean_rr = 60.0 / params.heart_rate
    n = int(round(params.duration * params.fs))
    t = np.arange(n) / params.fs

    s = np.sqrt(np.log1p((params.rr_std / mean_rr) ** 2))
    beats = [mean_rr * rng.uniform(0.3, 0.7)]
    while True:
        rr = mean_rr * np.exp(rng.normal(-0.5 * s * s, s)) if s > 0 else mean_rr
        if beats[-1] + rr >= params.duration - 0.5 * mean_rr:
            break
        beats.append(beats[-1] + rr)
    beats = np.asarray(beats)

    signal = np.zeros(n)
    centers = {}
    for name in WAVES:
        wave = params.waves[name]
        amplitude = wave.amplitude * (params.t_sign if name == 'T' else 1.0)
        width = wave.width * mean_rr
        position = beats + wave.offset * mean_rr
        centers[name] = np.round(position * params.fs).astype(np.int64)
        for center in position:
            lo, hi = np.searchsorted(t, [center - 6 * width, center + 6 * width])
            signal[lo:hi] += amplitude * np.exp(-0.5 * ((t[lo:hi] - center) / width) ** 2)

    noise_std = params.noise_std
    if params.snr_db is not None:
        noise_std = float(np.sqrt(signal.var() / 10 ** (params.snr_db / 10.0)))
    if noise_std > 0:
        signal = signal + rng.normal(0.0, noise_std, size=n)

    r_peaks = np.round(beats * params.fs).astype(np.int64)
    return SyntheticEcg(samples=signal, r_peaks=r_peaks, wave_centers=pd.DataFrame(centers), fs=params.fs)


# numeric feature ranges (uniform draws) and binary prevalences of the synthetic cohort
FEATURE_RANGES: Dict[str, Tuple[float, float]] = {
    'age': (20.0, 95.0),
    'mean_hr': (50.0, 110.0),
    'sdnn': (0.01, 0.08),
    'ratio_sd1_sd2': (0.2, 1.5),
    'p_timing': (15.0, 35.0),
    'q_timing': (41.0, 48.0),
    's_timing': (52.0, 60.0),
    't_timing': (70.0, 92.0),
    'q_amplitude': (0.05, 0.35),
    't_amplitude': (0.05, 0.95),
}

PREVALENCE: Dict[str, float] = {
    'sex': 0.504, 'AF_history': 0.095, 'CKD_history': 0.115, 'COPD_history': 0.117,
    'DM_history': 0.179, 'HL_history': 0.224, 'HTN_history': 0.379, 'IHD_history': 0.177,
    'MI_history': 0.032, 'STROKE_history': 0.094, 'VHD_history': 0.069,
}

BINARY_EFFECTS: Dict[str, float] = {
    'CKD_history': -0.4, 'DM_history': -0.3, 'IHD_history': -0.3, 'MI_history': -0.3,
    'AF_history': -0.2, 'HTN_history': -0.1,
}

EFFECTS = ('linear', 'nonlinear')


@dataclass(frozen=True)
class CohortGenParams:
    """Synthetic cohort settings; times are in days."""

    n: int = 1000
    effect: str = 'nonlinear'
    sigma_true: float = 0.3
    censor_time: float = 1500.0
    intercept: float = 8.95
    seed: int = 0

    def __post_init__(self):
        if self.n < 10:
            raise ChfSurvivalError(f"n must be at least 10, got {self.n}")
        if not self.censor_time > 0:
            raise ChfSurvivalError("censor_time must be positive")
        if self.effect not in EFFECTS:
            raise ChfSurvivalError(f"effect must be one of {EFFECTS}, got '{self.effect}'")
        if self.sigma_true < 0:
            raise ChfSurvivalError("sigma_true must be non-negative")


def _unit(features: pd.DataFrame, name: str) -> np.ndarray:
    lo, hi = FEATURE_RANGES[name]
    return (features[name].to_numpy(dtype=np.float64) - lo) / (hi - lo)


def true_tau(features: Union[pd.DataFrame, pd.Series, Mapping[str, float]], effect: str = 'nonlinear',
             intercept: float = 8.95) -> np.ndarray:
    """
    Planted log-time location tau*(x).

    Both variants are dominated by an increasing t_amplitude effect. The
    nonlinear one adds a U-shaped SD1/SD2 term and a heart-rate effect that
    acts only for sex = 1, which a proportional-hazards model cannot express.
    """
    if not isinstance(features, pd.DataFrame):
        features = pd.DataFrame([dict(features)])
    centered = {name: 2.0 * _unit(features, name) - 1.0 for name in ('t_amplitude', 'ratio_sd1_sd2', 'mean_hr', 'age')}
    tau = intercept + 1.6 * centered['t_amplitude'] - 0.5 * centered['age']
    if effect == 'nonlinear':
        sex = features['sex'].to_numpy(dtype=np.float64)
        tau = tau - 1.6 * (centered['ratio_sd1_sd2'] ** 2 - 1.0 / 3.0) - 1.6 * sex * centered['mean_hr']
    elif effect == 'linear':
        tau = tau - 0.8 * centered['ratio_sd1_sd2'] - 0.8 * centered['mean_hr']
    else:
        raise ChfSurvivalError(f"unknown effect '{effect}'")
    for name, coefficient in BINARY_EFFECTS.items():
        tau = tau + coefficient * features[name].to_numpy(dtype=np.float64)
    return tau


def draw_features(n: int, rng: np.random.Generator) -> pd.DataFrame:
    """Feature rows in canonical column order: uniform numerics, Bernoulli flags."""
    columns = {}
    for name in FEATURE_COLUMNS:
        if name in BINARY_FEATURES:
            columns[name] = (rng.random(n) < PREVALENCE[name]).astype(np.int64)
        else:
            lo, hi = FEATURE_RANGES[name]
            columns[name] = rng.uniform(lo, hi, size=n)
    return pd.DataFrame(columns, columns=FEATURE_COLUMNS)


@dataclass
class SyntheticCohort:
    """Generated dataset with the planted tau* of every subject."""

    dataset: SurvivalDataset
    true_tau: np.ndarray
    params: CohortGenParams

    @property
    def event_rate(self) -> float:
        return float(self.dataset.event.mean())


def synth_cohort(params: CohortGenParams) -> SyntheticCohort:
    """
    Draw a cohort from ln T = tau*(x) + sigma_true * Logistic(0, 1).

    Subjects whose T exceeds the administrative censoring time are
    censored there; there is no other dropout.
    """
    rng = np.random.default_rng(params.seed)
    features = draw_features(params.n, rng)
    tau = true_tau(features, params.effect, params.intercept)
    event_time = np.exp(tau + params.sigma_true * rng.logistic(0.0, 1.0, size=params.n))
    event = (event_time <= params.censor_time).astype(np.int64)
    time = np.where(event == 1, event_time, params.censor_time)
    width = len(str(params.n - 1))
    dataset = SurvivalDataset(
        features=features,
        time=time,
        event=event,
        record_ids=[f"S{i:0{width}d}" for i in range(params.n)],
    )
    logger.info("Synthetic %s cohort: %d subjects, %.1f%% events", params.effect, params.n, 100 * event.mean())
    return SyntheticCohort(dataset=dataset, true_tau=tau, params=params)


def true_survival(params: CohortGenParams, x: Union[pd.DataFrame, pd.Series, Mapping[str, float]],
                  t: Union[float, np.ndarray]) -> np.ndarray:
    """Closed-form S*(t|x) of the generating model."""
    if not params.sigma_true > 0:
        raise ChfSurvivalError("true survival needs sigma_true > 0")
    return loglogistic_survival(t, true_tau(x, params.effect, params.intercept), params.sigma_true)


def expected_event_rate(params: CohortGenParams, n_draws: int = 200_000, seed: int = 0) -> float:
    """P(T <= censor_time) averaged over the feature distribution (Monte Carlo over x, exact over noise)."""
    features = draw_features(n_draws, np.random.default_rng(seed))
    tau = true_tau(features, params.effect, params.intercept)
    if params.sigma_true == 0:
        return float(np.mean(np.exp(tau) <= params.censor_time))
    return float(np.mean(1.0 - loglogistic_survival(params.censor_time, tau, params.sigma_true)))


def calibrate_intercept(params: CohortGenParams, event_rate: float, n_draws: int = 200_000,
                        seed: int = 0) -> CohortGenParams:
    """Copy of `params` whose intercept gives the requested expected event rate."""
    if not 0 < event_rate < 1:
        raise ChfSurvivalError(f"event rate must lie in (0, 1), got {event_rate}")
    features = draw_features(n_draws, np.random.default_rng(seed))
    offset = true_tau(features, params.effect, 0.0)
    sigma = max(params.sigma_true, 1e-9)

    def gap(intercept: float) -> float:
        return float(np.mean(expit((np.log(params.censor_time) - offset - intercept) / sigma))) - event_rate

    intercept = brentq(gap, -50.0, 50.0, xtol=1e-10)
    logger.info("Calibrated intercept %.4f for a %.1f%% event rate", intercept, 100 * event_rate)
    return replace(params, intercept=float(intercept))


def oracle_cindex(dataset: SurvivalDataset, tau: np.ndarray, sigma: float) -> float:
    """Antolini C-index of the true survival curves: the best achievable on this sample."""
    return antolini_cindex(SurvivalPredictions.from_tau(tau, sigma, dataset.time, dataset.event))


def ecg_params_for(features: Mapping[str, float], base: EcgGenParams, seed: int) -> EcgGenParams:
    """ECG settings that reproduce a subject's heart rate, SDNN and T-wave amplitude."""
    waves = dict(base.waves)
    # extracted T amplitude is read on a cycle rescaled from the S trough (-0.25) to the R apex (1)
    amplitude = 1.25 * float(features['t_amplitude']) - 0.25
    waves['T'] = replace(waves['T'], amplitude=abs(amplitude))
    mean_rr = 60.0 / float(features['mean_hr'])
    return replace(base, heart_rate=float(features['mean_hr']), rr_std=min(float(features['sdnn']), 0.1 * mean_rr),
                   waves=waves, t_sign=1.0 if amplitude >= 0 else -1.0, seed=seed)


def _write_record(path: Path, params: EcgGenParams) -> None:
    ecg = synth_ecg(params)
    pd.Series(ecg.samples).to_csv(path, header=False, index=False, float_format='%.6f')


def write_cohort(cohort: SyntheticCohort, out_dir: Union[str, Path], ecg: Optional[EcgGenParams] = None,
                 root_seed: int = 0, n_jobs: int = 1, progress: bool = False) -> Path:
    """
    Materialize a cohort as `manifest.csv` plus `records/<record_id>.csv`.

    Parameters:
    -----------
    cohort : SyntheticCohort
        Generated cohort
    out_dir : str or Path
        Output directory (created if needed)
    ecg : EcgGenParams, optional
        Base ECG settings (duration, fs, noise); per-subject rate, SDNN and
        T amplitude come from the subject's features
    root_seed : int
        Root seed; record k uses derive_seed(root_seed, 'ecg', k)

    Returns:
    --------
    Path
        Path of the manifest
    """
    out_dir = Path(out_dir)
    records = out_dir / 'records'
    records.mkdir(parents=True, exist_ok=True)
    base = ecg or EcgGenParams()
    data = cohort.dataset
    rows = data.features.to_dict('records')

    Parallel(n_jobs=n_jobs)(
        delayed(_write_record)(records / f"{rid}.csv", ecg_params_for(row, base, derive_seed(root_seed, 'ecg', k)))
        for k, (rid, row) in tqdm(enumerate(zip(data.record_ids, rows)), total=len(rows),
                                  desc='records', disable=not progress)
    )

    manifest = pd.DataFrame({
        'record_id': data.record_ids,
        'ecg_path': [f"records/{rid}.csv" for rid in data.record_ids],
        'fs': base.fs,
        'age': np.round(data.features['age'].to_numpy(), 1),
        'sex': data.features['sex'].astype(int),
    })
    for name in DISEASE_FLAGS:
        manifest[name] = data.features[name].astype(int).to_numpy()
    manifest['time'] = np.round(data.time, 3)
    manifest['event'] = data.event
    path = out_dir / 'manifest.csv'
    manifest[MANIFEST_COLUMNS].to_csv(path, index=False)
    logger.info("Wrote %d synthetic records and manifest to %s", len(manifest), out_dir)
    return path
