"""
Feature Engineering Module

Interpretable subject features: HRV statistics from R-peak timing, wave
timing/amplitude of the mean heart cycle, demographic and clinical-history
passthrough, and the train-time quantile normalization.
"""

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.signal import find_peaks
from scipy.stats import rankdata
from tqdm.auto import tqdm

from .config import FeatureConfig, RunConfig, derive_seed
from .exceptions import (
    CycleExtractionError,
    DatasetError,
    DegeneratePoincareError,
    FeatureError,
    MissingFeatureError,
    SignalError,
)
from .signal_processing import CycleEnsemble, EcgProcessor, EcgRecord
from .survival_core import SurvivalDataset

logger = logging.getLogger(__name__)

DISEASE_FLAGS = [
    'AF_history', 'CKD_history', 'COPD_history', 'DM_history', 'HL_history',
    'HTN_history', 'IHD_history', 'MI_history', 'STROKE_history', 'VHD_history',
]
HRV_FEATURES = ['mean_hr', 'sdnn', 'ratio_sd1_sd2']
WAVE_FEATURES = ['p_timing', 'q_timing', 's_timing', 't_timing', 'q_amplitude', 't_amplitude']
ECG_FEATURES = HRV_FEATURES + WAVE_FEATURES
NUMERIC_FEATURES = ['age'] + ECG_FEATURES
BINARY_FEATURES = ['sex'] + DISEASE_FLAGS
FEATURE_COLUMNS = NUMERIC_FEATURES + BINARY_FEATURES

MANIFEST_COLUMNS = ['record_id', 'ecg_path', 'fs', 'age', 'sex'] + DISEASE_FLAGS + ['time', 'event']


@dataclass
class FeatureRow:
    """One subject's feature vector in canonical column order."""

    age: float
    mean_hr: float
    sdnn: float
    ratio_sd1_sd2: float
    p_timing: float
    q_timing: float
    s_timing: float
    t_timing: float
    q_amplitude: float
    t_amplitude: float
    sex: int
    AF_history: int
    CKD_history: int
    COPD_history: int
    DM_history: int
    HL_history: int
    HTN_history: int
    IHD_history: int
    MI_history: int
    STROKE_history: int
    VHD_history: int

    def validate(self) -> 'FeatureRow':
        """Check ranges; NaN marks a missing value and is allowed for HRV features."""
        for name in ('p_timing', 'q_timing', 's_timing', 't_timing'):
            value = getattr(self, name)
            if not 0 <= value <= 100:
                raise FeatureError(f"{name}={value} outside [0, 100]")
        for name in ('q_amplitude', 't_amplitude'):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise FeatureError(f"{name}={value} outside [0, 1]")
        for name in BINARY_FEATURES:
            if getattr(self, name) not in (0, 1):
                raise FeatureError(f"{name} must be 0 or 1, got {getattr(self, name)}")
        if not np.isnan(self.sdnn) and self.sdnn < 0:
            raise FeatureError(f"sdnn={self.sdnn} is negative")
        if not np.isnan(self.mean_hr) and self.mean_hr <= 0:
            raise FeatureError(f"mean_hr={self.mean_hr} must be positive")
        return self

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def hrv_features(rr_intervals: Sequence[float], ddof: int = 0) -> Tuple[float, float, float]:
    """
    Heart rate and Poincaré statistics of an RR series.

    Parameters:
    -----------
    rr_intervals : Sequence[float]
        RR intervals in seconds (at least 3, all positive)
    ddof : int
        Variance degrees of freedom (0 = population)

    Returns:
    --------
    Tuple[float, float, float]
        (mean_hr in bpm, sdnn in s, SD1/SD2 ratio)

    Raises:
    -------
    DegeneratePoincareError
        When SD2 = 0; mean_hr and sdnn are carried on the exception
    """
    rr = np.asarray(rr_intervals, dtype=np.float64)
    if rr.size < 3:
        raise FeatureError(f"need at least 3 RR intervals, got {rr.size}")
    if np.any(rr <= 0):
        raise FeatureError("RR intervals must be positive")

    mean_hr = 60.0 / rr.mean()
    variance = rr.var(ddof=ddof)
    sdnn = float(np.sqrt(variance))
    sd1 = np.sqrt(np.diff(rr).var(ddof=ddof) / 2.0)
    sd2 = np.sqrt(max(0.0, 2.0 * variance - sd1 ** 2))
    if sd2 == 0:
        raise DegeneratePoincareError(mean_hr=float(mean_hr), sdnn=sdnn)
    return float(mean_hr), sdnn, float(sd1 / sd2)


def mean_cycle(ensemble: Union[CycleEnsemble, np.ndarray]) -> np.ndarray:
    """Element-wise mean across cycles, min-max rescaled to [0, 1]."""
    cycles = ensemble.cycles if isinstance(ensemble, CycleEnsemble) else np.asarray(ensemble, dtype=np.float64)
    cycles = np.atleast_2d(cycles)
    if cycles.shape[0] < 1 or cycles.shape[1] == 0:
        raise CycleExtractionError("mean cycle needs at least one cycle")
    average = cycles.mean(axis=0)
    low, high = average.min(), average.max()
    if not high > low:
        raise FeatureError("flat mean cycle")
    return (average - low) / (high - low)


def wave_features(cycle: np.ndarray, config: Optional[FeatureConfig] = None) -> Dict[str, float]:
    """
    Timing and amplitude of the P, Q, S and T waves of a mean cycle.

    For each wave, the local maxima and minima inside its region are
    candidates; the one farthest from the region's baseline (median of its
    first and last few samples) wins, so inverted waves are found as well.
    A region without interior extrema falls back to its farthest sample.

    Parameters:
    -----------
    cycle : np.ndarray
        Mean cycle in [0, 1], R apex near the centre
    config : FeatureConfig, optional
        Wave regions and baseline width

    Returns:
    --------
    Dict[str, float]
        p/q/s/t timings (indices) and q/t amplitudes
    """
    config = config or FeatureConfig()
    cycle = np.asarray(cycle, dtype=np.float64)
    maxima, _ = find_peaks(cycle)
    minima, _ = find_peaks(-cycle)
    extrema = np.sort(np.concatenate([maxima, minima]))
    k = config.baseline_samples

    timings, amplitudes = {}, {}
    regions = {'p': config.p_region, 'q': config.q_region, 's': config.s_region, 't': config.t_region}
    for wave, (start, stop) in regions.items():
        region = cycle[start:stop + 1]
        baseline = np.median(np.concatenate([region[:k], region[-k:]]))
        candidates = extrema[(extrema >= start) & (extrema <= stop)]
        if candidates.size == 0:
            candidates = np.arange(start, stop + 1)
        best = int(candidates[np.argmax(np.abs(cycle[candidates] - baseline))])
        timings[wave] = float(best)
        amplitudes[wave] = float(cycle[best])

    return {
        'p_timing': timings['p'],
        'q_timing': timings['q'],
        's_timing': timings['s'],
        't_timing': timings['t'],
        'q_amplitude': amplitudes['q'],
        't_amplitude': amplitudes['t'],
    }


@dataclass
class QuantileTransform:
    """
    Rank-based normalization fitted on training rows.

    Numeric values map to their empirical CDF position in [0, 1]: ties get
    their average rank, values between training points interpolate linearly
    between neighbouring ranks, and anything at or beyond the training
    extremes is clipped to 0 or 1. Binary features pass through. Missing
    numeric values map to `missing_value`.
    """

    references: Dict[str, np.ndarray]
    passthrough: List[str]
    missing_value: float = 0.5

    def __post_init__(self):
        self._tables = {}
        for name, values in self.references.items():
            values = np.sort(np.asarray(values, dtype=np.float64))
            if values.size == 0:
                raise FeatureError(f"empty reference table for '{name}'")
            self.references[name] = values
            unique = np.unique(values)
            ranks = rankdata(values, method='average')
            avg_rank = np.array([ranks[np.searchsorted(values, u)] for u in unique])
            self._tables[name] = (unique, avg_rank, values.size)

    @property
    def feature_names(self) -> List[str]:
        return list(self.references) + list(self.passthrough)

    def position(self, name: str, values: np.ndarray) -> np.ndarray:
        """Empirical CDF positions of `values` for numeric feature `name`; NaN stays NaN."""
        unique, avg_rank, n = self._tables[name]
        values = np.asarray(values, dtype=np.float64)
        out = (np.interp(values, unique, avg_rank) - 1.0) / (n - 1)
        out = np.where(values <= unique[0], 0.0, out)
        out = np.where(values >= unique[-1], 1.0, out)
        return np.where(np.isnan(values), np.nan, out)

    def transform(self, rows: pd.DataFrame) -> pd.DataFrame:
        """Normalize a frame of raw features; NaNs are imputed with `missing_value`."""
        missing = [name for name in self.feature_names if name not in rows.columns]
        if missing:
            raise MissingFeatureError(missing)
        out = pd.DataFrame(index=rows.index)
        for name in self.feature_names:
            if name in self.references:
                positions = self.position(name, rows[name].to_numpy(dtype=np.float64))
                out[name] = np.where(np.isnan(positions), self.missing_value, positions)
            else:
                out[name] = rows[name].to_numpy(dtype=np.float64)
        return out

    def missing_mask(self, rows: pd.DataFrame) -> pd.DataFrame:
        """Boolean frame flagging numeric values that were imputed."""
        return rows[list(self.references)].isna()

    def to_dict(self) -> Dict:
        return {
            'references': {name: values.tolist() for name, values in self.references.items()},
            'passthrough': list(self.passthrough),
            'missing_value': self.missing_value,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> 'QuantileTransform':
        return cls(
            references={name: np.asarray(values, dtype=np.float64) for name, values in payload['references'].items()},
            passthrough=list(payload['passthrough']),
            missing_value=float(payload.get('missing_value', 0.5)),
        )


def quantile_fit(rows: pd.DataFrame, numeric: Optional[Sequence[str]] = None,
                 binary: Optional[Sequence[str]] = None, missing_value: float = 0.5) -> QuantileTransform:
    """
    Fit the quantile transform on training rows.

    Parameters:
    -----------
    rows : pd.DataFrame
        Raw training features
    numeric, binary : Sequence[str], optional
        Column roles (default: the canonical binary flags pass through, every
        other column is numeric)

    Returns:
    --------
    QuantileTransform
    """
    binary = [c for c in rows.columns if c in BINARY_FEATURES] if binary is None else list(binary)
    numeric = [c for c in rows.columns if c not in binary] if numeric is None else list(numeric)
    missing = [c for c in numeric + binary if c not in rows.columns]
    if missing:
        raise MissingFeatureError(missing)

    references = {}
    for name in numeric:
        values = rows[name].dropna().to_numpy(dtype=np.float64)
        if np.unique(values).size < 2:
            raise FeatureError(f"numeric feature '{name}' is constant on the training set")
        references[name] = values
    return QuantileTransform(references=references, passthrough=binary, missing_value=missing_value)


def quantile_apply(transform: QuantileTransform,
                   row: Union[Mapping[str, float], pd.Series, pd.DataFrame]) -> Union[Dict[str, float], pd.DataFrame]:
    """Normalize one row (mapping/Series -> dict) or many (DataFrame -> DataFrame)."""
    if isinstance(row, pd.DataFrame):
        return transform.transform(row)
    frame = pd.DataFrame([dict(row)])
    return transform.transform(frame).iloc[0].to_dict()


class FeatureEngineer:
    """
    Per-record feature extraction for ECG survival modelling.

    Implements:
    - Segment selection through EcgProcessor (quality gate, seeded choice)
    - HRV features (mean HR, SDNN, SD1/SD2)
    - Mean-cycle wave features (P/Q/S/T timing, Q/T amplitude)
    - Multi-segment aggregation for longer recordings
    """

    def __init__(self, config: Optional[RunConfig] = None):
        """
        Initialize FeatureEngineer.

        Parameters:
        -----------
        config : RunConfig, optional
            Signal and feature settings, root seed and parallelism
        """
        self.config = config or RunConfig()
        self.processor = EcgProcessor(self.config.signal)
        self.feature_names = list(FEATURE_COLUMNS)
        self.cycles: Dict[str, np.ndarray] = {}

    def ecg_features(self, ensembles: Union[CycleEnsemble, Sequence[CycleEnsemble]],
                     mode: Optional[str] = None) -> Tuple[Dict[str, float], List[str]]:
        """
        ECG features of one or more segments.

        With several segments, `mode='average'` averages per-segment features
        and `mode='concatenate'` computes HRV over the joined RR series and
        wave features over the pooled cycles.

        Returns:
        --------
        Tuple[Dict[str, float], List[str]]
            Feature values (NaN when undefined) and the names flagged missing
        """
        if isinstance(ensembles, CycleEnsemble):
            ensembles = [ensembles]
        mode = mode or self.config.seglen_mode
        if len(ensembles) > 1 and mode == 'concatenate':
            pooled = CycleEnsemble(
                cycles=np.vstack([e.cycles for e in ensembles]),
                quality=float(np.mean([e.quality for e in ensembles])),
                rr_intervals=np.concatenate([e.rr_intervals for e in ensembles]),
            )
            ensembles = [pooled]

        per_segment, flagged = [], set()
        for ensemble in ensembles:
            values = {}
            try:
                values['mean_hr'], values['sdnn'], values['ratio_sd1_sd2'] = hrv_features(
                    ensemble.rr_intervals, ddof=self.config.features.sdnn_ddof)
            except DegeneratePoincareError as exc:
                values.update(mean_hr=exc.mean_hr, sdnn=exc.sdnn, ratio_sd1_sd2=np.nan)
                flagged.add('ratio_sd1_sd2')
            values.update(wave_features(mean_cycle(ensemble), self.config.features))
            per_segment.append(values)

        frame = pd.DataFrame(per_segment, columns=ECG_FEATURES)
        features = frame.mean(axis=0, skipna=True).to_dict()
        missing = sorted(name for name, value in features.items() if np.isnan(value))
        if flagged - set(missing):
            logger.debug("Poincaré ratio undefined on some segments; averaged over the rest")
        return features, missing

    def record_features(self, record: EcgRecord, seed: int, n_segments: int = 1) -> Tuple[Dict[str, float], List[str], Dict]:
        """
        Select segment(s) of a record and compute its ECG features.

        Returns:
        --------
        Tuple
            (ECG features, missing names, diagnostics entry); the entry's
            `cycles` holds the stacked cycles of the selected segments
        """
        selected = self.processor.select_segments(record, n_segments, seed)
        features, missing = self.ecg_features([s.ensemble for s in selected])
        diagnostics = {
            'record_id': record.record_id,
            'selected_segments': [s.index for s in selected],
            'quality': [s.ensemble.quality for s in selected],
            'missing': missing,
            'cycles': np.vstack([s.ensemble.cycles for s in selected]),
        }
        return features, missing, diagnostics

    def _extract_one(self, position: int, manifest_row: Mapping, base_dir: Path,
                     n_segments: int, keep_cycles: bool = False) -> Dict:
        record_id = str(manifest_row['record_id'])
        seed = derive_seed(self.config.seed, 'segment-selection', position)
        # unreadable records abort the whole extraction
        record = EcgRecord.from_csv(base_dir / str(manifest_row['ecg_path']), record_id, float(manifest_row['fs']))
        try:
            if record.duration + 1e-9 < n_segments * self.config.signal.segment_seconds:
                return {'record_id': record_id, 'status': 'skipped',
                        'reason': f"record shorter than {n_segments * self.config.signal.segment_seconds:g} s"}
            features, missing, diagnostics = self.record_features(record, seed, n_segments)
            cycles = diagnostics.pop('cycles')
        except SignalError as exc:
            entry = {'record_id': record_id, 'status': 'excluded', 'reason': str(exc)}
            if hasattr(exc, 'diagnostics'):
                entry['segments'] = exc.diagnostics
            return entry
        row = {'record_id': record_id, 'age': float(manifest_row['age'])}
        row.update(features)
        for name in BINARY_FEATURES:
            row[name] = int(manifest_row[name])
        result = {'record_id': record_id, 'status': 'ok', 'row': row, 'missing': missing,
                  'diagnostics': diagnostics}
        if keep_cycles:
            result['cycles'] = cycles
        return result

    def engineer_features(self, manifest: pd.DataFrame, base_dir: Union[str, Path] = '.',
                          n_segments: int = 1, keep_cycles: bool = False) -> Tuple[pd.DataFrame, Dict]:
        """
        Main method to extract features for every subject of a manifest.

        Parameters:
        -----------
        manifest : pd.DataFrame
            Validated cohort manifest
        base_dir : str or Path
            Directory that `ecg_path` entries are relative to
        n_segments : int
            Number of 30-second segments per subject
        keep_cycles : bool
            Keep the selected cycles of every extracted record in `self.cycles`

        Returns:
        --------
        Tuple[pd.DataFrame, Dict]
            Feature table (record_id + canonical columns) and diagnostics
        """
        logger.info("Engineering features for %d records (%d segment(s) each)...", len(manifest), n_segments)
        base_dir = Path(base_dir)
        rows = manifest.to_dict('records')
        iterator = tqdm(enumerate(rows), total=len(rows), desc='extract', disable=not self.config.progress)
        results = Parallel(n_jobs=self.config.n_jobs)(
            delayed(self._extract_one)(position, row, base_dir, n_segments, keep_cycles) for position, row in iterator
        )

        feature_rows, excluded, missing, selected = [], [], {}, {}
        for result in results:
            if result['status'] == 'ok':
                FeatureRow(**{k: v for k, v in result['row'].items() if k != 'record_id'}).validate()
                feature_rows.append(result['row'])
                selected[result['record_id']] = result['diagnostics']['selected_segments']
                if keep_cycles:
                    self.cycles[result['record_id']] = result['cycles']
                if result['missing']:
                    missing[result['record_id']] = result['missing']
            else:
                excluded.append({k: v for k, v in result.items() if k != 'status'})
                logger.warning("Record %s %s: %s", result['record_id'], result['status'], result['reason'])

        features = pd.DataFrame(feature_rows, columns=['record_id'] + FEATURE_COLUMNS)
        diagnostics = {
            'n_records': len(rows),
            'n_extracted': len(feature_rows),
            'excluded': excluded,
            'missing_features': missing,
            'selected_segments': selected,
        }
        logger.info("Engineered %d features for %d records (%d excluded, %d with missing values)",
                    len(FEATURE_COLUMNS), len(features), len(excluded), len(missing))
        return features, diagnostics

    def get_feature_names(self) -> List[str]:
        """Return list of engineered feature names."""
        return self.feature_names


def assemble_dataset(manifest: pd.DataFrame, features: pd.DataFrame,
                     feature_names: Sequence[str] = FEATURE_COLUMNS) -> SurvivalDataset:
    """
    Join feature rows with (time, event) labels.

    Parameters:
    -----------
    manifest : pd.DataFrame
        Rows with record_id, time (days) and event (0/1)
    features : pd.DataFrame
        One row per subject: record_id + feature columns (NaN = missing)

    Returns:
    --------
    SurvivalDataset
        Feature matrix in canonical column order plus labels and missingness flags
    """
    for name, frame in (('manifest', manifest), ('features', features)):
        duplicated = frame['record_id'][frame['record_id'].duplicated()]
        if not duplicated.empty:
            raise DatasetError(f"duplicate record_id in {name}: {duplicated.iloc[0]}")
    absent = [c for c in feature_names if c not in features.columns]
    if absent:
        raise MissingFeatureError(absent)

    labels = manifest.set_index(manifest['record_id'].astype(str))[['time', 'event']]
    ids = features['record_id'].astype(str)
    unlabeled = [rid for rid in ids if rid not in labels.index]
    if unlabeled:
        raise DatasetError(f"missing label for record_id {unlabeled[0]}")
    labels = labels.loc[ids]
    if labels.isna().any().any():
        raise DatasetError(f"missing label for record_id {labels.index[labels.isna().any(axis=1)][0]}")

    matrix = features[list(feature_names)].astype(np.float64).reset_index(drop=True)
    missing = matrix[[c for c in NUMERIC_FEATURES if c in matrix.columns]].isna()
    if missing.any().any():
        logger.info("%d subjects carry missing numeric features (imputed after transform)",
                    int(missing.any(axis=1).sum()))
    return SurvivalDataset(
        features=matrix,
        time=labels['time'].to_numpy(dtype=np.float64),
        event=labels['event'].to_numpy(),
        record_ids=list(ids),
        missing=missing,
    )


def describe_cohort(dataset: SurvivalDataset, horizons: Iterable[float] = (365.0, 730.0)) -> pd.DataFrame:
    """
    Subject feature overview: mean±std for numeric features, % for binary ones.

    Returns:
    --------
    pd.DataFrame
        Columns: feature, kind, summary, mean, std
    """
    rows = []
    for name in dataset.feature_names:
        values = dataset.features[name].dropna()
        if name in BINARY_FEATURES:
            rows.append({'feature': name, 'kind': 'binary', 'summary': f"{100 * values.mean():.1f}%",
                         'mean': values.mean(), 'std': np.nan})
        else:
            rows.append({'feature': name, 'kind': 'numeric', 'summary': f"{values.mean():.1f}±{values.std():.1f}",
                         'mean': values.mean(), 'std': values.std()})
    n = len(dataset)
    events = dataset.event == 1
    rows.append({'feature': 'events', 'kind': 'label', 'summary': f"{events.sum()} ({100 * events.mean():.1f}%)",
                 'mean': events.mean(), 'std': np.nan})
    for horizon in horizons:
        within = events & (dataset.time <= horizon)
        rows.append({'feature': f"events_within_{horizon:g}d", 'kind': 'label',
                     'summary': f"{within.sum()} ({100 * within.sum() / max(n, 1):.1f}%)",
                     'mean': within.mean(), 'std': np.nan})
    return pd.DataFrame(rows)
