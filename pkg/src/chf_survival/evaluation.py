"""
Evaluation Module

Time-dependent discrimination metrics for survival predictions (Antolini
C-index, cumulative/dynamic AUC and its KM-weighted average) and the
bootstrap confidence intervals used in the evaluation report.
"""

import logging
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, model_validator
from scipy.stats import rankdata
from tqdm.auto import tqdm

from .config import derive_seed
from .exceptions import MetricError, NoComparablePairsError, UndefinedMetricError
from .survival_core import CoxModel, km_estimator, loglogistic_survival

logger = logging.getLogger(__name__)


class SurvivalPredictions:
    """
    Per-subject survival curves together with the observed labels.

    `survival_fn(t)` returns S_i(t) for every subject i as a vector. Values
    are cached per evaluation time; subsets made by `take` share the cache
    of the full sample, which keeps bootstrap replicates cheap.
    """

    def __init__(self, survival_fn: Callable[[float], np.ndarray], time: Sequence[float],
                 event: Sequence[int], index: Optional[np.ndarray] = None,
                 cache: Optional[Dict[float, np.ndarray]] = None):
        self._fn = survival_fn
        self._index = index
        self._cache = {} if cache is None else cache
        self.time = np.asarray(time, dtype=np.float64)
        self.event = np.asarray(event).astype(np.int64)

    @classmethod
    def from_tau(cls, tau: Sequence[float], sigma: float, time: Sequence[float],
                 event: Sequence[int]) -> 'SurvivalPredictions':
        """Log-logistic curves from predicted log-times."""
        tau = np.asarray(tau, dtype=np.float64)
        return cls(lambda t: loglogistic_survival(t, tau, sigma), time, event)

    @classmethod
    def from_cox(cls, model: CoxModel, X: np.ndarray, time: Sequence[float],
                 event: Sequence[int]) -> 'SurvivalPredictions':
        X = np.asarray(X, dtype=np.float64)
        return cls(lambda t: model.survival(X, t), time, event)

    @classmethod
    def from_functions(cls, curves: Sequence[Callable[[float], float]], time: Sequence[float],
                       event: Sequence[int]) -> 'SurvivalPredictions':
        """One callable per subject."""
        return cls(lambda t: np.array([curve(t) for curve in curves], dtype=np.float64), time, event)

    def __len__(self) -> int:
        return self.time.size

    def survival(self, t: float) -> np.ndarray:
        key = float(t)
        if key not in self._cache:
            self._cache[key] = np.asarray(self._fn(key), dtype=np.float64)
        values = self._cache[key]
        return values if self._index is None else values[self._index]

    def take(self, index: Sequence[int]) -> 'SurvivalPredictions':
        """Subjects at positional `index` (repeats allowed)."""
        index = np.asarray(index, dtype=np.int64)
        parent = index if self._index is None else self._index[index]
        return SurvivalPredictions(self._fn, self.time[index], self.event[index],
                                   index=parent, cache=self._cache)


def antolini_cindex(preds: SurvivalPredictions) -> float:
    """
    Antolini's time-dependent concordance index.

    A pair (i, j) is comparable when subject i has an observed event and
    either t_i < t_j, or t_i == t_j with j censored. It is concordant when
    S_i(t_i) < S_j(t_i); equal survival values count one half.

    Raises:
    -------
    NoComparablePairsError
        No comparable pair exists
    """
    time, event = preds.time, preds.event
    concordant, comparable = 0.0, 0
    for i in np.flatnonzero(event == 1):
        later = (time > time[i]) | ((time == time[i]) & (event == 0))
        n_later = int(later.sum())
        if n_later == 0:
            continue
        survival = preds.survival(time[i])
        own, others = survival[i], survival[later]
        concordant += np.sum(own < others) + 0.5 * np.sum(own == others)
        comparable += n_later
    if comparable == 0:
        raise NoComparablePairsError()
    return float(concordant / comparable)


def cd_auc(preds: SurvivalPredictions, horizon: float) -> float:
    """
    Cumulative/dynamic AUC at `horizon` (naive case/control form, no IPCW).

    Cases failed at or before the horizon, controls are still event-free
    after it; subjects censored at or before the horizon are left out.
    Risk is 1 - S(horizon), ties between a case and a control count one half.
    """
    time, event = preds.time, preds.event
    cases = (time <= horizon) & (event == 1)
    controls = time > horizon
    n_cases, n_controls = int(cases.sum()), int(controls.sum())
    if n_cases == 0 or n_controls == 0:
        raise UndefinedMetricError(f"no {'cases' if n_cases == 0 else 'controls'} at horizon {horizon:g}")

    # ranking -S preserves the exact order of 1 - S
    risk = -preds.survival(horizon)
    ranks = rankdata(np.concatenate([risk[cases], risk[controls]]))
    u_statistic = ranks[:n_cases].sum() - n_cases * (n_cases + 1) / 2.0
    return float(u_statistic / (n_cases * n_controls))


def avg_cd_auc(preds: SurvivalPredictions) -> float:
    """
    Average cumulative/dynamic AUC over the observed event times.

    Each event time is weighted by the Kaplan-Meier mass dropped there;
    event times where `cd_auc` is undefined are left out and the remaining
    weights renormalized.
    """
    km = km_estimator(preds.time, preds.event)
    if km.times.size == 0:
        raise UndefinedMetricError("no observed event times")
    values, weights = [], []
    for event_time, mass in zip(km.times, km.jumps()):
        try:
            values.append(cd_auc(preds, event_time))
        except UndefinedMetricError:
            continue
        weights.append(mass)
    if not values:
        raise UndefinedMetricError("cumulative/dynamic AUC undefined at every event time")
    weights = np.asarray(weights)
    return float(np.dot(weights, values) / weights.sum())


def _replicate(metric: Callable[[SurvivalPredictions], float], preds: SurvivalPredictions,
               seed: int, replicate: int) -> float:
    rng = np.random.default_rng(derive_seed(seed, 'bootstrap', replicate))
    index = rng.integers(0, len(preds), size=len(preds))
    try:
        return metric(preds.take(index))
    except MetricError:
        return np.nan


def bootstrap_ci(metric: Callable[[SurvivalPredictions], float], preds: SurvivalPredictions,
                 n_boot: int = 1000, level: float = 0.90, seed: int = 0, n_jobs: int = 1,
                 max_undefined: float = 0.20, progress: bool = False) -> Tuple[float, float]:
    """
    Percentile bootstrap interval of a metric, resampling subjects.

    Parameters:
    -----------
    metric : Callable
        Metric taking SurvivalPredictions
    preds : SurvivalPredictions
        Full-sample predictions
    n_boot : int
        Number of replicates; each draws from its own derived seed
    level : float
        Confidence level
    max_undefined : float
        Largest tolerated fraction of replicates where the metric is undefined

    Returns:
    --------
    Tuple[float, float]
        (lo, hi)
    """
    metric(preds)
    iterator = tqdm(range(n_boot), desc=getattr(metric, '__name__', 'bootstrap'), disable=not progress)
    values = np.array(Parallel(n_jobs=n_jobs)(
        delayed(_replicate)(metric, preds, seed, b) for b in iterator
    ), dtype=np.float64)

    undefined = int(np.isnan(values).sum())
    if undefined > max_undefined * n_boot:
        raise UndefinedMetricError(
            f"metric undefined on {undefined}/{n_boot} bootstrap resamples (sample too degenerate)")
    if undefined:
        logger.info("Skipped %d/%d undefined bootstrap resamples for %s",
                    undefined, n_boot, getattr(metric, '__name__', 'metric'))
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(values[~np.isnan(values)], [tail, 1.0 - tail])
    return float(lo), float(hi)


class MetricValue(BaseModel):
    """Point estimate with its bootstrap interval."""

    point: float = Field(ge=0, le=1)
    lo: float = Field(ge=0, le=1)
    hi: float = Field(ge=0, le=1)

    @model_validator(mode='after')
    def _check_order(self) -> 'MetricValue':
        if not self.lo <= self.point <= self.hi:
            raise ValueError(f"interval [{self.lo}, {self.hi}] must contain the point estimate {self.point}")
        return self

    @classmethod
    def covering(cls, point: float, lo: float, hi: float) -> 'MetricValue':
        """Percentile interval widened to the point estimate when resampling skews it past the point."""
        if not lo <= point <= hi:
            logger.info("Bootstrap interval [%.4f, %.4f] excludes %.4f; widened to include it", lo, hi, point)
        return cls(point=point, lo=min(lo, point), hi=max(hi, point))

    def format(self) -> str:
        return f"{self.point:.3f} [{self.lo:.3f}, {self.hi:.3f}]"


def horizon_label(horizon: float) -> str:
    """'AUC 1 year' / 'AUC 2 years' for whole years, days otherwise."""
    years = horizon / 365.0
    if years == int(years):
        return f"AUC {int(years)} year{'s' if years > 1 else ''}"
    return f"AUC {horizon:g} days"


class MetricReport(BaseModel):
    """Test-set discrimination report in the layout of the results table."""

    c_index: MetricValue
    auc_1y: MetricValue
    auc_2y: MetricValue
    avg_cd_auc: MetricValue
    horizons: List[float] = Field(default_factory=lambda: [365.0, 730.0])
    level: float = 0.90
    n_boot: int = 1000
    n_subjects: int = 0
    n_events: int = 0

    def table(self) -> Dict[str, Dict[str, float]]:
        """Metric name -> {point, lo, hi}, in the table's row order."""
        return {
            'C-index': self.c_index.model_dump(),
            horizon_label(self.horizons[0]): self.auc_1y.model_dump(),
            horizon_label(self.horizons[1]): self.auc_2y.model_dump(),
            'Avg. c/d AUC': self.avg_cd_auc.model_dump(),
        }

    def to_json_dict(self) -> Dict:
        return {
            'metrics': self.table(),
            'level': self.level,
            'n_boot': self.n_boot,
            'n_subjects': self.n_subjects,
            'n_events': self.n_events,
        }


class ModelEvaluator:
    """
    Held-out evaluation of survival models.

    Implements:
    - Antolini C-index, AUC at two horizons and the average c/d AUC
    - Percentile bootstrap intervals with per-replicate derived seeds
    - Side-by-side comparison of several models
    """

    def __init__(self, horizons: Sequence[float] = (365.0, 730.0), n_boot: int = 1000,
                 confidence_level: float = 0.90, seed: int = 0, n_jobs: int = 1, progress: bool = False):
        """
        Initialize ModelEvaluator.

        Parameters:
        -----------
        horizons : Sequence[float]
            Two AUC horizons in days
        n_boot : int
            Bootstrap replicates per metric
        confidence_level : float
            Interval level (default: 0.90)
        seed : int
            Root seed for the replicates
        """
        if len(horizons) != 2:
            raise MetricError(f"expected two AUC horizons, got {list(horizons)}")
        self.horizons = sorted(float(h) for h in horizons)
        self.n_boot = n_boot
        self.confidence_level = confidence_level
        self.seed = seed
        self.n_jobs = n_jobs
        self.progress = progress

    def metric_functions(self) -> Dict[str, Callable[[SurvivalPredictions], float]]:
        first, second = self.horizons

        def auc_first(preds):
            return cd_auc(preds, first)

        def auc_second(preds):
            return cd_auc(preds, second)

        return {
            'c_index': antolini_cindex,
            'auc_1y': auc_first,
            'auc_2y': auc_second,
            'avg_cd_auc': avg_cd_auc,
        }

    def evaluate_metric(self, preds: SurvivalPredictions, name: str) -> MetricValue:
        """One metric with its interval; replicate seeds depend only on the evaluator seed and the metric."""
        functions = self.metric_functions()
        if name not in functions:
            raise MetricError(f"unknown metric '{name}' (expected one of {', '.join(functions)})")
        position = list(functions).index(name)
        metric = functions[name]
        lo, hi = bootstrap_ci(metric, preds, n_boot=self.n_boot, level=self.confidence_level,
                              seed=derive_seed(self.seed, name, position), n_jobs=self.n_jobs,
                              progress=self.progress)
        value = MetricValue.covering(metric(preds), lo, hi)
        logger.info("%s = %s", name, value.format())
        return value

    def evaluate(self, preds: SurvivalPredictions) -> MetricReport:
        """
        Compute every metric with its bootstrap interval.

        Returns:
        --------
        MetricReport
        """
        values = {name: self.evaluate_metric(preds, name) for name in self.metric_functions()}
        return MetricReport(
            **values,
            horizons=self.horizons,
            level=self.confidence_level,
            n_boot=self.n_boot,
            n_subjects=len(preds),
            n_events=int(preds.event.sum()),
        )

    def compare_models(self, reports: Mapping[str, MetricReport]) -> pd.DataFrame:
        """
        Side-by-side table: one row per metric, one column per model.

        Cells read "point [lo, hi]".
        """
        columns = {}
        for model_name, report in reports.items():
            columns[model_name] = {metric: MetricValue(**value).format()
                                   for metric, value in report.table().items()}
        return pd.DataFrame(columns)
