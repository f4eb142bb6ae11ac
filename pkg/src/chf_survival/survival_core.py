"""
Survival Core Module

Probability machinery shared by the models and the metrics: the
log-logistic accelerated-failure-time likelihood with right censoring,
the Kaplan-Meier estimator, the Cox proportional-hazards baseline and
class-balancing instance weights.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import expit

from .exceptions import ConvergenceError, DatasetError, SingularMatrixError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

HESSIAN_FLOOR = 1e-6
STD_TO_SCALE = np.sqrt(3.0) / np.pi


@dataclass(frozen=True)
class SurvivalLabel:
    """Observed follow-up: time in days and whether the event was observed."""

    time: float
    event: int

    def __post_init__(self):
        if not np.isfinite(self.time) or self.time <= 0:
            raise DatasetError(f"time must be positive, got {self.time}")
        if self.event not in (0, 1):
            raise DatasetError(f"event must be 0 or 1, got {self.event}")


@dataclass(frozen=True)
class AftParams:
    """Scale of the logistic error term in ln(T) = tau(x) + eps."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DatasetError(f"sigma must be positive, got {self.sigma}")


def logistic_scale(sigma: float, sigma_is_std: bool = False) -> float:
    """Convert a configured sigma to the logistic scale parameter."""
    return float(sigma) * STD_TO_SCALE if sigma_is_std else float(sigma)


@dataclass
class SurvivalDataset:
    """
    Feature matrix with per-subject right-censored labels.

    `features` holds raw (untransformed) values in a fixed column order;
    NaN marks a missing numeric feature and `missing` flags it explicitly.
    """

    features: pd.DataFrame
    time: np.ndarray
    event: np.ndarray
    record_ids: List[str]
    missing: Optional[pd.DataFrame] = None

    def __post_init__(self):
        self.features = self.features.reset_index(drop=True)
        self.time = np.asarray(self.time, dtype=np.float64)
        event = np.asarray(self.event)
        n = len(self.features)
        if self.time.shape != (n,) or event.shape != (n,) or len(self.record_ids) != n:
            raise DatasetError("features, labels and record ids differ in length")
        bad_time = ~np.isfinite(self.time) | (self.time <= 0)
        if bad_time.any():
            position = int(np.flatnonzero(bad_time)[0])
            raise DatasetError(f"non-positive time for record_id {self.record_ids[position]}")
        if not np.isin(event, (0, 1)).all():
            raise DatasetError("event must be 0 or 1")
        self.event = event.astype(np.int64)
        self.record_ids = [str(r) for r in self.record_ids]
        if len(set(self.record_ids)) != n:
            raise DatasetError("duplicate record_id in dataset")
        if self.missing is None:
            self.missing = self.features.isna()
        self.missing = self.missing.reset_index(drop=True)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def feature_names(self) -> List[str]:
        return list(self.features.columns)

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    @property
    def labels(self) -> List[SurvivalLabel]:
        return [SurvivalLabel(float(t), int(e)) for t, e in zip(self.time, self.event)]

    def subset(self, index: Sequence[int]) -> 'SurvivalDataset':
        """Rows at positional `index`, in that order."""
        index = np.asarray(index, dtype=np.int64)
        return SurvivalDataset(
            features=self.features.iloc[index],
            time=self.time[index],
            event=self.event[index],
            record_ids=[self.record_ids[i] for i in index],
            missing=self.missing.iloc[index],
        )

    def to_frame(self) -> pd.DataFrame:
        frame = self.features.copy()
        frame.insert(0, 'record_id', self.record_ids)
        frame['time'] = self.time
        frame['event'] = self.event
        return frame


def _z(time: ArrayLike, tau: ArrayLike, sigma: float) -> np.ndarray:
    time = np.asarray(time, dtype=np.float64)
    if np.any(time <= 0):
        raise DatasetError("survival time must be positive")
    if not sigma > 0:
        raise DatasetError(f"sigma must be positive, got {sigma}")
    return (np.log(time) - np.asarray(tau, dtype=np.float64)) / sigma


def loglogistic_survival(t: ArrayLike, tau: ArrayLike, sigma: float) -> np.ndarray:
    """
    Log-logistic survival S(t) = 1 / (1 + exp((ln t - tau) / sigma)).

    Broadcasts over `t` and `tau`.
    """
    return expit(-_z(t, tau, sigma))


def aft_nll(time: ArrayLike, event: ArrayLike, tau: ArrayLike, sigma: float) -> np.ndarray:
    """
    Per-subject negative log-likelihood of the log-logistic AFT model.

    Observed events contribute -ln f(t), censored subjects -ln S(t); the
    softplus terms go through logaddexp so large |z| does not overflow.
    """
    z = _z(time, tau, sigma)
    event = np.asarray(event)
    softplus = np.logaddexp(0.0, z)
    observed = -z + 2.0 * softplus + np.log(sigma) + np.log(np.asarray(time, dtype=np.float64))
    return np.where(event == 1, observed, softplus)


def aft_grad_hess(time: ArrayLike, event: ArrayLike, tau: ArrayLike, sigma: float,
                  min_hess: float = HESSIAN_FLOOR) -> tuple:
    """
    First and second derivatives of `aft_nll` with respect to tau.

    Parameters:
    -----------
    time, event, tau : array-like
        Labels and current predictions
    sigma : float
        Logistic scale
    min_hess : float
        Lower clamp applied to the hessian (0 disables it)

    Returns:
    --------
    tuple
        (gradient, hessian) arrays
    """
    z = _z(time, tau, sigma)
    event = np.asarray(event)
    p = expit(z)
    grad = np.where(event == 1, (1.0 - 2.0 * p) / sigma, -p / sigma)
    hess = np.where(event == 1, 2.0 * p * (1.0 - p), p * (1.0 - p)) / sigma ** 2
    return grad, np.maximum(hess, min_hess)


def instance_weights(event: ArrayLike, rho: float = 1.0) -> np.ndarray:
    """
    Class-balancing weights: censored subjects 1, events rho * n_censored / n_events.

    A cohort without censored subjects has nothing to rebalance and gets unit weights.
    """
    event = np.asarray(event)
    n_events = int((event == 1).sum())
    if n_events == 0:
        raise DatasetError("zero events: instance weights undefined")
    n_censored = event.size - n_events
    if n_censored == 0:
        logger.debug("No censored subjects; using unit instance weights")
        return np.ones(event.size)
    return np.where(event == 1, rho * n_censored / n_events, 1.0)


@dataclass
class StepFunction:
    """Right-continuous step function: `initial` before the first jump."""

    times: np.ndarray
    values: np.ndarray
    initial: float

    def __call__(self, t: ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        position = np.searchsorted(self.times, t, side='right') - 1
        padded = np.concatenate([[self.initial], self.values])
        return padded[position + 1]

    def jumps(self) -> np.ndarray:
        """Size of the change at each jump time (value before minus value at)."""
        previous = np.concatenate([[self.initial], self.values[:-1]])
        return previous - self.values


def km_estimator(time: ArrayLike, event: ArrayLike) -> StepFunction:
    """
    Kaplan-Meier product-limit estimate of the survival function.

    Returns:
    --------
    StepFunction
        S(0) = 1, dropping only at observed event times
    """
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event)
    if time.size == 0:
        raise DatasetError("Kaplan-Meier needs at least one label")

    event_times = np.unique(time[event == 1])
    at_risk = time.size - np.searchsorted(np.sort(time), event_times, side='left')
    deaths = np.array([np.sum((time == t) & (event == 1)) for t in event_times])
    values = np.cumprod(1.0 - deaths / at_risk) if event_times.size else np.array([])
    return StepFunction(times=event_times, values=values, initial=1.0)


@dataclass
class CoxModel:
    """
    Fitted Cox proportional-hazards model.

    S(t|x) = exp(-cumhaz(t) * exp(beta . x)) with the Breslow baseline cumulative hazard.
    """

    beta: np.ndarray
    baseline_cumhaz: StepFunction
    feature_names: List[str]
    standard_errors: np.ndarray
    log_likelihood: float = np.nan
    n_iter: int = 0
    history: List[float] = field(default_factory=list)

    def linear_predictor(self, X: Union[np.ndarray, pd.DataFrame]) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.beta.size:
            raise DatasetError(f"expected {self.beta.size} features, got {X.shape[1]}")
        return X @ self.beta

    def survival(self, X: Union[np.ndarray, pd.DataFrame], t: ArrayLike) -> np.ndarray:
        """S(t|x) for every row of X; scalar t gives shape (n,), vector t gives (n, len(t))."""
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < 0):
            raise DatasetError("t must be non-negative")
        hazard_ratio = np.exp(self.linear_predictor(X))
        cumhaz = self.baseline_cumhaz(t_arr)
        if t_arr.ndim == 0:
            return np.exp(-cumhaz * hazard_ratio)
        return np.exp(-np.outer(hazard_ratio, cumhaz))

    def summary(self) -> pd.DataFrame:
        return pd.DataFrame({
            'coef': self.beta,
            'se': self.standard_errors,
            'hazard_ratio': np.exp(self.beta),
        }, index=self.feature_names)


class _PartialLikelihood:
    """Breslow partial likelihood with its gradient and information matrix."""

    def __init__(self, X: np.ndarray, time: np.ndarray, event: np.ndarray):
        order = np.argsort(time, kind='mergesort')
        self.X = X[order]
        self.time = time[order]
        self.event = event[order].astype(bool)
        # risk set of subject i starts at the first subject tied with it
        self.first = np.searchsorted(self.time, self.time, side='left')

    @staticmethod
    def _reverse_cumsum(values: np.ndarray) -> np.ndarray:
        return np.cumsum(values[::-1], axis=0)[::-1]

    def evaluate(self, beta: np.ndarray, derivatives: bool = True):
        eta = self.X @ beta
        shift = eta.max()
        w = np.exp(eta - shift)
        s0 = self._reverse_cumsum(w)[self.first]
        ev = self.event
        loglik = float(np.sum(eta[ev] - (np.log(s0[ev]) + shift)))
        if not derivatives:
            return loglik, None, None

        s1 = self._reverse_cumsum(w[:, None] * self.X)[self.first]
        mean = s1[ev] / s0[ev, None]
        grad = np.sum(self.X[ev] - mean, axis=0)
        outer = w[:, None, None] * self.X[:, :, None] * self.X[:, None, :]
        s2 = self._reverse_cumsum(outer)[self.first]
        information = np.sum(s2[ev] / s0[ev, None, None]
                             - mean[:, :, None] * mean[:, None, :], axis=0)
        return loglik, grad, information

    def baseline(self, beta: np.ndarray) -> StepFunction:
        eta = self.X @ beta
        s0 = self._reverse_cumsum(np.exp(eta))
        event_times = np.unique(self.time[self.event])
        increments = []
        for t in event_times:
            position = np.searchsorted(self.time, t, side='left')
            deaths = np.sum(self.event & (self.time == t))
            increments.append(deaths / s0[position])
        return StepFunction(times=event_times, values=np.cumsum(increments), initial=0.0)


def cox_fit(X: Union[np.ndarray, pd.DataFrame], time: ArrayLike, event: ArrayLike,
            max_iter: int = 100, tol: float = 1e-6,
            feature_names: Optional[Sequence[str]] = None) -> CoxModel:
    """
    Fit a Cox proportional-hazards model by Newton-Raphson.

    Ties use the Breslow approximation. Each Newton step is halved (at most
    10 times) until the partial likelihood does not decrease.

    Parameters:
    -----------
    X : array-like, shape (n, p)
        Covariates, no constant columns, n > p
    time, event : array-like
        Right-censored labels
    max_iter : int
        Maximum number of Newton iterations
    tol : float
        Convergence threshold on the infinity norm of the score

    Returns:
    --------
    CoxModel

    Raises:
    -------
    ConvergenceError
        Not converged within `max_iter`, or no step increases the likelihood
    SingularMatrixError
        Information matrix cannot be inverted
    """
    if isinstance(X, pd.DataFrame):
        feature_names = list(X.columns) if feature_names is None else list(feature_names)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event)
    n, p = X.shape
    feature_names = [f"x{j}" for j in range(p)] if feature_names is None else list(feature_names)

    if n <= p:
        raise DatasetError(f"Cox model needs more subjects than features (n={n}, p={p})")
    constant = [feature_names[j] for j in range(p) if np.ptp(X[:, j]) == 0]
    if constant:
        raise DatasetError(f"constant column(s): {', '.join(constant)}")
    if not np.any(event == 1):
        raise DatasetError("zero events: Cox model undefined")

    likelihood = _PartialLikelihood(X, time, event)
    beta = np.zeros(p)
    loglik, grad, information = likelihood.evaluate(beta)
    history = [loglik]

    for iteration in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(information, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(f"singular information matrix at iteration {iteration}") from exc

        for _ in range(11):
            candidate = beta + step
            candidate_loglik, _, _ = likelihood.evaluate(candidate, derivatives=False)
            if candidate_loglik >= loglik - 1e-12:
                break
            step = step / 2.0
        else:
            raise ConvergenceError(f"partial likelihood could not increase at iteration {iteration}")

        beta = candidate
        loglik, grad, information = likelihood.evaluate(beta)
        history.append(loglik)
        if np.max(np.abs(grad)) < tol:
            break
    else:
        raise ConvergenceError(f"Cox model did not converge in {max_iter} iterations "
                               f"(|score| = {np.max(np.abs(grad)):.3g})")

    try:
        covariance = np.linalg.inv(information)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("singular information matrix at the optimum") from exc
    standard_errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))

    logger.info("Cox model converged in %d iterations (log partial likelihood %.4f)", iteration, loglik)
    return CoxModel(
        beta=beta,
        baseline_cumhaz=likelihood.baseline(beta),
        feature_names=feature_names,
        standard_errors=standard_errors,
        log_likelihood=loglik,
        n_iter=iteration,
        history=history,
    )


def cox_survival(model: CoxModel, x: Union[np.ndarray, pd.DataFrame, Sequence[float]], t: ArrayLike) -> np.ndarray:
    """S(t|x) = exp(-cumhaz(t) * exp(beta . x)); a single row returns a scalar-shaped result."""
    x_arr = np.asarray(x, dtype=np.float64)
    result = model.survival(x_arr, t)
    return result[0] if x_arr.ndim == 1 else result

