"""
Explanation Module

Shapley-value attributions for the boosted AFT model: path-dependent
TreeSHAP in log-time space, KernelSHAP in event-probability space, a
brute-force Shapley oracle, global summaries with moving medians and
per-patient reports.
"""

import logging
from dataclasses import dataclass, field
from math import comb, factorial
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .boosting import AftModel, FlatTree
from .exceptions import ExplanationError
from .survival_core import loglogistic_survival

logger = logging.getLogger(__name__)

MAX_EXACT_FEATURES = 14


@dataclass
class Explanation:
    """
    Additive decomposition of one prediction.

    base_value + sum(contributions) equals `prediction`. `space` is
    'log_time' (tau) or 'probability' (event probability by `horizon`).
    """

    base_value: float
    contributions: pd.Series
    space: str
    prediction: float
    horizon: Optional[float] = None

    @property
    def total(self) -> float:
        return float(self.base_value + self.contributions.sum())

    def ranked(self) -> pd.Series:
        """Contributions ordered by decreasing magnitude."""
        order = np.argsort(-np.abs(self.contributions.to_numpy()), kind='mergesort')
        return self.contributions.iloc[order]


def _shapley_weights(m: int) -> np.ndarray:
    """w[k] = k! (m - k - 1)! / m! for coalitions of size k among m players."""
    return np.array([factorial(k) * factorial(m - k - 1) / factorial(m) for k in range(m)])


def _leaf_paths(tree: FlatTree) -> List[Tuple[int, List[Tuple[int, bool]]]]:
    """(leaf, [(node, went_left), ...]) for every root-to-leaf path."""
    paths = []

    def visit(node: int, edges: List[Tuple[int, bool]]):
        if tree.left[node] < 0:
            paths.append((node, edges))
            return
        visit(int(tree.left[node]), edges + [(node, True)])
        visit(int(tree.right[node]), edges + [(node, False)])

    visit(0, [])
    return paths


def _tree_shap_single(tree: FlatTree, X: np.ndarray, phi: np.ndarray) -> float:
    """
    Add one tree's path-dependent Shapley values for every row of X to `phi`.

    Each leaf contributes a product game over the unique features on its
    path: a feature in the coalition follows x (indicator o_d), an absent
    one follows the cover fractions of the training data (z_d). Shapley
    values of a product game are sums over coalition sizes, evaluated here
    as polynomial coefficients, vectorized over rows.

    Returns:
    --------
    float
        Cover-weighted expected value of the tree
    """
    cover = tree.cover
    leaves = tree.left < 0
    expected = float(np.dot(tree.value[leaves], cover[leaves]) / cover[0])
    if leaves[0]:
        return expected

    n = X.shape[0]
    internal = np.flatnonzero(~leaves)
    values = X[:, tree.feature[internal]]
    go_left = np.where(np.isnan(values), tree.default_left[internal], values < tree.threshold[internal])
    go_left = dict(zip(internal.tolist(), go_left.T))

    for leaf, edges in _leaf_paths(tree):
        zero: Dict[int, float] = {}
        one: Dict[int, np.ndarray] = {}
        for node, went_left in edges:
            d = int(tree.feature[node])
            child = tree.left[node] if went_left else tree.right[node]
            zero[d] = zero.get(d, 1.0) * cover[child] / cover[node]
            follows = (go_left[node] == went_left).astype(np.float64)
            one[d] = one.get(d, np.ones(n)) * follows
        features = list(zero)
        weights = _shapley_weights(len(features))
        for i in features:
            coefficients = np.ones((n, 1))
            for d in features:
                if d == i:
                    continue
                shifted = np.zeros((n, coefficients.shape[1] + 1))
                shifted[:, :-1] += coefficients * zero[d]
                shifted[:, 1:] += coefficients * one[d][:, None]
                coefficients = shifted
            phi[:, i] += tree.value[leaf] * (one[i] - zero[i]) * (coefficients @ weights)
    return expected


def tree_shap_values(model: AftModel, Xt: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Path-dependent TreeSHAP on an already-transformed matrix.

    Returns:
    --------
    Tuple[float, np.ndarray]
        (base value, contributions of shape (n_rows, n_features)) in log-time space
    """
    if not model.has_cover:
        raise ExplanationError("model has no recorded node covers; train with cover tracking")
    Xt = np.atleast_2d(np.asarray(Xt, dtype=np.float64))
    phi = np.zeros_like(Xt)
    expected = 0.0
    for tree in model.flat_trees:
        expected += _tree_shap_single(tree, Xt, phi)
    return model.base_score + model.learning_rate * expected, model.learning_rate * phi


def tree_shap(model: AftModel, row: Union[pd.Series, Mapping[str, float], pd.DataFrame]) -> Explanation:
    """
    Exact TreeSHAP explanation of tau(x) for one row.

    Parameters:
    -----------
    model : AftModel
        Fitted model with node covers
    row : pd.Series, Mapping or one-row DataFrame
        Raw feature values

    Returns:
    --------
    Explanation
        Log-time space; base = tau0 + eta * sum of tree expectations
    """
    Xt = model.transform_rows(row)
    if Xt.shape[0] != 1:
        raise ExplanationError(f"tree_shap explains one row, got {Xt.shape[0]}")
    base, phi = tree_shap_values(model, Xt)
    return Explanation(base_value=base, contributions=pd.Series(phi[0], index=model.feature_names),
                       space='log_time', prediction=float(model.raw_predict(Xt)[0]))


def tree_conditional_expectation(model: AftModel, xt: np.ndarray, subset: Sequence[int]) -> float:
    """
    E[tau(x) | x_S] under the path-dependent tree distribution.

    Splits on features in `subset` follow x; other splits average their
    children by training cover.
    """
    subset = set(int(j) for j in subset)
    xt = np.asarray(xt, dtype=np.float64).ravel()

    def expectation(tree: FlatTree, node: int) -> float:
        if tree.left[node] < 0:
            return float(tree.value[node])
        left, right = int(tree.left[node]), int(tree.right[node])
        d = int(tree.feature[node])
        if d in subset:
            value = xt[d]
            go_left = bool(tree.default_left[node]) if np.isnan(value) else value < tree.threshold[node]
            return expectation(tree, left if go_left else right)
        return (tree.cover[left] * expectation(tree, left)
                + tree.cover[right] * expectation(tree, right)) / tree.cover[node]

    return model.base_score + model.learning_rate * sum(expectation(tree, 0) for tree in model.flat_trees)


def shapley_values_from_value_function(value: Callable[[Tuple[int, ...]], float], n_features: int) -> np.ndarray:
    """Exact Shapley values of a set function over `n_features` players by full enumeration."""
    if n_features > MAX_EXACT_FEATURES:
        raise ExplanationError(f"exact Shapley enumeration supports at most {MAX_EXACT_FEATURES} features, "
                               f"got {n_features}")
    values = np.empty(2 ** n_features)
    members = [tuple(j for j in range(n_features) if mask >> j & 1) for mask in range(2 ** n_features)]
    for mask, subset in enumerate(members):
        values[mask] = value(subset)
    weights = _shapley_weights(n_features)
    phi = np.zeros(n_features)
    for mask, subset in enumerate(members):
        for i in range(n_features):
            if not mask >> i & 1:
                phi[i] += weights[len(subset)] * (values[mask | 1 << i] - values[mask])
    return phi


def _coalition_means(predict: Callable[[np.ndarray], np.ndarray], row: np.ndarray, background: np.ndarray,
                     masks: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Mean prediction over the background with masked-in features taken from `row`."""
    means = np.empty(masks.shape[0])
    n_bg = background.shape[0]
    for start in range(0, masks.shape[0], chunk):
        block = masks[start:start + chunk]
        synthetic = np.where(block[:, None, :], row[None, None, :], background[None, :, :])
        predictions = np.asarray(predict(synthetic.reshape(-1, row.size)), dtype=np.float64)
        means[start:start + chunk] = predictions.reshape(block.shape[0], n_bg).mean(axis=1)
    return means


def exact_shapley(predict: Callable[[np.ndarray], np.ndarray], row: Sequence[float],
                  background: np.ndarray) -> np.ndarray:
    """
    Shapley values with v(S) = mean over the background of predict(x_S, background_rest).

    Parameters:
    -----------
    predict : Callable
        Batch model function on matrices
    row : Sequence[float]
        Explained row
    background : np.ndarray
        Background rows (at most 14 features)

    Returns:
    --------
    np.ndarray
        One contribution per feature
    """
    row = np.asarray(row, dtype=np.float64).ravel()
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    m = row.size
    if m > MAX_EXACT_FEATURES:
        raise ExplanationError(f"exact Shapley enumeration supports at most {MAX_EXACT_FEATURES} features, got {m}")
    masks = ((np.arange(2 ** m)[:, None] >> np.arange(m)) & 1).astype(bool)
    means = _coalition_means(predict, row, background, masks)
    return shapley_values_from_value_function(lambda subset: means[sum(1 << j for j in subset)], m)


def _enumerated_coalitions(m: int) -> Tuple[np.ndarray, np.ndarray]:
    masks = ((np.arange(1, 2 ** m - 1)[:, None] >> np.arange(m)) & 1).astype(bool)
    sizes = masks.sum(axis=1)
    weights = np.array([(m - 1) / (comb(m, s) * s * (m - s)) for s in sizes])
    return masks, weights


def _sampled_coalitions(m: int, n_samples: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Paired coalitions with sizes drawn in proportion to their total kernel weight."""
    sizes = np.arange(1, m)
    mass = (m - 1) / (sizes * (m - sizes))
    drawn = rng.choice(sizes, size=max(1, n_samples // 2), p=mass / mass.sum())
    masks = np.zeros((2 * drawn.size, m), dtype=bool)
    for k, size in enumerate(drawn):
        chosen = rng.choice(m, size=size, replace=False)
        masks[2 * k, chosen] = True
        masks[2 * k + 1] = ~masks[2 * k]
    return masks, np.ones(masks.shape[0])


def kernel_shap(predict: Callable[[np.ndarray], np.ndarray], row: Sequence[float], background: np.ndarray,
                n_samples: int = 2048, seed: int = 0, max_exact: int = MAX_EXACT_FEATURES,
                feature_names: Optional[Sequence[str]] = None, space: str = 'probability',
                horizon: Optional[float] = None) -> Explanation:
    """
    KernelSHAP by constrained weighted least squares.

    Coalitions are fully enumerated when there are at most `max_exact`
    features (the result is then exact), otherwise `n_samples` paired
    coalitions are drawn with Shapley-kernel size probabilities. Absent
    features take background values, averaged over the background. The
    efficiency constraint is eliminated through the last feature, so it
    holds exactly.

    Returns:
    --------
    Explanation

    Raises:
    -------
    ExplanationError
        Empty background or a singular regression system
    """
    row = np.asarray(row, dtype=np.float64).ravel()
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if background.shape[0] == 0:
        raise ExplanationError("background set is empty")
    m = row.size
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(m)]

    prediction = float(np.asarray(predict(row[None, :]), dtype=np.float64)[0])
    base = float(np.mean(predict(background)))
    delta = prediction - base
    if m == 1:
        return Explanation(base, pd.Series([delta], index=names), space, prediction, horizon)

    if m <= max_exact:
        masks, weights = _enumerated_coalitions(m)
    else:
        masks, weights = _sampled_coalitions(m, n_samples, np.random.default_rng(seed))
    y = _coalition_means(predict, row, background, masks) - base

    Z = masks.astype(np.float64)
    A = Z[:, :-1] - Z[:, [-1]]
    b = y - Z[:, -1] * delta
    normal = A.T @ (weights[:, None] * A)
    if np.linalg.matrix_rank(normal) < m - 1:
        raise ExplanationError(f"singular KernelSHAP system ({masks.shape[0]} coalitions for {m} features)")
    phi = np.empty(m)
    phi[:-1] = np.linalg.solve(normal, A.T @ (weights * b))
    phi[-1] = delta - phi[:-1].sum()
    return Explanation(base, pd.Series(phi, index=names), space, prediction, horizon)


def moving_median(values: Sequence[float], window: int) -> np.ndarray:
    """Centered rolling median; windows are clipped at both ends."""
    return pd.Series(np.asarray(values, dtype=np.float64)).rolling(window, center=True, min_periods=1).median().to_numpy()


@dataclass
class GlobalSummary:
    """
    SHAP values of a whole set of rows.

    `points[f]` holds (value, raw_value, shap, moving_median) sorted by
    the feature's transformed value; `importance` is mean |shap|, descending.
    """

    importance: pd.Series
    points: Dict[str, pd.DataFrame]
    base_value: float
    window: int

    def top_features(self, k: int = 10) -> List[str]:
        return list(self.importance.index[:k])

    def to_long_frame(self) -> pd.DataFrame:
        frames = [frame.assign(feature=name) for name, frame in self.points.items()]
        long = pd.concat(frames, ignore_index=True)
        return long[['feature', 'value', 'raw_value', 'shap', 'moving_median']]

    def importance_table(self) -> List[Dict[str, float]]:
        return [{'feature': name, 'mean_abs_shap': float(value)} for name, value in self.importance.items()]

    def trend(self, feature: str) -> float:
        """Spearman correlation between feature value and its moving median."""
        frame = self.points[feature]
        return float(frame['value'].corr(frame['moving_median'], method='spearman'))


def global_summary(model: AftModel, rows: pd.DataFrame, window: int = 201) -> GlobalSummary:
    """
    TreeSHAP for every row with importances and per-feature moving medians.

    A set with fewer rows than `window` shrinks the window to the row count.
    """
    if len(rows) == 0:
        raise ExplanationError("global summary needs at least one row")
    if len(rows) < window:
        logger.warning("Moving-median window %d exceeds %d rows; using %d", window, len(rows), len(rows))
        window = len(rows)
    Xt = model.transform_rows(rows)
    base, phi = tree_shap_values(model, Xt)
    raw = rows[model.feature_names].to_numpy(dtype=np.float64)

    points = {}
    for j, name in enumerate(model.feature_names):
        order = np.lexsort((raw[:, j], Xt[:, j]))
        frame = pd.DataFrame({'value': Xt[order, j], 'raw_value': raw[order, j], 'shap': phi[order, j]})
        frame['moving_median'] = moving_median(frame['shap'], window)
        points[name] = frame
    importance = pd.Series(np.abs(phi).mean(axis=0), index=model.feature_names)
    importance = importance.iloc[np.argsort(-importance.to_numpy(), kind='mergesort')]
    logger.info("Global summary over %d rows; top features: %s", len(rows), ', '.join(importance.index[:3]))
    return GlobalSummary(importance=importance, points=points, base_value=base, window=window)


def sample_background(rows: pd.DataFrame, size: int = 100, seed: int = 0) -> pd.DataFrame:
    """Seeded sample of background rows without replacement."""
    rng = np.random.default_rng(seed)
    if len(rows) <= size:
        return rows.copy()
    return rows.iloc[np.sort(rng.choice(len(rows), size=size, replace=False))]


@dataclass
class PatientReport:
    """Event probability by the horizon and its per-feature decomposition."""

    record_id: str
    horizon: float
    probability: float
    base_value: float
    contributions: List[Dict[str, float]] = field(default_factory=list)

    def to_json_dict(self) -> Dict:
        return {
            'record_id': self.record_id,
            'horizon_days': self.horizon,
            'probability': self.probability,
            'base_value': self.base_value,
            'contributions': self.contributions,
        }


def explain_patient(model: AftModel, row: Union[pd.Series, Mapping[str, float]], background: pd.DataFrame,
                    horizon: float = 365.0, n_samples: int = 2048, seed: int = 0,
                    max_exact: int = MAX_EXACT_FEATURES, record_id: str = '') -> PatientReport:
    """
    Per-patient KernelSHAP decomposition of the event probability by `horizon`.

    Feature values are reported as positions (percent) in the training
    distribution stored in the model's quantile tables.
    """
    row = pd.Series(dict(row))
    Xt_row = model.transform_rows(row)[0]
    Xt_background = model.transform_rows(background)

    def event_probability(Xt: np.ndarray) -> np.ndarray:
        return 1.0 - loglogistic_survival(horizon, model.raw_predict(Xt), model.sigma)

    explanation = kernel_shap(event_probability, Xt_row, Xt_background, n_samples=n_samples, seed=seed,
                              max_exact=max_exact, feature_names=model.feature_names, horizon=horizon)

    contributions = []
    for name, value in explanation.ranked().items():
        raw_value = float(row[name])
        if model.transform is not None and name in model.transform.references and not np.isnan(raw_value):
            percentile = float(model.transform.position(name, np.array([raw_value]))[0] * 100.0)
        else:
            percentile = None
        contributions.append({'feature': name, 'contribution': float(value),
                              'value': None if np.isnan(raw_value) else raw_value,
                              'percentile': percentile})
    return PatientReport(record_id=str(record_id), horizon=float(horizon), probability=explanation.prediction,
                         base_value=explanation.base_value, contributions=contributions)
