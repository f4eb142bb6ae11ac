"""
Boosting Module

Gradient-boosted regression trees estimating the log-time location tau(x)
of a log-logistic AFT model. Second-order boosting with L1/L2 leaf
regularization, instance weights, exact greedy split search with learned
missing-value directions, CV-based hyperparameter selection and versioned
JSON model files. A library XGBoost AFT model is available as a
reference comparator.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import xgboost as xgb
from joblib import Parallel, delayed
from sklearn.model_selection import StratifiedKFold
from tqdm.auto import tqdm

from .config import BoostParams
from .evaluation import SurvivalPredictions, antolini_cindex
from .exceptions import DatasetError, MissingFeatureError, ModelFormatError
from .feature_engineering import QuantileTransform, quantile_fit
from .survival_core import (
    CoxModel,
    SurvivalDataset,
    aft_grad_hess,
    aft_nll,
    cox_fit,
    instance_weights,
    logistic_scale,
    loglogistic_survival,
)

logger = logging.getLogger(__name__)

__all__ = [
    'BoostParams', 'TreeNode', 'FlatTree', 'AftModel', 'DEFAULT_PARAM_GRID', 'PRUNED_PARAM_GRID',
    'leaf_weight', 'split_gain', 'grow_tree', 'fit', 'predict_tau', 'predict_survival',
    'cross_validate', 'save_model', 'load_model', 'XGBoostAftReference', 'fit_xgboost_reference',
    'CoxBaseline', 'fit_cox_baseline',
]

MODEL_FORMAT = 'chf_survival.aft'
MODEL_VERSION = 1

DEFAULT_PARAM_GRID: Dict[str, List] = {
    'max_depth': [2, 3, 4],
    'learning_rate': [0.05, 0.1],
    'n_trees': [200, 400],
    'reg_lambda': [1.0, 10.0],
    'reg_alpha': [0.0, 1.0],
    'sigma': [0.5, 1.0, 1.5, 2.0],
}

PRUNED_PARAM_GRID: Dict[str, List] = {
    'max_depth': [2, 3, 4],
    'learning_rate': [0.1],
    'n_trees': [100, 200],
    'reg_lambda': [1.0],
    'reg_alpha': [0.0],
    'sigma': [0.5, 1.0],
}


def soft_threshold(G: Union[float, np.ndarray], alpha: float) -> Union[float, np.ndarray]:
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def leaf_weight(G: float, H: float, reg_lambda: float, reg_alpha: float) -> float:
    """Regularized Newton step -soft_threshold(G, alpha) / (H + lambda)."""
    return float(-soft_threshold(G, reg_alpha) / (H + reg_lambda))


def _score(G, H, reg_lambda: float, reg_alpha: float):
    return soft_threshold(G, reg_alpha) ** 2 / (2.0 * (H + reg_lambda))


def split_gain(G_L, H_L, G_R, H_R, reg_lambda: float, reg_alpha: float, gamma: float):
    """
    Structure-score improvement of a split.

    Works element-wise on arrays of candidate splits.
    """
    parent = _score(G_L + G_R, H_L + H_R, reg_lambda, reg_alpha)
    return _score(G_L, H_L, reg_lambda, reg_alpha) + _score(G_R, H_R, reg_lambda, reg_alpha) - parent - gamma


@dataclass
class TreeNode:
    """
    Node of a regression tree.

    Leaves carry `weight` (their contribution to tau before the learning
    rate). Internal nodes route x < threshold to `left`, missing values to
    the `default_left` side. `cover` is the summed instance weight of the
    training rows that reached the node.
    """

    weight: float
    cover: float
    feature: int = -1
    threshold: float = 0.0
    default_left: bool = True
    left: Optional['TreeNode'] = None
    right: Optional['TreeNode'] = None
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth(), self.right.depth())

    def n_leaves(self) -> int:
        return 1 if self.is_leaf else self.left.n_leaves() + self.right.n_leaves()


@dataclass
class FlatTree:
    """Array form of a tree (pre-order); leaves have feature -1 and children -1."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @classmethod
    def from_node(cls, root: TreeNode) -> 'FlatTree':
        rows = []

        def visit(node: TreeNode) -> int:
            position = len(rows)
            rows.append([node.feature, node.threshold, -1, -1, node.default_left, node.weight, node.cover])
            if not node.is_leaf:
                rows[position][2] = visit(node.left)
                rows[position][3] = visit(node.right)
            return position

        visit(root)
        columns = list(zip(*rows))
        return cls(
            feature=np.array(columns[0], dtype=np.int64),
            threshold=np.array(columns[1], dtype=np.float64),
            left=np.array(columns[2], dtype=np.int64),
            right=np.array(columns[3], dtype=np.int64),
            default_left=np.array(columns[4], dtype=bool),
            value=np.array(columns[5], dtype=np.float64),
            cover=np.array(columns[6], dtype=np.float64),
        )

    def to_node(self, position: int = 0) -> TreeNode:
        node = TreeNode(weight=float(self.value[position]), cover=float(self.cover[position]),
                        feature=int(self.feature[position]), threshold=float(self.threshold[position]),
                        default_left=bool(self.default_left[position]))
        if self.left[position] >= 0:
            node.left = self.to_node(int(self.left[position]))
            node.right = self.to_node(int(self.right[position]))
        return node

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf value reached by every row of X."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = ~self.is_leaf[node]
        while active.any():
            rows = np.flatnonzero(active)
            current = node[rows]
            values = X[rows, self.feature[current]]
            go_left = np.where(np.isnan(values), self.default_left[current], values < self.threshold[current])
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active[rows] = ~self.is_leaf[node[rows]]
        return self.value[node]

    def to_dict(self) -> Dict[str, list]:
        return {
            'feature': self.feature.tolist(),
            'threshold': self.threshold.tolist(),
            'left': self.left.tolist(),
            'right': self.right.tolist(),
            'default_left': self.default_left.astype(int).tolist(),
            'value': self.value.tolist(),
            'cover': self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, list]) -> 'FlatTree':
        tree = cls(
            feature=np.asarray(payload['feature'], dtype=np.int64),
            threshold=np.asarray(payload['threshold'], dtype=np.float64),
            left=np.asarray(payload['left'], dtype=np.int64),
            right=np.asarray(payload['right'], dtype=np.int64),
            default_left=np.asarray(payload['default_left'], dtype=bool),
            value=np.asarray(payload['value'], dtype=np.float64),
            cover=np.asarray(payload['cover'], dtype=np.float64),
        )
        n = tree.feature.size
        sizes = {a.size for a in (tree.threshold, tree.left, tree.right, tree.default_left, tree.value, tree.cover)}
        if n == 0 or sizes != {n}:
            raise ModelFormatError("tree arrays are empty or differ in length")
        internal = tree.left >= 0
        if np.any(tree.left[internal] >= n) or np.any(tree.right[internal] >= n) or np.any(tree.right[internal] < 0):
            raise ModelFormatError("tree child index out of range")
        if not (np.all(np.isfinite(tree.value)) and np.all(np.isfinite(tree.threshold[internal]))):
            raise ModelFormatError("non-finite tree value or threshold")
        return tree


class _SplitFinder:
    """
    Exact greedy split search over presorted feature columns.

    NaN entries are routed to whichever side gives the larger gain. Matrices
    produced by the model's quantile transform are already imputed, so this
    only applies to raw matrices passed to `grow_tree`.
    """

    def __init__(self, X: np.ndarray, g: np.ndarray, h: np.ndarray, weights: np.ndarray,
                 params: BoostParams, presorted: Optional[np.ndarray] = None):
        self.X = X
        self.g = g
        self.h = h
        self.weights = weights
        self.params = params
        self.presorted = np.argsort(X, axis=0, kind='mergesort').T if presorted is None else presorted

    def best_split(self, in_node: np.ndarray, G: float, H: float):
        p = self.params
        best = None
        for j in range(self.X.shape[1]):
            order = self.presorted[j][in_node[self.presorted[j]]]
            values = self.X[order, j]
            present = ~np.isnan(values)
            order, values = order[present], values[present]
            if values.size < 2:
                continue
            cum_g = np.cumsum(self.g[order])[:-1]
            cum_h = np.cumsum(self.h[order])[:-1]
            boundary = np.flatnonzero(values[:-1] < values[1:])
            if boundary.size == 0:
                continue
            G_present, H_present = self.g[order].sum(), self.h[order].sum()
            G_miss, H_miss = G - G_present, H - H_present
            G_L, H_L = cum_g[boundary], cum_h[boundary]

            for default_left in (True, False):
                if default_left:
                    gl, hl = G_L + G_miss, H_L + H_miss
                else:
                    gl, hl = G_L, H_L
                gr, hr = G - gl, H - hl
                gains = split_gain(gl, hl, gr, hr, p.reg_lambda, p.reg_alpha, p.gamma)
                gains = np.where((hl >= p.min_child_weight) & (hr >= p.min_child_weight), gains, -np.inf)
                k = int(np.argmax(gains))
                if gains[k] > 0 and (best is None or gains[k] > best[0]):
                    lower, upper = values[boundary[k]], values[boundary[k] + 1]
                    threshold = (lower + upper) / 2.0
                    if not lower < threshold <= upper:
                        threshold = upper
                    best = (float(gains[k]), j, float(threshold), default_left)
        return best

    def build(self, in_node: np.ndarray, depth: int) -> TreeNode:
        p = self.params
        G, H = float(self.g[in_node].sum()), float(self.h[in_node].sum())
        node = TreeNode(weight=leaf_weight(G, H, p.reg_lambda, p.reg_alpha),
                        cover=float(self.weights[in_node].sum()))
        if depth >= p.max_depth or in_node.sum() < 2:
            return node
        best = self.best_split(in_node, G, H)
        if best is None:
            return node

        node.gain, node.feature, node.threshold, node.default_left = best
        values = self.X[:, node.feature]
        go_left = np.where(np.isnan(values), node.default_left, values < node.threshold)
        node.left = self.build(in_node & go_left, depth + 1)
        node.right = self.build(in_node & ~go_left, depth + 1)
        return node


def grow_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, weights: Optional[np.ndarray] = None,
              params: Optional[BoostParams] = None, rows: Optional[np.ndarray] = None,
              presorted: Optional[np.ndarray] = None) -> TreeNode:
    """
    Grow one regression tree on weighted gradients.

    Parameters:
    -----------
    X : np.ndarray, shape (n, p)
        Feature matrix (NaN = missing)
    g, h : np.ndarray
        Per-row gradient and hessian, instance weights already multiplied in
    weights : np.ndarray, optional
        Instance weights, recorded as node cover (default: ones)
    params : BoostParams, optional
        max_depth, lambda, alpha, gamma and min_child_weight
    rows : np.ndarray, optional
        Boolean mask of rows used for this tree (row subsampling)
    presorted : np.ndarray, optional
        Per-feature argsort of X, shape (p, n), reused across trees

    Returns:
    --------
    TreeNode
        Root; a single leaf when no split has positive gain
    """
    X = np.asarray(X, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    weights = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    in_node = np.ones(X.shape[0], dtype=bool) if rows is None else np.asarray(rows, dtype=bool)
    finder = _SplitFinder(X, g, h, weights, params or BoostParams(), presorted)
    return finder.build(in_node, depth=0)


@dataclass
class AftModel:
    """
    Boosted log-logistic AFT model.

    tau(x) = base_score + learning_rate * sum_k tree_k(T(x)), where T is the
    embedded quantile transform fitted on the training rows.
    """

    trees: List[TreeNode]
    base_score: float
    sigma: float
    learning_rate: float
    feature_names: List[str]
    transform: Optional[QuantileTransform] = None
    params: Optional[BoostParams] = None
    train_loss: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.flat_trees = [FlatTree.from_node(tree) for tree in self.trees]

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def has_cover(self) -> bool:
        return all(np.all(tree.cover > 0) for tree in self.flat_trees)

    def transform_rows(self, rows: Union[pd.DataFrame, pd.Series, Mapping[str, float], np.ndarray]) -> np.ndarray:
        """Raw rows -> transformed matrix in model column order."""
        if isinstance(rows, np.ndarray):
            matrix = np.atleast_2d(rows).astype(np.float64)
            if matrix.shape[1] != len(self.feature_names):
                raise MissingFeatureError(self.feature_names[matrix.shape[1]:] or ['<extra columns>'])
            rows = pd.DataFrame(matrix, columns=self.feature_names)
        elif isinstance(rows, (pd.Series, Mapping)):
            rows = pd.DataFrame([dict(rows)])
        missing = [name for name in self.feature_names if name not in rows.columns]
        if missing:
            raise MissingFeatureError(missing)
        rows = rows[self.feature_names]
        if self.transform is None:
            return rows.to_numpy(dtype=np.float64)
        return self.transform.transform(rows)[self.feature_names].to_numpy(dtype=np.float64)

    def raw_predict(self, Xt: np.ndarray) -> np.ndarray:
        """tau on an already-transformed matrix."""
        Xt = np.atleast_2d(np.asarray(Xt, dtype=np.float64))
        tau = np.full(Xt.shape[0], self.base_score)
        for tree in self.flat_trees:
            tau += self.learning_rate * tree.predict(Xt)
        return tau

    def predict_tau(self, rows) -> np.ndarray:
        return self.raw_predict(self.transform_rows(rows))

    def staged_predict_tau(self, rows, stages: Optional[Iterable[int]] = None) -> Dict[int, np.ndarray]:
        """tau after the first k trees, for each k in `stages` (default: every k)."""
        Xt = self.transform_rows(rows)
        wanted = set(range(self.n_trees + 1) if stages is None else stages)
        if any(k < 0 or k > self.n_trees for k in wanted):
            raise ValueError(f"stages must lie in [0, {self.n_trees}]")
        tau = np.full(Xt.shape[0], self.base_score)
        staged = {0: tau.copy()} if 0 in wanted else {}
        for k, tree in enumerate(self.flat_trees, start=1):
            tau += self.learning_rate * tree.predict(Xt)
            if k in wanted:
                staged[k] = tau.copy()
        return staged

    def predict_survival(self, rows, t: Union[float, np.ndarray]) -> np.ndarray:
        return loglogistic_survival(t, self.predict_tau(rows), self.sigma)

    def predict_event_probability(self, rows, horizon: float) -> np.ndarray:
        """1 - S(horizon | x)."""
        return 1.0 - self.predict_survival(rows, horizon)

    def predictions(self, dataset: SurvivalDataset) -> SurvivalPredictions:
        return SurvivalPredictions.from_tau(self.predict_tau(dataset.features), self.sigma,
                                            dataset.time, dataset.event)


def predict_tau(model: AftModel, row) -> Union[float, np.ndarray]:
    """tau for one row (scalar) or a frame of rows (array)."""
    tau = model.predict_tau(row)
    return float(tau[0]) if isinstance(row, (pd.Series, Mapping)) else tau


def predict_survival(model: AftModel, row, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    return loglogistic_survival(t, predict_tau(model, row), model.sigma)


def weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind='mergesort')
    cumulative = np.cumsum(weights[order])
    return float(values[order][np.searchsorted(cumulative, 0.5 * cumulative[-1])])


def fit(dataset: SurvivalDataset, params: Optional[BoostParams] = None, rho: float = 1.0,
        sigma_is_std: bool = False, progress: bool = False) -> AftModel:
    """
    Fit the boosted AFT model.

    Parameters:
    -----------
    dataset : SurvivalDataset
        Training subjects with raw features
    params : BoostParams, optional
        Hyperparameters
    rho : float
        Event-weight multiplier for instance weighting
    sigma_is_std : bool
        Interpret params.sigma as the standard deviation of the error term

    Returns:
    --------
    AftModel
        Fitted model; `train_loss[k]` is the weighted mean NLL after k trees
    """
    params = params or BoostParams()
    sigma = logistic_scale(params.sigma, sigma_is_std)
    transform = quantile_fit(dataset.features)
    feature_names = dataset.feature_names
    X = transform.transform(dataset.features)[feature_names].to_numpy(dtype=np.float64)
    time, event = dataset.time, dataset.event

    weights = instance_weights(event, rho)
    events = event == 1
    base_score = float(np.log(weighted_median(time[events], weights[events])))
    tau = np.full(len(dataset), base_score)

    def weighted_loss(current: np.ndarray) -> float:
        return float(np.dot(weights, aft_nll(time, event, current, sigma)) / weights.sum())

    presorted = np.argsort(X, axis=0, kind='mergesort').T
    rng = np.random.default_rng(params.seed)
    trees, losses = [], [weighted_loss(tau)]
    for _ in tqdm(range(params.n_trees), desc='boost', disable=not progress):
        g, h = aft_grad_hess(time, event, tau, sigma)
        rows = rng.random(len(dataset)) < params.subsample if params.subsample < 1.0 else None
        tree = grow_tree(X, g * weights, h * weights, weights, params, rows=rows, presorted=presorted)
        tau = tau + params.learning_rate * FlatTree.from_node(tree).predict(X)
        trees.append(tree)
        losses.append(weighted_loss(tau))

    logger.info("Trained %d trees (depth %d, eta %.3g, sigma %.3g): weighted NLL %.4f -> %.4f",
                params.n_trees, params.max_depth, params.learning_rate, sigma, losses[0], losses[-1])
    return AftModel(trees=trees, base_score=base_score, sigma=sigma, learning_rate=params.learning_rate,
                    feature_names=feature_names, transform=transform, params=params, train_loss=losses)


def _candidate_groups(param_grid: Mapping[str, Sequence]) -> List[Tuple[Dict, List[int]]]:
    """Grid candidates grouped by everything except n_trees."""
    if not param_grid or any(len(v) == 0 for v in param_grid.values()):
        raise ValueError("parameter grid is empty")
    grid = dict(param_grid)
    n_trees = sorted(int(n) for n in grid.pop('n_trees', [BoostParams().n_trees]))
    names = sorted(grid)
    groups = []
    for combination in itertools.product(*(grid[name] for name in names)):
        groups.append((dict(zip(names, combination)), n_trees))
    return groups


def _score_fold(dataset: SurvivalDataset, train_index: np.ndarray, valid_index: np.ndarray,
                base: BoostParams, overrides: Dict, n_trees: List[int], rho: float,
                sigma_is_std: bool) -> Dict[int, float]:
    params = base.model_copy(update={**overrides, 'n_trees': max(n_trees)})
    model = fit(dataset.subset(train_index), params, rho=rho, sigma_is_std=sigma_is_std)
    valid = dataset.subset(valid_index)
    staged = model.staged_predict_tau(valid.features, stages=n_trees)
    return {k: antolini_cindex(SurvivalPredictions.from_tau(tau, model.sigma, valid.time, valid.event))
            for k, tau in staged.items()}


def cross_validate(dataset: SurvivalDataset, param_grid: Mapping[str, Sequence] = PRUNED_PARAM_GRID,
                   k: int = 5, seed: int = 0, base_params: Optional[BoostParams] = None, rho: float = 1.0,
                   sigma_is_std: bool = False, n_jobs: int = 1,
                   progress: bool = False) -> Tuple[BoostParams, pd.DataFrame]:
    """
    Select hyperparameters by stratified k-fold CV on the Antolini C-index.

    Folds are stratified on the event indicator. Every n_trees value of the
    grid is scored from one fit per remaining combination via staged
    predictions. Ties in mean C-index go to fewer trees, then shallower trees.

    Returns:
    --------
    Tuple[BoostParams, pd.DataFrame]
        Best parameters and one CV row per candidate (params, fold scores, mean)
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    base = base_params or BoostParams()
    folds = list(StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
                 .split(np.zeros(len(dataset)), dataset.event))
    for number, (train_index, valid_index) in enumerate(folds):
        if dataset.event[valid_index].sum() == 0 or dataset.event[train_index].sum() == 0:
            raise DatasetError(f"fold {number} has zero events; re-stratify with fewer folds")

    groups = _candidate_groups(param_grid)
    jobs = [(g, f) for g in range(len(groups)) for f in range(k)]
    logger.info("Cross-validating %d candidates (%d fits) over %d folds...",
                sum(len(n) for _, n in groups), len(jobs), k)
    scores = Parallel(n_jobs=n_jobs)(
        delayed(_score_fold)(dataset, folds[f][0], folds[f][1], base, groups[g][0], groups[g][1],
                             rho, sigma_is_std)
        for g, f in tqdm(jobs, desc='cv', disable=not progress)
    )

    rows = []
    for g, (overrides, n_trees) in enumerate(groups):
        for n in n_trees:
            fold_scores = [scores[g * k + f][n] for f in range(k)]
            row = {**base.model_dump(), **overrides, 'n_trees': n}
            row.update({f'fold_{f}': s for f, s in enumerate(fold_scores)})
            row['mean_cindex'] = float(np.mean(fold_scores))
            row['std_cindex'] = float(np.std(fold_scores))
            rows.append(row)
    table = pd.DataFrame(rows)
    table = table.sort_values(['mean_cindex', 'n_trees', 'max_depth'], ascending=[False, True, True],
                              kind='mergesort').reset_index(drop=True)
    best = BoostParams(**{name: _native(table.loc[0, name]) for name in BoostParams.model_fields})
    logger.info("Best CV C-index %.4f with %s", table.loc[0, 'mean_cindex'], best.model_dump())
    return best, table


def _native(value):
    return value.item() if isinstance(value, np.generic) else value


def save_model(model: AftModel, path: Union[str, Path]) -> Path:
    """Write the model as versioned JSON."""
    payload = {
        'format': MODEL_FORMAT,
        'version': MODEL_VERSION,
        'base_score': model.base_score,
        'sigma': model.sigma,
        'learning_rate': model.learning_rate,
        'feature_names': list(model.feature_names),
        'params': model.params.model_dump() if model.params is not None else None,
        'train_loss': list(model.train_loss),
        'transform': model.transform.to_dict() if model.transform is not None else None,
        'trees': [tree.to_dict() for tree in model.flat_trees],
    }
    path = Path(path)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))
    return path


def load_model(path: Union[str, Path]) -> AftModel:
    """
    Read a model written by `save_model`.

    Raises:
    -------
    ModelFormatError
        Unreadable file, wrong format/version or schema violation
    """
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get('format') != MODEL_FORMAT:
        raise ModelFormatError(f"{path} is not a {MODEL_FORMAT} model file")
    if payload.get('version') != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {payload.get('version')} (expected {MODEL_VERSION})")
    try:
        flat = [FlatTree.from_dict(tree) for tree in payload['trees']]
        transform = QuantileTransform.from_dict(payload['transform']) if payload['transform'] else None
        params = BoostParams(**payload['params']) if payload['params'] else None
        model = AftModel(
            trees=[tree.to_node() for tree in flat],
            base_score=float(payload['base_score']),
            sigma=float(payload['sigma']),
            learning_rate=float(payload['learning_rate']),
            feature_names=[str(name) for name in payload['feature_names']],
            transform=transform,
            params=params,
            train_loss=[float(v) for v in payload['train_loss']],
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"schema violation in {path}: {exc!r}") from exc
    if not (model.sigma > 0 and np.isfinite(model.base_score)):
        raise ModelFormatError(f"schema violation in {path}: invalid sigma or base_score")
    if any(np.any(tree.feature >= len(model.feature_names)) for tree in model.flat_trees):
        raise ModelFormatError(f"schema violation in {path}: split on unknown feature index")
    return model


@dataclass
class XGBoostAftReference:
    """Library XGBoost AFT model on the same transformed features."""

    booster: xgb.Booster
    transform: QuantileTransform
    feature_names: List[str]
    sigma: float

    def predict_tau(self, rows: pd.DataFrame) -> np.ndarray:
        matrix = self.transform.transform(rows[self.feature_names])[self.feature_names].to_numpy(dtype=np.float64)
        return self.booster.predict(xgb.DMatrix(matrix, feature_names=self.feature_names), output_margin=True)

    def predictions(self, dataset: SurvivalDataset) -> SurvivalPredictions:
        return SurvivalPredictions.from_tau(self.predict_tau(dataset.features), self.sigma,
                                            dataset.time, dataset.event)


def fit_xgboost_reference(dataset: SurvivalDataset, params: Optional[BoostParams] = None, rho: float = 1.0,
                          sigma_is_std: bool = False) -> XGBoostAftReference:
    """Train xgboost's `survival:aft` objective with the logistic distribution."""
    params = params or BoostParams()
    sigma = logistic_scale(params.sigma, sigma_is_std)
    transform = quantile_fit(dataset.features)
    names = dataset.feature_names
    matrix = transform.transform(dataset.features)[names].to_numpy(dtype=np.float64)

    dtrain = xgb.DMatrix(matrix, feature_names=names)
    dtrain.set_float_info('label_lower_bound', dataset.time)
    dtrain.set_float_info('label_upper_bound', np.where(dataset.event == 1, dataset.time, np.inf))
    dtrain.set_weight(instance_weights(dataset.event, rho))
    booster = xgb.train({
        'objective': 'survival:aft',
        'eval_metric': 'aft-nloglik',
        'aft_loss_distribution': 'logistic',
        'aft_loss_distribution_scale': sigma,
        'tree_method': 'exact',
        'learning_rate': params.learning_rate,
        'max_depth': params.max_depth,
        'lambda': params.reg_lambda,
        'alpha': params.reg_alpha,
        'gamma': params.gamma,
        'min_child_weight': params.min_child_weight,
        'subsample': params.subsample,
        'seed': params.seed,
        'nthread': 1,
        'verbosity': 0,
    }, dtrain, num_boost_round=params.n_trees)
    logger.info("Trained xgboost reference AFT model (%d trees)", params.n_trees)
    return XGBoostAftReference(booster=booster, transform=transform, feature_names=names, sigma=sigma)


@dataclass
class CoxBaseline:
    """Cox model on the quantile-transformed features, constant columns dropped."""

    model: CoxModel
    transform: QuantileTransform
    columns: List[str]

    def covariates(self, rows: pd.DataFrame) -> np.ndarray:
        return self.transform.transform(rows)[self.columns].to_numpy(dtype=np.float64)

    def predictions(self, dataset: SurvivalDataset) -> SurvivalPredictions:
        return SurvivalPredictions.from_cox(self.model, self.covariates(dataset.features),
                                            dataset.time, dataset.event)


def fit_cox_baseline(dataset: SurvivalDataset, max_iter: int = 100, tol: float = 1e-6) -> CoxBaseline:
    """
    Fit the proportional-hazards comparator on the same inputs the boosted model sees.

    Missing values are imputed at the median quantile (0.5) by the transform.
    """
    transform = quantile_fit(dataset.features)
    matrix = transform.transform(dataset.features)[dataset.feature_names]
    columns = [name for name in dataset.feature_names if matrix[name].nunique() > 1]
    dropped = sorted(set(dataset.feature_names) - set(columns))
    if dropped:
        logger.warning("Cox baseline drops constant column(s): %s", ', '.join(dropped))
    model = cox_fit(matrix[columns], dataset.time, dataset.event, max_iter=max_iter, tol=tol)
    return CoxBaseline(model=model, transform=transform, columns=columns)
