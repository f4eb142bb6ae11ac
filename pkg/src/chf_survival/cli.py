"""
Command-line interface

    python -m chf_survival simulate  --out cohort/ --n 1000 --event-rate 0.15
    python -m chf_survival extract   --manifest cohort/manifest.csv --out run/
    python -m chf_survival train     --features run/features.csv --manifest cohort/manifest.csv --out run/
    python -m chf_survival evaluate  --model run/model.json --features run/features.csv \
                                     --manifest cohort/manifest.csv --split run/split.csv --cox --out run/report.json
    python -m chf_survival seglen    --manifest cohort/manifest.csv --lengths 30,60,120 --out run/seglen.csv
    python -m chf_survival explain   --model run/model.json --features run/features.csv --global --out run/shap/
    python -m chf_survival describe  --features run/features.csv --manifest cohort/manifest.csv
    python -m chf_survival config    --out run.cfg

Exit codes: 0 success, 1 data or validation error, 2 usage error.
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from .boosting import (
    DEFAULT_PARAM_GRID,
    PRUNED_PARAM_GRID,
    AftModel,
    cross_validate,
    fit,
    fit_cox_baseline,
    fit_xgboost_reference,
    load_model,
    save_model,
)
from .config import RunConfig, derive_seed, load_config, write_default_config
from .evaluation import MetricReport, ModelEvaluator
from .exceptions import (
    ChfSurvivalError,
    DatasetError,
    MissingFeatureError,
    ModelFormatError,
    NoComparablePairsError,
    format_error,
)
from .explanation import explain_patient, global_summary, sample_background
from .feature_engineering import (
    BINARY_FEATURES,
    MANIFEST_COLUMNS,
    FeatureEngineer,
    assemble_dataset,
    describe_cohort,
    mean_cycle,
    wave_features,
)
from .simulation import (
    CohortGenParams,
    EcgGenParams,
    calibrate_intercept,
    expected_event_rate,
    oracle_cindex,
    synth_cohort,
    write_cohort,
)
from .survival_core import SurvivalDataset
from .visualization import Visualizer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

MODEL_NAME = 'aft_boosting'

Output = Union[pd.DataFrame, Mapping, list, AftModel, str]


class UsageError(Exception):
    """Arguments parsed but cannot be honoured (exit code 2)."""


@dataclass
class CohortManifest:
    """Validated manifest; `ecg_path` entries are relative to `base_dir`."""

    frame: pd.DataFrame
    base_dir: Path

    def __len__(self) -> int:
        return len(self.frame)


def _number(row: Mapping, name: str, line: int) -> float:
    value = pd.to_numeric(row[name], errors='coerce')
    if value is None or not np.isfinite(value):
        raise DatasetError(f"manifest row {line}: {name} is not a number ({row[name]!r})")
    return float(value)


def _flag(row: Mapping, name: str, line: int) -> int:
    value = _number(row, name, line)
    if value not in (0.0, 1.0):
        raise DatasetError(f"manifest row {line}: {name} must be 0 or 1, got {row[name]!r}")
    return int(value)


def load_manifest(path: Union[str, Path], check_paths: bool = True) -> CohortManifest:
    """
    Read and validate a cohort manifest, failing on the first bad row.

    Row numbers in error messages are CSV line numbers (the header is line 1).

    Raises:
    -------
    DatasetError
        Unreadable file, wrong header, duplicate id, unresolvable path or invalid value
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={'record_id': str, 'ecg_path': str}, keep_default_na=False)
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc}") from exc
    if list(frame.columns) != MANIFEST_COLUMNS:
        missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
        unexpected = [c for c in frame.columns if c not in MANIFEST_COLUMNS]
        raise DatasetError(f"manifest header must be exactly {','.join(MANIFEST_COLUMNS)} "
                           f"(missing: {missing or 'none'}; unexpected: {unexpected or 'none'})")

    base_dir = path.parent
    seen: Dict[str, int] = {}
    clean = []
    for position, row in enumerate(frame.to_dict('records')):
        line = position + 2
        record_id = str(row['record_id']).strip()
        if not record_id:
            raise DatasetError(f"manifest row {line}: empty record_id")
        if record_id in seen:
            raise DatasetError(f"manifest row {line}: duplicate record_id '{record_id}' (first on row {seen[record_id]})")
        seen[record_id] = line
        if check_paths and not (base_dir / str(row['ecg_path'])).is_file():
            raise DatasetError(f"manifest row {line}: record file not found: {row['ecg_path']}")

        entry = {'record_id': record_id, 'ecg_path': str(row['ecg_path'])}
        entry['fs'] = _number(row, 'fs', line)
        if entry['fs'] <= 0:
            raise DatasetError(f"manifest row {line}: fs must be positive")
        entry['age'] = _number(row, 'age', line)
        for name in BINARY_FEATURES:
            entry[name] = _flag(row, name, line)
        entry['time'] = _number(row, 'time', line)
        if entry['time'] <= 0:
            raise DatasetError(f"manifest row {line}: time must be positive days")
        entry['event'] = _flag(row, 'event', line)
        clean.append(entry)

    logger.info("Loaded manifest with %d records from %s", len(clean), path)
    return CohortManifest(frame=pd.DataFrame(clean, columns=MANIFEST_COLUMNS), base_dir=base_dir)


def load_features(path: Union[str, Path]) -> pd.DataFrame:
    """Feature CSV written by `extract`: record_id plus feature columns."""
    try:
        frame = pd.read_csv(path, dtype={'record_id': str})
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise DatasetError(f"cannot read features {path}: {exc}") from exc
    if 'record_id' not in frame.columns:
        raise MissingFeatureError(['record_id'])
    return frame


def check_feature_schema(model: AftModel, features: pd.DataFrame) -> None:
    """The feature CSV must carry exactly the model's feature columns."""
    columns = [c for c in features.columns if c != 'record_id']
    if sorted(columns) != sorted(model.feature_names):
        missing = sorted(set(model.feature_names) - set(columns))
        extra = sorted(set(columns) - set(model.feature_names))
        raise ModelFormatError(f"feature schema mismatch: model expects {len(model.feature_names)} columns "
                               f"(missing: {missing or 'none'}; unexpected: {extra or 'none'})")


def split_dataset(dataset: SurvivalDataset, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Seeded train/test split stratified on the event indicator.

    Returns:
    --------
    Tuple[np.ndarray, np.ndarray]
        Sorted positional indices of the training and test subjects
    """
    counts = np.bincount(dataset.event, minlength=2)
    if counts[1] < 2:
        raise DatasetError(f"degenerate labels: {counts[1]} event(s), need at least 2")
    if counts[0] == 1:
        raise DatasetError("degenerate labels: a single censored subject cannot be stratified")
    train, test = train_test_split(np.arange(len(dataset)), test_size=test_fraction,
                                   stratify=dataset.event, random_state=seed % (2 ** 32))
    return np.sort(train), np.sort(test)


def load_split(path: Union[str, Path]) -> pd.Series:
    """record_id -> 'train'/'test' from a split CSV written by `train`."""
    try:
        split = pd.read_csv(path, dtype={'record_id': str, 'split': str})
        return split.set_index('record_id')['split']
    except (OSError, KeyError, ValueError, pd.errors.ParserError) as exc:
        raise DatasetError(f"cannot read split file {path}: {type(exc).__name__}: {exc}") from exc


def read_split(path: Union[str, Path], dataset: SurvivalDataset) -> Tuple[np.ndarray, np.ndarray]:
    """Positional train/test indices from a split CSV written by `train`."""
    assignment = load_split(path).to_dict()
    unknown = [rid for rid in dataset.record_ids if rid not in assignment]
    if unknown:
        raise DatasetError(f"record_id {unknown[0]} has no split assignment in {path}")
    labels = np.array([assignment[rid] for rid in dataset.record_ids])
    return np.flatnonzero(labels == 'train'), np.flatnonzero(labels == 'test')


def train_model(dataset: SurvivalDataset, config: RunConfig) -> Tuple[AftModel, pd.DataFrame]:
    """Grid search by stratified CV, then refit on every training subject."""
    grid = DEFAULT_PARAM_GRID if config.grid == 'full' else PRUNED_PARAM_GRID
    best, table = cross_validate(dataset, grid, k=config.cv_folds, seed=derive_seed(config.seed, 'cv'),
                                 base_params=config.boost, rho=config.rho, sigma_is_std=config.sigma_is_std,
                                 n_jobs=config.n_jobs, progress=config.progress)
    model = fit(dataset, best, rho=config.rho, sigma_is_std=config.sigma_is_std, progress=config.progress)
    return model, table


def make_evaluator(config: RunConfig) -> ModelEvaluator:
    return ModelEvaluator(horizons=config.horizons, n_boot=config.n_boot, confidence_level=config.ci_level,
                          seed=derive_seed(config.seed, 'evaluate'), n_jobs=config.n_jobs,
                          progress=config.progress)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_outputs(outputs: Mapping[Path, Output]) -> List[Path]:
    """
    Write every artifact of a command in one sequential pass.

    DataFrames become CSV, mappings and lists JSON, models versioned model
    JSON, strings plain text.
    """
    written = []
    for path, payload in outputs.items():
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(payload, pd.DataFrame):
            payload.to_csv(path, index=False)
        elif isinstance(payload, AftModel):
            save_model(payload, path)
        elif isinstance(payload, str):
            path.write_text(payload)
        else:
            path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
        logger.info("Wrote %s", path)
        written.append(path)
    return written


def _config(args: argparse.Namespace) -> RunConfig:
    return load_config(args.config, seed=args.seed, n_jobs=args.n_jobs,
                       progress=False if args.no_progress else None)


def cmd_simulate(args: argparse.Namespace) -> None:
    """Write a synthetic cohort (manifest + records) and print its ground truth."""
    config = _config(args)
    params = CohortGenParams(n=args.n, effect=args.effect, sigma_true=args.sigma_true,
                             censor_time=args.censor_time, seed=derive_seed(config.seed, 'cohort'))
    if args.event_rate is not None:
        params = calibrate_intercept(params, args.event_rate)
    cohort = synth_cohort(params)
    ecg = EcgGenParams(fs=args.fs, duration=args.duration, noise_std=args.noise_std, snr_db=args.snr_db)
    out = Path(args.out)
    write_cohort(cohort, out, ecg=ecg, root_seed=config.seed, n_jobs=config.n_jobs, progress=config.progress)

    try:
        oracle = oracle_cindex(cohort.dataset, cohort.true_tau, params.sigma_true) if params.sigma_true > 0 else None
    except NoComparablePairsError:
        oracle = None
    summary = {
        'n': params.n,
        'effect': params.effect,
        'sigma_true': params.sigma_true,
        'censor_time': params.censor_time,
        'intercept': params.intercept,
        'event_rate': cohort.event_rate,
        'expected_event_rate': expected_event_rate(params),
        'oracle_cindex': oracle,
        'seed': config.seed,
    }
    truth = pd.DataFrame({'record_id': cohort.dataset.record_ids, 'true_tau': cohort.true_tau})
    write_outputs({out / 'truth.csv': truth, out / 'truth.json': summary})
    print(f"event rate: {summary['event_rate']:.4f} (expected {summary['expected_event_rate']:.4f})")
    print(f"oracle C-index: {'n/a' if oracle is None else f'{oracle:.4f}'}")


def cmd_extract(args: argparse.Namespace) -> None:
    """Per-record features + diagnostics; records without a usable segment are excluded."""
    config = _config(args)
    manifest = load_manifest(args.manifest)
    engineer = FeatureEngineer(config)
    keep = args.dump_cycles or args.plot
    features, diagnostics = engineer.engineer_features(manifest.frame, manifest.base_dir,
                                                       n_segments=args.segments, keep_cycles=keep)
    out = Path(args.out)
    outputs: Dict[Path, Output] = {out / 'features.csv': features, out / 'diagnostics.json': diagnostics}
    if args.dump_cycles:
        for record_id, cycles in engineer.cycles.items():
            outputs[out / 'cycles' / f'{record_id}.csv'] = pd.DataFrame(
                cycles, columns=[f'c{i}' for i in range(cycles.shape[1])])
    write_outputs(outputs)

    if args.plot:
        shown = list(engineer.cycles)[:4]
        cycles = {rid: mean_cycle(engineer.cycles[rid]) for rid in shown}
        waves = {rid: wave_features(cycle, config.features) for rid, cycle in cycles.items()}
        Visualizer(out).plot_mean_cycles(cycles, waves)
    print(f"extracted {diagnostics['n_extracted']}/{diagnostics['n_records']} records "
          f"({len(diagnostics['excluded'])} excluded)")


def cmd_train(args: argparse.Namespace) -> None:
    """Stratified split, CV on the training part, refit with the best parameters."""
    config = _config(args)
    manifest = load_manifest(args.manifest, check_paths=False)
    dataset = assemble_dataset(manifest.frame, load_features(args.features))
    train_index, test_index = split_dataset(dataset, config.test_fraction, derive_seed(config.seed, 'split'))
    model, cv_table = train_model(dataset.subset(train_index), config)

    labels = np.full(len(dataset), 'train', dtype=object)
    labels[test_index] = 'test'
    split = pd.DataFrame({'record_id': dataset.record_ids, 'split': labels})
    out = Path(args.out)
    write_outputs({out / 'model.json': model, out / 'cv.csv': cv_table, out / 'split.csv': split})
    print(f"best CV C-index {cv_table.loc[0, 'mean_cindex']:.4f}; "
          f"trained on {len(train_index)} subjects, {len(test_index)} held out")


def evaluate_models(model: AftModel, train: Optional[SurvivalDataset], test: SurvivalDataset,
                    config: RunConfig, cox: bool = False, xgboost_reference: bool = False) -> Dict[str, MetricReport]:
    """Held-out reports for the boosted model and the requested comparators."""
    evaluator = make_evaluator(config)
    reports = {MODEL_NAME: evaluator.evaluate(model.predictions(test))}
    if cox:
        reports['cox'] = evaluator.evaluate(fit_cox_baseline(train).predictions(test))
    if xgboost_reference:
        reference = fit_xgboost_reference(train, model.params, rho=config.rho, sigma_is_std=config.sigma_is_std)
        reports['xgboost_reference'] = evaluator.evaluate(reference.predictions(test))
    return reports


def cmd_evaluate(args: argparse.Namespace) -> None:
    """Four discrimination metrics with bootstrap CIs on the held-out subjects."""
    config = _config(args)
    model = load_model(args.model)
    features = load_features(args.features)
    check_feature_schema(model, features)
    manifest = load_manifest(args.manifest, check_paths=False)
    dataset = assemble_dataset(manifest.frame, features, model.feature_names)

    if args.split:
        train_index, test_index = read_split(args.split, dataset)
        train, test = dataset.subset(train_index), dataset.subset(test_index)
    elif args.cox or args.xgboost_reference:
        raise UsageError("--cox and --xgboost-reference need --split to fit the comparators on training subjects")
    else:
        train, test = None, dataset

    reports = evaluate_models(model, train, test, config, cox=args.cox, xgboost_reference=args.xgboost_reference)
    table = make_evaluator(config).compare_models(reports)
    out = Path(args.out)
    payload = {'models': {name: report.to_json_dict() for name, report in reports.items()}, 'seed': config.seed}
    write_outputs({out: payload, out.with_suffix('.csv'): table.rename_axis('metric').reset_index()})
    print(table.to_string())


def cmd_seglen(args: argparse.Namespace) -> None:
    """C-index against total recording length, one extract/train/evaluate run per length."""
    config = _config(args)
    manifest = load_manifest(args.manifest)
    segment = config.signal.segment_seconds
    lengths = sorted(set(args.lengths))
    for length in lengths:
        if length <= 0 or abs(length / segment - round(length / segment)) > 1e-9:
            raise UsageError(f"length {length:g} s is not a positive multiple of the {segment:g} s segment")

    rows = []
    for length in lengths:
        n_segments = int(round(length / segment))
        features, diagnostics = FeatureEngineer(config).engineer_features(manifest.frame, manifest.base_dir,
                                                                          n_segments=n_segments)
        dataset = assemble_dataset(manifest.frame, features)
        train_index, test_index = split_dataset(dataset, config.test_fraction, derive_seed(config.seed, 'split'))
        train, test = dataset.subset(train_index), dataset.subset(test_index)
        model, _ = train_model(train, config)
        evaluator = make_evaluator(config)
        models = {MODEL_NAME: model.predictions(test)}
        if args.cox:
            models['cox'] = fit_cox_baseline(train).predictions(test)
        for name, preds in models.items():
            value = evaluator.evaluate_metric(preds, 'c_index')
            rows.append({
                'length_s': length,
                'n_segments': n_segments,
                'model': name,
                'n_subjects': len(dataset),
                'n_excluded': len(diagnostics['excluded']),
                'n_test': len(test),
                'c_index': value.point,
                'lo': value.lo,
                'hi': value.hi,
            })
        logger.info("Length %g s: C-index %.4f", length, rows[-len(models)]['c_index'])

    table = pd.DataFrame(rows)
    previous = table.groupby('model', sort=False)[['lo', 'hi']].shift(1)
    table['overlaps_previous'] = [
        None if np.isnan(p_lo) else bool(lo <= p_hi and p_lo <= hi)
        for lo, hi, p_lo, p_hi in zip(table['lo'], table['hi'], previous['lo'], previous['hi'])
    ]
    out = Path(args.out)
    write_outputs({out: table})
    if args.plot:
        Visualizer(out.parent).plot_seglen(table, name=out.with_suffix('.png').name)
    print(table[['length_s', 'model', 'c_index', 'lo', 'hi']].to_string(index=False))


def cmd_explain(args: argparse.Namespace) -> None:
    """Global TreeSHAP summary or a per-patient KernelSHAP report."""
    config = _config(args)
    model = load_model(args.model)
    features = load_features(args.features)
    check_feature_schema(model, features)
    features.index = features['record_id'].to_numpy()
    explained, background_pool = features, features
    if args.split:
        split = load_split(args.split)
        assigned = features['record_id'].map(split)
        explained, background_pool = features[assigned == 'test'], features[assigned == 'train']
    out = Path(args.out)
    settings = config.explain

    if args.patient is not None:
        if args.patient not in features.index:
            raise UsageError(f"unknown patient id '{args.patient}'")
        horizon = args.horizon or config.horizons[0]
        background = sample_background(background_pool[model.feature_names], settings.background_size,
                                       seed=derive_seed(config.seed, 'background'))
        report = explain_patient(model, features.loc[args.patient, model.feature_names], background,
                                 horizon=horizon, n_samples=settings.n_coalitions,
                                 seed=derive_seed(config.seed, 'kernel-shap'),
                                 max_exact=settings.max_exact_features, record_id=args.patient)
        write_outputs({out / f'patient_{args.patient}.json': report.to_json_dict()})
        if args.plot:
            Visualizer(out).plot_patient(report, k=settings.top_k)
        print(f"{args.patient}: P(event by day {horizon:g}) = {report.probability:.4f}")
        return

    summary = global_summary(model, explained[model.feature_names].reset_index(drop=True),
                             window=settings.median_window)
    importance = {
        'base_value': summary.base_value,
        'window': summary.window,
        'n_rows': len(explained),
        'top_features': summary.top_features(settings.top_k),
        'importance': summary.importance_table(),
    }
    write_outputs({out / 'shap_long.csv': summary.to_long_frame(), out / 'importance.json': importance})
    if args.plot:
        Visualizer(out).plot_global_summary(summary, k=settings.top_k)
    print("top features: " + ", ".join(summary.top_features(settings.top_k)))


def cmd_describe(args: argparse.Namespace) -> None:
    """Subject feature overview (mean±std / %) with event counts."""
    config = _config(args)
    manifest = load_manifest(args.manifest, check_paths=False)
    dataset = assemble_dataset(manifest.frame, load_features(args.features))
    table = describe_cohort(dataset, horizons=config.horizons)
    if args.out:
        write_outputs({Path(args.out): table})
    print(table[['feature', 'summary']].to_string(index=False))


def cmd_config(args: argparse.Namespace) -> None:
    """Write the documented default configuration."""
    path = write_default_config(args.out)
    print(f"wrote {path}")


def _lengths(value: str) -> List[float]:
    try:
        return [float(item) for item in value.split(',') if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated seconds, got '{value}'") from exc


def _fraction(value: str) -> float:
    rate = float(value)
    if not 0 < rate < 1:
        raise argparse.ArgumentTypeError(f"expected a fraction in (0, 1), got {value}")
    return rate


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='chf_survival',
        description="CHF time-to-hospitalization modelling from a 30-second ECG and clinical covariates.",
    )
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, help="key = value configuration file")
    common.add_argument('--seed', type=int, help="root seed (overrides the config file)")
    common.add_argument('--n-jobs', type=int, help="parallel workers (overrides the config file)")
    common.add_argument('--no-progress', action='store_true', help="disable progress bars")
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('simulate', parents=[common], help="write a synthetic cohort")
    p.add_argument('--out', required=True, type=Path)
    p.add_argument('--n', type=int, default=1000)
    p.add_argument('--effect', choices=['linear', 'nonlinear'], default='nonlinear')
    p.add_argument('--sigma-true', type=float, default=0.3)
    p.add_argument('--censor-time', type=float, default=1500.0)
    p.add_argument('--event-rate', type=_fraction, help="calibrate the intercept to this expected event rate")
    p.add_argument('--fs', type=float, default=250.0)
    p.add_argument('--duration', type=float, default=30.0, help="record length in seconds")
    p.add_argument('--noise-std', type=float, default=0.0)
    p.add_argument('--snr-db', type=float)
    p.set_defaults(handler=cmd_simulate)

    p = commands.add_parser('extract', parents=[common], help="extract features from ECG records")
    p.add_argument('--manifest', required=True, type=Path)
    p.add_argument('--out', required=True, type=Path)
    p.add_argument('--segments', type=int, default=1, help="30-second segments per subject")
    p.add_argument('--dump-cycles', action='store_true', help="write the selected cycles of every record")
    p.add_argument('--plot', action='store_true')
    p.set_defaults(handler=cmd_extract)

    p = commands.add_parser('train', parents=[common], help="cross-validate and fit the boosted AFT model")
    p.add_argument('--features', required=True, type=Path)
    p.add_argument('--manifest', required=True, type=Path)
    p.add_argument('--out', required=True, type=Path)
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser('evaluate', parents=[common], help="held-out metrics with bootstrap CIs")
    p.add_argument('--model', required=True, type=Path)
    p.add_argument('--features', required=True, type=Path)
    p.add_argument('--manifest', required=True, type=Path)
    p.add_argument('--split', type=Path, help="split CSV from train; without it every row is evaluated")
    p.add_argument('--cox', action='store_true', help="add the Cox proportional-hazards comparator")
    p.add_argument('--xgboost-reference', action='store_true', help="add the library XGBoost AFT comparator")
    p.add_argument('--out', required=True, type=Path)
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser('seglen', parents=[common], help="C-index against recording length")
    p.add_argument('--manifest', required=True, type=Path)
    p.add_argument('--lengths', required=True, type=_lengths, help="total lengths in seconds, e.g. 30,60,120")
    p.add_argument('--cox', action='store_true')
    p.add_argument('--plot', action='store_true')
    p.add_argument('--out', required=True, type=Path)
    p.set_defaults(handler=cmd_seglen)

    p = commands.add_parser('explain', parents=[common], help="SHAP explanations")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument('--global', dest='global_', action='store_true', help="TreeSHAP over every explained row")
    mode.add_argument('--patient', help="record_id of the patient to explain")
    p.add_argument('--model', required=True, type=Path)
    p.add_argument('--features', required=True, type=Path)
    p.add_argument('--split', type=Path, help="explain test rows, sample background from train rows")
    p.add_argument('--horizon', type=float, help="days; defaults to the first configured horizon")
    p.add_argument('--plot', action='store_true')
    p.add_argument('--out', required=True, type=Path)
    p.set_defaults(handler=cmd_explain)

    p = commands.add_parser('describe', parents=[common], help="cohort feature overview")
    p.add_argument('--features', required=True, type=Path)
    p.add_argument('--manifest', required=True, type=Path)
    p.add_argument('--out', type=Path)
    p.set_defaults(handler=cmd_describe)

    p = commands.add_parser('config', help="write the default configuration file")
    p.add_argument('--out', required=True, type=Path)
    p.set_defaults(handler=cmd_config)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(args.log_level)

    try:
        args.handler(args)
    except UsageError as exc:
        print(f"error: usage: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_USAGE
    except ChfSurvivalError as exc:
        logger.debug("Command failed", exc_info=True)
        print(format_error(exc), file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
