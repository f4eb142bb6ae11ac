"""
Configuration Module

Validated pipeline configuration, the `key = value` config-file loader and
seed derivation. Every constant the pipeline uses is exposed here with its
documented default.
"""

import logging
import typing
import zlib
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigError

logger = logging.getLogger(__name__)


class SignalConfig(BaseModel):
    """Segmenting, filtering, R-peak detection and quality gating."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    segment_seconds: float = Field(30.0, gt=0)
    low_hz: float = Field(0.5, gt=0)
    high_hz: float = Field(45.0, gt=0)
    filter_order: int = Field(4, ge=1)
    quality_threshold: float = Field(0.85, ge=-1, le=1)
    cycle_length: int = Field(100, ge=4)
    # Hamilton detector
    envelope_window_s: float = Field(0.08, gt=0)
    refractory_s: float = Field(0.2, gt=0)
    threshold_fraction: float = Field(0.3125, gt=0, lt=1)
    peak_buffer: int = Field(8, ge=1)
    init_seconds: float = Field(8.0, gt=0)
    searchback_rr_factor: float = Field(1.5, gt=1)
    searchback_threshold_factor: float = Field(0.5, gt=0, le=1)
    twave_window_s: float = Field(0.36, gt=0)
    twave_slope_ratio: float = Field(0.5, gt=0, le=1)
    r_refine_window_s: float = Field(0.075, gt=0)
    min_peaks: int = Field(3, ge=3)

    @model_validator(mode='after')
    def _check_band(self) -> 'SignalConfig':
        if not self.low_hz < self.high_hz:
            raise ValueError(f"low_hz ({self.low_hz}) must be below high_hz ({self.high_hz})")
        return self


class FeatureConfig(BaseModel):
    """
    Wave search regions and HRV conventions.

    Regions are inclusive index ranges on the R-centered 100-sample cycle:
    P [5, 40), Q [40, 50), S (50, 62], T [62, 95].
    """

    model_config = ConfigDict(extra='forbid', frozen=True)

    p_region: Tuple[int, int] = (5, 39)
    q_region: Tuple[int, int] = (40, 49)
    s_region: Tuple[int, int] = (51, 62)
    t_region: Tuple[int, int] = (62, 95)
    baseline_samples: int = Field(3, ge=1)
    sdnn_ddof: int = Field(0, ge=0, le=1)
    missing_value: float = Field(0.5, ge=0, le=1)

    @field_validator('p_region', 's_region', 'q_region', 't_region')
    @classmethod
    def _check_region(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        start, stop = value
        if not 0 <= start < stop <= 99:
            raise ValueError(f"region {value} must satisfy 0 <= start < stop <= 99")
        return value


class BoostParams(BaseModel):
    """Boosted AFT hyperparameters; defaults are the middle of the search grid."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    n_trees: int = Field(200, ge=0)
    max_depth: int = Field(3, ge=0)
    learning_rate: float = Field(0.1, gt=0, le=1)
    reg_lambda: float = Field(1.0, ge=0)
    reg_alpha: float = Field(0.0, ge=0)
    gamma: float = Field(0.0, ge=0)
    min_child_weight: float = Field(1.0, ge=0)
    sigma: float = Field(1.0, gt=0)
    subsample: float = Field(1.0, gt=0, le=1)
    seed: int = Field(0, ge=0)


class ExplainConfig(BaseModel):
    """SHAP background, coalition budget and global summary settings."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    background_size: int = Field(100, ge=1)
    n_coalitions: int = Field(2048, ge=16)
    max_exact_features: int = Field(14, ge=1, le=14)
    median_window: int = Field(201, ge=1)
    top_k: int = Field(10, ge=1)


class RunConfig(BaseModel):
    """
    Complete run configuration.

    Defaults reproduce the evaluation protocol: 70/30 split, 5-fold CV,
    horizons of one and two years, 1000 bootstrap replicates at 90%.
    """

    model_config = ConfigDict(extra='forbid', frozen=True)

    seed: int = Field(42, ge=0)
    n_jobs: int = 1
    progress: bool = True

    cv_folds: int = Field(5, ge=2)
    test_fraction: float = Field(0.30, gt=0, lt=1)
    horizons: List[float] = Field(default_factory=lambda: [365.0, 730.0])
    n_boot: int = Field(1000, ge=1)
    ci_level: float = Field(0.90, gt=0, lt=1)

    grid: str = Field('pruned', pattern='^(pruned|full)$')
    rho: float = Field(1.0, gt=0)
    sigma_is_std: bool = False
    seglen_mode: str = Field('average', pattern='^(average|concatenate)$')

    signal: SignalConfig = Field(default_factory=SignalConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    explain: ExplainConfig = Field(default_factory=ExplainConfig)
    boost: BoostParams = Field(default_factory=BoostParams)

    @field_validator('horizons')
    @classmethod
    def _check_horizons(cls, value: List[float]) -> List[float]:
        if not value or any(h <= 0 for h in value):
            raise ValueError("horizons must be a non-empty list of positive days")
        return sorted(value)


def derive_seed(root_seed: int, component: str, index: int = 0) -> int:
    """
    Derive a reproducible child seed from the root seed.

    The child depends only on (root_seed, component, index), so any stage of
    the pipeline can be rerun alone and draws the same random numbers.
    """
    sequence = np.random.SeedSequence([int(root_seed), zlib.crc32(component.encode('utf-8')), int(index)])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def _is_sequence(annotation: Any) -> bool:
    origin = typing.get_origin(annotation)
    return origin in (list, tuple, List, Tuple)


def _parse_value(model: type, key: str, raw: Optional[str]) -> Any:
    if raw is None:
        raise ConfigError(f"config key '{key}' has no value")
    field = model.model_fields[key]
    if _is_sequence(field.annotation):
        return [item.strip() for item in raw.split(',') if item.strip()]
    return raw.strip()


def _nest(model: type, flat: Dict[str, Optional[str]]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    sections = {
        name: field.annotation for name, field in model.model_fields.items()
        if isinstance(field.annotation, type) and issubclass(field.annotation, BaseModel)
    }
    for key, raw in flat.items():
        if '.' in key:
            section, sub_key = key.split('.', 1)
            if section not in sections or sub_key not in sections[section].model_fields:
                raise ConfigError(f"unknown config key '{key}'")
            nested.setdefault(section, {})[sub_key] = _parse_value(sections[section], sub_key, raw)
        else:
            if key not in model.model_fields or key in sections:
                raise ConfigError(f"unknown config key '{key}'")
            nested[key] = _parse_value(model, key, raw)
    return nested


def load_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> RunConfig:
    """
    Load a RunConfig from a `key = value` file.

    Parameters:
    -----------
    path : str or Path, optional
        Config file; when None the documented defaults are used
    **overrides
        Top-level fields that take precedence over the file (e.g. seed)

    Returns:
    --------
    RunConfig
    """
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values = _nest(RunConfig, dict(dotenv_values(path)))
        logger.info("Loaded %d config sections/keys from %s", len(values), path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = '.'.join(str(part) for part in first['loc'])
        raise ConfigError(f"invalid config value for '{location}': {first['msg']}") from exc


def _flatten(model: BaseModel, prefix: str = '') -> List[Tuple[str, str]]:
    lines = []
    for name, value in model:
        key = f"{prefix}{name}"
        if isinstance(value, BaseModel):
            lines.extend(_flatten(value, prefix=f"{key}."))
        elif isinstance(value, (list, tuple)):
            lines.append((key, ','.join(str(v) for v in value)))
        elif isinstance(value, bool):
            lines.append((key, str(value).lower()))
        else:
            lines.append((key, str(value)))
    return lines


def write_default_config(path: Union[str, Path], config: Optional[RunConfig] = None) -> Path:
    """Write every config key with its value, one `key = value` per line."""
    config = config or RunConfig()
    path = Path(path)
    body = ["# chf_survival run configuration", "# lists are comma separated; sections use dotted keys", ""]
    body.extend(f"{key} = {value}" for key, value in _flatten(config))
    path.write_text("\n".join(body) + "\n")
    return path
