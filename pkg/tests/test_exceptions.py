"""Tests for error messages and the CLI error format."""

import pytest

from chf_survival.exceptions import (
    ChfSurvivalError,
    DegeneratePoincareError,
    FlatSegmentError,
    MissingFeatureError,
    NoUsableSegmentError,
    format_error,
)


def test_everything_is_a_value_error():
    assert issubclass(ChfSurvivalError, ValueError)
    assert isinstance(FlatSegmentError(), ChfSurvivalError)


def test_no_usable_segment_lists_every_candidate():
    exc = NoUsableSegmentError('S001', [
        {'segment': 0, 'status': 'rejected', 'quality': 0.61234},
        {'segment': 1, 'status': 'failed', 'quality': None},
    ])
    assert str(exc) == ("no usable segment in record 'S001': segment 0: rejected (quality=0.612); "
                        "segment 1: failed")
    assert exc.record_id == 'S001' and len(exc.diagnostics) == 2


def test_no_usable_segment_without_candidates():
    assert str(NoUsableSegmentError('S002', [])).endswith("record too short")


def test_degenerate_poincare_keeps_defined_values():
    exc = DegeneratePoincareError(mean_hr=60.0, sdnn=0.0)
    assert exc.mean_hr == 60.0 and exc.sdnn == 0.0
    assert "SD2 = 0" in str(exc)


def test_missing_features():
    assert str(MissingFeatureError(['age', 'sex'])) == "missing features: age, sex"


@pytest.mark.parametrize('context, expected', [
    (None, "error: MissingFeatureError: missing features: age"),
    ('features.csv', "error: MissingFeatureError: features.csv: missing features: age"),
])
def test_format_error(context, expected):
    assert format_error(MissingFeatureError(['age']), context) == expected


def test_format_error_is_single_line():
    assert format_error(ChfSurvivalError("two\n  lines")) == "error: ChfSurvivalError: two lines"
