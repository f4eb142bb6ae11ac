"""
Signal Processing Module

Turns a raw single-lead ECG stream into quality-gated 30-second segments with
located R-peaks and R-centered heart cycles resampled to a fixed length.

Pipeline per segment: band-pass filter -> scale to [0, 1] -> Hamilton R-peak
detection -> cycle extraction -> quality (mean correlation to the mean cycle).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import butter, find_peaks, sosfiltfilt

from .config import SignalConfig
from .exceptions import (
    CycleExtractionError,
    FlatSegmentError,
    NoUsableSegmentError,
    PeakDetectionError,
    SignalError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EcgRecord:
    """Raw single-channel ECG stream."""

    record_id: str
    fs: float
    samples: np.ndarray

    def __post_init__(self):
        if not self.fs > 0:
            raise SignalError(f"record '{self.record_id}': sampling rate must be positive, got {self.fs}")
        object.__setattr__(self, 'samples', np.asarray(self.samples, dtype=np.float64))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs

    @classmethod
    def from_csv(cls, path: Union[str, Path], record_id: str, fs: float) -> 'EcgRecord':
        """Read a record stored as one numeric sample per line."""
        try:
            samples = pd.read_csv(path, header=None, dtype=np.float64).iloc[:, 0].to_numpy()
        except (OSError, ValueError, pd.errors.ParserError) as exc:
            raise SignalError(f"unreadable record '{record_id}' at {path}: {exc}") from exc
        return cls(record_id=record_id, fs=fs, samples=samples)


@dataclass(frozen=True)
class Segment:
    """Filtered, [0,1]-scaled 30-second window of a record."""

    record_id: str
    start_index: int
    samples: np.ndarray
    r_peaks: np.ndarray
    fs: float


@dataclass(frozen=True)
class CycleEnsemble:
    """R-centered cycles of one segment, each resampled to the same length."""

    cycles: np.ndarray
    quality: float
    rr_intervals: np.ndarray
    skipped: int = 0

    @property
    def n_cycles(self) -> int:
        return int(self.cycles.shape[0])


@dataclass(frozen=True)
class SelectedSegment:
    """Result of segment selection: the segment, its cycles and the audit trail."""

    segment: Segment
    ensemble: CycleEnsemble
    index: int
    diagnostics: List[Dict] = field(default_factory=list)


def bandpass_filter(samples: np.ndarray, fs: float, low: float = 0.5, high: float = 45.0,
                    order: int = 4) -> np.ndarray:
    """
    Zero-phase Butterworth band-pass filter.

    The filter is applied forward and backward (second-order sections), so the
    output has no phase shift and R-peak timings are preserved.

    Parameters:
    -----------
    samples : np.ndarray
        Voltage samples
    fs : float
        Sampling rate (Hz)
    low, high : float
        Pass band edges (Hz), 0 < low < high < fs/2
    order : int
        Butterworth order

    Returns:
    --------
    np.ndarray
        Filtered samples, same length as the input
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise SignalError("cannot filter an empty signal")
    if fs <= 2 * high:
        raise SignalError(f"Nyquist violation: fs={fs} Hz must exceed 2*high={2 * high} Hz")
    if not 0 < low < high:
        raise SignalError(f"invalid band ({low}, {high}) Hz")
    sos = butter(order, [low, high], btype='bandpass', fs=fs, output='sos')
    padlen = min(3 * (2 * len(sos) + 1), samples.size - 1)
    return sosfiltfilt(sos, samples, padlen=max(padlen, 0))


def scale_unit(samples: np.ndarray) -> np.ndarray:
    """Affine map of a segment onto [0, 1]; flat input raises FlatSegmentError."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise SignalError("cannot scale an empty segment")
    low, high = samples.min(), samples.max()
    if not high > low:
        raise FlatSegmentError()
    return (samples - low) / (high - low)


def _moving_average(values: np.ndarray, width: int) -> np.ndarray:
    width = max(int(width), 1)
    kernel = np.ones(width) / width
    return np.convolve(values, kernel, mode='same')


def detect_r_peaks(samples: np.ndarray, fs: float, config: Optional[SignalConfig] = None) -> np.ndarray:
    """
    Hamilton QRS detector.

    The slope envelope (absolute derivative smoothed over 80 ms) is scanned
    peak by peak. A peak is a QRS when it exceeds
    noise_avg + 0.3125 * (qrs_avg - noise_avg), where both averages run over
    the last 8 classified peaks, and it lies at least one refractory period
    after the previous detection. A peak within 360 ms of the previous beat
    with less than half its slope is taken for a T wave. When the gap since
    the last detection grows past 1.5 mean RR intervals, the largest skipped
    peak above half the threshold is recovered (search-back). Detections are
    then moved to the signal apex nearby.

    Parameters:
    -----------
    samples : np.ndarray
        Filtered, [0,1]-scaled segment
    fs : float
        Sampling rate (Hz)
    config : SignalConfig, optional
        Detector constants

    Returns:
    --------
    np.ndarray
        Strictly increasing R-peak sample indices
    """
    config = config or SignalConfig()
    samples = np.asarray(samples, dtype=np.float64)
    refractory = max(int(round(config.refractory_s * fs)), 1)
    twave_window = int(round(config.twave_window_s * fs))

    slope = np.abs(np.diff(samples, prepend=samples[:1])) * fs
    envelope = _moving_average(slope, round(config.envelope_window_s * fs))
    candidates, _ = find_peaks(envelope, distance=refractory)
    candidates = candidates[envelope[candidates] > 0]
    if candidates.size < config.min_peaks:
        raise PeakDetectionError(f"fewer than {config.min_peaks} peaks detected ({candidates.size})")

    # Seed the QRS buffer with the envelope maximum of each of the first seconds.
    buffer_size = config.peak_buffer
    second = int(round(fs))
    n_init = max(1, min(int(config.init_seconds), len(samples) // max(second, 1)))
    init_peaks = [envelope[i * second:(i + 1) * second].max() for i in range(n_init)]
    qrs_buffer = list(init_peaks[-buffer_size:])
    noise_buffer = [0.0] * min(buffer_size, len(qrs_buffer))
    rr_buffer: List[float] = []

    def threshold() -> float:
        qrs_avg, noise_avg = float(np.mean(qrs_buffer)), float(np.mean(noise_buffer))
        return noise_avg + config.threshold_fraction * (qrs_avg - noise_avg)

    def accept(position: int) -> None:
        if detections:
            rr_buffer.append(position - detections[-1])
            del rr_buffer[:-buffer_size]
        detections.append(position)
        qrs_buffer.append(envelope[position])
        del qrs_buffer[:-buffer_size]

    def is_t_wave(position: int) -> bool:
        # within 360 ms of the last beat and less than half its slope
        return (position - detections[-1] < twave_window
                and envelope[position] < config.twave_slope_ratio * envelope[detections[-1]])

    def search_back(until: int) -> None:
        # Recover missed beats while the gap since the last detection is too long.
        while detections and rr_buffer:
            mean_rr = float(np.mean(rr_buffer))
            if until - detections[-1] <= config.searchback_rr_factor * mean_rr:
                return
            lowered = config.searchback_threshold_factor * threshold()
            skipped = [p for p in pending
                       if p - detections[-1] >= refractory and until - p >= refractory
                       and envelope[p] > lowered and not is_t_wave(p)]
            if not skipped:
                return
            best = max(skipped, key=lambda p: envelope[p])
            pending[:] = [p for p in pending if p > best]
            accept(best)

    detections: List[int] = []
    pending: List[int] = []
    for position in candidates:
        search_back(position)
        is_qrs = envelope[position] > threshold()
        if is_qrs and detections and (position - detections[-1] < refractory or is_t_wave(position)):
            is_qrs = False
        if is_qrs:
            accept(int(position))
            pending.clear()
        else:
            noise_buffer.append(envelope[position])
            del noise_buffer[:-buffer_size]
            pending.append(int(position))
    search_back(len(samples))

    peaks = _refine_to_apex(samples, np.asarray(detections, dtype=np.int64), fs, config, refractory)
    if peaks.size < config.min_peaks:
        raise PeakDetectionError(f"fewer than {config.min_peaks} peaks detected ({peaks.size})")
    return peaks


def _refine_to_apex(samples: np.ndarray, peaks: np.ndarray, fs: float,
                    config: SignalConfig, refractory: int) -> np.ndarray:
    half = max(int(round(config.r_refine_window_s * fs)), 1)
    refined: List[int] = []
    for peak in peaks:
        lo, hi = max(peak - half, 0), min(peak + half + 1, len(samples))
        apex = lo + int(np.argmax(samples[lo:hi]))
        if refined and apex - refined[-1] < refractory:
            if samples[apex] > samples[refined[-1]]:
                refined[-1] = apex
            continue
        refined.append(apex)
    return np.asarray(refined, dtype=np.int64)


def extract_cycles(segment: np.ndarray, r_peaks: np.ndarray, fs: float,
                   cycle_length: int = 100) -> CycleEnsemble:
    """
    Cut one R-centered cycle per interior R-peak.

    The window around peak p spans L = min(p - p_prev, p_next - p) samples,
    [p - L/2, p + L/2), and is linearly interpolated onto `cycle_length`
    points so that p falls on index cycle_length / 2. Windows leaving the
    segment are skipped.

    Parameters:
    -----------
    segment : np.ndarray
        Scaled segment samples
    r_peaks : np.ndarray
        Ascending R-peak indices (at least 3)
    fs : float
        Sampling rate (Hz)
    cycle_length : int
        Resampled cycle length

    Returns:
    --------
    CycleEnsemble
        Cycles, quality score and RR intervals (seconds)
    """
    segment = np.asarray(segment, dtype=np.float64)
    r_peaks = np.asarray(r_peaks, dtype=np.int64)
    if r_peaks.size < 3:
        raise CycleExtractionError(f"need at least 3 R-peaks, got {r_peaks.size}")
    rr_intervals = np.diff(r_peaks) / fs
    if np.any(rr_intervals <= 0):
        raise CycleExtractionError("R-peaks must be strictly increasing")

    index = np.arange(segment.size, dtype=np.float64)
    offsets = np.arange(cycle_length, dtype=np.float64) / cycle_length
    cycles, skipped = [], 0
    for prev_peak, peak, next_peak in zip(r_peaks[:-2], r_peaks[1:-1], r_peaks[2:]):
        width = float(min(peak - prev_peak, next_peak - peak))
        grid = peak - width / 2 + offsets * width
        if grid[0] < 0 or grid[-1] > segment.size - 1:
            skipped += 1
            continue
        cycles.append(np.interp(grid, index, segment))
    if not cycles:
        raise CycleExtractionError("every cycle window exceeds the segment bounds")

    cycles = np.vstack(cycles)
    quality = segment_quality(cycles) if len(cycles) >= 2 else 0.0
    return CycleEnsemble(cycles=cycles, quality=quality, rr_intervals=rr_intervals, skipped=skipped)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a_c, b_c = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.dot(a_c, a_c) * np.dot(b_c, b_c))
    # Zero variance on either side: correlation is defined as 0.
    if denom <= 0 or not np.isfinite(denom):
        return 0.0
    return float(np.clip(np.dot(a_c, b_c) / denom, -1.0, 1.0))


def segment_quality(cycles: np.ndarray) -> float:
    """Mean Pearson correlation between each cycle and the element-wise mean cycle."""
    cycles = np.asarray(cycles, dtype=np.float64)
    if cycles.ndim != 2 or cycles.shape[0] < 2:
        raise CycleExtractionError("segment quality needs at least 2 cycles")
    mean_cycle = cycles.mean(axis=0)
    return float(np.mean([_pearson(cycle, mean_cycle) for cycle in cycles]))


class EcgProcessor:
    """
    Segment pipeline for whole records.

    Splits a record into non-overlapping segments, runs filter -> scale ->
    detect -> cycles -> quality on each, and picks among the segments that
    pass the quality gate with a seeded random choice.
    """

    def __init__(self, config: Optional[SignalConfig] = None):
        """
        Initialize EcgProcessor.

        Parameters:
        -----------
        config : SignalConfig, optional
            Pipeline constants (defaults: 30 s, 0.5-45 Hz, quality 0.85)
        """
        self.config = config or SignalConfig()

    def split(self, record: EcgRecord) -> List[Tuple[int, np.ndarray]]:
        """Non-overlapping full-length segments; a short tail is dropped."""
        length = int(round(self.config.segment_seconds * record.fs))
        n_segments = len(record.samples) // length
        return [(k * length, record.samples[k * length:(k + 1) * length]) for k in range(n_segments)]

    def process_segment(self, record_id: str, start: int, raw: np.ndarray,
                        fs: float) -> Tuple[Segment, CycleEnsemble]:
        """Run the full per-segment pipeline; raises SignalError subclasses on failure."""
        cfg = self.config
        filtered = bandpass_filter(raw, fs, cfg.low_hz, cfg.high_hz, cfg.filter_order)
        scaled = scale_unit(filtered)
        peaks = detect_r_peaks(scaled, fs, cfg)
        ensemble = extract_cycles(scaled, peaks, fs, cfg.cycle_length)
        segment = Segment(record_id=record_id, start_index=start, samples=scaled, r_peaks=peaks, fs=fs)
        return segment, ensemble

    def evaluate_segments(self, record: EcgRecord) -> Tuple[List[Dict], Dict[int, Tuple[Segment, CycleEnsemble]]]:
        """
        Process every segment of a record.

        Returns:
        --------
        Tuple[List[Dict], Dict]
            Per-segment diagnostics and the processed segments keyed by index
        """
        diagnostics, processed = [], {}
        for k, (start, raw) in enumerate(self.split(record)):
            entry = {'segment': k, 'start_index': start, 'quality': None}
            try:
                segment, ensemble = self.process_segment(record.record_id, start, raw, record.fs)
            except SignalError as exc:
                entry['status'] = f"discarded: {exc}"
            else:
                entry['quality'] = ensemble.quality
                entry['n_cycles'] = ensemble.n_cycles
                if ensemble.quality >= self.config.quality_threshold:
                    entry['status'] = 'passed'
                    processed[k] = (segment, ensemble)
                else:
                    entry['status'] = 'low quality'
            diagnostics.append(entry)
        return diagnostics, processed

    def select_segments(self, record: EcgRecord, k: int, seed: int) -> List[SelectedSegment]:
        """
        Uniformly pick `k` distinct passing segments (seeded), in time order.

        Raises:
        -------
        NoUsableSegmentError
            When fewer than `k` segments pass the quality gate
        """
        diagnostics, processed = self.evaluate_segments(record)
        passing = sorted(processed)
        if len(passing) < k:
            if passing:
                logger.warning("Record %s: only %d of %d requested segments usable",
                               record.record_id, len(passing), k)
            raise NoUsableSegmentError(record.record_id, diagnostics)
        rng = np.random.default_rng(seed)
        chosen = sorted(int(i) for i in rng.choice(passing, size=k, replace=False))
        return [SelectedSegment(segment=processed[i][0], ensemble=processed[i][1], index=i,
                                diagnostics=diagnostics) for i in chosen]

    def select_segment(self, record: EcgRecord, seed: int) -> SelectedSegment:
        """Seeded uniform choice of one segment among those with quality >= threshold."""
        return self.select_segments(record, 1, seed)[0]


def select_segment(record: EcgRecord, threshold: float = 0.85, seed: int = 0,
                   config: Optional[SignalConfig] = None) -> Tuple[Segment, CycleEnsemble]:
    """
    Functional form of EcgProcessor.select_segment.

    Returns:
    --------
    Tuple[Segment, CycleEnsemble]
    """
    config = config or SignalConfig()
    if threshold != config.quality_threshold:
        config = config.model_copy(update={'quality_threshold': threshold})
    selected = EcgProcessor(config).select_segment(record, seed)
    return selected.segment, selected.ensemble
