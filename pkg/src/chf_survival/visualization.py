"""
Visualization Module

Figures for the survival pipeline: mean heart cycles with located waves,
C-index against recording length, global SHAP scatter with moving medians,
and per-patient contribution bars.
"""

import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from .explanation import GlobalSummary, PatientReport
from .feature_engineering import BINARY_FEATURES

logger = logging.getLogger(__name__)

sns.set_style("whitegrid")
plt.rcParams['figure.figsize'] = (12, 8)

WAVE_MARKERS = {'p': 'tab:green', 'q': 'tab:purple', 's': 'tab:orange', 't': 'tab:red'}


class Visualizer:
    """
    Figure writer for extraction, evaluation and explanation results.

    Every method saves a PNG under `output_dir` and returns its path.
    """

    def __init__(self, output_dir: Union[str, Path] = './outputs', dpi: int = 150):
        """
        Initialize Visualizer.

        Parameters:
        -----------
        output_dir : str or Path
            Directory to save plots
        dpi : int
            Resolution of saved figures
        """
        self.output_dir = Path(output_dir)
        self.dpi = dpi

    def _save(self, fig, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / name
        fig.tight_layout()
        fig.savefig(path, dpi=self.dpi, bbox_inches='tight')
        plt.close(fig)
        logger.info("Saved figure %s", path)
        return path

    def plot_mean_cycles(self, cycles: Mapping[str, np.ndarray], waves: Mapping[str, Mapping[str, float]],
                         name: str = 'mean_cycles.png') -> Path:
        """
        Plot mean heart cycles with the located P, Q, S and T points.

        Parameters:
        -----------
        cycles : mapping
            Label -> length-100 mean cycle
        waves : mapping
            Label -> wave features ({p_timing, q_timing, s_timing, t_timing, ...})
        """
        fig, ax = plt.subplots(figsize=(10, 5))
        for label, cycle in cycles.items():
            line, = ax.plot(np.arange(len(cycle)), cycle, label=label)
            for wave, color in WAVE_MARKERS.items():
                timing = waves.get(label, {}).get(f'{wave}_timing')
                if timing is None or not np.isfinite(timing):
                    continue
                index = int(round(timing))
                ax.scatter(index, cycle[index], color=color, s=40, zorder=3, edgecolor=line.get_color())
        for wave, color in WAVE_MARKERS.items():
            ax.scatter([], [], color=color, label=wave.upper())
        ax.axvline(50, color='grey', linestyle=':', linewidth=1)
        ax.set_xlabel('Cycle sample (R at 50)')
        ax.set_ylabel('Scaled amplitude')
        ax.set_title('Mean heart cycles')
        ax.legend(loc='upper right')
        return self._save(fig, name)

    def plot_seglen(self, table: pd.DataFrame, name: str = 'seglen.png') -> Path:
        """
        Plot C-index against total segment length with bootstrap intervals.

        Parameters:
        -----------
        table : pd.DataFrame
            Columns length_s, model, c_index, lo, hi
        """
        fig, ax = plt.subplots(figsize=(8, 5))
        for model, rows in table.groupby('model', sort=False):
            rows = rows.sort_values('length_s')
            err = np.vstack([rows['c_index'] - rows['lo'], rows['hi'] - rows['c_index']])
            ax.errorbar(rows['length_s'], rows['c_index'], yerr=err, marker='o', capsize=4, label=model)
        ax.set_xlabel('Total segment length (s)')
        ax.set_ylabel('C-index')
        ax.set_title('C-index vs recording length')
        ax.legend()
        return self._save(fig, name)

    def plot_global_summary(self, summary: GlobalSummary, k: int = 10, name: str = 'shap_global.png') -> Path:
        """
        Scatter of SHAP values against feature values for the top-k features.

        Numeric features fill the top row of panels, binary ones the bottom;
        the red line is the moving median.
        """
        top = summary.top_features(k)
        numeric = [f for f in top if f not in BINARY_FEATURES]
        binary = [f for f in top if f in BINARY_FEATURES]
        n_cols = max(len(numeric), len(binary), 1)
        n_rows = 2 if numeric and binary else 1
        fig, axes = plt.subplots(n_rows, n_cols, figsize=(3 * n_cols, 3 * n_rows), squeeze=False, sharey=True)
        for r, group in enumerate(g for g in (numeric, binary) if g):
            for c in range(n_cols):
                ax = axes[r, c]
                if c >= len(group):
                    ax.axis('off')
                    continue
                frame = summary.points[group[c]]
                ax.scatter(frame['value'], frame['shap'], s=6, alpha=0.4, color='tab:blue')
                ax.plot(frame['value'], frame['moving_median'], color='red', linewidth=2)
                ax.axhline(0, color='grey', linewidth=0.8)
                ax.set_title(group[c], fontsize=9)
                ax.set_xlabel('Quantile')
        axes[0, 0].set_ylabel('SHAP (log-time)')
        fig.suptitle('Global SHAP summary')
        return self._save(fig, name)

    def plot_patient(self, report: PatientReport, k: int = 10, name: Optional[str] = None) -> Path:
        """Horizontal bars of the k largest per-feature probability contributions."""
        rows = report.contributions[:k][::-1]
        labels = [_patient_label(row) for row in rows]
        values = [row['contribution'] for row in rows]
        colors = ['tab:red' if v > 0 else 'tab:blue' for v in values]

        fig, ax = plt.subplots(figsize=(8, 0.45 * len(rows) + 1.5))
        ax.barh(labels, values, color=colors)
        ax.axvline(0, color='grey', linewidth=0.8)
        ax.set_xlabel('Contribution to event probability')
        ax.set_title(f"{report.record_id}: P(event by day {report.horizon:g}) = {report.probability:.3f} "
                     f"(base {report.base_value:.3f})")
        return self._save(fig, name or f'patient_{report.record_id}.png')


def _patient_label(row: Dict) -> str:
    if row.get('percentile') is not None:
        return f"{row['feature']} = {row['percentile']:.1f}% percentile"
    if row.get('value') is None:
        return f"{row['feature']} = missing"
    return f"{row['feature']} = {row['value']:g}"
