"""Report rendering: F0 overlays and kernel-density curves as SVG files with
the underlying data in a CSV next to them.

Files are written atomically (temp file + rename) so a crashed run never
leaves a truncated report behind.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from . import metrics  # noqa: E402
from .corpus import znorm_duration_entries  # noqa: E402
from .synthesis import SynthRecord  # noqa: E402

PLOT_KINDS = ("f0", "durations-kde", "pitch-kde", "pitch-std-kde")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_figure_atomic(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".svg")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def curves_csv(x_name: str, x: np.ndarray, curves: dict[str, np.ndarray]) -> str:
    """CSV text with an x column and one column per labelled curve.

    Curves shorter than the longest one leave trailing cells empty.
    """
    names = list(curves)
    length = max([len(x)] + [len(c) for c in curves.values()])
    lines = [",".join([x_name] + names)]
    for i in range(length):
        cells = [f"{x[i]:.6g}" if i < len(x) else ""]
        for name in names:
            c = curves[name]
            cells.append(f"{c[i]:.6g}" if i < len(c) else "")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def variant_f0_curves(variants: dict[str, list[SynthRecord]]) -> dict[str, np.ndarray]:
    """Per-variant F0 contour: the utterances' pitch tracks concatenated in
    id order, with unvoiced frames at zero."""
    curves = {}
    for name, records in variants.items():
        tracks = [metrics.extract_pitch(rec.features).f0 for rec in records]
        curves[name] = (
            np.concatenate(tracks) if tracks else np.zeros(0, dtype=np.float64)
        )
    return curves


def variant_duration_samples(
    variants: dict[str, list[SynthRecord]],
    stats: dict[str, tuple[float, float]] | None = None,
) -> dict[str, np.ndarray]:
    """Per-phone-class z-normalized duration samples per variant.

    Without external ``stats`` each variant is normalized with its own
    per-class statistics.
    """
    samples = {}
    for name, records in variants.items():
        entries = []
        for rec in records:
            if rec.phonemes is None:
                raise ValueError(
                    f"variant {name}: record {rec.id} has no phoneme labels"
                )
            entries.append((rec.id, rec.phonemes, rec.durations))
        znorm = znorm_duration_entries(entries, stats=stats)
        samples[name] = np.array([e.zscore for e in znorm.entries], dtype=np.float64)
    return samples


def variant_pitch_samples(
    variants: dict[str, list[SynthRecord]],
) -> dict[str, np.ndarray]:
    """All voiced-frame F0 values (Hz) per variant."""
    samples = {}
    for name, records in variants.items():
        values = []
        for rec in records:
            track = metrics.extract_pitch(rec.features)
            values.append(track.f0[track.voiced])
        samples[name] = (
            np.concatenate(values) if values else np.zeros(0, dtype=np.float64)
        )
    return samples


def variant_pitch_std_samples(
    variants: dict[str, list[SynthRecord]],
) -> dict[str, np.ndarray]:
    """Per-utterance voiced-F0 standard deviation (Hz) per variant."""
    return {
        name: np.array(
            [
                metrics.pitch_deviation_per_utterance(
                    metrics.extract_pitch(rec.features)
                )
                for rec in records
            ],
            dtype=np.float64,
        )
        for name, records in variants.items()
    }


def kde_over_common_grid(
    samples: dict[str, np.ndarray], bandwidth: float, n_points: int = 1001
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Evaluate each variant's KDE on one shared grid spanning all samples."""
    nonempty = [s for s in samples.values() if len(s)]
    if not nonempty:
        raise ValueError("no samples to estimate a density from")
    pooled = np.concatenate(nonempty)
    lo = float(pooled.min()) - 6.0 * bandwidth
    hi = float(pooled.max()) + 6.0 * bandwidth
    grid_spec = (lo, hi, n_points)
    grid = None
    curves = {}
    for name, s in samples.items():
        if len(s) == 0:
            raise ValueError(f"variant {name} has no samples")
        grid, density = metrics.kde_estimate(s, bandwidth, grid=grid_spec)
        curves[name] = density
    return grid, curves


def render_f0_overlay(path, curves: dict[str, np.ndarray]) -> None:
    fig, ax = plt.subplots(figsize=(8, 3.2))
    for name, f0 in curves.items():
        x = np.arange(len(f0))
        voiced = f0 > 0
        ax.plot(x, np.where(voiced, f0, np.nan), label=name, linewidth=1.2)
    ax.set_xlabel("frame")
    ax.set_ylabel("F0 (Hz)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    save_figure_atomic(fig, path)


def render_kde(
    path, grid: np.ndarray, curves: dict[str, np.ndarray], xlabel: str
) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for name, density in curves.items():
        ax.plot(grid, density, label=name, linewidth=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    save_figure_atomic(fig, path)
