"""Objective evaluation: DTW alignment, pitch error rates, MCD and KDE summaries.

All functions are pure numpy and operate on physical (unnormalized) feature
matrices in the corpus channel layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import CH_CORR, CH_PERIOD, N_CHANNELS, SAMPLE_RATE

MCD_CONSTANT = 10.0 / math.log(10.0) * math.sqrt(2.0)
GROSS_PITCH_THRESHOLD = 0.2
DEFAULT_VOICING_THRESHOLD = 0.3

# Empirical KDE bandwidths for the distribution reports.
BANDWIDTH_DURATION_Z = 0.25
BANDWIDTH_PITCH_HZ = 5.0
BANDWIDTH_PITCH_STD_HZ = 2.0


@dataclass
class PitchTrack:
    """Per-frame F0 in Hz (0 when unvoiced) and voicing decisions."""

    f0: np.ndarray
    voiced: np.ndarray

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0.shape != self.voiced.shape:
            raise ValueError("f0 and voiced must have the same shape")


@dataclass
class MetricsReport:
    ffe: float
    vde: float
    gpe: float
    mcd: float
    n_frames_compared: int


def extract_pitch(
    frames: np.ndarray, voicing_threshold: float = DEFAULT_VOICING_THRESHOLD
) -> PitchTrack:
    """Pitch track from the period/correlation channels.

    A frame is voiced when its pitch correlation is >= the threshold
    (inclusive); voiced frames must carry a positive period.
    """
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[1] != N_CHANNELS:
        raise ValueError(f"expected [n x {N_CHANNELS}] features")
    voiced = frames[:, CH_CORR] >= voicing_threshold
    period = frames[:, CH_PERIOD].astype(np.float64)
    if np.any(voiced & (period <= 0)):
        raise ValueError("non-positive pitch period on a voiced frame")
    f0 = np.where(voiced, SAMPLE_RATE / np.where(voiced, period, 1.0), 0.0)
    return PitchTrack(f0=f0, voiced=voiced)


def cepstral_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise euclidean distance over the cepstral channels (0-19)."""
    a = np.asarray(a, dtype=np.float64)[:, :20]
    b = np.asarray(b, dtype=np.float64)[:, :20]
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def dtw_align(a: np.ndarray, b: np.ndarray, dist: np.ndarray | None = None):
    """Dynamic time warping with steps {(1,0), (0,1), (1,1)}.

    Returns ``(path, cost)``: the minimal-total-node-cost monotonic path from
    (0, 0) to (n-1, m-1) as a list of index pairs, with ties broken preferring
    the diagonal step, then (1,0), then (0,1). The default distance is
    euclidean over the cepstral channels so alignment is not confounded with
    the pitch metrics.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("dtw_align requires non-empty inputs")
    d = cepstral_distance_matrix(a, b) if dist is None else np.asarray(dist, dtype=np.float64)
    n, m = d.shape

    acc = np.full((n, m), np.inf)
    acc[0, 0] = d[0, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + d[0, j]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + d[i, 0]
        row = acc[i]
        prev = acc[i - 1]
        for j in range(1, m):
            row[j] = d[i, j] + min(prev[j - 1], prev[j], row[j - 1])

    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while (i, j) != (0, 0):
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            # Tie-break: diagonal first, then (1,0), then (0,1).
            best = min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
            if acc[i - 1, j - 1] == best:
                i, j = i - 1, j - 1
            elif acc[i - 1, j] == best:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return path, float(acc[n - 1, m - 1])


def compute_ffe_vde_gpe(
    ref: PitchTrack, est: PitchTrack, path: list[tuple[int, int]]
) -> tuple[float, float, float]:
    """Frame-level pitch error rates over a DTW-aligned pair of tracks.

    VDE counts voicing mismatches; GPE counts >20% pitch deviations among
    frames voiced in both tracks (0 when there are none); FFE combines both
    over the full aligned length.
    """
    if len(path) == 0:
        raise ValueError("empty alignment path")
    ref_idx = np.fromiter((p[0] for p in path), dtype=np.int64)
    est_idx = np.fromiter((p[1] for p in path), dtype=np.int64)
    rv = ref.voiced[ref_idx]
    ev = est.voiced[est_idx]
    rf = ref.f0[ref_idx]
    ef = est.f0[est_idx]

    n = len(path)
    mismatch = rv != ev
    both = rv & ev
    gross = both & (np.abs(ef - rf) > GROSS_PITCH_THRESHOLD * rf)
    vde = mismatch.sum() / n
    gpe = gross.sum() / both.sum() if both.any() else 0.0
    ffe = (mismatch.sum() + gross.sum()) / n
    return float(ffe), float(vde), float(gpe)


def compute_mcd(
    ref: np.ndarray, est: np.ndarray, path: list[tuple[int, int]]
) -> float:
    """Mel-cepstral distortion in dB over aligned pairs, channels 1-19.

    Channel 0 is excluded as the energy term.
    """
    if len(path) == 0:
        raise ValueError("empty alignment path")
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    ref_idx = np.fromiter((p[0] for p in path), dtype=np.int64)
    est_idx = np.fromiter((p[1] for p in path), dtype=np.int64)
    diff = ref[ref_idx, 1:20] - est[est_idx, 1:20]
    return float(MCD_CONSTANT * np.mean(np.sqrt((diff**2).sum(axis=1))))


def evaluate_pair(
    ref_frames: np.ndarray,
    est_frames: np.ndarray,
    voicing_threshold: float = DEFAULT_VOICING_THRESHOLD,
) -> MetricsReport:
    """DTW-align two feature matrices and compute all reconstruction metrics."""
    path, _ = dtw_align(ref_frames, est_frames)
    ref_track = extract_pitch(ref_frames, voicing_threshold)
    est_track = extract_pitch(est_frames, voicing_threshold)
    ffe, vde, gpe = compute_ffe_vde_gpe(ref_track, est_track, path)
    mcd = compute_mcd(ref_frames, est_frames, path)
    return MetricsReport(ffe=ffe, vde=vde, gpe=gpe, mcd=mcd, n_frames_compared=len(path))


def kde_estimate(
    samples,
    bandwidth: float,
    grid: tuple[float, float, int],
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-kernel density estimate on a uniform grid.

    Returns ``(grid_values, density)``. The density is the mean of unit-mass
    Gaussian kernels centered on the samples, so it integrates to the kernel
    mass contained in [grid min, grid max].
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValueError("kde_estimate requires at least one sample")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    lo, hi, n_points = grid
    x = np.linspace(float(lo), float(hi), int(n_points))
    z = (x[:, None] - samples[None, :]) / bandwidth
    density = np.exp(-0.5 * z**2).mean(axis=1) / (bandwidth * math.sqrt(2.0 * math.pi))
    return x, density


def default_kde_grid(samples, bandwidth: float, n_points: int = 1001):
    """Grid spanning all samples plus six bandwidths on each side."""
    samples = np.asarray(samples, dtype=np.float64)
    return (float(samples.min() - 6 * bandwidth), float(samples.max() + 6 * bandwidth), n_points)


def pitch_deviation_per_utterance(track: PitchTrack) -> float:
    """Population std of F0 over voiced frames; 0 with fewer than 2 voiced."""
    voiced_f0 = track.f0[track.voiced]
    if voiced_f0.size < 2:
        return 0.0
    return float(voiced_f0.std())
