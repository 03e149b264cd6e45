"""Repetition segmentation from palm-axis jerk zero-crossings.

A rep runs from one boundary (arm extended, about to lift) to the next, with
its midpoint at the top of the curl. Any pause after lowering stays inside
the rep, and the final rep absorbs the trailing rest.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import PalmAxisConfig, rep_id
from .dsp import AlignedSet, butterworth_lowpass


class SegmentationError(ValueError):
    pass


class CountMismatch(SegmentationError):
    def __init__(self, set_id, detected: int, annotated: int):
        self.set_id, self.detected, self.annotated = set_id, detected, annotated
        super().__init__(f"{set_id}: count mismatch {detected}≠{annotated} (detected midpoints vs annotations)")


@dataclass(frozen=True, eq=False)
class RepSegment:
    rep_id: str
    set_id: str
    ordinal: int
    start_idx: int
    mid_idx: int
    end_idx: int
    rpe: int
    fs: float
    t: np.ndarray
    emg: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray

    def __post_init__(self):
        if not (self.start_idx < self.mid_idx < self.end_idx):
            raise SegmentationError(f"{self.rep_id}: need start < mid < end, got "
                                    f"{self.start_idx}, {self.mid_idx}, {self.end_idx}")
        if not (1 <= self.rpe <= 10):
            raise SegmentationError(f"{self.rep_id}: RPE {self.rpe} outside [1, 10]")

    @property
    def n(self) -> int:
        return self.end_idx - self.start_idx + 1

    @property
    def local_mid(self) -> int:
        return self.mid_idx - self.start_idx


@dataclass(frozen=True)
class SegmentParams:
    min_gap_s: float = 0.5
    deadband: float = 0.1  # fraction of max |jerk|
    detect_cutoff_hz: float | None = 4.0  # low-pass before differentiating; None disables
    refine_s: float = 0.3  # half-width of the local fit; 0 disables refinement

    @classmethod
    def from_config(cls, cfg) -> "SegmentParams":
        cut = cfg.get("seg.detect_cutoff_hz", "4.0")
        return cls(
            min_gap_s=float(cfg.get("seg.min_gap_s", 0.5)),
            deadband=float(cfg.get("seg.deadband", 0.1)),
            detect_cutoff_hz=None if cut in ("", "none", "off") else float(cut),
            refine_s=float(cfg.get("seg.refine_s", 0.3)),
        )


def jerk(accel_axis, fs: float) -> np.ndarray:
    """Central-difference derivative scaled by ``fs``; one-sided at the ends."""
    a = np.asarray(accel_axis, dtype=float)
    if a.size < 2:
        raise SegmentationError("jerk needs at least 2 samples")
    return np.gradient(a) * fs


def zero_crossings(j, fs: float, min_gap_s: float, deadband: float = 0.01,
                   max_lag_s: float | None = None, edge_s: float = 0.0):
    """Hysteretic zero-crossings of ``j``.

    Samples with ``|j| < deadband * max|j|`` cannot change the sign state.
    Each committed change is placed at the start of the run of raw samples
    that already carried the new sign, but no more than ``max_lag_s`` before
    the committing sample. The first committed state counts as a crossing.
    Crossings closer than ``min_gap_s`` to the previous retained one are
    dropped together with it (a brief excursion and its return). Samples
    within ``edge_s`` of either end never commit (filter transients).

    Returns ``(indices, directions)``; direction +1 means the sign went to
    positive.
    """
    if min_gap_s <= 0:
        raise SegmentationError("min_gap_s must be positive")
    j = np.asarray(j, dtype=float)
    edge = int(round(edge_s * fs))
    core = j[edge:j.size - edge] if edge and j.size > 2 * edge else j
    peak = np.abs(core).max() if core.size else 0.0
    if peak == 0:
        raise SegmentationError("no zero-crossings: jerk is identically zero")
    sign = np.sign(j)
    offset = edge if core is not j else 0
    strong = np.flatnonzero(np.abs(core) >= deadband * peak) + offset
    ss = sign[strong]
    commit = np.flatnonzero(np.concatenate([[True], ss[1:] != ss[:-1]]))

    # start index of each run of equal raw sign
    change = np.flatnonzero(np.diff(sign) != 0) + 1
    run_start = np.zeros(j.size, dtype=int)
    run_start[change] = change
    run_start = np.maximum.accumulate(run_start)

    idx = run_start[strong[commit]]
    if max_lag_s is not None:
        idx = np.maximum(idx, strong[commit] - int(round(max_lag_s * fs)))
    dirs = ss[commit].astype(int)
    gap = min_gap_s * fs
    kept_i: list[int] = []
    kept_d: list[int] = []
    for i, d in zip(idx, dirs):
        if kept_i and i - kept_i[-1] < gap:
            kept_i.pop()
            kept_d.pop()
            continue
        kept_i.append(int(i))
        kept_d.append(int(d))
    return np.array(kept_i, dtype=int), np.array(kept_d, dtype=int)


def find_boundaries(j, fs: float, min_gap_s: float = 0.5, deadband: float = 0.01):
    """Split crossings into boundaries and midpoints by alternation.

    The first retained crossing is a boundary.
    """
    idx, _ = zero_crossings(j, fs, min_gap_s, deadband)
    if idx.size == 0:
        raise SegmentationError("no zero-crossings found")
    return idx[0::2], idx[1::2]


class _CornerFit:
    """Least-squares fits of a two-corner stroke model over one window.

    Model: ``d + a * (1 - cos(wl * u)) + b * (1 - cos(wr * v))`` with
    ``u = (t1 - t)_+`` and ``v = (t - t0)_+`` (each capped at half a
    period); flat between the corners. ``wl``/``wr`` come from the expected
    phase lengths on either side. Gram entries for every corner position
    are precomputed, so scoring a batch of ``(t1, t0)`` pairs is indexing
    plus closed-form 2x2 solves.
    """

    def __init__(self, y: np.ndarray, period_left: float, period_right: float):
        n = y.size
        t = np.arange(n, dtype=float)
        u = np.clip(t[None, :] - t[:, None], 0, period_left)  # (t, t1)
        v = np.clip(t[:, None] - t[None, :], 0, period_right)  # (t, t0)
        L = 1 - np.cos(np.pi * u / period_left)
        R = 1 - np.cos(np.pi * v / period_right)
        L -= L.mean(axis=0)
        R -= R.mean(axis=0)
        yc = y - y.mean()
        self.ll = np.einsum("tk,tk->k", L, L)
        self.rr = np.einsum("tk,tk->k", R, R)
        self.lr = L.T @ R
        self.ly = L.T @ yc
        self.ry = R.T @ yc
        self.yy = yc @ yc

    def rss(self, pairs: np.ndarray) -> np.ndarray:
        t1, t0 = pairs[:, 0], pairs[:, 1]
        ll, rr, lr = self.ll[t1], self.rr[t0], self.lr[t1, t0]
        ly, ry = self.ly[t1], self.ry[t0]
        det = ll * rr - lr**2
        tiny = 1e-12 * (ll * rr + 1e-300)
        two = det > tiny
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(two, (rr * ly - lr * ry) / det, 0.0)
            b = np.where(two, (ll * ry - lr * ly) / det, np.where(rr > 0, ry / rr, 0.0))
        rss = self.yy - a * ly - b * ry
        # curvature changing sign across the corner is neither an extremum nor a stroke start
        return np.where(a * b < 0, np.inf, rss)


def _refine(a: np.ndarray, c: int, half: int, max_pause: int,
            period_left: float, period_right: float) -> int:
    """Relocate the stroke corner of ``a`` near index ``c``.

    Exhaustive least-squares search over corner pairs ``t1 <= t0`` (a pause
    at rest between them); returns ``t0``, where the next movement starts or
    where the direction reverses.
    """
    lo, hi = max(0, c - half), min(a.size, c + half + 1)
    y = a[lo:hi]
    n = y.size
    if n < 9:
        return c
    fit = _CornerFit(y, period_left, period_right)
    t0 = np.arange(n // 4, n - n // 4)
    gaps = np.arange(0, max_pause + 1)
    T0, G = np.meshgrid(t0, gaps, indexing="ij")
    T1 = T0 - G
    keep = T1 >= 0
    pairs = np.column_stack([T1[keep], T0[keep]])
    rss = fit.rss(pairs)
    return lo + int(pairs[np.argmin(rss), 1])


def detect(aligned: AlignedSet, palm: PalmAxisConfig, params: SegmentParams | None = None):
    """Boundary and midpoint indices for an aligned set (no count check)."""
    p = params or SegmentParams()
    a = palm.sign * aligned.accel[:, palm.axis_index]
    fs = aligned.fs
    if a.size < 8:
        raise SegmentationError(f"{aligned.set_id}: set too short to segment")
    det = a
    edge_s = 0.0
    if p.detect_cutoff_hz is not None and p.detect_cutoff_hz < fs / 2:
        det = butterworth_lowpass(a, fs, p.detect_cutoff_hz, 4)
        edge_s = 1.0 / p.detect_cutoff_hz
    idx, dirs = zero_crossings(jerk(det, fs), fs, p.min_gap_s, p.deadband, 
                                max_lag_s=0.1 if p.refine_s > 0 else None, edge_s=edge_s)
    if idx.size == 0:
        raise SegmentationError(f"{aligned.set_id}: no zero-crossings found")

    if p.refine_s > 0:
        half = int(round(p.refine_s * fs))
        spacing = np.diff(idx)
        default = float(np.median(spacing)) if spacing.size else fs
        refined = []
        for k, c in enumerate(idx):
            # at the ends, borrow the same phase from the neighbouring rep
            left = spacing[k - 1] if k > 0 else (spacing[k + 1] if k + 1 < spacing.size else default)
            right = spacing[k] if k < spacing.size else (spacing[k - 2] if k >= 2 else default)
            left, right = float(left), float(right)
            refined.append(_refine(a, int(c), half, half, max(left, 4.0), max(right, 4.0)))
        idx = np.array(refined, dtype=int)
        idx = np.maximum.accumulate(idx)

    # boundaries are the crossings that sit near the resting level
    lead = a[: idx[0]]
    parity = 0
    if lead.size >= max(3, int(0.1 * fs)):
        rest = np.median(lead)
        dist = np.abs(a[idx] - rest)
        d_even = dist[0::2].mean()
        d_odd = dist[1::2].mean() if idx.size > 1 else np.inf
        parity = 0 if d_even <= d_odd else 1
    bounds = idx[parity::2]
    mids = idx[1 - parity::2] if idx.size > 1 else idx[:0]
    mids = mids[mids > bounds[0]] if bounds.size else mids
    return bounds, mids, idx


def segment_set(aligned: AlignedSet, palm: PalmAxisConfig | None = None,
                min_gap_s: float | None = None, params: SegmentParams | None = None) -> list[RepSegment]:
    """Cut ``aligned`` into reps and attach annotations in order.

    Raises :class:`CountMismatch` when the number of detected midpoints
    differs from the number of annotations.
    """
    palm = palm or PalmAxisConfig()
    p = params or SegmentParams()
    if min_gap_s is not None:
        p = SegmentParams(min_gap_s, p.deadband, p.detect_cutoff_hz, p.refine_s)
    if not aligned.rpe_annotations:
        raise SegmentationError(f"{aligned.set_id}: no annotations")
    bounds, mids, _ = detect(aligned, palm, p)

    # pair each boundary with the midpoint that follows it
    starts, tops = [], []
    for m in mids:
        prior = bounds[bounds < m]
        if prior.size == 0:
            continue
        b = int(prior[-1])
        if starts and b == starts[-1]:
            raise SegmentationError(f"{aligned.set_id}: two midpoints share one boundary")
        starts.append(b)
        tops.append(int(m))
    if len(tops) != len(aligned.rpe_annotations):
        raise CountMismatch(aligned.set_id, len(tops), len(aligned.rpe_annotations))
    last = len(aligned) - 1
    ends = starts[1:] + [last]
    reps = []
    for k, (s, m, e) in enumerate(zip(starts, tops, ends)):
        reps.append(RepSegment(
            rep_id=rep_id(aligned.set_id, k + 1), set_id=str(aligned.set_id), ordinal=k + 1,
            start_idx=s, mid_idx=m, end_idx=e, rpe=int(aligned.rpe_annotations[k]), fs=aligned.fs,
            t=aligned.t[s:e + 1], emg=aligned.emg[s:e + 1],
            accel=aligned.accel[s:e + 1], gyro=aligned.gyro[s:e + 1],
        ))
    return reps


def write_rejects(rejects, path) -> None:
    """Rejects report: ``set_id, detected, annotated``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["set_id", "detected", "annotated"])
        for r in rejects:
            w.writerow([str(r.set_id), r.detected, r.annotated])
