"""Rate estimation, anti-alias filtering, EMG-to-IMU resampling, smoothing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .dataio import RawSet, SetId


class DspError(ValueError):
    pass


def estimate_rate(timestamps) -> float:
    """Sampling rate as 1 / median spacing; robust to isolated gaps."""
    t = np.asarray(timestamps, dtype=float)
    if t.size < 2:
        raise DspError("need at least 2 timestamps to estimate a rate")
    d = np.diff(t)
    if np.any(d <= 0):
        raise DspError("timestamps must be strictly increasing")
    return float(1.0 / np.median(d))


def butterworth_lowpass(x, fs: float, cutoff: float, order: int = 4, zero_phase: bool = True) -> np.ndarray:
    """Butterworth low-pass.

    With ``zero_phase`` the filter runs forward then backward, so the
    magnitude response is squared and there is no group delay.
    """
    if order < 1:
        raise DspError(f"filter order must be >= 1, got {order}")
    if not (0 < cutoff < fs / 2):
        raise DspError(f"cutoff {cutoff} Hz must lie in (0, Nyquist={fs / 2} Hz)")
    x = np.asarray(x, dtype=float)
    sos = sps.butter(order, cutoff, btype="low", fs=fs, output="sos")
    if not zero_phase:
        return sps.sosfilt(sos, x)
    if x.size < 2:
        return x.copy()
    padlen = min(3 * (2 * len(sos) + 1), x.size - 1)
    return sps.sosfiltfilt(sos, x, padlen=padlen)


def resample_to(x, src_t, dst_t) -> np.ndarray:
    """Piecewise-cubic interpolation through the source samples.

    Each destination point uses the Lagrange cubic through the four source
    samples bracketing it (stencil shifted inwards at the ends), so
    polynomials up to degree 3 are reproduced exactly.
    """
    x = np.asarray(x, dtype=float)
    src_t = np.asarray(src_t, dtype=float)
    dst_t = np.asarray(dst_t, dtype=float)
    if src_t.size != x.size:
        raise DspError("signal and source timestamps differ in length")
    if src_t.size < 2 or np.any(np.diff(src_t) <= 0):
        raise DspError("source timestamps must be strictly increasing (>= 2 samples)")
    if dst_t.size and (dst_t.min() < src_t[0] or dst_t.max() > src_t[-1]):
        raise DspError("destination timestamps fall outside the source span")
    n = src_t.size
    m = min(4, n)
    k = np.searchsorted(src_t, dst_t, side="right") - 1
    lo = np.clip(k - (m // 2 - 1), 0, n - m)
    idx = lo[:, None] + np.arange(m)[None, :]
    tt = src_t[idx]
    yy = x[idx]
    out = np.zeros(dst_t.size)
    for j in range(m):
        w = np.ones(dst_t.size)
        for i in range(m):
            if i != j:
                w *= (dst_t - tt[:, i]) / (tt[:, j] - tt[:, i])
        out += w * yy[:, j]
    return out


def rolling_average(x, window: int) -> np.ndarray:
    """Centred moving average; windows shrink at the edges."""
    if window < 1 or window % 2 == 0:
        raise DspError(f"window must be a positive odd integer, got {window}")
    x = np.asarray(x, dtype=float)
    if window == 1 or x.size == 0:
        return x.copy()
    h = window // 2
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(x.size)
    lo = np.maximum(i - h, 0)
    hi = np.minimum(i + h + 1, x.size)
    return (c[hi] - c[lo]) / (hi - lo)


def odd_window(seconds: float, fs: float) -> int:
    """Nearest odd sample count to ``seconds * fs`` (at least 1)."""
    n = seconds * fs
    k = int(np.floor((n - 1) / 2 + 0.5))
    return max(1, 2 * k + 1)


@dataclass(frozen=True)
class DspParams:
    cutoff_hz: float | None = None  # None: 0.45 x IMU rate
    order: int = 4
    smooth_s: float = 0.02

    @classmethod
    def from_config(cls, cfg) -> "DspParams":
        cutoff = cfg.get("dsp.cutoff_hz")
        return cls(
            cutoff_hz=float(cutoff) if cutoff not in (None, "", "auto") else None,
            order=int(cfg.get("dsp.order", 4)),
            smooth_s=float(cfg.get("dsp.smooth_s", 0.02)),
        )


@dataclass(frozen=True, eq=False)
class AlignedSet:
    set_id: SetId
    t: np.ndarray
    emg: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    fs: float
    rpe_annotations: tuple[int, ...]
    smooth_window: int = 1

    def __post_init__(self):
        n = self.t.size
        if not (self.emg.size == n and self.accel.shape[0] == n and self.gyro.shape[0] == n):
            raise DspError("aligned channels differ in length")
        if self.fs <= 0:
            raise DspError("fs must be positive")

    def __len__(self):
        return self.t.size


def align_set(raw: RawSet, params: DspParams | None = None) -> AlignedSet:
    """Low-pass EMG, resample it onto the IMU clock, then smooth every channel."""
    p = params or DspParams()
    fs_imu = estimate_rate(raw.imu_t)
    fs_emg = estimate_rate(raw.emg_t)
    cutoff = p.cutoff_hz if p.cutoff_hz is not None else 0.45 * fs_imu
    emg_f = butterworth_lowpass(raw.emg, fs_emg, cutoff, p.order)

    keep = (raw.imu_t >= raw.emg_t[0]) & (raw.imu_t <= raw.emg_t[-1])
    if keep.sum() < 2:
        raise DspError(f"{raw.set_id}: EMG and IMU recordings do not overlap")
    t = raw.imu_t[keep]
    emg = resample_to(emg_f, raw.emg_t, t)

    w = odd_window(p.smooth_s, fs_imu)
    emg = rolling_average(emg, w)
    accel = np.column_stack([rolling_average(raw.accel[keep, i], w) for i in range(3)])
    gyro = np.column_stack([rolling_average(raw.gyro[keep, i], w) for i in range(3)])
    return AlignedSet(raw.set_id, t, emg, accel, gyro, fs_imu, raw.rpe_annotations, w)
