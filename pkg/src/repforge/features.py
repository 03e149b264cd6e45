"""Per-rep IMU (55) and EMG (9) feature vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import PalmAxisConfig
from .segmentation import RepSegment, jerk

SCHEMA_VERSION = "rf-55-9.v1"

_STATS = ("mean", "std", "range", "min", "max")
_AXES = ("x", "y", "z")
_PHASES = ("con", "ecc")


class FeatureError(ValueError):
    pass


def _imu_names() -> tuple[str, ...]:
    names = ["concentric_time", "eccentric_time", "total_time"]
    names += [f"accel_{ax}_{ph}_{st}" for ax in _AXES for ph in _PHASES for st in _STATS]
    names += [f"jerk_{ph}_{st}" for ph in _PHASES for st in _STATS]
    names += [f"accel_{ax}_r2" for ax in _AXES]
    names += [f"gyro_{ax}_{st}" for ax in _AXES for st in ("mean", "std", "r2")]
    return tuple(names)


IMU_FEATURE_NAMES = _imu_names()
EMG_FEATURE_NAMES = (
    "emg_mean", "emg_mav", "emg_rms", "emg_variance", "emg_zero_crossings",
    "emg_peak", "emg_waveform_length", "emg_integrated_abs", "emg_slope_sign_changes",
)
assert len(IMU_FEATURE_NAMES) == 55 and len(EMG_FEATURE_NAMES) == 9


@dataclass(frozen=True, eq=False)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray
    schema_version: str = SCHEMA_VERSION

    def __len__(self):
        return len(self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


ImuFeatureVector = EmgFeatureVector = FeatureVector


def phase_split(rep: RepSegment) -> tuple[range, range]:
    """Concentric ``[start, mid)`` and eccentric ``[mid, end]`` as absolute index ranges."""
    return range(rep.start_idx, rep.mid_idx), range(rep.mid_idx, rep.end_idx + 1)


def phase_durations(rep: RepSegment) -> tuple[float, float, float]:
    con, ecc = phase_split(rep)
    return len(con) / rep.fs, len(ecc) / rep.fs, (len(con) + len(ecc)) / rep.fs


def smoothness_r2(signal, degree: int = 3) -> float:
    """R² of a least-squares polynomial over normalized time in [0, 1]."""
    y = np.asarray(signal, dtype=float)
    if y.size <= degree + 1:
        raise FeatureError(f"need more than {degree + 1} samples for a degree-{degree} fit, got {y.size}")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    x = np.linspace(0.0, 1.0, y.size)
    V = np.vander(x, degree + 1)
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    ss_res = float(np.sum((y - V @ coef) ** 2))
    return 1.0 - ss_res / ss_tot


def _stats(x: np.ndarray) -> list[float]:
    lo, hi = float(x.min()), float(x.max())
    return [float(x.mean()), float(x.std()), hi - lo, lo, hi]


def extract_imu_features(rep: RepSegment, fs: float | None = None,
                         palm: PalmAxisConfig | None = None) -> FeatureVector:
    fs = rep.fs if fs is None else fs
    palm = palm or PalmAxisConfig()
    k = rep.local_mid
    n = rep.n
    if k < 1 or k >= n:
        raise FeatureError(f"{rep.rep_id}: empty phase (mid offset {k} of {n})")
    con, ecc = slice(0, k), slice(k, n)
    vals = [k / fs, (n - k) / fs, n / fs]
    for ax in range(3):
        a = rep.accel[:, ax]
        vals += _stats(a[con]) + _stats(a[ecc])
    j = jerk(palm.sign * rep.accel[:, palm.axis_index], fs)
    vals += _stats(j[con]) + _stats(j[ecc])
    vals += [smoothness_r2(rep.accel[:, ax]) for ax in range(3)]
    for ax in range(3):
        g = rep.gyro[:, ax]
        vals += [float(g.mean()), float(g.std()), smoothness_r2(g)]
    out = np.array(vals, dtype=float)
    if not np.all(np.isfinite(out)):
        raise FeatureError(f"{rep.rep_id}: non-finite IMU feature")
    return FeatureVector(IMU_FEATURE_NAMES, out)


def emg_feature_values(x, fs: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise FeatureError("empty EMG window")
    ax = np.abs(x)
    rms = float(np.sqrt(np.mean(x**2)))
    xc = x - x.mean()
    eps = 0.05 * float(np.sqrt(np.mean(xc**2)))
    strong = xc[np.abs(xc) >= eps] if eps > 0 else xc[xc != 0]
    zc = int(np.count_nonzero(np.diff(np.sign(strong)) != 0))
    d = np.diff(x)
    ssc = int(np.count_nonzero(d[:-1] * d[1:] < 0)) if x.size >= 3 else 0
    return np.array([
        x.mean(), ax.mean(), rms, x.var(), zc, ax.max(),
        np.abs(d).sum(), ax.sum() / fs, ssc,
    ], dtype=float)


def extract_emg_features(rep: RepSegment) -> FeatureVector:
    return FeatureVector(EMG_FEATURE_NAMES, emg_feature_values(rep.emg, rep.fs))


def rep_row(rep: RepSegment, palm: PalmAxisConfig | None = None, with_emg: bool = True) -> dict:
    """Flat record for the rep dataset: ids, RPE, then features."""
    row: dict = {"rep_id": rep.rep_id, "set_id": rep.set_id, "rpe": rep.rpe}
    row.update(extract_imu_features(rep, palm=palm).as_dict())
    if with_emg:
        row.update(extract_emg_features(rep).as_dict())
    return row
