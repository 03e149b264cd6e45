"""Synthetic bicep-curl sets with known repetition boundaries.

The palm-axis accelerometer follows raised-cosine strokes: it rises from the
rest level to the top of the curl during the concentric phase and falls back
during the eccentric phase, then stays at rest for the inter-rep break.
Jerk therefore crosses zero exactly at rep starts and at the top of each
stroke. Phase lengths are quantized to whole IMU samples so ground-truth
indices are exact.

EMG is band-limited noise under an activation envelope whose gain grows
with RPE; higher RPE also shifts power to the lower band.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .config import derive_seed, dump_kv
from .dataio import (EMG_RATE_HZ, IMU_RATE_HZ, ColumnMap, DataError, PalmAxisConfig, RawSet,
                     SetId, write_raw_set, write_rpe_table)


@dataclass(frozen=True)
class SynthSpec:
    n_reps: int = 8
    concentric_s: float = 1.0
    eccentric_s: float = 1.2
    rpe: tuple[int, ...] | None = None  # default: ramp 3 -> 8
    slowdown_s_per_rpe: float = 0.12
    concentric_slowdown_s_per_rpe: float = 0.0
    break_mean_s: float = 0.25
    break_s_per_rpe: float = 0.03
    duration_jitter: float = 0.0  # relative sd applied to each phase
    lead_in_s: float = 1.0
    lead_out_s: float = 1.0
    stroke_g: float = 0.9
    rest_g: float = 0.05
    accel_noise_g: float = 0.0
    gyro_noise_dps: float = 0.0
    emg_noise_mv: float = 0.002
    emg_base_mv: float = 0.05
    emg_rpe_gain: float = 0.25
    palm: PalmAxisConfig = field(default_factory=PalmAxisConfig)
    set_id: SetId = field(default_factory=lambda: SetId("S000", 10, 1))
    imu_rate_hz: float = IMU_RATE_HZ
    emg_rate_hz: float = EMG_RATE_HZ
    seed: int = 0

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        if self.concentric_s <= 0 or self.eccentric_s <= 0:
            raise ValueError("phase durations must be positive")
        if self.rpe is not None:
            if len(self.rpe) != self.n_reps:
                raise ValueError("rpe schedule length must equal n_reps")
            if any(not (1 <= r <= 10) for r in self.rpe):
                raise ValueError("RPE values must lie in [1, 10]")
        if self.break_mean_s < 0 or self.lead_in_s < 0 or self.lead_out_s < 0:
            raise ValueError("break and lead durations must be non-negative")

    def schedule(self) -> tuple[int, ...]:
        if self.rpe is not None:
            return tuple(self.rpe)
        return tuple(int(v) for v in np.round(np.linspace(3, 8, self.n_reps)))


@dataclass(frozen=True, eq=False)
class SynthTruth:
    boundaries: np.ndarray  # n_reps + 1 IMU indices, last is the terminal sample
    midpoints: np.ndarray  # n_reps
    concentric_samples: np.ndarray
    eccentric_samples: np.ndarray  # eccentric stroke only
    break_samples: np.ndarray
    rpe: tuple[int, ...]
    emg_envelope: np.ndarray  # at EMG rate
    fs: float

    @property
    def concentric_s(self):
        return self.concentric_samples / self.fs

    @property
    def eccentric_s(self):
        return self.eccentric_samples / self.fs


def _band_noise(rng, n, fs, lo, hi):
    w = rng.standard_normal(n + 512)
    sos = sps.butter(4, [lo, hi], btype="band", fs=fs, output="sos")
    x = sps.sosfilt(sos, w)[512:]
    return x / (x.std() + 1e-12)


def generate_set(spec: SynthSpec) -> tuple[RawSet, SynthTruth]:
    rng = np.random.default_rng(spec.seed)
    fs = spec.imu_rate_hz
    rpe = spec.schedule()
    n = spec.n_reps

    def jitter():
        return 1.0 + spec.duration_jitter * rng.standard_normal() if spec.duration_jitter else 1.0

    con = np.empty(n, dtype=int)
    ecc = np.empty(n, dtype=int)
    brk = np.empty(n, dtype=int)
    breaks = rng.exponential(1.0, size=n)
    for i, r in enumerate(rpe):
        c_s = (spec.concentric_s + spec.concentric_slowdown_s_per_rpe * (r - 1)) * jitter()
        e_s = (spec.eccentric_s + spec.slowdown_s_per_rpe * (r - 1)) * jitter()
        con[i] = max(4, int(round(c_s * fs)))
        ecc[i] = max(4, int(round(e_s * fs)))
        brk[i] = int(round((spec.break_mean_s + spec.break_s_per_rpe * (r - 1)) * breaks[i] * fs))
    brk[-1] = int(round(spec.lead_out_s * fs))  # trailing rest belongs to the last rep

    lead = int(round(spec.lead_in_s * fs))
    starts = lead + np.concatenate([[0], np.cumsum(con + ecc + brk)[:-1]])
    mids = starts + con
    total = int(starts[-1] + con[-1] + ecc[-1] + brk[-1]) + 1
    boundaries = np.append(starts, total - 1)

    # normalized elbow position in [0, 1] and its time derivative
    pos = np.zeros(total)
    vel = np.zeros(total)
    act = np.full(total, 0.05)
    amp = 1.0 + 0.03 * rng.standard_normal(n)
    for i in range(n):
        s, m, e = starts[i], mids[i], mids[i] + ecc[i]
        tau = np.arange(con[i] + 1) / con[i]
        pos[s:m + 1] = amp[i] * 0.5 * (1 - np.cos(np.pi * tau))
        vel[s:m + 1] = amp[i] * 0.5 * np.pi * np.sin(np.pi * tau) * fs / con[i]
        act[s:m + 1] = 0.6 + 0.4 * np.sin(np.pi * tau)
        tau = np.arange(ecc[i] + 1) / ecc[i]
        pos[m:e + 1] = amp[i] * 0.5 * (1 + np.cos(np.pi * tau))
        vel[m:e + 1] = -amp[i] * 0.5 * np.pi * np.sin(np.pi * tau) * fs / ecc[i]
        act[m + 1:e + 1] = 0.6 * (0.25 + 0.75 * np.sin(np.pi * tau[1:]) ** 0.5)

    ax = spec.palm.axis_index
    accel = np.zeros((total, 3))
    accel[:, ax] = spec.palm.sign * (spec.rest_g + spec.stroke_g * pos)
    accel[:, (ax + 1) % 3] = 0.8 - 0.45 * pos
    accel[:, (ax + 2) % 3] = 0.1 + 0.05 * vel / (np.abs(vel).max() + 1e-12)
    gyro = np.zeros((total, 3))
    gyro[:, (ax + 1) % 3] = 130.0 * vel
    gyro[:, (ax + 2) % 3] = 15.0 * vel
    gyro[:, ax] = 5.0 * pos
    if spec.accel_noise_g:
        accel += spec.accel_noise_g * rng.standard_normal(accel.shape)
    if spec.gyro_noise_dps:
        gyro += spec.gyro_noise_dps * rng.standard_normal(gyro.shape)
    imu_t = np.arange(total) / fs

    # EMG on its own clock, covering the IMU span
    fe = spec.emg_rate_hz
    m_emg = int(np.ceil(imu_t[-1] * fe)) + 2
    emg_t = np.arange(m_emg) / fe
    rep_rpe = np.full(total, float(rpe[0]))
    for i in range(n):
        rep_rpe[starts[i]:] = rpe[i]
    act_e = np.interp(emg_t, imu_t, act)
    rpe_e = np.interp(emg_t, imu_t, rep_rpe)
    gain = spec.emg_base_mv * (1.0 + spec.emg_rpe_gain * (rpe_e - 1.0))
    envelope = gain * act_e
    low = _band_noise(rng, m_emg, fe, 20.0, 60.0)
    high = _band_noise(rng, m_emg, fe, 60.0, 150.0)
    w_low = np.clip(0.3 + 0.05 * (rpe_e - 1.0), 0.0, 1.0)
    carrier = np.sqrt(w_low) * low + np.sqrt(1.0 - w_low) * high
    emg = envelope * carrier + spec.emg_noise_mv * rng.standard_normal(m_emg)

    raw = RawSet(spec.set_id, emg_t, emg, imu_t, accel, gyro, tuple(rpe))
    truth = SynthTruth(boundaries, mids, con, ecc, brk, tuple(rpe), envelope, fs)
    return raw, truth


# ---------------------------------------------------------------- corpus

USERS = ("A321", "T417", "P714", "G998", "T456")


@dataclass(frozen=True)
class CorpusSpec:
    """Distribution over sets. Zero spreads give identical sets up to noise."""

    mean_reps: float = 14.5
    reps_sd: float = 4.0
    min_reps: int = 3
    max_reps: int = 28
    users: tuple[str, ...] = USERS
    weights_kg: tuple[int, ...] = (5, 10, 15)
    tempo_sd: float = 0.1  # per-user relative spread of base phase durations
    duration_jitter: float = 0.04
    start_rpe_sd: float = 1.0
    rpe_climb_mean: float = 4.0
    rpe_climb_sd: float = 1.5
    noise_levels_g: tuple[float, ...] = (0.0, 0.003, 0.006, 0.01)
    base: SynthSpec = field(default_factory=SynthSpec)


def generate_corpus(n_sets: int, dist: CorpusSpec | None = None, seed: int = 0
                    ) -> list[tuple[RawSet, SynthTruth]]:
    if n_sets < 1:
        raise ValueError("n_sets must be >= 1")
    d = dist or CorpusSpec()
    rng = np.random.default_rng(derive_seed(seed, "corpus"))
    tempo = {u: 1.0 + d.tempo_sd * rng.standard_normal() for u in d.users}
    counters: dict[tuple[str, int], int] = {}
    out = []
    for k in range(n_sets):
        user = d.users[k % len(d.users)]
        weight = int(d.weights_kg[rng.integers(len(d.weights_kg))])
        counters[(user, weight)] = counters.get((user, weight), 0) + 1
        sid = SetId(user, weight, counters[(user, weight)])
        n = int(np.clip(round(d.mean_reps + d.reps_sd * rng.standard_normal()), d.min_reps, d.max_reps))
        r0 = 3.0 + (weight - 10) / 5.0 + d.start_rpe_sd * rng.standard_normal()
        r1 = r0 + max(0.0, d.rpe_climb_mean + d.rpe_climb_sd * rng.standard_normal())
        sched = tuple(int(v) for v in np.clip(np.round(np.linspace(r0, r1, n)), 1, 10))
        noise = d.noise_levels_g[rng.integers(len(d.noise_levels_g))]
        spec = replace(
            d.base, n_reps=n, rpe=sched, set_id=sid, seed=derive_seed(seed, "set", k),
            concentric_s=d.base.concentric_s * tempo[user],
            eccentric_s=d.base.eccentric_s * tempo[user],
            duration_jitter=d.duration_jitter, accel_noise_g=noise,
            gyro_noise_dps=noise * 100.0,
        )
        out.append(generate_set(spec))
    return out


def write_corpus(corpus: Sequence[tuple[RawSet, SynthTruth]], root, columns: ColumnMap | None = None,
                 timestamps: bool = True) -> Path:
    """Write raw CSVs, the RPE table, a truth sidecar and a column map.

    Returns the column-map path.
    """
    cm = columns or ColumnMap()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    table = {}
    for raw, _ in corpus:
        write_raw_set(raw, root, cm, timestamps=timestamps)
        if str(raw.set_id) in table:
            raise DataError(f"duplicate set id {raw.set_id}")
        table[str(raw.set_id)] = raw.rpe_annotations
    write_rpe_table(table, root / cm.rpe_table)
    write_truth(corpus, root / "truth.csv")
    cfg = root / "columns.cfg"
    cfg.write_text(dump_kv(cm.to_config()))
    return cfg


def write_truth(corpus, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["set_id", "boundary_indices", "midpoint_indices"])
        for raw, truth in corpus:
            w.writerow([str(raw.set_id), " ".join(map(str, truth.boundaries)),
                        " ".join(map(str, truth.midpoints))])


def read_truth(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    out = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            out[row[0]] = (np.array(row[1].split(), dtype=int), np.array(row[2].split(), dtype=int))
    return out
