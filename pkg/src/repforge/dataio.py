"""Raw recordings, RPE annotation tables and the rep-wise dataset on disk.

Formats
-------
EMG CSV      ``t_s`` (optional), ``emg_mv``
IMU CSV      ``t_s`` (optional), ``ax_g, ay_g, az_g, gx_dps, gy_dps, gz_dps``
RPE CSV      ``set_id, rpe_1, rpe_2, ...`` one row per set, ragged rows allowed
Column map   flat ``key = value`` file, see :class:`ColumnMap`

All CSV files may start with ``#`` comment lines; repforge writes its
provenance (config hash, seed, schema version) there.
"""
from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import Config

EMG_RATE_HZ = 2148.1
IMU_RATE_HZ = 370.4
RPE_MIN, RPE_MAX = 1, 10

_USER_RE = re.compile(r"^[A-Za-z]\d{3}$")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True, order=True)
class SetId:
    user_id: str
    weight_kg: int
    set_num: int

    def __post_init__(self):
        if not self.user_id:
            raise DataError("empty user_id")
        if self.weight_kg <= 0:
            raise DataError(f"weight_kg must be positive, got {self.weight_kg}")
        if self.set_num < 1:
            raise DataError(f"set_num must be >= 1, got {self.set_num}")

    def __str__(self) -> str:
        return f"{self.user_id}_{self.weight_kg}_{self.set_num}"

    @property
    def conventional_user(self) -> bool:
        """True when user_id follows the letter + 3 digits pseudo-ID scheme."""
        return bool(_USER_RE.match(self.user_id))


def parse_set_id(text: str) -> SetId:
    parts = text.strip().split("_")
    if len(parts) != 3:
        raise DataError(f"set id {text!r}: expected userID_weight_setnum, got {len(parts)} fields")
    user, weight, num = parts
    if not user:
        raise DataError(f"set id {text!r}: empty user_id")
    try:
        w, n = int(weight), int(num)
    except ValueError as exc:
        raise DataError(f"set id {text!r}: weight and set number must be integers") from exc
    return SetId(user, w, n)


def format_set_id(sid: SetId) -> str:
    return str(sid)


def rep_id(set_id: SetId | str, ordinal: int) -> str:
    return f"{set_id}_{ordinal}"


@dataclass(frozen=True)
class PalmAxisConfig:
    axis_index: int = 0
    sign: int = 1

    def __post_init__(self):
        if self.axis_index not in (0, 1, 2):
            raise DataError(f"palm axis index must be 0, 1 or 2, got {self.axis_index}")
        if self.sign not in (1, -1):
            raise DataError(f"palm axis sign must be +1 or -1, got {self.sign}")


@dataclass(frozen=True, eq=False)
class RawSet:
    set_id: SetId
    emg_t: np.ndarray
    emg: np.ndarray
    imu_t: np.ndarray
    accel: np.ndarray  # (n, 3) g
    gyro: np.ndarray  # (n, 3) deg/s, shares imu_t
    rpe_annotations: tuple[int, ...]

    def __post_init__(self):
        for name in ("emg_t", "emg", "imu_t", "accel", "gyro"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "rpe_annotations", tuple(int(v) for v in self.rpe_annotations))
        for name, t, x in (("emg", self.emg_t, self.emg), ("imu", self.imu_t, self.accel)):
            if len(t) == 0:
                raise DataError(f"{self.set_id}: empty {name} series")
            if len(t) != len(x):
                raise DataError(f"{self.set_id}: {name} timestamps/values length mismatch")
            if len(t) > 1 and not np.all(np.diff(t) > 0):
                raise DataError(f"{self.set_id}: {name} timestamps not strictly increasing")
        if self.accel.shape != self.gyro.shape or self.accel.ndim != 2 or self.accel.shape[1] != 3:
            raise DataError(f"{self.set_id}: accel and gyro must both be (n, 3)")
        check_rpe(self.rpe_annotations, str(self.set_id))


def check_rpe(values: Iterable[int], where: str = "") -> None:
    for v in values:
        if not (RPE_MIN <= v <= RPE_MAX):
            raise DataError(f"{where}: RPE {v} outside [{RPE_MIN}, {RPE_MAX}]")


# ---------------------------------------------------------------- column map


@dataclass
class ColumnMap:
    """Maps logical channels to source columns and declares nominal rates.

    An empty time column means the source has no timestamps; they are then
    synthesized from the nominal rate.
    """

    emg_time: str = "t_s"
    emg_value: str = "emg_mv"
    imu_time: str = "t_s"
    accel: tuple[str, str, str] = ("ax_g", "ay_g", "az_g")
    gyro: tuple[str, str, str] = ("gx_dps", "gy_dps", "gz_dps")
    emg_rate_hz: float = EMG_RATE_HZ
    imu_rate_hz: float = IMU_RATE_HZ
    emg_scale: float = 1.0  # multiply source values to get mV
    accel_scale: float = 1.0
    gyro_scale: float = 1.0
    skip_rows: int = 0
    delimiter: str = ","
    palm: PalmAxisConfig = field(default_factory=PalmAxisConfig)
    emg_pattern: str = "emg/{set_id}.csv"
    imu_pattern: str = "imu/{set_id}.csv"
    rpe_table: str = "rpe.csv"

    @classmethod
    def from_config(cls, cfg: dict) -> "ColumnMap":
        c = Config(cfg)
        d = cls()

        def triple(key, default):
            if key not in c:
                return default
            cols = tuple(s.strip() for s in c[key].split(","))
            if len(cols) != 3:
                raise DataError(f"{key}: expected three comma-separated column names")
            return cols

        return cls(
            emg_time=c.get_str("columns.emg_time", d.emg_time),
            emg_value=c.get_str("columns.emg_value", d.emg_value),
            imu_time=c.get_str("columns.imu_time", d.imu_time),
            accel=triple("columns.accel", d.accel),
            gyro=triple("columns.gyro", d.gyro),
            emg_rate_hz=c.get_float("rates.emg_hz", d.emg_rate_hz),
            imu_rate_hz=c.get_float("rates.imu_hz", d.imu_rate_hz),
            emg_scale=c.get_float("scale.emg", d.emg_scale),
            accel_scale=c.get_float("scale.accel", d.accel_scale),
            gyro_scale=c.get_float("scale.gyro", d.gyro_scale),
            skip_rows=c.get_int("csv.skip_rows", d.skip_rows),
            delimiter=c.get_str("csv.delimiter", d.delimiter) or ",",
            palm=PalmAxisConfig(c.get_int("palm.axis", 0), c.get_int("palm.sign", 1)),
            emg_pattern=c.get_str("data.emg_pattern", d.emg_pattern),
            imu_pattern=c.get_str("data.imu_pattern", d.imu_pattern),
            rpe_table=c.get_str("data.rpe_table", d.rpe_table),
        )

    def to_config(self) -> dict[str, str]:
        return {
            "columns.emg_time": self.emg_time,
            "columns.emg_value": self.emg_value,
            "columns.imu_time": self.imu_time,
            "columns.accel": ",".join(self.accel),
            "columns.gyro": ",".join(self.gyro),
            "rates.emg_hz": repr(self.emg_rate_hz),
            "rates.imu_hz": repr(self.imu_rate_hz),
            "palm.axis": str(self.palm.axis_index),
            "palm.sign": str(self.palm.sign),
            "data.emg_pattern": self.emg_pattern,
            "data.imu_pattern": self.imu_pattern,
            "data.rpe_table": self.rpe_table,
        }


# ---------------------------------------------------------------- CSV helpers


def _read_table(path, delimiter=",", skip_rows=0) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines[skip_rows:], delimiter=delimiter))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: no header row")
    header = [h.strip() for h in rows[0]]
    return header, rows[1:]


def _read_numeric(path, names, delimiter=",", skip_rows=0, optional=()) -> dict[str, np.ndarray]:
    """Named numeric columns of a delimited file (``#`` lines and blank lines skipped).

    Names in ``optional`` are read only when the header has them.
    """
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")][skip_rows:]
    lines = [ln for ln in lines if ln.strip(" \t\r\n" + delimiter)]
    if not lines:
        raise DataError(f"{path}: no header row")
    header = [h.strip() for h in next(csv.reader(lines[:1], delimiter=delimiter))]
    names = list(names) + [n for n in optional if n and n in header]
    idx = []
    for name in names:
        if name not in header:
            raise DataError(f"{path}: missing column {name!r} (have {header})")
        idx.append(header.index(name))
    try:
        data = np.loadtxt(lines[1:], delimiter=delimiter, usecols=idx, ndmin=2, dtype=float, quotechar='"')
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric or short row") from exc
    data = data.reshape(len(lines) - 1, len(idx))
    return {n: data[:, k] for k, n in enumerate(names)}


def _timeline(path, cols, n, time_col, rate) -> np.ndarray:
    if time_col in cols:
        t = cols[time_col]
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise DataError(f"{path}: timestamps not strictly increasing")
        return t
    return np.arange(n) / rate


def read_rpe_table(path, delimiter=",") -> dict[str, tuple[int, ...]]:
    """``set_id -> annotations``; trailing blank cells are ignored."""
    header, rows = _read_table(path, delimiter)
    if not header or header[0] != "set_id":
        raise DataError(f"{path}: first column must be 'set_id'")
    table: dict[str, tuple[int, ...]] = {}
    for r in rows:
        key = r[0].strip()
        cells = [c.strip() for c in r[1:]]
        while cells and not cells[-1]:
            cells.pop()
        try:
            values = tuple(int(float(c)) for c in cells)
        except ValueError as exc:
            raise DataError(f"{path}: set {key}: non-numeric RPE") from exc
        check_rpe(values, f"{path}: set {key}")
        if key in table:
            raise DataError(f"{path}: duplicate set id {key}")
        table[key] = values
    return table


def write_rpe_table(table: dict[str, Sequence[int]], path) -> None:
    width = max((len(v) for v in table.values()), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["set_id"] + [f"rpe_{i + 1}" for i in range(width)])
        for key in sorted(table):
            vals = list(table[key])
            w.writerow([key] + vals + [""] * (width - len(vals)))


def load_set(emg_path, imu_path, rpe_table_path, set_id: SetId | str,
             columns: ColumnMap | None = None) -> RawSet:
    cm = columns or ColumnMap()
    sid = parse_set_id(set_id) if isinstance(set_id, str) else set_id
    table = read_rpe_table(rpe_table_path, cm.delimiter)
    if str(sid) not in table:
        raise DataError(f"unannotated set: {sid} not in {rpe_table_path}")

    cols = _read_numeric(emg_path, [cm.emg_value], cm.delimiter, cm.skip_rows, (cm.emg_time,))
    emg = cols[cm.emg_value] * cm.emg_scale
    emg_t = _timeline(emg_path, cols, emg.size, cm.emg_time, cm.emg_rate_hz)

    cols = _read_numeric(imu_path, list(cm.accel) + list(cm.gyro), cm.delimiter, cm.skip_rows, (cm.imu_time,))
    accel = np.column_stack([cols[c] for c in cm.accel]) * cm.accel_scale
    gyro = np.column_stack([cols[c] for c in cm.gyro]) * cm.gyro_scale
    imu_t = _timeline(imu_path, cols, accel.shape[0], cm.imu_time, cm.imu_rate_hz)

    return RawSet(sid, emg_t, emg, imu_t, accel, gyro, table[str(sid)])


def load_corpus(root, columns: ColumnMap | None = None) -> list[RawSet]:
    """Every set listed in the RPE table under ``root``."""
    root = Path(root)
    columns = columns or ColumnMap()
    table_path = root / columns.rpe_table
    table = read_rpe_table(table_path, columns.delimiter)
    out = []
    for key in sorted(table):
        out.append(load_set(root / columns.emg_pattern.format(set_id=key),
                            root / columns.imu_pattern.format(set_id=key),
                            table_path, key, columns))
    return out


def write_raw_set(raw: RawSet, root, columns: ColumnMap | None = None, timestamps: bool = True) -> None:
    """Write ``raw`` in the EMG/IMU CSV formats (RPE table handled separately)."""
    cm = columns or ColumnMap()
    root = Path(root)
    emg_path = root / cm.emg_pattern.format(set_id=raw.set_id)
    imu_path = root / cm.imu_pattern.format(set_id=raw.set_id)
    emg_path.parent.mkdir(parents=True, exist_ok=True)
    imu_path.parent.mkdir(parents=True, exist_ok=True)
    with open(emg_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(([cm.emg_time] if timestamps else []) + [cm.emg_value])
        for t, v in zip(raw.emg_t, raw.emg):
            w.writerow(([repr(float(t))] if timestamps else []) + [repr(float(v))])
    with open(imu_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(([cm.imu_time] if timestamps else []) + list(cm.accel) + list(cm.gyro))
        for t, a, g in zip(raw.imu_t, raw.accel, raw.gyro):
            w.writerow(([repr(float(t))] if timestamps else [])
                       + [repr(float(x)) for x in a] + [repr(float(x)) for x in g])


# ---------------------------------------------------------------- rep dataset

STRING_COLUMNS = ("rep_id", "set_id")


def write_meta_line(fh, meta: dict) -> None:
    if meta:
        fh.write("# repforge " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")


def read_meta(path) -> dict[str, str]:
    meta: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("repforge"):
                for tok in body.split()[1:]:
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
    return meta


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_rep_dataset(rows: Sequence[dict], path, meta: dict | None = None,
                      columns: Sequence[str] | None = None) -> None:
    """Write rep rows (dicts sharing one key order) as CSV.

    ``columns`` fixes the header when ``rows`` is empty.
    """
    if rows:
        cols = list(rows[0].keys())
        for i, r in enumerate(rows):
            if list(r.keys()) != cols:
                raise DataError(f"row {i}: schema mismatch with row 0")
        if columns is not None and list(columns) != cols:
            raise DataError("rows do not match the declared column schema")
    else:
        cols = list(columns or [])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        write_meta_line(fh, dict(meta or {}))
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    os.replace(tmp, path)


def read_rep_dataset(path) -> tuple[list[str], list[dict]]:
    header, rows = _read_table(path)
    out = []
    for r in rows:
        rec = {}
        for name, cell in zip(header, r):
            if name in STRING_COLUMNS:
                rec[name] = cell
            else:
                try:
                    rec[name] = float(cell)
                except ValueError:
                    rec[name] = cell
        out.append(rec)
    return header, out
