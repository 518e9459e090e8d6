"""CSV schemas for scenarios, replay data and results, plus INI experiment configs.

Files are UTF-8, comma separated, LF line endings, header first. Floats are
written with 17 significant digits so a load/save cycle is byte-identical.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baselines import JpfConfig, KfRaimConfig
from .filter import FilterConfig
from .integrity import IntegrityConfig
from .measurement import expected_pseudoranges
from .metrics import ExperimentConfig, RunRecord
from .simulator import IntegrityScenarioConfig, Scenario, ScenarioConfig
from .types import EpochMeasurements, Odometry, StateVector

EPOCHS_HEADER = ["t", "sat_id", "sat_x", "sat_y", "sat_z", "sat_vx", "sat_vy", "sat_vz", "rho", "sigma"]
TRUTH_HEADER = ["t", "px", "py", "heading"]
ODOMETRY_HEADER = ["t", "speed", "yaw_rate"]
FAULTS_HEADER = ["t", "sat_id", "bias"]
RESULTS_HEADER = ["t", "est_px", "est_py", "err", "p_mir", "r_a", "available", "hazard"]
PLOTDATA_HEADER = ["t", "error", "p_mir"]
SUMMARY_HEADER = ["filter", "runs", "rmse", "rmse_se", "pct_over_15", "pct_over_15_se", "p_fa", "p_ir"]
PARETO_HEADER = ["monitor", "num_particles", "alarm_limit", "p_fa", "p_ir", "pmir_threshold", "ra_threshold"]


class CsvSchemaError(ValueError):
    """A CSV file does not follow its schema; the message names file and line."""


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path, header: Sequence[str], rows) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def read_csv(path, header: Sequence[str]) -> List[dict]:
    """Rows as dicts of strings; checks the header contains ``header``."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise CsvSchemaError(f"{path}: empty file") from None
        missing = [c for c in header if c not in found]
        if missing:
            raise CsvSchemaError(f"{path}: line 1: missing columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(found):
                raise CsvSchemaError(f"{path}: line {lineno}: expected {len(found)} fields, got {len(row)}")
            rec = dict(zip(found, row))
            rec["_line"] = lineno
            rows.append(rec)
    return rows


def _num(rec, key, path, optional=False, kind=float):
    raw = rec[key]
    if raw == "" and optional:
        return None
    try:
        return kind(raw)
    except ValueError:
        raise CsvSchemaError(f"{path}: line {rec['_line']}: bad value {raw!r} for column {key!r}") from None


# ---------------------------------------------------------------- scenarios

def write_scenario(directory, scenario) -> None:
    """Write ``epochs.csv``, ``truth.csv``, ``odometry.csv`` and ``faults.csv``.

    Accepts a simulated :class:`Scenario` or a loaded :class:`ScenarioData`.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if isinstance(scenario, ScenarioData):
        times, xy, hd = scenario.truth_times, scenario.truth, scenario.truth_heading
        odo_rows = [[t, v, None if np.isnan(y) else y] for t, v, y in scenario.odometry]
        fault_rows = [list(f) for f in scenario.faults]
    else:
        traj = scenario.trajectory
        times, xy, hd = traj.times, traj.positions, traj.headings
        odo_rows = [[ep.time, ep.odometry.speed, ep.odometry.yaw_rate] for ep in scenario.epochs if ep.odometry is not None]
        fault_rows = []
        for ep, mask, bias in zip(scenario.epochs, scenario.fault_mask, scenario.biases):
            for k in np.flatnonzero(mask):
                fault_rows.append([ep.time, int(ep.sat_ids[k]), bias[k]])
    write_epochs(d / "epochs.csv", scenario.epochs)
    write_csv(d / "truth.csv", TRUTH_HEADER, ([t, p[0], p[1], h] for t, p, h in zip(times, xy, hd)))
    write_csv(d / "odometry.csv", ODOMETRY_HEADER, odo_rows)
    write_csv(d / "faults.csv", FAULTS_HEADER, fault_rows)


def write_epochs(path, epochs: Sequence[EpochMeasurements]) -> None:
    def rows():
        for ep in epochs:
            for k in range(ep.num_measurements):
                yield [ep.time, int(ep.sat_ids[k]), *ep.sat_pos[k], *ep.sat_vel[k], ep.rho[k], ep.sigma[k]]
    write_csv(path, EPOCHS_HEADER, rows())


def _check_monotone(times, path, lines, strict=True):
    for j in range(1, len(times)):
        bad = times[j] <= times[j - 1] if strict else times[j] < times[j - 1]
        if bad:
            raise CsvSchemaError(f"{path}: line {lines[j]}: timestamps are not increasing")


def read_epochs(path) -> List[EpochMeasurements]:
    rows = read_csv(path, EPOCHS_HEADER)
    groups: Dict[float, list] = {}
    order, lines = [], []
    for rec in rows:
        t = _num(rec, "t", path)
        if not order or t != order[-1]:
            order.append(t)
            lines.append(rec["_line"])
        groups.setdefault(t, []).append(rec)
    _check_monotone(order, path, lines)
    epochs = []
    for t in order:
        g = groups[t]
        vals = np.array([[_num(r, c, path) for c in EPOCHS_HEADER[2:]] for r in g]).reshape(-1, 8)
        ids = np.array([_num(r, "sat_id", path, kind=int) for r in g], dtype=int)
        epochs.append(EpochMeasurements(t, vals[:, 0:3], vals[:, 6], vals[:, 7], sat_vel=vals[:, 3:6], sat_ids=ids))
    return epochs


@dataclass
class ScenarioData:
    """Parsed scenario or replay files."""

    epochs: List[EpochMeasurements]
    truth_times: np.ndarray
    truth: np.ndarray
    truth_heading: np.ndarray
    odometry: np.ndarray
    faults: List[tuple]

    @property
    def initial_state(self) -> StateVector:
        return StateVector(float(self.truth[0, 0]), float(self.truth[0, 1]))

    def truth_at(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return np.column_stack([np.interp(times, self.truth_times, self.truth[:, 0]),
                                np.interp(times, self.truth_times, self.truth[:, 1])])

    @property
    def epoch_times(self) -> np.ndarray:
        return np.array([ep.time for ep in self.epochs])

    @property
    def epoch_truth(self) -> np.ndarray:
        return self.truth_at(self.epoch_times)


def read_truth(path):
    rows = read_csv(path, TRUTH_HEADER)
    t = np.array([_num(r, "t", path) for r in rows])
    _check_monotone(t, path, [r["_line"] for r in rows])
    xy = np.array([[_num(r, "px", path), _num(r, "py", path)] for r in rows]).reshape(-1, 2)
    hd = np.array([_num(r, "heading", path) for r in rows])
    return t, xy, hd


def read_odometry(path):
    """``(M, 3)`` array of ``t, speed, yaw_rate``; missing yaw rates become NaN."""
    rows = read_csv(path, ODOMETRY_HEADER)
    out = np.array([[_num(r, "t", path), _num(r, "speed", path),
                     np.nan if r["yaw_rate"] == "" else _num(r, "yaw_rate", path)] for r in rows]).reshape(-1, 3)
    _check_monotone(out[:, 0], path, [r["_line"] for r in rows])
    return out


def read_faults(path):
    rows = read_csv(path, FAULTS_HEADER)
    return [(_num(r, "t", path), _num(r, "sat_id", path, kind=int), _num(r, "bias", path)) for r in rows]


def _attach_odometry(epochs, odo, truth_times, truth_heading, known_heading, t_start):
    out = []
    prev_t = t_start
    for ep in epochs:
        sel = (odo[:, 0] > prev_t) & (odo[:, 0] <= ep.time) if odo.size else np.zeros(0, dtype=bool)
        rows = odo[sel] if odo.size else odo
        odometry = None
        if rows.shape[0]:
            t_rows = rows[:, 0]
            dts = np.diff(np.concatenate([[prev_t], t_rows]))
            yaw = np.nan_to_num(rows[:, 2])
            heading = float(np.interp(ep.time, truth_times, truth_heading)) if known_heading else None
            segs = np.column_stack([dts, rows[:, 1], yaw])
            odometry = Odometry(speed=float(rows[-1, 1]), yaw_rate=None if np.isnan(rows[-1, 2]) else float(rows[-1, 2]),
                                heading=heading, segments=segs if rows.shape[0] > 1 else None)
        out.append(replace(ep, odometry=odometry))
        prev_t = ep.time
    return out


def load_scenario(directory, known_heading: bool = True) -> ScenarioData:
    """Load a simulated scenario directory. Headings from ``truth.csv`` drive the 2-D dynamics."""
    d = Path(directory)
    epochs = read_epochs(d / "epochs.csv")
    tt, xy, hd = read_truth(d / "truth.csv")
    odo = read_odometry(d / "odometry.csv") if (d / "odometry.csv").exists() else np.zeros((0, 3))
    faults = read_faults(d / "faults.csv") if (d / "faults.csv").exists() else []
    epochs = _attach_odometry(epochs, odo, tt, hd, known_heading, float(tt[0]))
    return ScenarioData(epochs, tt, xy, hd, odo, faults)


def remove_initial_residuals(epochs: Sequence[EpochMeasurements], truth_xy) -> List[EpochMeasurements]:
    """Subtract each satellite's residual at its first appearance from all its measurements."""
    offsets: Dict[int, float] = {}
    out = []
    for ep, xy in zip(epochs, truth_xy):
        geo = expected_pseudoranges(np.asarray(xy, dtype=float)[None, :], ep.sat_pos)
        for k, sid in enumerate(ep.sat_ids):
            offsets.setdefault(int(sid), float(ep.rho[k] - geo[k]))
        shift = np.array([offsets[int(s)] for s in ep.sat_ids])
        out.append(replace(ep, rho=ep.rho - shift))
    return out


def load_replay_csv(paths, remove_initial_bias: bool = False) -> ScenarioData:
    """Load real-data replay files (``epochs``, ``truth`` and optional ``odometry`` CSVs).

    ``paths`` is a directory or a mapping with those keys. Odometry rows between
    consecutive epochs become unicycle integration segments.
    """
    if isinstance(paths, (str, os.PathLike)):
        d = Path(paths)
        paths = {"epochs": d / "epochs.csv", "truth": d / "truth.csv", "odometry": d / "odometry.csv"}
    epochs = read_epochs(paths["epochs"])
    tt, xy, hd = read_truth(paths["truth"])
    odo_path = paths.get("odometry")
    odo = read_odometry(odo_path) if odo_path and Path(odo_path).exists() else np.zeros((0, 3))
    t0 = min(float(tt[0]), epochs[0].time - 1.0) if epochs else float(tt[0])
    epochs = _attach_odometry(epochs, odo, tt, hd, False, t0)
    data = ScenarioData(epochs, tt, xy, hd, odo, [])
    if remove_initial_bias:
        data.epochs = remove_initial_residuals(data.epochs, data.epoch_truth)
    return data


# ---------------------------------------------------------------- results

def write_results(path, record: RunRecord) -> None:
    write_csv(path, RESULTS_HEADER,
              ([t, e[0], e[1], err, p, r, bool(a), bool(h)] for t, e, err, p, r, a, h in
               zip(record.times, record.estimates, record.errors, record.p_mir, record.r_a, record.available, record.hazard)))


def read_results(path, alarm_limit: float = 15.0) -> RunRecord:
    """Rebuild a :class:`RunRecord`; truth is reconstructed from the stored error along x."""
    rows = read_csv(path, RESULTS_HEADER)
    t = np.array([_num(r, "t", path) for r in rows])
    est = np.array([[_num(r, "est_px", path), _num(r, "est_py", path)] for r in rows]).reshape(-1, 2)
    err = np.array([_num(r, "err", path) for r in rows])
    rec = RunRecord(t, est, est - np.column_stack([err, np.zeros_like(err)]),
                    np.array([_num(r, "p_mir", path) for r in rows]),
                    np.array([_num(r, "r_a", path) for r in rows]),
                    np.array([_num(r, "available", path, kind=int) for r in rows], dtype=bool), alarm_limit,
                    stored_errors=err)
    return rec


def write_plotdata(path, record: RunRecord) -> None:
    write_csv(path, PLOTDATA_HEADER, ([t, e, p] for t, e, p in zip(record.times, record.errors, record.p_mir)))


def write_summary(path, table: Sequence[dict]) -> None:
    write_csv(path, SUMMARY_HEADER, ([row[c] if c == "filter" else row[c] for c in SUMMARY_HEADER] for row in table))


def write_pareto(path, frontiers: Dict[tuple, np.ndarray]) -> None:
    """One block of rows per ``(monitor, num_particles, alarm_limit)`` frontier, sorted by false-alarm rate."""
    rows = []
    for (mon, n, al), front in sorted(frontiers.items()):
        for p0, r0, fa, ir in front[np.argsort(front[:, 2], kind="stable")]:
            rows.append([mon, int(n), al, fa, ir, p0, r0])
    write_csv(path, PARETO_HEADER, rows)


# ---------------------------------------------------------------- config

SECTIONS = {
    "filter": FilterConfig,
    "kf": KfRaimConfig,
    "jpf": JpfConfig,
    "integrity": IntegrityConfig,
}


class ConfigError(ValueError):
    pass


def _coerce(value: str, default):
    v = value.strip()
    if isinstance(default, bool):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if isinstance(default, tuple):
        return tuple(float(x) for x in v.split(","))
    if v.lower() == "none":
        return None
    if isinstance(default, int):
        return int(v)
    if isinstance(default, float) or default is None:
        return float(v)
    return v


def _build(cls, section):
    defaults = cls()
    kwargs = {}
    names = {f.name for f in fields(cls)}
    for key, value in section.items():
        if key not in names:
            raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
        try:
            kwargs[key] = _coerce(value, getattr(defaults, key))
        except ValueError as err:
            raise ConfigError(f"{cls.__name__}.{key}: {err}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{cls.__name__}: {err}") from None


def parse_seeds(text: str) -> tuple:
    """``"0..4,7"`` -> ``(0, 1, 2, 3, 4, 7)``."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return tuple(seeds)


def load_experiment_config(path) -> ExperimentConfig:
    """Read an INI file with optional ``[scenario] [filter] [kf] [jpf] [integrity] [experiment]`` sections."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}") from None
    unknown = set(cp.sections()) - set(SECTIONS) - {"scenario", "experiment"}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    kwargs = {}
    if cp.has_section("scenario"):
        sec = dict(cp["scenario"])
        kind = sec.pop("kind", "localization")
        cls = {"localization": ScenarioConfig, "integrity": IntegrityScenarioConfig}.get(kind)
        if cls is None:
            raise ConfigError(f"unknown scenario kind {kind!r}")
        kwargs["scenario"] = _build(cls, sec)
    for name, cls in SECTIONS.items():
        if cp.has_section(name):
            key = {"filter": "filter_config", "kf": "kf_config", "jpf": "jpf_config", "integrity": "integrity"}[name]
            kwargs[key] = _build(cls, dict(cp[name]))
    if cp.has_section("experiment"):
        sec = dict(cp["experiment"])
        if "filters" in sec:
            kwargs["filters"] = tuple(s.strip() for s in sec.pop("filters").split(",") if s.strip())
        if "seeds" in sec:
            kwargs["seeds"] = parse_seeds(sec.pop("seeds"))
        if "workers" in sec:
            kwargs["workers"] = int(sec.pop("workers"))
        if "output_dir" in sec:
            kwargs["output_dir"] = sec.pop("output_dir")
        if "monitor_integrity" in sec:
            kwargs["monitor_integrity"] = _coerce(sec.pop("monitor_integrity"), False)
        if sec:
            raise ConfigError(f"unknown experiment keys {sorted(sec)}")
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(str(err)) from None
