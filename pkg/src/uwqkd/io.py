"""CSV and JSON-lines readers and writers for events, emissions, reports and curves."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .decoy import RateCurve
from .receiver import Detections, Detector, Origin
from .transmitter import Intensity, Polarization, PulseTrain

EVENT_COLUMNS = ("detector", "timestamp_ps")
EMISSION_COLUMNS = ("index", "time_ps", "polarization", "intensity", "basis", "bit")
CURVE_COLUMNS = ("distance_m", "loss_db", "q_signal", "e_signal", "y1_lower", "e1_upper",
                 "rate_per_pulse", "rate_bps")
_HEADER_KEYS = ("round", "n_pulses", "period_ps", "sent")


class ParseError(ValueError):
    """Malformed input file; the message names the offending line."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}: line {lineno}: {message}")
        self.lineno = lineno


def write_events_csv(path: str | Path, events: Detections) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for d, t in zip(events.detector.tolist(), events.timestamp_ps.tolist()):
            w.writerow((f"D{d}", t))


def _parse_detector(text: str) -> int:
    label = text.strip().upper().removeprefix("D")
    d = int(label)
    if d not in tuple(Detector):
        raise ValueError(f"unknown detector {text!r}")
    return d


def read_events_csv(path: str | Path) -> Detections:
    detectors, stamps = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(h.strip() for h in header) != EVENT_COLUMNS:
            raise ParseError(path, 1, f"expected header {','.join(EVENT_COLUMNS)}")
        for lineno, row in enumerate(rows, start=2):
            if len(row) != 2:
                raise ParseError(path, lineno, f"expected 2 fields, got {len(row)}")
            try:
                d = _parse_detector(row[0])
                t = int(row[1])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            detectors.append(d)
            stamps.append(t)
    det = np.array(detectors, dtype=np.int8)
    origin = np.where(det == Detector.D5, Origin.SYNC, Origin.SIGNAL)
    return Detections(det, np.array(stamps, dtype=np.int64), origin)


def write_emissions_csv(path: str | Path, train: PulseTrain, round_index: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# round = {round_index}\n")
        fh.write(f"# n_pulses = {train.n_pulses}\n")
        fh.write(f"# period_ps = {train.period_ps}\n")
        fh.write(f"# sent = {','.join(str(int(s)) for s in train.sent)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EMISSION_COLUMNS)
        for i, p, c in zip(train.index.tolist(), train.polarization.tolist(), train.intensity.tolist()):
            w.writerow((i, i * train.period_ps, Polarization(p).name, Intensity(c).name.lower(),
                        p >> 1, p & 1))


def read_emissions_csv(path: str | Path) -> tuple[PulseTrain, int]:
    """Parse an emissions file; returns the (possibly sparse) train and its round index."""
    meta: dict[str, str] = {}
    cols: list[list[int]] = [[], [], []]
    header_seen = False
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if line.startswith("#"):
                if header_seen:
                    raise ParseError(path, lineno, "metadata after the column header")
                key, sep, value = line[1:].partition("=")
                if not sep or key.strip() not in _HEADER_KEYS:
                    raise ParseError(path, lineno, f"bad metadata line {line!r}")
                meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if tuple(h.strip() for h in line.split(",")) != EMISSION_COLUMNS:
                    raise ParseError(path, lineno, f"expected header {','.join(EMISSION_COLUMNS)}")
                missing = [k for k in _HEADER_KEYS if k not in meta]
                if missing:
                    raise ParseError(path, lineno, f"missing metadata {', '.join(missing)}")
                header_seen = True
                continue
            fields = line.split(",")
            if len(fields) != len(EMISSION_COLUMNS):
                raise ParseError(path, lineno, f"expected {len(EMISSION_COLUMNS)} fields, got {len(fields)}")
            try:
                idx, t = int(fields[0]), int(fields[1])
                pol = Polarization[fields[2].strip().upper()]
                cls = Intensity[fields[3].strip().upper()]
                basis, bit = int(fields[4]), int(fields[5])
            except (ValueError, KeyError) as exc:
                raise ParseError(path, lineno, f"bad field: {exc}") from None
            if t != idx * int(meta["period_ps"]) or basis != pol.basis or bit != pol.bit:
                raise ParseError(path, lineno, "row is inconsistent with its polarization or slot")
            cols[0].append(idx)
            cols[1].append(int(pol))
            cols[2].append(int(cls))
    if not header_seen:
        raise ParseError(path, lineno if meta else 1, "file ends before the column header")
    try:
        sent = [int(s) for s in meta["sent"].split(",")]
        train = PulseTrain(np.array(cols[0], np.int64), np.array(cols[1], np.int8),
                           np.array(cols[2], np.int8), int(meta["period_ps"]),
                           int(meta["n_pulses"]), np.array(sent, np.int64))
        return train, int(meta["round"])
    except ValueError as exc:
        raise ParseError(path, 1, f"inconsistent metadata: {exc}") from None


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, allow_nan=False, separators=(",", ":"))


def write_jsonl(path: str | Path, reports) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(dumps_report(r) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def write_json(path: str | Path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")


def write_curve_csv(path: str | Path, curve: RateCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for p in curve.points:
            w.writerow([repr(float(getattr(p, c))) for c in CURVE_COLUMNS])
