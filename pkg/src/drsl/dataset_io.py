"""On-disk dataset layout and result tables.

A dataset directory holds ``manifest.txt`` (tab-separated key/value lines:
tr, n_scans, conditions, subjects) plus per-subject ``sub-<id>_bold.tsv``
(T x V floats, no header) and ``sub-<id>_events.tsv`` (header
``onset<TAB>duration<TAB>condition``). Floats are written with 17
significant digits so a round trip reproduces every 64-bit value exactly;
TSV keeps fixtures diffable and checkable by any external tool.

Results are long-format CSVs with fixed headers, ready for plotting.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .data_model import DesignMatrix, FitConfig, SubjectData
from .design import Event, EventTable, build_design_matrix, canonical_hrf
from .errors import DrslError, ManifestMismatch, MissingFile, ParseError
from .evaluation import CvReport

MANIFEST_NAME = "manifest.txt"
EVENTS_HEADER = "onset\tduration\tcondition"

CORRELATION_HEADER = "method,rho_max,rho_std_over_seeds"
ACCURACY_HEADER = "method,fold,accuracy"
MSE_HEADER = "iterations,mse"
RUNTIME_HEADER = "method,phase,ms"


def fmt(x: float) -> str:
    """Decimal with 17 significant digits; exact for float64 round trips."""
    return f"{float(x):.17g}"


def _bold_name(subject_id: str) -> str:
    return f"sub-{subject_id}_bold.tsv"


def _events_name(subject_id: str) -> str:
    return f"sub-{subject_id}_events.tsv"


def write_dataset(path: str, pairs: list[tuple[SubjectData, EventTable]]) -> None:
    """Write subjects and their event tables under ``path``."""
    if not pairs:
        raise DrslError("nothing to write: no subjects")
    tr = pairs[0][1].tr
    n_scans = pairs[0][1].n_scans
    conditions = pairs[0][1].conditions
    for data, events in pairs:
        if events.tr != tr or events.n_scans != n_scans or events.conditions != conditions:
            raise ManifestMismatch(
                f"subject {data.subject_id!r} disagrees with the shared scan grid"
            )
        if data.n_scans != n_scans:
            raise ManifestMismatch(
                f"subject {data.subject_id!r} has {data.n_scans} scans, manifest says {n_scans}"
            )
    os.makedirs(path, exist_ok=True)
    manifest = [
        f"tr\t{fmt(tr)}",
        f"n_scans\t{n_scans}",
        f"conditions\t{','.join(conditions)}",
        f"subjects\t{','.join(data.subject_id for data, _ in pairs)}",
    ]
    with open(os.path.join(path, MANIFEST_NAME), "w", newline="") as fh:
        fh.write("\n".join(manifest) + "\n")
    for data, events in pairs:
        with open(os.path.join(path, _bold_name(data.subject_id)), "w", newline="") as fh:
            for row in data.responses:
                fh.write("\t".join(fmt(v) for v in row) + "\n")
        with open(os.path.join(path, _events_name(data.subject_id)), "w", newline="") as fh:
            fh.write(EVENTS_HEADER + "\n")
            for ev in events.events:
                fh.write(f"{fmt(ev.onset)}\t{fmt(ev.duration)}\t{ev.condition}\n")


def _read_manifest(path: str) -> dict:
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        raise MissingFile(f"no {MANIFEST_NAME} in {path}")
    entries = {}
    with open(manifest_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ParseError(f"{MANIFEST_NAME} line {lineno}: expected key<TAB>value")
            key, value = line.split("\t", 1)
            entries[key] = value
    for key in ("tr", "n_scans", "conditions", "subjects"):
        if key not in entries:
            raise ParseError(f"{MANIFEST_NAME}: missing key {key!r}")
    try:
        tr = float(entries["tr"])
        n_scans = int(entries["n_scans"])
    except ValueError as exc:
        raise ParseError(f"{MANIFEST_NAME}: bad numeric value ({exc})") from exc
    conditions = tuple(c for c in entries["conditions"].split(",") if c)
    subjects = tuple(s for s in entries["subjects"].split(",") if s)
    if not conditions or not subjects:
        raise ParseError(f"{MANIFEST_NAME}: empty conditions or subjects list")
    return {"tr": tr, "n_scans": n_scans, "conditions": conditions, "subjects": subjects}


def _read_bold(path: str, name: str, n_scans: int) -> np.ndarray:
    full = os.path.join(path, name)
    if not os.path.isfile(full):
        raise MissingFile(f"missing {name}")
    rows = []
    width = None
    with open(full) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ParseError(
                    f"{name} line {lineno}: expected {width} columns, found {len(fields)}"
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                bad = next(i for i, f in enumerate(fields) if not _is_float(f))
                raise ParseError(
                    f"{name} line {lineno} column {bad + 1}: not a number: "
                    f"{fields[bad]!r}"
                ) from None
    if len(rows) != n_scans:
        raise ManifestMismatch(f"{name} has {len(rows)} rows, manifest says {n_scans}")
    return np.array(rows, dtype=np.float64)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _read_events(
    path: str, name: str, tr: float, n_scans: int, conditions: tuple[str, ...]
) -> EventTable:
    full = os.path.join(path, name)
    if not os.path.isfile(full):
        raise MissingFile(f"missing {name}")
    events = []
    with open(full) as fh:
        header = fh.readline().rstrip("\n")
        if header != EVENTS_HEADER:
            raise ParseError(f"{name} line 1: expected header {EVENTS_HEADER!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(f"{name} line {lineno}: expected 3 columns")
            try:
                onset = float(fields[0])
                duration = float(fields[1])
            except ValueError:
                raise ParseError(f"{name} line {lineno}: bad number") from None
            condition = fields[2]
            if onset < 0:
                raise ParseError(f"{name} line {lineno}: negative onset {onset}")
            if duration < 0:
                raise ParseError(f"{name} line {lineno}: negative duration {duration}")
            if onset + duration > n_scans * tr + 1e-9:
                raise ParseError(
                    f"{name} line {lineno}: event ends at {onset + duration}s, "
                    f"after the {n_scans * tr}s scan window"
                )
            if condition not in conditions:
                raise ManifestMismatch(
                    f"{name} line {lineno}: condition {condition!r} not in manifest"
                )
            events.append(Event(onset=onset, duration=duration, condition=condition))
    return EventTable(
        events=tuple(events), tr=tr, n_scans=n_scans, conditions=conditions
    )


def read_events_tables(path: str) -> list[tuple[str, EventTable]]:
    """Subject ids and event tables, in manifest order."""
    manifest = _read_manifest(path)
    return [
        (
            sid,
            _read_events(
                path,
                _events_name(sid),
                manifest["tr"],
                manifest["n_scans"],
                manifest["conditions"],
            ),
        )
        for sid in manifest["subjects"]
    ]


def read_dataset(path: str, hrf_length_s: float = 32.0) -> list[tuple[SubjectData, DesignMatrix]]:
    """Load every subject and build its design matrix from the event files."""
    manifest = _read_manifest(path)
    hrf = canonical_hrf(manifest["tr"], hrf_length_s)
    out = []
    n_voxels = None
    for sid in manifest["subjects"]:
        bold = _read_bold(path, _bold_name(sid), manifest["n_scans"])
        if n_voxels is None:
            n_voxels = bold.shape[1]
        elif bold.shape[1] != n_voxels:
            raise ManifestMismatch(
                f"{_bold_name(sid)} has {bold.shape[1]} columns, other subjects have {n_voxels}"
            )
        events = _read_events(
            path, _events_name(sid), manifest["tr"], manifest["n_scans"], manifest["conditions"]
        )
        design = build_design_matrix(events, hrf)
        out.append((SubjectData(subject_id=sid, responses=bold), design))
    return out


@dataclass(frozen=True)
class RunResult:
    """Everything one CLI run reports."""

    method: str
    config: FitConfig
    rho_max: float
    rho_std_over_seeds: float = 0.0
    mse_by_iterations: tuple[tuple[int, float], ...] = ()
    cv: CvReport | None = None
    phase_ms: tuple[tuple[str, float], ...] = ()
    version: str = "0.0.0"

    def __post_init__(self):
        values = [self.rho_max, self.rho_std_over_seeds]
        values += [m for _, m in self.mse_by_iterations]
        values += [ms for _, ms in self.phase_ms]
        if self.cv is not None:
            values += list(self.cv.accuracies)
        if not np.all(np.isfinite(values)):
            raise DrslError("run result contains non-finite numbers")


def write_results(result: RunResult, path: str) -> None:
    """Write correlation/accuracy/mse/runtime CSVs under ``path``."""
    os.makedirs(path, exist_ok=True)
    lines = [CORRELATION_HEADER]
    lines.append(f"{result.method},{fmt(result.rho_max)},{fmt(result.rho_std_over_seeds)}")
    _write_lines(os.path.join(path, "correlation.csv"), lines)

    lines = [ACCURACY_HEADER]
    if result.cv is not None:
        for fold, acc in enumerate(result.cv.accuracies):
            lines.append(f"{result.method},{fold},{fmt(acc)}")
    _write_lines(os.path.join(path, "accuracy.csv"), lines)

    lines = [MSE_HEADER]
    for iterations, mse in result.mse_by_iterations:
        lines.append(f"{iterations},{fmt(mse)}")
    _write_lines(os.path.join(path, "mse.csv"), lines)

    lines = [RUNTIME_HEADER]
    for phase, ms in result.phase_ms:
        lines.append(f"{result.method},{phase},{fmt(ms)}")
    _write_lines(os.path.join(path, "runtime.csv"), lines)


def _write_lines(path: str, lines: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
