"""Well records, CSV ingestion and dataset validation."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable

import numpy as np

STATIC_FEATURES = (
    "converted_central_depth",
    "original_formation_pressure",
    "original_formation_temperature",
    "geological_reserves",
    "effective_thickness",
)
DYNAMIC_FEATURES = (
    "production_days",
    "pump_deep",
    "pump_efficiency",
    "swept_volume",
    "stroke",
    "frequency_of_stroke",
    "casing_pressure",
    "liquid_level",
)
TARGET = "monthly_oil_production"
INJECTION_FEATURE = "monthly_water_injection"

STATIC_COLUMNS = ("well_id",) + STATIC_FEATURES
DYNAMIC_COLUMNS = ("well_id", "month") + DYNAMIC_FEATURES + (TARGET,)
INJECTION_COLUMNS = ("well_id", "month", INJECTION_FEATURE)
GEOMETRY_COLUMNS = ("well_id", "kind", "x", "y")


class DataError(Exception):
    """Base class for malformed input data."""


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    pass


class EmptyFile(DataError):
    pass


class DuplicateKey(DataError):
    pass


class WellKind(str, enum.Enum):
    PRODUCER = "Producer"
    INJECTOR = "Injector"


@dataclass(frozen=True, order=True)
class WellId:
    id: str
    kind: WellKind = WellKind.PRODUCER

    def __post_init__(self):
        if not self.id:
            raise ValueError("well id must be non-empty")

    def __str__(self):
        return self.id


@dataclass(frozen=True)
class StaticRecord:
    well: WellId
    converted_central_depth: float | None = None
    original_formation_pressure: float | None = None
    original_formation_temperature: float | None = None
    geological_reserves: float | None = None
    effective_thickness: float | None = None

    def values(self) -> list[float | None]:
        return [getattr(self, name) for name in STATIC_FEATURES]


@dataclass(frozen=True)
class DynamicRecord:
    well: WellId
    month: int
    production_days: float | None = None
    pump_deep: float | None = None
    pump_efficiency: float | None = None
    swept_volume: float | None = None
    stroke: float | None = None
    frequency_of_stroke: float | None = None
    casing_pressure: float | None = None
    liquid_level: float | None = None
    monthly_oil_production: float | None = None


@dataclass(frozen=True)
class InjectionRecord:
    well: WellId
    month: int
    monthly_water_injection: float | None = None


@dataclass
class FieldGeometry:
    coords: dict[WellId, tuple[float, float]] = field(default_factory=dict)

    def wells(self, kind: WellKind) -> list[WellId]:
        return sorted(w for w in self.coords if w.kind == kind)

    def distance(self, a: WellId, b: WellId) -> float:
        (xa, ya), (xb, yb) = self.coords[a], self.coords[b]
        return math.hypot(xa - xb, ya - yb)


@dataclass
class WellSample:
    """Model input/output for one producer.

    ``x_dynamic`` is (T, l) with the injection column last when ``fused``.
    """

    well: WellId
    x_static: np.ndarray
    x_dynamic: np.ndarray
    y: np.ndarray
    fused: bool = False
    months: np.ndarray | None = None


@dataclass
class SampleSet:
    samples: list[WellSample]
    scalers: dict = field(default_factory=dict)
    static_names: tuple[str, ...] = STATIC_FEATURES
    dynamic_names: tuple[str, ...] = DYNAMIC_FEATURES
    normalized: bool = False

    def __post_init__(self):
        ids = [s.well for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate well ids in SampleSet")
        shapes = {(s.x_static.shape, s.x_dynamic.shape, s.y.shape) for s in self.samples}
        if len(shapes) > 1:
            raise ValueError(f"inconsistent sample shapes: {sorted(shapes)}")

    def __len__(self):
        return len(self.samples)

    @property
    def T(self) -> int:
        return self.samples[0].y.shape[0] if self.samples else 0

    @property
    def k(self) -> int:
        return self.samples[0].x_static.shape[0] if self.samples else len(self.static_names)

    @property
    def l(self) -> int:
        return self.samples[0].x_dynamic.shape[1] if self.samples else len(self.dynamic_names)

    def ids(self) -> list[WellId]:
        return [s.well for s in self.samples]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked (x_static, x_dynamic, y) with shapes (n, k), (n, T, l), (n, T)."""
        if not self.samples:
            return np.zeros((0, self.k)), np.zeros((0, 0, self.l)), np.zeros((0, 0))
        return (
            np.stack([s.x_static for s in self.samples]),
            np.stack([s.x_dynamic for s in self.samples]),
            np.stack([s.y for s in self.samples]),
        )

    def subset(self, wells: Iterable[WellId]) -> "SampleSet":
        keep = set(wells)
        return SampleSet(
            [s for s in self.samples if s.well in keep],
            dict(self.scalers),
            self.static_names,
            self.dynamic_names,
            self.normalized,
        )


# ---------------------------------------------------------------------------
# CSV reading / writing
# ---------------------------------------------------------------------------


def _parse_float(text: str, path, line: int, column: str) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{path}:{line}: column {column!r}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"{path}:{line}: column {column!r}: non-finite value {text!r} (use an empty cell)")
    return value


def _parse_month(text: str, path, line: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(f"{path}:{line}: month must be an integer, got {text!r}") from None


def _read_rows(path, columns: tuple[str, ...]):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path}: empty file")
        missing = [c for c in columns if c not in reader.fieldnames]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        rows = [(reader.line_num, row) for row in reader]
    return path, rows


def _well_id(text: str, kind: WellKind, path, line: int) -> WellId:
    text = text.strip()
    if not text:
        raise ParseError(f"{path}:{line}: empty well_id")
    return WellId(text, kind)


def load_static_csv(path) -> list[StaticRecord]:
    path, rows = _read_rows(path, STATIC_COLUMNS)
    out = []
    seen = set()
    for line, row in rows:
        well = _well_id(row["well_id"], WellKind.PRODUCER, path, line)
        if well in seen:
            raise DuplicateKey(f"{path}:{line}: duplicate well {well}")
        seen.add(well)
        vals = {c: _parse_float(row[c], path, line, c) for c in STATIC_FEATURES}
        out.append(StaticRecord(well, **vals))
    return out


def load_dynamic_csv(path) -> list[DynamicRecord]:
    path, rows = _read_rows(path, DYNAMIC_COLUMNS)
    out = []
    seen = set()
    for line, row in rows:
        well = _well_id(row["well_id"], WellKind.PRODUCER, path, line)
        month = _parse_month(row["month"], path, line)
        if (well, month) in seen:
            raise DuplicateKey(f"{path}:{line}: duplicate (well, month) = ({well}, {month})")
        seen.add((well, month))
        vals = {c: _parse_float(row[c], path, line, c) for c in DYNAMIC_FEATURES + (TARGET,)}
        out.append(DynamicRecord(well, month, **vals))
    return out


def load_injection_csv(path) -> list[InjectionRecord]:
    path, rows = _read_rows(path, INJECTION_COLUMNS)
    out = []
    seen = set()
    for line, row in rows:
        well = _well_id(row["well_id"], WellKind.INJECTOR, path, line)
        month = _parse_month(row["month"], path, line)
        if (well, month) in seen:
            raise DuplicateKey(f"{path}:{line}: duplicate (well, month) = ({well}, {month})")
        seen.add((well, month))
        value = _parse_float(row[INJECTION_FEATURE], path, line, INJECTION_FEATURE)
        out.append(InjectionRecord(well, month, value))
    return out


def load_geometry_csv(path) -> FieldGeometry:
    path, rows = _read_rows(path, GEOMETRY_COLUMNS)
    coords: dict[WellId, tuple[float, float]] = {}
    for line, row in rows:
        try:
            kind = WellKind(row["kind"].strip())
        except ValueError:
            raise ParseError(f"{path}:{line}: kind must be Producer or Injector, got {row['kind']!r}") from None
        well = _well_id(row["well_id"], kind, path, line)
        if well in coords:
            raise DuplicateKey(f"{path}:{line}: duplicate well {well}")
        x = _parse_float(row["x"], path, line, "x")
        y = _parse_float(row["y"], path, line, "y")
        if x is None or y is None:
            raise ParseError(f"{path}:{line}: coordinates may not be missing")
        coords[well] = (x, y)
    return FieldGeometry(coords)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write(path, columns, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_static_csv(path, records: list[StaticRecord]) -> None:
    _write(path, STATIC_COLUMNS, ([r.well.id, *r.values()] for r in records))


def write_dynamic_csv(path, records: list[DynamicRecord]) -> None:
    names = [f.name for f in fields(DynamicRecord)][2:]
    _write(path, DYNAMIC_COLUMNS, ([r.well.id, r.month, *(getattr(r, n) for n in names)] for r in records))


def write_injection_csv(path, records: list[InjectionRecord]) -> None:
    _write(path, INJECTION_COLUMNS, ([r.well.id, r.month, r.monthly_water_injection] for r in records))


def write_geometry_csv(path, geometry: FieldGeometry) -> None:
    rows = sorted(geometry.coords.items(), key=lambda kv: (kv[0].kind != WellKind.PRODUCER, kv[0].id))
    _write(path, GEOMETRY_COLUMNS, ([w.id, w.kind.value, x, y] for w, (x, y) in rows))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Issue:
    kind: str
    well: str
    detail: str = ""

    def __str__(self):
        return f"{self.kind}({self.well}{', ' + self.detail if self.detail else ''})"


def MonthGap(well, month) -> Issue:
    return Issue("MonthGap", str(well), str(month))


def MissingCoordinates(well) -> Issue:
    return Issue("MissingCoordinates", str(well))


def UnknownWell(well, source) -> Issue:
    return Issue("UnknownWell", str(well), source)


def MissingStatic(well) -> Issue:
    return Issue("MissingStatic", str(well))


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "ok" if self.ok else "; ".join(map(str, self.issues))


def _month_gaps(months: Iterable[int]) -> list[int]:
    ms = sorted(set(months))
    gaps = []
    for a, b in zip(ms, ms[1:]):
        gaps.extend(range(a + 1, b))
    return gaps


def validate_dataset(
    statics: list[StaticRecord],
    dynamics: list[DynamicRecord],
    injections: list[InjectionRecord],
    geometry: FieldGeometry,
) -> ValidationReport:
    """Collect per-well consistency issues; an empty report means usable data."""
    issues = set()
    producer_months: dict[WellId, list[int]] = {}
    for r in dynamics:
        producer_months.setdefault(r.well, []).append(r.month)
    injector_months: dict[WellId, list[int]] = {}
    for r in injections:
        injector_months.setdefault(r.well, []).append(r.month)
    static_wells = {r.well for r in statics}

    for well, months in list(producer_months.items()) + list(injector_months.items()):
        for gap in _month_gaps(months):
            issues.add(MonthGap(well, gap))
        if well not in geometry.coords:
            issues.add(MissingCoordinates(well))
    for well in static_wells:
        if well not in geometry.coords:
            issues.add(MissingCoordinates(well))
        if well not in producer_months:
            issues.add(UnknownWell(well, "static without dynamic records"))
    for well in producer_months:
        if well not in static_wells:
            issues.add(MissingStatic(well))
    return ValidationReport(tuple(sorted(issues)))
