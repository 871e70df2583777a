"""Material records, CSV ingestion and trial sampling."""
from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DatabaseParseError, DatabaseValidationError, DomainError

log = logging.getLogger(__name__)

HEADER = ["name", "category", "e_min", "e_max", "e_identified"]


class Category(str, enum.Enum):
    METALS_ALLOYS = "metals_alloys"
    CERAMICS_GLASSES = "ceramics_glasses"
    POLYMERS_ELASTOMERS = "polymers_elastomers"
    COMPOSITES_FOAMS_NATURAL = "composites_foams_natural"

    @classmethod
    def parse(cls, text: str) -> "Category":
        key = text.strip().lower()
        for ch in "/- ":
            key = key.replace(ch, "_")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown category {text!r}")


@dataclass(frozen=True)
class MaterialRecord:
    name: str
    category: Category
    e_min: float
    e_max: float
    e_identified: float | None = None
    warning: str | None = None
    # original numeric tokens, so a loaded file can be written back verbatim
    source_text: tuple[str, ...] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (0 < self.e_min <= self.e_max):
            raise DatabaseValidationError(
                f"{self.name}: need 0 < e_min <= e_max (got {self.e_min}, {self.e_max})",
                record=self.name,
            )

    @property
    def representative(self) -> float:
        """Identified effusivity if known, otherwise the range midpoint."""
        if self.e_identified is not None:
            return self.e_identified
        return 0.5 * (self.e_min + self.e_max)


@dataclass(frozen=True)
class MaterialDatabase:
    records: tuple[MaterialRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise DatabaseValidationError("material database is empty")
        seen = set()
        for r in self.records:
            if r.name in seen:
                raise DatabaseValidationError(f"duplicate material name {r.name!r}", record=r.name)
            seen.add(r.name)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, name: str) -> MaterialRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def warnings(self) -> list[str]:
        return [r.warning for r in self.records if r.warning]


def _provenance_warning(name, e_min, e_max, e_id):
    if e_id is not None and not (e_min <= e_id <= e_max):
        return f"{name}: identified effusivity {e_id} lies outside [{e_min}, {e_max}]"
    return None


def _parse(text: str, source: str) -> MaterialDatabase:
    reader = csv.reader(io.StringIO(text))
    rows = [(i + 1, row) for i, row in enumerate(reader) if any(cell.strip() for cell in row)]
    if not rows:
        raise DatabaseValidationError(f"{source}: material database is empty")
    header_line, header = rows[0]
    header = [h.strip().lower() for h in header]
    if header[:4] != HEADER[:4] or len(header) > 5 or (len(header) == 5 and header[4] != HEADER[4]):
        raise DatabaseParseError(f"{source}: expected header {','.join(HEADER)}", line=header_line)
    records = []
    for line, row in rows[1:]:
        if len(row) not in (4, 5):
            raise DatabaseParseError(f"{source}: expected 4 or 5 fields", line=line)
        name = row[0].strip()
        try:
            category = Category.parse(row[1])
        except ValueError as exc:
            raise DatabaseParseError(f"{source}: {exc}", line=line, column=2) from None
        tokens = [c.strip() for c in row[2:]]
        values = []
        for col, tok in enumerate(tokens, start=3):
            if col == 5 and tok == "":
                values.append(None)
                continue
            try:
                values.append(float(tok))
            except ValueError:
                raise DatabaseParseError(f"{source}: bad number {tok!r}", line=line, column=col) from None
        e_min, e_max = values[0], values[1]
        e_id = values[2] if len(values) == 3 else None
        if not (0 < e_min <= e_max):
            raise DatabaseValidationError(
                f"{source}: row {line} ({name}): e_min must be positive and <= e_max", record=name
            )
        warning = _provenance_warning(name, e_min, e_max, e_id)
        if warning:
            log.warning(warning)
        records.append(MaterialRecord(name, category, e_min, e_max, e_id, warning, tuple(tokens)))
    return MaterialDatabase(tuple(records))


def load_database(path) -> MaterialDatabase:
    """Load ``name,category,e_min,e_max[,e_identified]`` CSV (one header line)."""
    path = Path(path)
    return _parse(path.read_text(), str(path))


def dumps_database(db: MaterialDatabase) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in db:
        if r.source_text is not None:
            nums = list(r.source_text)
        else:
            nums = [repr(r.e_min), repr(r.e_max), "" if r.e_identified is None else repr(r.e_identified)]
        w.writerow([r.name, r.category.value, *nums])
    return buf.getvalue()


def save_database(db: MaterialDatabase, path) -> None:
    Path(path).write_text(dumps_database(db))


def builtin_appendix_table() -> MaterialDatabase:
    """The twelve robot-experiment materials with identified and database effusivities."""
    text = resources.files("thermoperf").joinpath("data/appendix_table.csv").read_text()
    return _parse(text, "builtin")


def sample_trials(grid, trials_per_interval: int, seed: int) -> list[tuple[int, float]]:
    """Draw ``trials_per_interval`` effusivities uniformly inside every grid cell.

    Samples lie in the half-open cell (lo, hi]. Deterministic under ``seed``.
    """
    if trials_per_interval < 1:
        raise DomainError("trials_per_interval must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for k, (lo, hi) in enumerate(grid.bounds()):
        u = rng.random(trials_per_interval)
        for e in hi - u * (hi - lo):
            out.append((k, float(e)))
    return out
