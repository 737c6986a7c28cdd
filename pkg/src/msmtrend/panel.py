"""Observed panel container, CSV round-trip and schema validation.

CSV format: header ``id,time,state,age,female``, one row per observation,
times in decimal years, UTF-8.  Rows are kept sorted by (id, time).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError

CSV_HEADER = "id,time,state,age,female"


@dataclass
class Panel:
    """Column-oriented panel of wave observations."""

    ids: np.ndarray
    times: np.ndarray
    states: np.ndarray
    ages: np.ndarray
    female: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=np.int64)
        self.ages = np.asarray(self.ages, dtype=float)
        self.female = np.asarray(self.female, dtype=np.int64)
        n = self.ids.size
        for name in ("times", "states", "ages", "female"):
            if getattr(self, name).size != n:
                raise DataValidationError(f"column {name} has wrong length")

    def __len__(self) -> int:
        return int(self.ids.size)

    @property
    def n_individuals(self) -> int:
        return int(np.unique(self.ids).size)

    def sort(self) -> "Panel":
        order = np.lexsort((self.times, self.ids))
        return Panel(
            self.ids[order], self.times[order], self.states[order],
            self.ages[order], self.female[order],
        )

    def individual_slices(self):
        """Yield (id, slice) pairs assuming the panel is sorted by id."""
        ids = self.ids
        if ids.size == 0:
            return
        starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
        ends = np.r_[starts[1:], ids.size]
        for s, e in zip(starts, ends):
            yield int(ids[s]), slice(int(s), int(e))


def _fmt(x: float) -> str:
    # shortest decimal that round-trips to the same double
    return repr(float(x))


def panel_to_csv(panel: Panel) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for i in range(len(panel)):
        buf.write(
            f"{panel.ids[i]},{_fmt(panel.times[i])},{panel.states[i]},"
            f"{_fmt(panel.ages[i])},{panel.female[i]}\n"
        )
    return buf.getvalue()


def write_panel(path, panel: Panel) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(panel_to_csv(panel))


def read_panel(path) -> Panel:
    """Parse a panel CSV, raising DataValidationError with row numbers."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        raise DataValidationError(f"expected header '{CSV_HEADER}'")
    cols = ([], [], [], [], [])
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise DataValidationError(f"row {ln}: expected 5 fields, got {len(parts)}")
        try:
            cols[0].append(int(parts[0]))
            cols[1].append(float(parts[1]))
            cols[2].append(int(parts[2]))
            cols[3].append(float(parts[3]))
            cols[4].append(int(parts[4]))
        except ValueError as exc:
            raise DataValidationError(f"row {ln}: {exc}") from exc
    return Panel(*map(np.array, cols))


def validate_panel(panel: Panel) -> list[str]:
    """Schema diagnostics; empty list means the panel is clean.

    Messages carry 1-based row numbers in (id, time) sorted order, counting
    the header as row 1 to match the CSV layout.
    """
    problems: list[str] = []
    p = panel.sort()
    if len(p) == 0:
        problems.append("panel is empty")
        return problems
    finite = np.isfinite(p.times) & np.isfinite(p.ages)
    for idx in np.flatnonzero(~finite):
        problems.append(f"row {idx + 2}: non-finite time or age")
    bad_state = ~np.isin(p.states, (1, 2, 3))
    for idx in np.flatnonzero(bad_state):
        problems.append(f"row {idx + 2}: state {p.states[idx]} outside {{1,2,3}}")
    bad_female = ~np.isin(p.female, (0, 1))
    for idx in np.flatnonzero(bad_female):
        problems.append(f"row {idx + 2}: female {p.female[idx]} outside {{0,1}}")
    for idx in np.flatnonzero(p.ages <= 0):
        problems.append(f"row {idx + 2}: age {p.ages[idx]} must be positive")
    for _id, sl in p.individual_slices():
        t = p.times[sl]
        s = p.states[sl]
        if np.any(np.diff(t) <= 0):
            j = int(np.flatnonzero(np.diff(t) <= 0)[0])
            problems.append(f"row {sl.start + j + 3}: times not strictly increasing for id {_id}")
        dead = np.flatnonzero(s == 3)
        if dead.size and dead[0] < s.size - 1:
            problems.append(
                f"row {sl.start + int(dead[0]) + 3}: id {_id} has observations after death"
            )
    return problems
