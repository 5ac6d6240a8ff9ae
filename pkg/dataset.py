"""
Dataset schema and the comma-separated dataset / stream file formats.

Dataset file layout:
    line 1: #dofs name:role:unit[:phase_pos|:phase_vel],...
    line 2: cycle_id,time_s,<dof names>
    rows:   one sample per line, each cycle a contiguous block with
            strictly increasing time_s
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

DOFS_PREFIX = "#dofs "
PHASE_POSITION_TAG = "phase_pos"
PHASE_VELOCITY_TAG = "phase_vel"


class DataError(ValueError):
    """Malformed or non-finite dataset content."""


class DofRole(str, Enum):
    OBSERVED = "observed"
    LATENT = "latent"
    CONTROLLED = "controlled"


class DofSpec(BaseModel):
    """One scalar channel of the joint model."""
    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    role: DofRole
    unit: str = ""
    basis_count: Optional[int] = Field(default=None, ge=1)
    is_phase_position: bool = False
    is_phase_velocity: bool = False

    @model_validator(mode="after")
    def _phase_inputs_are_observed(self):
        if (self.is_phase_position or self.is_phase_velocity) and self.role != DofRole.OBSERVED:
            raise ValueError(f"phase input DOF '{self.name}' must have role observed")
        if self.is_phase_position and self.is_phase_velocity:
            raise ValueError(f"DOF '{self.name}' cannot be both phase position and phase velocity")
        for token in (",", ":"):
            if token in self.name or token in self.unit:
                raise ValueError(f"DOF name/unit may not contain '{token}': {self.name}:{self.unit}")
        return self

    def header_token(self) -> str:
        token = f"{self.name}:{self.role.value}:{self.unit}"
        if self.is_phase_position:
            token += f":{PHASE_POSITION_TAG}"
        if self.is_phase_velocity:
            token += f":{PHASE_VELOCITY_TAG}"
        return token


@dataclass(eq=False)
class Cycle:
    """One pre-segmented demonstration: T x D values plus timestamps."""
    cycle_id: str
    times: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.times)


@dataclass(eq=False)
class Dataset:
    """Demonstration cycles sharing one DOF layout."""
    dofs: List[DofSpec]
    cycles: List[Cycle] = field(default_factory=list)

    @property
    def names(self) -> List[str]:
        return [dof.name for dof in self.dofs]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"unknown DOF '{name}'") from None

    def subset(self, cycle_ids: Iterable[str]) -> "Dataset":
        wanted = set(cycle_ids)
        return Dataset(dofs=list(self.dofs),
                       cycles=[c for c in self.cycles if c.cycle_id in wanted])


def phase_input_indices(dofs: Sequence[DofSpec]):
    """Indices of the phase position and phase velocity DOFs."""
    pos = [i for i, d in enumerate(dofs) if d.is_phase_position]
    vel = [i for i, d in enumerate(dofs) if d.is_phase_velocity]
    if len(pos) != 1 or len(vel) != 1:
        raise DataError(f"exactly one phase_pos and one phase_vel DOF are required "
                        f"(found {len(pos)} and {len(vel)})")
    return pos[0], vel[0]


def validate_dataset(dataset: Dataset) -> None:
    """
    Check every dataset invariant.

    Raises:
        DataError: Naming the cycle and column of the first violation
    """
    if not dataset.dofs:
        raise DataError("dataset declares no DOFs")
    names = dataset.names
    if len(set(names)) != len(names):
        raise DataError(f"duplicate DOF names in {names}")
    phase_input_indices(dataset.dofs)

    seen = set()
    for cycle in dataset.cycles:
        if cycle.cycle_id in seen:
            raise DataError(f"cycle {cycle.cycle_id}: duplicate cycle id")
        seen.add(cycle.cycle_id)
        if cycle.values.ndim != 2 or cycle.values.shape[1] != len(names):
            raise DataError(f"cycle {cycle.cycle_id}: expected {len(names)} columns, "
                            f"got shape {cycle.values.shape}")
        if len(cycle) < 2 or cycle.values.shape[0] != len(cycle):
            raise DataError(f"cycle {cycle.cycle_id}: needs at least 2 rows with timestamps")
        if not np.all(np.isfinite(cycle.times)):
            raise DataError(f"cycle {cycle.cycle_id} column time_s: non-finite value")
        if np.any(np.diff(cycle.times) <= 0.0):
            raise DataError(f"cycle {cycle.cycle_id} column time_s: times must strictly increase")
        bad = ~np.isfinite(cycle.values)
        if np.any(bad):
            row, col = np.argwhere(bad)[0]
            raise DataError(f"cycle {cycle.cycle_id} column {names[col]}: "
                            f"non-finite value at row {row}")


def parse_dof_header(line: str) -> List[DofSpec]:
    """Parse the '#dofs name:role:unit[:tag],...' header line."""
    if not line.startswith(DOFS_PREFIX):
        raise DataError(f"line 1: expected header starting with '{DOFS_PREFIX.strip()}'")
    dofs = []
    for column, token in enumerate(line[len(DOFS_PREFIX):].strip().split(","), start=1):
        parts = token.split(":")
        if len(parts) not in (3, 4):
            raise DataError(f"line 1, DOF {column}: expected name:role:unit[:tag], got '{token}'")
        tag = parts[3] if len(parts) == 4 else None
        if tag not in (None, PHASE_POSITION_TAG, PHASE_VELOCITY_TAG):
            raise DataError(f"line 1, DOF {column}: unknown tag '{tag}'")
        try:
            dofs.append(DofSpec(name=parts[0], role=parts[1], unit=parts[2],
                                is_phase_position=tag == PHASE_POSITION_TAG,
                                is_phase_velocity=tag == PHASE_VELOCITY_TAG))
        except ValueError as e:
            raise DataError(f"line 1, DOF {column}: {e}") from e
    return dofs


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {line}, column {column}: cannot parse '{text}' as a number") from None


def parse_dataset(text: str) -> Dataset:
    """
    Parse dataset file contents.

    Raises:
        DataError: With line/column (and cycle) diagnostics
    """
    lines = text.splitlines()
    if len(lines) < 2:
        raise DataError("dataset needs a '#dofs' line and a column header")
    dofs = parse_dof_header(lines[0])
    names = [dof.name for dof in dofs]
    expected = ["cycle_id", "time_s"] + names
    header = next(csv.reader([lines[1]]))
    if header != expected:
        raise DataError(f"line 2: expected header {','.join(expected)}")

    cycles: List[Cycle] = []
    current_id, times, rows = None, [], []
    finished = set()

    def close():
        if current_id is not None:
            cycles.append(Cycle(cycle_id=current_id, times=np.asarray(times, dtype=float),
                                values=np.asarray(rows, dtype=float).reshape(-1, len(names))))
            finished.add(current_id)

    for number, record in enumerate(csv.reader(lines[2:]), start=3):
        if not record:
            continue
        if len(record) != len(expected):
            raise DataError(f"line {number}: expected {len(expected)} fields, got {len(record)}")
        cycle_id = record[0]
        if cycle_id != current_id:
            if cycle_id in finished:
                raise DataError(f"line {number}, cycle {cycle_id}: rows of a cycle must be contiguous")
            close()
            current_id, times, rows = cycle_id, [], []
        times.append(_parse_float(record[1], number, "time_s"))
        row = []
        for name, cell in zip(names, record[2:]):
            value = _parse_float(cell, number, name)
            if not math.isfinite(value):
                raise DataError(f"line {number}: cycle {cycle_id} column {name}: non-finite value")
            row.append(value)
        rows.append(row)
    close()

    dataset = Dataset(dofs=dofs, cycles=cycles)
    validate_dataset(dataset)
    return dataset


def format_dataset(dataset: Dataset) -> str:
    """Serialise a dataset; floats use their shortest exact repr."""
    out = io.StringIO()
    out.write(DOFS_PREFIX + ",".join(dof.header_token() for dof in dataset.dofs) + "\n")
    out.write(",".join(["cycle_id", "time_s"] + dataset.names) + "\n")
    for cycle in dataset.cycles:
        for t, row in zip(cycle.times, cycle.values):
            out.write(",".join([cycle.cycle_id, repr(float(t))] + [repr(float(v)) for v in row]) + "\n")
    return out.getvalue()


def read_dataset(path: Union[str, Path]) -> Dataset:
    dataset = parse_dataset(Path(path).read_text(encoding="utf-8"))
    logger.info(f"Loaded dataset {path}: {len(dataset.cycles)} cycles, {len(dataset.dofs)} DOFs")
    return dataset


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    Path(path).write_text(format_dataset(dataset), encoding="utf-8")
    logger.info(f"✓ Wrote dataset {path}: {len(dataset.cycles)} cycles")


def format_stream(dataset: Dataset, cycles: Optional[Sequence[Cycle]] = None,
                  mask: Optional[Sequence[str]] = None) -> str:
    """
    Emit cycles in the streaming input format: time_s,<observed DOF values>.

    Args:
        dataset: Source dataset (for the DOF layout)
        cycles: Cycles to emit, defaults to all
        mask: Names of observed DOFs to leave empty (simulated dropout)

    Returns:
        Stream text, one frame per line
    """
    observed = [i for i, dof in enumerate(dataset.dofs) if dof.role == DofRole.OBSERVED]
    masked = set(mask or ())
    lines = []
    for cycle in dataset.cycles if cycles is None else cycles:
        for t, row in zip(cycle.times, cycle.values):
            fields = [repr(float(t))]
            for i in observed:
                fields.append("" if dataset.dofs[i].name in masked else repr(float(row[i])))
            lines.append(",".join(fields))
    return "\n".join(lines) + "\n"
