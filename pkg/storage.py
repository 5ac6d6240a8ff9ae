"""
Model persistence with an adapter pattern.

A model file starts with the line `PIPMODEL <format_version>` followed by a
JSON body. Floats are written with their shortest round-trip repr, so a
save/load cycle reproduces every array bit-exactly.
"""

import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from basis import make_basis
from config import Config
from dataset import DofSpec
from manifold import PhaseManifold
from model import PipModel

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ModelParseError(ValueError):
    """Malformed model file."""

    def __init__(self, message: str, offset: Optional[int] = None, field: Optional[str] = None):
        location = []
        if offset is not None:
            location.append(f"byte {offset}")
        if field is not None:
            location.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(location)})" if location else message)
        self.offset = offset
        self.field = field


class FormatVersionError(ModelParseError):
    """Model file written with an unsupported format version."""


class BasisRecord(BaseModel):
    count: int
    kappa: float


class ManifoldRecord(BaseModel):
    positions: int
    velocities: int
    pos_range: Tuple[float, float]
    vel_range: Tuple[float, float]
    table: List[List[float]]
    occupancy: List[List[bool]]


class ModelRecord(BaseModel):
    """On-disk schema of the JSON body."""
    format_version: int
    dofs: List[DofSpec]
    bases: List[BasisRecord]
    prior_mean: List[float]
    prior_cov: List[List[float]]
    noise_diag: List[float]
    manifold: ManifoldRecord
    metadata: Dict[str, Any] = {}


def _header(version: int) -> bytes:
    return f"{Config.MODEL_MAGIC} {version}\n".encode("ascii")


def _to_record(model: PipModel) -> Dict[str, Any]:
    manifold = model.manifold
    return {
        "format_version": model.format_version,
        "dofs": [dof.model_dump(mode="json") for dof in model.dofs],
        "bases": [{"count": b.count, "kappa": b.kappa} for b in model.bases],
        "prior_mean": model.prior_mean.tolist(),
        "prior_cov": model.prior_cov.tolist(),
        "noise_diag": model.noise_diag.tolist(),
        "manifold": {
            "positions": manifold.positions,
            "velocities": manifold.velocities,
            "pos_range": list(manifold.pos_range),
            "vel_range": list(manifold.vel_range),
            "table": manifold.table.tolist(),
            "occupancy": manifold.occupancy.tolist(),
        },
        "metadata": model.metadata,
    }


def _check_shape(array: np.ndarray, expected: tuple, field: str) -> np.ndarray:
    if array.shape != expected:
        raise ModelParseError(f"dimension mismatch: got {array.shape}, expected {expected}", field=field)
    if not np.all(np.isfinite(array)):
        raise ModelParseError("non-finite value", field=field)
    return array


def _from_record(record: ModelRecord) -> PipModel:
    if len(record.bases) != len(record.dofs):
        raise ModelParseError(f"{len(record.bases)} basis entries for {len(record.dofs)} DOFs",
                              field="bases")
    try:
        bases = [make_basis(b.count, b.kappa) for b in record.bases]
    except ValueError as e:
        raise ModelParseError(str(e), field="bases") from e
    total = sum(b.count for b in bases)
    dof_count = len(record.dofs)

    prior_mean = _check_shape(np.asarray(record.prior_mean, dtype=float), (total,), "prior_mean")
    try:
        prior_cov = np.asarray(record.prior_cov, dtype=float)
    except ValueError as e:
        raise ModelParseError("ragged matrix", field="prior_cov") from e
    _check_shape(prior_cov, (total, total), "prior_cov")
    noise_diag = _check_shape(np.asarray(record.noise_diag, dtype=float), (dof_count,), "noise_diag")

    m = record.manifold
    try:
        table = np.asarray(m.table, dtype=float)
        occupancy = np.asarray(m.occupancy, dtype=bool)
    except ValueError as e:
        raise ModelParseError("ragged matrix", field="manifold.table") from e
    _check_shape(table, (m.positions, m.velocities), "manifold.table")
    if occupancy.shape != table.shape:
        raise ModelParseError(f"dimension mismatch: got {occupancy.shape}, expected {table.shape}",
                              field="manifold.occupancy")
    try:
        manifold = PhaseManifold(positions=m.positions, velocities=m.velocities,
                                 pos_range=tuple(m.pos_range), vel_range=tuple(m.vel_range),
                                 table=table, occupancy=occupancy)
        return PipModel(dofs=list(record.dofs), bases=bases, prior_mean=prior_mean,
                        prior_cov=prior_cov, noise_diag=noise_diag, manifold=manifold,
                        format_version=record.format_version, metadata=dict(record.metadata))
    except ValueError as e:
        raise ModelParseError(str(e), field="model") from e


def dumps_model(model: PipModel) -> bytes:
    """Serialise a model to bytes."""
    body = json.dumps(_to_record(model), separators=(",", ":"), allow_nan=False)
    return _header(model.format_version) + body.encode("utf-8")


def loads_model(data: bytes) -> PipModel:
    """
    Parse a serialised model.

    Raises:
        FormatVersionError: If the version is not supported
        ModelParseError: On any structural problem, with byte offset or field
    """
    newline = data.find(b"\n")
    if newline < 0:
        raise ModelParseError("missing header line", offset=len(data))
    magic, _, version_text = data[:newline].partition(b" ")
    if magic != Config.MODEL_MAGIC.encode("ascii"):
        raise ModelParseError(f"bad magic, expected '{Config.MODEL_MAGIC}'", offset=0)
    try:
        version = int(version_text)
    except ValueError:
        raise ModelParseError("format_version is not an integer", offset=len(magic) + 1) from None
    if version != Config.MODEL_FORMAT_VERSION:
        raise FormatVersionError(f"unsupported format_version {version}, this build reads "
                                 f"{Config.MODEL_FORMAT_VERSION}", offset=len(magic) + 1,
                                 field="format_version")

    body_start = newline + 1
    try:
        text = data[body_start:].decode("utf-8")
    except UnicodeDecodeError as e:
        raise ModelParseError("body is not valid UTF-8", offset=body_start + e.start) from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        offset = body_start + len(text[:e.pos].encode("utf-8"))
        raise ModelParseError(f"corrupt model body: {e.msg}", offset=offset) from e

    try:
        record = ModelRecord.model_validate(raw)
    except ValidationError as e:
        error = e.errors()[0]
        field = ".".join(str(part) for part in error["loc"])
        raise ModelParseError(error["msg"], field=field) from e
    if record.format_version != version:
        raise ModelParseError(f"body format_version {record.format_version} does not match "
                              f"header {version}", field="format_version")
    return _from_record(record)


def is_model_file(path: PathLike) -> bool:
    """True when the file starts with the model magic string."""
    with open(path, "rb") as handle:
        return handle.read(len(Config.MODEL_MAGIC)) == Config.MODEL_MAGIC.encode("ascii")


class ModelStore(ABC):
    """Abstract base class for model stores."""

    @abstractmethod
    def save(self, model: PipModel, destination: PathLike) -> None:
        """
        Persist a model.

        Args:
            model: The trained model
            destination: Where to write it
        """
        pass

    @abstractmethod
    def load(self, source: PathLike) -> PipModel:
        """
        Read a model back.

        Args:
            source: Where the model was written

        Returns:
            The reconstructed model
        """
        pass


class TextModelStore(ModelStore):
    """Single-file store: magic/version header plus JSON body."""

    def save(self, model: PipModel, destination: PathLike) -> None:
        data = dumps_model(model)
        Path(destination).write_bytes(data)
        logger.info(f"✓ Saved model to {destination} ({len(data)} bytes)")

    def load(self, source: PathLike) -> PipModel:
        model = loads_model(Path(source).read_bytes())
        logger.info(f"✓ Loaded model {source}: {len(model.dofs)} DOFs, B = {model.total_basis}")
        return model


def create_model_store(kind: Optional[str] = None) -> ModelStore:
    """
    Factory function to create the configured model store.

    Args:
        kind: Store type; defaults to Config.MODEL_FORMAT

    Raises:
        ValueError: If the store type is not supported
    """
    kind = (kind or Config.MODEL_FORMAT).lower()
    if kind == "text":
        return TextModelStore()
    raise ValueError(f"Unsupported model format: {kind}")


def save_model(model: PipModel, destination: PathLike) -> None:
    create_model_store().save(model, destination)


def load_model(source: PathLike) -> PipModel:
    return create_model_store().load(source)
