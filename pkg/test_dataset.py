"""
Tests for the dataset schema and file formats.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from dataset import (
    Cycle,
    DataError,
    Dataset,
    DofRole,
    DofSpec,
    format_dataset,
    format_stream,
    parse_dataset,
    read_dataset,
    validate_dataset,
    write_dataset,
)

HEADER = "#dofs pos:observed:deg:phase_pos,vel:observed:deg/s:phase_vel,load:latent:N\n" \
         "cycle_id,time_s,pos,vel,load\n"


def _small_text(rows: str) -> str:
    return HEADER + rows


def test_parse_small_dataset():
    dataset = parse_dataset(_small_text("a,0.0,1,2,3\na,0.1,4,5,6\nb,1.0,7,8,9\nb,1.1,1,1,1\n"))
    assert dataset.names == ["pos", "vel", "load"]
    assert [c.cycle_id for c in dataset.cycles] == ["a", "b"]
    assert dataset.dofs[0].is_phase_position and dataset.dofs[1].is_phase_velocity
    assert dataset.dofs[2].role == DofRole.LATENT
    np.testing.assert_array_equal(dataset.cycles[0].values, [[1, 2, 3], [4, 5, 6]])


def test_round_trip_is_bit_exact(gait_train):
    dataset = gait_train[0]
    text = format_dataset(dataset)
    parsed = parse_dataset(text)
    assert format_dataset(parsed) == text
    for original, copy in zip(dataset.cycles, parsed.cycles):
        assert original.cycle_id == copy.cycle_id
        assert np.array_equal(original.times, copy.times)
        assert np.array_equal(original.values, copy.values)


def test_file_round_trip(tmp_path, gait_holdout):
    path = tmp_path / "holdout.csv"
    write_dataset(gait_holdout[0], path)
    assert format_dataset(read_dataset(path)) == format_dataset(gait_holdout[0])


class TestDiagnostics:
    def test_non_finite_names_cycle_and_column(self):
        with pytest.raises(DataError, match="cycle b column vel"):
            parse_dataset(_small_text("a,0.0,1,2,3\na,0.1,4,5,6\nb,1.0,7,nan,9\nb,1.1,1,1,1\n"))

    def test_unparseable_number_names_line(self):
        with pytest.raises(DataError, match="line 4, column load"):
            parse_dataset(_small_text("a,0.0,1,2,3\na,0.1,4,5,x\n"))

    def test_wrong_field_count(self):
        with pytest.raises(DataError, match="line 3: expected 5 fields"):
            parse_dataset(_small_text("a,0.0,1,2\n"))

    def test_non_contiguous_cycle(self):
        with pytest.raises(DataError, match="contiguous"):
            parse_dataset(_small_text("a,0,1,1,1\na,1,1,1,1\nb,2,1,1,1\nb,3,1,1,1\na,4,1,1,1\n"))

    def test_single_row_cycle(self):
        with pytest.raises(DataError, match="at least 2 rows"):
            parse_dataset(_small_text("a,0,1,1,1\n"))

    def test_time_must_increase(self):
        with pytest.raises(DataError, match="strictly increase"):
            parse_dataset(_small_text("a,1,1,1,1\na,1,1,1,1\n"))

    def test_header_mismatch(self):
        text = HEADER.replace("cycle_id,time_s,pos", "cycle_id,time_s,position") + "a,0,1,1,1\n"
        with pytest.raises(DataError, match="line 2"):
            parse_dataset(text)

    def test_unknown_role(self):
        with pytest.raises(DataError, match="line 1, DOF 3"):
            parse_dataset(HEADER.replace("load:latent", "load:hidden"))

    def test_missing_phase_velocity(self):
        text = HEADER.replace(":phase_vel", "")
        with pytest.raises(DataError, match="phase_vel"):
            parse_dataset(text)


def test_phase_input_must_be_observed():
    with pytest.raises(ValidationError, match="must have role observed"):
        DofSpec(name="x", role=DofRole.LATENT, is_phase_position=True)


def test_validate_dataset_flags_duplicate_cycle_ids():
    dofs = parse_dataset(_small_text("a,0,1,1,1\na,1,1,1,1\n")).dofs
    cycle = Cycle("a", np.array([0.0, 1.0]), np.ones((2, 3)))
    with pytest.raises(DataError, match="duplicate"):
        validate_dataset(Dataset(dofs=dofs, cycles=[cycle, cycle]))


def test_subset_keeps_order():
    dataset = parse_dataset(_small_text("a,0,1,1,1\na,1,1,1,1\nb,2,1,1,1\nb,3,1,1,1\n"))
    assert [c.cycle_id for c in dataset.subset(["b"]).cycles] == ["b"]


def test_stream_format_masks_columns():
    dataset = parse_dataset(_small_text("a,0.0,1.5,2.5,3.5\na,0.1,4.0,5.0,6.0\n"))
    assert format_stream(dataset) == "0.0,1.5,2.5\n0.1,4.0,5.0\n"
    assert format_stream(dataset, mask=["vel"]) == "0.0,1.5,\n0.1,4.0,\n"
