"""
Tests for the command-line interface: exit codes, diagnostics and the infer stream loop.
"""

import io
import json
from pathlib import Path

import numpy as np
import pytest

from dataset import Cycle, Dataset, format_stream, read_dataset, write_dataset
from evaluation import EvalReport, evaluate
from main import EXIT_DATA_ERROR, EXIT_OK, main, run_infer
from storage import load_model


# ── Helpers ───────────────────────────────────────────────


@pytest.fixture(scope="module")
def cli_files(tmp_path_factory):
    """Small synthetic train/holdout files and a model trained through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    paths = {
        "train": root / "train.csv",
        "holdout": root / "holdout.csv",
        "stream": root / "holdout.stream",
        "model": root / "model.pip",
    }
    assert main(["synth", str(paths["train"]), "--cycles", "6", "--seed", "1", "--quiet"]) == EXIT_OK
    assert main(["synth", str(paths["holdout"]), "--cycles", "2", "--seed", "2", "--quiet",
                 "--stream-out", str(paths["stream"])]) == EXIT_OK
    # Holdout ids would collide with training ids; rename them.
    holdout = read_dataset(paths["holdout"])
    holdout.cycles = [Cycle(f"h{c.cycle_id}", c.times, c.values) for c in holdout.cycles]
    write_dataset(holdout, paths["holdout"])
    assert main(["train", str(paths["train"]), str(paths["model"]), "--quiet"]) == EXIT_OK
    return paths


def _output_rows(text: str):
    return [line.split(",") for line in text.splitlines() if line]


# ── synth / validate ──────────────────────────────────────


def test_synth_then_validate(cli_files, capsys):
    assert main(["validate", str(cli_files["train"])]) == EXIT_OK
    assert "dataset, 6 cycles, 14 DOFs" in capsys.readouterr().out
    assert main(["validate", str(cli_files["model"])]) == EXIT_OK
    assert "model, 14 DOFs" in capsys.readouterr().out


def test_synth_is_reproducible(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (first, second):
        assert main(["synth", str(path), "--cycles", "3", "--seed", "5", "--quiet"]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere.json"
    assert main(["synth", str(tmp_path / "out.csv"), "--config", str(missing)]) == EXIT_DATA_ERROR
    assert str(missing) in capsys.readouterr().err


def test_invalid_override_rejected(tmp_path, capsys):
    assert main(["synth", str(tmp_path / "out.csv"), "--warp", "1.5"]) == EXIT_DATA_ERROR
    assert "speed_warp" in capsys.readouterr().err


# ── train ─────────────────────────────────────────────────


def test_train_rejects_non_finite_cell(cli_files, tmp_path, capsys):
    lines = cli_files["train"].read_text().splitlines()
    fields = lines[5].split(",")
    cycle_id = fields[0]
    fields[4] = "nan"
    lines[5] = ",".join(fields)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    column = lines[1].split(",")[4]

    assert main(["train", str(bad), str(tmp_path / "m.pip")]) == EXIT_DATA_ERROR
    err = capsys.readouterr().err
    assert f"cycle {cycle_id}" in err and f"column {column}" in err
    assert not (tmp_path / "m.pip").exists()


def test_train_basis_count_option(cli_files, tmp_path, capsys):
    out = tmp_path / "small.pip"
    assert main(["train", str(cli_files["train"]), str(out), "--basis-count", "6",
                 "--basis", "knee_angle=8", "--quiet"]) == EXIT_OK
    model = load_model(out)
    counts = {dof.name: basis.count for dof, basis in zip(model.dofs, model.bases)}
    assert counts.pop("knee_angle") == 8
    assert set(counts.values()) == {6}
    assert "Trained on 6 cycles" in capsys.readouterr().out


def test_train_malformed_override(cli_files, tmp_path):
    assert main(["train", str(cli_files["train"]), str(tmp_path / "m.pip"),
                 "--basis", "knee_angle"]) == EXIT_DATA_ERROR


# ── infer ─────────────────────────────────────────────────


def test_infer_matches_eval_on_single_cycle(cli_files):
    model = load_model(cli_files["model"])
    holdout = read_dataset(cli_files["holdout"])
    single = holdout.subset([holdout.cycles[0].cycle_id])
    out = io.StringIO()
    run_infer(model, io.StringIO(format_stream(single)), out, model.names, emit_band=False)

    rows = _output_rows(out.getvalue())
    assert len(rows) == len(single.cycles[0])
    predictions = np.array([[float(v) for v in row[2:]] for row in rows])
    infer_mae = np.mean(np.abs(predictions - single.cycles[0].values), axis=0)
    report = evaluate(model, single)
    np.testing.assert_allclose(infer_mae, [s.mae for s in report.scores], rtol=0.0, atol=1e-9)


def test_infer_masks_and_skips(cli_files, caplog):
    model = load_model(cli_files["model"])
    holdout = read_dataset(cli_files["holdout"])
    frames = format_stream(holdout).splitlines()[:3]

    masked_sensor = frames[0].split(",")
    masked_sensor[-1] = ""
    masked_phase = frames[1].split(",")
    masked_phase[2] = ""
    stream = "\n".join([
        "# comment",
        "time_s," + ",".join(model.names[i] for i in model.observed_indices),
        ",".join(masked_sensor),
        ",".join(masked_phase),
        "not,a,frame",
        frames[2],
        "",
    ])
    out = io.StringIO()
    engine = run_infer(model, io.StringIO(stream), out, ["ankle_moment"], emit_band=True)

    rows = _output_rows(out.getvalue())
    assert len(rows) == 3
    assert rows[0][1] != "NA" and len(rows[0]) == 4
    assert rows[1][1:] == ["NA", "NA", "NA"]
    assert float(rows[2][3]) > 0.0
    assert engine.step_count == 2
    assert "Skipping stream line 5" in caplog.text


def test_infer_cli_band_output(cli_files, tmp_path, capsys):
    band = tmp_path / "band.csv"
    assert main(["infer", str(cli_files["model"]), str(cli_files["stream"]), "--dofs",
                 "ankle_moment,knee_angle", "--band-out", str(band), "--samples", "25",
                 "--quiet"]) == EXIT_OK
    rows = _output_rows(capsys.readouterr().out)
    assert all(len(row) == 4 for row in rows)
    lines = band.read_text().splitlines()
    assert lines[0] == "phase,ankle_moment_mean,ankle_moment_std,knee_angle_mean,knee_angle_std"
    assert len(lines) == 26


def test_infer_unknown_dof(cli_files):
    assert main(["infer", str(cli_files["model"]), str(cli_files["stream"]),
                 "--dofs", "elbow"]) == EXIT_DATA_ERROR


# ── eval ──────────────────────────────────────────────────


def test_eval_machine_report(cli_files, capsys):
    assert main(["eval", str(cli_files["model"]), str(cli_files["holdout"]), "--format", "machine",
                 "--check-disjoint", "--quiet"]) == EXIT_OK
    report = EvalReport.model_validate_json(capsys.readouterr().out)
    assert report.cycles == 2
    assert [s.name for s in report.scores] == load_model(cli_files["model"]).names


def test_eval_human_report(cli_files, capsys):
    assert main(["eval", str(cli_files["model"]), str(cli_files["holdout"]), "--quiet"]) == EXIT_OK
    assert "Inferred (latent/controlled)" in capsys.readouterr().out


def test_eval_rejects_training_cycles(cli_files, capsys):
    assert main(["eval", str(cli_files["model"]), str(cli_files["train"]),
                 "--check-disjoint"]) == EXIT_DATA_ERROR
    assert "shares" in capsys.readouterr().err


def test_eval_dof_mismatch(cli_files, tmp_path, capsys):
    holdout = read_dataset(cli_files["holdout"])
    reordered = Dataset(dofs=list(reversed(holdout.dofs)),
                        cycles=[Cycle(c.cycle_id, c.times, c.values[:, ::-1].copy())
                                for c in holdout.cycles])
    path = tmp_path / "reordered.csv"
    write_dataset(reordered, path)
    assert main(["eval", str(cli_files["model"]), str(path)]) == EXIT_DATA_ERROR
    assert "DOF mismatch" in capsys.readouterr().err


# ── verify_setup ──────────────────────────────────────────


def test_verify_setup_passes(capsys):
    import verify_setup

    assert verify_setup.main() == 0
    out = capsys.readouterr().out
    assert "numba kernels compiled" in out
    assert "Environment OK" in out


@pytest.mark.slow
def test_latency_benchmark_writes_results(tmp_path, monkeypatch):
    monkeypatch.syspath_prepend(str(Path(__file__).parent / "scripts"))
    from benchmark_latency import run_benchmark

    out = tmp_path / "reports" / "latency.json"
    results = run_benchmark(seed=0, queries=1000, output_path=str(out))
    assert json.loads(out.read_text()) == results
    assert results["phase_ratio"]["ratio"] > 1.0
    assert results["step_predict"]["mean_s"] > 0.0 and results["step_predict"]["p99_s"] > 0.0
