"""
Command-line entry point for the periodic interaction primitives toolkit.

Commands:
    synth     generate a synthetic dataset (optionally a holdout stream)
    train     learn a model from a dataset file
    infer     stream observations through a model, one prediction per line
    eval      score a model on holdout cycles
    validate  check a dataset or model file

Exit codes: 0 success, 2 usage or data error, 3 numerical failure.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional, TextIO

import numpy as np

from config import Config
from dataset import read_dataset, write_dataset, format_stream
from evaluation import check_disjoint, evaluate, format_report
from inference import NumericalError, ObservationFrame, PhaseUnavailableError, PipEngine
from model import TrainingConfig, train
from storage import is_model_file, load_model, save_model
from synth import default_synth_config, generate, load_synth_config

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA_ERROR = 2
EXIT_NUMERICAL_ERROR = 3


def cmd_synth(args) -> int:
    if args.config:
        config = load_synth_config(args.config)
    else:
        config = default_synth_config(noise_fraction=args.noise_fraction)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.cycles is not None:
        overrides["n_cycles"] = args.cycles
    if args.warp is not None:
        overrides["speed_warp"] = args.warp
    if overrides:
        config = config.model_validate({**config.model_dump(), **overrides})

    dataset, _ = generate(config)
    write_dataset(dataset, args.out)
    if args.stream_out:
        Path(args.stream_out).write_text(format_stream(dataset), encoding="utf-8")
        logger.info(f"✓ Wrote holdout stream {args.stream_out}")
    return EXIT_OK


def _parse_basis_overrides(items: List[str]) -> dict:
    counts = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ValueError(f"--basis expects name=count, got '{item}'")
        counts[name] = int(value)
    return counts


def cmd_train(args) -> int:
    dataset = read_dataset(args.dataset)
    options = {
        "basis_counts": _parse_basis_overrides(args.basis),
        "kappa": args.kappa,
    }
    for key, value in (("basis_count", args.basis_count), ("ridge", args.ridge),
                       ("grid_positions", args.positions), ("grid_velocities", args.velocities),
                       ("dtw_band", args.dtw_band)):
        if value is not None:
            options[key] = value
    model = train(dataset, TrainingConfig(**options))
    save_model(model, args.model_out)

    summary = {
        "cycles": len(dataset.cycles),
        "total_basis": model.total_basis,
        "residual_rms": model.metadata["residual_rms"],
    }
    if args.format == "machine":
        print(json.dumps(summary))
    else:
        print(f"Trained on {summary['cycles']} cycles, B = {summary['total_basis']}")
        for dof in model.dofs:
            print(f"  {dof.name:<18} {dof.role.value:<10} residual RMS "
                  f"{summary['residual_rms'][dof.name]:.4g} {dof.unit}")
    return EXIT_OK


def _parse_stream_line(line: str, width: int):
    """Returns (time_s, readings) with None for masked fields; raises ValueError."""
    fields = line.split(",")
    if len(fields) != width + 1:
        raise ValueError(f"expected {width + 1} fields, got {len(fields)}")
    time_s = float(fields[0])
    readings = []
    for text in fields[1:]:
        text = text.strip()
        if not text:
            readings.append(None)
            continue
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value '{text}'")
        readings.append(value)
    return time_s, readings


def run_infer(model, stream: TextIO, out: TextIO, dofs: List[str], emit_band: bool,
              engine: Optional[PipEngine] = None) -> PipEngine:
    """Stream loop of the infer command; returns the engine for band export."""
    engine = engine or PipEngine(model)
    indices = [model.index(name) for name in dofs]
    width = len(model.observed_indices)
    for number, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("time_s"):
            continue
        try:
            time_s, readings = _parse_stream_line(line, width)
        except ValueError as e:
            logger.warning(f"Skipping stream line {number}: {e}")
            continue
        frame = ObservationFrame.from_observed(model, readings)
        fields = [repr(time_s)]
        try:
            phase, _ = engine.step(frame)
        except PhaseUnavailableError:
            fields.append("NA")
            fields.extend(["NA"] * (len(indices) * (2 if emit_band else 1)))
        else:
            means, stds = engine.estimate_at(phase)
            fields.append(repr(phase))
            for d in indices:
                fields.append(repr(float(means[d])))
                if emit_band:
                    fields.append(repr(float(stds[d])))
        out.write(",".join(fields) + "\n")
        out.flush()
    return engine


def cmd_infer(args) -> int:
    model = load_model(args.model)
    dofs = args.dofs.split(",") if args.dofs else model.names
    if args.stream == "-":
        engine = run_infer(model, sys.stdin, sys.stdout, dofs, args.emit_band)
    else:
        with open(args.stream, encoding="utf-8") as stream:
            engine = run_infer(model, stream, sys.stdout, dofs, args.emit_band)

    if args.band_out:
        bands = [engine.predict(name, args.samples) for name in dofs]
        with open(args.band_out, "w", encoding="utf-8") as handle:
            handle.write(",".join(["phase"] + [f"{b.dof}_{k}" for b in bands for k in ("mean", "std")]) + "\n")
            for i, phase in enumerate(bands[0].phases):
                row = [repr(float(phase))]
                for band in bands:
                    row += [repr(float(band.mean[i])), repr(float(band.std[i]))]
                handle.write(",".join(row) + "\n")
        logger.info(f"✓ Wrote prediction bands to {args.band_out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    dataset = read_dataset(args.dataset)
    if args.check_disjoint:
        check_disjoint(model, dataset)
    report = evaluate(model, dataset, dropout_sweep=args.dropout_sweep, baseline=args.baseline,
                      observe_fraction=args.observe_fraction, sensor_noise=args.sensor_noise,
                      seed=args.seed if args.seed is not None else 0)
    if args.format == "machine":
        print(report.model_dump_json(indent=2))
    else:
        print(format_report(report))
    return EXIT_OK


def cmd_validate(args) -> int:
    if is_model_file(args.path):
        model = load_model(args.path)
        print(f"✓ {args.path}: model, {len(model.dofs)} DOFs, B = {model.total_basis}, "
              f"{model.manifold.positions}x{model.manifold.velocities} manifold")
    else:
        dataset = read_dataset(args.path)
        print(f"✓ {args.path}: dataset, {len(dataset.cycles)} cycles, {len(dataset.dofs)} DOFs")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed override")
    common.add_argument("--format", choices=["human", "machine"], default="human",
                        help="Output format for summaries and reports")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")

    parser = argparse.ArgumentParser(description="Periodic interaction primitives toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", parents=[common], help="Generate a synthetic dataset")
    synth.add_argument("out", help="Dataset file to write")
    synth.add_argument("--config", help="JSON generator config (default: built-in 14-DOF gait config)")
    synth.add_argument("--cycles", type=int, help="Override the number of cycles")
    synth.add_argument("--warp", type=float, help="Override the speed warp strength")
    synth.add_argument("--noise-fraction", type=float, default=0.02,
                       help="Noise as a fraction of amplitude (built-in config only)")
    synth.add_argument("--stream-out", help="Also write the observed columns as an infer stream")
    synth.set_defaults(handler=cmd_synth)

    trainer = commands.add_parser("train", parents=[common], help="Train a model")
    trainer.add_argument("dataset")
    trainer.add_argument("model_out")
    trainer.add_argument("--basis-count", type=int, help="Basis functions per DOF")
    trainer.add_argument("--basis", action="append", metavar="NAME=COUNT",
                         help="Per-DOF basis count (repeatable)")
    trainer.add_argument("--kappa", type=float, help="Basis concentration")
    trainer.add_argument("--ridge", type=float, help="Relative ridge regularisation")
    trainer.add_argument("--positions", type=int, help="Manifold position bins E")
    trainer.add_argument("--velocities", type=int, help="Manifold velocity bins F")
    trainer.add_argument("--dtw-band", type=int, help="Sakoe-Chiba band half width")
    trainer.set_defaults(handler=cmd_train)

    infer = commands.add_parser("infer", parents=[common], help="Stream inference")
    infer.add_argument("model")
    infer.add_argument("stream", help="Stream file, or - for stdin")
    infer.add_argument("--dofs", help="Comma-separated DOFs to emit (default: all)")
    infer.add_argument("--emit-band", action="store_true", help="Append the std after each value")
    infer.add_argument("--samples", type=int, default=Config.DEFAULT_PREDICTION_SAMPLES,
                       help="Phase samples P for --band-out")
    infer.add_argument("--band-out", help="Write per-phase mean/std columns after the stream ends")
    infer.set_defaults(handler=cmd_infer)

    evaluator = commands.add_parser("eval", parents=[common], help="Evaluate on holdout cycles")
    evaluator.add_argument("model")
    evaluator.add_argument("dataset")
    evaluator.add_argument("--dropout-sweep", action="store_true")
    evaluator.add_argument("--baseline", action="store_true", help="Compare with DTW-phase baseline")
    evaluator.add_argument("--observe-fraction", type=float, default=Config.OBSERVE_FRACTION)
    evaluator.add_argument("--sensor-noise", type=float, default=0.0,
                           help="Input noise std as a fraction of peak-to-peak")
    evaluator.add_argument("--check-disjoint", action="store_true",
                           help="Fail if holdout cycle ids were used for training")
    evaluator.set_defaults(handler=cmd_eval)

    validate = commands.add_parser("validate", parents=[common], help="Check a dataset or model file")
    validate.add_argument("path")
    validate.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)

    try:
        return args.handler(args)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as e:
        logger.error(f"✗ Numerical failure: {e}")
        return EXIT_NUMERICAL_ERROR
    except (ValueError, OSError) as e:
        logger.error(f"✗ {e}")
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
