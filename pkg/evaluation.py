"""
Holdout evaluation: streaming and forecast MAE per DOF, step latency,
sensor dropout sweep and the DTW-phase baseline comparison.
"""

import logging
import math
import time
from collections import deque
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from config import Config
from dataset import Dataset, DofRole
from inference import DtwPhaseEstimator, ObservationFrame, PhaseUnavailableError, PipEngine
from manifold import lookup_phase
from model import PipModel

logger = logging.getLogger(__name__)


class DofScore(BaseModel):
    name: str
    role: DofRole
    unit: str
    mae: float
    forecast_mae: float
    baseline_mae: Optional[float] = None


class TimingStats(BaseModel):
    steps: int
    step_mean_s: float
    step_p99_s: float
    predict_mean_s: float
    predict_p99_s: float


class DropoutPoint(BaseModel):
    masked_count: int
    masked: List[str]
    observed_mae: float
    latent_mae: float
    mean_trace: float


class BaselineStats(BaseModel):
    lookup_mean_s: float
    dtw_mean_s: float
    ratio: float
    median_phase_disagreement: float


class EvalReport(BaseModel):
    """Evaluation results; DOFs appear once each, in model order."""
    cycles: int
    samples: int
    observe_fraction: float
    sensor_noise: float
    scores: List[DofScore]
    timing: TimingStats
    dropout: List[DropoutPoint] = []
    baseline: Optional[BaselineStats] = None


def check_compatible(model: PipModel, dataset: Dataset) -> None:
    """
    Raises:
        ValueError: If the dataset's DOF names or roles differ from the model's
    """
    model_layout = [(d.name, d.role) for d in model.dofs]
    data_layout = [(d.name, d.role) for d in dataset.dofs]
    if model_layout != data_layout:
        raise ValueError(f"DOF mismatch: model has {[n for n, _ in model_layout]}, "
                         f"dataset has {[n for n, _ in data_layout]}")


def check_disjoint(model: PipModel, dataset: Dataset) -> None:
    """
    Raises:
        ValueError: If any holdout cycle id was used for training
    """
    overlap = sorted(set(model.metadata.get("cycle_ids", [])) & {c.cycle_id for c in dataset.cycles})
    if overlap:
        raise ValueError(f"holdout shares {len(overlap)} cycle ids with training: {overlap[:5]}")


def dropout_candidates(model: PipModel) -> List[str]:
    """Observed DOFs the sweep may mask before the phase velocity, in model order."""
    pos_index, vel_index = model.phase_inputs
    return [model.dofs[d].name for d in model.observed_indices if d not in (pos_index, vel_index)]


def scoring_targets(dataset: Dataset, truth: Optional[Sequence[np.ndarray]] = None) -> List[np.ndarray]:
    """
    Per-cycle T x D arrays that predictions are scored against.

    Args:
        dataset: Holdout dataset
        truth: Noiseless signals per cycle; defaults to the recorded values

    Raises:
        ValueError: If truth does not match the dataset cycle for cycle
    """
    if truth is None:
        return [cycle.values for cycle in dataset.cycles]
    targets = [np.asarray(t, dtype=float) for t in truth]
    if len(targets) != len(dataset.cycles):
        raise ValueError(f"truth has {len(targets)} cycles, dataset has {len(dataset.cycles)}")
    for cycle, target in zip(dataset.cycles, targets):
        if target.shape != cycle.values.shape:
            raise ValueError(f"truth for cycle {cycle.cycle_id} has shape {target.shape}, "
                             f"expected {cycle.values.shape}")
    return targets


def time_phase(index: int, length: int) -> float:
    """Time-proportional phase of sample `index` in a cycle of `length` samples."""
    return (index / (length - 1) * Config.PHASE_PERIOD) % Config.PHASE_PERIOD


def _base_mask(model: PipModel, masked: Sequence[str] = ()) -> np.ndarray:
    mask = np.zeros(len(model.dofs), dtype=bool)
    mask[model.observed_indices] = True
    for name in masked:
        mask[model.index(name)] = False
    return mask


class _Timer:
    def __init__(self):
        self.step: List[float] = []
        self.predict: List[float] = []


def stream_cycle(engine: PipEngine, inputs: np.ndarray, mask: np.ndarray,
                 timer: Optional[_Timer] = None, traces: Optional[List[float]] = None,
                 predict_dof: Optional[str] = None) -> np.ndarray:
    """
    Run the engine over one cycle and return the T x D current-phase estimates.

    Frames whose phase inputs are masked leave the belief unchanged and are
    scored at the time-proportional phase.
    """
    length = inputs.shape[0]
    estimates = np.empty_like(inputs)
    for t in range(length):
        frame = ObservationFrame(values=inputs[t], mask=mask)
        started = time.perf_counter()
        try:
            phase, belief = engine.step(frame)
        except PhaseUnavailableError:
            phase, belief = time_phase(t, length), None
        if timer is not None:
            timer.step.append(time.perf_counter() - started)
            started = time.perf_counter()
            engine.predict(predict_dof)
            timer.predict.append(time.perf_counter() - started)
        if traces is not None:
            traces.append(belief.trace() if belief is not None else float(np.trace(engine.snapshot().cov)))
        estimates[t], _ = engine.estimate_at(phase)
    return estimates


def _forecast_cycle(engine: PipEngine, model: PipModel, inputs: np.ndarray,
                    observe_fraction: float):
    """Condition on the leading fraction, then predict the rest at looked-up phases."""
    length = inputs.shape[0]
    observed = max(1, min(length - 1, int(math.ceil(observe_fraction * length))))
    mask = _base_mask(model)
    for t in range(observed):
        engine.step(ObservationFrame(values=inputs[t], mask=mask))
    pos_index, vel_index = model.phase_inputs
    estimates = np.empty((length - observed, inputs.shape[1]))
    for row, t in enumerate(range(observed, length)):
        phase = lookup_phase(model.manifold, float(inputs[t, pos_index]), float(inputs[t, vel_index]))
        estimates[row], _ = engine.estimate_at(phase)
    return observed, estimates


def _circular_difference(a: float, b: float) -> float:
    diff = abs(a - b) % Config.PHASE_PERIOD
    return min(diff, Config.PHASE_PERIOD - diff)


def _baseline_pass(model: PipModel, inputs: Sequence[np.ndarray], targets: Sequence[np.ndarray]):
    """Prediction driven by DTW phase instead of the lookup, plus lookup-vs-DTW timing."""
    estimator = DtwPhaseEstimator(model)
    pos_index, vel_index = model.phase_inputs
    engine = PipEngine(model)
    mask = _base_mask(model)
    errors = np.zeros(len(model.dofs))
    count = 0
    lookup_times, dtw_times, disagreement = [], [], []
    for values, target in zip(inputs, targets):
        engine.reset()
        history = deque(maxlen=estimator.window)
        for t in range(values.shape[0]):
            position, velocity = float(values[t, pos_index]), float(values[t, vel_index])
            history.append((position, velocity))
            started = time.perf_counter()
            looked_up = lookup_phase(model.manifold, position, velocity)
            lookup_times.append(time.perf_counter() - started)
            if len(history) >= 2:
                started = time.perf_counter()
                phase = estimator(np.asarray(history))
                dtw_times.append(time.perf_counter() - started)
                disagreement.append(_circular_difference(phase, looked_up))
            else:
                phase = time_phase(t, values.shape[0])
            engine.condition(ObservationFrame(values=values[t], mask=mask), phase)
            means, _ = engine.estimate_at(phase)
            errors += np.abs(means - target[t])
            count += 1
    lookup_mean = float(np.mean(lookup_times))
    dtw_mean = float(np.mean(dtw_times)) if dtw_times else 0.0
    stats = BaselineStats(lookup_mean_s=lookup_mean, dtw_mean_s=dtw_mean,
                          ratio=dtw_mean / lookup_mean if lookup_mean > 0 else math.inf,
                          median_phase_disagreement=float(np.median(disagreement)) if disagreement else 0.0)
    return errors / count, stats


def evaluate(model: PipModel, dataset: Dataset, dropout_sweep: bool = False,
             baseline: bool = False, observe_fraction: float = Config.OBSERVE_FRACTION,
             sensor_noise: float = 0.0, seed: int = 0,
             truth: Optional[Sequence[np.ndarray]] = None) -> EvalReport:
    """
    Score a model on holdout cycles.

    The engine is reset at the start of every cycle.

    Args:
        model: Trained model
        dataset: Holdout dataset with the model's DOF layout
        dropout_sweep: Also mask k = 0..D_s-1 sensors
        baseline: Also run the DTW-phase prediction baseline
        observe_fraction: Leading fraction of each cycle used for forecast scoring
        sensor_noise: Gaussian input noise std as a fraction of DOF peak-to-peak
        seed: Seed for the sensor noise
        truth: Noiseless per-cycle T x D signals to score against; defaults
            to the recorded values

    Returns:
        EvalReport

    Raises:
        ValueError: On DOF mismatch, empty dataset, invalid fractions or
            truth that does not match the dataset
    """
    check_compatible(model, dataset)
    if not dataset.cycles:
        raise ValueError("evaluation needs at least one cycle")
    if not 0.0 < observe_fraction < 1.0:
        raise ValueError(f"observe_fraction must be in (0, 1), got {observe_fraction}")
    if sensor_noise < 0.0:
        raise ValueError(f"sensor_noise must be >= 0, got {sensor_noise}")

    targets = scoring_targets(dataset, truth)
    inputs = [cycle.values.copy() for cycle in dataset.cycles]
    if sensor_noise > 0.0:
        rng = np.random.default_rng(seed)
        ptp = np.ptp(np.vstack([c.values for c in dataset.cycles]), axis=0)
        observed = model.observed_indices
        for values in inputs:
            values[:, observed] += rng.standard_normal((values.shape[0], len(observed))) \
                * sensor_noise * ptp[observed]

    predict_dof = next((d.name for d in model.dofs if d.role != DofRole.OBSERVED), model.dofs[0].name)
    engine = PipEngine(model)
    timer = _Timer()
    mask = _base_mask(model)
    abs_errors = np.zeros(len(model.dofs))
    forecast_errors = np.zeros(len(model.dofs))
    samples = forecast_samples = 0
    for values, target in zip(inputs, targets):
        engine.reset()
        estimates = stream_cycle(engine, values, mask, timer=timer, predict_dof=predict_dof)
        abs_errors += np.abs(estimates - target).sum(axis=0)
        samples += values.shape[0]

        engine.reset()
        observed_rows, forecast = _forecast_cycle(engine, model, values, observe_fraction)
        forecast_errors += np.abs(forecast - target[observed_rows:]).sum(axis=0)
        forecast_samples += forecast.shape[0]

    baseline_mae, baseline_stats = (None, None)
    if baseline:
        baseline_mae, baseline_stats = _baseline_pass(model, inputs, targets)

    scores = []
    for d, dof in enumerate(model.dofs):
        scores.append(DofScore(name=dof.name, role=dof.role, unit=dof.unit,
                               mae=float(abs_errors[d] / samples),
                               forecast_mae=float(forecast_errors[d] / forecast_samples),
                               baseline_mae=None if baseline_mae is None else float(baseline_mae[d])))

    timing = TimingStats(steps=len(timer.step),
                         step_mean_s=float(np.mean(timer.step)),
                         step_p99_s=float(np.percentile(timer.step, 99)),
                         predict_mean_s=float(np.mean(timer.predict)),
                         predict_p99_s=float(np.percentile(timer.predict, 99)))

    dropout = run_dropout_sweep(model, dataset, inputs, truth) if dropout_sweep else []

    logger.info(f"✓ Evaluated {len(dataset.cycles)} cycles ({samples} samples)")
    return EvalReport(cycles=len(dataset.cycles), samples=samples, observe_fraction=observe_fraction,
                      sensor_noise=sensor_noise, scores=scores, timing=timing,
                      dropout=dropout, baseline=baseline_stats)


def _sweep_point(engine: PipEngine, inputs: Sequence[np.ndarray], targets: Sequence[np.ndarray],
                 masked: List[str]) -> DropoutPoint:
    model = engine.model
    mask = _base_mask(model, masked)
    observed = model.observed_indices
    hidden = [d for d in range(len(model.dofs)) if d not in observed]
    errors = np.zeros(len(model.dofs))
    traces: List[float] = []
    samples = 0
    for values, target in zip(inputs, targets):
        engine.reset()
        estimates = stream_cycle(engine, values, mask, traces=traces)
        if not np.all(np.isfinite(estimates)):
            raise FloatingPointError(f"non-finite prediction with {len(masked)} sensors masked")
        errors += np.abs(estimates - target).sum(axis=0)
        samples += values.shape[0]
    mae = errors / samples
    return DropoutPoint(masked_count=len(masked), masked=list(masked),
                        observed_mae=float(mae[observed].mean()),
                        latent_mae=float(mae[hidden].mean()) if hidden else 0.0,
                        mean_trace=float(np.mean(traces)))


def run_dropout_sweep(model: PipModel, dataset: Dataset,
                      inputs: Optional[Sequence[np.ndarray]] = None,
                      truth: Optional[Sequence[np.ndarray]] = None) -> List[DropoutPoint]:
    """
    Streaming MAE with k = 0..D_s-1 sensors masked in every frame.

    Sensors are masked cumulatively, most informative first: each step adds
    the remaining candidate whose loss raises the latent MAE the most on
    these cycles (ties go to model order). The phase velocity is masked
    last, which leaves the engine on time-proportional phase.

    Args:
        model: Trained model
        dataset: Holdout dataset
        inputs: Per-cycle sensor values; defaults to the recorded values
        truth: Noiseless per-cycle signals to score against

    Returns:
        One DropoutPoint per k
    """
    inputs = inputs if inputs is not None else [c.values for c in dataset.cycles]
    targets = scoring_targets(dataset, truth)
    engine = PipEngine(model)
    points = [_sweep_point(engine, inputs, targets, [])]
    remaining = dropout_candidates(model)
    while remaining:
        trials = [_sweep_point(engine, inputs, targets, points[-1].masked + [name]) for name in remaining]
        chosen = max(range(len(trials)), key=lambda i: trials[i].latent_mae)
        points.append(trials[chosen])
        remaining.pop(chosen)
        logger.info(f"Dropout k={points[-1].masked_count}: masked {points[-1].masked[-1]}, "
                    f"latent MAE {points[-1].latent_mae:.4g}")
    velocity = model.dofs[model.phase_inputs[1]].name
    points.append(_sweep_point(engine, inputs, targets, points[-1].masked + [velocity]))
    logger.info(f"Dropout k={points[-1].masked_count}: masked {velocity}, "
                f"latent MAE {points[-1].latent_mae:.4g}")
    return points


def format_report(report: EvalReport) -> str:
    """Human-readable tables: predicted (observed) and inferred (latent/controlled) DOFs."""
    lines = [f"Evaluated {report.cycles} cycles, {report.samples} samples", ""]
    sections = [("Predicted (observed)", [s for s in report.scores if s.role == DofRole.OBSERVED]),
                ("Inferred (latent/controlled)", [s for s in report.scores if s.role != DofRole.OBSERVED])]
    for title, scores in sections:
        lines.append(title)
        header = f"  {'DOF':<18} {'unit':<8} {'MAE':>10} {'forecast':>10}"
        if report.baseline is not None:
            header += f" {'DTW-phase':>10}"
        lines.append(header)
        for s in scores:
            line = f"  {s.name:<18} {s.unit:<8} {s.mae:>10.4g} {s.forecast_mae:>10.4g}"
            if s.baseline_mae is not None:
                line += f" {s.baseline_mae:>10.4g}"
            lines.append(line)
        lines.append("")
    t = report.timing
    lines.append(f"Step latency: mean {t.step_mean_s * 1e3:.3f} ms, p99 {t.step_p99_s * 1e3:.3f} ms; "
                 f"predict: mean {t.predict_mean_s * 1e3:.3f} ms, p99 {t.predict_p99_s * 1e3:.3f} ms")
    if report.dropout:
        lines.append("")
        lines.append("Dropout sweep")
        lines.append(f"  {'k':>3} {'observed MAE':>14} {'latent MAE':>12} {'mean trace':>12}  masked")
        for p in report.dropout:
            lines.append(f"  {p.masked_count:>3} {p.observed_mae:>14.4g} {p.latent_mae:>12.4g} "
                         f"{p.mean_trace:>12.4g}  {','.join(p.masked) or '-'}")
    if report.baseline is not None:
        b = report.baseline
        lines.append("")
        lines.append(f"Phase estimation: lookup {b.lookup_mean_s * 1e6:.2f} us, DTW {b.dtw_mean_s * 1e6:.1f} us "
                     f"(ratio {b.ratio:.1f}x), median disagreement {b.median_phase_disagreement:.2f} phase units")
    return "\n".join(lines)
