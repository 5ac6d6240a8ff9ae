"""
Latency benchmark: training time, phase lookup, step + predict, and the
lookup vs DTW-phase baseline ratio on the built-in 14-DOF configuration.
"""
import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

# Add parent directory to path to import the toolkit modules
sys.path.insert(0, str(Path(__file__).parent.parent))

from inference import DtwPhaseEstimator, ObservationFrame, PipEngine
from manifold import lookup_phase, lookup_phases
from model import train
from synth import default_synth_config, generate


def measure_lookup(model, queries: int, rng) -> dict:
    manifold = model.manifold
    lo, hi = manifold.pos_range
    positions = rng.uniform(lo, hi, queries)
    lo, hi = manifold.vel_range
    velocities = rng.uniform(lo, hi, queries)

    started = time.perf_counter()
    lookup_phases(manifold, positions, velocities)
    batch = (time.perf_counter() - started) / queries

    count = min(queries, 100_000)
    started = time.perf_counter()
    for p, v in zip(positions[:count].tolist(), velocities[:count].tolist()):
        lookup_phase(manifold, p, v)
    scalar = (time.perf_counter() - started) / count
    return {"batch_mean_s": batch, "scalar_mean_s": scalar}


def measure_step_predict(model, dataset, dof: str) -> dict:
    engine = PipEngine(model)
    mask = np.zeros(len(model.dofs), dtype=bool)
    mask[model.observed_indices] = True
    durations = []
    for cycle in dataset.cycles:
        engine.reset()
        for row in cycle.values:
            started = time.perf_counter()
            engine.step(ObservationFrame(values=row, mask=mask))
            engine.predict(dof)
            durations.append(time.perf_counter() - started)
    return {"mean_s": float(np.mean(durations)), "p99_s": float(np.percentile(durations, 99))}


def measure_phase_ratio(model, dataset, history_length: int) -> dict:
    estimator = DtwPhaseEstimator(model, window=history_length)
    pos_index, vel_index = model.phase_inputs
    values = np.vstack([cycle.values for cycle in dataset.cycles])
    history = values[:, [pos_index, vel_index]]
    estimator(history[:history_length])  # compile the DTW kernel

    lookups, baselines = [], []
    for end in range(history_length, history.shape[0]):
        started = time.perf_counter()
        lookup_phase(model.manifold, float(history[end - 1, 0]), float(history[end - 1, 1]))
        lookups.append(time.perf_counter() - started)
        started = time.perf_counter()
        estimator(history[end - history_length:end])
        baselines.append(time.perf_counter() - started)
    return {"lookup_mean_s": float(np.mean(lookups)), "dtw_mean_s": float(np.mean(baselines)),
            "ratio": float(np.mean(baselines) / np.mean(lookups))}


def run_benchmark(seed: int = 0, queries: int = 1_000_000, output_path: str = None) -> dict:
    """
    Run every latency measurement and optionally save the results as JSON.

    Args:
        seed: Generator seed
        queries: Number of random manifold queries
        output_path: Where to save the JSON results (optional)
    """
    training_set, _ = generate(default_synth_config(n_cycles=20, seed=seed))
    holdout, _ = generate(default_synth_config(n_cycles=5, seed=seed + 1))

    started = time.perf_counter()
    model = train(training_set)
    results = {"training_s": time.perf_counter() - started}

    rng = np.random.default_rng(seed)
    results["lookup"] = measure_lookup(model, queries, rng)
    results["step_predict"] = measure_step_predict(model, holdout, "ankle_angle")
    results["phase_ratio"] = measure_phase_ratio(model, holdout, 100)

    print(f"✓ Training: {results['training_s']:.2f} s")
    print(f"  Lookup: {results['lookup']['batch_mean_s'] * 1e9:.1f} ns batched, "
          f"{results['lookup']['scalar_mean_s'] * 1e6:.2f} us scalar")
    print(f"  Step + predict: mean {results['step_predict']['mean_s'] * 1e3:.3f} ms, "
          f"p99 {results['step_predict']['p99_s'] * 1e3:.3f} ms")
    print(f"  DTW baseline / lookup: {results['phase_ratio']['ratio']:.1f}x")

    if output_path:
        output_file = Path(output_path)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        output_file.write_text(json.dumps(results, indent=2), encoding="utf-8")
        print(f"✓ Results saved to: {output_file}")
    return results


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--queries", type=int, default=1_000_000)
    parser.add_argument("--out", help="JSON results file, e.g. reports/latency.json")
    args = parser.parse_args()
    run_benchmark(args.seed, args.queries, args.out)
