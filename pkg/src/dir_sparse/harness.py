"""Experiment harness: seeded instance generation, metrics, batch runs.

Instances follow the heavy-tailed sparse-recovery protocol: Gaussian
measurement matrix, Gaussian values on a uniformly drawn support, and
standard Cauchy measurement noise, with the constraint level set to a
fixed multiple of the Cauchy loss of the pure noise.  The random stream
order is fixed (matrix row-major, then support, then signal values, then
noise uniforms) so records are bit-reproducible from the seed.
"""

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, replace
from typing import Optional

import numpy as np

from .core import DirConfig, ProblemInstance, RunResult, run_dir
from .linalg import lambda_max_gram
from .losses import LossKind, LossSpec, PenaltySpec, validate_assumptions

SUCCESS_RECOVERY_ERROR = 0.01

AGGREGATE_COLUMNS = ("i", "engine", "success_pct", "iter_s", "iter_f",
                     "cpu_s", "cpu_f", "recerr_s", "recerr_f",
                     "res_min", "res_max")


@dataclass(frozen=True)
class InstanceSpec:
    """Shape and scales of one random instance family."""

    m: int
    n: int
    s: int
    delta: float = 0.05
    epsilon: float = 0.1
    noise_scale: float = 0.01
    sigma_factor: float = 1.2
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.s <= self.n):
            raise ValueError("need 0 < s <= n")
        if not (0 < self.m < self.n):
            raise ValueError("need 0 < m < n")
        if min(self.delta, self.epsilon, self.sigma_factor) <= 0:
            raise ValueError("scales must be positive")


@dataclass(frozen=True)
class TrialRecord:
    """Per-trial measurements; the aggregate table is a pure fold of these."""

    seed: int
    engine: str
    success: bool
    recovery_error: float
    residual: float
    outer_iterations: int
    total_inner_iterations: int
    wall_seconds: float
    L_value: float
    time_L: float
    time_QR: float
    time_slater: float
    status: str
    error: Optional[str] = None


@dataclass(frozen=True)
class Metrics:
    recovery_error: float
    residual: float
    success: bool


def _draw_instance_data(spec: InstanceSpec):
    """Raw draws in the documented stream order."""
    rng = np.random.default_rng(spec.seed)
    A = rng.standard_normal((spec.m, spec.n))
    support = rng.choice(spec.n, size=spec.s, replace=False)
    values = rng.standard_normal(spec.s)
    u = rng.random(spec.m)
    eta = np.tan(np.pi * (u - 0.5))     # standard Cauchy via inverse CDF
    x_orig = np.zeros(spec.n)
    x_orig[support] = values
    return A, x_orig, eta


def generate_instance_timed(spec: InstanceSpec):
    """Build one instance, returning (instance, x_orig, timing dict).

    The timings cover the QR factorization of A.T, the least-norm solve
    given that factorization, and the spectral bound on A A.T.
    """
    A, x_orig, eta = _draw_instance_data(spec)
    noise = spec.noise_scale * eta
    b = A @ x_orig + noise
    loss = LossSpec(LossKind.CAUCHY, spec.delta)
    penalty = PenaltySpec(spec.epsilon)
    sigma = spec.sigma_factor * float(np.sum(loss.value(noise * noise)))

    report = validate_assumptions(A, b, sigma, loss)
    if not report.ok:
        raise ValueError(f"generated instance violates assumptions: {report}")

    tic = time.perf_counter()
    Q, R = np.linalg.qr(A.T)
    time_qr = time.perf_counter() - tic
    tic = time.perf_counter()
    x_ln = Q @ np.linalg.solve(R.T, b)
    time_slater = time.perf_counter() - tic
    tic = time.perf_counter()
    L = lambda_max_gram(A)
    time_l = time.perf_counter() - tic

    instance = ProblemInstance(A=np.ascontiguousarray(A), b=b, sigma=sigma,
                               loss=loss, penalty=penalty,
                               least_norm=x_ln, gram_lmax=L)
    timings = {"time_QR": time_qr, "time_slater": time_slater, "time_L": time_l}
    return instance, x_orig, timings


def generate_instance(spec: InstanceSpec):
    """Deterministically generate (instance, x_orig) for the given spec."""
    instance, x_orig, _ = generate_instance_timed(spec)
    return instance, x_orig


def compute_metrics(result: RunResult, instance: ProblemInstance,
                    x_orig: np.ndarray) -> Metrics:
    """Recovery error, relative constraint residual, and the success flag."""
    zeta = result.x_final
    rec = float(np.linalg.norm(zeta - x_orig)
                / max(float(np.linalg.norm(x_orig)), 1.0))
    res = (instance.constraint(zeta) - instance.sigma) / instance.sigma
    return Metrics(recovery_error=rec, residual=float(res),
                   success=rec <= SUCCESS_RECOVERY_ERROR)


def run_trial(spec: InstanceSpec, engine: str,
              config: Optional[DirConfig] = None) -> TrialRecord:
    """Generate the instance for ``spec``, solve it, record the measurements."""
    instance, x_orig, timings = generate_instance_timed(spec)
    cfg = replace(config, engine=engine) if config is not None \
        else DirConfig(engine=engine)
    tic = time.perf_counter()
    result = run_dir(instance, cfg)
    wall = time.perf_counter() - tic
    metrics = compute_metrics(result, instance, x_orig)
    return TrialRecord(
        seed=spec.seed, engine=engine, success=metrics.success,
        recovery_error=metrics.recovery_error, residual=metrics.residual,
        outer_iterations=len(result.history),
        total_inner_iterations=sum(h["inner_iterations"] for h in result.history),
        wall_seconds=wall, L_value=instance.gram_lmax,
        time_L=timings["time_L"], time_QR=timings["time_QR"],
        time_slater=timings["time_slater"], status=result.status.value)


def _trial_task(args):
    spec, engine, config = args
    try:
        return run_trial(spec, engine, config)
    except Exception as exc:  # record, never abort the batch
        return TrialRecord(
            seed=spec.seed, engine=engine, success=False,
            recovery_error=float("nan"), residual=float("nan"),
            outer_iterations=0, total_inner_iterations=0, wall_seconds=0.0,
            L_value=float("nan"), time_L=0.0, time_QR=0.0, time_slater=0.0,
            status="error", error=f"{type(exc).__name__}: {exc}")


def run_batch(specs, engines, trials_per_spec: int,
              config: Optional[DirConfig] = None, max_workers: int = 1):
    """Run ``trials_per_spec`` seeded trials of every spec/engine pair.

    Trial t of a spec uses seed ``spec.seed + t``.  Trials are independent;
    with ``max_workers > 1`` they are dispatched to worker processes and
    merged back in task order.  Returns ``(records, aggregate_rows)``
    where the aggregate rows follow AGGREGATE_COLUMNS.
    """
    specs = list(specs)
    tasks = []
    for spec in specs:
        for engine in engines:
            for t in range(trials_per_spec):
                tasks.append((replace(spec, seed=spec.seed + t), engine, config))

    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            records = list(pool.map(_trial_task, tasks))
    else:
        records = [_trial_task(task) for task in tasks]

    aggregates = aggregate_records(specs, engines, records, trials_per_spec)
    return records, aggregates


def _scale_index(spec: InstanceSpec, position: int) -> int:
    if spec.m % 540 == 0 and spec.n == (spec.m // 540) * 2560:
        return spec.m // 540
    return position + 1


def aggregate_records(specs, engines, records, trials_per_spec):
    """Fold trial records into one row per (spec, engine)."""
    rows = []
    idx = 0
    for pos, spec in enumerate(specs):
        for engine in engines:
            chunk = records[idx:idx + trials_per_spec]
            idx += trials_per_spec
            succ = [r for r in chunk if r.success]
            fail = [r for r in chunk if not r.success]
            valid = [r for r in chunk if r.status != "error"]

            def _mean(vals):
                return float(np.mean(vals)) if vals else None

            rows.append({
                "i": _scale_index(spec, pos),
                "engine": engine,
                "success_pct": 100.0 * len(succ) / max(len(chunk), 1),
                "iter_s": _mean([r.total_inner_iterations for r in succ]),
                "iter_f": _mean([r.total_inner_iterations for r in fail]),
                "cpu_s": _mean([r.wall_seconds for r in succ]),
                "cpu_f": _mean([r.wall_seconds for r in fail]),
                "recerr_s": _mean([r.recovery_error for r in succ]),
                "recerr_f": _mean([r.recovery_error for r in fail]),
                "res_min": min((r.residual for r in valid), default=None),
                "res_max": max((r.residual for r in valid), default=None),
            })
    return rows


def write_aggregate_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=AGGREGATE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k])
                             for k in AGGREGATE_COLUMNS})


def write_trials_json(records, path) -> None:
    import json
    with open(path, "w") as fh:
        json.dump([asdict(rec) for rec in records], fh, indent=2)
        fh.write("\n")
