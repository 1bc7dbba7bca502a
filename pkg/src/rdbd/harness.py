"""Experiment runner: configures optimizer x scheduler x problem, executes
seeded runs, records per-step traces, and compares optimizers over seeds.

Trace CSV schema (one row per step): `step,loss,full_loss` followed by
`grad_norm,alpha,h,reverted` per weight group (suffixed `.<id>` when the
problem has more than one group). `loss` is the mini-batch loss at the
pre-step point; `full_loss` is the whole-dataset loss after the step,
filled every `eval_every` steps and at the final step, blank otherwise.
Wall-clock timings stay in the in-memory records only, so identical
(config, seed) pairs produce byte-identical files.
"""

from __future__ import annotations

import dataclasses
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import AdamState, adam_rdbd_step, adam_step, sgd_step
from .core import GradientEstimate, ParamVector, ScheduleState
from .data import BatchSampler, load_mnist, mnist_subset, synthetic_blobs
from .problems import (LogisticProblem, MlpProblem, QuadraticProblem,
                       RosenbrockProblem, with_gradient_noise)
from .schedulers import dbd_step, rdbd_step

OPTIMIZERS = ("sgd", "adam", "dbd", "rdbd", "adam_rdbd")
PROBLEMS = ("quadratic", "rosenbrock", "logistic", "mlp-blobs", "mlp-mnist")
METRICS = ("final_loss", "steps_to_threshold", "min_grad_norm")

# Default meta rates: 0.01 for gradient-fed schedulers, 5e-7 when the
# schedule rides on Adam directions.
DEFAULT_ETA = {"sgd": 0.0, "adam": 0.0, "dbd": 0.01, "rdbd": 0.01,
               "adam_rdbd": 5e-7}


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


class MissingDataError(RuntimeError):
    """A required dataset is not available (CLI exit code 3)."""


class NumericError(RuntimeError):
    """A run produced non-finite values (CLI exit code 4)."""


@dataclass
class RunConfig:
    problem: str = "logistic"
    optimizer: str = "rdbd"
    alpha0: float = 0.005
    eta: float | None = None        # None -> optimizer default
    batch_size: int = 16
    steps: int = 2000
    seed: int = 0
    alpha_min: float = 0.0
    alpha_max: float | None = None  # None -> +inf (10*alpha0 for adam_rdbd)
    eval_every: int = 25
    beta1: float = 0.05
    beta2: float = 0.99
    eps_hat: float = 1e-8
    n_samples: int = 2048
    dim: int = 20
    problem_seed: int = 7
    separation: float = 4.0
    grad_noise: float = 0.0
    grad_noise_prob: float = 1.0
    layer_sizes: tuple = (784, 128, 64, 10)
    subset_n: int = 2048
    mnist_dir: str | None = None
    out: str | None = None

    def resolved(self) -> "RunConfig":
        """Copy with sentinels filled in and every field range-checked."""
        cfg = dataclasses.replace(self)
        if cfg.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {cfg.optimizer!r}; "
                              f"choose from {', '.join(OPTIMIZERS)}")
        if cfg.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {cfg.problem!r}; "
                              f"choose from {', '.join(PROBLEMS)}")
        if cfg.eta is None:
            cfg.eta = DEFAULT_ETA[cfg.optimizer]
        if cfg.alpha_max is None:
            cfg.alpha_max = 10.0 * cfg.alpha0 if cfg.optimizer == "adam_rdbd" else math.inf
        if cfg.steps < 1:
            raise ConfigError("steps must be >= 1")
        if cfg.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if cfg.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        for name in ("alpha0", "eta"):
            if not math.isfinite(getattr(cfg, name)):
                raise ConfigError(f"{name} must be finite")
        if cfg.eta < 0:
            raise ConfigError("eta must be >= 0")
        if cfg.alpha_min > cfg.alpha_max:
            raise ConfigError("alpha_min must be <= alpha_max")
        cfg.layer_sizes = tuple(int(s) for s in cfg.layer_sizes)
        return cfg

    def problem_signature(self) -> tuple:
        """Fields that must agree for runs to be comparable."""
        return (self.problem, self.n_samples, self.dim, self.problem_seed,
                self.separation, self.grad_noise, self.grad_noise_prob,
                self.layer_sizes, self.subset_n, self.batch_size, self.steps)


@dataclass
class TraceRecord:
    step: int
    loss: float
    full_loss: float | None
    grad_norms: dict
    alphas: dict
    hs: dict
    reverted: dict
    wall_ms: float = 0.0


def build_problem(config: RunConfig):
    cfg = config.resolved()
    if cfg.problem == "quadratic":
        problem = QuadraticProblem(np.diag(np.arange(1.0, cfg.dim + 1.0)))
    elif cfg.problem == "rosenbrock":
        problem = RosenbrockProblem()
    elif cfg.problem == "logistic":
        problem = LogisticProblem(cfg.n_samples, cfg.dim, cfg.problem_seed,
                                  batch_size=cfg.batch_size,
                                  separation=cfg.separation)
    elif cfg.problem == "mlp-blobs":
        dataset = synthetic_blobs(cfg.n_samples, cfg.layer_sizes[0],
                                  cfg.layer_sizes[-1], cfg.problem_seed,
                                  separation=cfg.separation)
        problem = MlpProblem(cfg.layer_sizes, dataset, batch_size=cfg.batch_size)
    elif cfg.problem == "mlp-mnist":
        full = load_mnist(cfg.mnist_dir)
        if full is None:
            raise MissingDataError(
                "MNIST IDX files not found; pass --mnist-dir or set MNIST_DIR")
        subset = mnist_subset(full, cfg.subset_n, cfg.problem_seed)
        problem = MlpProblem(cfg.layer_sizes, subset, batch_size=cfg.batch_size)
    else:
        raise ConfigError(f"unknown problem {cfg.problem!r}")
    if cfg.grad_noise > 0.0:
        # Noise stream is seed-derived, so optimizers compared at one seed
        # see identical perturbations.
        problem = with_gradient_noise(problem, cfg.grad_noise,
                                      seed=cfg.problem_seed + 1,
                                      prob=cfg.grad_noise_prob)
    return problem


def run(config: RunConfig):
    """Execute one seeded run; returns the list of TraceRecords.

    Deterministic for a given (config, seed): the master seed splits into
    independent init and batch-order streams, so optimizer comparisons at
    the same seed share identical batch sequences.
    """
    cfg = config.resolved()
    problem = build_problem(cfg)
    init_ss, batch_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    x = problem.initial_point(np.random.default_rng(init_ss)).astype(np.float64)

    sampler = None
    if problem.n_samples:
        sampler = BatchSampler(problem.n_samples, cfg.batch_size, batch_ss)

    groups = []
    for vec_id, sl in problem.segments():
        vec = ParamVector(vec_id, x[sl])
        sched = ScheduleState.fresh(vec.dim, cfg.alpha0, cfg.eta,
                                    cfg.alpha_min, cfg.alpha_max)
        adam = AdamState.fresh(vec.dim, cfg.beta1, cfg.beta2, cfg.eps_hat)
        groups.append([vec_id, sl, vec, sched, adam])

    records = []

    def fail(step, detail):
        if cfg.out:
            write_trace_csv(records, [g[0] for g in groups], cfg.out)
        raise NumericError(f"non-finite values at step {step}: {detail}")

    # Divergence is detected by the explicit finiteness checks below, so the
    # overflow that precedes an abort does not need to warn as well.
    with np.errstate(over="ignore", invalid="ignore"):
        return _run_loop(cfg, problem, x, sampler, groups, records, fail)


def _run_loop(cfg, problem, x, sampler, groups, records, fail):
    for t in range(1, cfg.steps + 1):
        t0 = time.perf_counter()
        batch = sampler.next_batch() if sampler else None
        batch_loss = problem.batch_loss(x, batch)
        if not math.isfinite(batch_loss):
            fail(t, f"batch loss {batch_loss}")
        try:
            g_full = problem.minibatch_gradient(x, batch=batch, step=t)
        except ValueError as exc:
            fail(t, str(exc))

        grad_norms, alphas, hs, reverted = {}, {}, {}, {}
        for group in groups:
            vec_id, sl, vec, sched, adam = group
            g = GradientEstimate(g_full.values[sl], step=t)
            if cfg.optimizer == "sgd":
                new_values = sgd_step(vec, g, cfg.alpha0)
                norm, alpha, h, rev = g.norm2, cfg.alpha0, 0.0, False
            elif cfg.optimizer == "adam":
                new_values, group[4], u = adam_step(adam, vec, g, cfg.alpha0)
                norm, alpha, h, rev = float(np.linalg.norm(u)), cfg.alpha0, 0.0, False
            elif cfg.optimizer == "dbd":
                out = dbd_step(sched, vec, g)
                new_values = out.new_values
                norm, alpha, h, rev = g.norm2, out.new_alpha, out.h_t, out.reverted
            elif cfg.optimizer == "rdbd":
                out = rdbd_step(sched, vec, g)
                new_values = out.new_values
                norm, alpha, h, rev = g.norm2, out.new_alpha, out.h_t, out.reverted
            else:  # adam_rdbd
                out = adam_rdbd_step(adam, sched, vec, g)
                new_values = out.new_values
                norm = float(np.linalg.norm(sched.prev_update))
                alpha, h, rev = out.new_alpha, out.h_t, out.reverted
            if not np.all(np.isfinite(new_values)):
                fail(t, f"weights of group {vec_id!r}")
            vec.update(new_values)
            x[sl] = new_values
            grad_norms[vec_id] = norm
            alphas[vec_id] = alpha
            hs[vec_id] = h
            reverted[vec_id] = bool(rev)

        full_loss = None
        if t % cfg.eval_every == 0 or t == cfg.steps:
            full_loss = problem.loss(x)
            if not math.isfinite(full_loss):
                fail(t, f"full loss {full_loss}")
        records.append(TraceRecord(
            step=t, loss=batch_loss, full_loss=full_loss,
            grad_norms=grad_norms, alphas=alphas, hs=hs, reverted=reverted,
            wall_ms=(time.perf_counter() - t0) * 1e3))

    if cfg.out:
        write_trace_csv(records, [g[0] for g in groups], cfg.out)
    return records


def _fmt(value) -> str:
    return repr(float(value))


def trace_columns(vector_ids):
    cols = ["step", "loss", "full_loss"]
    suffix = len(vector_ids) > 1
    for vec_id in vector_ids:
        tail = f".{vec_id}" if suffix else ""
        cols += [f"grad_norm{tail}", f"alpha{tail}", f"h{tail}",
                 f"reverted{tail}"]
    return cols


def write_trace_csv(records, vector_ids, path):
    lines = [",".join(trace_columns(vector_ids))]
    for rec in records:
        cells = [str(rec.step), _fmt(rec.loss),
                 "" if rec.full_loss is None else _fmt(rec.full_loss)]
        for vec_id in vector_ids:
            cells += [_fmt(rec.grad_norms[vec_id]), _fmt(rec.alphas[vec_id]),
                      _fmt(rec.hs[vec_id]), str(int(rec.reverted[vec_id]))]
        lines.append(",".join(cells))
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")
    return path


def flat_grad_norm(record: TraceRecord) -> float:
    return math.sqrt(sum(v ** 2 for v in record.grad_norms.values()))


def metric_value(records, metric, threshold=0.5):
    if metric == "final_loss":
        return records[-1].full_loss
    if metric == "steps_to_threshold":
        for rec in records:
            if rec.full_loss is not None and rec.full_loss <= threshold:
                return float(rec.step)
        return math.inf
    if metric == "min_grad_norm":
        return min(flat_grad_norm(rec) for rec in records)
    raise ConfigError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")


@dataclass
class ComparisonRow:
    optimizer: str
    metric: str
    median: float
    iqr: float
    n_seeds: int
    values: list = field(default_factory=list)


def compare(configs, metric="final_loss", threshold=0.5, out=None):
    """Run every config and summarize the metric per optimizer.

    All configs must share the problem signature, and every optimizer must
    cover the same seed set, so differences come from the optimizer alone.
    Returns (rows, winner) with rows ordered by median (lower is better).
    """
    if not configs:
        raise ConfigError("compare needs at least one config")
    resolved = [c.resolved() for c in configs]
    signatures = {c.problem_signature() for c in resolved}
    if len(signatures) > 1:
        raise ConfigError("configs must share the same problem settings")
    by_opt = {}
    for cfg in resolved:
        by_opt.setdefault(cfg.optimizer, []).append(cfg)
    seed_sets = {opt: tuple(sorted(c.seed for c in cfgs))
                 for opt, cfgs in by_opt.items()}
    if len(set(seed_sets.values())) > 1:
        raise ConfigError(f"optimizers must share one seed set, got {seed_sets}")

    rows = []
    for opt, cfgs in by_opt.items():
        values = [metric_value(run(c), metric, threshold)
                  for c in sorted(cfgs, key=lambda c: c.seed)]
        finite = [v for v in values if math.isfinite(v)]
        median = float(np.median(values)) if finite == values else math.inf
        iqr = (float(np.percentile(values, 75) - np.percentile(values, 25))
               if finite == values else math.inf)
        rows.append(ComparisonRow(optimizer=opt, metric=metric, median=median,
                                  iqr=iqr, n_seeds=len(values), values=values))
    rows.sort(key=lambda r: (r.median, r.optimizer))
    winner = rows[0].optimizer
    if out:
        write_comparison_csv(rows, out)
    return rows, winner


def write_comparison_csv(rows, path):
    lines = ["optimizer,metric,median,iqr,n_seeds,values"]
    for r in rows:
        values = ";".join(_fmt(v) for v in r.values)
        lines.append(f"{r.optimizer},{r.metric},{_fmt(r.median)},"
                     f"{_fmt(r.iqr)},{r.n_seeds},{values}")
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")
    return path


def write_bound_reports(reports, path):
    """Serialize BoundReport rows (name, both values, verdict, margin)."""
    lines = ["name,theoretical_value,empirical_value,satisfied,margin,applicable"]
    for r in reports:
        lines.append(f"{r.name},{_fmt(r.theoretical_value)},"
                     f"{_fmt(r.empirical_value)},{int(r.satisfied)},"
                     f"{_fmt(r.margin)},{int(r.applicable)}")
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")
    return path


def render_comparison(rows) -> str:
    header = f"{'optimizer':<12} {'median':>14} {'iqr':>14} {'seeds':>6}"
    out = [header, "-" * len(header)]
    for r in rows:
        out.append(f"{r.optimizer:<12} {r.median:>14.6g} {r.iqr:>14.6g} "
                   f"{r.n_seeds:>6d}")
    return "\n".join(out)


def emit_plot_data(traces, out_path, series=("loss", "alpha")):
    """Write long-format plot data: run_id,step,series,value.

    `traces` is a list of (run_id, records) pairs. Per-group series expand
    to `name.<id>` when a trace has several weight groups; series with no
    values (e.g. full_loss on steps without an evaluation) are filtered
    out. Returns the number of data rows written.
    """
    if not traces:
        raise ConfigError("emit_plot_data needs at least one trace")
    if isinstance(traces, dict):
        traces = list(traces.items())
    lines = ["run_id,step,series,value"]
    count = 0

    def add(run_id, step, name, value):
        nonlocal count
        if value is None:
            return
        lines.append(f"{run_id},{step},{name},{_fmt(value)}")
        count += 1

    for run_id, records in traces:
        if not records:
            continue
        ids = list(records[0].grad_norms)
        suffix = len(ids) > 1
        for rec in records:
            for name in series:
                if name == "loss":
                    add(run_id, rec.step, "loss", rec.loss)
                elif name == "full_loss":
                    add(run_id, rec.step, "full_loss", rec.full_loss)
                elif name in ("alpha", "grad_norm", "h", "reverted"):
                    source = {"alpha": rec.alphas, "grad_norm": rec.grad_norms,
                              "h": rec.hs, "reverted": rec.reverted}[name]
                    for vec_id in ids:
                        label = f"{name}.{vec_id}" if suffix else name
                        add(run_id, rec.step, label, float(source[vec_id]))
                else:
                    raise ConfigError(f"unknown series {name!r}")
    parent = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(parent, exist_ok=True)
    with open(out_path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")
    return count


def check_revert_flags(records):
    """Indices whose revert flag fired without h_t * h_{t-1} < 0."""
    violations = []
    prev_h = {vec_id: 0.0 for vec_id in records[0].hs} if records else {}
    for rec in records:
        for vec_id, rev in rec.reverted.items():
            if rev and not rec.hs[vec_id] * prev_h[vec_id] < 0.0:
                violations.append((rec.step, vec_id))
            prev_h[vec_id] = rec.hs[vec_id]
    return violations


def check_alpha_envelope(records, alpha0, eta, slack=1e-10):
    """Steps violating |alpha_t - alpha0| <= t*eta*(max update norm)^2.

    Only meaningful on runs with clamping disabled; reverts only remove
    increments, so they tighten the bound rather than widening it.
    """
    violations = []
    if not records:
        return violations
    gmax = {vec_id: max(rec.grad_norms[vec_id] for rec in records)
            for vec_id in records[0].grad_norms}
    for rec in records:
        for vec_id, alpha in rec.alphas.items():
            bound = rec.step * eta * gmax[vec_id] ** 2
            if abs(alpha - alpha0) > bound + slack:
                violations.append((rec.step, vec_id))
    return violations


# Desk-scale presets. The quadratic here is diag(1..dim); MNIST presets use
# a stratified 2048-sample subset and skip cleanly when the files are absent.
PRESETS = {
    "logistic-default": RunConfig(problem="logistic", optimizer="rdbd",
                                  alpha0=0.005, eta=0.01, batch_size=16,
                                  steps=2000, n_samples=2048, dim=20,
                                  problem_seed=7),
    "logistic-adam-rdbd": RunConfig(problem="logistic", optimizer="adam_rdbd",
                                    alpha0=0.005, eta=5e-7, batch_size=16,
                                    steps=2000, n_samples=2048, dim=20,
                                    problem_seed=7, alpha_max=0.05),
    "quadratic-dbd": RunConfig(problem="quadratic", optimizer="dbd", dim=2,
                               alpha0=0.5, eta=1e-3, steps=500, batch_size=1,
                               eval_every=10),
    "rosenbrock-rdbd": RunConfig(problem="rosenbrock", optimizer="rdbd",
                                 alpha0=1e-3, eta=1e-9, steps=2000,
                                 batch_size=1, alpha_max=2e-3, eval_every=50),
    "mlp-blobs-demo": RunConfig(problem="mlp-blobs", optimizer="rdbd",
                                alpha0=0.005, eta=0.01, batch_size=16,
                                steps=600, n_samples=512,
                                layer_sizes=(10, 16, 8, 3), problem_seed=7),
    "mnist-default": RunConfig(problem="mlp-mnist", optimizer="rdbd",
                               alpha0=0.005, eta=0.01, batch_size=16,
                               steps=3750, subset_n=2048,
                               layer_sizes=(784, 128, 64, 10)),
}

# Sweeps: (base preset, swept field, values).
SWEEPS = {
    "lr-robustness": ("mnist-default", "alpha0",
                      [0.01, 0.005, 0.001, 0.0005, 0.0001]),
    "lr-robustness-logistic": ("logistic-default", "alpha0",
                               [0.01, 0.005, 0.001, 0.0005, 0.0001]),
    "batch-size-impact": ("logistic-default", "batch_size", [4, 16, 64, 256]),
}

# Named in the experiment plan but deliberately not implemented here.
RESERVED_PRESETS = {
    "cifar-default": "reserved for the CIFAR experiment; not implemented",
}


def preset(name: str) -> RunConfig:
    if name in RESERVED_PRESETS:
        raise ConfigError(f"preset {name!r} is {RESERVED_PRESETS[name]}")
    if name not in PRESETS:
        if name in SWEEPS:
            raise ConfigError(f"{name!r} is a sweep; use the sweep command")
        known = ", ".join(sorted(PRESETS))
        raise ConfigError(f"unknown preset {name!r}; known presets: {known}")
    return dataclasses.replace(PRESETS[name])


def sweep_configs(name: str):
    """Expand a named sweep into (label, config) pairs."""
    if name not in SWEEPS:
        known = ", ".join(sorted(SWEEPS))
        raise ConfigError(f"unknown sweep {name!r}; known sweeps: {known}")
    base_name, axis, values = SWEEPS[name]
    out = []
    for value in values:
        cfg = dataclasses.replace(preset(base_name), **{axis: value})
        out.append((f"{axis}={value}", cfg))
    return out
