"""Data generation, mode dispatch and result persistence for one experiment."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..algorithm import ModelSet, RunHistory, run, safe_step_size, warm_init
from ..baselines import least_squares_pooled, pooled_run, single_agent_run
from ..errors import DegeneracyError
from ..lti_sim import BatchData, SystemSpec, collect_batches, init_rng, system_rng
from ..metrics import separation, spectral_error
from ..moments import theoretical_step_size
from .config import ExperimentConfig

log = logging.getLogger(__name__)

HISTORY_HEADER = ("iteration", "cluster", "spectral_error", "misclassified_total", "step_size")
SIZE_SWEEP_HEADER = ("m", "seed", "ls_error")


@dataclass
class ExperimentResult:
    out_dir: Path
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def fmt(x) -> str:
    """Shortest round-trip decimal representation."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def generate_batches(
    config: ExperimentConfig,
    seed: int,
    rollouts: Optional[int] = None,
    specs: Optional[list] = None,
    workers: int = 1,
) -> tuple[list[SystemSpec], list[BatchData]]:
    """Batches for every system; system ``i`` always draws from its own stream of ``seed``."""
    specs = config.specs(rollouts) if specs is None else specs
    truths = config.truths

    def one(spec: SystemSpec) -> BatchData:
        return collect_batches(spec, truths[spec.cluster_id], system_rng(seed, spec.system_id))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            batches = list(pool.map(one, specs))
    else:
        batches = [one(s) for s in specs]
    return specs, batches


def initial_models(config: ExperimentConfig, seed: int) -> ModelSet:
    kind = config.init
    if kind == "auto":
        kind = "warm" if config.K >= 2 else "zero"
    if kind == "zero":
        shape = config.truths[0].theta.shape
        return ModelSet(tuple(np.zeros(shape) for _ in range(config.K)))
    return warm_init(config.truths, config.alpha0, init_rng(seed))


def write_history(path: Path, history: RunHistory, with_misclassification: bool = True) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for r in range(history.iterations):
            mis = None
            if with_misclassification and history.misclassified is not None:
                mis = history.misclassified[r]
            for j in range(history.errors.shape[1]):
                w.writerow([r + 1, j, fmt(history.errors[r, j]), fmt(mis), fmt(history.step_sizes[r, j])])
    return path


def write_summary(path: Path, summary: dict) -> Path:
    with open(path, "w") as fh:
        for k, v in summary.items():
            if isinstance(v, (list, tuple, np.ndarray)):
                v = " ".join(fmt(x) for x in v)
            elif isinstance(v, (float, int, np.floating, np.integer)) and not isinstance(v, bool):
                v = fmt(v)
            fh.write(f"{k} = {v}\n")
    return path


def _scalar_step(config: ExperimentConfig, specs, batches) -> float:
    rule = config.step
    if rule.kind == "fixed":
        return float(rule.value)
    if rule.kind == "safe":
        return safe_step_size(batches)
    return theoretical_step_size(specs, config.truths)


def _base_summary(config: ExperimentConfig, seed: int, mode: str) -> dict:
    s = {"name": config.name, "mode": mode, "seed": seed, "M": config.M, "K": config.K}
    if config.K >= 2:
        sep = separation(config.truths)
        s["delta_min"] = sep.delta_min
        s["delta_max"] = sep.delta_max
    return s


def _clustered(config, seed, rollouts=None) -> tuple[RunHistory, list, list]:
    specs, batches = generate_batches(config, seed, rollouts)
    init = initial_models(config, seed)
    hist = run(
        batches, init, config.iterations, config.step,
        truths=config.truths, labels=config.labels, specs=specs,
    )
    return hist, specs, batches


def _summarize_history(summary: dict, hist: RunHistory, with_mis: bool = True):
    for j in range(hist.errors.shape[1]):
        summary[f"initial_error_cluster{j}"] = hist.initial_errors[j]
        summary[f"final_error_cluster{j}"] = hist.errors[-1, j]
        summary[f"final_step_size_cluster{j}"] = hist.step_sizes[-1, j]
    if with_mis and hist.misclassified is not None:
        summary["misclassified_final"] = int(hist.misclassified[-1])
        summary["misclassified_total"] = int(hist.misclassified.sum())
        summary["misclassified_per_iteration"] = list(hist.misclassified)
    if hist.empty_clusters:
        summary["empty_cluster_events"] = len(hist.empty_clusters)


def run_clustered(config, seed, out: Path) -> ExperimentResult:
    hist, _, _ = _clustered(config, seed)
    res = ExperimentResult(out)
    res.files.append(write_history(out / "history_clustered.csv", hist))
    res.summary = _base_summary(config, seed, "clustered")
    _summarize_history(res.summary, hist)
    return res


def run_pooled(config, seed, out: Path) -> ExperimentResult:
    specs, batches = generate_batches(config, seed)
    init = initial_models(config, seed)
    shared = sum(init.thetas) / init.K
    eta = _scalar_step(config, specs, batches)
    hist = pooled_run(batches, shared, eta, config.iterations, truths=config.truths)
    res = ExperimentResult(out)
    res.files.append(write_history(out / "history_pooled.csv", hist, with_misclassification=False))
    res.summary = _base_summary(config, seed, "pooled")
    _summarize_history(res.summary, hist, with_mis=False)
    return res


def run_single_agent(config, seed, out: Path) -> ExperimentResult:
    """Each cluster's first member identifies itself from its own data only."""
    specs, batches = generate_batches(config, seed)
    init = initial_models(config, seed)
    labels = config.labels
    R, K = config.iterations, config.K
    errors = np.empty((R, K))
    steps = np.empty((R, K))
    initial = np.empty(K)
    final = []
    for j in range(K):
        i = labels.index(j)
        eta = _scalar_step(config, [specs[i]], [batches[i]])
        h = single_agent_run(batches[i], init[j], eta, R, truth=config.truths[j])
        errors[:, j] = h.errors[:, 0]
        steps[:, j] = h.step_sizes[:, 0]
        initial[j] = h.initial_errors[0]
        final.append(h.final[0])
    hist = RunHistory(errors, np.zeros((R, 0), dtype=int), None, steps, initial, ModelSet(tuple(final), R))
    res = ExperimentResult(out)
    res.files.append(write_history(out / "history_single_agent.csv", hist, with_misclassification=False))
    res.summary = _base_summary(config, seed, "single_agent")
    _summarize_history(res.summary, hist, with_mis=False)
    return res


def run_sweep_n(config, seed, out: Path) -> ExperimentResult:
    res = ExperimentResult(out)
    res.summary = _base_summary(config, seed, "sweep_N")
    res.summary["seeds"] = config.seeds
    for N in config.sweep_rollouts:
        first = []
        for s in range(config.seeds):
            hist, _, _ = _clustered(config, seed + s, rollouts=N)
            res.files.append(write_history(out / f"history_N{N}_seed{s}.csv", hist))
            first.append(int(hist.misclassified[0]))
        res.summary[f"N{N}_iter1_misclassified_median"] = float(np.median(first))
        res.summary[f"N{N}_iter1_misclassification_rate"] = sum(first) / (config.M * config.seeds)
    return res


def run_sweep_cluster_size(config, seed, out: Path) -> ExperimentResult:
    """Pooled least-squares error of the first cluster as its member count grows."""
    base = config.clusters[0]
    truth = base.truth
    N = base.rollouts or config.rollouts
    res = ExperimentResult(out)
    res.summary = _base_summary(config, seed, "sweep_cluster_size")
    res.summary["seeds"] = config.seeds
    rows = []
    medians = []
    for m in config.sweep_sizes:
        specs = [SystemSpec(i, 0, base.sigma_x, base.sigma_u, base.sigma_w, N, config.horizon) for i in range(m)]
        errs = []
        for s in range(config.seeds):
            batches = [collect_batches(sp, truth, system_rng(seed + s, sp.system_id)) for sp in specs]
            e = spectral_error(least_squares_pooled(batches), truth.theta)
            errs.append(e)
            rows.append((m, s, e))
        medians.append(float(np.median(errs)))
        res.summary[f"m{m}_median_ls_error"] = medians[-1]
    for (m0, e0), (m1, e1) in zip(zip(config.sweep_sizes, medians), zip(config.sweep_sizes[1:], medians[1:])):
        res.summary[f"shrink_m{m0}_to_m{m1}"] = e0 / e1
    path = out / "sweep_cluster_size.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIZE_SWEEP_HEADER)
        for m, s, e in rows:
            w.writerow([m, s, fmt(e)])
    res.files.append(path)
    return res


RUNNERS = {
    "clustered": run_clustered,
    "pooled": run_pooled,
    "single_agent": run_single_agent,
    "sweep_N": run_sweep_n,
    "sweep_cluster_size": run_sweep_cluster_size,
}


def run_experiment(config: ExperimentConfig, out_dir, seed: Optional[int] = None) -> ExperimentResult:
    seed = config.seed if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = RUNNERS[config.mode](config, seed, out)
    except DegeneracyError as exc:
        raise DegeneracyError(f"mode {config.mode}, seed {seed}: {exc}") from exc
    res.files.append(write_summary(out / f"summary_{config.mode}.txt", res.summary))
    log.info("wrote %d files to %s", len(res.files), out)
    return res
