"""Alternating cluster estimation / model estimation for clustered system identification.

Each iteration first assigns every system to the model with the smallest
Frobenius residual ``||X - Theta Z||_F^2`` (cluster estimation), then moves each
cluster model by one averaged gradient step over the systems assigned to it
(model estimation).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DegeneracyError
from .lti_sim import BatchData, ClusterGroundTruth, SystemSpec
from .metrics import misclassification_count, separation, spectral_error
from .moments import theoretical_step_size

log = logging.getLogger(__name__)

STEP_RULES = ("fixed", "theoretical", "safe")


@dataclass(frozen=True, eq=False)
class ModelSet:
    thetas: tuple
    iteration: int = 0

    def __post_init__(self):
        thetas = tuple(np.array(t, dtype=np.float64) for t in self.thetas)
        if not thetas:
            raise ConfigurationError("a model set needs at least one model")
        if any(t.shape != thetas[0].shape or t.ndim != 2 for t in thetas):
            raise ConfigurationError("all models must be 2-D with identical shapes")
        for t in thetas:
            t.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)

    @property
    def K(self) -> int:
        return len(self.thetas)

    def __getitem__(self, j: int) -> np.ndarray:
        return self.thetas[j]


@dataclass(frozen=True)
class Assignment:
    index: int
    K: int

    @property
    def one_hot(self) -> np.ndarray:
        e = np.zeros(self.K)
        e[self.index] = 1.0
        return e


@dataclass(frozen=True)
class StepRule:
    """``fixed``: one scalar for every cluster. ``theoretical``: the
    moment-based rule evaluated on the current estimated membership.
    ``safe``: |C| / (2 lambda_max(sum Z Z^T)), which guarantees a
    non-expansive noiseless update.
    """

    kind: str = "fixed"
    value: Optional[float] = 1e-3

    def __post_init__(self):
        if self.kind not in STEP_RULES:
            raise ConfigurationError(f"unknown step rule {self.kind!r}; expected one of {STEP_RULES}")
        if self.kind == "fixed" and (self.value is None or not self.value >= 0):
            raise ConfigurationError(f"fixed step size must be non-negative, got {self.value}")


@dataclass
class RunHistory:
    """Per-iteration record; row ``r`` describes iteration ``r + 1``.

    ``assignments[r]`` and ``misclassified[r]`` come from the cluster
    estimation of that iteration, ``errors[r]`` is measured after its model
    update.
    """

    errors: np.ndarray  # (R, K)
    assignments: np.ndarray  # (R, M)
    misclassified: Optional[np.ndarray]  # (R,) or None when labels unknown
    step_sizes: np.ndarray  # (R, K)
    initial_errors: np.ndarray  # (K,)
    final: ModelSet
    empty_clusters: list = field(default_factory=list)  # (iteration, cluster) pairs

    @property
    def iterations(self) -> int:
        return self.errors.shape[0]


def _check(batch: BatchData, theta: np.ndarray):
    if theta.shape != (batch.n_x, batch.Z.shape[0]):
        raise ConfigurationError(
            f"model shape {theta.shape} does not match batch ({batch.n_x}, {batch.Z.shape[0]})"
        )


def frobenius_cost(batch: BatchData, theta) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    _check(batch, theta)
    R = batch.X - theta @ batch.Z
    return float(np.sum(R * R))


def estimate_cluster(batch: BatchData, models: ModelSet) -> Assignment:
    costs = [frobenius_cost(batch, th) for th in models.thetas]
    # np.argmin returns the first minimum: ties go to the smallest index
    return Assignment(int(np.argmin(costs)), models.K)


def _members(assignments: Sequence[Assignment], K: int) -> list[list[int]]:
    members = [[] for _ in range(K)]
    for i, a in enumerate(assignments):
        members[a.index].append(i)
    return members


def model_update_step(
    models: ModelSet,
    assignments: Sequence[Assignment],
    batches: Sequence[BatchData],
    step_sizes,
) -> ModelSet:
    if len(assignments) != len(batches):
        raise ConfigurationError(f"{len(assignments)} assignments for {len(batches)} batches")
    step_sizes = np.broadcast_to(np.asarray(step_sizes, dtype=np.float64), (models.K,))
    new = []
    for j, members in enumerate(_members(assignments, models.K)):
        theta = models[j]
        if not members:
            log.info("cluster %d has no assigned systems at iteration %d; model kept", j, models.iteration)
            new.append(theta)
            continue
        grad = np.zeros_like(theta)
        for i in members:  # ascending system order
            b = batches[i]
            grad += (b.X - theta @ b.Z) @ b.Z.T
        new.append(theta + (2.0 * step_sizes[j] / len(members)) * grad)
    return ModelSet(tuple(new), models.iteration + 1)


def warm_init(truths: Sequence[ClusterGroundTruth], alpha0: float, rng: np.random.Generator) -> ModelSet:
    """Perturb each ground truth by a random direction of spectral norm (1/2 - alpha0) Delta_min."""
    if not 0 < alpha0 < 0.5:
        raise ConfigurationError(f"alpha0 must lie in (0, 1/2), got {alpha0}")
    if len(truths) == 1:
        raise ConfigurationError("warm initialisation radius is undefined for a single cluster")
    delta_min = separation(truths).delta_min
    if delta_min <= 0:
        raise DegeneracyError("clusters coincide (Delta_min = 0); warm initialisation impossible")
    radius = (0.5 - alpha0) * delta_min
    thetas = []
    for truth in truths:
        P = rng.standard_normal(truth.theta.shape)
        thetas.append(truth.theta + P * (radius / np.linalg.norm(P, 2)))
    return ModelSet(tuple(thetas), 0)


def safe_step_size(batches: Sequence[BatchData]) -> float:
    """|C| / (2 lambda_max(sum_i Z_i Z_i^T)) for the given systems."""
    S = sum(b.Z @ b.Z.T for b in batches)
    lam = np.linalg.eigvalsh(0.5 * (S + S.T))[-1]
    if lam <= 0:
        raise DegeneracyError("all regressors are zero; no safe step size exists")
    return len(batches) / (2.0 * lam)


def resolve_step_sizes(
    rule: StepRule,
    assignments: Sequence[Assignment],
    batches: Sequence[BatchData],
    K: int,
    specs: Optional[Sequence[SystemSpec]] = None,
    truths: Optional[Sequence[ClusterGroundTruth]] = None,
) -> np.ndarray:
    if rule.kind == "fixed":
        return np.full(K, float(rule.value))
    out = np.full(K, np.nan)
    for j, members in enumerate(_members(assignments, K)):
        if not members:
            continue
        if rule.kind == "safe":
            out[j] = safe_step_size([batches[i] for i in members])
        else:
            if specs is None or truths is None:
                raise ConfigurationError("the theoretical step rule needs system specs and ground truths")
            out[j] = theoretical_step_size([specs[i] for i in members], truths)
    return out


def run(
    batches: Sequence[BatchData],
    init: ModelSet,
    R: int,
    step_rule: StepRule = StepRule(),
    truths: Optional[Sequence[ClusterGroundTruth]] = None,
    labels: Optional[Sequence[int]] = None,
    specs: Optional[Sequence[SystemSpec]] = None,
) -> RunHistory:
    """Run ``R`` iterations of cluster estimation followed by model estimation.

    ``truths`` (one per cluster, aligned with ``init``) enable error tracking,
    ``labels`` (true cluster per system) enable misclassification counts.
    """
    if R < 1:
        raise ConfigurationError(f"iteration budget must be >= 1, got {R}")
    if not batches:
        raise ConfigurationError("no systems to identify")
    if truths is not None and len(truths) != init.K:
        raise ConfigurationError(f"{len(truths)} ground truths for {init.K} models")
    if labels is not None and len(labels) != len(batches):
        raise ConfigurationError(f"{len(labels)} labels for {len(batches)} systems")
    for b in batches:
        _check(b, init[0])

    K, M = init.K, len(batches)
    errors = np.full((R, K), np.nan)
    assign_idx = np.zeros((R, M), dtype=int)
    mis = np.zeros(R, dtype=int) if labels is not None else None
    steps = np.zeros((R, K))
    empty = []

    def errs(models):
        if truths is None:
            return np.full(K, np.nan)
        return np.array([spectral_error(models[j], truths[j].theta) for j in range(K)])

    initial = errs(init)
    models = init
    for r in range(R):
        assignments = [estimate_cluster(b, models) for b in batches]
        idx = [a.index for a in assignments]
        assign_idx[r] = idx
        if mis is not None:
            mis[r] = misclassification_count(idx, labels)
        empty.extend((r + 1, j) for j in range(K) if j not in idx)
        steps[r] = resolve_step_sizes(step_rule, assignments, batches, K, specs, truths)
        models = model_update_step(models, assignments, batches, steps[r])
        errors[r] = errs(models)
    return RunHistory(errors, assign_idx, mis, steps, initial, models, empty)
