"""Reference estimators: one system alone, everyone pooled into one model, and least squares."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .algorithm import Assignment, ModelSet, RunHistory, StepRule, model_update_step, run
from .errors import ConfigurationError, DegeneracyError
from .lti_sim import BatchData, ClusterGroundTruth
from .metrics import spectral_error
from .moments import SINGULAR_RTOL


def single_agent_run(
    batch: BatchData, init, eta: float, R: int, truth: ClusterGroundTruth | None = None
) -> RunHistory:
    """Gradient descent on one system's own cost, i.e. the clustered run with M = K = 1."""
    return run(
        [batch],
        ModelSet((np.asarray(init, dtype=np.float64),)),
        R,
        StepRule("fixed", eta),
        truths=None if truth is None else [truth],
    )


def pooled_run(
    batches: Sequence[BatchData],
    init,
    eta: float,
    R: int,
    truths: Sequence[ClusterGroundTruth] | None = None,
) -> RunHistory:
    """One shared model updated with the average gradient of all systems.

    Errors are measured against every cluster's ground truth, so
    ``errors[:, j]`` is the shared model's distance to cluster ``j``.
    """
    if R < 1:
        raise ConfigurationError(f"iteration budget must be >= 1, got {R}")
    M = len(batches)
    models = ModelSet((np.asarray(init, dtype=np.float64),))
    everyone = [Assignment(0, 1)] * M
    K = 1 if truths is None else len(truths)

    def errs(m):
        if truths is None:
            return np.full(K, np.nan)
        return np.array([spectral_error(m[0], t.theta) for t in truths])

    initial = errs(models)
    errors = np.empty((R, K))
    for r in range(R):
        models = model_update_step(models, everyone, batches, [eta])
        errors[r] = errs(models)
    return RunHistory(
        errors=errors,
        assignments=np.zeros((R, M), dtype=int),
        misclassified=None,
        step_sizes=np.full((R, K), float(eta)),
        initial_errors=initial,
        final=models,
    )


def _solve(XZt: np.ndarray, ZZt: np.ndarray) -> np.ndarray:
    ZZt = 0.5 * (ZZt + ZZt.T)
    eig = np.linalg.eigvalsh(ZZt)
    if eig[-1] <= 0 or eig[0] < SINGULAR_RTOL * eig[-1]:
        raise DegeneracyError(f"Z Z^T is singular (lambda_min={eig[0]:.3e}, lambda_max={eig[-1]:.3e})")
    # Theta = X Z^T (Z Z^T)^{-1}  <=>  (Z Z^T) Theta^T = Z X^T
    L = np.linalg.cholesky(ZZt)
    Y = np.linalg.solve(L, XZt.T)
    return np.linalg.solve(L.T, Y).T


def least_squares(batch: BatchData) -> np.ndarray:
    return _solve(batch.X @ batch.Z.T, batch.Z @ batch.Z.T)


def least_squares_pooled(batches: Sequence[BatchData]) -> np.ndarray:
    if not batches:
        raise ConfigurationError("least squares over an empty set of systems")
    XZt = sum(b.X @ b.Z.T for b in batches)
    ZZt = sum(b.Z @ b.Z.T for b in batches)
    return _solve(XZt, ZZt)
