"""Cluster separation, signal-to-noise ratio, error measures and assumption diagnostics."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .lti_sim import ClusterGroundTruth, SystemSpec
from .moments import state_input_covariance


@dataclass(frozen=True)
class SeparationReport:
    delta_min: float
    delta_max: float
    argmin_pair: tuple[int, int]
    argmax_pair: tuple[int, int]


def spectral_error(theta_hat, theta) -> float:
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if theta_hat.shape != theta.shape:
        raise ConfigurationError(f"shape mismatch {theta_hat.shape} vs {theta.shape}")
    return float(np.linalg.norm(theta_hat - theta, 2))


def separation(truths: Sequence[ClusterGroundTruth]) -> SeparationReport:
    if len(truths) < 2:
        raise ConfigurationError(f"separation needs at least 2 clusters, got {len(truths)}")
    dists = {
        (a, b): spectral_error(truths[a].theta, truths[b].theta)
        for a, b in itertools.combinations(range(len(truths)), 2)
    }
    lo = min(dists, key=dists.get)
    hi = max(dists, key=dists.get)
    return SeparationReport(dists[lo], dists[hi], lo, hi)


def snr(spec: SystemSpec, delta_min: float) -> float:
    """Delta_min^2 / sigma_w^2."""
    if spec.sigma_w <= 0:
        raise ConfigurationError("signal-to-noise ratio undefined for sigma_w = 0")
    return delta_min**2 / spec.sigma_w**2


def misclassification_count(assignments, true_labels) -> int:
    """Number of systems whose estimated cluster differs from the true one.

    ``assignments`` may hold plain indices or objects with an ``index`` attribute.
    """
    est = [getattr(a, "index", a) for a in assignments]
    if len(est) != len(true_labels):
        raise ConfigurationError(f"length mismatch: {len(est)} assignments, {len(true_labels)} labels")
    return int(sum(int(a) != int(b) for a, b in zip(est, true_labels)))


@dataclass
class AssumptionDiagnostics:
    """Trajectory-count and separation ratios with all unknown constants set to 1.

    Constants unknown -- informational only. A ratio above 1 means the
    condition holds with unit constants; nothing here is a pass/fail test.
    """

    trajectory_ratios: np.ndarray  # (M, T): N_i n_x / required
    misclassification_mass: float  # Delta_max * sum_i sum_t exp(...)
    separation_ratio: float  # Delta_min / (1 + misclassification_mass)
    delta_min: float
    delta_max: float
    alpha0: float
    delta: float
    note: str = field(default="constants unknown -- informational only")

    @property
    def min_trajectory_ratio(self) -> float:
        return float(self.trajectory_ratios.min())


def assumption_diagnostics(
    specs: Sequence[SystemSpec],
    truths: Sequence[ClusterGroundTruth],
    alpha0: float,
    delta: float = 0.01,
) -> AssumptionDiagnostics:
    if not 0 < alpha0 < 0.5:
        raise ConfigurationError(f"alpha0 must lie in (0, 1/2), got {alpha0}")
    sep = separation(truths)
    M = len(specs)
    T = max(s.horizon for s in specs)
    ratios = np.full((M, T), np.nan)
    mass = 0.0
    for row, spec in enumerate(specs):
        truth = truths[spec.cluster_id]
        n_x = truth.n_x
        rho = snr(spec, sep.delta_min)
        for t in range(spec.horizon):
            norm_sigma = np.linalg.norm(state_input_covariance(spec, truth, t).sigma_t, 2)
            signal = rho * norm_sigma
            factor = (signal + math.sqrt(n_x)) / (alpha0 * signal)
            required = factor**2 * math.log(M * T / delta)
            ratios[row, t] = spec.num_rollouts * n_x / required
            mass += math.exp(-spec.num_rollouts * n_x / factor**2)
    mass *= sep.delta_max
    return AssumptionDiagnostics(
        trajectory_ratios=ratios,
        misclassification_mass=mass,
        separation_ratio=sep.delta_min / (1.0 + mass),
        delta_min=sep.delta_min,
        delta_max=sep.delta_max,
        alpha0=alpha0,
        delta=delta,
    )
