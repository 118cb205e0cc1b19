"""Closed-form second moments of the state-input pairs z_t = [x_t; u_t]."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DegeneracyError
from .lti_sim import ClusterGroundTruth, SystemSpec

SINGULAR_RTOL = 1e-10

Truths = Union[ClusterGroundTruth, Sequence[ClusterGroundTruth], Mapping[int, ClusterGroundTruth]]


@dataclass(frozen=True)
class ImpulseBlocks:
    G: np.ndarray  # [A^{t-1}B ... AB B]
    F: np.ndarray  # [A^{t-1} ... A I]
    t: int


@dataclass(frozen=True)
class StateInputCovariance:
    sigma_t: np.ndarray
    t: int


def impulse_blocks(A, B, t: int) -> ImpulseBlocks:
    """Input and noise maps from (u_0..u_{t-1}) and (w_0..w_{t-1}) to x_t.

    For ``t == 0`` both blocks are empty (n_x x 0), so that the covariance of
    z_0 comes out of the same formula as every other time step.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or B.ndim != 2 or B.shape[0] != A.shape[0]:
        raise ConfigurationError(f"incompatible shapes A{A.shape}, B{B.shape}")
    if t < 0:
        raise ConfigurationError(f"t must be non-negative, got {t}")
    n_x = A.shape[0]
    if t == 0:
        return ImpulseBlocks(np.zeros((n_x, 0)), np.zeros((n_x, 0)), 0)
    powers = [np.eye(n_x)]
    for _ in range(t - 1):
        powers.append(A @ powers[-1])
    powers.reverse()  # A^{t-1}, ..., A, I
    G = np.hstack([P @ B for P in powers])
    F = np.hstack(powers)
    return ImpulseBlocks(G, F, t)


def state_input_covariance(spec: SystemSpec, truth: ClusterGroundTruth, t: int) -> StateInputCovariance:
    if t < 0:
        raise ConfigurationError(f"t must be non-negative, got {t}")
    if t > spec.horizon:
        raise ConfigurationError(f"t={t} exceeds horizon {spec.horizon}")
    A, B = truth.A, truth.B
    n_x, n_u = truth.n_x, truth.n_u
    blocks = impulse_blocks(A, B, t)
    At = np.linalg.matrix_power(A, t)
    state = (
        spec.sigma_u**2 * blocks.G @ blocks.G.T
        + spec.sigma_w**2 * blocks.F @ blocks.F.T
        + spec.sigma_x**2 * At @ At.T
    )
    sigma = np.zeros((n_x + n_u, n_x + n_u))
    sigma[:n_x, :n_x] = 0.5 * (state + state.T)
    sigma[n_x:, n_x:] = spec.sigma_u**2 * np.eye(n_u)
    return StateInputCovariance(sigma, t)


@lru_cache(maxsize=4096)
def _moment_sum(spec: SystemSpec, truth: ClusterGroundTruth) -> np.ndarray:
    total = sum(state_input_covariance(spec, truth, t).sigma_t for t in range(spec.horizon))
    total = spec.num_rollouts * total
    total.setflags(write=False)
    return total


def _truth_for(spec: SystemSpec, truth: Truths) -> ClusterGroundTruth:
    if isinstance(truth, ClusterGroundTruth):
        return truth
    return truth[spec.cluster_id]


def moment_sum(specs: Sequence[SystemSpec], truth: Truths) -> np.ndarray:
    """sum_i N_i sum_{t<T} Sigma_t^{(i)} over the given systems.

    ``truth`` is either one ground truth shared by every system or a
    collection indexed by ``spec.cluster_id``.
    """
    specs = sorted(specs, key=lambda s: s.system_id)
    if not specs:
        raise ConfigurationError("moment sum over an empty set of systems")
    total = np.zeros_like(_moment_sum(specs[0], _truth_for(specs[0], truth)))
    for s in specs:
        total = total + _moment_sum(s, _truth_for(s, truth))
    return total


def theoretical_step_size(cluster_specs: Sequence[SystemSpec], truth: Truths) -> float:
    """|C| / lambda_min(sum_{i in C} N_i sum_{t<T} Sigma_t^{(i)})."""
    S = moment_sum(cluster_specs, truth)
    eig = np.linalg.eigvalsh(0.5 * (S + S.T))
    if eig[0] < SINGULAR_RTOL * eig[-1] or eig[-1] <= 0:
        raise DegeneracyError(
            f"moment sum is singular (lambda_min={eig[0]:.3e}, lambda_max={eig[-1]:.3e})"
        )
    return len(cluster_specs) / float(eig[0])


def suggested_iterations(delta_min: float, eps: float) -> int:
    """Iteration budget R >= 2 + log(delta_min / (4 eps)), never below 2."""
    if delta_min <= 0 or eps <= 0:
        raise ConfigurationError("delta_min and eps must be positive")
    return max(2, int(np.ceil(2 + np.log(delta_min / (4 * eps)))))
