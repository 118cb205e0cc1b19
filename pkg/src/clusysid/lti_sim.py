"""Rollout generation for x_{t+1} = A x_t + B u_t + w_t and batch-matrix assembly.

Batch column layout: inside one rollout the columns run backwards in time
(``x_T ... x_1`` for X, ``z_{T-1} ... z_0`` for Z and ``w_{T-1} ... w_0`` for W),
and rollouts are concatenated in increasing order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

_DATA_STREAM = 0
_INIT_STREAM = 1


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ClusterGroundTruth:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _readonly(np.atleast_2d(self.A))
        B = _readonly(np.atleast_2d(self.B))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigurationError(f"A must be square, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ConfigurationError(f"B must have {A.shape[0]} rows, got shape {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ConfigurationError("system matrices must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @classmethod
    def from_theta(cls, theta, n_x: int) -> "ClusterGroundTruth":
        theta = np.asarray(theta, dtype=np.float64)
        return cls(theta[:, :n_x], theta[:, n_x:])

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def theta(self) -> np.ndarray:
        return np.hstack([self.A, self.B])


@dataclass(frozen=True)
class SystemSpec:
    """Per-system sampling configuration.

    Zero standard deviations are accepted as degenerate Gaussians (useful for
    noiseless oracle tests); the experiment config loader rejects them unless
    explicitly allowed.
    """

    system_id: int
    cluster_id: int
    sigma_x: float
    sigma_u: float
    sigma_w: float
    num_rollouts: int
    horizon: int

    def __post_init__(self):
        for name in ("sigma_x", "sigma_u", "sigma_w"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigurationError(f"{name} must be a non-negative finite number, got {v}")
        if self.num_rollouts < 1:
            raise ConfigurationError(f"num_rollouts must be >= 1, got {self.num_rollouts}")
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        if self.system_id < 0 or self.cluster_id < 0:
            raise ConfigurationError("system_id and cluster_id must be non-negative")


@dataclass(frozen=True)
class Rollout:
    states: np.ndarray  # (T+1, n_x)
    inputs: np.ndarray  # (T, n_u)
    noises: np.ndarray  # (T, n_x)

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True, eq=False)
class BatchData:
    X: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    column_order: str = field(default="time-descending within rollout, rollouts ascending")

    def __post_init__(self):
        X, Z, W = (_readonly(np.atleast_2d(m)) for m in (self.X, self.Z, self.W))
        if not (X.shape[1] == Z.shape[1] == W.shape[1]):
            raise ConfigurationError(
                f"X, Z, W column counts differ: {X.shape[1]}, {Z.shape[1]}, {W.shape[1]}"
            )
        if W.shape[0] != X.shape[0] or Z.shape[0] < X.shape[0]:
            raise ConfigurationError(f"incompatible row counts X{X.shape} Z{Z.shape} W{W.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "W", W)

    @property
    def n_x(self) -> int:
        return self.X.shape[0]

    @property
    def n_u(self) -> int:
        return self.Z.shape[0] - self.X.shape[0]

    @property
    def num_columns(self) -> int:
        return self.X.shape[1]


def system_rng(master_seed: int, system_id: int) -> np.random.Generator:
    """Independent stream for one system; unaffected by how many other systems exist."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(_DATA_STREAM, system_id)))


def init_rng(master_seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(_INIT_STREAM,)))


def _check_dims(spec: SystemSpec, truth: ClusterGroundTruth):
    if not isinstance(truth, ClusterGroundTruth):
        raise ConfigurationError(f"expected ClusterGroundTruth, got {type(truth).__name__}")
    if spec.horizon < 1 or spec.num_rollouts < 1:
        raise ConfigurationError("spec must have positive horizon and rollout count")


def _draw(spec: SystemSpec, truth: ClusterGroundTruth, num: int, rng: np.random.Generator):
    n_x, n_u, T = truth.n_x, truth.n_u, spec.horizon
    x0 = rng.standard_normal((num, n_x)) * spec.sigma_x
    U = rng.standard_normal((num, T, n_u)) * spec.sigma_u
    W = rng.standard_normal((num, T, n_x)) * spec.sigma_w
    states = np.empty((num, T + 1, n_x))
    states[:, 0] = x0
    At, Bt = truth.A.T, truth.B.T
    for t in range(T):
        states[:, t + 1] = states[:, t] @ At + U[:, t] @ Bt + W[:, t]
    return states, U, W


def sample_rollout(spec: SystemSpec, truth: ClusterGroundTruth, rng: np.random.Generator) -> Rollout:
    _check_dims(spec, truth)
    states, U, W = _draw(spec, truth, 1, rng)
    return Rollout(states=states[0], inputs=U[0], noises=W[0])


def batch_from_rollouts(rollouts) -> BatchData:
    xs, zs, ws = [], [], []
    for ro in rollouts:
        xs.append(ro.states[:0:-1].T)
        zs.append(np.hstack([ro.states[:-1], ro.inputs])[::-1].T)
        ws.append(ro.noises[::-1].T)
    return BatchData(np.hstack(xs), np.hstack(zs), np.hstack(ws))


def collect_batches(spec: SystemSpec, truth: ClusterGroundTruth, rng: np.random.Generator) -> BatchData:
    """Draw ``spec.num_rollouts`` independent rollouts and stack them into (X, Z, W).

    With ``num_rollouts == 1`` this consumes the generator exactly like
    :func:`sample_rollout`.
    """
    _check_dims(spec, truth)
    N, T = spec.num_rollouts, spec.horizon
    states, U, W = _draw(spec, truth, N, rng)
    # (N, T, .) -> reverse time -> (., N*T)
    X = states[:, :0:-1].reshape(N * T, truth.n_x).T
    Z = np.concatenate([states[:, -2::-1], U[:, ::-1]], axis=2).reshape(N * T, -1).T
    Wb = W[:, ::-1].reshape(N * T, truth.n_x).T
    return BatchData(X, Z, Wb)


def verify_batch_relation(batch: BatchData, theta) -> float:
    """Frobenius norm of X - theta Z - W."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (batch.n_x, batch.Z.shape[0]):
        raise ConfigurationError(
            f"theta shape {theta.shape} does not match batch ({batch.n_x}, {batch.Z.shape[0]})"
        )
    return float(np.linalg.norm(batch.X - theta @ batch.Z - batch.W))
