"""Experiment configuration: YAML in, validated dataclass out.

Every validation failure names the file, the line and the offending field,
for example ``experiment.yaml:12: clusters[1].members: must be a positive integer``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from ..algorithm import StepRule
from ..errors import ConfigurationError
from ..lti_sim import ClusterGroundTruth, SystemSpec

MODES = ("clustered", "pooled", "single_agent", "sweep_N", "sweep_cluster_size")
INIT_KINDS = ("auto", "warm", "zero")


@dataclass
class ClusterDef:
    A: list
    B: list
    members: int
    sigma_x: float
    sigma_u: float
    sigma_w: float
    rollouts: Optional[int] = None  # overrides the global rollout count

    @property
    def truth(self) -> ClusterGroundTruth:
        return ClusterGroundTruth(np.array(self.A, dtype=float), np.array(self.B, dtype=float))


@dataclass
class ExperimentConfig:
    clusters: list
    rollouts: int
    horizon: int
    iterations: int
    mode: str = "clustered"
    step_rule: str = "fixed"
    step_value: Optional[float] = 1e-3
    alpha0: float = 0.25
    init: str = "auto"
    seed: int = 0
    seeds: int = 20
    sweep_rollouts: list = field(default_factory=lambda: [5, 20, 100])
    sweep_sizes: list = field(default_factory=lambda: [1, 4, 16])
    output: Optional[str] = None
    name: str = "experiment"
    allow_degenerate: bool = False

    @property
    def K(self) -> int:
        return len(self.clusters)

    @property
    def M(self) -> int:
        return sum(c.members for c in self.clusters)

    @property
    def member_counts(self) -> list[int]:
        return [c.members for c in self.clusters]

    @property
    def truths(self) -> list[ClusterGroundTruth]:
        return [c.truth for c in self.clusters]

    @property
    def labels(self) -> list[int]:
        return [j for j, c in enumerate(self.clusters) for _ in range(c.members)]

    @property
    def step(self) -> StepRule:
        return StepRule(self.step_rule, self.step_value)

    def specs(self, rollouts: Optional[int] = None) -> list[SystemSpec]:
        """One spec per system, clusters laid out consecutively in config order."""
        out = []
        for j, c in enumerate(self.clusters):
            N = rollouts if rollouts is not None else (c.rollouts or self.rollouts)
            for _ in range(c.members):
                out.append(SystemSpec(len(out), j, c.sigma_x, c.sigma_u, c.sigma_w, N, self.horizon))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        clusters = []
        for c in d.pop("clusters"):
            if c["rollouts"] is None:
                del c["rollouts"]
            clusters.append(c)
        out = {
            "name": d.pop("name"),
            "mode": d.pop("mode"),
            "M": self.M,
            "rollouts": d.pop("rollouts"),
            "horizon": d.pop("horizon"),
            "iterations": d.pop("iterations"),
            "step": {"rule": d.pop("step_rule"), "value": d.pop("step_value")},
        }
        out.update(d)
        out["sweep"] = {"rollouts": out.pop("sweep_rollouts"), "sizes": out.pop("sweep_sizes")}
        if out["output"] is None:
            del out["output"]
        out["clusters"] = clusters
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def _line_index(node, path=(), index=None) -> dict:
    """Map key paths such as ('clusters', 1, 'members') to 1-based source lines."""
    if index is None:
        index = {}
    index[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_index(v, path + (k.value,), index)
            index[path + (k.value,)] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), index)
    return index


class _Validator:
    def __init__(self, source: str, lines: dict):
        self.source = source
        self.lines = lines

    def fail(self, path: tuple, msg: str):
        probe = path
        while probe not in self.lines and probe:
            probe = probe[:-1]
        line = self.lines.get(probe, 1)
        name = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in path).lstrip(".") or "<root>"
        raise ConfigurationError(f"{self.source}:{line}: {name}: {msg}")

    def get(self, d: dict, path: tuple, key: str, required=True, default=None):
        if not isinstance(d, dict):
            self.fail(path, "expected a mapping")
        if key not in d:
            if required:
                self.fail(path, f"missing required field {key!r}")
            return default
        return d[key]

    def pos_int(self, value, path, allow_zero=False):
        if isinstance(value, bool) or not isinstance(value, int) or value < (0 if allow_zero else 1):
            self.fail(path, f"must be a {'non-negative' if allow_zero else 'positive'} integer, got {value!r}")
        return value

    def real(self, value, path, positive=False, nonneg=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(path, f"must be a finite number, got {value!r}")
        if positive and value <= 0:
            self.fail(path, f"must be positive, got {value!r}")
        if nonneg and value < 0:
            self.fail(path, f"must be non-negative, got {value!r}")
        return float(value)

    def matrix(self, value, path, rows=None, cols=None):
        if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
            self.fail(path, "must be a non-empty nested list of numbers")
        width = len(value[0])
        for i, row in enumerate(value):
            if len(row) != width or width == 0:
                self.fail(path + (i,), f"ragged matrix: row {i} has {len(row)} entries, expected {width}")
            for k, x in enumerate(row):
                self.real(x, path + (i, k))
        if rows is not None and len(value) != rows:
            self.fail(path, f"expected {rows} rows, got {len(value)}")
        if cols is not None and width != cols:
            self.fail(path, f"expected {cols} columns, got {width}")
        return [[float(x) for x in row] for row in value]


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ConfigurationError(f"{source}:{line}: parse error: {exc}") from exc
    if node is None or not isinstance(raw, dict):
        raise ConfigurationError(f"{source}:1: <root>: expected a mapping of configuration fields")
    v = _Validator(source, _line_index(node))
    known = {
        "name", "mode", "rollouts", "horizon", "iterations", "step", "alpha0", "init", "seed",
        "seeds", "sweep", "output", "allow_degenerate", "clusters", "M",
    }
    for key in raw:
        if key not in known:
            v.fail((key,), "unknown field")

    mode = v.get(raw, (), "mode", required=False, default="clustered")
    if mode not in MODES:
        v.fail(("mode",), f"invalid mode {mode!r}; expected one of {', '.join(MODES)}")
    allow_degenerate = v.get(raw, (), "allow_degenerate", required=False, default=False)
    if not isinstance(allow_degenerate, bool):
        v.fail(("allow_degenerate",), "must be true or false")

    rollouts = v.pos_int(v.get(raw, (), "rollouts"), ("rollouts",))
    horizon = v.pos_int(v.get(raw, (), "horizon"), ("horizon",))
    iterations = v.pos_int(v.get(raw, (), "iterations"), ("iterations",))

    step = v.get(raw, (), "step", required=False, default={"rule": "fixed", "value": 1e-3})
    rule = v.get(step, ("step",), "rule", required=False, default="fixed")
    if rule not in ("fixed", "theoretical", "safe"):
        v.fail(("step", "rule"), f"unknown step rule {rule!r}")
    value = v.get(step, ("step",), "value", required=(rule == "fixed"))
    if value is not None:
        value = v.real(value, ("step", "value"), positive=True)

    alpha0 = v.real(v.get(raw, (), "alpha0", required=False, default=0.25), ("alpha0",))
    if not 0 < alpha0 < 0.5:
        v.fail(("alpha0",), f"must lie strictly between 0 and 1/2, got {alpha0}")
    init = v.get(raw, (), "init", required=False, default="auto")
    if init not in INIT_KINDS:
        v.fail(("init",), f"must be one of {INIT_KINDS}, got {init!r}")
    seed = v.pos_int(v.get(raw, (), "seed", required=False, default=0), ("seed",), allow_zero=True)
    seeds = v.pos_int(v.get(raw, (), "seeds", required=False, default=20), ("seeds",))

    sweep = v.get(raw, (), "sweep", required=False, default={}) or {}
    sweep_rollouts = v.get(sweep, ("sweep",), "rollouts", required=False, default=[5, 20, 100])
    sweep_sizes = v.get(sweep, ("sweep",), "sizes", required=False, default=[1, 4, 16])
    for key, seq in (("rollouts", sweep_rollouts), ("sizes", sweep_sizes)):
        if not isinstance(seq, list) or not seq:
            v.fail(("sweep", key), "must be a non-empty list of positive integers")
        for i, x in enumerate(seq):
            v.pos_int(x, ("sweep", key, i))

    output = v.get(raw, (), "output", required=False)
    if output is not None and not isinstance(output, str):
        v.fail(("output",), "must be a path string")
    name = str(v.get(raw, (), "name", required=False, default="experiment"))

    raw_clusters = v.get(raw, (), "clusters")
    if not isinstance(raw_clusters, list) or not raw_clusters:
        v.fail(("clusters",), "must be a non-empty list of cluster definitions")
    clusters = []
    n_x = n_u = None
    for j, c in enumerate(raw_clusters):
        p = ("clusters", j)
        A = v.matrix(v.get(c, p, "A"), p + ("A",), rows=n_x, cols=n_x)
        if len(A) != len(A[0]):
            v.fail(p + ("A",), f"must be square, got {len(A)}x{len(A[0])}")
        n_x = len(A)
        B = v.matrix(v.get(c, p, "B"), p + ("B",), rows=n_x, cols=n_u)
        n_u = len(B[0])
        members = v.pos_int(v.get(c, p, "members"), p + ("members",))
        sig = {}
        for s in ("sigma_x", "sigma_u", "sigma_w"):
            sig[s] = v.real(v.get(c, p, s), p + (s,), positive=not allow_degenerate, nonneg=True)
        c_roll = v.get(c, p, "rollouts", required=False)
        if c_roll is not None:
            v.pos_int(c_roll, p + ("rollouts",))
        for key in c:
            if key not in ("A", "B", "members", "sigma_x", "sigma_u", "sigma_w", "rollouts"):
                v.fail(p + (key,), "unknown field")
        clusters.append(ClusterDef(A, B, members, rollouts=c_roll, **sig))

    total = sum(c.members for c in clusters)
    if "M" in raw:
        M = v.pos_int(raw["M"], ("M",))
        if M != total:
            v.fail(("M",), f"cluster member counts sum to {total}, but M = {M}")
    if init == "warm" and len(clusters) < 2:
        v.fail(("init",), "warm initialisation needs at least two clusters")

    return ExperimentConfig(
        clusters=clusters,
        rollouts=rollouts,
        horizon=horizon,
        iterations=iterations,
        mode=mode,
        step_rule=rule,
        step_value=value,
        alpha0=alpha0,
        init=init,
        seed=seed,
        seeds=seeds,
        sweep_rollouts=list(sweep_rollouts),
        sweep_sizes=list(sweep_sizes),
        output=output,
        name=name,
        allow_degenerate=allow_degenerate,
    )


def bundled_config_path(name: str) -> Path:
    return Path(str(resources.files("clusysid") / "configs" / f"{name}.yaml"))


def load_config(path) -> ExperimentConfig:
    """Load a config file; a bare name such as ``paper_sec4`` selects a bundled config."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_config_path(str(path))
        if bundled.exists():
            p = bundled
    return parse_config(p.read_text(), source=p.name)


def dump_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(config.dumps())
