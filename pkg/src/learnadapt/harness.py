"""
Experiment orchestration: paired solver comparisons, parameter sweeps and
CSV emission.

Every solver in a comparison reads its own ``SampleStream`` built from the
same child seed, so all of them see the same state sequence; the stream
checksums are compared after each run to make sure of it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .dual import DualProblem, RegularizedDual
from .network import Topology
from .scenario import (
    SampleStream,
    ScenarioConfig,
    default_config_small,
    draw_topology,
    experiment_seeds,
    generate_batch,
)
from .solvers import (
    OfflineResult,
    OnlineConfig,
    SolverTrace,
    default_stepsize,
    fixed_multiplier_run,
    offline_saga,
    online_saga,
    sdg_plus_run,
    sdg_run,
)

SOLVERS = ("sdg", "sdg_plus", "online_saga", "offline_only")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``epsilon`` is the dual regularizer; the string ``"mu"`` ties it to the
    online stepsize ``mu``. ``seed`` is the root of all randomness
    (topology, training set, state stream and solver sampling).
    """

    scenario: ScenarioConfig = field(default_factory=default_config_small)
    topology: Topology | None = None
    solvers: tuple = ("online_saga", "sdg_plus", "sdg")
    online: OnlineConfig = field(default_factory=OnlineConfig)
    epsilon: float | str = 0.0
    mu_values: tuple = (0.05, 0.1, 0.2)
    k_values: tuple = (1, 2, 4, 8)
    n_off_values: tuple = (1000,)
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.solvers, str):
            self.solvers = tuple(s.strip() for s in self.solvers.split(",") if s.strip())
        self.solvers = tuple(self.solvers)
        if not self.solvers:
            raise ValueError("select at least one solver")
        unknown = [s for s in self.solvers if s not in SOLVERS]
        if unknown:
            raise ValueError(f"unknown solvers {unknown}; choose from {SOLVERS}")
        if isinstance(self.epsilon, str) and self.epsilon != "mu":
            raise ValueError("epsilon must be a number or 'mu'")
        if not isinstance(self.epsilon, str) and not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        self.mu_values = tuple(float(m) for m in self.mu_values)
        self.k_values = tuple(int(k) for k in self.k_values)
        self.n_off_values = tuple(int(n) for n in self.n_off_values)
        self.seed = int(self.seed)
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.topology is not None and (
            self.topology.num_dc != self.scenario.num_dc or self.topology.num_mn != self.scenario.num_mn
        ):
            raise ValueError("topology dimensions disagree with the scenario")

    def regularizer(self, mu: float | None = None) -> RegularizedDual:
        if self.epsilon == "mu":
            return RegularizedDual(self.online.mu if mu is None else mu)
        return RegularizedDual(float(self.epsilon))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d or {})
        sweep = d.pop("sweep", {}) or {}
        kw = {}
        scen = d.pop("scenario", None)
        kw["scenario"] = ScenarioConfig.from_dict(scen) if scen else default_config_small()
        topo = d.pop("topology", None)
        if topo is not None:
            kw["topology"] = Topology.from_dict(topo, kw["scenario"].dist_cost_numerator)
        online = d.pop("online", None)
        if online:
            kw["online"] = OnlineConfig(**online)
        for key, name in (("mu", "mu_values"), ("K", "k_values"), ("n_off", "n_off_values")):
            if key in sweep:
                kw[name] = sweep.pop(key)
        if sweep:
            raise ValueError(f"unknown sweep keys: {sorted(sweep)}")
        for key in ("solvers", "epsilon", "out_dir", "seed"):
            if key in d:
                kw[key] = d.pop(key)
        if d:
            raise ValueError(f"unknown config keys: {sorted(d)}")
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))


@dataclass
class MetricsRow:
    t: int
    solver: str
    avg_cost: float
    avg_queue: float
    queues: np.ndarray
    gamma_gap: float


@dataclass
class Experiment:
    """Topology, dual problem and seeds resolved from a config."""

    cfg: ExperimentConfig
    topo: Topology
    problem: DualProblem
    seeds: dict

    @property
    def price_min(self) -> float:
        return self.cfg.scenario.price_support[0]

    def stream(self) -> SampleStream:
        return SampleStream(self.cfg.scenario, seed=self.seeds["states"])

    def solver_rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seeds["solver"]))

    def online_config(self) -> OnlineConfig:
        online = self.cfg.online
        if online.eta is None:
            online = replace(online, eta=default_stepsize(self.problem, self.price_min))
        return online

    def train(self, online: OnlineConfig, rng) -> OfflineResult | None:
        """Offline SAGA over ``n_off`` training samples for ``K * n_off`` iterations.

        With ``K = 0`` the budget is ``n_off`` iterations so the frozen
        multiplier is still a trained one. Returns None when ``n_off = 0``.
        """
        if online.n_off == 0:
            return None
        train_stream = SampleStream(self.cfg.scenario, seed=self.seeds["training"])
        data = generate_batch(train_stream, online.n_off)
        iters = max(online.K, 1) * online.n_off
        return offline_saga(self.problem, data, online.eta, iters, rng)


def setup(cfg: ExperimentConfig, mu: float | None = None) -> Experiment:
    seeds = experiment_seeds(cfg.seed)
    topo = cfg.topology
    if topo is None:
        topo = draw_topology(cfg.scenario, np.random.Generator(np.random.PCG64(seeds["topology"])))
    return Experiment(cfg, topo, DualProblem(topo, cfg.regularizer(mu)), seeds)


def run_comparison(cfg: ExperimentConfig, horizon: int | None = None) -> dict:
    """Run every selected solver on the same state sequence.

    Returns ``{solver: SolverTrace}`` in the order of ``cfg.solvers``.
    """
    exp = setup(cfg)
    online = exp.online_config()
    T = online.horizon if horizon is None else int(horizon)
    rng = exp.solver_rng()
    offline = exp.train(online, rng)
    traces = {}
    for name in cfg.solvers:
        stream = exp.stream()
        if name == "sdg":
            traces[name] = sdg_run(exp.problem, stream, online.mu, T)
        elif name == "sdg_plus":
            traces[name] = sdg_plus_run(offline, exp.problem, stream, online.mu, T)
        elif name == "online_saga":
            traces[name] = online_saga(offline, exp.problem, stream, online, rng, T=T)
        else:
            lam = np.zeros(exp.problem.dim) if offline is None else offline.lam
            traces[name] = fixed_multiplier_run(lam, exp.problem, stream, T)
    check_paired(traces)
    return traces


def check_paired(traces: dict) -> None:
    sums = {t.stream_checksum for t in traces.values()}
    if len(sums) > 1:
        raise RuntimeError("solvers consumed different state sequences")


def metrics_from_trace(trace: SolverTrace) -> list:
    avg_cost = trace.running_cost()
    avg_queue = trace.queue.mean(axis=1)
    gap = np.linalg.norm(trace.gamma - trace.lam, axis=1)
    return [
        MetricsRow(int(trace.t[n]), trace.tag, float(avg_cost[n]), float(avg_queue[n]), trace.queue[n], float(gap[n]))
        for n in range(len(trace))
    ]


def summarize(trace: SolverTrace) -> dict:
    """Final time-average cost and time-average node-mean queue."""
    return {"avg_cost": float(trace.running_cost()[-1]), "avg_queue": trace.mean_queue()}


def _fmt(v) -> str:
    return "%.12g" % v


def emit_csv(rows, path, num_nodes: int | None = None) -> None:
    """Write metrics rows with 12 significant digits and ``\\n`` line endings.

    ``num_nodes`` sizes the header when ``rows`` is empty.
    """
    rows = list(rows)
    if rows:
        num_nodes = len(rows[0].queues)
    elif num_nodes is None:
        raise ValueError("num_nodes is required to write an empty file")
    header = ["t", "solver", "avg_cost", "avg_queue"] + [f"q_{n + 1}" for n in range(num_nodes)] + ["gamma_gap"]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            if len(r.queues) != num_nodes:
                raise ValueError("all rows must have the same number of queues")
            w.writerow([r.t, r.solver, _fmt(r.avg_cost), _fmt(r.avg_queue)] + [_fmt(q) for q in r.queues] + [_fmt(r.gamma_gap)])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        nq = len(header) - 5
        return [
            MetricsRow(int(r[0]), r[1], float(r[2]), float(r[3]), np.array([float(v) for v in r[4 : 4 + nq]]), float(r[-1]))
            for r in reader
        ]


def write_table(rows: list, path) -> None:
    """Write a list of flat dicts (sweep results) as CSV."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.writer(fh, lineterminator="\n")
        keys = list(rows[0])
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r[k]) if isinstance(r[k], float) else r[k] for k in keys])


def sweep_mu(cfg: ExperimentConfig, horizon: int | None = None) -> list:
    """One comparison per ``mu`` with a cold start (``n_off = 0``, ``K = 2``)."""
    if not cfg.mu_values:
        raise ValueError("mu sweep needs at least one value")
    out = []
    for mu in cfg.mu_values:
        point = replace(cfg, online=replace(cfg.online, mu=mu, n_off=0, K=2))
        for name, trace in run_comparison(point, horizon).items():
            out.append({"mu": mu, "solver": name, **summarize(trace)})
    return out


def sweep_k(cfg: ExperimentConfig, horizon: int | None = None) -> list:
    """Online SAGA for each ``K`` on shared streams; ``K = 0`` freezes the offline multiplier."""
    if not cfg.k_values:
        raise ValueError("K sweep needs at least one value")
    out = []
    for K in cfg.k_values:
        point = replace(cfg, solvers=("online_saga",), online=replace(cfg.online, K=K))
        trace = run_comparison(point, horizon)["online_saga"]
        out.append({"K": K, **summarize(trace)})
    return out
