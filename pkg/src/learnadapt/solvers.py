"""
Dual solvers: batch gradient ascent, stochastic gradient, projected SAGA
(offline), stochastic dual gradient (SDG / hot-started SDG+) and the
learn-and-adapt online SAGA.

All multipliers are projected onto the nonnegative orthant after each step.
Offline solvers work on a finite training set; online solvers consume a
``SampleStream`` one slot at a time and track physical queues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dual import DualProblem
from .network import instantaneous_cost, queue_update, service_residual
from .scenario import SampleStream, StateBatch, draw_state


class GradientTable:
    """Per-sample stored dual gradients with an exact running sum.

    The running sum is accumulated with Neumaier compensation so it stays
    within a rounding unit of the true sum of stored rows no matter how many
    replacements happen. With ``window`` set, ``add`` evicts the oldest
    entries (FIFO on insertion order) once the table holds more than
    ``window`` rows.
    """

    def __init__(self, dim: int, window: int | None = None):
        if window is not None and window < 1:
            raise ValueError("window must be a positive count")
        self.dim = dim
        self.window = window
        self.last_update: dict = {}
        self._grads: dict = {}
        self._order: list = []
        self._sum = np.zeros(dim)
        self._comp = np.zeros(dim)

    def __len__(self):
        return len(self._order)

    def __contains__(self, sample_id):
        return sample_id in self._grads

    @property
    def ids(self) -> list:
        return list(self._order)

    @property
    def running_sum(self) -> np.ndarray:
        return self._sum + self._comp

    def mean(self) -> np.ndarray:
        return self.running_sum / len(self._order)

    def stored(self, sample_id) -> np.ndarray:
        return self._grads[sample_id]

    def _accumulate(self, v):
        t = self._sum + v
        big = np.abs(self._sum) >= np.abs(v)
        self._comp += np.where(big, (self._sum - t) + v, (v - t) + self._sum)
        self._sum = t

    def add(self, sample_id, grad, k: int = 0) -> list:
        """Insert a new row; returns the ids evicted to respect the window."""
        if sample_id in self._grads:
            raise KeyError(f"sample {sample_id!r} already stored")
        grad = np.array(grad, dtype=float)
        self._grads[sample_id] = grad
        self._order.append(sample_id)
        self.last_update[sample_id] = k
        self._accumulate(grad)
        evicted = []
        while self.window is not None and len(self._order) > self.window:
            evicted.append(self.evict_oldest())
        return evicted

    def replace(self, sample_id, grad, k: int) -> np.ndarray:
        if sample_id not in self._grads:
            raise KeyError(f"sample {sample_id!r} not in gradient table")
        old = self._grads[sample_id]
        grad = np.array(grad, dtype=float)
        self._grads[sample_id] = grad
        self.last_update[sample_id] = k
        self._accumulate(grad)
        self._accumulate(-old)
        return old

    def evict_oldest(self):
        sample_id = self._order.pop(0)
        old = self._grads.pop(sample_id)
        del self.last_update[sample_id]
        self._accumulate(-old)
        return sample_id

    def pick(self, rng: np.random.Generator):
        """Sample id drawn uniformly from the stored rows."""
        return self._order[int(rng.integers(len(self._order)))]

    def exact_sum(self) -> np.ndarray:
        """Correctly rounded sum of the stored rows (audit reference)."""
        if not self._order:
            return np.zeros(self.dim)
        rows = np.array([self._grads[i] for i in self._order])
        return np.array([math.fsum(col) for col in rows.T])

    def audit(self) -> float:
        """Max absolute deviation of the running sum from the exact sum."""
        return float(np.max(np.abs(self.running_sum - self.exact_sum()), initial=0.0))

    def copy(self) -> "GradientTable":
        other = GradientTable(self.dim, self.window)
        other.last_update = dict(self.last_update)
        other._grads = dict(self._grads)  # rows are never mutated in place
        other._order = list(self._order)
        other._sum = self._sum.copy()
        other._comp = self._comp.copy()
        return other


@dataclass
class SolverTrace:
    """Per-iteration (offline) or per-slot (online) record of a solver run.

    ``lam`` is the learned multiplier in use at each step and ``gamma`` the
    multiplier actually used for allocation. SDG variants have no learned
    component, so their ``lam`` rows are zero. ``queue`` holds the physical
    queues at the end of each slot.
    """

    tag: str
    t: np.ndarray
    lam: np.ndarray
    gamma: np.ndarray | None = None
    queue: np.ndarray | None = None
    allocation: np.ndarray | None = None
    cost: np.ndarray | None = None
    residual_norm: np.ndarray | None = None
    final: np.ndarray | None = None
    stream_checksum: str | None = None

    def __len__(self):
        return len(self.t)

    def running_cost(self) -> np.ndarray:
        return np.cumsum(self.cost) / np.arange(1, len(self.cost) + 1)

    def mean_queue(self) -> float:
        """Time average over slots of the node-averaged queue length."""
        return float(self.queue.mean())


@dataclass
class OfflineResult:
    lam: np.ndarray
    table: GradientTable
    samples: object
    trace: SolverTrace
    iterations: int


@dataclass
class OnlineConfig:
    """Controls of the online phase.

    ``b`` defaults to ``sqrt(mu) * log(mu)**2`` on every node with the
    natural log (``log_base=10`` selects base 10). ``eta=None`` means the
    caller should fill in ``1 / (3 L)``; see ``default_stepsize``.
    """

    mu: float = 0.1
    K: int = 2
    n_off: int = 1000
    b: float | None = None
    window: int | None = None
    horizon: int = 5000
    eta: float | None = None
    log_base: str = "e"

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        if self.K < 0 or self.n_off < 0 or self.horizon < 0:
            raise ValueError("K, n_off and horizon must be nonnegative")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.b is not None and np.any(np.asarray(self.b) < 0):
            raise ValueError("b must be nonnegative")
        if str(self.log_base) not in ("e", "10"):
            raise ValueError("log_base must be 'e' or '10'")
        self.log_base = str(self.log_base)

    def bias(self, dim: int) -> np.ndarray:
        if self.b is not None:
            return np.broadcast_to(np.asarray(self.b, dtype=float), (dim,)).copy()
        return bias_vector(self.mu, dim, self.log_base)


def bias_vector(mu: float, dim: int, log_base: str = "e") -> np.ndarray:
    log = math.log(mu) if log_base == "e" else math.log10(mu)
    return np.full(dim, math.sqrt(mu) * log**2)


def effective_multiplier(lam, q, mu: float, b) -> np.ndarray:
    """``[lam + mu q - b]^+``: learned price plus queue correction minus bias."""
    return np.maximum(lam + mu * np.asarray(q, dtype=float) - b, 0.0)


def default_stepsize(problem: DualProblem, price_min: float) -> float:
    """``1 / (3 L)`` with ``L`` the (regularized) dual Lipschitz constant."""
    _, L, _ = problem.smoothness(price_min)
    return 1.0 / (3.0 * L)


def theoretical_rate(N: int, kappa: float) -> float:
    """Expected per-iteration contraction of SAGA's squared error."""
    if N < 1 or not kappa > 0:
        raise ValueError("need N >= 1 and kappa > 0")
    return 1.0 - min(1.0 / (4 * N), 1.0 / (3.0 * kappa))


def _as_batch(dataset):
    return dataset if isinstance(dataset, StateBatch) else StateBatch.stack(dataset)


def batch_gradient_step(problem: DualProblem, lam, dataset, eta: float) -> np.ndarray:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    g = problem.batch_gradient(lam, _as_batch(dataset))
    return np.maximum(lam + eta * g, 0.0)


def sg_step(problem: DualProblem, lam, sample, eta: float) -> np.ndarray:
    return np.maximum(lam + eta * problem.gradient(lam, sample), 0.0)


def constant_stepsize(eta: float) -> Callable[[int], float]:
    return lambda k: eta


def diminishing_stepsize(k: int) -> float:
    """``1 / sqrt(k)`` for iteration count ``k >= 1``."""
    if k < 1:
        raise ValueError("diminishing schedule starts at k = 1")
    return 1.0 / math.sqrt(k)


def saga_estimate(fresh, stored, table_mean) -> np.ndarray:
    return fresh - stored + table_mean


def saga_step(problem, table: GradientTable, lam, dataset, nu, eta: float, k: int = 0) -> np.ndarray:
    """One projected SAGA step on sample ``nu``.

    Evaluates a single fresh gradient, combines it with the stored gradient
    for ``nu`` and the table average, then overwrites the stored row.
    """
    if nu not in table:
        raise KeyError(f"sample {nu!r} not in gradient table")
    fresh = problem.gradient(lam, dataset[nu])
    g = saga_estimate(fresh, table.stored(nu), table.mean())
    table.replace(nu, fresh, k)
    return np.maximum(lam + eta * g, 0.0)


def offline_saga(
    problem: DualProblem,
    dataset,
    eta: float,
    iters: int,
    rng: np.random.Generator,
    lam0=None,
    window: int | None = None,
) -> OfflineResult:
    """Projected SAGA on a fixed training set.

    The table is filled with every sample's gradient at ``lam0`` before the
    first step (N extra evaluations). Sample ids are the dataset indices.
    """
    N = len(dataset)
    if N == 0:
        raise ValueError("empty dataset")
    lam = np.zeros(problem.dim) if lam0 is None else np.maximum(np.array(lam0, dtype=float), 0.0)
    table = GradientTable(problem.dim, window)
    init = problem.batch_gradients(lam, _as_batch(dataset))
    for n in range(N):
        table.add(n, init[n], 0)
    history = np.empty((iters + 1, problem.dim))
    history[0] = lam
    for k in range(iters):
        nu = table.pick(rng)
        lam = saga_step(problem, table, lam, dataset, nu, eta, k)
        history[k + 1] = lam
    trace = SolverTrace("offline_saga", np.arange(iters + 1), history, final=lam.copy())
    return OfflineResult(lam, table, dataset, trace, iters)


def sg_run(problem: DualProblem, dataset, iters: int, rng: np.random.Generator, stepsize, lam0=None) -> SolverTrace:
    """Stochastic gradient ascent on the empirical dual.

    ``stepsize`` is a float (constant) or a callable of the 1-based iteration.
    """
    step = constant_stepsize(stepsize) if not callable(stepsize) else stepsize
    lam = np.zeros(problem.dim) if lam0 is None else np.array(lam0, dtype=float)
    history = np.empty((iters + 1, problem.dim))
    history[0] = lam
    N = len(dataset)
    for k in range(iters):
        lam = sg_step(problem, lam, dataset[int(rng.integers(N))], step(k + 1))
        history[k + 1] = lam
    return SolverTrace("sg", np.arange(iters + 1), history, final=lam.copy())


def batch_reference(problem: DualProblem, dataset, eta: float, tol: float = 1e-10, max_iter: int = 2_000_000, lam0=None):
    """Maximize the empirical dual by batch projected gradient ascent.

    Runs until a step moves the iterate by at most ``tol`` relative to its
    norm. Returns ``(lam, iterations)``.
    """
    batch = _as_batch(dataset)
    lam = np.zeros(problem.dim) if lam0 is None else np.array(lam0, dtype=float)
    for k in range(1, max_iter + 1):
        new = np.maximum(lam + eta * problem.batch_gradient(lam, batch), 0.0)
        if np.linalg.norm(new - lam) <= tol * max(1.0, np.linalg.norm(lam)):
            return new, k
        lam = new
    raise RuntimeError("batch reference did not converge")


class _Recorder:
    def __init__(self, T, m, n):
        self.lam = np.zeros((T, m))
        self.gamma = np.empty((T, m))
        self.queue = np.empty((T, m))
        self.alloc = np.empty((T, n))
        self.cost = np.empty(T)
        self.res = np.empty(T)

    def put(self, t, lam, gamma, q, x, cost, res):
        self.lam[t] = lam
        self.gamma[t] = gamma
        self.queue[t] = q
        self.alloc[t] = x
        self.cost[t] = cost
        self.res[t] = np.linalg.norm(res)

    def trace(self, tag, final, stream):
        T = len(self.cost)
        return SolverTrace(
            tag,
            np.arange(1, T + 1),
            self.lam,
            self.gamma,
            self.queue,
            self.alloc,
            self.cost,
            self.res,
            final,
            stream.checksum,
        )


def _serve(problem: DualProblem, gamma, s, q):
    """Allocate with multiplier ``gamma``, then advance the physical queues."""
    a = problem.allocate(gamma, s)
    r = service_residual(a, s, problem.A)
    return a.flatten(), instantaneous_cost(a, s, problem.topo), r, queue_update(q, r)


def sdg_run(problem: DualProblem, stream: SampleStream, mu: float, T: int, lam0=None, tag: str = "sdg") -> SolverTrace:
    """Stochastic dual gradient with virtual queues.

    The multiplier is kept as a virtual queue ``Q`` in workload units with
    ``lam = mu * Q``; from a zero start and no regularizer, ``Q`` coincides
    with the physical queue.
    """
    m = problem.dim
    vq = np.zeros(m) if lam0 is None else np.asarray(lam0, dtype=float) / mu
    q = np.zeros(m)
    rec = _Recorder(T, m, problem.topo.num_vars)
    eps = problem.epsilon
    for t in range(T):
        s = draw_state(stream)
        lam_c = mu * vq
        x, cost, r, q = _serve(problem, lam_c, s, q)
        rec.put(t, 0.0, lam_c, q, x, cost, r)
        vq = np.maximum(vq + r - eps * lam_c, 0.0) if eps else np.maximum(vq + r, 0.0)
    return rec.trace(tag, mu * vq, stream)


def sdg_plus_run(offline: OfflineResult | None, problem: DualProblem, stream: SampleStream, mu: float, T: int) -> SolverTrace:
    """SDG hot-started at the offline multiplier; physical queues start empty."""
    lam0 = None if offline is None else offline.lam
    return sdg_run(problem, stream, mu, T, lam0, tag="sdg_plus")


def fixed_multiplier_run(lam, problem: DualProblem, stream: SampleStream, T: int, tag: str = "offline_only") -> SolverTrace:
    """Allocate every slot with a frozen multiplier; no learning, no queue feedback."""
    lam = np.asarray(lam, dtype=float)
    m = problem.dim
    q = np.zeros(m)
    rec = _Recorder(T, m, problem.topo.num_vars)
    for t in range(T):
        s = draw_state(stream)
        x, cost, r, q = _serve(problem, lam, s, q)
        rec.put(t, lam, lam, q, x, cost, r)
    return rec.trace(tag, lam.copy(), stream)


def online_saga(
    offline: OfflineResult | None,
    problem: DualProblem,
    stream: SampleStream,
    cfg: OnlineConfig,
    rng: np.random.Generator,
    q0=None,
    T: int | None = None,
) -> SolverTrace:
    """Learn-and-adapt online SAGA.

    Per slot: allocate with the effective multiplier
    ``gamma = [lam + mu q - b]^+``, advance the queues, add the new sample
    with its gradient at ``lam``, then run ``K`` SAGA steps on the grown set.
    ``offline=None`` is a cold start from ``lam = 0`` with an empty table.
    """
    if cfg.eta is None:
        raise ValueError("OnlineConfig.eta must be set (see default_stepsize)")
    T = cfg.horizon if T is None else T
    m = problem.dim
    b = cfg.bias(m)
    mu, eta = cfg.mu, cfg.eta
    if offline is None:
        lam = np.zeros(m)
        table = GradientTable(m, cfg.window)
        samples = {}
        k = 0
    else:
        lam = offline.lam.copy()
        table = offline.table.copy()
        table.window = cfg.window
        samples = {n: offline.samples[n] for n in table.ids}
        while cfg.window is not None and len(table) > cfg.window:
            samples.pop(table.evict_oldest())
        k = offline.iterations
    next_id = max(samples, default=-1) + 1
    q = np.zeros(m) if q0 is None else np.array(q0, dtype=float)
    rec = _Recorder(T, m, problem.topo.num_vars)
    for t in range(T):
        s = draw_state(stream)
        gamma = effective_multiplier(lam, q, mu, b)
        x, cost, r, q = _serve(problem, gamma, s, q)
        rec.put(t, lam, gamma, q, x, cost, r)

        samples[next_id] = s
        for gone in table.add(next_id, problem.gradient(lam, s), k):
            del samples[gone]
        next_id += 1
        for _ in range(cfg.K):
            nu = table.pick(rng)
            lam = saga_step(problem, table, lam, samples, nu, eta, k)
            k += 1
    return rec.trace("online_saga", lam.copy(), stream)
