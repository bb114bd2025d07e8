"""
Lagrangian machinery for the per-slot allocation problem.

For the quadratic costs the Lagrangian separates per coordinate, so the
minimizer over the box is a clipped ratio (``primal_minimizer``). The dual
value and gradient follow from it. ``oracle_primal_minimizer`` solves the same
box-constrained problem by projected gradient descent and exists only to
cross-check the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (
    Allocation,
    StateSample,
    Topology,
    build_incidence,
    instantaneous_cost,
    service_residual,
    smoothness_constants,
)


@dataclass(frozen=True)
class RegularizedDual:
    """Strong-concavity modulus subtracted from the dual as (eps/2)||lam||^2."""

    epsilon: float = 0.0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")


_UNREGULARIZED = RegularizedDual(0.0)


def _split(lam, topo: Topology):
    lam = np.asarray(lam, dtype=float)
    return lam[: topo.num_mn], lam[topo.num_mn :]


def primal_minimizer(lam, s: StateSample, topo: Topology) -> Allocation:
    """Unique minimizer of the instantaneous Lagrangian over the box.

    Routes ``clip((lam_mn[j] - lam_dc[i]) / (2 c_ji), 0, B_ji)`` and processes
    ``clip(lam_dc[i] / (2 alpha_i e_i), 0, D_i)``.
    """
    lam_mn, lam_dc = _split(lam, topo)
    routed = np.clip((lam_mn[:, None] - lam_dc[None, :]) / (2.0 * topo.dist_cost), 0.0, topo.bandwidth)
    processed = np.clip(lam_dc / (2.0 * s.price * topo.efficiency), 0.0, topo.dc_capacity)
    return Allocation(routed, processed)


def lagrangian(a: Allocation, lam, s: StateSample, topo: Topology, A: np.ndarray) -> float:
    return instantaneous_cost(a, s, topo) + float(np.dot(lam, service_residual(a, s, A)))


def dual_value(lam, s: StateSample, topo: Topology, A: np.ndarray, reg: RegularizedDual | None = None) -> float:
    reg = reg or _UNREGULARIZED
    lam = np.asarray(lam, dtype=float)
    a = primal_minimizer(lam, s, topo)
    return lagrangian(a, lam, s, topo, A) - 0.5 * reg.epsilon * float(lam @ lam)


def dual_gradient(lam, s: StateSample, topo: Topology, A: np.ndarray, reg: RegularizedDual | None = None) -> np.ndarray:
    """``A x*(lam) + c - eps * lam``."""
    reg = reg or _UNREGULARIZED
    lam = np.asarray(lam, dtype=float)
    g = service_residual(primal_minimizer(lam, s, topo), s, A)
    if reg.epsilon:
        g = g - reg.epsilon * lam
    return g


def batch_dual_gradients(lam, batch, topo: Topology, reg: RegularizedDual | None = None) -> np.ndarray:
    """Per-sample dual gradients for a stacked batch, shape (N, I+J).

    Same closed form as ``dual_gradient`` with the residual written out per
    node instead of through the incidence matrix.
    """
    reg = reg or _UNREGULARIZED
    lam = np.asarray(lam, dtype=float)
    lam_mn, lam_dc = _split(lam, topo)
    routed = np.clip((lam_mn[:, None] - lam_dc[None, :]) / (2.0 * topo.dist_cost), 0.0, topo.bandwidth)
    processed = np.clip(lam_dc / (2.0 * batch.price * topo.efficiency), 0.0, topo.dc_capacity)
    n = len(batch)
    g = np.empty((n, topo.num_nodes))
    g[:, : topo.num_mn] = batch.arrivals - routed.sum(axis=1)
    g[:, topo.num_mn :] = routed.sum(axis=0) - processed
    if reg.epsilon:
        g -= reg.epsilon * lam
    return g


def _cost_gradient(x, s: StateSample, topo: Topology, n_links: int) -> np.ndarray:
    # Gradient of the quadratic cost in the flattened variable.
    g = np.empty_like(x)
    g[:n_links] = 2.0 * topo.dist_cost.ravel() * x[:n_links]
    g[n_links:] = 2.0 * s.price * topo.efficiency * x[n_links:]
    return g


def oracle_primal_minimizer(
    lam,
    s: StateSample,
    topo: Topology,
    A: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 1_000_000,
) -> Allocation:
    """Projected gradient descent on the instantaneous Lagrangian (test oracle).

    Uses stepsize ``1 / L_tilde`` with ``L_tilde`` the Lipschitz constant of
    the cost gradient, stopping once an iterate moves by at most ``tol``.
    Raises ``RuntimeError`` if ``max_iter`` is exhausted.
    """
    lam = np.asarray(lam, dtype=float)
    n_links = topo.num_dc * topo.num_mn
    upper = topo.upper
    lin = A.T @ lam
    L_tilde = 2.0 * max(float(np.max(s.price * topo.efficiency)), float(topo.dist_cost[topo.links].max()))
    step = 1.0 / L_tilde
    x = np.zeros(A.shape[1])
    for _ in range(max_iter):
        x_new = np.clip(x - step * (_cost_gradient(x, s, topo, n_links) + lin), 0.0, upper)
        if np.linalg.norm(x_new - x) <= tol:
            return Allocation.from_vector(x_new, topo)
        x = x_new
    raise RuntimeError("projected gradient oracle did not converge")


class DualProblem:
    """A topology, its incidence matrix and a regularizer, bundled.

    Solvers take one of these instead of threading ``(topo, A, reg)`` through
    every call.
    """

    def __init__(self, topo: Topology, reg: RegularizedDual | None = None):
        self.topo = topo
        self.A = build_incidence(topo)
        self.reg = reg or _UNREGULARIZED

    @property
    def dim(self) -> int:
        return self.topo.num_nodes

    @property
    def epsilon(self) -> float:
        return self.reg.epsilon

    def allocate(self, lam, s: StateSample) -> Allocation:
        return primal_minimizer(lam, s, self.topo)

    def gradient(self, lam, s: StateSample) -> np.ndarray:
        return dual_gradient(lam, s, self.topo, self.A, self.reg)

    def value(self, lam, s: StateSample) -> float:
        return dual_value(lam, s, self.topo, self.A, self.reg)

    def batch_gradients(self, lam, batch) -> np.ndarray:
        return batch_dual_gradients(lam, batch, self.topo, self.reg)

    def batch_gradient(self, lam, batch) -> np.ndarray:
        """Gradient of the empirical (sample-average) dual."""
        return self.batch_gradients(lam, batch).mean(axis=0)

    def empirical_value(self, lam, batch) -> float:
        return float(np.mean([self.value(lam, s) for s in batch]))

    def smoothness(self, price_min: float):
        """``(sigma, L, kappa)`` for this problem, ``L`` including the regularizer."""
        sigma, L = smoothness_constants(self.topo, price_min, self.A)
        L_reg = L + self.reg.epsilon
        kappa = L_reg / self.reg.epsilon if self.reg.epsilon > 0 else float("inf")
        return sigma, L_reg, kappa
