"""
Mapping-node / data-center network model.

Holds the static topology, the per-slot state sample and allocation types,
the signed node-incidence matrix, the quadratic operating cost and the queue
recursion. Queue and multiplier vectors always use the ordering
``[MN_1, ..., MN_J, DC_1, ..., DC_I]``; allocation vectors use
``[routed[0, :], ..., routed[J-1, :], processed]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml


@dataclass
class Topology:
    """Static description of an I-DC / J-MN network.

    Parameters
    ----------
    num_dc, num_mn : int
        Number of data centers ``I`` and mapping nodes ``J``.
    bandwidth : ndarray, shape (J, I)
        Per-link routing cap; 0 means MN j and DC i are not connected.
    dc_capacity : ndarray, shape (I,)
        Per-slot processing cap of each DC.
    dist_cost : ndarray, shape (J, I)
        Quadratic coefficient of the distribution cost on each link.
        Entries on absent links are ignored and normalized to 1.
    efficiency : ndarray, shape (I,)
        Power-per-squared-workload factor of each DC.
    """

    num_dc: int
    num_mn: int
    bandwidth: np.ndarray
    dc_capacity: np.ndarray
    dist_cost: np.ndarray
    efficiency: np.ndarray

    def __post_init__(self):
        I, J = int(self.num_dc), int(self.num_mn)
        if I < 1 or J < 1:
            raise ValueError("need at least one DC and one MN")
        self.num_dc, self.num_mn = I, J
        self.bandwidth = np.array(self.bandwidth, dtype=float).reshape(J, I)
        self.dc_capacity = np.array(self.dc_capacity, dtype=float).reshape(I)
        self.efficiency = np.array(self.efficiency, dtype=float).reshape(I)
        cost = np.array(self.dist_cost, dtype=float).reshape(J, I)

        if np.any(~np.isfinite(self.bandwidth)) or np.any(self.bandwidth < 0):
            raise ValueError("bandwidths must be finite and nonnegative")
        if np.any(~np.isfinite(self.dc_capacity)) or np.any(self.dc_capacity <= 0):
            raise ValueError("DC capacities must be positive")
        if np.any(~(self.efficiency > 0)) or np.any(~np.isfinite(self.efficiency)):
            raise ValueError("efficiency factors must be positive")
        links = self.bandwidth > 0
        if not np.all(links.any(axis=1)):
            raise ValueError("every mapping node needs at least one outgoing link")
        with np.errstate(invalid="ignore"):
            bad = links & ~(np.isfinite(cost) & (cost > 0))
        if np.any(bad):
            raise ValueError("dist_cost must be finite and positive on every link")
        # absent links carry no flow; keep the coefficient finite so 0 * c stays 0
        self.dist_cost = np.where(links, cost, 1.0)

    @property
    def links(self) -> np.ndarray:
        return self.bandwidth > 0

    @property
    def num_nodes(self) -> int:
        return self.num_dc + self.num_mn

    @property
    def num_vars(self) -> int:
        return self.num_dc * self.num_mn + self.num_dc

    @property
    def upper(self) -> np.ndarray:
        """Box upper bound: bandwidths (row-major J x I) then capacities."""
        return np.concatenate([self.bandwidth.ravel(), self.dc_capacity])

    def to_dict(self) -> dict:
        return {
            "num_dc": self.num_dc,
            "num_mn": self.num_mn,
            "bandwidth": self.bandwidth.tolist(),
            "dc_capacity": self.dc_capacity.tolist(),
            "efficiency": self.efficiency.tolist(),
            "dist_cost": np.where(self.links, self.dist_cost, 0.0).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, dist_cost_numerator: float = 40.0) -> "Topology":
        """Build from config keys; ``dist_cost`` defaults to numerator / bandwidth."""
        I, J = int(d["num_dc"]), int(d["num_mn"])
        bw = np.array(d["bandwidth"], dtype=float).reshape(J, I)
        if d.get("dist_cost") is not None:
            cost = np.array(d["dist_cost"], dtype=float).reshape(J, I)
        else:
            with np.errstate(divide="ignore"):
                cost = np.where(bw > 0, dist_cost_numerator / np.where(bw > 0, bw, 1.0), 0.0)
        return cls(I, J, bw, d["dc_capacity"], cost, d["efficiency"])


def load_topology(path) -> Topology:
    with open(path) as fh:
        d = yaml.safe_load(fh)
    if "topology" in d:
        d = d["topology"]
    return Topology.from_dict(d)


def save_topology(topo: Topology, path) -> None:
    Path(path).write_text(yaml.safe_dump({"topology": topo.to_dict()}, sort_keys=False))


@dataclass
class StateSample:
    """One realization of the random state: prices, renewables, arrivals."""

    price: np.ndarray
    renewable: np.ndarray
    arrivals: np.ndarray

    def __post_init__(self):
        self.price = np.asarray(self.price, dtype=float)
        self.renewable = np.asarray(self.renewable, dtype=float)
        self.arrivals = np.asarray(self.arrivals, dtype=float)
        if np.any(self.price <= 0):
            raise ValueError("prices must be positive")
        if np.any(self.renewable < 0) or np.any(self.arrivals < 0):
            raise ValueError("renewables and arrivals must be nonnegative")


def exogenous_arrivals(s: StateSample, num_dc: int) -> np.ndarray:
    """Zero-padded arrival vector ``[v_1..v_J, 0..0]``."""
    return np.concatenate([s.arrivals, np.zeros(num_dc)])


@dataclass
class Allocation:
    """Per-slot decision: routed workloads (J x I) and processed workloads (I)."""

    routed: np.ndarray
    processed: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.routed), np.ravel(self.processed)])

    @classmethod
    def from_vector(cls, x, topo: Topology) -> "Allocation":
        x = np.asarray(x, dtype=float)
        n_links = topo.num_dc * topo.num_mn
        return cls(x[:n_links].reshape(topo.num_mn, topo.num_dc).copy(), x[n_links:].copy())

    @classmethod
    def zeros(cls, topo: Topology) -> "Allocation":
        return cls(np.zeros((topo.num_mn, topo.num_dc)), np.zeros(topo.num_dc))

    def is_feasible(self, topo: Topology, atol: float = 0.0) -> bool:
        return bool(
            np.all(self.routed >= -atol)
            and np.all(self.routed <= topo.bandwidth + atol)
            and np.all(self.processed >= -atol)
            and np.all(self.processed <= topo.dc_capacity + atol)
        )


def build_incidence(topo: Topology) -> np.ndarray:
    """Signed node-incidence matrix of shape (I+J, IJ+I).

    MN row j carries -1 on each outgoing link column; DC row i carries +1 on
    each incoming link column and -1 on its own processing column.
    """
    I, J = topo.num_dc, topo.num_mn
    A = np.zeros((I + J, I * J + I))
    for j in range(J):
        for i in range(I):
            if topo.bandwidth[j, i] > 0:
                col = j * I + i
                A[j, col] = -1.0
                A[J + i, col] = 1.0
    for i in range(I):
        A[J + i, I * J + i] = -1.0
    return A


def instantaneous_cost(a: Allocation, s: StateSample, topo: Topology) -> float:
    """Energy transaction cost plus quadratic distribution cost for one slot.

    Negative when renewable surplus is sold back.
    """
    energy = s.price * (topo.efficiency * a.processed**2 - s.renewable)
    routed = np.where(topo.links, a.routed, 0.0)
    return float(energy.sum() + (topo.dist_cost * routed**2).sum())


def service_residual(a: Allocation, s: StateSample, A: np.ndarray) -> np.ndarray:
    """Net queue inflow ``A x + c`` for one slot."""
    x = a.flatten()
    c = np.zeros(A.shape[0])
    c[: s.arrivals.size] = s.arrivals
    return A @ x + c


def queue_update(q: np.ndarray, residual: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(q, dtype=float) + residual, 0.0)


def spectral_radius(M, tol: float = 1e-10, max_iter: int = 200_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Stops when the eigen-residual ``||M x - rho x||`` falls below ``tol * rho``,
    which bounds the relative error of the Rayleigh quotient by ``tol``.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = M @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        rho = float(x @ y)
        if np.linalg.norm(y - rho * x) <= tol * abs(rho):
            return rho
        x = y / ny
    raise RuntimeError(f"power iteration did not converge in {max_iter} iterations")


def smoothness_constants(topo: Topology, price_min: float, A: np.ndarray | None = None):
    """Worst-case strong-convexity modulus of the cost and dual Lipschitz constant.

    Returns ``(sigma, L)`` with ``sigma`` twice the smallest quadratic
    coefficient over the state support and ``L = rho(A^T A) / sigma``.
    """
    if not price_min > 0:
        raise ValueError("price support must be bounded away from zero")
    energy_coef = price_min * topo.efficiency
    link_coef = topo.dist_cost[topo.links]
    coefs = np.concatenate([energy_coef, link_coef])
    if np.any(coefs <= 0):
        raise ValueError("cost is not strongly convex (zero quadratic coefficient)")
    sigma = 2.0 * float(coefs.min())
    if A is None:
        A = build_incidence(topo)
    rho = spectral_radius(A.T @ A)
    return sigma, rho / sigma
