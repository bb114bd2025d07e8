"""
Seeded generation of topologies and i.i.d. state streams.

Random numbers come from NumPy's ``PCG64`` bit generator. A state sample is
drawn as one block of ``2I + J`` standard uniforms laid out as
``[price, renewable, arrivals]`` and affinely mapped onto each support, so a
batch of N samples consumes exactly the same bits as N single draws.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .network import StateSample, Topology

SMALL_EFFICIENCY = (1.2, 1.3, 1.4, 1.5)
SMALL_CAPACITY = (200.0, 150.0, 100.0, 100.0)


def _support(pair, name):
    lo, hi = (float(v) for v in pair)
    if not (0 <= lo <= hi):
        raise ValueError(f"{name} must satisfy 0 <= lo <= hi, got {pair}")
    return lo, hi


@dataclass
class ScenarioConfig:
    """Distributions and fixed parameters of an experiment.

    ``efficiency_list`` and ``capacity_list`` are tiled cyclically when
    shorter than ``num_dc``; the large 20-DC network is built that way from
    the four published values.
    """

    num_dc: int = 4
    num_mn: int = 4
    price_support: tuple = (10.0, 30.0)
    renewable_support: tuple = (10.0, 50.0)
    arrival_support: tuple = (10.0, 150.0)
    bandwidth_support: tuple = (10.0, 100.0)
    dist_cost_numerator: float = 40.0
    efficiency_list: Sequence[float] = SMALL_EFFICIENCY
    capacity_list: Sequence[float] = SMALL_CAPACITY
    seed: int = 0

    def __post_init__(self):
        self.price_support = _support(self.price_support, "price_support")
        self.renewable_support = _support(self.renewable_support, "renewable_support")
        self.arrival_support = _support(self.arrival_support, "arrival_support")
        self.bandwidth_support = _support(self.bandwidth_support, "bandwidth_support")
        if self.price_support[0] <= 0:
            raise ValueError("price support must have a positive lower end")
        if self.num_dc < 1 or self.num_mn < 1:
            raise ValueError("need at least one DC and one MN")
        if len(self.efficiency_list) == 0 or len(self.capacity_list) == 0:
            raise ValueError("efficiency_list and capacity_list must be nonempty")
        self.efficiency_list = tuple(float(v) for v in self.efficiency_list)
        self.capacity_list = tuple(float(v) for v in self.capacity_list)
        self.seed = int(self.seed)

    @property
    def efficiency(self) -> np.ndarray:
        return np.resize(np.array(self.efficiency_list), self.num_dc)

    @property
    def capacity(self) -> np.ndarray:
        return np.resize(np.array(self.capacity_list), self.num_dc)

    @property
    def state_dim(self) -> int:
        return 2 * self.num_dc + self.num_mn

    def to_dict(self) -> dict:
        return {
            "num_dc": self.num_dc,
            "num_mn": self.num_mn,
            "price_support": list(self.price_support),
            "renewable_support": list(self.renewable_support),
            "arrival_support": list(self.arrival_support),
            "bandwidth_support": list(self.bandwidth_support),
            "dist_cost_numerator": self.dist_cost_numerator,
            "efficiency_list": list(self.efficiency_list),
            "capacity_list": list(self.capacity_list),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = cls.__dataclass_fields__.keys()
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)


def default_config_small(seed: int = 0) -> ScenarioConfig:
    return ScenarioConfig(num_dc=4, num_mn=4, seed=seed)


def default_config_large(seed: int = 0) -> ScenarioConfig:
    return ScenarioConfig(num_dc=20, num_mn=20, seed=seed)


def draw_topology(cfg: ScenarioConfig, rng: np.random.Generator) -> Topology:
    """Full bipartite topology with i.i.d. uniform bandwidths and 40/B link costs."""
    lo, hi = cfg.bandwidth_support
    bw = lo + (hi - lo) * rng.random((cfg.num_mn, cfg.num_dc))
    return Topology(
        cfg.num_dc,
        cfg.num_mn,
        bw,
        cfg.capacity,
        cfg.dist_cost_numerator / bw,
        cfg.efficiency,
    )


@dataclass
class StateBatch:
    """Stacked state samples; behaves as a read-only sequence of StateSample."""

    price: np.ndarray
    renewable: np.ndarray
    arrivals: np.ndarray

    def __len__(self) -> int:
        return self.price.shape[0]

    def __getitem__(self, n) -> StateSample:
        if isinstance(n, slice):
            return StateBatch(self.price[n], self.renewable[n], self.arrivals[n])
        return StateSample(self.price[n], self.renewable[n], self.arrivals[n])

    def __iter__(self) -> Iterator[StateSample]:
        for n in range(len(self)):
            yield self[n]

    @classmethod
    def stack(cls, samples) -> "StateBatch":
        samples = list(samples)
        return cls(
            np.array([s.price for s in samples]),
            np.array([s.renewable for s in samples]),
            np.array([s.arrivals for s in samples]),
        )


@dataclass
class SampleStream:
    """Deterministic i.i.d. state source.

    Two streams built from equal ``(cfg, seed)`` yield identical sequences.
    ``checksum`` hashes every value handed out so far, which lets callers
    assert that paired runs consumed the same states.
    """

    cfg: ScenarioConfig
    seed: object = None
    t: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)
    _hash: object = field(init=False, repr=False)

    def __post_init__(self):
        seed = self.cfg.seed if self.seed is None else self.seed
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._hash = hashlib.sha256()

    @property
    def checksum(self) -> str:
        return self._hash.hexdigest()

    def _draw(self, n: int) -> StateBatch:
        I, J = self.cfg.num_dc, self.cfg.num_mn
        u = self._rng.random((n, 2 * I + J))
        self._hash.update(u.tobytes())
        self.t += n

        def scale(block, support):
            lo, hi = support
            return lo + (hi - lo) * block

        return StateBatch(
            scale(u[:, :I], self.cfg.price_support),
            scale(u[:, I : 2 * I], self.cfg.renewable_support),
            scale(u[:, 2 * I :], self.cfg.arrival_support),
        )


def draw_state(stream: SampleStream) -> StateSample:
    return stream._draw(1)[0]


def generate_batch(stream: SampleStream, n: int) -> StateBatch:
    """Draw ``n`` i.i.d. samples (a training set); advances the stream counter by ``n``."""
    if n < 1:
        raise ValueError("a training batch needs at least one sample")
    return stream._draw(int(n))


def experiment_seeds(seed: int) -> dict:
    """Independent child seeds for one experiment.

    Keys: ``topology``, ``training``, ``states``, ``solver``. The same root seed
    always yields the same children.
    """
    children = np.random.SeedSequence(int(seed)).spawn(4)
    return dict(zip(("topology", "training", "states", "solver"), children))
