"""Kohonen self-organizing map over a d-dimensional latent space.

Training follows the classic three-step iteration: find the winner cell
(competition), weight every cell by a Gaussian kernel of its distance to
the winner (cooperation), and pull all weights toward the sample
(adaptation), with exponentially decaying temperature and learning rate.

The kernel distance is measured on the 2-d map grid by default; pass
space="weight" to measure it between prototype vectors in latent space
instead (kept as an option for fidelity experiments).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


def decay_value(v0: float, v_min: float, t: float, n_iters: int) -> float:
    """Exponential decay from v0 at t=0 to v_min at t=n_iters."""
    if not (v0 > v_min > 0.0):
        raise ValueError(f"decay needs v0 > v_min > 0, got v0={v0}, v_min={v_min}")
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    tau = n_iters / math.log(v0 / v_min)
    return v0 * math.exp(-t / tau)


@dataclass(frozen=True)
class DecaySchedule:
    """Temperature and learning-rate schedules for one training run."""

    t0: float = 10.0
    t_min: float = 0.01
    eta0: float = 0.5
    eta_min: float = 0.01
    n_iters: int = 15000

    def __post_init__(self):
        if not (self.t0 > self.t_min > 0.0):
            raise ValueError("schedule needs t0 > t_min > 0")
        if not (self.eta0 > self.eta_min > 0.0):
            raise ValueError("schedule needs eta0 > eta_min > 0")
        if self.n_iters < 1:
            raise ValueError("schedule needs n_iters >= 1")

    @property
    def tau_t(self) -> float:
        return self.n_iters / math.log(self.t0 / self.t_min)

    @property
    def tau_eta(self) -> float:
        return self.n_iters / math.log(self.eta0 / self.eta_min)

    def temperature(self, t: float) -> float:
        return decay_value(self.t0, self.t_min, t, self.n_iters)

    def learning_rate(self, t: float) -> float:
        return decay_value(self.eta0, self.eta_min, t, self.n_iters)


class SomMap:
    """Square m x m grid of d-dimensional prototype vectors."""

    def __init__(self, weights: np.ndarray, seed: int | None = None):
        weights = np.asarray(weights)
        if weights.ndim != 3 or weights.shape[0] != weights.shape[1]:
            raise ValueError(f"weights must be (m, m, d), got {weights.shape}")
        if not np.all(np.isfinite(weights)):
            raise ValueError("prototype weights must be finite")
        self.weights = weights
        self.seed = seed

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[2]

    @property
    def flat(self) -> np.ndarray:
        return self.weights.reshape(self.m * self.m, self.d)

    @classmethod
    def from_samples(cls, m: int, samples: np.ndarray, seed: int = 0) -> "SomMap":
        """Initialize prototypes by drawing rows of `samples` with replacement."""
        samples = np.asarray(samples)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError("samples must be a non-empty (n, d) array")
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, samples.shape[0], size=m * m)
        return cls(samples[rows].reshape(m, m, samples.shape[1]).copy(), seed=seed)

    @classmethod
    def uniform(cls, m: int, d: int, low, high, seed: int = 0) -> "SomMap":
        """Initialize prototypes uniformly inside a (per-dimension) box."""
        rng = np.random.default_rng(seed)
        w = rng.uniform(size=(m, m, d)) * (np.asarray(high) - np.asarray(low)) + np.asarray(low)
        return cls(w, seed=seed)

    @classmethod
    def from_data_box(cls, m: int, data: np.ndarray, seed: int = 0) -> "SomMap":
        data = np.asarray(data)
        return cls.uniform(m, data.shape[1], data.min(axis=0), data.max(axis=0), seed=seed)

    @classmethod
    def compact(cls, m: int, data: np.ndarray, seed: int = 0, jitter: float = 0.05) -> "SomMap":
        """All prototypes near the data mean; the classic small-value start
        that lets the shrinking kernel unfold the map outward."""
        data = np.asarray(data)
        rng = np.random.default_rng(seed)
        w = data.mean(axis=0) + jitter * data.std(axis=0) * rng.standard_normal(
            (m, m, data.shape[1])
        )
        return cls(w.astype(data.dtype), seed=seed)

    def copy(self) -> "SomMap":
        return SomMap(self.weights.copy(), seed=self.seed)

    def cell_of(self, flat_index: int) -> tuple[int, int]:
        return divmod(int(flat_index), self.m)


def best_matching_unit(som: SomMap, z: np.ndarray) -> tuple[tuple[int, int], float]:
    """Winner cell for one latent vector, with its Euclidean distance.

    Ties break to the first cell in row-major order.
    """
    z = np.asarray(z)
    if z.shape != (som.d,):
        raise ValueError(f"latent vector must have dimension {som.d}, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("latent vector contains non-finite values")
    idx, d2 = kernels.bmu_batch(z[None, :].astype(som.weights.dtype), som.flat)
    return som.cell_of(idx[0]), float(np.sqrt(d2[0]))


def assign(som: SomMap, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized winner search: returns (flat cell indices, squared distances)."""
    Z = np.ascontiguousarray(Z, dtype=som.weights.dtype)
    if Z.ndim != 2 or Z.shape[1] != som.d:
        raise ValueError(f"expected (n, {som.d}) latents, got {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("latent vectors contain non-finite values")
    return kernels.bmu_batch(Z, som.flat)


def grid_coordinates(m: int) -> np.ndarray:
    """(m, m, 2) array of each cell's own (row, col) coordinates."""
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    return np.stack([i, j], axis=-1).astype(np.float64)


def _kernel_grid(som: SomMap, k_flat: int, temperature: float, space: str) -> np.ndarray:
    """Gaussian kernel values h for all cells against winner k, as (m, m)."""
    if space == "grid":
        ki, kj = divmod(k_flat, som.m)
        coords = grid_coordinates(som.m)
        delta2 = (coords[..., 0] - ki) ** 2 + (coords[..., 1] - kj) ** 2
    elif space == "weight":
        diff = som.weights.astype(np.float64) - som.flat[k_flat].astype(np.float64)
        delta2 = (diff ** 2).sum(axis=-1)
    else:
        raise ValueError(f"unknown kernel space {space!r}")
    return np.exp(-delta2 / float(temperature) ** 2)


def neighborhood_weight(
    som: SomMap,
    cell_i: tuple[int, int],
    cell_k: tuple[int, int],
    t: float,
    sched: DecaySchedule,
    space: str = "grid",
) -> float:
    """Kernel weight h in (0, 1] of cell_i relative to winner cell_k at step t."""
    m = som.m
    for c in (cell_i, cell_k):
        if not (0 <= c[0] < m and 0 <= c[1] < m):
            raise IndexError(f"cell {c} outside {m}x{m} grid")
    if not (0 <= t < sched.n_iters):
        raise ValueError(f"step {t} outside [0, {sched.n_iters})")
    temperature = sched.temperature(t)
    if space == "grid":
        delta2 = float((cell_i[0] - cell_k[0]) ** 2 + (cell_i[1] - cell_k[1]) ** 2)
    elif space == "weight":
        diff = som.weights[cell_i].astype(np.float64) - som.weights[cell_k].astype(np.float64)
        delta2 = float((diff ** 2).sum())
    else:
        raise ValueError(f"unknown kernel space {space!r}")
    return float(np.exp(-delta2 / temperature ** 2))


def som_train_step(
    som: SomMap,
    z: np.ndarray,
    t: int,
    sched: DecaySchedule,
    space: str = "grid",
) -> SomMap:
    """One competition/cooperation/adaptation update, in place."""
    if t >= sched.n_iters:
        raise ValueError(f"step {t} beyond schedule length {sched.n_iters}")
    z = np.asarray(z, dtype=som.weights.dtype)
    (ki, kj), _ = best_matching_unit(som, z)
    eta = sched.learning_rate(t)
    h = _kernel_grid(som, ki * som.m + kj, sched.temperature(t), space)
    factor = eta * h
    som.weights += factor[:, :, None] * (z - som.weights)
    if not np.all(np.isfinite(som.weights)):
        bad = np.argwhere(~np.isfinite(som.weights).all(axis=-1))[0]
        raise RuntimeError(f"non-finite prototype after update at cell ({bad[0]}, {bad[1]})")
    return som


def quantization_error(som: SomMap, Z: np.ndarray) -> float:
    """Mean squared Euclidean distance from each latent to its winner."""
    Z = np.asarray(Z)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise ValueError("quantization error needs a non-empty (n, d) latent set")
    _, d2 = assign(som, Z)
    return float(np.mean(d2.astype(np.float64)))


def fit_som(
    som: SomMap,
    Z: np.ndarray,
    sched: DecaySchedule,
    seed: int = 0,
    record_every: int | None = None,
    space: str = "grid",
) -> tuple[SomMap, list[tuple[int, float]]]:
    """Train by sampling Z uniformly with replacement for sched.n_iters steps.

    Records (step, quantization error) at step 0, every `record_every`
    steps, and at the end. Deterministic for a fixed seed.
    """
    Z = np.ascontiguousarray(Z, dtype=som.weights.dtype)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise ValueError("training needs a non-empty (n, d) latent set")
    if record_every is None:
        record_every = max(1, sched.n_iters // 10)
    rng = np.random.default_rng(seed)
    history = [(0, quantization_error(som, Z))]
    for t in range(sched.n_iters):
        z = Z[rng.integers(0, Z.shape[0])]
        som_train_step(som, z, t, sched, space)
        done = t + 1
        if done % record_every == 0 or done == sched.n_iters:
            history.append((done, quantization_error(som, Z)))
    return som, history
