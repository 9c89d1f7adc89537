"""Test surfaces and source/target/test dataset assembly.

Two processes are simulated on the unit square:

* ``stationary``: a zero-mean Matern (nu = 1) Gaussian process observed with
  nugget noise;
* ``nonstationary``: a fixed deterministic ridge along the diagonal plus a
  tiny amount of noise.

Source data sit on a regular 70 x 70 grid.  Target data sit on a jittered
``sqrt(N) x sqrt(N)`` grid and test data are uniform random; the three
location sets never overlap.  For the stationary process all three roles see
one realization of the same surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import isqrt, sqrt

import numpy as np

from .gp import MaternParams, cov_matrix, sample_gp, sample_gp_conditional
from .numerics import CholeskyFactor, cholesky, derive_child

PROCESSES = ("stationary", "nonstationary")
NONSTATIONARY_NOISE_VAR = 1e-6

# child-stream indices below a replicate's state
_TARGET_LOCS, _TEST_LOCS, _SIGNAL, _NOISE = 0, 1, 2, 3


def nonstationary_f(loc):
    """``sin(30 (m - 0.9)^4) cos(2 (m - 0.9)) + (m - 0.9) / 2`` with ``m`` the coordinate mean."""
    loc = np.asarray(loc, dtype=np.float64)
    m = 0.5 * (loc[..., 0] + loc[..., 1]) - 0.9
    out = np.sin(30.0 * m**4) * np.cos(2.0 * m) + 0.5 * m
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Dataset:
    role: str
    process: str
    locations: np.ndarray
    signal: np.ndarray
    observed: np.ndarray
    lineage: tuple = ()

    def __post_init__(self):
        n = len(self.locations)
        if len(self.signal) != n or len(self.observed) != n:
            raise ValueError("locations, signal and observed must have equal length")

    def __len__(self):
        return len(self.locations)


@dataclass(frozen=True)
class ReplicateConfig:
    target_size: int = 25
    source_size: int = 4900
    test_size: int = 2000
    matern: MaternParams = field(default_factory=MaternParams)
    nonstationary_noise_var: float = NONSTATIONARY_NOISE_VAR
    target_jitter: float = 0.1

    def __post_init__(self):
        for name in ("target_size", "source_size"):
            n = getattr(self, name)
            if n < 1 or isqrt(n) ** 2 != n:
                raise ValueError(f"{name} must be a positive perfect square, got {n}")
        if self.test_size < 1:
            raise ValueError("test_size must be positive")


@dataclass(frozen=True)
class SourceSurface:
    """The source dataset plus what is needed to extend its realization."""

    data: Dataset
    factor: CholeskyFactor | None = None


def grid_locations(n: int) -> np.ndarray:
    """``sqrt(n) x sqrt(n)`` grid spanning [0, 1]^2 including the boundary, row-major."""
    m = isqrt(n)
    axis = np.linspace(0.0, 1.0, m) if m > 1 else np.array([0.5])
    s1, s2 = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([s1.ravel(), s2.ravel()])


def target_locations(n: int, jitter: float, state: np.random.Generator) -> np.ndarray:
    """Cell-centred ``sqrt(n) x sqrt(n)`` grid, each point shifted uniformly by up to ``jitter`` cells."""
    m = isqrt(n)
    axis = (np.arange(m) + 0.5) / m
    s1, s2 = np.meshgrid(axis, axis, indexing="ij")
    base = np.column_stack([s1.ravel(), s2.ravel()])
    return base + state.uniform(-jitter / m, jitter / m, size=base.shape)


def _disjoint(*sets: np.ndarray) -> bool:
    rows = np.concatenate(sets)
    return len(np.unique(rows, axis=0)) == len(rows)


def _nonstationary(role, locs, noise_var, state, lineage):
    signal = nonstationary_f(locs)
    observed = signal + sqrt(noise_var) * state.standard_normal(len(locs))
    return Dataset(role, "nonstationary", locs, signal, observed, lineage)


def make_source(process: str, cfg: ReplicateConfig, state: np.random.Generator) -> SourceSurface:
    """Source data on the regular grid; for the stationary process also keep its factor."""
    locs = grid_locations(cfg.source_size)
    lineage = tuple(state.bit_generator.seed_seq.spawn_key)
    if process == "nonstationary":
        return SourceSurface(_nonstationary("source", locs, cfg.nonstationary_noise_var, state, lineage))
    if process != "stationary":
        raise ValueError(f"unknown process {process!r}")
    p = cfg.matern
    factor = cholesky(cov_matrix(locs, p))
    signal = factor.lower @ derive_child(state, _SIGNAL).standard_normal(len(locs))
    observed = signal + sqrt(p.tau2) * derive_child(state, _NOISE).standard_normal(len(locs))
    return SourceSurface(Dataset("source", process, locs, signal, observed, lineage), factor)


def make_replicate(process: str, cfg: ReplicateConfig, state: np.random.Generator,
                   source: SourceSurface | None = None):
    """Build ``(source, target, test)`` datasets for one replicate.

    Without ``source`` a fresh source is drawn and, for the stationary process,
    one realization is sampled jointly over the union of all locations.  With
    ``source`` the target and test signal are drawn conditionally on the
    source signal, which yields the same joint law while keeping the source
    surface fixed across replicates.
    """
    if process not in PROCESSES:
        raise ValueError(f"unknown process {process!r}")
    lineage = tuple(state.bit_generator.seed_seq.spawn_key)
    target_locs = target_locations(cfg.target_size, cfg.target_jitter, derive_child(state, _TARGET_LOCS))
    test_locs = derive_child(state, _TEST_LOCS).uniform(0.0, 1.0, size=(cfg.test_size, 2))
    src_locs = source.data.locations if source is not None else grid_locations(cfg.source_size)
    if not _disjoint(src_locs, target_locs, test_locs):
        raise RuntimeError("sampled location sets overlap")

    if process == "nonstationary":
        noise = derive_child(state, _NOISE)
        if source is None:
            source = SourceSurface(_nonstationary("source", src_locs, cfg.nonstationary_noise_var, noise, lineage))
        target = _nonstationary("target", target_locs, cfg.nonstationary_noise_var, noise, lineage)
        test = _nonstationary("test", test_locs, cfg.nonstationary_noise_var, noise, lineage)
        return source.data, target, test

    p = cfg.matern
    n_t = len(target_locs)
    new_locs = np.concatenate([target_locs, test_locs])
    if source is None:
        all_locs = np.concatenate([src_locs, new_locs])
        signal, _ = sample_gp(all_locs, p, derive_child(state, _SIGNAL))
        src_signal, new_signal = signal[: len(src_locs)], signal[len(src_locs):]
        noise = derive_child(state, _NOISE).standard_normal(len(all_locs))
        src_noise, new_noise = noise[: len(src_locs)], noise[len(src_locs):]
        src = Dataset("source", process, src_locs, src_signal, src_signal + sqrt(p.tau2) * src_noise, lineage)
    else:
        src = source.data
        new_signal = sample_gp_conditional(src.locations, src.signal, new_locs, p,
                                           derive_child(state, _SIGNAL), known_factor=source.factor)
        new_noise = derive_child(state, _NOISE).standard_normal(len(new_locs))
    new_obs = new_signal + sqrt(p.tau2) * new_noise
    target = Dataset("target", process, target_locs, new_signal[:n_t], new_obs[:n_t], lineage)
    test = Dataset("test", process, test_locs, new_signal[n_t:], new_obs[n_t:], lineage)
    return src, target, test
