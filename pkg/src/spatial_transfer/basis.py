"""Wendland radial basis and the multi-resolution knot embedding.

A location in the unit square is expanded into one Wendland bump per knot.
Knots sit on rectangular grids of increasing density; each grid has its own
support radius so coarse levels capture broad structure and fine levels local
detail.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, EmptySpec

# 3x3 + 5x5 + 7x7 + 7x8 = 139 basis functions
DEFAULT_LEVELS = ((3, 3), (5, 5), (7, 7), (7, 8))
SUPPORT_FACTOR = 2.5


def wendland(d):
    """Wendland function ``(1-d)^6 (35 d^2 + 18 d + 3) / 3`` on [0, 1], zero beyond."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise DomainError("wendland requires d >= 0")
    u = np.clip(1.0 - d, 0.0, None)
    out = u**6 * (35.0 * d * d + 18.0 * d + 3.0) / 3.0
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class KnotLevel:
    rows: int
    cols: int
    theta: float
    knots: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return self.rows * self.cols


def _axis(n: int) -> np.ndarray:
    if n == 1:
        return np.array([0.5])
    return np.arange(n) / (n - 1)


def knot_spacing(rows: int, cols: int) -> float:
    """The coarser of the two axis spacings (1 for a single-knot axis)."""
    return max(1.0 / (rows - 1) if rows > 1 else 1.0, 1.0 / (cols - 1) if cols > 1 else 1.0)


def make_level(rows: int, cols: int, theta: float | None = None) -> KnotLevel:
    if rows < 1 or cols < 1:
        raise ValueError(f"grid must have at least one row and column, got {rows}x{cols}")
    if theta is None:
        theta = SUPPORT_FACTOR * knot_spacing(rows, cols)
    if not theta > 0:
        raise ValueError(f"support radius must be positive, got {theta}")
    s1, s2 = np.meshgrid(_axis(rows), _axis(cols), indexing="ij")
    knots = np.column_stack([s1.ravel(), s2.ravel()])
    knots.setflags(write=False)
    return KnotLevel(rows, cols, float(theta), knots)


class MultiResolutionBasis:
    """Ordered stack of knot levels, coarse to fine."""

    def __init__(self, levels: Sequence[KnotLevel]):
        if not levels:
            raise EmptySpec("a basis needs at least one level")
        self.levels = tuple(levels)
        self.knots = np.concatenate([lv.knots for lv in self.levels])
        self.thetas = np.concatenate([np.full(lv.count, lv.theta) for lv in self.levels])
        self.knots.setflags(write=False)
        self.thetas.setflags(write=False)

    @property
    def total_dim(self) -> int:
        return self.knots.shape[0]

    def spec(self) -> list[dict]:
        return [{"rows": lv.rows, "cols": lv.cols, "theta": lv.theta} for lv in self.levels]

    def __repr__(self):
        grids = ", ".join(f"{lv.rows}x{lv.cols}@{lv.theta:.4g}" for lv in self.levels)
        return f"MultiResolutionBasis({grids}; dim={self.total_dim})"


def build_basis(level_spec: Iterable = DEFAULT_LEVELS, scaled: bool = True) -> MultiResolutionBasis:
    """Build a basis from ``(rows, cols)`` or ``(rows, cols, theta)`` records.

    Records may also be mappings with ``rows``, ``cols`` and optional
    ``theta``.  A missing theta defaults to 2.5 knot spacings; with
    ``scaled=False`` it defaults to 1, so distances enter the Wendland
    function unscaled.
    """
    levels = []
    for rec in level_spec:
        if isinstance(rec, dict):
            rows, cols, theta = rec["rows"], rec["cols"], rec.get("theta")
        else:
            rows, cols, *rest = rec
            theta = rest[0] if rest else None
        if theta is None and not scaled:
            theta = 1.0
        levels.append(make_level(int(rows), int(cols), theta))
    return MultiResolutionBasis(levels)


def embed_batch(locs, basis: MultiResolutionBasis) -> np.ndarray:
    """Design matrix of shape ``(n, basis.total_dim)``."""
    locs = np.asarray(locs, dtype=np.float64).reshape(-1, 2)
    diff = locs[:, None, :] - basis.knots[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return wendland(dist / basis.thetas)


def embed(loc, basis: MultiResolutionBasis) -> np.ndarray:
    return embed_batch(np.asarray(loc, dtype=np.float64).reshape(1, 2), basis)[0]
