"""Uniform interior grids on an interval with homogeneous exterior condition.

Solutions live on the interior nodes only; the value outside the interval is
identically zero, so the two endpoints never carry unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Grid:
    """Interior nodes of a uniform partition of (a, b).

    ``nodes`` holds the N interior points a + h, ..., b - h with
    h = (b - a) / (N + 1). Endpoint values are fixed to zero by the
    exterior condition and are not stored.
    """

    a: float
    b: float
    n: int
    h: float
    nodes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))


def build_grid(a: float, b: float, n: int) -> Grid:
    """Build the uniform interior grid with ``n`` nodes on (a, b).

    Raises ParameterError if the interval is degenerate or ``n`` < 2.
    """
    a = float(a)
    b = float(b)
    if not np.isfinite(a) or not np.isfinite(b) or b <= a:
        raise ParameterError(f"need a finite interval with b > a, got ({a}, {b})")
    if int(n) != n or n < 2:
        raise ParameterError(f"need an integer node count >= 2, got {n}")
    n = int(n)
    h = (b - a) / (n + 1)
    nodes = a + h * np.arange(1, n + 1, dtype=float)
    return Grid(a=a, b=b, n=n, h=h, nodes=nodes)


def boundary_distance(grid: Grid) -> np.ndarray:
    """Distance from each interior node to the nearer endpoint."""
    return np.minimum(grid.nodes - grid.a, grid.b - grid.nodes)
