"""Finite Taylor series of the nonlinearity: V(x,z) = sum_{k=2..K} V_k(x) z^k / k!.

The series starts at k = 2, so V(x,0) and its z-derivative at 0 vanish by
construction. Coefficient fields live on the computation grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Grid2D, check_field


@dataclass(frozen=True)
class PotentialSeries:
    """Coefficient fields V_k for k = 2..kmax (coeffs[k-2] stores V_k)."""

    kmax: int
    coeffs: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if self.kmax < 2:
            raise ValueError("series must have kmax >= 2")
        if len(self.coeffs) != self.kmax - 1:
            raise ValueError("need one coefficient field per k = 2..kmax")
        size = self.coeffs[0].shape
        for a in self.coeffs:
            if a.shape != size or not np.all(np.isfinite(a)):
                raise ValueError("coefficient fields must share the grid and be finite")
            a.flags.writeable = False

    @classmethod
    def zero(cls, grid: Grid2D, kmax: int = 2) -> "PotentialSeries":
        return cls(kmax, tuple(np.zeros(grid.num_nodes) for _ in range(kmax - 1)))

    @classmethod
    def from_coefficients(cls, grid: Grid2D, fields: dict[int, np.ndarray]) -> "PotentialSeries":
        """Build a series from {k: V_k field}; missing orders are zero."""
        if not fields:
            return cls.zero(grid)
        kmax = max(fields)
        if min(fields) < 2:
            raise ValueError("coefficient orders start at k = 2")
        coeffs = []
        for k in range(2, kmax + 1):
            a = fields.get(k)
            coeffs.append(check_field(a, grid).copy() if a is not None
                          else np.zeros(grid.num_nodes))
        return cls(kmax, tuple(coeffs))

    def with_coefficient(self, k: int, a: np.ndarray) -> "PotentialSeries":
        """Return a copy with V_k replaced (extending kmax if needed)."""
        if k < 2:
            raise ValueError("coefficient orders start at k = 2")
        size = self.coeffs[0].size
        fields = [c.copy() for c in self.coeffs]
        while len(fields) < k - 1:
            fields.append(np.zeros(size))
        fields[k - 2] = np.asarray(a, dtype=float).copy()
        return PotentialSeries(max(self.kmax, k), tuple(fields))

    def coefficient(self, k: int) -> np.ndarray:
        """V_k as a field; zero beyond the truncation order."""
        if k < 2:
            raise ValueError("series has no coefficients below k = 2")
        if k > self.kmax:
            return np.zeros_like(self.coeffs[0])
        return self.coeffs[k - 2]

    def value_field(self, u: np.ndarray) -> np.ndarray:
        """V(x, u(x)) at every node, Horner in z from the highest order down."""
        acc = np.zeros_like(u)
        for k in range(self.kmax, 1, -1):
            acc = (acc + self.coeffs[k - 2] / math.factorial(k)) * u
        return acc * u  # series starts at z^2

    def slope_field(self, u: np.ndarray) -> np.ndarray:
        """d/dz V(x, z) at z = u(x), nodewise."""
        acc = np.zeros_like(u)
        for k in range(self.kmax, 1, -1):
            acc = acc * u + self.coeffs[k - 2] / math.factorial(k - 1)
        return acc * u  # derivative starts at z^1

    def value_at(self, node: int, z: float) -> float:
        """V(x_node, z)."""
        return float(self.value_field(np.full(self.coeffs[0].size, float(z)))[node])

    def slope_at(self, node: int, z: float) -> float:
        """d/dz V(x_node, z)."""
        return float(self.slope_field(np.full(self.coeffs[0].size, float(z)))[node])

    @property
    def is_zero(self) -> bool:
        return all(not a.any() for a in self.coeffs)


# expression vocabulary for ground-truth coefficients in experiment configs
_EXPR_NAMES = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "pi": np.pi,
}


def sample_expression(expr: str, grid: Grid2D) -> np.ndarray:
    """Sample a closed-form coefficient expression onto the grid.

    Vocabulary: numeric literals, x, y, +-*/, parentheses, sin/cos of linear
    forms, exp for Gaussian bumps, pi. Anything else is rejected.
    """
    allowed = set("0123456789.+-*/() ,xy")
    stripped = expr
    for name in _EXPR_NAMES:
        stripped = stripped.replace(name, "")
    if not set(stripped) <= allowed:
        raise ValueError(f"expression uses names outside the vocabulary: {expr!r}")
    x, y = grid.node_coords()
    env = {"__builtins__": {}, "x": x, "y": y, **_EXPR_NAMES}
    try:
        val = eval(expr, env)  # noqa: S307 - vocabulary-checked config expression
    except Exception as exc:
        raise ValueError(f"cannot evaluate expression {expr!r}: {exc}") from exc
    out = np.broadcast_to(np.asarray(val, dtype=float), (grid.num_nodes,)).copy()
    return check_field(out, grid)
