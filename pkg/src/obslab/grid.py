"""Spatial discretization of the interval (0, L) and the discrete norm family.

Interior nodes are x_j = j*h, j = 1..n, with h = L/(n+1); homogeneous
Dirichlet values are implied at x = 0 and x = L.  All inner products are
trapezoid sums with the boundary contributions dropped (they vanish), so
the discrete L2 pairing is simply h * sum(f * g).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridMismatchError(ValueError):
    """Two fields live on different grids."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on (0, length) with n_interior strictly interior nodes."""

    length: float
    n_interior: int

    def __post_init__(self):
        if not (self.length > 0 and np.isfinite(self.length)):
            raise ValueError(f"domain length must be positive, got {self.length}")
        if self.n_interior < 3:
            raise ValueError(f"need at least 3 interior nodes, got {self.n_interior}")

    @property
    def h(self) -> float:
        return self.length / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n_interior + 1)

    def compatible(self, other: "Grid1D") -> bool:
        return (
            self.n_interior == other.n_interior
            and abs(self.length - other.length) <= 1e-12 * max(1.0, self.length)
        )


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, tau] with n_steps steps (n_steps+1 samples)."""

    tau: float
    n_steps: int

    def __post_init__(self):
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError(f"final time must be positive, got {self.tau}")
        if self.n_steps < 8:
            raise ValueError(f"need at least 8 time steps, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.tau / self.n_steps

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.tau, self.n_steps + 1)


@dataclass(frozen=True)
class CoefficientField:
    """Samples of a coefficient (q, a, ...) at the interior nodes of a grid."""

    grid: Grid1D
    values: np.ndarray = field(repr=False)
    nonneg: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.n_interior,):
            raise ValueError(
                f"values shape {vals.shape} does not match grid with "
                f"{self.grid.n_interior} interior nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("coefficient values must be finite")
        if self.nonneg and np.any(vals < 0):
            raise ValueError("field flagged nonneg has negative samples")

    @classmethod
    def from_callable(cls, grid: Grid1D, fn, nonneg: bool = False) -> "CoefficientField":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float) * np.ones(grid.n_interior), nonneg=nonneg)

    @classmethod
    def zero(cls, grid: Grid1D) -> "CoefficientField":
        return cls(grid, np.zeros(grid.n_interior))

    @classmethod
    def constant(cls, grid: Grid1D, value: float, nonneg: bool = False) -> "CoefficientField":
        return cls(grid, np.full(grid.n_interior, float(value)), nonneg=nonneg)

    def __add__(self, other: "CoefficientField") -> "CoefficientField":
        _check_same_grid(self, other)
        return CoefficientField(self.grid, self.values + other.values)

    def __sub__(self, other: "CoefficientField") -> "CoefficientField":
        _check_same_grid(self, other)
        return CoefficientField(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "CoefficientField":
        return CoefficientField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def _check_same_grid(f: CoefficientField, g: CoefficientField) -> None:
    if not f.grid.compatible(g.grid):
        raise GridMismatchError("fields live on incompatible grids")


def inner_l2(f: CoefficientField, g: CoefficientField) -> float:
    """Discrete L2(0,L) pairing, trapezoid rule with zero boundary values."""
    _check_same_grid(f, g)
    return float(f.grid.h * np.dot(f.values, g.values))


def integral(f: CoefficientField) -> float:
    """Trapezoid integral of f over (0, L), boundary values zero."""
    return float(f.grid.h * np.sum(f.values))


def h01_seminorm_sq(grid: Grid1D, values: np.ndarray) -> float:
    """Squared discrete H1_0 seminorm via forward differences, zero boundary."""
    padded = np.concatenate(([0.0], np.asarray(values, dtype=float), [0.0]))
    d = np.diff(padded) / grid.h
    return float(grid.h * np.dot(d, d))


def norm(f: CoefficientField, kind: str = "L2", basis=None) -> float:
    """Norm of a coefficient field.

    kind is one of L2, H01 (seminorm), H1 (sqrt(L2^2 + H01^2)) or Hminus,
    the spectrally weighted dual norm (sum over the basis of
    eigenvalue^-1 * |(f, phi_k)|^2)^(1/2); Hminus needs a basis.
    """
    if kind == "L2":
        return float(np.sqrt(inner_l2(f, f)))
    if kind == "H01":
        return float(np.sqrt(h01_seminorm_sq(f.grid, f.values)))
    if kind == "H1":
        return float(np.sqrt(inner_l2(f, f) + h01_seminorm_sq(f.grid, f.values)))
    if kind == "Hminus":
        if basis is None or basis.size == 0:
            raise ValueError("Hminus norm needs a nonempty spectral basis")
        coeffs = basis.analyze(f.values)
        return float(np.sqrt(np.sum(np.abs(coeffs) ** 2 / basis.eigenvalues)))
    raise ValueError(f"unknown norm kind {kind!r}")


def weak_norm_star(f: CoefficientField, basis, tau: float) -> float:
    """Spectrally damped norm (sum_k exp(-3 tau^2 lam_k^2) |(f,phi_k)|^2)^(1/2).

    Much weaker than L2; the exponential weights make high modes invisible,
    which is what makes final-time heat observability usable.
    """
    if basis is None or basis.size == 0:
        raise ValueError("weak norm needs a nonempty spectral basis")
    if not basis.grid.compatible(f.grid):
        raise GridMismatchError("basis and field live on incompatible grids")
    coeffs = basis.analyze(f.values)
    weights = np.exp(-3.0 * tau**2 * basis.eigenvalues**2)
    return float(np.sqrt(np.sum(weights * np.abs(coeffs) ** 2)))
