"""Convolution by a modulation signal and its inversion.

The forward map is (Sh)(t) = int_0^t lambda(t-s) h(s) ds.  Differentiating
the first-kind equation S(phi) = psi gives the second-kind Volterra equation

    lambda(0) phi(t) + int_0^t lambda'(t-s) phi(s) ds = psi'(t),

uniquely solvable when lambda(0) != 0, with solution norm controlled by the
Gronwall factor sqrt(2)/|lambda(0)| * exp(tau |lambda'|_2^2 / lambda(0)^2).
Discretely both directions use product-trapezoid weights, so the round trip
deconvolve(apply_S(h)) = h holds to O(dt^2) for smooth h.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .forward import TraceSignal, time_derivative, trapezoid_weights
from .grid import TimeGrid


class NotInvertibleError(ValueError):
    """Deconvolution with lambda(0) = 0."""


class RankDeficientError(RuntimeError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class ModulationSignal:
    """Known time modulation lambda(t) of a separable source lambda(t) f(x)."""

    time: TimeGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples)
        object.__setattr__(self, "samples", s)
        if s.shape != (self.time.n_steps + 1,):
            raise ValueError("modulation samples must match the time grid")
        if not np.all(np.isfinite(s)):
            raise ValueError("modulation samples must be finite")

    @classmethod
    def from_callable(cls, fn, time: TimeGrid) -> "ModulationSignal":
        return cls(time, np.asarray([fn(t) for t in time.t]))

    @property
    def lambda0(self):
        return self.samples[0]

    @property
    def derivative(self) -> np.ndarray:
        return time_derivative(self.samples, self.time)

    @property
    def dnorm_l2(self) -> float:
        """Discrete L2(0,tau) norm of lambda'."""
        w = trapezoid_weights(self.time)
        return float(np.sqrt(np.sum(w * np.abs(self.derivative) ** 2)))


def _rows(signal):
    if isinstance(signal, TraceSignal):
        return np.atleast_2d(signal.values), signal.config
    return np.atleast_2d(np.asarray(signal)), None


def _wrap(rows, config, template):
    if config is not None:
        return TraceSignal(config, rows)
    if isinstance(template, np.ndarray) and template.ndim == 1:
        return rows[0]
    return rows


def apply_S(lam: ModulationSignal, h):
    """Causal convolution (Sh)(t_i) with product-trapezoid weights; (Sh)(0) = 0."""
    rows, config = _rows(h)
    if rows.shape[1] != lam.time.n_steps + 1:
        raise ValueError("signal and modulation live on different time grids")
    dt = lam.time.dt
    ls = lam.samples
    out = np.zeros_like(rows, dtype=np.result_type(rows, ls))
    for r in range(rows.shape[0]):
        conv = np.convolve(ls, rows[r])[: rows.shape[1]]
        out[r] = dt * (conv - 0.5 * ls * rows[r, 0] - 0.5 * ls[0] * rows[r])
    out[:, 0] = 0.0
    return _wrap(out, config, h)


@dataclass(frozen=True)
class DeconvolutionResult:
    values: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    def __iter__(self):  # convenience unpacking
        yield self.values
        yield self.meta


def deconvolve(lam: ModulationSignal, psi, tikhonov: float = 0.0, noise_level: float | None = None):
    """Solve S(phi) = psi for phi by forward substitution on the second-kind form.

    psi(0) should vanish (the range of S); a violation beyond tolerance is
    recorded in the result metadata, not raised.  Optional Tikhonov smoothing
    (discrepancy principle at `noise_level`) for noisy psi; off by default.
    """
    if lam.lambda0 == 0:
        raise NotInvertibleError("modulation not invertible: lambda(0) = 0")
    rows, config = _rows(psi)
    nt = lam.time.n_steps
    if rows.shape[1] != nt + 1:
        raise ValueError("signal and modulation live on different time grids")
    dt = lam.time.dt
    meta = {"warnings": []}
    scale = np.max(np.abs(rows)) or 1.0
    if np.max(np.abs(rows[:, 0])) > 1e-8 * scale:
        meta["warnings"].append(
            f"psi(0) = {np.max(np.abs(rows[:, 0])):.3g} is not zero; result is the "
            "least-squares-consistent source of the shifted data"
        )

    dpsi = time_derivative(rows, lam.time)
    dlam = lam.derivative
    lam0 = lam.lambda0

    if noise_level is not None and noise_level > 0 and tikhonov == 0.0:
        tikhonov = _discrepancy_alpha(lam, dpsi, noise_level)
    if tikhonov > 0.0:
        phi = _tikhonov_solve(lam, dpsi, tikhonov)
        meta["tikhonov"] = tikhonov
        out = phi
    else:
        dtype = np.result_type(rows, lam.samples)
        out = np.zeros_like(rows, dtype=dtype)
        diag = lam0 + 0.5 * dt * dlam[0]
        rev = dlam[::-1]
        for r in range(rows.shape[0]):
            phi = out[r]
            phi[0] = dpsi[r, 0] / lam0
            for i in range(1, nt + 1):
                acc = 0.5 * dlam[i] * phi[0]
                if i > 1:
                    acc += rev[nt - i + 1 : nt] @ phi[1:i]
                phi[i] = (dpsi[r, i] - dt * acc) / diag
    return DeconvolutionResult(_wrap_values(out, psi, config), meta)


def _wrap_values(rows, template, config):
    if config is not None:
        return rows
    if isinstance(template, np.ndarray) and template.ndim == 1:
        return rows[0]
    return rows


def _second_kind_matrix(lam: ModulationSignal) -> np.ndarray:
    nt = lam.time.n_steps
    dt = lam.time.dt
    dlam = lam.derivative
    T = np.zeros((nt + 1, nt + 1), dtype=np.result_type(lam.samples, float))
    idx = np.arange(nt + 1)
    for i in range(1, nt + 1):
        T[i, 1:i] = dt * dlam[i - idx[1:i]]
        T[i, 0] = 0.5 * dt * dlam[i]
        T[i, i] = 0.5 * dt * dlam[0]
    T += lam.lambda0 * np.eye(nt + 1)
    return T

def _tikhonov_solve(lam: ModulationSignal, dpsi: np.ndarray, alpha: float) -> np.ndarray:
    T = _second_kind_matrix(lam)
    m = T.shape[0]
    L = np.eye(m, k=0) - np.eye(m, k=-1)  # first differences damp oscillatory noise
    lhs = T.conj().T @ T + alpha * (L.T @ L)
    out = np.empty_like(dpsi, dtype=np.result_type(T, dpsi))
    for r in range(dpsi.shape[0]):
        out[r] = scipy.linalg.solve(lhs, T.conj().T @ dpsi[r], assume_a="pos")
    return out


def _discrepancy_alpha(lam: ModulationSignal, dpsi: np.ndarray, noise_level: float) -> float:
    """Pick alpha so the residual matches the noise floor of psi' (~ noise/dt)."""
    T = _second_kind_matrix(lam)
    target = noise_level / lam.time.dt * np.sqrt(dpsi.shape[1])
    alphas = np.logspace(-14, 2, 33)
    best = alphas[0]
    for alpha in alphas:
        m = T.shape[0]
        L = np.eye(m) - np.eye(m, k=-1)
        lhs = T.conj().T @ T + alpha * (L.T @ L)
        resid = 0.0
        for r in range(dpsi.shape[0]):
            phi = scipy.linalg.solve(lhs, T.conj().T @ dpsi[r], assume_a="pos")
            resid = max(resid, float(np.linalg.norm(T @ phi - dpsi[r])))
        best = alpha
        if resid >= target:
            break
    return float(best)


def theoretical_lower_bound(
    kappa: float, lam: ModulationSignal, tau: float, perturbed: bool = False
) -> float:
    """Injectivity constant kappa|lambda(0)|/sqrt(2) e^{-tau |lambda'|^2/lambda(0)^2}.

    The perturbed variant (observability constant halved by a small bounded
    perturbation of the generator) divides the bound by 2.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    lam0 = abs(lam.lambda0)
    if lam0 == 0:
        raise NotInvertibleError("lambda(0) = 0 admits no lower bound")
    bound = kappa * lam0 / np.sqrt(2.0) * np.exp(-tau * lam.dnorm_l2**2 / lam0**2)
    return float(bound / 2.0 if perturbed else bound)


@dataclass(frozen=True)
class SourceRecovery:
    """Least-squares source estimate over a spectral dictionary."""

    basis: object
    coefficients: np.ndarray
    residual: float
    condition: float
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return self.basis.synthesize(self.coefficients)

    def field(self):
        from .grid import CoefficientField

        vals = self.values
        if np.iscomplexobj(vals):
            vals = vals.real
        return CoefficientField(self.basis.grid, vals)


def recover_source(
    equation: str,
    lam: ModulationSignal,
    observed,
    basis,
    K: int,
    q=None,
    a=None,
    config=None,
    range_metric: str = "h1",
    max_condition: float = 1e10,
    _dictionary=None,
) -> SourceRecovery:
    """Invert the source-to-trace map for a source lambda(t) f(x).

    Deconvolve the observed trace back to the homogeneous observation, then
    least-squares fit over span{phi_1..phi_K} against homogeneous probe traces
    (wave/beam: initial velocity probes; heat: initial state probes), measured
    in the H1-in-time trace metric by default.
    """
    from .forward import make_propagator, range_gram

    if K < 1 or K > basis.size:
        raise ValueError(f"K={K} out of range 1..{basis.size}")
    if config is None:
        config = observed.config
    target_rows, _ = _rows(observed)
    dec = deconvolve(lam, target_rows)
    target = np.asarray(dec.values).reshape(-1)

    if _dictionary is None:
        _dictionary = source_dictionary(equation, basis, K, q=q, a=a, config=config)
    cols = _dictionary
    R = range_gram(config, range_metric)

    A = cols.conj().T @ (R @ cols)
    b = cols.conj().T @ (R @ target)
    condition = float(np.linalg.cond(A))
    if not np.isfinite(condition) or condition > max_condition:
        raise RankDeficientError(
            f"probe-to-trace normal system is rank deficient (cond = {condition:.3g}); "
            "the observation window or boundary set does not resolve these modes",
            condition=condition,
        )
    coeffs = np.linalg.solve(A, b)
    resid_vec = cols @ coeffs - target
    residual = float(np.sqrt(np.real(np.conj(resid_vec) @ (R @ resid_vec))))
    return SourceRecovery(
        basis=basis,
        coefficients=coeffs,
        residual=residual,
        condition=condition,
        meta={"deconvolution": dec.meta},
    )


def source_dictionary(equation: str, basis, K: int, q=None, a=None, config=None) -> np.ndarray:
    """Stacked homogeneous probe traces used as the source-recovery dictionary."""
    from .forward import make_propagator

    grid = basis.grid
    n = grid.n_interior
    prop = make_propagator(config, grid, q=q, a=a)
    modes = basis.eigenvectors[:, :K]
    if equation in ("wave", "beam"):
        Z0 = np.zeros((2 * n, K))
        Z0[n:] = modes
    elif equation == "heat":
        Z0 = modes
    else:
        raise ValueError(f"unknown equation {equation!r}")
    traces, _ = prop.run(Z0)
    return traces.reshape(K, -1).T
