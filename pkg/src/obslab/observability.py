"""Numerical observability constants for the discretized (A, C) pairs.

kappa is the smallest Gram-weighted singular value of the homogeneous
probe-to-trace map restricted to the span of the first K modes: the largest
constant with int_0^tau |y(t)|^2 dt >= kappa^2 |x|_H^2 on that span.  High
discrete modes are unresolved by the grid and would pollute the infimum,
which is why the estimate always carries its K.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .forward import (
    ObservationConfig,
    make_propagator,
    range_gram,
    wave_min_time,
)
from .grid import CoefficientField
from .spectral import SpectralBasis, beam_eigenpairs, dirichlet_eigenpairs


@dataclass(frozen=True)
class ObservabilityEstimate:
    equation: str
    tau: float
    K: int
    kappa: float
    grid_n: int
    perturbation: str = "none"
    notes: tuple[str, ...] = ()

    def to_json(self) -> str:
        return json.dumps(
            {
                "equation": self.equation,
                "tau": self.tau,
                "K": self.K,
                "kappa": self.kappa,
                "grid": self.grid_n,
                "perturbation": self.perturbation,
                "notes": list(self.notes),
            },
            indent=2,
            sort_keys=True,
        )


def _probe_matrix_and_gram(equation, q, a, config, K, basis=None):
    """Homogeneous probe traces over the K-mode state subspace + domain Gram."""
    if equation in ("wave", "beam"):
        grid = (a or q).grid
    else:
        grid = q.grid
    if basis is None:
        if equation == "beam":
            basis = beam_eigenpairs(K, grid)
        else:
            base_q = q if q is not None else CoefficientField.zero(grid)
            basis = dirichlet_eigenpairs(base_q, K)
    lam = basis.eigenvalues[:K]
    modes = basis.eigenvectors[:, :K]
    n = grid.n_interior
    prop = make_propagator(config, grid, q=q, a=a)

    if equation in ("wave", "beam"):
        Z0 = np.zeros((2 * n, 2 * K))
        Z0[:n, :K] = modes
        Z0[n:, K:] = modes
        dom = np.concatenate([lam, np.ones(K)])  # |(phi,0)|_H^2 = lam, |(0,phi)|_H^2 = 1
        labels = [f"(phi_{j+1},0)" for j in range(K)] + [f"(0,phi_{j+1})" for j in range(K)]
    else:
        Z0 = modes
        dom = lam.copy()  # heat state measured in H^1_0
        labels = [f"phi_{j+1}" for j in range(K)]
    traces, _ = prop.run(Z0)
    cols = traces.reshape(traces.shape[0], -1).T
    return cols, dom, labels, basis


def estimate_kappa(
    equation: str,
    q: CoefficientField | None,
    a: CoefficientField | None,
    config: ObservationConfig,
    K: int,
    basis: SpectralBasis | None = None,
    perturbation_name: str = "none",
) -> ObservabilityEstimate:
    """Smallest generalized singular value of the probe-to-trace map.

    Domain metric: discrete H^1_0 x L2 (wave), H^2_0 x L2 (beam) or H^1_0
    (heat); range metric: L2((0,tau), Y).
    """
    notes = []
    grid = (q or a).grid if equation != "heat" else q.grid
    if equation == "wave" and config.time.tau < wave_min_time(grid.length) - 1e-12:
        msg = (
            f"tau = {config.time.tau:.6g} is below the 1D observability threshold "
            f"2L = {wave_min_time(grid.length):.6g}; kappa may degenerate as K grows"
        )
        warnings.warn(msg)
        notes.append(msg)
    cols, dom, _, basis = _probe_matrix_and_gram(equation, q, a, config, K, basis)
    R = range_gram(config, "l2")
    if np.any(dom <= 0):
        raise ValueError("degenerate domain Gram")
    # dense generalized SVD: columns are few, traces are long
    B = np.sqrt(R.diagonal())[:, None] * cols / np.sqrt(dom)[None, :]
    svals = scipy.linalg.svdvals(B)
    kappa = float(svals[-1])
    return ObservabilityEstimate(
        equation=equation,
        tau=config.time.tau,
        K=K,
        kappa=kappa,
        grid_n=grid.n_interior,
        perturbation=perturbation_name,
        notes=tuple(notes),
    )


def perturbation_margin_check(
    equation: str,
    q: CoefficientField | None,
    a: CoefficientField | None,
    perturbation: CoefficientField,
    which: str,
    config: ObservationConfig,
    K: int,
    sizes=(1.0,),
) -> dict:
    """kappa(base) vs kappa(base + s * perturbation) for each scale s.

    `which` is 'q' or 'a'; the bounded-perturbation margin asserts the ratio
    stays >= 1/2 for small enough perturbations.
    """
    base = estimate_kappa(equation, q, a, config, K)
    rows = []
    largest_ok = None
    grid = perturbation.grid
    for s in sizes:
        bumped = CoefficientField(grid, perturbation.values * s)
        if which == "a":
            qa = (q, (a + bumped) if a is not None else bumped)
        elif which == "q":
            qa = ((q + bumped) if q is not None else bumped, a)
        else:
            raise ValueError("which must be 'q' or 'a'")
        est = estimate_kappa(
            equation, qa[0], qa[1], config, K,
            perturbation_name=f"{which}+{s:g}*p",
        )
        ratio = est.kappa / base.kappa if base.kappa > 0 else float("nan")
        ok = bool(ratio >= 0.5)
        if ok:
            largest_ok = s * perturbation.sup_norm()
        rows.append(
            {
                "size": float(s * perturbation.sup_norm()),
                "kappa": est.kappa,
                "ratio": float(ratio),
                "margin_ok": ok,
            }
        )
    return {
        "equation": equation,
        "K": K,
        "tau": config.time.tau,
        "kappa_base": base.kappa,
        "rows": rows,
        "largest_size_with_margin": largest_ok,
    }
