"""Eigen-decompositions supplying the probe dictionaries.

Three flavours:
  * Dirichlet pairs of -d^2/dx^2 + q0 (symmetric tridiagonal),
  * clamped-beam pairs of d^4/dx^4 on (0,1) (symmetric pentadiagonal),
  * the damped, nonselfadjoint first-order system [[0, I], [-A, -a0]] whose
    eigenvectors form a Riesz basis of the discrete energy space when the
    damping is small enough.

Eigenvectors are normalized in the discrete L2 inner product h*sum(f*g);
scipy returns Euclidean-orthonormal vectors which we rescale by 1/sqrt(h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .grid import CoefficientField, Grid1D, inner_l2

RESIDUAL_TOL = 1e-8
BIORTH_TOL = 1e-6


class PerturbationTooLarge(ValueError):
    """The damping sup-norm exceeds the Riesz-basis threshold."""


class PairingAmbiguityError(RuntimeError):
    """Two perturbed eigenvalues compete for the same unperturbed frequency."""


def laplacian_tridiagonal(grid: Grid1D, q0: CoefficientField | None = None):
    """Diagonals (d, e) of the 3-point stencil for -d^2/dx^2 + q0, Dirichlet BC."""
    h = grid.h
    d = np.full(grid.n_interior, 2.0 / h**2)
    if q0 is not None:
        d = d + q0.values
    e = np.full(grid.n_interior - 1, -1.0 / h**2)
    return d, e


def laplacian_matrix(grid: Grid1D, q0: CoefficientField | None = None) -> sp.csr_matrix:
    d, e = laplacian_tridiagonal(grid, q0)
    return sp.diags([e, d, e], offsets=[-1, 0, 1], format="csr")


def beam_matrix(grid: Grid1D) -> sp.csr_matrix:
    """5-point fourth-difference matrix with clamped closure (ghost u_-1 = u_1)."""
    n = grid.n_interior
    h4 = grid.h**4
    main = np.full(n, 6.0 / h4)
    main[0] = main[-1] = 7.0 / h4  # clamped: u'(0)=u'(L)=0 eliminates the ghost nodes
    off1 = np.full(n - 1, -4.0 / h4)
    off2 = np.full(n - 2, 1.0 / h4)
    return sp.diags([off2, off1, main, off1, off2], offsets=[-2, -1, 0, 1, 2], format="csr")


@dataclass(frozen=True)
class SpectralBasis:
    """First K eigenpairs of a selfadjoint 1D operator, L2-orthonormal modes."""

    grid: Grid1D
    operator: str  # "sturm_liouville" or "beam"
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)  # shape (n_interior, K)
    q0: CoefficientField | None = None

    @property
    def size(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def frequencies(self) -> np.ndarray:
        """sqrt(eigenvalue): temporal frequencies of the undamped evolution."""
        return np.sqrt(self.eigenvalues)

    def mode(self, k: int) -> CoefficientField:
        """k-th eigenfunction (1-based) as a coefficient field."""
        return CoefficientField(self.grid, self.eigenvectors[:, k - 1])

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Discrete L2 coefficients (f, phi_k) for all k in the basis."""
        return self.grid.h * (self.eigenvectors.T @ np.asarray(values))

    def synthesize(self, coefficients: np.ndarray) -> np.ndarray:
        """Linear combination of the first len(coefficients) modes."""
        c = np.asarray(coefficients)
        return self.eigenvectors[:, : c.size] @ c

    def orthonormality_defect(self) -> float:
        gram = self.grid.h * (self.eigenvectors.T @ self.eigenvectors)
        return float(np.max(np.abs(gram - np.eye(self.size))))

    def to_csv_rows(self):
        for k in range(self.size):
            yield (k + 1, self.eigenvalues[k])


def _fix_signs(vec: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: each mode positive just inside x = 0."""
    signs = np.where(vec[0] >= 0, 1.0, -1.0)
    return vec * signs[None, :]


def _validate_basis(basis: SpectralBasis, op_matrix: sp.spmatrix) -> None:
    lam = basis.eigenvalues
    resid = op_matrix @ basis.eigenvectors - basis.eigenvectors * lam[None, :]
    scale = np.sqrt(basis.grid.h) * np.linalg.norm(resid, axis=0)
    # the fourth-order operator has ||A|| ~ h^-4, so allow the float64 floor
    floor = 32.0 * np.finfo(float).eps * np.max(np.abs(op_matrix).sum(axis=1))
    if np.any(scale > RESIDUAL_TOL * (1.0 + np.abs(lam)) + floor):
        raise RuntimeError("eigenpair residual exceeds tolerance")
    if basis.orthonormality_defect() > RESIDUAL_TOL:
        raise RuntimeError("eigenvectors are not orthonormal to tolerance")


def dirichlet_eigenpairs(q0: CoefficientField, K: int) -> SpectralBasis:
    """First K Dirichlet eigenpairs of -d^2/dx^2 + q0 on q0's grid."""
    grid = q0.grid
    if K < 1 or K > grid.n_interior:
        raise ValueError(f"K={K} out of range 1..{grid.n_interior}")
    d, e = laplacian_tridiagonal(grid, q0)
    lam, vec = scipy.linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, K - 1))
    vec = _fix_signs(vec) / math.sqrt(grid.h)
    basis = SpectralBasis(grid, "sturm_liouville", lam, vec, q0=q0)
    _validate_basis(basis, laplacian_matrix(grid, q0))
    if np.all(q0.values >= 0) and lam[0] <= 0:
        raise RuntimeError("nonpositive eigenvalue despite q0 >= 0")
    return basis


def beam_eigenpairs(K: int, grid: Grid1D) -> SpectralBasis:
    """First K clamped-beam eigenpairs of d^4/dx^4 on (0,1)."""
    if abs(grid.length - 1.0) > 1e-12:
        raise ValueError("beam modes are set up on the unit interval (0,1)")
    if grid.n_interior < 16:
        raise ValueError("grid too coarse for the clamped beam (need n >= 16)")
    if K < 1 or K > grid.n_interior - 2:
        raise ValueError(f"K={K} out of range 1..{grid.n_interior - 2}")
    n = grid.n_interior
    h4 = grid.h**4
    band = np.zeros((3, n))
    band[0] = 6.0 / h4
    band[0, 0] = band[0, -1] = 7.0 / h4
    band[1, : n - 1] = -4.0 / h4
    band[2, : n - 2] = 1.0 / h4
    lam, vec = scipy.linalg.eig_banded(
        band, lower=True, select="i", select_range=(0, K - 1)
    )
    vec = _fix_signs(vec) / math.sqrt(grid.h)
    basis = SpectralBasis(grid, "beam", lam, vec)
    _validate_basis(basis, beam_matrix(grid))
    return basis


def weyl_check(basis: SpectralBasis) -> tuple[float, bool]:
    """Smallest c with c^-1 k^2 <= lam_k <= c k^2 over the computed modes."""
    if basis.size < 3:
        raise ValueError("weyl_check needs at least 3 eigenvalues")
    if basis.q0 is not None and np.all(basis.q0.values >= 0) and basis.eigenvalues[0] <= 0:
        raise ValueError("nonpositive eigenvalue with q0 >= 0")
    k = np.arange(1, basis.size + 1, dtype=float)
    lam = basis.eigenvalues
    if np.any(lam <= 0):
        return float("inf"), False
    c = float(np.max(np.maximum(lam / k**2, k**2 / lam)))
    c = max(c, 1.0)
    return c, bool(np.isfinite(c))


def gap_statistics(frequencies) -> tuple[float, float]:
    """(min gap, min gap over the last quartile) of an ascending frequency list."""
    freqs = np.asarray(frequencies, dtype=float)
    if freqs.size < 2:
        raise ValueError("need at least 2 frequencies")
    gaps = np.diff(freqs)
    if np.any(gaps < 0):
        raise ValueError("frequencies must be ascending")
    tail = max(1, gaps.size // 4)
    return float(gaps.min()), float(gaps[-tail:].min())


VARRHO = math.pi**2 / 8.0 - 1.0  # sum_{k>=1} (2k+1)^-2


@dataclass(frozen=True)
class PerturbationBudget:
    """Constants gating the Riesz-basis perturbation of the damped generator."""

    equation: str
    rho: float            # sup norm of the base damping
    varrho: float         # sum_{k>=1} (2k+1)^-2
    gap: float            # frequency gap d (wave: 1)
    alpha_threshold: float
    delta: float
    alpha_bar: float      # radius of the disks containing the perturbed eigenvalues


def perturbation_budget(
    a0: CoefficientField, equation: str, delta: float, gap: float | None = None
) -> PerturbationBudget:
    """Compute (varrho, alpha, alpha_bar) and refuse oversized damping."""
    if equation == "wave":
        d = 1.0
    elif equation == "beam":
        if gap is None:
            raise ValueError("beam budget needs the frequency gap d")
        d = float(gap)
    else:
        raise ValueError(f"unknown equation {equation!r}")
    rho = a0.sup_norm()
    alpha = d / (2.0 * math.sqrt(2.0 * (1.0 + VARRHO)))
    if rho >= alpha:
        raise PerturbationTooLarge(
            f"perturbation too large: ||a0||_inf = {rho:.6g} >= alpha = {alpha:.6g}"
        )
    hi = 1.0 - rho**2 / alpha**2
    if not (0.0 < delta < hi):
        raise ValueError(f"delta must lie in (0, {hi:.6g}), got {delta}")
    if rho == 0.0:
        alpha_bar = 0.0
    else:
        alpha_bar = rho * d / math.sqrt(4.0 * rho**2 + d**2 * delta)
    budget = PerturbationBudget(equation, rho, VARRHO, d, alpha, delta, alpha_bar)
    assert budget.alpha_bar < d / 2.0
    return budget


@dataclass(frozen=True)
class RieszBasisData:
    """Eigen-structure of the damped generator [[0, I], [-A, -a0]].

    Modes are indexed k in {1..n} for the upper half plane; the -k mode is
    the complex conjugate.  Columns of `primal` are H-normalized eigenvectors
    (displacement stacked over velocity); `dual` is the biorthogonal family
    in the sesquilinear H = H^1_0 x L2 inner product; eigvalue(k) = i*mu_k.
    """

    equation: str
    grid: Grid1D
    a0: CoefficientField
    budget: PerturbationBudget
    eigvalues: np.ndarray = field(repr=False)       # s_k = i*mu_k, Im >= 0, ascending
    primal: np.ndarray = field(repr=False)          # (2n, n) complex
    dual: np.ndarray = field(repr=False)            # (2n, n) complex
    rho_unperturbed: np.ndarray = field(repr=False)  # discrete undamped frequencies
    alpha_frame: float = 1.0
    beta_frame: float = 1.0
    k_tilde: int = 1
    h_gram: sp.spmatrix = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return int(self.eigvalues.size)

    @property
    def mu(self) -> np.ndarray:
        """Perturbed frequencies mu_k (eigenvalue = i*mu_k)."""
        return self.eigvalues / 1j

    def displacement(self, k: int) -> np.ndarray:
        return self.primal[: self.grid.n_interior, k - 1]

    def mode_pair(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(u0, u1) initial data of the k-th damped mode (complex)."""
        n = self.grid.n_interior
        return self.primal[:n, k - 1], self.primal[n:, k - 1]

    def psi(self, k: int) -> np.ndarray:
        """Velocity profile psi_k = i mu_k phi_k used in the damping pairing."""
        return self.primal[self.grid.n_interior:, k - 1]

    def deviations(self) -> np.ndarray:
        return np.abs(self.eigvalues - 1j * self.rho_unperturbed)

    def h_inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        """Sesquilinear H-inner product <u, v> (conjugate on v)."""
        return complex(np.conj(v) @ (self.h_gram @ u))

    def h_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(np.real(np.conj(u) @ (self.h_gram @ u))))

    def primal_coefficients(self, u: np.ndarray) -> np.ndarray:
        """<u, phi_k> for all positive-side modes."""
        return np.conj(self.primal).T @ (self.h_gram @ u)

    def dual_coefficients(self, u: np.ndarray) -> np.ndarray:
        """<u, dual phi_k> for all positive-side modes."""
        return np.conj(self.dual).T @ (self.h_gram @ u)

    def frame_sums(self, u: np.ndarray) -> tuple[float, float]:
        """(sum_k |<u, dual_k>|^2, sum_k |<u, phi_k>|^2) over the full +/- basis.

        The -k members are the complex conjugates of the +k ones, so their
        pairings are evaluated with the conjugated families.
        """
        gu = self.h_gram @ u
        cd = np.conj(self.dual).T @ gu
        cp = np.conj(self.primal).T @ gu
        cd_m = self.dual.T @ gu
        cp_m = self.primal.T @ gu
        return (
            float(np.sum(np.abs(cd) ** 2) + np.sum(np.abs(cd_m) ** 2)),
            float(np.sum(np.abs(cp) ** 2) + np.sum(np.abs(cp_m) ** 2)),
        )

    def to_csv_rows(self):
        for k in range(self.size):
            mu = self.mu[k]
            yield (k + 1, self.rho_unperturbed[k] ** 2, mu.real, mu.imag)


def state_gram(grid: Grid1D, equation: str) -> sp.csr_matrix:
    """Discrete Gram of H = H^1_0 x L2 (wave) or H^2_0 x L2 (beam)."""
    if equation == "wave":
        stiff = laplacian_matrix(grid)
    elif equation == "beam":
        stiff = beam_matrix(grid)
    else:
        raise ValueError(f"unknown equation {equation!r}")
    h = grid.h
    return sp.block_diag([h * stiff, h * sp.identity(grid.n_interior)], format="csr")


def _pair_eigenvalues(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Match eigenvalues with Im >= 0 to targets i*rho_k, high k first.

    Returns the permutation taking slot k (0-based) to the matched eigenvalue
    index.  Raises PairingAmbiguityError when two eigenvalues fall within half
    the local unperturbed gap of the same target.
    """
    n = rho.size
    gaps = np.diff(rho)
    order = np.empty(n, dtype=int)
    taken = np.zeros(s.size, dtype=bool)
    for k in range(n - 1, -1, -1):
        target = 1j * rho[k]
        dist = np.abs(s - target)
        dist[taken] = np.inf
        best = int(np.argmin(dist))
        local_gap = gaps[min(k, gaps.size - 1)] if gaps.size else np.inf
        rest = dist.copy()
        rest[best] = np.inf
        second = float(np.min(rest)) if np.isfinite(rest).any() else np.inf
        if dist[best] <= 0.5 * local_gap and second <= 0.5 * local_gap:
            raise PairingAmbiguityError(
                f"ambiguous match for mode {k + 1}: nearest at {dist[best]:.3g}, "
                f"runner-up at {second:.3g}, half-gap {0.5 * local_gap:.3g}"
            )
        order[k] = best
        taken[best] = True
    return order


def perturbed_spectrum(
    a0: CoefficientField,
    equation: str,
    K: int | None = None,
    delta: float = 0.5,
) -> RieszBasisData:
    """Full eigen-decomposition of the damped block generator with frame bounds.

    K limits how many modes are *reported* for deviation checks; the basis
    itself always holds all n modes so that frame sums are meaningful.
    """
    grid = a0.grid
    n = grid.n_interior

    if equation == "wave":
        A = laplacian_matrix(grid).toarray()
        d, e = laplacian_tridiagonal(grid)
        lam0 = scipy.linalg.eigh_tridiagonal(d, e, eigvals_only=True)
        gap = None
    elif equation == "beam":
        A = beam_matrix(grid).toarray()
        lam0 = scipy.linalg.eigh(A, eigvals_only=True)
        gap = float(np.min(np.diff(np.sqrt(lam0[: max(8, n // 4)]))))
    else:
        raise ValueError(f"unknown equation {equation!r}")

    budget = perturbation_budget(a0, equation, delta, gap=gap)
    rho0 = np.sqrt(lam0)

    block = np.zeros((2 * n, 2 * n))
    block[:n, n:] = np.eye(n)
    block[n:, :n] = -A
    block[n:, n:] = -np.diag(a0.values)
    s_all, V_all = np.linalg.eig(block)

    cond = np.linalg.cond(V_all)
    if not np.isfinite(cond) or cond > 1e12:
        raise RuntimeError(f"generator is numerically defective (cond = {cond:.3g})")

    upper = s_all.imag >= 0
    if int(np.sum(upper)) != n:
        raise PairingAmbiguityError(
            "overdamped or degenerate modes: expected n eigenvalues with Im >= 0"
        )
    s_up = s_all[upper]
    V_up = V_all[:, upper]
    order = _pair_eigenvalues(s_up, rho0)
    s_k = s_up[order]
    V = V_up[:, order]

    G = state_gram(grid, equation)
    hn = np.sqrt(np.real(np.einsum("ij,ij->j", np.conj(V), G @ V)))
    V = V / hn[None, :]
    # deterministic phase: dominant displacement component real and positive
    lead = np.argmax(np.abs(V[:n]), axis=0)
    phases = V[lead, np.arange(n)]
    V = V * np.conj(phases / np.abs(phases))[None, :]

    # frame bounds from the H-orthonormalized full (+/-) eigenvector matrix
    L = np.linalg.cholesky(G.toarray())
    W = np.hstack([L.T @ V, L.T @ np.conj(V)])
    svals = np.linalg.svd(W, compute_uv=False)
    alpha_frame = float(svals[-1] ** 2)
    beta_frame = float(svals[0] ** 2)

    # biorthogonal family of the full (+/-) system, positive side kept:
    # dual = full @ inv(M)^H with M the sesquilinear H-Gram of the family
    full = np.hstack([V, np.conj(V)])
    gram_full = np.conj(full).T @ (G @ full)
    dual_full = full @ np.conj(np.linalg.inv(gram_full)).T
    dual = dual_full[:, :n]

    biorth = np.conj(dual_full).T @ (G @ full) - np.eye(2 * n)
    if np.max(np.abs(biorth)) > BIORTH_TOL:
        raise RuntimeError("biorthogonality residual exceeds tolerance")

    dev = np.abs(s_k - 1j * rho0)
    inside = dev <= budget.alpha_bar + 1e-12 if budget.rho > 0 else dev <= 1e-8
    k_tilde = n + 1
    for k in range(n - 1, -1, -1):
        if inside[k]:
            k_tilde = k + 1
        else:
            break

    data = RieszBasisData(
        equation=equation,
        grid=grid,
        a0=a0,
        budget=budget,
        eigvalues=s_k,
        primal=V,
        dual=dual,
        rho_unperturbed=rho0,
        alpha_frame=alpha_frame,
        beta_frame=beta_frame,
        k_tilde=int(k_tilde),
        h_gram=G,
    )
    if K is not None and K > n:
        raise ValueError(f"K={K} exceeds available modes n={n}")
    return data
