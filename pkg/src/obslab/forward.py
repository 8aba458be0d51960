"""Time-domain solvers for the three IBVPs and the discretized IB operators.

Wave and beam are integrated as first-order systems z' = M z + F(t) by the
implicit trapezoid rule (unconditionally stable, second order, so dt is
decoupled from h); heat uses Crank-Nicolson.  One sparse LU factorization is
shared across a whole probe sweep, and sweeps are run as batched solves.

Boundary observations are second-order one-sided differences:
Neumann trace at the left end, -(4u_1 - u_2)/(2h); torque trace for the
clamped beam, (8u_1 - u_2)/(2h^2), both using u(0) = 0 (and u'(0) = 0 for
the beam).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import CoefficientField, Grid1D, TimeGrid
from .spectral import SpectralBasis, beam_matrix, laplacian_matrix


class NonConvergenceError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


@dataclass(frozen=True)
class ObservationConfig:
    """Which equation is observed where, and on what time grid."""

    equation: str  # wave | beam | heat
    time: TimeGrid
    boundary: tuple[str, ...] = ("left",)

    def __post_init__(self):
        if self.equation not in ("wave", "beam", "heat"):
            raise ValueError(f"unknown equation {self.equation!r}")
        if not self.boundary:
            raise ValueError("need at least one observed boundary point")
        if any(b not in ("left", "right") for b in self.boundary):
            raise ValueError("boundary entries must be 'left' or 'right'")
        if self.equation == "beam" and tuple(self.boundary) != ("left",):
            raise ValueError("beam torque observation is at x = 0 only")

    @property
    def n_observed(self) -> int:
        return len(self.boundary)


def wave_min_time(length: float) -> float:
    """Observation-time threshold 2L below which the 1D wave is not observable."""
    return 2.0 * length


@dataclass(frozen=True)
class TraceSignal:
    """Boundary observation time series, one row per observed point."""

    config: ObservationConfig
    values: np.ndarray = field(repr=False)  # (n_observed, n_steps+1)

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values))
        object.__setattr__(self, "values", vals)
        expected = (self.config.n_observed, self.config.time.n_steps + 1)
        if vals.shape != expected:
            raise ValueError(f"trace shape {vals.shape}, expected {expected}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("trace contains non-finite samples")

    def __sub__(self, other: "TraceSignal") -> "TraceSignal":
        return TraceSignal(self.config, self.values - other.values)

    def __add__(self, other: "TraceSignal") -> "TraceSignal":
        return TraceSignal(self.config, self.values + other.values)

    def scaled(self, c) -> "TraceSignal":
        return TraceSignal(self.config, self.values * c)

    def l2_norm(self) -> float:
        w = trapezoid_weights(self.config.time)
        return float(np.sqrt(np.sum(w * np.abs(self.values) ** 2)))

    def h1_norm(self) -> float:
        w = trapezoid_weights(self.config.time)
        dv = time_derivative(self.values, self.config.time)
        return float(
            np.sqrt(np.sum(w * np.abs(self.values) ** 2) + np.sum(w * np.abs(dv) ** 2))
        )

    def stacked(self) -> np.ndarray:
        """Rows concatenated into one vector (observation-point major)."""
        return self.values.reshape(-1)


def trapezoid_weights(time: TimeGrid) -> np.ndarray:
    w = np.full(time.n_steps + 1, time.dt)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def time_derivative(values: np.ndarray, time: TimeGrid) -> np.ndarray:
    """Second-order time derivative, centered inside and one-sided at the ends."""
    v = np.atleast_2d(values)
    dt = time.dt
    out = np.empty_like(v)
    out[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2 * dt)
    out[:, 0] = (-3 * v[:, 0] + 4 * v[:, 1] - v[:, 2]) / (2 * dt)
    out[:, -1] = (3 * v[:, -1] - 4 * v[:, -2] + v[:, -3]) / (2 * dt)
    return out if values.ndim > 1 else out[0]


def _derivative_matrix(time: TimeGrid) -> sp.csr_matrix:
    m = time.n_steps + 1
    dt = time.dt
    D = sp.lil_matrix((m, m))
    for i in range(1, m - 1):
        D[i, i - 1] = -1 / (2 * dt)
        D[i, i + 1] = 1 / (2 * dt)
    D[0, 0], D[0, 1], D[0, 2] = -3 / (2 * dt), 4 / (2 * dt), -1 / (2 * dt)
    D[-1, -1], D[-1, -2], D[-1, -3] = 3 / (2 * dt), -4 / (2 * dt), 1 / (2 * dt)
    return D.tocsr()


def time_gram(time: TimeGrid, kind: str = "h1") -> sp.csr_matrix:
    """SPD Gram of L2(0,tau) ('l2') or H1(0,tau) ('h1') on the sample vector."""
    W = sp.diags(trapezoid_weights(time))
    if kind == "l2":
        return W.tocsr()
    if kind == "h1":
        D = _derivative_matrix(time)
        return (W + D.T @ W @ D).tocsr()
    raise ValueError(f"unknown time gram kind {kind!r}")


def range_gram(config: ObservationConfig, kind: str = "h1") -> sp.csr_matrix:
    """Gram of the stacked trace vector: one time Gram block per observed point."""
    block = time_gram(config.time, kind)
    return sp.block_diag([block] * config.n_observed, format="csr")


# ---------------------------------------------------------------------------
# propagators


def _neumann_trace(disp: np.ndarray, grid: Grid1D, boundary) -> np.ndarray:
    """disp has node index on axis 0; returns (n_observed, ...) traces."""
    h = grid.h
    rows = []
    for b in boundary:
        if b == "left":
            rows.append((disp[1] - 4.0 * disp[0]) / (2.0 * h))
        else:
            rows.append((disp[-2] - 4.0 * disp[-1]) / (2.0 * h))
    return np.stack(rows)


def _torque_trace(disp: np.ndarray, grid: Grid1D, boundary) -> np.ndarray:
    h = grid.h
    return np.stack([(8.0 * disp[0] - disp[1]) / (2.0 * h**2)])


class TrapezoidPropagator:
    """Implicit-trapezoid stepper for z' = M z + F(t), reusable across probes."""

    def __init__(self, M: sp.spmatrix, time: TimeGrid, trace_of_state, n_state: int):
        dt = time.dt
        eye = sp.identity(M.shape[0], format="csr")
        self._minus = (eye - 0.5 * dt * M).tocsc()
        self._plus = (eye + 0.5 * dt * M).tocsr()
        self._lu = spla.splu(self._minus)
        self.time = time
        self._trace_of_state = trace_of_state
        self.n_state = n_state

    def run(self, z0: np.ndarray, source=None, store_states: bool = False):
        """Advance columns of z0 over the whole time grid.

        source is None, ('separable', lam_samples, X_columns) with X of shape
        (n_state, m), or ('general', F) with F of shape (n_steps+1, n_state)
        for a single column.  Complex inputs are split into two real solves.
        """
        z0 = np.asarray(z0)
        if z0.ndim == 1:
            z0 = z0[:, None]
        if z0.shape[0] != self.n_state:
            raise ValueError(f"state shape {z0.shape} does not match n_state={self.n_state}")
        if np.iscomplexobj(z0) or (source is not None and _source_is_complex(source)):
            return self._run_complex(z0.astype(complex), source, store_states)
        return self._run_real(z0.astype(float), source, store_states)

    def _run_complex(self, z0, source, store_states):
        re_src, im_src = _split_source(source)
        tr_re, st_re = self._run_real(np.real(z0), re_src, store_states)
        tr_im, st_im = self._run_real(np.imag(z0), im_src, store_states)
        traces = tr_re + 1j * tr_im
        states = st_re + 1j * st_im if store_states else None
        return traces, states

    def _run_real(self, z0, source, store_states):
        nt = self.time.n_steps
        m = z0.shape[1]
        dt = self.time.dt
        z = z0.copy()

        lam = X = F = None
        if source is not None:
            if source[0] == "separable":
                _, lam, X = source
                lam = np.asarray(lam, dtype=float)
                X = np.asarray(X, dtype=float)
                if X.ndim == 1:
                    X = X[:, None]
            elif source[0] == "general":
                _, F = source
                F = np.asarray(F, dtype=float)
            else:
                raise ValueError(f"unknown source kind {source[0]!r}")

        traces = np.empty((m, self._n_trace_rows(), nt + 1))
        states = np.empty((nt + 1, self.n_state, m)) if store_states else None
        self._write_trace(traces, 0, z)
        if store_states:
            states[0] = z

        for k in range(nt):
            rhs = self._plus @ z
            if lam is not None:
                rhs += (0.5 * dt * (lam[k] + lam[k + 1])) * X
            if F is not None:
                rhs += (0.5 * dt) * (F[k] + F[k + 1])[:, None]
            z = self._lu.solve(rhs)
            self._write_trace(traces, k + 1, z)
            if store_states:
                states[k + 1] = z
        return traces, states

    def _n_trace_rows(self) -> int:
        probe = np.zeros((self.n_state, 1))
        return self._trace_of_state(probe).shape[0]

    def _write_trace(self, traces, k, z):
        tr = self._trace_of_state(z)  # (n_obs, m)
        traces[:, :, k] = tr.T


def _source_is_complex(source) -> bool:
    if source is None:
        return False
    if source[0] == "separable":
        return np.iscomplexobj(source[1]) or np.iscomplexobj(source[2])
    return np.iscomplexobj(source[1])


def _split_source(source):
    if source is None:
        return None, None
    if source[0] == "separable":
        _, lam, X = source
        lam = np.asarray(lam)
        X = np.asarray(X)
        # keep products real: Re(lam X) and Im(lam X) need cross terms, so only
        # one of the two factors may be complex at a time
        if np.iscomplexobj(lam) and np.iscomplexobj(X):
            raise ValueError("at most one of (modulation, profile) may be complex")
        if np.iscomplexobj(lam):
            return ("separable", lam.real, X), ("separable", lam.imag, X)
        if np.iscomplexobj(X):
            return ("separable", lam, X.real), ("separable", lam, X.imag)
        return source, ("separable", np.zeros_like(lam), X)
    _, F = source
    F = np.asarray(F)
    if np.iscomplexobj(F):
        return ("general", F.real), ("general", F.imag)
    return source, ("general", np.zeros_like(F))


def wave_generator(grid: Grid1D, q: CoefficientField | None, a: CoefficientField | None) -> sp.csr_matrix:
    n = grid.n_interior
    A = laplacian_matrix(grid, q)
    damping = sp.diags(a.values) if a is not None else sp.csr_matrix((n, n))
    zero = sp.csr_matrix((n, n))
    eye = sp.identity(n, format="csr")
    return sp.bmat([[zero, eye], [-A, -damping]], format="csr")


def beam_generator(grid: Grid1D, a: CoefficientField | None) -> sp.csr_matrix:
    n = grid.n_interior
    A = beam_matrix(grid)
    damping = sp.diags(a.values) if a is not None else sp.csr_matrix((n, n))
    zero = sp.csr_matrix((n, n))
    eye = sp.identity(n, format="csr")
    return sp.bmat([[zero, eye], [-A, -damping]], format="csr")


def make_propagator(
    config: ObservationConfig,
    grid: Grid1D,
    q: CoefficientField | None = None,
    a: CoefficientField | None = None,
) -> TrapezoidPropagator:
    """Factor the implicit system once; reuse it for a whole probe sweep."""
    n = grid.n_interior
    if config.equation == "wave":
        M = wave_generator(grid, q, a)
        trace = lambda z: _neumann_trace(z[:n], grid, config.boundary)
        return TrapezoidPropagator(M, config.time, trace, 2 * n)
    if config.equation == "beam":
        M = beam_generator(grid, a)
        trace = lambda z: _torque_trace(z[:n], grid, config.boundary)
        return TrapezoidPropagator(M, config.time, trace, 2 * n)
    if config.equation == "heat":
        M = -laplacian_matrix(grid, q)
        trace = lambda z: _neumann_trace(z, grid, config.boundary)
        return TrapezoidPropagator(M, config.time, trace, n)
    raise ValueError(f"unknown equation {config.equation!r}")


# ---------------------------------------------------------------------------
# user-facing solvers


@dataclass(frozen=True)
class SolveResult:
    """Trajectory plus boundary trace of one initial-boundary value problem."""

    grid: Grid1D
    config: ObservationConfig
    displacement: np.ndarray = field(repr=False)  # (n_steps+1, n_interior)
    velocity: np.ndarray | None = field(repr=False, default=None)
    trace: TraceSignal = None

    @property
    def final(self) -> np.ndarray:
        return self.displacement[-1]


def _values(u, grid: Grid1D, dtype=float):
    if u is None:
        return np.zeros(grid.n_interior)
    if isinstance(u, CoefficientField):
        return u.values
    arr = np.asarray(u)
    if arr.shape != (grid.n_interior,):
        raise ValueError(f"initial data shape {arr.shape} does not match grid")
    return arr


def _normalize_source(source, config, grid, n_state, velocity_block):
    """Accept (lam_samples, f_values) or full (nt+1, n) arrays; lift to state size."""
    if source is None:
        return None
    if isinstance(source, tuple) and len(source) == 2:
        lam, f = source
        lam = np.asarray(lam)
        if lam.shape != (config.time.n_steps + 1,):
            raise ValueError("modulation samples must match the time grid")
        f = f.values if isinstance(f, CoefficientField) else np.asarray(f)
        if f.shape != (grid.n_interior,):
            raise ValueError("source profile does not match the grid")
        X = np.zeros(n_state, dtype=complex if np.iscomplexobj(f) else float)
        if velocity_block:
            X[grid.n_interior:] = f
        else:
            X[:] = f
        return ("separable", lam, X[:, None])
    F = np.asarray(source)
    if F.shape != (config.time.n_steps + 1, grid.n_interior):
        raise ValueError("general source must have shape (n_steps+1, n_interior)")
    if velocity_block:
        lifted = np.zeros((F.shape[0], n_state), dtype=F.dtype)
        lifted[:, grid.n_interior:] = F
        return ("general", lifted)
    return ("general", F)


def solve_wave(
    q: CoefficientField | None,
    a: CoefficientField | None,
    u0,
    u1,
    config: ObservationConfig,
    source=None,
) -> SolveResult:
    """Integrate u_tt - u_xx + q u + a u_t = source with Dirichlet BC."""
    grid = None
    for cand in (q, a, u0, u1):
        if isinstance(cand, CoefficientField):
            grid = cand.grid
            break
    if grid is None:
        raise ValueError("solve_wave needs a CoefficientField to fix the grid")
    if config.equation != "wave":
        raise ValueError("config.equation must be 'wave'")
    prop = make_propagator(config, grid, q=q, a=a)
    n = grid.n_interior
    z0 = np.concatenate([_values(u0, grid), _values(u1, grid)])
    src = _normalize_source(source, config, grid, 2 * n, velocity_block=True)
    traces, states = prop.run(z0, source=src, store_states=True)
    return SolveResult(
        grid,
        config,
        displacement=states[:, :n, 0],
        velocity=states[:, n:, 0],
        trace=TraceSignal(config, traces[0]),
    )


def solve_beam(
    a: CoefficientField | None,
    u0,
    u1,
    config: ObservationConfig,
    source=None,
) -> SolveResult:
    """Integrate u_tt + u_xxxx + a u_t = source with clamped BC on (0,1)."""
    if config.equation != "beam":
        raise ValueError("config.equation must be 'beam'")
    grid = a.grid
    prop = make_propagator(config, grid, a=a)
    n = grid.n_interior
    z0 = np.concatenate([_values(u0, grid), _values(u1, grid)])
    src = _normalize_source(source, config, grid, 2 * n, velocity_block=True)
    traces, states = prop.run(z0, source=src, store_states=True)
    return SolveResult(
        grid,
        config,
        displacement=states[:, :n, 0],
        velocity=states[:, n:, 0],
        trace=TraceSignal(config, traces[0]),
    )


def solve_heat(
    q: CoefficientField | None,
    u0,
    config: ObservationConfig,
    source=None,
) -> SolveResult:
    """Integrate u_t - u_xx + q u = source (Crank-Nicolson), Dirichlet BC."""
    if config.equation != "heat":
        raise ValueError("config.equation must be 'heat'")
    grid = q.grid
    prop = make_propagator(config, grid, q=q)
    n = grid.n_interior
    src = _normalize_source(source, config, grid, n, velocity_block=False)
    traces, states = prop.run(_values(u0, grid), source=src, store_states=True)
    return SolveResult(
        grid,
        config,
        displacement=states[:, :, 0],
        velocity=None,
        trace=TraceSignal(config, traces[0]),
    )


def wave_energy(result: SolveResult, q: CoefficientField | None = None) -> np.ndarray:
    """Discrete energy 0.5(|u_t|_2^2 + |u_x|_2^2 + (qu,u)) along the trajectory."""
    from .grid import h01_seminorm_sq

    grid = result.grid
    h = grid.h
    u, v = result.displacement, result.velocity
    kinetic = 0.5 * h * np.sum(v**2, axis=1)
    potential = np.array([0.5 * h01_seminorm_sq(grid, row) for row in u])
    if q is not None:
        potential += 0.5 * h * np.sum(q.values[None, :] * u**2, axis=1)
    return kinetic + potential


def heat_shift_identity_check(q: CoefficientField, phi, config: ObservationConfig) -> float:
    """Relative L2(Q) residual between d/dt of the phi-driven heat solution and
    the solution with initial state phi(.,0) and source d(phi)/dt."""
    grid = q.grid
    time = config.time
    if callable(phi):
        t = time.t
        phi_arr = np.stack([np.asarray(phi(grid.nodes, ti), dtype=float) for ti in t])
    else:
        phi_arr = np.asarray(phi, dtype=float)
    if phi_arr.shape != (time.n_steps + 1, grid.n_interior):
        raise ValueError("phi must be sampled on the space-time grid")

    u_phi = solve_heat(q, np.zeros(grid.n_interior), config, source=phi_arr)
    lhs = time_derivative(u_phi.displacement.T, time).T

    dphi = time_derivative(phi_arr.T, time).T
    rhs = solve_heat(q, phi_arr[0], config, source=dphi)

    w = trapezoid_weights(time)
    diff = lhs - rhs.displacement
    num = np.sqrt(grid.h * np.sum(w[:, None] * diff**2))
    den = np.sqrt(grid.h * np.sum(w[:, None] * rhs.displacement**2))
    return float(num / den) if den > 0 else float(num)


# ---------------------------------------------------------------------------
# IB operators


@dataclass(frozen=True)
class IBOperatorMatrix:
    """Discretized initial-to-boundary map on a finite probe dictionary.

    Column j holds the stacked trace of probe j; the Gram matrices encode the
    norms of the probe-coefficient domain and of the H1-in-time trace range.
    """

    kind: str
    config: ObservationConfig
    matrix: np.ndarray = field(repr=False)       # (n_obs*(nt+1), n_cols)
    domain_gram: np.ndarray = field(repr=False)  # (n_cols, n_cols) SPD
    range_gram: sp.spmatrix = field(repr=False)
    probes: tuple[str, ...] = ()
    K: int = 0

    def __post_init__(self):
        if self.matrix.shape[1] != self.domain_gram.shape[0]:
            raise ValueError("domain Gram does not match probe count")
        if self.matrix.shape[0] != self.range_gram.shape[0]:
            raise ValueError("range Gram does not match stacked trace length")

    def diff(self, other: "IBOperatorMatrix") -> "IBOperatorMatrix":
        if self.kind != other.kind or self.matrix.shape != other.matrix.shape:
            raise ValueError("operators were assembled with different probes")
        return replace(self, matrix=self.matrix - other.matrix)


def assemble_ib_operator(
    kind: str,
    coefficients: dict,
    basis: SpectralBasis,
    K: int,
    config: ObservationConfig,
) -> IBOperatorMatrix:
    """Assemble the probe-to-trace matrix for one IB operator.

    kind selects the probe dictionary: 'potential' (u0 = phi_j, undamped),
    'damping' (u1 = phi_j), 'joint' (pairs (phi_j, 0) and (0, w_j phi_j),
    2K real columns), 'heat' (u0 = phi_j), 'beam_damping' (u1 = beam mode j).
    coefficients supplies q and/or a for the dynamics.
    """
    if K < 1 or K > basis.size:
        raise ValueError(f"K={K} out of range 1..{basis.size}")
    grid = basis.grid
    n = grid.n_interior
    q = coefficients.get("q")
    a = coefficients.get("a")
    lam = basis.eigenvalues[:K]
    modes = basis.eigenvectors[:, :K]

    if kind == "potential":
        prop = make_propagator(config, grid, q=q, a=None)
        Z0 = np.zeros((2 * n, K))
        Z0[:n] = modes
        dom = np.diag(1.0 + lam**2)
        labels = tuple(f"u0=phi_{j+1}" for j in range(K))
    elif kind == "damping":
        prop = make_propagator(config, grid, q=q, a=a)
        Z0 = np.zeros((2 * n, K))
        Z0[n:] = modes
        dom = np.diag(lam)
        labels = tuple(f"u1=phi_{j+1}" for j in range(K))
    elif kind == "joint":
        prop = make_propagator(config, grid, q=q, a=a)
        Z0 = np.zeros((2 * n, 2 * K))
        Z0[:n, 0::2] = modes
        Z0[n:, 1::2] = modes * np.sqrt(lam)[None, :]
        dom = np.zeros(2 * K)
        dom[0::2] = 1.0 + lam**2
        dom[1::2] = lam**2
        dom = np.diag(dom)
        labels = tuple(
            f"{tag}_{j+1}" for j in range(K) for tag in ("cos", "sin")
        )
    elif kind == "heat":
        prop = make_propagator(config, grid, q=q)
        Z0 = modes
        dom = np.diag(lam)
        labels = tuple(f"u0=phi_{j+1}" for j in range(K))
    elif kind == "beam_damping":
        prop = make_propagator(config, grid, a=a)
        Z0 = np.zeros((2 * n, K))
        Z0[n:] = modes
        dom = np.diag(lam)  # |f_j|_{H^2_0}^2 = rho_j^2 = beam eigenvalue
        labels = tuple(f"u1=mode_{j+1}" for j in range(K))
    else:
        raise ValueError(f"unknown IB operator kind {kind!r}")

    traces, _ = prop.run(Z0)
    cols = traces.reshape(traces.shape[0], -1).T  # stacked (n_obs*(nt+1), n_cols)
    return IBOperatorMatrix(
        kind=kind,
        config=config,
        matrix=cols,
        domain_gram=dom,
        range_gram=range_gram(config, "h1"),
        probes=labels,
        K=K,
    )


def _check_spd(mat, name: str):
    arr = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
    if not np.allclose(arr, arr.T, rtol=0, atol=1e-10 * (1 + np.abs(arr).max())):
        raise ValueError(f"{name} Gram is not symmetric")
    try:
        np.linalg.cholesky(arr)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} Gram is not positive definite") from exc


def operator_norm(op: IBOperatorMatrix, tol: float = 1e-8, maxit: int = 10_000) -> float:
    """Largest generalized singular value of the probe-to-trace matrix.

    Power iteration on the normal operator G^-1 M^T R M; the domain Gram G
    and range Gram R supply the metrics.
    """
    M = op.matrix
    if not np.any(M):
        return 0.0
    _check_spd(op.domain_gram, "domain")
    R = op.range_gram
    # R is SPD by construction (trapezoid weights plus a squared derivative);
    # verify symmetry cheaply.
    if abs(R - R.T).max() > 1e-10:
        raise ValueError("range Gram is not symmetric")

    G = np.asarray(op.domain_gram)
    rng = np.random.default_rng(2718)
    v = rng.standard_normal(M.shape[1])
    v /= np.sqrt(v @ G @ v)
    history = []
    sigma2 = 0.0
    for _ in range(maxit):
        u = M.T @ (R @ (M @ v))
        new_sigma2 = float(v @ u)
        w = np.linalg.solve(G, u)
        nrm = np.sqrt(max(w @ G @ w, 0.0))
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        history.append(new_sigma2)
        if sigma2 > 0 and abs(new_sigma2 - sigma2) <= tol * new_sigma2:
            return float(np.sqrt(new_sigma2))
        sigma2 = new_sigma2
    raise NonConvergenceError(
        f"power iteration did not converge in {maxit} iterations", history=history
    )
