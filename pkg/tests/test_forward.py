import numpy as np
import pytest

from obslab.forward import (
    IBOperatorMatrix,
    NonConvergenceError,
    ObservationConfig,
    TraceSignal,
    assemble_ib_operator,
    heat_shift_identity_check,
    make_propagator,
    operator_norm,
    range_gram,
    solve_beam,
    solve_heat,
    solve_wave,
    wave_energy,
)
from obslab.grid import CoefficientField, Grid1D, TimeGrid, h01_seminorm_sq
from obslab.spectral import beam_eigenpairs, beam_matrix, dirichlet_eigenpairs


@pytest.fixture(scope="module")
def wave_setup():
    g = Grid1D(np.pi, 1000)
    q0 = CoefficientField.zero(g)
    basis = dirichlet_eigenpairs(q0, 5)
    tg = TimeGrid(2 * np.pi, 3000)
    cfg = ObservationConfig("wave", tg, ("left",))
    return g, q0, basis, cfg


def test_wave_mode_traces(wave_setup):
    # reference solution: u = cos(t sqrt(lam_k)) phi_k, left Neumann trace
    # -k sqrt(2/pi) cos(k t)
    g, q0, basis, cfg = wave_setup
    t = cfg.time.t
    for k in (1, 2, 3):
        res = solve_wave(q0, None, basis.mode(k), None, cfg)
        ref = -k * np.sqrt(2 / np.pi) * np.cos(np.sqrt(basis.eigenvalues[k - 1]) * t)
        err = np.linalg.norm(res.trace.values[0] - ref) / np.linalg.norm(ref)
        assert err <= 1e-3


def test_wave_zero_data_is_zero(wave_setup):
    g, q0, _, cfg = wave_setup
    res = solve_wave(q0, None, None, None, cfg)
    assert np.all(res.displacement == 0.0)
    assert np.all(res.trace.values == 0.0)


def test_wave_damped_mode_decay_rate(wave_setup):
    # constant damping c: the first mode decays like exp(-c t / 2)
    g, q0, basis, cfg = wave_setup
    c = 0.2
    a = CoefficientField.constant(g, c)
    lam1 = basis.eigenvalues[0]
    s = -c / 2 + 1j * np.sqrt(lam1 - c**2 / 4)
    u0 = basis.mode(1).values.astype(complex)
    re = solve_wave(q0, a, u0.real, (s * u0).real, cfg)
    im = solve_wave(q0, a, u0.imag, (s * u0).imag, cfg)
    h = g.h
    stride = 300
    t = cfg.time.t[::stride]
    norms = []
    for m in range(0, cfg.time.n_steps + 1, stride):
        u = re.displacement[m] + 1j * im.displacement[m]
        v = re.velocity[m] + 1j * im.velocity[m]
        e = (
            h01_seminorm_sq(g, u.real)
            + h01_seminorm_sq(g, u.imag)
            + h * np.sum(np.abs(v) ** 2)
        )
        norms.append(e)
    slope = np.polyfit(t, 0.5 * np.log(norms), 1)[0]
    assert slope == pytest.approx(-c / 2, rel=0.05)


def test_wave_energy_dissipation(wave_setup):
    g, q0, basis, cfg = wave_setup
    q = CoefficientField(g, 0.5 + 0.3 * np.sin(g.nodes), nonneg=True)
    a = CoefficientField(g, 0.1 * (1 + np.cos(g.nodes)) / 2, nonneg=True)
    res = solve_wave(q, a, basis.mode(2), basis.mode(1), cfg)
    E = wave_energy(res, q)
    assert np.all(np.diff(E) <= 1e-8 * E[0])


def test_wave_duhamel_consistency():
    # source solve equals the discrete Duhamel superposition to O(dt^2)
    g = Grid1D(np.pi, 24)
    q = CoefficientField(g, 0.3 * np.sin(g.nodes))
    f = CoefficientField(g, g.nodes * (np.pi - g.nodes))
    errs = []
    for steps in (40, 80):
        tg = TimeGrid(1.0, steps)
        cfg = ObservationConfig("wave", tg, ("left",))
        lam = np.cos(3 * tg.t)
        res = solve_wave(q, None, None, None, cfg, source=(lam, f))
        prop = make_propagator(cfg, g, q=q)
        n = g.n_interior
        z0 = np.zeros(2 * n)
        z0[n:] = f.values
        _, states = prop.run(z0, store_states=True)
        dt = tg.dt
        hom = states[:, :n, 0]  # displacement of homogeneous solve started at (0, f)
        final = np.zeros(n)
        for j in range(steps + 1):
            w = dt if 0 < j < steps else dt / 2
            final += w * lam[steps - j] * hom[j]
        errs.append(np.max(np.abs(res.displacement[-1] - final)))
    order = np.log2(errs[0] / errs[1])
    assert errs[1] < 1e-3
    assert 1.5 <= order <= 2.7


def test_wave_trace_h2_convergence():
    q_fn = lambda x: 0.4 * np.sin(x)
    traces = {}
    for n in (125, 250, 500):
        g = Grid1D(np.pi, n)
        q = CoefficientField(g, q_fn(g.nodes))
        tg = TimeGrid(2.0, 2000)
        cfg = ObservationConfig("wave", tg, ("left",))
        u0 = CoefficientField(g, np.sin(g.nodes))
        res = solve_wave(q, None, u0, None, cfg)
        traces[n] = res.trace.values[0]
    e1 = np.linalg.norm(traces[125] - traces[500])
    e2 = np.linalg.norm(traces[250] - traces[500])
    order = np.log2(e1 / e2)
    assert 1.5 <= order <= 2.5


def test_heat_mode_decay(fine_grid, fine_basis):
    tg = TimeGrid(1.0, 1000)
    cfg = ObservationConfig("heat", tg, ("left",))
    q0 = CoefficientField.zero(fine_grid)
    for k in (1, 2):
        res = solve_heat(q0, fine_basis.mode(k), cfg)
        ref = np.exp(-fine_basis.eigenvalues[k - 1] * tg.t)[:, None] * fine_basis.mode(k).values[None, :]
        err = np.max(np.abs(res.displacement - ref)) / np.max(np.abs(ref))
        assert err <= 1e-4


def test_heat_single_mode_source(fine_grid, fine_basis):
    tg = TimeGrid(1.0, 1000)
    cfg = ObservationConfig("heat", tg, ("left",))
    q0 = CoefficientField.zero(fine_grid)
    lam1 = fine_basis.eigenvalues[0]
    res = solve_heat(q0, None, cfg, source=(np.ones(tg.n_steps + 1), fine_basis.mode(1)))
    ref = ((1 - np.exp(-lam1 * tg.t)) / lam1)[:, None] * fine_basis.mode(1).values[None, :]
    assert np.max(np.abs(res.displacement - ref)) <= 1e-6


def test_heat_positivity():
    g = Grid1D(np.pi, 60)
    q = CoefficientField(g, 0.5 * np.ones(g.n_interior), nonneg=True)
    tg = TimeGrid(0.5, 400)
    cfg = ObservationConfig("heat", tg, ("left",))
    u0 = CoefficientField(g, g.nodes * (np.pi - g.nodes))
    res = solve_heat(q, u0, cfg)
    assert np.min(res.displacement) >= -1e-10


def test_heat_shift_identity():
    g = Grid1D(np.pi, 500)
    q0 = CoefficientField.zero(g)
    cfg = ObservationConfig("heat", TimeGrid(1.0, 1000), ("left",))
    r = heat_shift_identity_check(q0, lambda x, t: np.exp(-t) * np.sin(x), cfg)
    assert r <= 1e-2

    # phi independent of t: d/dt u_phi = u_{0, phi(.,0)}
    r2 = heat_shift_identity_check(q0, lambda x, t: np.sin(x) * np.ones_like(x), cfg)
    assert r2 <= 1e-2

    # phi(.,0) = 0: d/dt u_phi = u_{dphi/dt, 0}
    r3 = heat_shift_identity_check(q0, lambda x, t: t * np.sin(x), cfg)
    assert r3 <= 1e-2


def test_beam_mode_frequency():
    g = Grid1D(1.0, 200)
    a = CoefficientField.zero(g)
    basis = beam_eigenpairs(2, g)
    tg = TimeGrid(0.5, 1500)
    cfg = ObservationConfig("beam", tg)
    res = solve_beam(a, basis.mode(1), None, cfg)
    rho1 = np.sqrt(basis.eigenvalues[0])
    ref = res.trace.values[0, 0] * np.cos(rho1 * tg.t)
    err = np.linalg.norm(res.trace.values[0] - ref) / np.linalg.norm(ref)
    assert err <= 1e-2
    assert rho1 == pytest.approx(22.3733, rel=1e-2)


def test_beam_zero_data():
    g = Grid1D(1.0, 60)
    res = solve_beam(CoefficientField.zero(g), None, None, ObservationConfig("beam", TimeGrid(0.3, 100)))
    assert np.all(res.displacement == 0.0)


def test_beam_energy_nonincreasing():
    g = Grid1D(1.0, 100)
    a = CoefficientField.constant(g, 0.1, nonneg=True)
    basis = beam_eigenpairs(2, g)
    tg = TimeGrid(0.4, 800)
    cfg = ObservationConfig("beam", tg)
    res = solve_beam(a, basis.mode(1), basis.mode(2), cfg)
    A = beam_matrix(g)
    h = g.h
    E = np.array(
        [
            0.5 * (h * v @ v + h * u @ (A @ u))
            for u, v in zip(res.displacement, res.velocity)
        ]
    )
    assert np.all(np.diff(E) <= 1e-8 * E[0])


def test_observation_config_validation():
    tg = TimeGrid(1.0, 100)
    with pytest.raises(ValueError):
        ObservationConfig("wave", tg, ())
    with pytest.raises(ValueError):
        ObservationConfig("beam", tg, ("right",))
    with pytest.raises(ValueError):
        ObservationConfig("plasma", tg)


def test_trace_signal_validation():
    tg = TimeGrid(1.0, 100)
    cfg = ObservationConfig("wave", tg, ("left",))
    with pytest.raises(ValueError):
        TraceSignal(cfg, np.zeros((1, 5)))
    with pytest.raises(ValueError):
        TraceSignal(cfg, np.full((1, 101), np.nan))


# ---------------------------------------------------------------------------
# IB operators


@pytest.fixture(scope="module")
def small_heat():
    g = Grid1D(np.pi, 120)
    q0 = CoefficientField.zero(g)
    basis = dirichlet_eigenpairs(q0, 16)
    cfg = ObservationConfig("heat", TimeGrid(0.6, 300), ("left", "right"))
    return g, q0, basis, cfg


def test_ib_operator_zero_difference(small_heat):
    g, q0, basis, cfg = small_heat
    op1 = assemble_ib_operator("heat", {"q": q0}, basis, 3, cfg)
    op2 = assemble_ib_operator("heat", {"q": q0}, basis, 3, cfg)
    assert operator_norm(op1.diff(op2)) == 0.0


def test_ib_heat_columns_closed_form(small_heat):
    # flux of e^{-k^2 t} phi_k: left -k sqrt(2/pi) e^{-k^2 t}, right alternates
    g, q0, basis, cfg = small_heat
    op = assemble_ib_operator("heat", {"q": q0}, basis, 3, cfg)
    nt = cfg.time.n_steps + 1
    t = cfg.time.t
    for k in (1, 2, 3):
        col = op.matrix[:, k - 1].reshape(2, nt)
        ref_left = -k * np.sqrt(2 / np.pi) * np.exp(-k**2 * t)
        ref_right = (-1) ** k * k * np.sqrt(2 / np.pi) * np.exp(-k**2 * t)
        assert np.linalg.norm(col[0] - ref_left) / np.linalg.norm(ref_left) <= 1e-2
        assert np.linalg.norm(col[1] - ref_right) / np.linalg.norm(ref_right) <= 1e-2


def test_ib_joint_column_count(wave_setup):
    g, q0, basis, _ = wave_setup
    cfg = ObservationConfig("wave", TimeGrid(2 * np.pi, 400), ("left",))
    op = assemble_ib_operator("joint", {"q": q0, "a": None}, basis, 3, cfg)
    assert op.matrix.shape[1] == 6
    assert op.domain_gram.shape == (6, 6)


def test_ib_difference_bounded_in_probe_count(small_heat):
    # Lipschitz bound on the operator difference is uniform in K
    g, q0, basis, cfg = small_heat
    q = q0 + CoefficientField(g, 0.2 * np.sin(g.nodes))
    norms = []
    for K in (4, 8, 12, 16):
        d = assemble_ib_operator("heat", {"q": q}, basis, K, cfg).diff(
            assemble_ib_operator("heat", {"q": q0}, basis, K, cfg)
        )
        norms.append(operator_norm(d))
    assert max(norms) <= 1.5 * norms[0]


def test_ib_continuity_at_base_point(small_heat):
    g, q0, basis, cfg = small_heat
    p = CoefficientField(g, np.sin(g.nodes))
    prev = np.inf
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        d = assemble_ib_operator("heat", {"q": q0 + eps * p}, basis, 4, cfg).diff(
            assemble_ib_operator("heat", {"q": q0}, basis, 4, cfg)
        )
        nrm = operator_norm(d)
        assert nrm < prev
        prev = nrm
    assert prev <= 1e-4


def test_operator_norm_euclidean_case():
    tg = TimeGrid(1.0, 8)
    cfg = ObservationConfig("wave", tg, ("left",))
    mat = np.zeros((9, 2))
    mat[0, 0], mat[1, 1] = 3.0, 1.0
    import scipy.sparse as sp

    op = IBOperatorMatrix(
        kind="potential",
        config=cfg,
        matrix=mat,
        domain_gram=np.eye(2),
        range_gram=sp.identity(9, format="csr"),
        probes=("a", "b"),
        K=2,
    )
    assert operator_norm(op) == pytest.approx(3.0, rel=1e-8)


def test_operator_norm_against_dense_oracle():
    rng = np.random.default_rng(11)
    M = rng.standard_normal((20, 20))
    A = rng.standard_normal((20, 20))
    G = A @ A.T + 20 * np.eye(20)
    B = rng.standard_normal((20, 20))
    R = B @ B.T + 20 * np.eye(20)
    import scipy.sparse as sp

    tg = TimeGrid(1.0, 19)
    cfg = ObservationConfig("wave", tg, ("left",))
    op = IBOperatorMatrix(
        kind="potential",
        config=cfg,
        matrix=M,
        domain_gram=G,
        range_gram=sp.csr_matrix(R),
        probes=tuple("p" * 20),
        K=20,
    )
    # dense generalized-SVD oracle
    LR = np.linalg.cholesky(R)
    LG = np.linalg.cholesky(G)
    oracle = np.linalg.svd(LR.T @ M @ np.linalg.inv(LG.T), compute_uv=False)[0]
    assert operator_norm(op) == pytest.approx(oracle, rel=1e-8)


def test_operator_norm_scaling_invariance():
    # doubling probe amplitudes rescales matrix and domain Gram consistently
    rng = np.random.default_rng(5)
    M = rng.standard_normal((30, 4))
    G = np.diag(rng.uniform(0.5, 2.0, 4))
    import scipy.sparse as sp

    tg = TimeGrid(1.0, 29)
    cfg = ObservationConfig("wave", tg, ("left",))
    base = IBOperatorMatrix("potential", cfg, M, G, sp.identity(30, format="csr"), ("p",) * 4, 4)
    scaled = IBOperatorMatrix("potential", cfg, 2 * M, 4 * G, sp.identity(30, format="csr"), ("p",) * 4, 4)
    assert operator_norm(base) == pytest.approx(operator_norm(scaled), rel=1e-7)


def test_operator_norm_rejects_bad_gram():
    tg = TimeGrid(1.0, 8)
    cfg = ObservationConfig("wave", tg, ("left",))
    import scipy.sparse as sp

    op = IBOperatorMatrix(
        "potential", cfg, np.ones((9, 2)), np.array([[1.0, 2.0], [2.0, 1.0]]),
        sp.identity(9, format="csr"), ("a", "b"), 2,
    )
    with pytest.raises(ValueError):
        operator_norm(op)


def test_operator_norm_nonconvergence_reports_history():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((15, 6))
    import scipy.sparse as sp

    tg = TimeGrid(1.0, 14)
    cfg = ObservationConfig("wave", tg, ("left",))
    op = IBOperatorMatrix(
        "potential", cfg, M, np.eye(6), sp.identity(15, format="csr"), ("p",) * 6, 6
    )
    with pytest.raises(NonConvergenceError) as exc:
        operator_norm(op, maxit=2)
    assert len(exc.value.history) == 2
