import json

import numpy as np
import pytest

from obslab.forward import ObservationConfig
from obslab.grid import CoefficientField, Grid1D, TimeGrid
from obslab.observability import estimate_kappa, perturbation_margin_check


@pytest.fixture(scope="module")
def wave_obs():
    g = Grid1D(np.pi, 150)
    q0 = CoefficientField.zero(g)
    cfg = ObservationConfig("wave", TimeGrid(2 * np.pi, 1200), ("left",))
    return g, q0, cfg


def test_kappa_positive_and_stable_in_K(wave_obs):
    # at tau = 2 pi the pair is exactly observable; kappa ~ sqrt(2) uniformly
    g, q0, cfg = wave_obs
    kappas = [estimate_kappa("wave", q0, None, cfg, K).kappa for K in (5, 10, 20)]
    assert min(kappas) > 0.5
    assert (max(kappas) - min(kappas)) / max(kappas) < 0.2


def test_kappa_monotone_nonincreasing_in_K(wave_obs):
    g, q0, cfg = wave_obs
    kappas = [estimate_kappa("wave", q0, None, cfg, K).kappa for K in (4, 8, 12, 16)]
    for a, b in zip(kappas, kappas[1:]):
        assert b <= a * (1 + 1e-9)


def test_kappa_decays_below_threshold(wave_obs):
    g, q0, _ = wave_obs
    cfg = ObservationConfig("wave", TimeGrid(np.pi / 2, 400), ("left",))
    with pytest.warns(UserWarning, match="below the 1D observability threshold"):
        k5 = estimate_kappa("wave", q0, None, cfg, 5).kappa
    with pytest.warns(UserWarning):
        k20 = estimate_kappa("wave", q0, None, cfg, 20).kappa
    assert k20 < 1e-3 * k5


def test_kappa_beam_any_time():
    g = Grid1D(1.0, 120)
    a = CoefficientField.zero(g)
    cfg = ObservationConfig("beam", TimeGrid(0.5, 1200))
    est = estimate_kappa("beam", None, a, cfg, 6)
    assert est.kappa > 0.1


def test_kappa_more_time_cannot_hurt(wave_obs):
    g, q0, _ = wave_obs
    k1 = estimate_kappa(
        "wave", q0, None, ObservationConfig("wave", TimeGrid(2 * np.pi, 1000), ("left",)), 6
    ).kappa
    k2 = estimate_kappa(
        "wave", q0, None, ObservationConfig("wave", TimeGrid(4 * np.pi, 2000), ("left",)), 6
    ).kappa
    assert k2 >= k1 * (1 - 1e-6)


def test_kappa_dt_invariance(wave_obs):
    g, q0, _ = wave_obs
    vals = []
    for steps in (1000, 2000):
        cfg = ObservationConfig("wave", TimeGrid(2 * np.pi, steps), ("left",))
        vals.append(estimate_kappa("wave", q0, None, cfg, 6).kappa)
    assert abs(vals[0] - vals[1]) / vals[1] <= 0.01


def test_estimate_report_json(wave_obs):
    g, q0, cfg = wave_obs
    est = estimate_kappa("wave", q0, None, cfg, 4)
    payload = json.loads(est.to_json())
    assert payload["equation"] == "wave"
    assert payload["K"] == 4
    assert payload["kappa"] > 0


def test_margin_zero_perturbation(wave_obs):
    g, q0, cfg = wave_obs
    report = perturbation_margin_check(
        "wave", q0, None, CoefficientField.constant(g, 1.0), "a", cfg, 6, sizes=(0.0,)
    )
    assert report["rows"][0]["ratio"] == pytest.approx(1.0, rel=1e-12)


def test_margin_small_damping(wave_obs):
    g, q0, cfg = wave_obs
    report = perturbation_margin_check(
        "wave", q0, None, CoefficientField.constant(g, 1.0), "a", cfg, 8, sizes=(0.05,)
    )
    assert report["rows"][0]["ratio"] >= 0.5


def test_margin_monotone_in_size(wave_obs):
    g, q0, cfg = wave_obs
    report = perturbation_margin_check(
        "wave", q0, None, CoefficientField.constant(g, 1.0), "a", cfg, 6,
        sizes=(0.01, 0.05, 0.1, 0.2),
    )
    ratios = [row["ratio"] for row in report["rows"]]
    for a, b in zip(ratios, ratios[1:]):
        assert b <= a * (1 + 1e-9)
    assert report["largest_size_with_margin"] is not None
