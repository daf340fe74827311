import json

import numpy as np
import pytest
from scipy import stats

from symbreak import detection, fock, modes
from symbreak.fock import FockSectorState

RING = modes.RingModes.with_fringes(4, L=1.0)


def test_coefficients_number_state():
    A, B, C = detection.conditional_density_coefficients(fock.number_state(7))
    assert (A, B) == (7, 7) and C == 0
    r = np.linspace(0, 1, 33)
    dens = detection.conditional_density((A, B, C), RING, r)
    np.testing.assert_allclose(dens, 14.0, rtol=1e-13)


@pytest.mark.parametrize("theta", [0.0, 1.2, 4.0])
def test_coefficients_phase_state(theta):
    N = 12
    coeffs = detection.conditional_density_coefficients(fock.phase_state(N, theta))
    assert abs(coeffs[2]) == pytest.approx(N)
    r = np.linspace(0, 1, 65)
    dens = detection.conditional_density(coeffs, RING, r)
    np.testing.assert_allclose(dens, 2 * N * (1 + np.cos(2 * RING.k * r + theta)), atol=1e-10)


def test_coefficients_single_atom():
    assert detection.conditional_density_coefficients(FockSectorState(1, [0, 1])) == (1.0, 0.0, 0j)
    with pytest.raises(ValueError):
        detection.conditional_density_coefficients(FockSectorState(0, [1]))


@pytest.mark.parametrize("model,t", [(RING, 0.0), (modes.GaussianModes(1.0, 12.0), 15.0)])
def test_density_equals_detection_norm(model, t):
    state = fock.superposition_state(6, [0.3, 2.0, 3.5], [1.0, 0.6j, -0.2])
    coeffs = detection.conditional_density_coefficients(state)
    lo, hi = model.domain(t)
    for r in np.linspace(lo, hi, 11):
        pa, pb = model.amplitudes(r, t)
        out = fock.detect_at(complex(pa), complex(pb), state)
        assert detection.conditional_density(coeffs, model, r, t) == pytest.approx(
            np.linalg.norm(out.amplitudes) ** 2, rel=1e-12, abs=1e-14)


def test_sample_flat_density_ks():
    rng = np.random.default_rng(11)
    grid = detection.sampling_grid(RING)
    coeffs = (5.0, 5.0, 0j)
    draws = np.array([detection.sample_position(coeffs, RING, grid, rng) for _ in range(100_000)])
    assert stats.kstest(draws, "uniform", args=(0, 1)).statistic < 0.02


def test_sample_fringe_density_histogram():
    rng = np.random.default_rng(12)
    grid = detection.sampling_grid(RING)
    # phase state at theta=0: density 1 + cos(2kr)
    coeffs = detection.conditional_density_coefficients(fock.phase_state(3, 0.0))
    n = 50_000
    draws = np.array([detection.sample_position(coeffs, RING, grid, rng) for _ in range(n)])
    edges = np.linspace(0, 1, 41)
    counts = np.histogram(draws, edges)[0]
    k2 = 2 * RING.k
    cdf = edges + np.sin(k2 * edges) / k2
    p = np.diff(cdf)
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_sample_deterministic_and_rejects_zero():
    grid = detection.sampling_grid(RING)
    coeffs = (3.0, 1.0, 0.5 + 0.2j)
    a = [detection.sample_position(coeffs, RING, grid, np.random.default_rng(3)) for _ in range(1)]
    b = [detection.sample_position(coeffs, RING, grid, np.random.default_rng(3)) for _ in range(1)]
    assert a == b
    with pytest.raises(ValueError):
        detection.sample_position((0.0, 0.0, 0j), RING, grid, np.random.default_rng(0))


def test_sampling_grid_resolution():
    grid = detection.sampling_grid(modes.RingModes.with_fringes(200))
    cells_per_fringe = (grid.size - 1) / 200
    assert cells_per_fringe >= 64


def test_run_no_detections():
    run = detection.run_detection(10, 0, RING, seed=1)
    assert run.visibility == 0.0 and run.phase_estimate is None
    assert run.positions == []


def test_run_builds_visibility():
    run = detection.run_detection(500, 1000, RING, seed=2024)
    assert len(run.positions) == 1000
    assert run.visibility > 0.9
    assert np.all(run.visibility_trajectory <= 1 + 1e-12)
    assert run.final_state.total_particles == 0


def test_run_out_of_range():
    with pytest.raises(ValueError):
        detection.run_detection(5, 11, RING, seed=0)


@pytest.mark.parametrize("theta0", [0.5, 3.0, 5.9])
def test_phase_state_is_a_fixed_point(theta0):
    n_detect = 200
    run = detection.run_detection(200, n_detect, RING, seed=7, initial_state=fock.phase_state(200, theta0))
    vis = run.visibility_trajectory
    np.testing.assert_allclose(vis, 1.0, atol=1e-9)
    err = abs(np.angle(np.exp(1j * (run.phase_estimate - theta0))))
    assert err < 0.1
    assert err < 3 / np.sqrt(run.visibility * n_detect)


def test_norm_preserved_each_step():
    rng = np.random.default_rng(4)
    grid = detection.sampling_grid(RING)
    state = fock.number_state(40)
    for _ in range(60):
        coeffs = detection.conditional_density_coefficients(state)
        r = detection.sample_position(coeffs, RING, grid, rng)
        pa, pb = RING.amplitudes(r)
        state = fock.detect_at(complex(pa), complex(pb), state).normalized()
        assert abs(state.norm() - 1) < 1e-10
    run = detection.run_detection(40, 60, RING, seed=5)
    assert abs(run.final_state.norm() - 1) < 1e-10


def test_visibility_grows_in_most_runs():
    grows = 0
    runs = 100
    for i in range(runs):
        run = detection.run_detection(100, 40, RING, seed=detection.run_seed(99, i))
        vis = run.visibility_trajectory
        grows += vis[-1] > vis[0]
    assert grows / runs > 0.95


def test_first_detection_marginal():
    # non-flat initial state so the check has teeth
    state = fock.superposition_state(8, [0.4, 1.0], [1.0, 0.8])
    n = 4000
    firsts = np.array([detection.run_detection(8, 1, RING, seed=s, initial_state=state).positions[0]
                       for s in range(n)])
    coeffs = detection.conditional_density_coefficients(state)
    edges = np.linspace(0, 1, 17)
    fine = np.linspace(0, 1, 16 * 400 + 1)
    dens = detection.conditional_density(coeffs, RING, fine) / state.total_particles
    cum = np.concatenate([[0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(fine))])
    p = np.diff(np.interp(edges, fine, cum))
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    counts = np.histogram(firsts, edges)[0]
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_ml_estimate_agrees_with_conditional_phase():
    run = detection.run_detection(300, 300, RING, seed=31)
    ml = detection.ml_phase_estimate(run.positions, RING)
    assert abs(np.angle(np.exp(1j * (ml - run.phase_estimate)))) < 0.15


def test_gaussian_model_run():
    model = modes.GaussianModes(1.0, 12.0)
    run = detection.run_detection(60, 100, model, t=30.0, seed=3)
    lo, hi = model.domain(30.0)
    assert all(lo <= x <= hi for x in run.positions)
    assert 0.0 <= run.visibility <= 1.0


def test_ensemble_report_consistency():
    rep = detection.run_ensemble(50, 60, RING, n_runs=20, master_seed=8)
    assert rep.phase_counts.sum() == 20
    assert rep.mean_detections == pytest.approx(60)
    assert len(rep.seeds) == len(set(rep.seeds)) == 20
    again = detection.run_ensemble(50, 60, RING, n_runs=20, master_seed=8)
    assert json.dumps(rep.to_dict()) == json.dumps(again.to_dict())
    assert rep.histogram_csv() == again.histogram_csv()
    other = detection.run_ensemble(50, 60, RING, n_runs=20, master_seed=9)
    assert other.seeds != rep.seeds


def test_ensemble_parallel_matches_serial():
    serial = detection.run_ensemble(30, 40, RING, n_runs=6, master_seed=3, threads=1)
    parallel = detection.run_ensemble(30, 40, RING, n_runs=6, master_seed=3, threads=2)
    assert json.dumps(serial.to_dict()) == json.dumps(parallel.to_dict())


def test_run_json_roundtrip():
    run = detection.run_detection(10, 5, RING, seed=1)
    d = json.loads(json.dumps(run.to_dict()))
    assert d["n_detected"] == 5 and d["model"]["variant"] == "RingModes"
    assert run.positions_csv().splitlines()[0] == "index,position"
