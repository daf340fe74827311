import numpy as np
import pytest
from scipy import integrate, signal

from symbreak import modes

RING = modes.RingModes.with_fringes(4, L=1.0)
GAUSS = modes.GaussianModes(omega=1.0, d=12.0)


def test_ring_modulus_and_orthonormality():
    r = np.linspace(0, RING.L, 257)
    np.testing.assert_allclose(np.abs(modes.eval_mode(RING, "A", r)) ** 2, 1 / RING.L, rtol=1e-14)
    # exact on the ring: trapezoid on a periodic grid integrates e^{2ikr} to zero
    cross = np.conj(modes.eval_mode(RING, "A", r)) * modes.eval_mode(RING, "B", r)
    assert abs(np.trapezoid(cross, r)) < 1e-12


def test_ring_rejects_bad_input():
    with pytest.raises(ValueError):
        modes.eval_mode(RING, "A", 1.5)
    with pytest.raises(ValueError):
        modes.RingModes(k=3.0, L=1.0)
    with pytest.raises(ValueError):
        modes.eval_mode(RING, "C", 0.1)


def test_gaussian_initial_width():
    r = np.linspace(-30, 30, 20001)
    dens = np.abs(modes.eval_mode(GAUSS, "A", r, 0.0)) ** 2
    mean = np.trapezoid(r * dens, r)
    var = np.trapezoid((r - mean) ** 2 * dens, r)
    assert mean == pytest.approx(-GAUSS.d / 2)
    # |phi|^2 of the trap ground state has variance sigma0^2 / 2
    assert var == pytest.approx(GAUSS.sigma0**2 / 2, rel=1e-9)
    assert GAUSS.sigma0 == pytest.approx(1.0)


@pytest.mark.parametrize("t", [0.0, 3.0, 40.0])
def test_gaussian_norm_conserved(t):
    for which in "AB":
        f = lambda x: abs(complex(modes.eval_mode(GAUSS, which, x, t))) ** 2
        lo, hi = GAUSS.domain(t)
        val, _ = integrate.quad(f, lo, hi, limit=400, epsabs=1e-13, points=[-GAUSS.d / 2, GAUSS.d / 2])
        assert val == pytest.approx(1.0, abs=1e-9)


def test_gaussian_overlap_guard():
    assert GAUSS.overlap < 1e-6
    with pytest.raises(ValueError):
        modes.GaussianModes(omega=1.0, d=3.0)


def test_gaussian_fringe_spacing_large_t():
    t = 200.0
    # window of a few widths sigma(t) ~ 200 holds several fringes of spacing ~105
    grid = np.linspace(-500.0, 500.0, 200_001)
    prof = modes.fringe_profile(GAUSS, 10, 0.0, t, grid)
    flat = modes.no_fringe_profile(GAUSS, 10, t, grid)
    # strip the envelope so peak positions are not pulled by it
    fringe = (prof.values - flat.values) / (2 * 10 * np.abs(modes.chi(GAUSS, grid, t)))
    peaks, _ = signal.find_peaks(fringe)
    spacing = np.median(np.diff(grid[peaks]))
    assert spacing == pytest.approx(2 * np.pi * t / GAUSS.d, rel=1e-3)
    assert GAUSS.fringe_period(t) == pytest.approx(spacing, rel=1e-4)


def test_no_fringe_profile_ring():
    grid = np.linspace(0, 1, 101)
    prof = modes.no_fringe_profile(RING, 7, 0.0, grid)
    np.testing.assert_allclose(prof.values, 14.0, rtol=1e-14)
    assert prof.integrate() == pytest.approx(14.0)


@pytest.mark.parametrize("theta", [0.0, 1.1, -2.4])
def test_fringe_profile_ring_closed_form(theta):
    grid = np.linspace(0, 1, 513)
    N = 9
    prof = modes.fringe_profile(RING, N, theta, 0.0, grid)
    expected = 2 * N / RING.L * (1 + np.cos(2 * RING.k * grid + theta))
    np.testing.assert_allclose(prof.values, expected, atol=1e-12)
    assert prof.integrate() == pytest.approx(2 * N, rel=1e-12)
    shifted = modes.fringe_profile(RING, N, theta + 2 * np.pi, 0.0, grid)
    np.testing.assert_allclose(shifted.values, prof.values, atol=1e-12)


def test_ring_visibility_is_one():
    grid = np.linspace(0, 1, 1025)
    assert modes.visibility(modes.fringe_profile(RING, 5, 0.0, 0.0, grid)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("model,t,tol", [(RING, 0.0, 1e-9), (GAUSS, 25.0, 1e-6)])
def test_theta_average_removes_fringes(model, t, tol):
    lo, hi = model.domain(t)
    grid = np.linspace(lo, hi, 801)
    N = 3
    thetas = 2 * np.pi * np.arange(64) / 64
    avg = np.mean([modes.fringe_profile(model, N, th, t, grid).values for th in thetas], axis=0)
    flat = modes.no_fringe_profile(model, N, t, grid).values
    np.testing.assert_allclose(avg, flat, atol=tol * flat.max())


def test_gaussian_profiles_integrate_to_2n():
    t = 10.0
    lo, hi = GAUSS.domain(t)
    grid = np.linspace(lo, hi, 40001)
    assert modes.fringe_profile(GAUSS, 4, 0.5, t, grid).integrate() == pytest.approx(8.0, rel=1e-6)
    assert modes.no_fringe_profile(GAUSS, 4, t, grid).integrate() == pytest.approx(8.0, rel=1e-6)


def test_chi_values():
    r = np.linspace(0, 1, 17)
    c = modes.chi(RING, r)
    np.testing.assert_allclose(c, np.exp(2j * RING.k * r) / RING.L, atol=1e-14)
    pa, pb = RING.amplitudes(r)
    np.testing.assert_allclose(np.abs(c) ** 2, np.abs(pa) ** 2 * np.abs(pb) ** 2, rtol=1e-13)
    # separated traps at t = 0: chi vanishes at both trap centres
    for x in (-GAUSS.d / 2, GAUSS.d / 2):
        assert abs(modes.chi(GAUSS, x, 0.0)) < 1e-12


def test_profile_csv_roundtrip():
    grid = np.linspace(0, 1, 5)
    text = modes.fringe_profile(RING, 2, 0.0, 0.0, grid).to_csv(["N=2"])
    lines = text.splitlines()
    assert lines[0] == "# N=2"
    assert lines[1] == "position,value"
    assert len(lines) == 7
