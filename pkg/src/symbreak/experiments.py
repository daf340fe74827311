"""Density-fluctuation scans combining the Fock sector with mode functions."""
from __future__ import annotations

import numpy as np

from . import fock
from .fluctuations import ScalingResult, fit_loglog_slope

__all__ = ["density_fluctuation_scan", "superposition_variance_scan", "phase_moments"]


def phase_moments(thetas, weights):
    """Means of ``e^{i theta}`` and ``e^{2 i theta}`` under ``|w|^2``."""
    p = np.abs(np.asarray(weights)) ** 2
    p = p / p.sum()
    thetas = np.asarray(thetas, dtype=float)
    return complex(p @ np.exp(1j * thetas)), complex(p @ np.exp(2j * thetas))


def density_fluctuation_scan(model, N_values, r, dV, theta=0.0, t=0.0) -> ScalingResult:
    """Shot-noise fluctuation of ``rho(r) dV`` in ``phase_state(N, theta)``."""
    if len(N_values) < 3:
        raise ValueError("scaling fit needs at least 3 N values")
    phi_a, phi_b = (complex(x) for x in model.amplitudes(r, t))
    means, variances = [], []
    for N in N_values:
        st = fock.smeared_density_stats(phi_a, phi_b, dV, fock.phase_state(N, theta))
        means.append(st.mean)
        variances.append(st.shot_noise_variance)
    means, variances = np.array(means), np.array(variances)
    rel = np.sqrt(variances) / means
    slope = fit_loglog_slope(np.asarray(N_values, dtype=float), rel)
    return ScalingResult(np.asarray(N_values), means, variances, rel, slope, [])


def superposition_variance_scan(model, N_values, r, dV, t=0.0, thetas=None, weights=None):
    """Exact sector variance of ``rho dV`` in a phase superposition vs the O(N^2) law.

    With ``thetas`` omitted the superposition is the uniform one, i.e. the
    number state ``|N, N>``.  Returns rows
    ``(N, exact_variance, predicted_variance, relative_error, phase_state_variance)``
    where the last column is the variance in a single phase state for contrast.
    """
    phi_a, phi_b = (complex(x) for x in model.amplitudes(r, t))
    op = fock.density_operator(phi_a, phi_b, dV)
    chi = np.conj(phi_b) * phi_a
    rows = []
    for N in N_values:
        if thetas is None:
            state, m = fock.number_state(N), (0j, 0j)
        else:
            state = fock.superposition_state(N, thetas, weights)
            m = phase_moments(thetas, weights)
        _, exact = fock.expectation_and_variance(op, state)
        pred = fock.superposition_variance_prediction(N, chi, m, dV)
        _, single = fock.expectation_and_variance(op, fock.phase_state(N, 0.0))
        rows.append((N, exact, pred, abs(exact - pred) / pred, single))
    return np.array(rows, dtype=float)
