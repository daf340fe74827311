"""Two-mode bosonic Fock sector at fixed total particle number.

A state with ``total`` particles is stored as the amplitude vector ``c[k]``,
``k = 0..total``, where ``k`` atoms occupy mode A and ``total - k`` occupy
mode B.  All operators used here conserve the total number (or lower it by one,
for detection), so the sector vector is the whole state.

Conventions
-----------
The phase state of ``2N`` atoms is the binomial expansion of
``(a^dag e^{i theta/2} + b^dag e^{-i theta/2})^{2N}`` which gives amplitudes
``2^-N sqrt(C(2N, k)) e^{i (k - N) theta}`` and an order parameter
``<a^dag b> = N e^{-i theta}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "FockSectorState",
    "QuadraticOperator",
    "SmearedDensityStats",
    "number_state",
    "phase_state",
    "superposition_state",
    "inner",
    "phase_overlap_closed_form",
    "uniform_phase_sum",
    "apply_quadratic",
    "expectation",
    "expectation_and_variance",
    "detect_at",
    "density_operator",
    "smeared_density_stats",
    "superposition_variance_prediction",
]

_HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class FockSectorState:
    """Amplitude vector over occupation splits ``(k, total - k)``."""

    total_particles: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size != self.total_particles + 1:
            raise ValueError(
                f"expected {self.total_particles + 1} amplitudes, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def k(self) -> np.ndarray:
        return np.arange(self.total_particles + 1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockSectorState":
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return FockSectorState(self.total_particles, self.amplitudes / nrm)

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(np.vdot(self.amplitudes, self.amplitudes).real - 1.0) <= tol


@dataclass(frozen=True)
class QuadraticOperator:
    """``c_aa a^dag a + c_ab a^dag b + c_ba b^dag a + c_bb b^dag b``."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex)
        if c.shape != (2, 2):
            raise ValueError(f"coefficients must be 2x2, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def is_hermitian(self, tol: float = _HERMITIAN_TOL) -> bool:
        c = self.coefficients
        scale = max(1.0, float(np.abs(c).max()))
        return bool(np.allclose(c, c.conj().T, rtol=0.0, atol=tol * scale))

    @classmethod
    def number_a(cls) -> "QuadraticOperator":
        return cls(np.array([[1, 0], [0, 0]]))

    @classmethod
    def number_b(cls) -> "QuadraticOperator":
        return cls(np.array([[0, 0], [0, 1]]))

    @classmethod
    def total_number(cls) -> "QuadraticOperator":
        return cls(np.eye(2))

    @classmethod
    def hopping(cls) -> "QuadraticOperator":
        """``a^dag b`` alone (not Hermitian)."""
        return cls(np.array([[0, 1], [0, 0]]))


def _check_n(N):
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    return int(N)


def _log_binomial(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _phase_envelope(N):
    # 2^-N sqrt(C(2N, k)), evaluated in log space so 2N ~ 1e4 does not overflow
    k = np.arange(2 * N + 1)
    return np.exp(0.5 * _log_binomial(2 * N, k) - N * np.log(2.0))


def number_state(N: int) -> FockSectorState:
    """``|N, N>``: exactly N atoms in each mode."""
    N = _check_n(N)
    amps = np.zeros(2 * N + 1, dtype=complex)
    amps[N] = 1.0
    return FockSectorState(2 * N, amps)


def phase_state(N: int, theta: float) -> FockSectorState:
    """All ``2N`` atoms in the orbital with relative phase ``theta``."""
    N = _check_n(N)
    k = np.arange(2 * N + 1)
    amps = _phase_envelope(N) * np.exp(1j * (k - N) * theta)
    return FockSectorState(2 * N, amps).normalized()


def superposition_state(N: int, thetas, weights) -> FockSectorState:
    """Normalized ``sum_j w_j |theta_j>``.

    The sum is done directly in the Fock basis, which is a non-uniform DFT of
    the weights times the binomial envelope.
    """
    N = _check_n(N)
    thetas = np.asarray(thetas, dtype=float)
    weights = np.asarray(weights, dtype=complex)
    if thetas.shape != weights.shape or thetas.ndim != 1:
        raise ValueError("thetas and weights must be 1-D arrays of equal length")
    n = np.arange(-N, N + 1)
    fourier = np.exp(1j * np.outer(n, thetas)) @ weights
    return FockSectorState(2 * N, _phase_envelope(N) * fourier).normalized()


def inner(x: FockSectorState, y: FockSectorState) -> complex:
    """``<x|y>``, conjugate-linear in ``x``."""
    if x.total_particles != y.total_particles:
        raise ValueError(
            f"sector mismatch: {x.total_particles} vs {y.total_particles} particles"
        )
    return complex(np.vdot(x.amplitudes, y.amplitudes))


def phase_overlap_closed_form(N: int, theta: float, theta_prime: float) -> float:
    N = _check_n(N)
    return float(np.cos(0.5 * (theta - theta_prime)) ** (2 * N))


def uniform_phase_sum(N: int, M: int) -> FockSectorState:
    """``(1/M) sum_j |2 pi j / M>`` (unnormalized).

    For ``M > 2N`` every ``k != N`` component is a full root-of-unity sum and
    vanishes, leaving a multiple of ``|N, N>``.
    """
    N = _check_n(N)
    if M <= 2 * N:
        raise ValueError(f"need M > 2N = {2 * N} for exact cancellation, got M={M}")
    thetas = 2.0 * np.pi * np.arange(M) / M
    total = np.zeros(2 * N + 1, dtype=complex)
    for th in thetas:
        total += phase_state(N, th).amplitudes
    return FockSectorState(2 * N, total / M)


def apply_quadratic(op: QuadraticOperator, s: FockSectorState) -> FockSectorState:
    """Exact action of a number-conserving quadratic form on a sector vector."""
    (caa, cab), (cba, cbb) = op.coefficients
    T = s.total_particles
    c = s.amplitudes
    k = np.arange(T + 1)
    out = (caa * k + cbb * (T - k)) * c
    if T > 0:
        # a^dag b |k> = sqrt((k+1)(T-k)) |k+1>
        raise_ab = np.sqrt((k[:-1] + 1.0) * (T - k[:-1]))
        out[1:] += cab * raise_ab * c[:-1]
        # b^dag a |k> = sqrt(k(T-k+1)) |k-1>
        out[:-1] += cba * raise_ab * c[1:]
    return FockSectorState(T, out)


def expectation(op: QuadraticOperator, s: FockSectorState) -> complex:
    """``<s|op|s>``; complex in general, real for Hermitian ``op``."""
    return complex(np.vdot(s.amplitudes, apply_quadratic(op, s).amplitudes))


def expectation_and_variance(op: QuadraticOperator, s: FockSectorState):
    """Exact mean and variance of a Hermitian quadratic operator in ``s``.

    Returns
    -------
    (mean, variance) : tuple of float
        The variance is ``<op^2> - <op>^2`` in the two-mode sector; round-off
        negatives down to -1e-10 (relative) are clamped to zero.
    """
    if not op.is_hermitian():
        raise ValueError("expectation_and_variance requires a Hermitian operator")
    once = apply_quadratic(op, s).amplitudes
    mean = np.vdot(s.amplitudes, once).real
    second = np.vdot(once, once).real
    var = second - mean**2
    if var < 0.0:
        if var < -1e-10 * max(1.0, second):
            raise ArithmeticError(f"negative variance {var:g} beyond round-off")
        var = 0.0
    return float(mean), float(var)


def detect_at(alpha: complex, beta: complex, s: FockSectorState) -> FockSectorState:
    """Apply ``alpha a + beta b`` (one-atom annihilation); result is unnormalized.

    With ``alpha, beta = phi_A(r), phi_B(r)`` this is the truncated field
    operator ``psi(r)``, and the squared norm of the result is the probability
    density of detecting an atom at ``r``.
    """
    T = s.total_particles
    if T < 1:
        raise ValueError("cannot detect an atom in the empty sector")
    if alpha == 0 and beta == 0:
        raise ValueError("detection orbital (alpha, beta) must be nonzero")
    c = s.amplitudes
    j = np.arange(T)
    out = alpha * np.sqrt(j + 1.0) * c[1:] + beta * np.sqrt(T - j) * c[:-1]
    return FockSectorState(T - 1, out)


def density_operator(phi_a: complex, phi_b: complex, dV: float) -> QuadraticOperator:
    """Two-mode density operator at one point, integrated over a top-hat ``dV``.

    ``psi^dag psi dV`` with ``psi = phi_a a + phi_b b`` (mode functions taken at
    the cell midpoint).
    """
    pa, pb = complex(phi_a), complex(phi_b)
    c = np.array(
        [[abs(pa) ** 2, pa.conjugate() * pb], [pb.conjugate() * pa, abs(pb) ** 2]]
    )
    return QuadraticOperator(dV * c)


@dataclass(frozen=True)
class SmearedDensityStats:
    """Counting statistics of the atom number ``rho(r) dV`` in one cell.

    All fields describe ``rho dV``, i.e. ``variance`` fields are the density
    variance multiplied by ``dV**2``.

    ``sector_variance`` is the exact two-mode result ``<O^2> - <O>^2``.  The
    two-mode truncation replaces the field commutator ``delta(r - r')`` by
    ``|phi_a|^2 + |phi_b|^2``, so the physical (shot-noise) variance is
    rebuilt from the exact normal-ordered part plus the contact term
    ``<rho> dV``.
    """

    mean: float
    sector_variance: float
    normal_ordered_variance: float
    contact_variance: float

    @property
    def shot_noise_variance(self) -> float:
        return self.normal_ordered_variance + self.contact_variance

    @property
    def relative_fluctuation(self) -> float:
        return float(np.sqrt(max(self.shot_noise_variance, 0.0)) / self.mean)


def smeared_density_stats(
    phi_a: complex, phi_b: complex, dV: float, s: FockSectorState
) -> SmearedDensityStats:
    if dV <= 0:
        raise ValueError("dV must be positive")
    mean, sector_var = expectation_and_variance(density_operator(phi_a, phi_b, dV), s)
    once = detect_at(phi_a, phi_b, s)
    first = np.vdot(once.amplitudes, once.amplitudes).real
    if s.total_particles >= 2:
        twice = detect_at(phi_a, phi_b, once)
        second = np.vdot(twice.amplitudes, twice.amplitudes).real
    else:
        second = 0.0
    normal_ordered = dV**2 * (second - first**2)
    return SmearedDensityStats(
        mean=mean,
        sector_variance=sector_var,
        normal_ordered_variance=float(normal_ordered),
        contact_variance=float(dV * first),
    )


def superposition_variance_prediction(N, chi, moments, dV) -> float:
    """Leading ``O(N^2)`` variance of ``rho dV`` in a superposition of phase states.

    Parameters
    ----------
    N : int
        Atoms per condensate.
    chi : complex
        ``conj(phi_B(r)) phi_A(r)``.
    moments : (complex, complex)
        Means of ``e^{i theta}`` and ``e^{2 i theta}`` under ``|f(theta)|^2``.
    dV : float
        Cell volume.
    """
    m1, m2 = (complex(m) for m in moments)
    if abs(m1) > 1 + 1e-12 or abs(m2) > 1 + 1e-12:
        raise ValueError("phase moments must lie in the unit disk")
    chi = complex(chi)
    bracket = abs(chi) ** 2 * (1 - abs(m1) ** 2) + (chi**2 * (m2 - m1**2)).real
    return float(2 * N**2 * bracket * dV**2)
