"""Single-particle orbitals of the two released condensates (1-D, hbar = 1).

Two models are provided:

``RingModes``
    counter-propagating plane waves ``e^{+ikr}/sqrt(L)`` (A) and
    ``e^{-ikr}/sqrt(L)`` (B) on a ring of length ``L``; exact closed forms.
``GaussianModes``
    harmonic-trap ground states centred at ``-d/2`` (A) and ``+d/2`` (B),
    released at ``t = 0`` and expanding freely.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RingModes",
    "GaussianModes",
    "DensityProfile",
    "eval_mode",
    "no_fringe_profile",
    "fringe_profile",
    "chi",
    "visibility",
]

_MAX_GAUSSIAN_OVERLAP = 1e-6


@dataclass(frozen=True)
class RingModes:
    k: float
    L: float

    def __post_init__(self):
        if self.k <= 0 or self.L <= 0:
            raise ValueError("ring model needs k > 0 and L > 0")
        winding = self.k * self.L / (2 * np.pi)
        if abs(winding - round(winding)) > 1e-9 * max(1.0, winding):
            raise ValueError("k L must be a multiple of 2 pi for orthonormal ring modes")

    @classmethod
    def with_fringes(cls, n_fringes: int, L: float = 1.0) -> "RingModes":
        """Ring whose interference pattern has ``n_fringes`` periods; needs an even count."""
        if n_fringes < 2 or n_fringes % 2:
            raise ValueError("the ring pattern cos(2kr) has an even number of fringes")
        return cls(k=np.pi * n_fringes / L, L=L)

    @property
    def overlap(self) -> float:
        return 0.0

    def domain(self, t: float = 0.0):
        return 0.0, self.L

    def fringe_period(self, t: float = 0.0) -> float:
        return np.pi / self.k

    def amplitudes(self, r, t: float = 0.0):
        r = np.asarray(r, dtype=float)
        if np.any((r < 0) | (r > self.L)):
            raise ValueError(f"positions must lie on the ring [0, {self.L}]")
        norm = 1.0 / np.sqrt(self.L)
        return norm * np.exp(1j * self.k * r), norm * np.exp(-1j * self.k * r)


@dataclass(frozen=True)
class GaussianModes:
    """Freely expanding trap ground states, ``sigma0 = sqrt(hbar / (m omega))``."""

    omega: float
    d: float
    mass: float = 1.0

    def __post_init__(self):
        if self.omega <= 0 or self.d <= 0 or self.mass <= 0:
            raise ValueError("gaussian model needs omega, d, mass > 0")
        if self.overlap >= _MAX_GAUSSIAN_OVERLAP:
            raise ValueError(
                f"traps overlap too much (eps={self.overlap:.3g}); increase d"
            )

    @property
    def sigma0(self) -> float:
        return float(np.sqrt(1.0 / (self.mass * self.omega)))

    @property
    def overlap(self) -> float:
        # |<phi_A|phi_B>|, conserved by the common free evolution
        return float(np.exp(-self.d**2 / (4 * self.sigma0**2)))

    def width(self, t: float) -> float:
        return self.sigma0 * np.sqrt(1 + (t / (self.mass * self.sigma0**2)) ** 2)

    def domain(self, t: float = 0.0):
        half = 0.5 * self.d + 10 * self.width(t)
        return -half, half

    def fringe_period(self, t: float = 0.0) -> float:
        # exact spacing of the cross-term phase 2 pi hbar t (1 + tau^-2) / (m d)
        tau = t / (self.mass * self.sigma0**2)
        if tau == 0:
            return np.inf
        return 2 * np.pi * t * (1 + tau**-2) / (self.mass * self.d)

    def _orbital(self, r, centre, t):
        s0 = self.sigma0
        z = 1 + 1j * t / (self.mass * s0**2)
        return (np.pi * s0**2) ** -0.25 / np.sqrt(z) * np.exp(-((r - centre) ** 2) / (2 * s0**2 * z))

    def amplitudes(self, r, t: float = 0.0):
        r = np.asarray(r, dtype=float)
        return self._orbital(r, -0.5 * self.d, t), self._orbital(r, 0.5 * self.d, t)


def eval_mode(model, which: str, r, t: float = 0.0):
    """Orbital ``phi_A`` or ``phi_B`` at positions ``r`` and flight time ``t``."""
    phi_a, phi_b = model.amplitudes(r, t)
    if which == "A":
        return phi_a
    if which == "B":
        return phi_b
    raise ValueError(f"which must be 'A' or 'B', got {which!r}")


@dataclass(frozen=True)
class DensityProfile:
    grid: np.ndarray
    values: np.ndarray

    def integrate(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["position", "value"])
        for x, v in zip(self.grid, self.values):
            writer.writerow([repr(float(x)), repr(float(v))])
        return buf.getvalue()


def _check_n(N):
    if N < 1:
        raise ValueError("N must be >= 1")


def no_fringe_profile(model, N, t, grid) -> DensityProfile:
    """Number-state density ``N (|phi_A|^2 + |phi_B|^2)``."""
    _check_n(N)
    grid = np.asarray(grid, dtype=float)
    pa, pb = model.amplitudes(grid, t)
    return DensityProfile(grid, N * (np.abs(pa) ** 2 + np.abs(pb) ** 2))


def fringe_profile(model, N, theta, t, grid) -> DensityProfile:
    """Phase-state density ``N |phi_A e^{i theta/2} + phi_B e^{-i theta/2}|^2``."""
    _check_n(N)
    grid = np.asarray(grid, dtype=float)
    pa, pb = model.amplitudes(grid, t)
    vals = N * np.abs(pa * np.exp(0.5j * theta) + pb * np.exp(-0.5j * theta)) ** 2
    return DensityProfile(grid, vals)


def chi(model, r, t: float = 0.0):
    """``conj(phi_B) phi_A``, the coefficient of the fringe term."""
    pa, pb = model.amplitudes(r, t)
    return np.conj(pb) * pa


def visibility(profile: DensityProfile) -> float:
    hi, lo = profile.values.max(), profile.values.min()
    return float((hi - lo) / (hi + lo))
