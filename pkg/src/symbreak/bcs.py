"""BCS product states, their phase overlaps, and the tunnel-junction supercurrent.

Energies are measured in units of the gap where convenient; ``charge`` and
``hbar`` default to 1.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

__all__ = [
    "BcsModel",
    "JunctionModel",
    "SectorSuperposition",
    "OverlapScan",
    "bcs_overlap",
    "log_bcs_overlap",
    "overlap_decay_rate",
    "overlap_decay_scan",
    "ab_critical_current",
    "continuum_critical_current",
    "ambegaokar_baratoff_current",
    "normal_resistance",
    "josephson_current",
    "uniform_sectors",
    "sector_project",
    "measurement_outcome_distribution",
    "expected_current",
    "mean_phase_histogram",
]

TWO_PI = 2 * np.pi
DEFAULT_RESOLUTION = TWO_PI / 360


@dataclass(frozen=True)
class BcsModel:
    """Coherence factors on a grid of single-particle energies ``xi_k``.

    ``dos`` is the number of modes per unit energy; for the uniform grid it is
    ``M / (2 W)`` (per spin and per unit cell of the tiling).
    """

    xi: np.ndarray
    gap: float
    dos: float
    band: float | None = None

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        if xi.ndim != 1 or xi.size == 0:
            raise ValueError("xi must be a nonempty 1-D array")
        if not self.gap > 0:
            raise ValueError("gap must be positive")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    @classmethod
    def uniform(cls, bandwidth: float, gap: float, M: int) -> "BcsModel":
        """Midpoint grid of ``M`` levels on ``[-W, W]`` (particle-hole symmetric)."""
        if M < 1 or bandwidth <= 0:
            raise ValueError("need M >= 1 and W > 0")
        h = 2 * bandwidth / M
        xi = -bandwidth + h * (np.arange(M) + 0.5)
        return cls(xi, gap, M / (2 * bandwidth), band=bandwidth)

    def tiled(self, copies: int) -> "BcsModel":
        """Same energy grid repeated ``copies`` times: volume x copies at fixed spectrum."""
        return BcsModel(np.tile(self.xi, copies), self.gap, self.dos * copies, band=self.band)

    @property
    def M(self) -> int:
        return self.xi.size

    @property
    def bandwidth(self) -> float:
        """Half-width ``W`` of the band; the grid edge for uniform grids."""
        if self.band is not None:
            return float(self.band)
        return float(np.abs(self.xi).max())

    @property
    def energies(self) -> np.ndarray:
        return np.hypot(self.xi, self.gap)

    @property
    def u(self) -> np.ndarray:
        return np.sqrt(0.5 * (1 + self.xi / self.energies))

    @property
    def v(self) -> np.ndarray:
        return np.sqrt(0.5 * (1 - self.xi / self.energies))


def log_bcs_overlap(model: BcsModel, dtheta: float) -> complex:
    """``sum_k log(u_k^2 + v_k^2 e^{-i dtheta})``, principal branch per factor."""
    factors = model.u**2 + model.v**2 * np.exp(-1j * dtheta)
    return complex(np.sum(np.log(factors)))


def bcs_overlap(model: BcsModel, dtheta: float) -> complex:
    """``<Omega_theta|Omega_theta'>`` for ``dtheta = theta - theta'``."""
    return complex(np.exp(log_bcs_overlap(model, dtheta)))


def overlap_decay_rate(model: BcsModel, dtheta: float) -> float:
    """Per-mode decay rate ``-(1/M) sum_k log|u_k^2 + v_k^2 e^{-i dtheta}|``."""
    return -log_bcs_overlap(model, dtheta).real / model.M


@dataclass
class OverlapScan:
    M: np.ndarray
    log_magnitude: np.ndarray
    fitted_rate: float
    analytic_rate: float

    @property
    def magnitude(self) -> np.ndarray:
        return np.exp(self.log_magnitude)

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["M", "abs_overlap", "log_abs_overlap"])
        for m, lg in zip(self.M, self.log_magnitude):
            w.writerow([int(m), repr(float(np.exp(lg))), repr(float(lg))])
        return buf.getvalue()


def overlap_decay_scan(base: BcsModel, copies, dtheta: float) -> OverlapScan:
    """``|<Omega_theta|Omega_theta'>|`` as the system is enlarged by tiling ``base``.

    Tiling keeps the per-mode average fixed, so ``log|overlap|`` is exactly
    linear in ``M`` and the fitted slope must equal the analytic rate.
    """
    if np.isclose(np.mod(dtheta, TWO_PI), 0.0) or np.isclose(np.mod(dtheta, TWO_PI), TWO_PI):
        raise ValueError("dtheta = 0 gives no decay")
    copies = [int(c) for c in copies]
    models = [base.tiled(c) for c in copies]
    M = np.array([m.M for m in models])
    logs = np.array([log_bcs_overlap(m, dtheta).real for m in models])
    fitted = -float(np.polyfit(M, logs, 1)[0]) if len(M) >= 2 else float("nan")
    return OverlapScan(M, logs, fitted, overlap_decay_rate(base, dtheta))


@dataclass(frozen=True)
class JunctionModel:
    """Two superconductors coupled by a constant tunneling element ``|T|^2``."""

    a: BcsModel
    b: BcsModel
    tunneling_sq: float
    charge: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if self.tunneling_sq < 0:
            raise ValueError("|T|^2 must be non-negative")


def _row_block_sum(Ea, Eb, start, stop):
    ea = Ea[start:stop, None]
    return float(np.sum(1.0 / (ea * Eb[None, :] * (ea + Eb[None, :]))))


def ab_critical_current(junction: JunctionModel, threads: int = 1, block: int = 512) -> float:
    """Second-order zero-temperature critical current as a discrete double sum.

    ``J_S = (2e/hbar) |T|^2 sum_{k,k'} Delta_A Delta_B / (E_k E_k' (E_k + E_k'))``
    (both spin channels included).  Row blocks are reduced independently and
    combined in block order, so the result does not depend on ``threads``.
    """
    a, b = junction.a, junction.b
    for side in (a, b):
        if side.bandwidth < 10 * side.gap:
            raise ValueError(
                f"bandwidth {side.bandwidth:g} < 10 Delta = {10 * side.gap:g}"
            )
    if junction.tunneling_sq == 0:
        return 0.0
    Ea, Eb = a.energies, b.energies
    bounds = [(s, min(s + block, Ea.size)) for s in range(0, Ea.size, block)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda se: _row_block_sum(Ea, Eb, *se), bounds))
    else:
        parts = [_row_block_sum(Ea, Eb, *se) for se in bounds]
    total = float(np.sum(np.array(parts)))
    pref = 2 * junction.charge / junction.hbar * junction.tunneling_sq
    return pref * a.gap * b.gap * total


def continuum_critical_current(junction: JunctionModel) -> float:
    """Quadrature value of the band-truncated continuum critical current.

    ``(2e/hbar)|T|^2 N_A N_B int int dxi dxi' Delta_A Delta_B / (E E' (E + E'))``
    over ``[-W_A, W_A] x [-W_B, W_B]``.  Substituting ``xi = Delta sinh s``
    gives the smooth integrand ``Delta_A Delta_B / (E + E')``.
    """
    a, b = junction.a, junction.b
    da, db = a.gap, b.gap
    sa = np.arcsinh(a.bandwidth / da)
    sb = np.arcsinh(b.bandwidth / db)
    val, _ = integrate.dblquad(
        lambda y, x: 1.0 / (da * np.cosh(x) + db * np.cosh(y)),
        0.0, sa, 0.0, sb, epsabs=0.0, epsrel=1e-11,
    )
    pref = 2 * junction.charge / junction.hbar * junction.tunneling_sq
    return pref * a.dos * b.dos * 4 * da * db * val


def normal_resistance(junction: JunctionModel) -> float:
    """``R_N`` with ``1/R_N = (4 pi e^2 / hbar) |T|^2 N_A N_B``."""
    g = 4 * np.pi * junction.charge**2 / junction.hbar * junction.tunneling_sq
    return 1.0 / (g * junction.a.dos * junction.b.dos)


def ambegaokar_baratoff_current(junction: JunctionModel) -> float:
    """Zero-temperature ``pi Delta / (2 e R_N)`` for equal gaps."""
    if not np.isclose(junction.a.gap, junction.b.gap):
        raise ValueError("closed form needs equal gaps; use continuum_critical_current")
    return np.pi * junction.a.gap / (2 * junction.charge * normal_resistance(junction))


def josephson_current(J_S, theta):
    return J_S * np.sin(theta)


def _wrap(x):
    """Map angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)


@dataclass(frozen=True)
class SectorSuperposition:
    """Weighted set of ``(theta_A, theta_B)`` BCS phase sectors.

    Sectors closer than ``resolution`` on both angles are merged (weights add).
    """

    theta_a: np.ndarray
    theta_b: np.ndarray
    weights: np.ndarray
    resolution: float = DEFAULT_RESOLUTION
    model: BcsModel | None = field(default=None, compare=False)

    def __post_init__(self):
        ta = np.mod(np.asarray(self.theta_a, dtype=float), TWO_PI)
        tb = np.mod(np.asarray(self.theta_b, dtype=float), TWO_PI)
        w = np.asarray(self.weights, dtype=complex)
        if not (ta.shape == tb.shape == w.shape) or ta.ndim != 1:
            raise ValueError("theta_a, theta_b, weights must be equal-length 1-D arrays")
        if not np.any(w):
            raise ValueError("weights are all zero")
        n = int(round(TWO_PI / self.resolution))
        keys = np.stack([np.rint(ta / self.resolution).astype(int) % n,
                         np.rint(tb / self.resolution).astype(int) % n], axis=1)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        if uniq.shape[0] != ta.size:
            merged = np.zeros(uniq.shape[0], dtype=complex)
            np.add.at(merged, inverse.ravel(), w)
            ta, tb, w = uniq[:, 0] * self.resolution, uniq[:, 1] * self.resolution, merged
        object.__setattr__(self, "theta_a", ta)
        object.__setattr__(self, "theta_b", tb)
        object.__setattr__(self, "weights", w)

    @property
    def relative_phase(self) -> np.ndarray:
        return np.mod(self.theta_a - self.theta_b, TWO_PI)

    @property
    def mean_phase(self) -> np.ndarray:
        """``(theta_A + theta_B)/2``, defined modulo pi."""
        return np.mod(0.5 * (self.theta_a + self.theta_b), np.pi)

    @property
    def probabilities(self) -> np.ndarray:
        p = np.abs(self.weights) ** 2
        return p / p.sum()

    def gram(self) -> np.ndarray:
        """Finite-volume overlap kernel between sectors; needs ``model``."""
        if self.model is None:
            raise ValueError("no BcsModel attached for the overlap kernel")
        ga = np.vectorize(lambda d: bcs_overlap(self.model, d))
        return ga(self.theta_a[:, None] - self.theta_a[None, :]) * ga(
            self.theta_b[:, None] - self.theta_b[None, :]
        )


def uniform_sectors(n: int, model: BcsModel | None = None) -> SectorSuperposition:
    """Equal-weight ``n x n`` grid over ``(theta_A, theta_B)``: the U(1)-symmetric state."""
    th = TWO_PI * np.arange(n) / n
    ta, tb = np.meshgrid(th, th, indexing="ij")
    w = np.full(n * n, 1.0 / n, dtype=complex)
    return SectorSuperposition(ta.ravel(), tb.ravel(), w, resolution=min(DEFAULT_RESOLUTION, TWO_PI / n), model=model)


def sector_project(state: SectorSuperposition, measured_theta: float,
                   tol: float = DEFAULT_RESOLUTION) -> SectorSuperposition:
    """Keep the sectors whose relative phase is within ``tol`` of ``measured_theta``.

    Weights of the kept sectors are renormalized in the diagonal (infinite
    volume) limit; their ratios are untouched.
    """
    dist = np.abs(_wrap(state.relative_phase - measured_theta))
    keep = dist <= tol + 1e-12
    if not keep.any():
        raise ValueError(f"no sector with relative phase within {tol:g} of {measured_theta:g}")
    w = state.weights[keep]
    w = w / np.sqrt(np.sum(np.abs(w) ** 2))
    return SectorSuperposition(state.theta_a[keep], state.theta_b[keep], w,
                               resolution=state.resolution, model=state.model)


def expected_current(state: SectorSuperposition, J_S: float) -> float:
    """``sum |c|^2 J_S sin(theta_A - theta_B)`` with orthogonal sectors."""
    return float(np.sum(state.probabilities * josephson_current(J_S, state.relative_phase)))


def measurement_outcome_distribution(state: SectorSuperposition, J_S: float, n_bins: int = 360):
    """Probability of each current outcome, binned by relative phase.

    Bins are centred on ``2 pi j / n_bins``.  Returns an array of rows
    ``(theta_bin, probability, current)``.
    """
    width = TWO_PI / n_bins
    idx = np.rint(state.relative_phase / width).astype(int) % n_bins
    prob = np.bincount(idx, weights=state.probabilities, minlength=n_bins)
    centres = width * np.arange(n_bins)
    return np.column_stack([centres, prob, josephson_current(J_S, centres)])


def mean_phase_histogram(state: SectorSuperposition, n_bins: int = 12) -> np.ndarray:
    """Probability of the mean phase ``theta_bar`` in ``n_bins`` bins over ``[0, pi)``."""
    width = np.pi / n_bins
    idx = np.floor(state.mean_phase / width + 1e-9).astype(int) % n_bins
    return np.bincount(idx, weights=state.probabilities, minlength=n_bins)
