"""Exact moments of sums of few-mode operators in product states.

For ``O = sum_t T_t`` with each ``T_t`` acting on one or two modes and a
product state, ``Var O = sum_{t,t'} Cov(T_t, T_t')`` where only pairs with
overlapping supports contribute.  The variance is therefore a sum of ``O(N)``
bounded pieces and the relative fluctuation falls like ``N**-0.5``.  A
superposition of distinct product states (``BranchSuperposition``) breaks this
and keeps an ``O(N**2)`` variance.
"""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .bcs import BcsModel

__all__ = [
    "ProductState",
    "LocalOperatorSum",
    "BranchSuperposition",
    "ScalingResult",
    "mean_and_variance",
    "branch_mean_and_variance",
    "moments",
    "scaling_scan",
    "iid_qubit_family",
    "eigenstate_family",
    "two_branch_family",
    "bcs_pair_current_family",
    "pair_current_term",
]

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|
SIGMA_MINUS = SIGMA_PLUS.T.copy()


@dataclass(frozen=True)
class ProductState:
    factors: tuple

    def __init__(self, factors):
        vecs = []
        for i, f in enumerate(factors):
            v = np.array(f, dtype=complex).ravel()
            if v.size < 1 or v.size > 8:
                raise ValueError(f"mode {i}: local dimension must be 1..8, got {v.size}")
            if abs(np.vdot(v, v).real - 1.0) > 1e-12:
                raise ValueError(f"mode {i}: factor not normalized")
            v.setflags(write=False)
            vecs.append(v)
        object.__setattr__(self, "factors", tuple(vecs))

    @property
    def n_modes(self) -> int:
        return len(self.factors)

    @property
    def dims(self):
        return [f.size for f in self.factors]

    def reduced(self, support) -> np.ndarray:
        psi = np.ones(1, dtype=complex)
        for m in support:
            psi = np.kron(psi, self.factors[m])
        return psi


class LocalOperatorSum:
    """``sum_t T_t`` with each term a Hermitian matrix on one or two modes."""

    def __init__(self, terms, n_modes=None, dims=None):
        self.terms = []
        for support, mat in terms:
            support = tuple(int(m) for m in np.atleast_1d(support))
            if len(support) not in (1, 2) or len(set(support)) != len(support):
                raise ValueError(f"support must be one or two distinct modes, got {support}")
            mat = np.array(mat, dtype=complex)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError("term matrix must be square")
            if not np.allclose(mat, mat.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(mat).max())):
                raise ValueError(f"term on {support} is not Hermitian")
            if n_modes is not None and max(support) >= n_modes:
                raise ValueError(f"support {support} out of range for {n_modes} modes")
            if dims is not None and mat.shape[0] != int(np.prod([dims[m] for m in support])):
                raise ValueError(f"term on {support} has wrong dimension")
            self.terms.append((support, mat))

    def __len__(self):
        return len(self.terms)


def _embed(mat, support, union, dims):
    """Lift ``mat`` on ``support`` to an operator on the ordered ``union``."""
    rest = [m for m in union if m not in support]
    full = mat
    for m in rest:
        full = np.kron(full, np.eye(dims[m]))
    order = list(support) + rest
    n = len(union)
    shape = [dims[m] for m in order]
    full = full.reshape(shape + shape)
    perm = [order.index(m) for m in union]
    full = full.transpose(perm + [p + n for p in perm])
    size = int(np.prod([dims[m] for m in union]))
    return full.reshape(size, size)


def _embed_cached(cache, mat, support, union, dims):
    pattern = tuple(union.index(m) for m in support)
    key = (id(mat), pattern, tuple(dims[m] for m in union))
    if key not in cache:
        cache[key] = (mat, _embed(mat, support, list(union), dims))
    return cache[key][1]


def mean_and_variance(op: LocalOperatorSum, state: ProductState):
    """Exact ``(<O>, Var O)`` of a local operator sum in a product state."""
    dims = state.dims
    for support, mat in op.terms:
        if max(support) >= state.n_modes:
            raise ValueError(f"support {support} out of range")
        if mat.shape[0] != int(np.prod([dims[m] for m in support])):
            raise ValueError(f"term on {support} has wrong dimension")

    means = np.empty(len(op.terms), dtype=complex)
    by_mode = defaultdict(list)
    for i, (support, mat) in enumerate(op.terms):
        psi = state.reduced(support)
        means[i] = np.vdot(psi, mat @ psi)
        for m in support:
            by_mode[m].append(i)

    # sum over ordered pairs = diagonal + 2 Re(upper triangle) for Hermitian terms
    cov = 0.0
    embedded = {}
    for i, (s_i, m_i) in enumerate(op.terms):
        partners = sorted({j for m in s_i for j in by_mode[m] if j >= i})
        for j in partners:
            s_j, m_j = op.terms[j]
            union = tuple(sorted(set(s_i) | set(s_j)))
            psi = state.reduced(union)
            a = _embed_cached(embedded, m_i, s_i, union, dims)
            b = _embed_cached(embedded, m_j, s_j, union, dims)
            c = (np.vdot(a @ psi, b @ psi) - means[i] * means[j]).real
            cov += c if i == j else 2 * c
    var = cov
    if var < 0:
        var = 0.0 if var > -1e-10 * max(1.0, abs(means).sum() ** 2) else var
    return float(means.sum().real), float(var)


@dataclass(frozen=True)
class BranchSuperposition:
    """Normalized ``sum_a c_a |P_a>`` of product states on the same modes."""

    branches: tuple
    coefficients: np.ndarray

    def __init__(self, branches, coefficients):
        branches = tuple(branches)
        coeffs = np.asarray(coefficients, dtype=complex)
        if len(branches) != coeffs.size or not branches:
            raise ValueError("need one coefficient per branch")
        if len({b.n_modes for b in branches}) != 1:
            raise ValueError("branches must share the mode count")
        object.__setattr__(self, "branches", branches)
        object.__setattr__(self, "coefficients", coeffs)


def _branch_polynomials(pa: ProductState, pb: ProductState, local_ops):
    """Coefficients of ``<P_a| exp(s O) |P_b>`` up to ``s**2``.

    Each mode contributes ``<a|b> + s <a|O_m|b> + s^2/2 <a|O_m^2|b>`` and the
    truncated polynomials are multiplied mode by mode.  Per-mode rescaling keeps
    the running product finite for long chains.
    """
    poly = np.array([1.0, 0.0, 0.0], dtype=complex)
    log_scale = 0.0
    for m, (fa, fb) in enumerate(zip(pa.factors, pb.factors)):
        om = local_ops.get(m)
        if om is None:
            loc = np.array([np.vdot(fa, fb), 0, 0], dtype=complex)
        else:
            ob = om @ fb
            loc = np.array([np.vdot(fa, fb), np.vdot(fa, ob), 0.5 * np.vdot(fa, om @ ob)])
        poly = np.array([
            poly[0] * loc[0],
            poly[0] * loc[1] + poly[1] * loc[0],
            poly[0] * loc[2] + poly[1] * loc[1] + poly[2] * loc[0],
        ])
        peak = np.abs(poly).max()
        if peak == 0:
            return np.zeros(3, dtype=complex), 0.0
        poly /= peak
        log_scale += np.log(peak)
    return poly, log_scale


def branch_mean_and_variance(op: LocalOperatorSum, state: BranchSuperposition):
    """Exact moments of a single-mode operator sum in a branch superposition."""
    local = {}
    for support, mat in op.terms:
        if len(support) != 1:
            raise ValueError("branch superpositions support single-mode terms only")
        m = support[0]
        local[m] = local.get(m, 0) + mat
    nb = len(state.branches)
    logs = np.full((nb, nb), -np.inf)
    polys = np.zeros((nb, nb, 3), dtype=complex)
    for a in range(nb):
        for b in range(nb):
            p, ls = _branch_polynomials(state.branches[a], state.branches[b], local)
            if np.any(p):
                polys[a, b], logs[a, b] = p, ls
    ref = logs.max()
    weight = np.outer(state.coefficients.conj(), state.coefficients) * np.exp(logs - ref)
    total = np.einsum("ab,abk->k", weight, polys)
    norm = total[0].real
    mean = total[1].real / norm
    second = 2 * total[2].real / norm
    return float(mean), float(max(second - mean**2, 0.0))


def moments(op, state):
    if isinstance(state, BranchSuperposition):
        return branch_mean_and_variance(op, state)
    return mean_and_variance(op, state)


@dataclass
class ScalingResult:
    N: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    relative_fluctuation: np.ndarray
    slope: float | None
    excluded: list

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "mean", "variance", "relative_fluctuation"])
        for row in zip(self.N, self.mean, self.variance, self.relative_fluctuation):
            w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])
        return buf.getvalue()


def fit_loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def scaling_scan(family, N_values) -> ScalingResult:
    """Least-squares slope of ``log(Delta O / <O>)`` against ``log N``.

    ``family(N)`` returns ``(state, op)``.  Points with zero relative
    fluctuation are reported but left out of the fit; ``slope`` is None when
    fewer than two points remain.
    """
    N_values = [int(n) for n in N_values]
    if len(N_values) < 3:
        raise ValueError("scaling fit needs at least 3 N values")
    means, variances = [], []
    for n in N_values:
        state, op = family(n)
        mu, var = moments(op, state)
        if mu == 0:
            raise ValueError(f"mean vanishes at N={n}; relative fluctuation undefined")
        means.append(mu)
        variances.append(var)
    means, variances = np.array(means), np.array(variances)
    rel = np.sqrt(variances) / np.abs(means)
    keep = rel > 0
    excluded = [n for n, k in zip(N_values, keep) if not k]
    slope = None
    if keep.sum() >= 2:
        slope = fit_loglog_slope(np.array(N_values)[keep], rel[keep])
    return ScalingResult(np.array(N_values), means, variances, rel, slope, excluded)


def _qubit(angle, phase=0.0):
    return np.array([np.cos(angle), np.exp(1j * phase) * np.sin(angle)])


def iid_qubit_family(angle: float = np.pi / 8, observable=SIGMA_Z):
    """``N`` copies of ``cos(a)|0> + sin(a)|1>`` with ``O = sum_i Z_i``."""
    def family(n):
        state = ProductState([_qubit(angle)] * n)
        op = LocalOperatorSum([((i,), observable) for i in range(n)])
        return state, op
    return family


def eigenstate_family():
    """Every factor an eigenstate of Z: zero variance at all N."""
    def family(n):
        return ProductState([[1.0, 0.0]] * n), LocalOperatorSum([((i,), SIGMA_Z) for i in range(n)])
    return family


def two_branch_family(angle_a: float = 0.0, angle_b: float = np.pi / 3, weights=(1.0, 1.0)):
    """Cat-like superposition of two macroscopically distinct product states."""
    def family(n):
        pa = ProductState([_qubit(angle_a)] * n)
        pb = ProductState([_qubit(angle_b)] * n)
        op = LocalOperatorSum([((i,), SIGMA_Z) for i in range(n)])
        return BranchSuperposition([pa, pb], weights), op
    return family


def pair_current_term(g: float) -> np.ndarray:
    """``i g (s+_A s-_B - s-_A s+_B)``: Hermitian pair transfer between two pair modes."""
    hop = np.kron(SIGMA_PLUS, SIGMA_MINUS)
    return 1j * g * (hop - hop.conj().T)


def bcs_pair_current_family(
    profiles,
    coupling: float = 1.0,
    theta_a: float = np.pi / 2,
    theta_b: float = 0.0,
    neighbours: int = 1,
):
    """Schematic pair-mode current model on two BCS product states.

    Structural stand-in for the stationary current operator: each pair mode
    ``k`` is a two-level system (pair empty / occupied) with amplitudes
    ``(u_k, v_k e^{i theta_s})``, and the observable sums Hermitian two-mode
    transfer terms between pair ``k`` of side A and pairs ``k' = k +- j``,
    ``j <= neighbours``, of side B, all with coupling ``g``.  The mean is
    ``2 g sum u_k v_k u_k' v_k' sin(theta_a - theta_b)``.

    Parameters
    ----------
    profiles : callable
        ``profiles(M)`` returns a ``BcsModel`` or a ``(u, v)`` pair of length-M
        arrays for each mode count.
    """
    term = pair_current_term(coupling)

    def family(M):
        prof = profiles(M)
        if isinstance(prof, BcsModel):
            u, v = prof.u, prof.v
        else:
            u, v = (np.asarray(x, dtype=float) for x in prof)
        if u.shape != v.shape or u.size != M:
            raise ValueError(f"u, v profiles must both have length {M}")
        if np.any(np.abs(u**2 + v**2 - 1) > 1e-12):
            raise ValueError("coherence factors must satisfy u^2 + v^2 = 1")
        factors = [np.array([uk, vk * np.exp(1j * theta_a)]) for uk, vk in zip(u, v)]
        factors += [np.array([uk, vk * np.exp(1j * theta_b)]) for uk, vk in zip(u, v)]
        terms = []
        if coupling != 0:
            for k in range(M):
                for kp in range(max(0, k - neighbours), min(M, k + neighbours + 1)):
                    terms.append(((k, M + kp), term))
        return ProductState(factors), LocalOperatorSum(terms)

    return family
