"""Numerical checks around the matrix Wiener-Hopf identity."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .map_core import MapSubordinatorSpec, invariant_dist, phi, psi, wh_product

log = logging.getLogger(__name__)

COND_WARN = 1e12


def default_grid(n: int = 1001, lim: float = 50.0, refine: int = 40) -> np.ndarray:
    """Uniform grid on [-lim, lim] plus log-spaced points near 0 on both sides."""
    g = np.linspace(-lim, lim, n)
    r = np.logspace(-4, -1, refine)
    return np.unique(np.concatenate([g, r, -r]))


def wh_residuals(bond, Hp, Hm, pi, theta_grid) -> np.ndarray:
    """Frobenius norm of ``Psi(theta) + dual(Psi-(-theta)) Psi+(theta)`` per grid point."""
    theta = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    diff = psi(bond, theta) - wh_product(Hp, Hm, pi, theta)
    return np.linalg.norm(diff, axis=(1, 2))


def wh_residual(bond, Hp, Hm, pi, theta_grid) -> float:
    return float(wh_residuals(bond, Hp, Hm, pi, theta_grid).max())


def det_abs(spec, theta_grid) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    M = psi(spec, theta)
    c = np.linalg.cond(M)
    # Psi(0) is singular for unkilled specs, so theta = 0 is not worth a warning
    big = np.flatnonzero((c > COND_WARN) & (theta != 0))
    if big.size:
        log.warning("Psi(theta) ill-conditioned (cond > %.0e) at %d grid points, e.g. theta=%g",
                    COND_WARN, big.size, theta[big[0]])
    return np.abs(np.linalg.det(M))


def invertibility_scan(spec, theta_grid) -> float:
    """Minimum of |det Psi(theta)| over a grid that should exclude 0."""
    theta = np.asarray(theta_grid, dtype=float)
    if np.any(theta == 0):
        raise ValueError("theta grid must exclude 0")
    return float(det_abs(spec, theta).min())


def det_zero_order(spec, lo: float = 1e-4, hi: float = 1e-2, k: int = 25) -> float:
    """Log-log slope of |det Psi(theta)| as theta decreases to 0."""
    t = np.logspace(np.log10(lo), np.log10(hi), k)
    d = det_abs(spec, t)
    slope, _ = np.polyfit(np.log(t), np.log(d), 1)
    return float(slope)


def is_irreducible(Q, tol: float = 0.0) -> bool:
    A = (np.asarray(Q) > tol).astype(int)
    np.fill_diagonal(A, 0)
    ncomp, _ = connected_components(A, directed=True, connection="strong")
    return ncomp == 1


@dataclass
class UniquenessClass:
    A0: bool
    A1: bool
    A_inf: bool
    A_ll: bool
    killed: bool
    irreducible: bool
    finite_mean: bool
    nontrivial: bool
    reasons: list

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _classify_one(H: MapSubordinatorSpec, tag: str) -> UniquenessClass:
    n = H.n
    reasons = [f"{tag}: finite mean holds for every exp-poly subordinator (all moments are finite)"]
    irr = is_irreducible(H.Q)
    if not irr:
        reasons.append(f"{tag}: modulator graph is not strongly connected")
    nontrivial = all(H.drift[i] > 0 or not H.levy[i].is_zero() for i in range(n))
    if not nontrivial:
        reasons.append(f"{tag}: some phase has zero drift and no jumps")
    # exp-poly Lévy measures are finite, so phi_i diverges iff d_i > 0
    diverge = [bool(H.drift[i] > 0) for i in range(n)]
    ac_row = [all(H.atom(i, j) == 0 for j in range(n) if j != i) for i in range(n)]
    a1 = True
    for i in range(n):
        if not (diverge[i] or ac_row[i]):
            a1 = False
            reasons.append(f"{tag}: phase {i} is compound Poisson but a transitional law has an atom at 0")
    killed = bool(np.any(H.kill > 0))
    return UniquenessClass(A0=irr and nontrivial, A1=a1, A_inf=all(diverge), A_ll=all(ac_row),
                           killed=killed, irreducible=irr, finite_mean=True,
                           nontrivial=nontrivial, reasons=reasons)


def classify_uniqueness(Hp: MapSubordinatorSpec, Hm: MapSubordinatorSpec | None = None) -> UniquenessClass:
    """Class flags of one subordinator or, jointly, of a pair (flags are and-ed)."""
    specs = [(Hp, "H+")] + ([] if Hm is None else [(Hm, "H-")])
    parts = [_classify_one(H, tag) for H, tag in specs]
    out = parts[0]
    for p in parts[1:]:
        out = UniquenessClass(
            A0=out.A0 and p.A0, A1=out.A1 and p.A1, A_inf=out.A_inf and p.A_inf,
            A_ll=out.A_ll and p.A_ll, killed=out.killed or p.killed,
            irreducible=out.irreducible and p.irreducible, finite_mean=True,
            nontrivial=out.nontrivial and p.nontrivial, reasons=out.reasons + p.reasons)
    return out


@dataclass
class RenewalProbe:
    z: np.ndarray
    values: np.ndarray         # z * Phi(z)^-1 at each probe point
    limit: np.ndarray          # extrapolated limit
    expected: np.ndarray       # 1 pi^T / E[H_1]
    error: float
    ok: bool


def markov_renewal_probe(spec: MapSubordinatorSpec, z_seq=None, tol: float = 1e-4) -> RenewalProbe:
    """Compare ``lim z Phi(z)^-1`` with the rank-one matrix ``1 pi^T / E_pi[H_1]``.

    ``pi`` is the invariant law of the subordinator's own modulator.
    """
    if np.any(spec.kill > 0):
        raise ValueError("markov_renewal_probe needs an unkilled subordinator")
    if not is_irreducible(spec.Q):
        raise ValueError("markov_renewal_probe needs an irreducible modulator")
    z = np.asarray([10.0 ** -k for k in range(1, 7)] if z_seq is None else z_seq, dtype=float)
    vals = []
    for zk in z:
        P = phi(spec, zk)
        if np.linalg.cond(P) > 1e14:
            raise np.linalg.LinAlgError(f"Phi({zk:g}) is numerically singular")
        vals.append(zk * np.linalg.inv(P).real)
    vals = np.array(vals)
    # Richardson step on the two smallest points: z Phi^-1 = L + O(z)
    z1, z2 = z[-1], z[-2]
    L = (z2 * vals[-1] - z1 * vals[-2]) / (z2 - z1)
    piG = invariant_dist(spec.Q)
    mean = float(piG @ spec.mean_rates() @ np.ones(spec.n))
    expected = np.outer(np.ones(spec.n), piG) / mean
    err = float(np.abs(L - expected).max())
    return RenewalProbe(z, vals, L, expected, err, err <= tol)
