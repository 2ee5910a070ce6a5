"""MAP specifications, matrix exponents and duality.

A MAP exponent is ``Psi(theta) = diag(psi_i(theta)) + Q * G(theta) - diag(kill)``
where ``psi_i`` is the Lévy-Khintchine exponent of phase ``i`` (cutoff
``1_{[-1,1]}``), ``G_ij`` the Fourier transform of the transitional jump law
``F_ij`` and ``*`` the entrywise product.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .measures import ExpPolyFn, ExpPolyMeasure, fourier, mass, mean, reflect

ATOL = 1e-10


# -- small validated containers ----------------------------------------------

def as_phase_dist(pi, n: int | None = None) -> np.ndarray:
    """Validate a stochastic vector with positive entries."""
    pi = np.asarray(pi, dtype=float).reshape(-1)
    if n is not None and pi.size != n:
        raise ValueError(f"pi has {pi.size} entries, expected {n}")
    if np.any(pi <= 0):
        raise ValueError("pi entries must be positive")
    if abs(pi.sum() - 1.0) > 1e-12:
        raise ValueError(f"pi must sum to 1 (sum={pi.sum():.17g})")
    return pi


def as_generator(Q, tol: float = 1e-12) -> np.ndarray:
    """Validate a generator: off-diagonals >= 0 and zero row sums."""
    Q = np.array(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError("Q must be square")
    off = Q - np.diag(np.diag(Q))
    if np.any(off < 0):
        raise ValueError("Q has negative off-diagonal entries")
    if np.any(np.abs(Q.sum(axis=1)) > tol * max(1.0, np.abs(Q).max())):
        raise ValueError("Q rows must sum to zero")
    return Q


def invariant_dist(Q) -> np.ndarray:
    """Stationary distribution of an irreducible generator."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    A = np.vstack([Q.T, np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return pi


# -- measures on R used for transitional jumps --------------------------------

@dataclass(frozen=True, eq=False)
class SplitMeasure:
    """Measure on R: ``atom0 * delta_0`` plus densities on each half-line."""

    atom0: float = 1.0
    pos: ExpPolyFn = field(default_factory=ExpPolyFn)
    neg: ExpPolyFn = field(default_factory=ExpPolyFn)

    def __post_init__(self):
        # reuse the nonnegativity checks of one-sided measures
        a = ExpPolyMeasure(self.atom0, self.pos, "pos")
        ExpPolyMeasure(0.0, self.neg, "neg")
        object.__setattr__(self, "atom0", a.atom0)

    @classmethod
    def from_one_sided(cls, m: ExpPolyMeasure) -> "SplitMeasure":
        if m.side == "pos":
            return cls(m.atom0, m.dens, ExpPolyFn())
        return cls(m.atom0, ExpPolyFn(), m.dens)

    @property
    def pos_measure(self) -> ExpPolyMeasure:
        return ExpPolyMeasure(0.0, self.pos, "pos")

    @property
    def neg_measure(self) -> ExpPolyMeasure:
        return ExpPolyMeasure(0.0, self.neg, "neg")

    def mass(self) -> float:
        return self.atom0 + self.pos.integral() + self.neg.integral()

    def mean(self) -> float:
        return self.pos.moment1() - self.neg.moment1()

    def fourier(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.atom0 + self.pos.transform(-1j * theta) + self.neg.transform(1j * theta)

    def reflect(self) -> "SplitMeasure":
        return SplitMeasure(self.atom0, self.neg, self.pos)

    def is_dirac0(self, tol: float = ATOL) -> bool:
        return abs(self.atom0 - 1.0) <= tol and self.pos.is_zero() and self.neg.is_zero()

    def close_to(self, other: "SplitMeasure", atol: float = ATOL) -> bool:
        return (abs(self.atom0 - other.atom0) <= atol and self.pos.close_to(other.pos, atol)
                and self.neg.close_to(other.neg, atol))

    def to_json(self) -> dict:
        return {"atom0": self.atom0,
                "pos": {"terms": [{"w": w, "p": p, "beta": b} for w, p, b in self.pos.terms]},
                "neg": {"terms": [{"w": w, "p": p, "beta": b} for w, p, b in self.neg.terms]}}


DIRAC0 = SplitMeasure(1.0)


# -- specs ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LevyComponent:
    """Killed Lévy triplet of one phase.

    ``kill`` is not sign-checked here; validate_exponent reports violations.
    """

    kill: float = 0.0
    center: float = 0.0
    gauss: float = 0.0
    jumps_pos: ExpPolyMeasure = field(default_factory=lambda: ExpPolyMeasure.zero("pos"))
    jumps_neg: ExpPolyMeasure = field(default_factory=lambda: ExpPolyMeasure.zero("neg"))

    def __post_init__(self):
        if self.jumps_pos.side != "pos" or self.jumps_neg.side != "neg":
            raise ValueError("jumps_pos/jumps_neg must live on the positive/negative side")
        if self.jumps_pos.atom0 != 0 or self.jumps_neg.atom0 != 0:
            raise ValueError("Lévy measures carry no atom at 0")

    def close_to(self, other: "LevyComponent", atol: float = ATOL) -> bool:
        return (abs(self.kill - other.kill) <= atol and abs(self.center - other.center) <= atol
                and abs(self.gauss - other.gauss) <= atol
                and self.jumps_pos.close_to(other.jumps_pos, atol)
                and self.jumps_neg.close_to(other.jumps_neg, atol))


@dataclass(frozen=True, eq=False)
class MapSpec:
    """Characteristics of an R x [n] valued MAP."""

    Q: np.ndarray
    comps: tuple
    trans: tuple
    pi: np.ndarray | None = None

    def __post_init__(self):
        Q = as_generator(self.Q)
        n = Q.shape[0]
        comps = tuple(self.comps)
        trans = tuple(tuple(row) for row in self.trans)
        if len(comps) != n or len(trans) != n or any(len(r) != n for r in trans):
            raise ValueError("comps/trans sizes do not match Q")
        for i in range(n):
            if not trans[i][i].is_dirac0():
                raise ValueError(f"trans[{i}][{i}] must be delta_0")
            for j in range(n):
                if i != j and Q[i, j] > 0 and abs(trans[i][j].mass() - 1.0) > 1e-10:
                    raise ValueError(f"trans[{i}][{j}] has mass {trans[i][j].mass():.17g}, expected 1")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "comps", comps)
        object.__setattr__(self, "trans", trans)
        if self.pi is not None:
            object.__setattr__(self, "pi", as_phase_dist(self.pi, n))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def kill(self) -> np.ndarray:
        return np.array([c.kill for c in self.comps])

    def close_to(self, other: "MapSpec", atol: float = ATOL) -> bool:
        if self.n != other.n or not np.allclose(self.Q, other.Q, rtol=0, atol=atol):
            return False
        n = self.n
        return (all(self.comps[i].close_to(other.comps[i], atol) for i in range(n))
                and all(self.trans[i][j].close_to(other.trans[i][j], atol)
                        for i in range(n) for j in range(n)))


@dataclass(frozen=True, eq=False)
class MapSubordinatorSpec:
    """MAP subordinator: drift ``d_i >= 0``, jumps on [0, inf), no Gaussian part.

    ``levy[i]`` is the Lévy measure of phase ``i`` (on (0, inf)), ``trans[i][j]``
    the law ``F_ij`` on [0, inf) of the jump at a switch from ``i`` to ``j``.
    """

    Q: np.ndarray
    drift: np.ndarray
    levy: tuple
    trans: tuple
    kill: np.ndarray | None = None
    pi: np.ndarray | None = None

    def __post_init__(self):
        Q = as_generator(self.Q)
        n = Q.shape[0]
        drift = np.asarray(self.drift, dtype=float).reshape(-1)
        kill = np.zeros(n) if self.kill is None else np.asarray(self.kill, dtype=float).reshape(-1)
        levy = tuple(self.levy)
        trans = tuple(tuple(r) for r in self.trans)
        if drift.size != n or kill.size != n or len(levy) != n or len(trans) != n:
            raise ValueError("sizes do not match Q")
        if np.any(drift < 0):
            raise ValueError("subordinator drifts must be nonnegative")
        for i in range(n):
            if levy[i].side != "pos" or levy[i].atom0 != 0:
                raise ValueError(f"levy[{i}] must be a measure on (0, inf)")
            if len(trans[i]) != n:
                raise ValueError("trans must be n x n")
            for j in range(n):
                F = trans[i][j]
                if F.side != "pos":
                    raise ValueError(f"trans[{i}][{j}] must live on [0, inf)")
                if i == j and not (F.dens.is_zero() and abs(F.atom0 - 1) <= ATOL):
                    raise ValueError(f"trans[{i}][{i}] must be delta_0")
                if i != j and Q[i, j] > 0 and abs(mass(F) - 1.0) > 1e-10:
                    raise ValueError(f"trans[{i}][{j}] has mass {mass(F):.17g}, expected 1")
        for name, val in (("Q", Q), ("drift", drift), ("kill", kill), ("levy", levy), ("trans", trans)):
            object.__setattr__(self, name, val)
        if self.pi is not None:
            object.__setattr__(self, "pi", as_phase_dist(self.pi, n))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def psi0(self) -> np.ndarray:
        """Psi(0) = Q - diag(kill) (all F_ij have unit mass)."""
        return self.Q - np.diag(self.kill)

    def atom(self, i: int, j: int) -> float:
        """``q_ij F_ij({0})``; zero on the diagonal."""
        return 0.0 if i == j else self.Q[i, j] * self.trans[i][j].atom0

    def dens(self, i: int, j: int) -> ExpPolyFn:
        """Density on (0, inf) of the Lévy measure matrix entry (i, j)."""
        return self.levy[i].dens if i == j else self.trans[i][j].dens * self.Q[i, j]

    def tail(self, i: int, j: int) -> ExpPolyFn:
        """Open tail on (0, inf) of the Lévy measure matrix entry (i, j)."""
        return self.dens(i, j).tail()

    def with_kill(self, kill) -> "MapSubordinatorSpec":
        return MapSubordinatorSpec(self.Q, self.drift, self.levy, self.trans, kill, self.pi)

    def mean_rates(self) -> np.ndarray:
        """Phi'(0) entrywise: mean jump intensities per (i, j), drift on the diagonal."""
        n = self.n
        M = np.zeros((n, n))
        for i in range(n):
            M[i, i] = self.drift[i] + self.levy[i].dens.moment1()
            for j in range(n):
                if i != j:
                    M[i, j] = self.Q[i, j] * mean(self.trans[i][j])
        return M

    def to_map(self) -> MapSpec:
        """Same process as a general MapSpec (center includes the compensator)."""
        comps = []
        for i in range(self.n):
            c = self.drift[i] + self.levy[i].dens.moment1_unit()
            comps.append(LevyComponent(float(self.kill[i]), float(c), 0.0, self.levy[i]))
        trans = [[SplitMeasure.from_one_sided(F) for F in row] for row in self.trans]
        return MapSpec(self.Q, comps, trans, self.pi)

    def close_to(self, other: "MapSubordinatorSpec", atol: float = ATOL) -> bool:
        n = self.n
        return (n == other.n and np.allclose(self.Q, other.Q, rtol=0, atol=atol)
                and np.allclose(self.drift, other.drift, rtol=0, atol=atol)
                and np.allclose(self.kill, other.kill, rtol=0, atol=atol)
                and all(self.levy[i].close_to(other.levy[i], atol) for i in range(n))
                and all(self.trans[i][j].close_to(other.trans[i][j], atol)
                        for i in range(n) for j in range(n)))


def subordinator(Q, drift, levy=None, trans=None, kill=None, pi=None) -> MapSubordinatorSpec:
    """Convenience constructor: ``levy`` entries may be term lists, ``trans``
    entries may be ExpPolyMeasures or ``(atom0, terms)`` pairs."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if levy is None:
        levy = [()] * n
    levy = [m if isinstance(m, ExpPolyMeasure) else ExpPolyMeasure.from_terms(m) for m in levy]
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            F = None if trans is None else trans[i][j]
            if i == j or F is None:
                F = ExpPolyMeasure.dirac0()
            elif not isinstance(F, ExpPolyMeasure):
                atom0, terms = F
                F = ExpPolyMeasure.from_terms(terms, atom0)
            row.append(F)
        rows.append(row)
    return MapSubordinatorSpec(Q, drift, levy, rows, kill, pi)


# -- exponents ----------------------------------------------------------------------

def _levy_diag(comp: LevyComponent, theta: np.ndarray) -> np.ndarray:
    jp, jn = comp.jumps_pos, comp.jumps_neg
    comp_term = jp.dens.moment1_unit() - jn.dens.moment1_unit()
    val = (-comp.kill + 1j * comp.center * theta - 0.5 * comp.gauss * theta ** 2
           + fourier(jp, theta) - mass(jp) + fourier(jn, theta) - mass(jn)
           - 1j * theta * comp_term)
    return val


def psi(spec, theta):
    """MAP exponent at real ``theta`` (scalar or 1-D array).

    Returns an (n, n) array for scalar input and (m, n, n) otherwise.
    """
    theta = np.asarray(theta, dtype=float)
    scalar = theta.ndim == 0
    th = np.atleast_1d(theta)
    n = spec.n
    out = np.zeros((th.size, n, n), dtype=complex)
    Q = spec.Q
    if isinstance(spec, MapSubordinatorSpec):
        for i in range(n):
            m = spec.levy[i]
            out[:, i, i] = (-spec.kill[i] + 1j * spec.drift[i] * th + fourier(m, th) - mass(m) + Q[i, i])
            for j in range(n):
                if j != i and Q[i, j] != 0:
                    out[:, i, j] = Q[i, j] * fourier(spec.trans[i][j], th)
    else:
        for i in range(n):
            out[:, i, i] = _levy_diag(spec.comps[i], th) + Q[i, i]
            for j in range(n):
                if j != i and Q[i, j] != 0:
                    out[:, i, j] = Q[i, j] * spec.trans[i][j].fourier(th)
    return out[0] if scalar else out


def phi(spec: MapSubordinatorSpec, z):
    """Laplace exponent ``Phi(z) = -Psi(iz)`` for ``Re z >= 0``.

    Defined by ``E[exp(-z H_1); J_1 = j] = exp(-Phi(z))_{ij}``.
    """
    if not isinstance(spec, MapSubordinatorSpec):
        raise TypeError("phi needs a MapSubordinatorSpec")
    z = np.asarray(z, dtype=complex)
    if np.any(z.real < 0):
        raise ValueError("phi is only defined for Re z >= 0")
    scalar = z.ndim == 0
    zz = np.atleast_1d(z)
    n = spec.n
    Q = spec.Q
    out = np.zeros((zz.size, n, n), dtype=complex)
    for i in range(n):
        m = spec.levy[i]
        out[:, i, i] = spec.kill[i] - Q[i, i] + spec.drift[i] * zz + mass(m) - m.dens.transform(zz)
        for j in range(n):
            if j != i and Q[i, j] != 0:
                F = spec.trans[i][j]
                out[:, i, j] = -Q[i, j] * (F.atom0 + F.dens.transform(zz))
    return out[0] if scalar else out


def transition(spec, t: float, theta: float = 0.0) -> np.ndarray:
    """``exp(t Psi(theta))``, i.e. ``E[exp(i theta xi_t); J_t = j]``."""
    return expm(t * psi(spec, theta))


# -- validity ------------------------------------------------------------------------

@dataclass
class Diagnostics:
    ok: bool
    failures: list = field(default_factory=list)   # (condition, location, detail)

    def to_json(self) -> dict:
        return {"ok": self.ok, "failures": [
            {"condition": c, "where": w, "detail": d} for c, w, d in self.failures]}


def validate_exponent(spec, tol: float = ATOL) -> Diagnostics:
    """Check that ``spec`` describes a MAP exponent.

    (i) each diagonal entry is a killed Lévy exponent: ``kill_i - q_ii >= 0``,
    ``gauss_i >= 0``, jump densities nonnegative; (ii) off-diagonal entries are
    transforms of finite nonnegative measures; (iii) ``-Psi(0) 1 >= 0``.

    Besides MapSpec and MapSubordinatorSpec this accepts any object exposing
    the same ``diag_parts``/``offdiag_parts``/``psi0`` interface, which the
    bonding candidate in :mod:`mapwh.friendship` uses.
    """
    fails = []
    if hasattr(spec, "diag_parts"):
        diag, off, psi0 = spec.diag_parts(), spec.offdiag_parts(), spec.psi0()
    else:
        diag, off, psi0 = _parts(spec)
    n = psi0.shape[0]
    for i, (killing, gauss, dens_list) in enumerate(diag):
        if killing < -tol:
            fails.append(("i", f"phase {i}", f"killing rate {killing:.6g} < 0"))
        if gauss < -tol:
            fails.append(("i", f"phase {i}", f"Gaussian coefficient {gauss:.6g} < 0"))
        for side, f in dens_list:
            s = f.scan_nonneg()
            if not s.ok:
                fails.append(("i", f"phase {i} ({side})", f"Lévy density {s.value:.6g} at |x|={s.t:.6g}"))
    for (i, j), (atom, dens_list) in off.items():
        if atom < -tol:
            fails.append(("ii", f"({i},{j})", f"atom at 0 is {atom:.6g}"))
        for side, f in dens_list:
            s = f.scan_nonneg()
            if not s.ok:
                fails.append(("ii", f"({i},{j}) ({side})", f"density {s.value:.6g} at |x|={s.t:.6g}"))
    v = -np.real(psi0) @ np.ones(n)
    for i in range(n):
        if v[i] < -tol:
            fails.append(("iii", f"phase {i}", f"(-Psi(0) 1)_{i} = {v[i]:.6g}"))
    return Diagnostics(not fails, fails)


def _parts(spec):
    Q = spec.Q
    n = Q.shape[0]
    diag, off = [], {}
    if isinstance(spec, MapSubordinatorSpec):
        for i in range(n):
            diag.append((spec.kill[i] - Q[i, i], 0.0, [("pos", spec.levy[i].dens)]))
            for j in range(n):
                if i != j:
                    off[(i, j)] = (spec.atom(i, j), [("pos", spec.dens(i, j))])
    else:
        for i in range(n):
            c = spec.comps[i]
            diag.append((c.kill - Q[i, i], c.gauss, [("pos", c.jumps_pos.dens), ("neg", c.jumps_neg.dens)]))
            for j in range(n):
                if i != j:
                    F = spec.trans[i][j]
                    off[(i, j)] = (Q[i, j] * F.atom0, [("pos", F.pos * Q[i, j]), ("neg", F.neg * Q[i, j])])
    psi0 = np.real(psi(spec, 0.0))
    return diag, off, psi0


def recover_Q_dagger(psi0, tol: float = ATOL) -> tuple[np.ndarray, np.ndarray]:
    """Split ``Psi(0)`` into generator and killing: ``kill = -Psi(0) 1``, ``Q = Psi(0) + diag(kill)``."""
    psi0 = np.asarray(psi0)
    if np.iscomplexobj(psi0):
        if np.max(np.abs(psi0.imag), initial=0.0) > 1e-12:
            raise ValueError("Psi(0) must be real")
        psi0 = psi0.real
    psi0 = np.array(psi0, dtype=float)
    n = psi0.shape[0]
    kill = -psi0 @ np.ones(n)
    Q = psi0 + np.diag(kill)
    off = Q - np.diag(np.diag(Q))
    if np.any(off < -tol):
        i, j = np.unravel_index(np.argmin(off), off.shape)
        raise ValueError(f"recovered Q has negative off-diagonal ({i},{j}) = {off[i, j]:.6g}")
    off = np.clip(off, 0.0, None)
    Q = off - np.diag(off.sum(axis=1))
    kill[np.abs(kill) <= tol] = 0.0
    return Q, kill


# -- duality -------------------------------------------------------------------------

def pi_dual(spec, pi) -> MapSpec:
    """The MAP with exponent ``diag(pi)^-1 Psi(-theta)^T diag(pi)``."""
    if isinstance(spec, MapSubordinatorSpec):
        spec = spec.to_map()
    pi = as_phase_dist(pi, spec.n)
    Q = spec.Q
    if np.max(np.abs(pi @ Q)) > ATOL:
        raise ValueError("pi is not invariant for Q")
    n = spec.n
    Qd = (Q.T * pi[None, :]) / pi[:, None]
    np.fill_diagonal(Qd, np.diag(Q))
    comps = [LevyComponent(c.kill, -c.center, c.gauss, reflect(c.jumps_neg), reflect(c.jumps_pos))
             for c in spec.comps]
    trans = [[DIRAC0 if i == j else spec.trans[j][i].reflect() for j in range(n)] for i in range(n)]
    return MapSpec(Qd, comps, trans, pi)


def dual_matrix(M: np.ndarray, pi) -> np.ndarray:
    """``diag(pi)^-1 M^T diag(pi)`` (batched over leading axes)."""
    pi = np.asarray(pi, dtype=float)
    Mt = np.swapaxes(M, -1, -2)
    return Mt * pi[None, :] / pi[:, None]


def wh_product(Hp, Hm, pi, theta):
    """``-diag(pi)^-1 Psi-(-theta)^T diag(pi) Psi+(theta)``."""
    theta = np.asarray(theta, dtype=float)
    return -dual_matrix(psi(Hm, -theta), pi) @ psi(Hp, theta)
