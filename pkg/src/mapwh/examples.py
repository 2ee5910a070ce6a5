"""Parametric families of friends with two phases.

* ``gen_spectrally_positive``: ascending subordinator with completely
  monotone (exponential mixture) Lévy densities, descending pure drift.
* ``gen_double_exp``: both ladder processes are drift plus exponential jumps;
  the bond is a Markov-modulated double exponential jump diffusion.
* ``counterexample_drift``: the pair that is friendly only for the right drift.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, fields

import numpy as np

from .map_core import as_generator, as_phase_dist, subordinator
from .measures import ExpPolyFn, ExpPolyMeasure

log = logging.getLogger(__name__)

REL_TOL = 1e-10


class ParameterError(ValueError):
    def __init__(self, condition: str, message: str):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


def _vec(x, n=2):
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size != n or np.any(v <= 0):
        raise ValueError(f"expected {n} positive numbers, got {x}")
    return v


def _irreducible2(Q, name):
    Q = as_generator(Q)
    if Q.shape != (2, 2) or Q[0, 1] <= 0 or Q[1, 0] <= 0:
        raise ParameterError("generator", f"{name} must be an irreducible 2x2 generator")
    return Q


def _params_to_json(p) -> dict:
    out = {}
    for f in fields(p):
        v = getattr(p, f.name)
        out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


# -- spectrally positive family ------------------------------------------------------

@dataclass
class SpectrallyPositiveParams:
    Qp: np.ndarray
    Qm: np.ndarray
    pi: np.ndarray
    mu_plus: list          # per phase: list of (mass, rate) atoms of the representing measure
    d_p: np.ndarray
    d_m: np.ndarray

    def __post_init__(self):
        self.Qp = _irreducible2(self.Qp, "Q+")
        self.Qm = _irreducible2(self.Qm, "Q-")
        self.pi = as_phase_dist(self.pi, 2)
        self.d_p, self.d_m = _vec(self.d_p), _vec(self.d_m)
        mu = []
        for atoms in self.mu_plus:
            atoms = [(float(m), float(r)) for m, r in atoms]
            if any(m <= 0 or r <= 0 for m, r in atoms):
                raise ParameterError("cond.i", "representing measure must have positive masses at positive rates")
            mu.append(atoms)
        if len(mu) != 2:
            raise ValueError("mu_plus needs one list per phase")
        self.mu_plus = mu

    to_json = _params_to_json

    @classmethod
    def from_json(cls, obj):
        return cls(obj["Qp"], obj["Qm"], obj["pi"], obj["mu_plus"], obj["d_p"], obj["d_m"])


def _sp_tail_integral(atoms) -> float:
    return sum(m / r ** 2 for m, r in atoms)


def _sp_cond2_residuals(p: SpectrallyPositiveParams) -> np.ndarray:
    pi, Qp, Qm = p.pi, p.Qp, p.Qm
    out = np.zeros(2)
    for i, j in ((0, 1), (1, 0)):
        lhs = p.d_p[i] + _sp_tail_integral(p.mu_plus[i])
        rhs = pi[j] / pi[i] * Qp[j, i] * p.d_m[j] / Qm[i, j]
        out[i] = (lhs - rhs) / rhs
    return out


def _sp_cond3_fn(p: SpectrallyPositiveParams, i: int) -> ExpPolyFn:
    j = 1 - i
    qij, qji = p.Qm[i, j], p.Qm[j, i]
    return ExpPolyFn([(m * (1 + p.d_m[i] / qij * r - qji / (p.d_m[j] * r)), 0, r)
                      for m, r in p.mu_plus[i]])


def validate_spectrally_positive(p: SpectrallyPositiveParams) -> None:
    res = _sp_cond2_residuals(p)
    if np.max(np.abs(res)) > REL_TOL:
        raise ParameterError("cond.ii", f"drift balance violated (relative residuals {res.tolist()})")
    for i in range(2):
        j = 1 - i
        f = _sp_cond3_fn(p, i)
        scan = f.scan_nonneg(slack=0.0)
        strict = scan.ok and f.at0() > 0 and (f.is_zero() is False)
        a = min(r for _, r in p.mu_plus[i])
        suff = a * (1 + p.d_m[i] / p.Qm[i, j] * a) > p.Qm[j, i] / p.d_m[j]
        if strict and not suff:
            log.info("phase %d: integral positivity holds although the support bound does not", i)
        if not strict:
            raise ParameterError("cond.iii", f"integral positivity fails in phase {i}"
                                 + (f" at x={scan.t:.6g}" if scan.t is not None else ""))


def gen_spectrally_positive(p: SpectrallyPositiveParams):
    validate_spectrally_positive(p)
    pi, Qp, Qm, dp, dm = p.pi, p.Qp, p.Qm, p.d_p, p.d_m
    levy = [ExpPolyMeasure.from_terms([(m, 0, r) for m, r in p.mu_plus[i]]) for i in range(2)]
    trans = [[None, None], [None, None]]
    for i, j in ((0, 1), (1, 0)):
        c = pi[j] / pi[i] * Qm[j, i] / (Qp[i, j] * dm[i])
        atom = c * dp[j]
        dens = levy[j].dens.tail() * c
        F = ExpPolyMeasure(atom, dens)
        if abs(F.atom0 + dens.integral() - 1) > 1e-10:
            raise ParameterError("cond.ii", f"F+_{i + 1}{j + 1} is not a probability measure")
        trans[i][j] = F
    Hp = subordinator(Qp, dp, levy, trans, pi=pi)
    Hm = subordinator(Qm, dm, pi=pi)
    return Hp, Hm


def sample_spectrally_positive(rng: np.random.Generator, max_atoms: int = 3) -> SpectrallyPositiveParams:
    """Random parameters: fix everything but the drifts, solve the drift
    balance for d+ and inflate d- until the inequalities hold with margin."""
    q = rng.uniform(0.3, 2.0, 4)
    Qp = np.array([[-q[0], q[0]], [q[1], -q[1]]])
    Qm = np.array([[-q[2], q[2]], [q[3], -q[3]]])
    w = rng.uniform(0.3, 0.7)
    pi = np.array([w, 1 - w])
    mu = [[(float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.5, 4.0)))
           for _ in range(rng.integers(1, max_atoms + 1))] for _ in range(2)]
    dm = rng.uniform(0.5, 2.0, 2)
    for _ in range(400):
        dp = np.array([pi[1] / pi[0] * Qp[1, 0] * dm[1] / Qm[0, 1] - _sp_tail_integral(mu[0]),
                       pi[0] / pi[1] * Qp[0, 1] * dm[0] / Qm[1, 0] - _sp_tail_integral(mu[1])])
        if np.all(dp > 0.1 * (dp + np.array([_sp_tail_integral(a) for a in mu]))):
            p = SpectrallyPositiveParams(Qp, Qm, pi, mu, dp, dm)
            if all(np.all(_sp_cond3_fn(p, i).w > 0.1 * np.array([m for m, _ in mu[i]])) for i in range(2)):
                return p
        dm = dm * 1.1
    raise RuntimeError("could not find admissible drifts")


# -- double exponential family -------------------------------------------------------

@dataclass
class DoubleExpParams:
    Qp: np.ndarray
    Qm: np.ndarray
    pi: np.ndarray
    gamma_p: np.ndarray
    gamma_m: np.ndarray
    beta_p: np.ndarray
    beta_m: np.ndarray
    d_p: np.ndarray
    d_m: np.ndarray

    def __post_init__(self):
        self.Qp = _irreducible2(self.Qp, "Q+")
        self.Qm = _irreducible2(self.Qm, "Q-")
        self.pi = as_phase_dist(self.pi, 2)
        for name in ("gamma_p", "gamma_m", "beta_p", "beta_m", "d_p", "d_m"):
            setattr(self, name, _vec(getattr(self, name)))

    to_json = _params_to_json

    @classmethod
    def from_json(cls, obj):
        return cls(**{f.name: obj[f.name] for f in fields(cls)})

    def side(self, s: str):
        """(Q, gamma, beta, d) of the sign ``s`` and of the opposite sign."""
        P = (self.Qp, self.gamma_p, self.beta_p, self.d_p)
        M = (self.Qm, self.gamma_m, self.beta_m, self.d_m)
        return (P, M) if s == "+" else (M, P)


def _de_comp1(p: DoubleExpParams) -> np.ndarray:
    pi = p.pi
    out = []
    for i, j in ((0, 1), (1, 0)):
        lhs = pi[i] / pi[j] * p.Qm[i, j] * (p.d_p[i] + p.gamma_p[i] / p.beta_p[i] ** 2)
        rhs = p.Qp[j, i] * (p.d_m[j] + p.gamma_m[j] / p.beta_m[j] ** 2)
        out.append((lhs - rhs) / rhs)
    return np.array(out)


def _de_comp2(p: DoubleExpParams) -> np.ndarray:
    """Ratios d+_i / bound_i; must exceed 1."""
    pi = p.pi
    b1 = pi[1] / pi[0] * p.Qp[1, 0] / p.Qm[0, 1] * p.gamma_m[1] / p.beta_m[1] ** 2
    b2 = pi[0] / pi[1] * p.Qp[0, 1] / p.Qm[1, 0] * p.gamma_m[0] / p.beta_m[0] ** 2
    return np.array([p.d_p[0] / b1, p.d_p[1] / b2])


def _de_comp3(p: DoubleExpParams) -> dict:
    pi = p.pi
    out = {}
    for s in "+-":
        (QP, gP, bP, dP), (QM, gM, bM, dM) = p.side(s)
        for i, j in ((0, 1), (1, 0)):
            num = dP[i] * bM[j] ** 2 - pi[j] / pi[i] * QP[j, i] / QM[i, j] * gM[j]
            den = dP[i] * dM[j] * bP[i] ** 2 * bM[j] ** 2 - gM[j] * gP[i]
            out[(s, i, j)] = 1 + bP[i] * dM[i] / QM[i, j] - QM[j, i] * bP[i] * num / den
    return out


def double_exp_atoms(p: DoubleExpParams) -> dict:
    """F+-_ij({0}) from the closed-form solution of the mass balance."""
    pi = p.pi
    out = {}
    for s in "+-":
        (QP, gP, bP, dP), (QM, gM, bM, dM) = p.side(s)
        for i, j in ((0, 1), (1, 0)):
            num = dP[j] * dM[i] - dP[j] * pi[j] / pi[i] * QM[j, i] / QP[i, j] * gP[j] / bP[j] ** 2
            den = dP[j] * dM[i] - gP[j] * gM[i] / (bP[j] ** 2 * bM[i] ** 2)
            out[(s, i, j)] = num / den
    return out


def double_exp_zeta(p: DoubleExpParams) -> dict:
    """The auxiliary constants zeta+-_ij of the fellowship derivative."""
    pi = p.pi
    out = {}
    for s in "+-":
        (QP, gP, bP, dP), (QM, gM, bM, dM) = p.side(s)
        for i, j in ((0, 1), (1, 0)):
            num = dP[j] * bM[i] ** 2 - pi[i] / pi[j] * QP[i, j] / QM[j, i] * gM[i]
            den = dP[j] * dM[i] * bP[j] ** 2 * bM[i] ** 2 - gM[i] * gP[j]
            out[(s, i, j)] = QM[i, j] * QM[j, i] * num / den
    return out


def double_exp_fellow_offdiag(p: DoubleExpParams) -> dict:
    """Off-diagonal coefficients of minus the derivative of the fellowship
    matrices (each entry is a single exponential in x).

    The zeta expression alone misses the term ``-q_ji (1 - F_ji({0})) / beta_j``
    coming from the diagonal of the opposite exponent at 0.
    """
    pi = p.pi
    z, atoms = double_exp_zeta(p), double_exp_atoms(p)
    out = {}
    for s in "+-":
        (QP, gP, bP, dP), (QM, gM, bM, dM) = p.side(s)
        o = "-" if s == "+" else "+"
        for i, j in ((0, 1), (1, 0)):
            out[(s, i, j)] = (pi[j] / pi[i] * gP[j] * bP[j]
                              * (z[(s, i, j)] - QM[j, i] * (1 - atoms[(o, j, i)]) / bP[j]))
    return out


def validate_double_exp(p: DoubleExpParams) -> None:
    r1 = _de_comp1(p)
    if np.max(np.abs(r1)) > REL_TOL:
        raise ParameterError("exp.comp1", f"mean balance violated (relative residuals {r1.tolist()})")
    r2 = _de_comp2(p)
    if np.any(r2 <= 1):
        raise ParameterError("exp.comp2", f"drift lower bound violated (ratios {r2.tolist()})")
    for key, v in _de_comp3(p).items():
        if not v > 0:
            raise ParameterError("exp.comp3", f"positivity violated for {key}: {v:.6g}")


def gen_double_exp(p: DoubleExpParams):
    validate_double_exp(p)
    pi = p.pi
    atoms = double_exp_atoms(p)
    specs = []
    for s in "+-":
        (QP, gP, bP, dP), (QM, gM, bM, dM) = p.side(s)
        other = "-" if s == "+" else "+"
        levy = [ExpPolyMeasure.from_terms([(gP[i], 0, bP[i])]) for i in range(2)]
        trans = [[None, None], [None, None]]
        for i, j in ((0, 1), (1, 0)):
            a = atoms[(s, i, j)]
            if not 0 < a < 1:
                raise ParameterError("exp.atoms", f"F{s}_{i + 1}{j + 1}({{0}}) = {a:.6g} outside (0,1)")
            c = pi[j] / pi[i] * QM[j, i] / (QP[i, j] * dM[i]) * atoms[(other, j, i)] * gP[j] / bP[j]
            trans[i][j] = ExpPolyMeasure(a, ExpPolyFn([(c, 0, bP[j])]))
        specs.append(subordinator(QP, dP, levy, trans, pi=pi))
    return specs[0], specs[1]


def _draw_double_exp(rng, symmetric):
    if symmetric:
        q = np.full(4, rng.uniform(0.3, 2.0))
        q[2:] = rng.uniform(0.3, 2.0)
        pi = np.array([0.5, 0.5])
        g = np.repeat(rng.uniform(0.3, 2.0, 2), 2)
        b = np.repeat(rng.uniform(0.5, 3.0, 2), 2)
    else:
        q = rng.uniform(0.3, 2.0, 4)
        w = rng.uniform(0.3, 0.7)
        pi = np.array([w, 1 - w])
        g = rng.uniform(0.3, 2.0, 4)
        b = rng.uniform(0.5, 3.0, 4)
    Qp = np.array([[-q[0], q[0]], [q[1], -q[1]]])
    Qm = np.array([[-q[2], q[2]], [q[3], -q[3]]])
    gp, gm, bp, bm = g[:2], g[2:], b[:2], b[2:]
    dm = np.full(2, rng.uniform(0.3, 1.0)) if symmetric else rng.uniform(0.3, 1.0, 2)
    for _ in range(400):
        dp = np.array([pi[1] / pi[0] * Qp[1, 0] * (dm[1] + gm[1] / bm[1] ** 2) / Qm[0, 1] - gp[0] / bp[0] ** 2,
                       pi[0] / pi[1] * Qp[0, 1] * (dm[0] + gm[0] / bm[0] ** 2) / Qm[1, 0] - gp[1] / bp[1] ** 2])
        if np.all(dp > 0):
            p = DoubleExpParams(Qp, Qm, pi, gp, gm, bp, bm, dp, dm)
            if np.all(_de_comp2(p) > 1.1) and all(v > 0.1 for v in _de_comp3(p).values()):
                return p
        dm = dm * 1.1
    return None


def sample_double_exp(rng: np.random.Generator, symmetric: bool = False,
                      fellows: bool = True, max_tries: int = 1000) -> DoubleExpParams:
    """Random parameters satisfying the three conditions with a 10% margin.

    Drifts are solved and inflated as usual. With ``fellows`` the draw is
    rejected unless the fellowship off-diagonals are positive, which drift
    inflation alone cannot enforce.
    """
    for _ in range(max_tries):
        p = _draw_double_exp(rng, symmetric)
        if p is None:
            continue
        if not fellows or all(v > 0 for v in double_exp_fellow_offdiag(p).values()):
            return p
    raise RuntimeError("could not find admissible parameters")


# -- counterexample ------------------------------------------------------------------

def counterexample_drift(a: float):
    """Ascending: drift 1, Exp(1) jumps, switches at rate 1 with jump law
    ``(delta_0 + e^{-x} dx) / 2``. Descending: pure drift ``a``, same switching."""
    if not a > 0:
        raise ValueError("a must be positive")
    Q = np.array([[-1.0, 1.0], [1.0, -1.0]])
    pi = np.array([0.5, 0.5])
    F = (0.5, [(0.5, 0, 1.0)])
    Hp = subordinator(Q, [1.0, 1.0], [[(1.0, 0, 1.0)], [(1.0, 0, 1.0)]], [[None, F], [F, None]], pi=pi)
    Hm = subordinator(Q, [a, a], pi=pi)
    return Hp, Hm
