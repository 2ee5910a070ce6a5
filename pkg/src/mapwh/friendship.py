"""Friendship of MAP subordinators and construction of the bonding MAP.

Two MAP subordinators ``Hp`` (ascending) and ``Hm`` (descending) are
pi-friends when ``-diag(pi)^-1 Psi-(-theta)^T diag(pi) Psi+(theta)`` is again
a MAP exponent. This holds iff they are pi-compatible and the matrix function
Upsilon below is decreasing on (0, inf) and increasing on (-inf, 0). The
entries of Upsilon are then the tails of the bonding Lévy measure matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .map_core import (ATOL, DIRAC0, LevyComponent, MapSpec, MapSubordinatorSpec, SplitMeasure,
                       as_phase_dist, dual_matrix, psi, recover_Q_dagger, validate_exponent,
                       wh_product)
from .measures import SCAN_SLACK, DensityFn, ExpPolyFn, ExpPolyMeasure, cross_tail_fn, reflect


@dataclass
class Condition:
    id: str
    passed: bool
    witness: dict | None = None
    detail: str = ""

    def to_json(self) -> dict:
        from .io import plain
        return plain({"id": self.id, "pass": self.passed, "witness": self.witness, "detail": self.detail})


@dataclass
class FriendshipReport:
    verdict: str                                # friends | not-friends | undecidable
    conditions: list = field(default_factory=list)
    bonding: MapSpec | None = None
    sufficient: list = field(default_factory=list)   # quasicompatibility / fellowship, informative

    @property
    def friends(self) -> bool:
        return self.verdict == "friends"

    def failed(self) -> list[str]:
        return [c.id for c in self.conditions if not c.passed]

    def to_json(self) -> dict:
        out = {"verdict": self.verdict,
               "conditions": [c.to_json() for c in self.conditions],
               "sufficient": [c.to_json() for c in self.sufficient]}
        if self.bonding is not None:
            from .io import spec_to_json
            out["bonding"] = spec_to_json(self.bonding)
        return out


class NotFriendsError(ValueError):
    def __init__(self, report: FriendshipReport):
        super().__init__(f"not friends: failed {', '.join(report.failed())}")
        self.report = report


def _check_pair(Hp, Hm, pi):
    if not (isinstance(Hp, MapSubordinatorSpec) and isinstance(Hm, MapSubordinatorSpec)):
        raise TypeError("Hp and Hm must be MapSubordinatorSpec")
    if Hp.n != Hm.n:
        raise ValueError("Hp and Hm have different phase counts")
    return as_phase_dist(pi, Hp.n)


def _fnmat(n: int) -> np.ndarray:
    return np.empty((n, n), dtype=object)


# -- overshoot measures and Upsilon ---------------------------------------------------

def chi(spec: MapSubordinatorSpec, i: int, sign: str = "+") -> ExpPolyMeasure:
    """``d_i delta_0 + tail(Pi_i)(x) dx``; ``sign='-'`` gives the reflection."""
    m = ExpPolyMeasure(float(spec.drift[i]), spec.levy[i].dens.tail(), "pos")
    return m if sign == "+" else reflect(m)


def upsilon(Hp: MapSubordinatorSpec, Hm: MapSubordinatorSpec, pi) -> np.ndarray:
    """Matrix of DensityFn: candidate tails of the bonding Lévy measure matrix.

    On x > 0 the entry (i, j) is
    ``sum_k pi_k/pi_i [int_{x+} tail-_ki(y-x) Pi+_kj(dy) - Psi-(0)_ki tail+_kj(x)]
    + d-_i dens+_ij(x)`` and on x < 0 the mirrored expression with the roles
    of the two subordinators exchanged through the pi-duality.
    """
    pi = _check_pair(Hp, Hm, pi)
    n = Hp.n
    Pp, Pm = Hp.psi0(), Hm.psi0()
    U = _fnmat(n)
    for i in range(n):
        for j in range(n):
            pos = Hp.dens(i, j) * Hm.drift[i]
            neg = Hm.dens(j, i) * (pi[j] / pi[i] * Hp.drift[j])
            for k in range(n):
                r = pi[k] / pi[i]
                pos = pos + r * (cross_tail_fn(Hp.dens(k, j), Hm.tail(k, i)).pos - Pm[k, i] * Hp.tail(k, j))
                neg = neg + r * (cross_tail_fn(Hm.dens(k, i), Hp.tail(k, j)).pos - Pp[k, j] * Hm.tail(k, i))
            U[i, j] = DensityFn(pos, neg)
    return U


def eval_fnmat(U: np.ndarray, x) -> np.ndarray:
    """Evaluate a matrix of DensityFn at ``x`` (result shape ``x.shape + (n, n)``)."""
    x = np.asarray(x, dtype=float)
    n = U.shape[0]
    out = np.zeros(x.shape + (n, n))
    for i in range(n):
        for j in range(n):
            out[..., i, j] = U[i, j](x)
    return out


def check_monotone(U: np.ndarray, slack: float = SCAN_SLACK) -> list[Condition]:
    """Entrywise: decreasing on (0, inf), increasing on (-inf, 0).

    Both amount to the closed-form derivative in ``|x|`` being <= 0.
    """
    n = U.shape[0]
    out = []
    for side in ("pos", "neg"):
        witness = None
        for i in range(n):
            for j in range(n):
                f = getattr(U[i, j], side)
                scan = (-f.deriv()).scan_nonneg(slack)
                if not np.isfinite(scan.value if scan.value is not None else 0.0):
                    witness = {"entry": [i, j], "x": None, "derivative": None, "undecidable": True}
                    break
                if not scan.ok:
                    x = scan.t if side == "pos" else -scan.t
                    # derivative in x: on the negative side d/dx = -d/d|x|
                    dval = -scan.value if side == "pos" else scan.value
                    witness = {"entry": [i, j], "x": x, "derivative": dval}
                    break
            if witness is not None:
                break
        desc = "decreasing on (0,inf)" if side == "pos" else "increasing on (-inf,0)"
        out.append(Condition(f"upsilon.monotone.{side}", witness is None, witness, desc))
    return out


# -- compatibility -------------------------------------------------------------------

@dataclass
class NuEntry:
    """Candidate signed measure ``nu_ij`` through its distribution function."""

    dist: DensityFn            # n_ij(x) for x != 0
    atom_residual: float       # atom of the left side of the density identity (must vanish)
    atom_residual_alt: float     # same with d+_i in place of d+_j
    nu0: float                 # nu_ij({0}) = n(0+) - n(0-)
    total: float               # nu_ij(R), zero by construction


def nu_measures(Hp, Hm, pi) -> dict:
    """Candidate ``nu_ij`` for i != j from
    ``q+_ij F+_ij * chi~-_i - pi_j/pi_i q-_ji F~-_ji * chi+_j``."""
    pi = _check_pair(Hp, Hm, pi)
    n = Hp.n
    out = {}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            r = pi[j] / pi[i]
            fp = Hp.dens(i, j)             # q+_ij f+_ij
            fm = Hm.dens(j, i)             # q-_ji f-_ji
            ap, am = Hp.atom(i, j), Hm.atom(j, i)
            tm_i, tp_j = Hm.tail(i, i), Hp.tail(j, j)
            c1 = cross_tail_fn(fp, tm_i)
            c2 = cross_tail_fn(fm, tp_j).reflect()
            pos = fp * Hm.drift[i] + c1.pos - r * (tp_j * am + c2.pos)
            neg = tm_i * ap + c1.neg - r * (fm * Hp.drift[j] + c2.neg)
            dist = DensityFn(pos, neg)
            res = Hm.drift[i] * ap - r * Hp.drift[j] * am
            res_alt = Hm.drift[i] * ap - r * Hp.drift[i] * am
            nm, np_ = dist.limits0()
            out[(i, j)] = NuEntry(dist, res, res_alt, np_ - nm, 0.0)
    return out


def _atom0_value(Hp, Hm, pi, i, j, nu0) -> float:
    """Right side of the atom inequality; equals ``q_ij F_ij({0})`` of the bond."""
    n = Hp.n
    r = pi[j] / pi[i]
    val = ((Hm.kill[i] - Hm.Q[i, i]) * Hp.atom(i, j)
           + (Hp.kill[j] - Hp.Q[j, j]) * r * Hm.atom(j, i) - nu0)
    for k in range(n):
        if k != i and k != j:
            val -= pi[k] / pi[i] * Hm.atom(k, i) * Hp.atom(k, j)
    return float(val)


def _xi0(Hp, Hm, pi) -> np.ndarray:
    """``diag(pi)^-1 Psi-(0)^T diag(pi) Psi+(0)``."""
    return dual_matrix(Hm.psi0(), pi) @ Hp.psi0()


def _vector_conditions(Hp, Hm, pi, prefix: str, tol: float) -> list[Condition]:
    X = _xi0(Hp, Hm, pi)
    v3 = X @ np.ones(Hp.n)
    v4 = pi @ X
    out = []
    for cid, v, desc in ((f"{prefix}.iii", v3, "diag(pi)^-1 Psi-(0)^T diag(pi) Psi+(0) 1 >= 0"),
                         (f"{prefix}.iv", v4, "pi^T diag(pi)^-1 Psi-(0)^T diag(pi) Psi+(0) >= 0")):
        k = int(np.argmin(v))
        ok = bool(v[k] >= -tol)
        out.append(Condition(cid, ok, None if ok else {"index": k, "value": float(v[k])}, desc))
    return out


def check_compatibility(Hp, Hm, pi, tol: float = ATOL) -> list[Condition]:
    """Conditions (i)-(iv) of pi-compatibility, (ii) split into (a), (b), (c)."""
    pi = _check_pair(Hp, Hm, pi)
    n = Hp.n
    conds = [Condition("compat.i", True, None,
                       "exp-poly measures have smooth densities on (0,inf)")]
    nus = nu_measures(Hp, Hm, pi)
    wa = wb = wc = None
    alt_fail = []
    for (i, j), nu in nus.items():
        if abs(nu.atom_residual_alt) > tol:
            alt_fail.append([i, j])
        if wa is None and abs(nu.atom_residual) > tol:
            wa = {"entry": [i, j], "residual": nu.atom_residual,
                  "residual_d_plus_i": nu.atom_residual_alt}
        lims = nu.dist.limits0()
        if wb is None and not np.all(np.isfinite(lims)):
            wb = {"entry": [i, j], "limits": list(lims)}
        c = _atom0_value(Hp, Hm, pi, i, j, nu.nu0)
        if wc is None and c < -tol:
            wc = {"entry": [i, j], "value": c}
    detail_a = "d-_i q+_ij F+_ij({0}) = pi_j/pi_i d+_j q-_ji F-_ji({0})"
    if alt_fail:
        detail_a += f"; d+_i indexing would fail at {alt_fail}"
    conds.append(Condition("compat.ii.a", wa is None, wa, detail_a))
    conds.append(Condition("compat.ii.b", wb is None, wb,
                           "candidate n_ij bounded at 0 and vanishing at +-inf"))
    conds.append(Condition("compat.ii.c", wc is None, wc, "atom inequality at 0"))
    conds += _vector_conditions(Hp, Hm, pi, "compat", tol)
    return conds


# -- sufficient conditions -----------------------------------------------------------

def _decreasing_densities(H: MapSubordinatorSpec, label: str) -> Condition:
    n = H.n
    for i in range(n):
        for j in range(n):
            s = (-H.dens(i, j).deriv()).scan_nonneg()
            if not s.ok:
                return Condition(label, False, {"entry": [i, j], "x": s.t, "derivative": -s.value},
                                 "Lévy density matrix decreasing")
    return Condition(label, True, None, "Lévy density matrix decreasing")


def check_quasicompatibility(Hp, Hm, pi, tol: float = ATOL) -> list[Condition]:
    pi = _check_pair(Hp, Hm, pi)
    n = Hp.n
    conds = [_decreasing_densities(Hp, "quasi.decreasing.pos"),
             _decreasing_densities(Hm, "quasi.decreasing.neg")]
    A = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            r = pi[j] / pi[i]
            psi_p = Hp.dens(i, j) * Hm.drift[i] - Hp.tail(j, j) * (r * Hm.atom(j, i))
            psi_m = Hm.tail(i, i) * Hp.atom(i, j) - Hm.dens(j, i) * (r * Hp.drift[j])
            A[i, j] = psi_p.at0() - psi_m.at0()
    conds.append(Condition("quasi.i.bv", True, None, "psi+-_ij are exp-poly, hence of bounded variation"))
    Fp0 = np.array([[1.0 if i == j else Hp.trans[i][j].atom0 for j in range(n)] for i in range(n)])
    Fm0 = np.array([[1.0 if i == j else Hm.trans[i][j].atom0 for j in range(n)] for i in range(n)])
    M = -dual_matrix(Hm.psi0() * Fm0, pi) @ (Hp.psi0() * Fp0) - A
    off = M - np.diag(np.diag(M))
    k = np.unravel_index(np.argmin(off), off.shape)
    ok = bool(off[k] >= -tol)
    conds.append(Condition("quasi.i.ml", ok, None if ok else {"entry": list(map(int, k)), "value": float(off[k])},
                           "atom matrix minus A is an ML-matrix"))
    L = np.diag(Hm.drift) @ np.array([[Hp.atom(i, j) for j in range(n)] for i in range(n)])
    R = dual_matrix(np.diag(Hp.drift) @ np.array([[Hm.atom(i, j) for j in range(n)] for i in range(n)]), pi)
    D = L - R
    k = np.unravel_index(np.argmax(np.abs(D)), D.shape)
    ok = bool(abs(D[k]) <= tol)
    conds.append(Condition("quasi.ii", ok, None if ok else {"entry": list(map(int, k)), "residual": float(D[k])},
                           "drift-weighted atoms at 0 balance"))
    conds += _vector_conditions(Hp, Hm, pi, "quasi", tol)
    return conds


def fellowship_matrices(Hp, Hm, pi) -> tuple[np.ndarray, np.ndarray]:
    """``-diag(pi)^-1 Psi-(0)^T diag(pi) tail+(x) + diag(d-) dens+(x)`` and its dual."""
    pi = _check_pair(Hp, Hm, pi)
    n = Hp.n
    out = []
    for A, B in ((Hp, Hm), (Hm, Hp)):
        P = B.psi0()
        M = _fnmat(n)
        for i in range(n):
            for j in range(n):
                f = A.dens(i, j) * B.drift[i]
                for k in range(n):
                    f = f - (pi[k] / pi[i] * P[k, i]) * A.tail(k, j)
                M[i, j] = f
        out.append(M)
    return out[0], out[1]


def check_fellowship(Hp, Hm, pi) -> list[Condition]:
    pi = _check_pair(Hp, Hm, pi)
    conds = [_decreasing_densities(Hp, "fellow.decreasing.pos"),
             _decreasing_densities(Hm, "fellow.decreasing.neg")]
    Mp, Mm = fellowship_matrices(Hp, Hm, pi)
    n = Hp.n
    for label, M in (("fellow.pos", Mp), ("fellow.neg", Mm)):
        w = None
        for i in range(n):
            for j in range(n):
                s = (-M[i, j].deriv()).scan_nonneg()
                if not s.ok:
                    w = {"entry": [i, j], "x": s.t, "derivative": -s.value}
                    break
            if w:
                break
        conds.append(Condition(label, w is None, w, "matrix function decreasing on (0,inf)"))
    return conds


# -- killing and invariance -----------------------------------------------------------

def check_killing(Hp, Hm, pi, tol: float = ATOL) -> dict:
    """Evaluate ``-diag(pi)^-1 Psi-(0)^T diag(pi) kill+`` and the dual vector.

    The bond is unkilled iff one of them vanishes (for friends). The first
    vector is also the killing vector of the bond.
    """
    pi = _check_pair(Hp, Hm, pi)
    v1 = -dual_matrix(Hm.psi0(), pi) @ Hp.kill
    v2 = -dual_matrix(Hp.psi0(), pi) @ Hm.kill
    z1, z2 = bool(np.all(np.abs(v1) <= tol)), bool(np.all(np.abs(v2) <= tol))
    verdict = "unkilled" if (z1 or z2) else "killed"
    kill_bond = _xi0(Hp, Hm, pi) @ np.ones(Hp.n)
    return {"verdict": verdict, "killing": z1, "killing_dual": z2,
            "v": v1.tolist(), "v_dual": v2.tolist(), "bond_kill": kill_bond.tolist(),
            "consistent": bool(np.all(np.abs(kill_bond) <= tol)) == (verdict == "unkilled")}


def check_pi_invariance(Hp, Hm, pi, tol: float = ATOL) -> dict:
    """Compare ``pi^T Q`` of the bond with ``pi^T (diag(kill-) Psi+(0) - diag(kill+) Psi-(0))``."""
    pi = _check_pair(Hp, Hm, pi)
    P0 = -_xi0(Hp, Hm, pi)
    kill = -P0 @ np.ones(Hp.n)
    lhs = pi @ (P0 + np.diag(kill))
    rhs = pi @ (np.diag(Hm.kill) @ Hp.psi0() - np.diag(Hp.kill) @ Hm.psi0())
    zl, zr = bool(np.max(np.abs(lhs)) <= tol), bool(np.max(np.abs(rhs)) <= tol)
    return {"pass": zl == zr, "invariant": zl, "lhs": lhs.tolist(), "rhs": rhs.tolist()}


# -- bonding -------------------------------------------------------------------------

@dataclass
class BondCandidate:
    """Product exponent decomposed into (possibly signed) characteristics."""

    P0: np.ndarray
    gauss: np.ndarray
    levy_pos: list
    levy_neg: list
    off: dict            # (i, j) -> (atom, pos ExpPolyFn, neg ExpPolyFn)
    U: np.ndarray

    def psi0(self):
        return self.P0

    def diag_parts(self):
        return [(-self.P0[i, i], self.gauss[i], [("pos", self.levy_pos[i]), ("neg", self.levy_neg[i])])
                for i in range(self.P0.shape[0])]

    def offdiag_parts(self):
        return {k: (a, [("pos", p), ("neg", m)]) for k, (a, p, m) in self.off.items()}


def bond_candidate(Hp, Hm, pi) -> BondCandidate:
    pi = _check_pair(Hp, Hm, pi)
    n = Hp.n
    U = upsilon(Hp, Hm, pi)
    P0 = -_xi0(Hp, Hm, pi)
    nus = nu_measures(Hp, Hm, pi)
    lp = [-U[i, i].pos.deriv() for i in range(n)]
    ln = [-U[i, i].neg.deriv() for i in range(n)]
    off = {}
    for (i, j), nu in nus.items():
        off[(i, j)] = (_atom0_value(Hp, Hm, pi, i, j, nu.nu0), -U[i, j].pos.deriv(), -U[i, j].neg.deriv())
    gauss = 2.0 * Hp.drift * Hm.drift
    return BondCandidate(P0, gauss, lp, ln, off, U)


def _assemble(cand: BondCandidate, pi, centers=None) -> MapSpec:
    n = cand.P0.shape[0]
    Q, kill = recover_Q_dagger(cand.P0)
    centers = np.zeros(n) if centers is None else centers
    comps = [LevyComponent(float(kill[i]), float(centers[i]), float(cand.gauss[i]),
                           ExpPolyMeasure(0.0, cand.levy_pos[i], "pos"),
                           ExpPolyMeasure(0.0, cand.levy_neg[i], "neg")) for i in range(n)]
    trans = [[DIRAC0] * n for _ in range(n)]
    for (i, j), (atom, fp, fm) in cand.off.items():
        tot = atom + fp.integral() + fm.integral()
        if abs(tot - Q[i, j]) > 1e-9 * max(1.0, Q[i, j]):
            raise ValueError(f"bond mass mismatch at ({i},{j}): measure {tot:.12g} vs q {Q[i, j]:.12g}")
        if Q[i, j] > 0:
            q = Q[i, j]
            trans[i][j] = SplitMeasure(atom / q, fp / q, fm / q)
    return MapSpec(Q, comps, trans, pi)


def bond_unchecked(Hp, Hm, pi, theta_star: float = 1.0, verify: bool = True) -> MapSpec:
    """Bonding MapSpec without the friendship gate (raises if assembly fails)."""
    pi = _check_pair(Hp, Hm, pi)
    cand = bond_candidate(Hp, Hm, pi)
    spec0 = _assemble(cand, pi)
    target = wh_product(Hp, Hm, pi, theta_star)
    base = psi(spec0, theta_star)
    centers = np.imag(np.diag(target) - np.diag(base)) / theta_star
    spec = _assemble(cand, pi, centers)
    if verify:
        rng = np.random.default_rng(12345)
        th = np.concatenate([rng.uniform(-40, 40, 10), [theta_star]])
        resid = np.abs(psi(spec, th) - wh_product(Hp, Hm, pi, th))
        scale = 1.0 + np.abs(wh_product(Hp, Hm, pi, th))
        if np.max(resid / scale) > 1e-9:
            raise ValueError(f"bond does not reproduce the product exponent (rel. residual {np.max(resid / scale):.3g})")
    return spec


def check_friendship(Hp, Hm, pi, with_bond: bool = True, sufficient: bool = False) -> FriendshipReport:
    pi = _check_pair(Hp, Hm, pi)
    conds = check_compatibility(Hp, Hm, pi)
    conds += check_monotone(upsilon(Hp, Hm, pi))
    kil = check_killing(Hp, Hm, pi)
    inv = check_pi_invariance(Hp, Hm, pi)
    decisive_ok = all(c.passed for c in conds)
    undecidable = any(c.witness and c.witness.get("undecidable") for c in conds)
    # friends necessarily satisfy the killing and invariance properties
    conds.append(Condition("killing", kil["consistent"] or not decisive_ok,
                           None if kil["consistent"] else kil, f"bond is {kil['verdict']}"))
    conds.append(Condition("invariance", inv["pass"], None if inv["pass"] else inv,
                           "pi^T Q = 0 iff pi^T(diag(kill-)Psi+(0) - diag(kill+)Psi-(0)) = 0"))
    if undecidable:
        verdict = "undecidable"
    else:
        verdict = "friends" if all(c.passed for c in conds) else "not-friends"
    rep = FriendshipReport(verdict, conds)
    if sufficient:
        rep.sufficient = check_quasicompatibility(Hp, Hm, pi) + check_fellowship(Hp, Hm, pi)
    if rep.friends and with_bond:
        rep.bonding = bond_unchecked(Hp, Hm, pi)
    return rep


def bond(Hp, Hm, pi) -> MapSpec:
    """Bonding MAP of two pi-friends; raises NotFriendsError otherwise."""
    rep = check_friendship(Hp, Hm, pi, with_bond=True)
    if not rep.friends:
        raise NotFriendsError(rep)
    return rep.bonding
