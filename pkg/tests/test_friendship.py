import numpy as np
import pytest

from mapwh import examples as ex
from mapwh.friendship import (NotFriendsError, bond, bond_unchecked, check_compatibility, check_fellowship,
                              check_friendship, check_killing, check_monotone, check_pi_invariance,
                              check_quasicompatibility, chi, eval_fnmat, fellowship_matrices, upsilon)
from mapwh.map_core import invariant_dist, pi_dual, psi, subordinator, validate_exponent, wh_product
from mapwh.measures import DensityFn, ExpPolyFn, ExpPolyMeasure

from oracles import levy_entry, quad_tail, upsilon_oracle

HALF = np.array([0.5, 0.5])


def ids(conds):
    return {c.id: c for c in conds}


def perturb_atom(H, i, j, delta):
    """Move mass ``delta`` from the density of F_ij to its atom at 0."""
    F = H.trans[i][j]
    dm = F.dens.integral()
    newF = ExpPolyMeasure(F.atom0 + delta, F.dens * ((dm - delta) / dm))
    trans = [list(r) for r in H.trans]
    trans[i][j] = newF
    return type(H)(H.Q, H.drift, H.levy, trans, H.kill, H.pi)


# -- chi and Upsilon ---------------------------------------------------------------

def test_chi_examples(de_params, de_pair):
    d = subordinator([[0.0]], [1.7])
    assert chi(d, 0).atom0 == 1.7 and chi(d, 0).dens.is_zero()
    e = subordinator([[0.0]], [0.0], [[(1.0, 0, 1.0)]])
    assert chi(e, 0).close_to(ExpPolyMeasure.from_terms([(1.0, 0, 1.0)]))
    p = de_params
    c = chi(de_pair[0], 0)
    assert c.close_to(ExpPolyMeasure.from_terms([(p.gamma_p[0] / p.beta_p[0], 0, p.beta_p[0])], p.d_p[0]))
    assert chi(de_pair[0], 0, "-").side == "neg"


def test_upsilon_pure_drift_descending_reduces_to_fellowship_matrix(sp_params, sp_pair):
    Hp, Hm = sp_pair
    U = upsilon(Hp, Hm, sp_params.pi)
    M, _ = fellowship_matrices(Hp, Hm, sp_params.pi)
    x = np.linspace(0.05, 6, 30)
    for i in range(2):
        for j in range(2):
            np.testing.assert_allclose(U[i, j].pos(x), M[i, j](x), rtol=1e-12, atol=1e-15)


def test_upsilon_zero_for_pure_drifts():
    Q = [[-1.0, 1.0], [1.0, -1.0]]
    U = upsilon(subordinator(Q, [1.0, 2.0]), subordinator(Q, [0.5, 0.5]), HALF)
    assert all(U[i, j].is_zero() for i in range(2) for j in range(2))


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_upsilon_counterexample_against_quadrature(a):
    Hp, Hm = ex.counterexample_drift(a)
    U = upsilon(Hp, Hm, HALF)
    for x in (0.1, 1.0, 5.0, -0.1, -1.0):
        np.testing.assert_allclose(eval_fnmat(U, x), upsilon_oracle(Hp, Hm, HALF, x), rtol=1e-8, atol=1e-14)


# -- monotonicity -------------------------------------------------------------------

def test_monotone_counterexample():
    c = ids(check_monotone(upsilon(*ex.counterexample_drift(2.0), HALF)))
    assert c["upsilon.monotone.pos"].passed and c["upsilon.monotone.neg"].passed
    c = ids(check_monotone(upsilon(*ex.counterexample_drift(0.5), HALF)))
    w = c["upsilon.monotone.pos"].witness
    assert not c["upsilon.monotone.pos"].passed
    assert w["x"] > 0 and w["derivative"] > 0


def test_monotone_zero_function():
    U = np.empty((1, 1), dtype=object)
    U[0, 0] = DensityFn()
    assert all(c.passed for c in check_monotone(U))


# -- compatibility -------------------------------------------------------------------

def test_compatibility_double_exp_passes(de_params, de_pair):
    assert all(c.passed for c in check_compatibility(*de_pair, de_params.pi))


def test_compatibility_atom_balance_violation(de_params, de_pair):
    Hp = perturb_atom(de_pair[0], 0, 1, 0.1)
    c = ids(check_compatibility(Hp, de_pair[1], de_params.pi))
    assert not c["compat.ii.a"].passed
    assert c["compat.ii.a"].witness["entry"] in ([0, 1], [1, 0])


def test_compatibility_scalar_philanthropists():
    Hp = subordinator([[0.0]], [0.4], [[(1.0, 0, 2.0), (0.3, 0, 0.5)]])
    Hm = subordinator([[0.0]], [0.0], [[(0.6, 0, 1.0)]])
    conds = ids(check_compatibility(Hp, Hm, [1.0]))
    assert all(c.passed for c in conds.values())


def test_compatibility_vectors_detect_killing_sign():
    Hp, Hm = ex.counterexample_drift(2.0)
    # killing Hp in one phase only would give the product a negative killing rate
    c = ids(check_compatibility(Hp.with_kill([0.5, 0.0]), Hm, HALF))
    assert not c["compat.iii"].passed
    assert c["compat.iii"].witness == {"index": 1, "value": pytest.approx(-0.5)}
    c = ids(check_compatibility(Hp.with_kill([0.5, 0.5]), Hm, HALF))
    assert c["compat.iii"].passed and c["compat.iv"].passed


# -- sufficient conditions --------------------------------------------------------

def test_quasicompatibility_spectrally_positive(sp_params, sp_pair):
    c = check_quasicompatibility(*sp_pair, sp_params.pi)
    assert all(x.passed for x in c)
    s = check_quasicompatibility(sp_pair[1], sp_pair[0], sp_params.pi)
    assert [x.passed for x in c] == [x.passed for x in s]


def test_quasicompatibility_atom_mismatch(de_params, de_pair):
    Hp, Hm = de_pair
    F = Hp.trans[0][1]
    Hp2 = perturb_atom(Hp, 0, 1, 0.1 * F.atom0)
    c = ids(check_quasicompatibility(Hp2, Hm, de_params.pi))
    assert not c["quasi.ii"].passed and c["quasi.ii"].witness["entry"] in ([0, 1], [1, 0])


def test_fellowship_double_exp_and_pure_drifts(de_params, de_pair):
    assert all(c.passed for c in check_fellowship(*de_pair, de_params.pi))
    Q = [[-1.0, 1.0], [1.0, -1.0]]
    assert all(c.passed for c in check_fellowship(subordinator(Q, [1, 1]), subordinator(Q, [2, 2]), HALF))


def test_fellowship_fails_when_support_bound_violated(sp_params, monkeypatch):
    p = sp_params
    r, m = 0.05, 1e-4
    mu = [[(m, r)], p.mu_plus[1]]
    dp0 = p.pi[1] / p.pi[0] * p.Qp[1, 0] * p.d_m[1] / p.Qm[0, 1] - m / r ** 2
    bad = ex.SpectrallyPositiveParams(p.Qp, p.Qm, p.pi, mu, [dp0, p.d_p[1]], p.d_m)
    with pytest.raises(ex.ParameterError) as e:
        ex.gen_spectrally_positive(bad)
    assert e.value.condition == "cond.iii"
    monkeypatch.setattr(ex, "validate_spectrally_positive", lambda q: None)
    Hp, Hm = ex.gen_spectrally_positive(bad)
    c = ids(check_fellowship(Hp, Hm, p.pi))
    assert not c["fellow.pos"].passed and c["fellow.pos"].witness["x"] > 0


# -- fellowship implies friendship (randomized) ------------------------------------

def test_compatible_fellows_are_friends():
    rng = np.random.default_rng(21)
    n_checked = 0
    for _ in range(15):
        for p, gen in ((ex.sample_double_exp(rng, fellows=False), ex.gen_double_exp),
                       (ex.sample_spectrally_positive(rng), ex.gen_spectrally_positive)):
            Hp, Hm = gen(p)
            compat = all(c.passed for c in check_compatibility(Hp, Hm, p.pi))
            fellow = all(c.passed for c in check_fellowship(Hp, Hm, p.pi))
            if compat and fellow:
                n_checked += 1
                assert all(c.passed for c in check_monotone(upsilon(Hp, Hm, p.pi)))
    assert n_checked >= 15


# -- bond -------------------------------------------------------------------------------

def test_bond_postcondition(de_params, de_pair, de_bond):
    th = np.linspace(-40, 40, 101)
    diff = psi(de_bond, th) - wh_product(*de_pair, de_params.pi, th)
    assert np.linalg.norm(diff, axis=(1, 2)).max() <= 1e-9
    assert validate_exponent(de_bond).ok
    np.testing.assert_allclose([c.gauss for c in de_bond.comps], 2 * de_params.d_p * de_params.d_m, rtol=1e-14)


def test_bond_pure_drifts():
    Q0 = np.zeros((2, 2))
    B = bond(subordinator(Q0, [1.0, 3.0]), subordinator(Q0, [0.5, 0.25]), HALF)
    np.testing.assert_allclose([c.gauss for c in B.comps], [1.0, 1.5])
    assert all(c.jumps_pos.is_zero() and c.jumps_neg.is_zero() for c in B.comps)
    B1 = bond(subordinator([[0.0]], [2.0]), subordinator([[0.0]], [3.0]), [1.0])
    assert B1.comps[0].gauss == 12.0 and B1.comps[0].center == pytest.approx(0.0, abs=1e-14)


def test_bond_scalar_against_quadrature():
    Hp = subordinator([[0.0]], [1.0], [[(1.0, 0, 1.0)]])
    Hm = subordinator([[0.0]], [0.7])
    B = bond(Hp, Hm, [1.0])
    dens = levy_entry(Hp, 0, 0)
    for x in (0.2, 1.0, 3.0):
        ref = 0.7 * dens(x)          # integral term vanishes: no descending jumps, no killing
        assert float(B.comps[0].jumps_pos.dens.tail()(x)) == pytest.approx(ref, rel=1e-12)
        assert float(B.comps[0].jumps_pos.dens.tail()(x)) == pytest.approx(
            0.7 * float(-np.gradient([quad_tail(dens, x - 1e-5), quad_tail(dens, x + 1e-5)], 2e-5)[0]),
            rel=1e-6)
    assert B.comps[0].jumps_neg.is_zero()


def test_bond_rejects_non_friends():
    with pytest.raises(NotFriendsError) as e:
        bond(*ex.counterexample_drift(0.5), HALF)
    assert "upsilon.monotone.pos" in e.value.report.failed()


def test_bond_unchecked_refuses_negative_density():
    # without the gate, assembly still fails: the a=1/2 bonding density is negative
    Hp, Hm = ex.counterexample_drift(0.5)
    with pytest.raises(ValueError):
        bond_unchecked(Hp, Hm, HALF)


# -- killing and invariance ------------------------------------------------------------

def test_killing_property(de_params, de_pair):
    pi = de_params.pi
    Hp, Hm = de_pair
    assert check_killing(Hp, Hm, pi)["verdict"] == "unkilled"
    both = check_killing(Hp.with_kill([0.2, 0.1]), Hm.with_kill([0.3, 0.05]), pi)
    assert both["verdict"] == "killed" and both["consistent"]
    one = check_killing(Hp.with_kill([0.2, 0.0]), Hm, pi)
    assert one["verdict"] == "unkilled" and one["killing_dual"] and not one["killing"]


def test_pi_invariance_property(de_params, de_pair):
    pi = de_params.pi
    Hp, Hm = de_pair
    r = check_pi_invariance(Hp, Hm, pi)
    assert r["pass"] and r["invariant"]
    assert np.abs(r["lhs"]).max() < 1e-12
    k = check_pi_invariance(Hp.with_kill([0.2, 0.0]), Hm.with_kill([0.0, 0.3]), pi)
    assert k["pass"] and not k["invariant"] and np.abs(k["rhs"]).max() > 1e-3


def test_double_exp_bond_unkilled_and_invariant(de_params, de_bond):
    assert np.all(de_bond.kill == 0)
    assert np.abs(de_params.pi @ de_bond.Q).max() < 1e-12


# -- symmetry ---------------------------------------------------------------------------

def test_swap_symmetry_and_dual_bonds(de_params, de_pair, de_bond):
    pi = de_params.pi
    Hp, Hm = de_pair
    assert check_friendship(Hm, Hp, pi).verdict == "friends"
    assert bond(Hm, Hp, pi).close_to(pi_dual(de_bond, pi), atol=1e-9)


def test_report_json_ids():
    rep = check_friendship(*ex.counterexample_drift(0.5), HALF, sufficient=True)
    js = rep.to_json()
    got = [c["id"] for c in js["conditions"]]
    assert got == ["compat.i", "compat.ii.a", "compat.ii.b", "compat.ii.c", "compat.iii", "compat.iv",
                   "upsilon.monotone.pos", "upsilon.monotone.neg", "killing", "invariance"]
    assert all(c["witness"] is not None for c in js["conditions"] if not c["pass"])
    assert any(c["id"].startswith("quasi.") for c in js["sufficient"])
    assert js["verdict"] == "not-friends" and "bonding" not in js


def test_friends_report_has_bond(de_params, de_pair):
    rep = check_friendship(*de_pair, de_params.pi)
    assert rep.friends and rep.bonding is not None and rep.failed() == []
