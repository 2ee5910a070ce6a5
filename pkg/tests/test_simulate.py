import dataclasses

import numpy as np
import pytest
from scipy import stats

from mapwh.friendship import bond
from mapwh.map_core import DIRAC0, LevyComponent, MapSpec, subordinator
from mapwh.measures import ExpPolyMeasure, reflect as reflect_measure
from mapwh.simulate import (extract_ladder, first_passage_overshoots, ladder_rows, ladder_statistics,
                            simulate_ladders, simulate_path)


def scalar_cp(drift, rate_pos=1.0, beta_pos=2.0, rate_neg=1.5, beta_neg=1.0):
    jp = ExpPolyMeasure.from_terms([(rate_pos * beta_pos, 0, beta_pos)], side="pos")
    jn = ExpPolyMeasure.from_terms([(rate_neg * beta_neg, 0, beta_neg)], side="neg")
    # center is the drift plus the compensator over [-1, 1]
    c = drift + jp.dens.moment1_unit() - jn.dens.moment1_unit()
    return MapSpec([[0.0]], [LevyComponent(center=c, jumps_pos=jp, jumps_neg=jn)], [[DIRAC0]])


def reflect(spec):
    comps = [LevyComponent(c.kill, -c.center, c.gauss, reflect_measure(c.jumps_neg), reflect_measure(c.jumps_pos))
             for c in spec.comps]
    return MapSpec(spec.Q, comps, [[F.reflect() for F in row] for row in spec.trans], spec.pi)


def test_paths_are_deterministic(de_bond):
    a = simulate_path(de_bond, 5.0, h=1e-3, seed=3, path_id=7)
    b = simulate_path(de_bond, 5.0, h=1e-3, seed=3, path_id=7)
    c = simulate_path(de_bond, 5.0, h=1e-3, seed=3, path_id=8)
    assert a == b and a != c
    assert a[0].kind == "start" and a[-1].kind == "end" and a[-1].time == 5.0


def test_pure_drift_path():
    p = simulate_path(subordinator([[0.0]], [2.0]), 3.0)
    assert len(p) == 2 and p[-1].x_after == pytest.approx(6.0)
    lad = extract_ladder(p)
    assert len(lad) == 1 and lad.kind[0] == "creep" and lad.increment[0] == pytest.approx(6.0)
    assert len(extract_ladder(p, "descending")) == 0


def test_rejects_bad_arguments():
    H = subordinator([[0.0]], [1.0])
    with pytest.raises(ValueError):
        simulate_path(H, 0.0)
    with pytest.raises(ValueError):
        extract_ladder(simulate_path(H, 1.0), "sideways")


def test_phase_occupation_and_mean_slope():
    H = subordinator([[-1.0, 1.0], [1.0, -1.0]], [1.0, 3.0], [[(2.0, 0, 2.0)], ()],
                     [[None, (0.0, [(1.0, 0, 1.0)])], [(1.0, []), None]])
    T = 1e4
    p = simulate_path(H, T, seed=11)
    occ = np.zeros(2)
    for prev, ev in zip(p, p[1:]):
        occ[ev.src] += ev.time - prev.time
    assert occ[0] / T == pytest.approx(0.5, abs=0.01)
    # phase 0: drift, Lévy jumps of rate 1 and mean 1/2, switches of mean 1; phase 1: drift only
    slope = 0.5 * (1.0 + 0.5 + 1.0) + 0.5 * 3.0
    assert p[-1].x_after / T == pytest.approx(slope, rel=0.02)


def test_killing_ends_path():
    H = subordinator([[0.0]], [1.0], kill=[5.0])
    p = simulate_path(H, 100.0, seed=1)
    assert p[-1].kind == "kill" and p[-1].time < 100.0


def test_compound_poisson_ladder_heights_are_exponential():
    # negative drift: no creeping, and memorylessness makes every ladder height Exp(2)
    res = simulate_ladders(scalar_cp(-0.3, rate_neg=0.1), 200, 20.0, seed=5)
    x = np.concatenate([l.increment for l, _ in res])
    kinds = np.concatenate([l.kind for l, _ in res])
    assert np.all(kinds == "jump") and x.size > 1000
    assert stats.kstest(x, stats.expon(scale=0.5).cdf).pvalue > 1e-3


def test_descending_ladder_is_ascending_ladder_of_reflection():
    spec = scalar_cp(0.2)
    n, T = 200, 10.0
    down = [extract_ladder(simulate_path(spec, T, seed=2, path_id=k), "descending") for k in range(n)]
    up = [l for l, _ in simulate_ladders(reflect(spec), n, T, seed=9)]
    a = np.concatenate([l.increment[l.jumps] for l in down])
    b = np.concatenate([l.increment[l.jumps] for l in up])
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_pure_drift_bond_has_no_ladder_jumps():
    Q = np.zeros((2, 2))
    B = bond(subordinator(Q, [1.0, 3.0]), subordinator(Q, [0.5, 0.25]), [0.5, 0.5])
    res = simulate_ladders(B, 5, 2.0, h=1e-3, seed=1)
    assert all(not l.jumps.any() for l, _ in res)
    assert sum(len(l) for l, _ in res) > 0


def test_first_passage_overshoots():
    spec = scalar_cp(0.1)
    p = simulate_path(spec, 50.0, seed=3)
    over = first_passage_overshoots(p, [1.0, 2.0])
    lad = extract_ladder(p)
    h = np.cumsum(lad.increment)
    for b, o, ph in over:
        k = np.searchsorted(h, b, side="right")
        assert o == (pytest.approx(h[k] - b) if lad.kind[k] == "jump" else 0.0) and ph == 0


def test_shape_statistics_are_scale_free(de_pair, de_bond):
    Hp = de_pair[0]
    res = simulate_ladders(de_bond, 20, 5.0, h=1e-3, seed=0, levels=(1.0,))
    lads = [l for l, _ in res]
    overs = [o for _, r in res for o in r]
    c = np.array([2.0, 0.25])
    scaled = subordinator(Hp.Q * c[:, None], Hp.drift,
                          [[(w * c[i], p, b) for w, p, b in Hp.levy[i].dens.terms] for i in range(2)],
                          [[None if i == j else Hp.trans[i][j] for j in range(2)] for i in range(2)])
    r1 = ladder_statistics(lads, Hp, overs)
    r2 = ladder_statistics(lads, scaled, overs)
    for f in ("expected_rate", "ks_jump", "expected_switch_ratio", "overshoot_ks"):
        np.testing.assert_allclose(getattr(r1, f), getattr(r2, f), rtol=1e-10)


def test_worker_count_does_not_change_output(de_bond, monkeypatch):
    monkeypatch.setenv("MAPWH_THREADS", "1")
    a = simulate_ladders(de_bond, 6, 2.0, h=1e-3, seed=4, levels=(0.5,))
    monkeypatch.setenv("MAPWH_THREADS", "2")
    b = simulate_ladders(de_bond, 6, 2.0, h=1e-3, seed=4, levels=(0.5,))
    assert list(ladder_rows([l for l, _ in a])) == list(ladder_rows([l for l, _ in b]))
    assert [o for _, o in a] == [o for _, o in b]


def test_report_warns_on_few_epochs(de_pair, de_bond):
    res = simulate_ladders(de_bond, 3, 1.0, h=1e-3, seed=0)
    r = ladder_statistics([l for l, _ in res], de_pair[0])
    assert r.warnings and "ladder epochs" in r.warnings[0]
    assert set(r.to_json()) >= {"epochs", "fitted_rate", "switch_ratio"}
