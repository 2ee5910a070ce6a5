"""Monte Carlo paths of exp-poly MAPs and empirical ladder processes.

Phase holding times, killing and compound Poisson jumps are exact (competing
exponential clocks). Only the Brownian part is discretised: between events the
ordinate is sampled on a grid of step ``h`` and the segment maximum is the
grid maximum, so running suprema carry an O(sqrt(h)) downward bias.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .map_core import MapSpec, MapSubordinatorSpec, invariant_dist
from .measures import ExpPolyFn

log = logging.getLogger(__name__)

MIN_EPOCHS = 10_000


class PathEvent(NamedTuple):
    time: float
    kind: str          # start | switch | jump | kill | end
    src: int           # phase before the event
    dst: int           # phase after the event
    jump: float
    x_before: float
    x_after: float
    seg_max: float     # grid max of the continuous stretch ending at this event
    seg_min: float


# -- sampling from exp-poly laws -------------------------------------------------

class _FnSampler:
    """Sampler for a nonnegative exp-poly density on (0, inf).

    Positive terms form a gamma mixture; negative terms are handled by
    rejection against that mixture.
    """

    def __init__(self, fn: ExpPolyFn):
        self.fn = fn
        pos = fn.w > 0
        self.shape = fn.p[pos] + 1.0
        self.rate = fn.beta[pos]
        masses = fn.w[pos] * np.array([math.factorial(int(k)) for k in fn.p[pos]]) / self.rate ** self.shape
        self.mass = float(fn.integral())
        self.probs = masses / masses.sum() if masses.size else masses
        self.exact = bool(np.all(fn.w >= 0))
        self.env = ExpPolyFn._raw(fn.w[pos], fn.p[pos], fn.beta[pos]) if not self.exact else fn

    def __call__(self, rng: np.random.Generator) -> float:
        for _ in range(100_000):
            k = rng.choice(self.probs.size, p=self.probs) if self.probs.size > 1 else 0
            x = rng.gamma(self.shape[k], 1.0 / self.rate[k])
            if self.exact or rng.random() * self.env(x) <= self.fn(x):
                return float(x)
        raise RuntimeError("rejection sampler did not accept")


class _SplitSampler:
    def __init__(self, m):
        self.pos = _FnSampler(m.pos) if not m.pos.is_zero() else None
        self.neg = _FnSampler(m.neg) if not m.neg.is_zero() else None
        w = np.array([m.atom0, self.pos.mass if self.pos else 0.0, self.neg.mass if self.neg else 0.0])
        self.probs = w / w.sum()

    def __call__(self, rng) -> float:
        k = rng.choice(3, p=self.probs)
        if k == 0:
            return 0.0
        return self.pos(rng) if k == 1 else -self.neg(rng)


@dataclass
class _Prepared:
    n: int
    Q: np.ndarray
    drift: np.ndarray
    sigma: np.ndarray
    kill: np.ndarray
    lam_pos: np.ndarray
    lam_neg: np.ndarray
    jump_pos: list
    jump_neg: list
    trans: list
    pi0: np.ndarray


def _prepare(spec) -> _Prepared:
    if isinstance(spec, MapSubordinatorSpec):
        spec = spec.to_map()
    n = spec.n
    comps = spec.comps
    # finite activity: the cutoff compensator folds into the linear drift
    drift = np.array([c.center - c.jumps_pos.dens.moment1_unit() + c.jumps_neg.dens.moment1_unit()
                      for c in comps])
    kill = np.array([max(c.kill, 0.0) for c in comps])
    lam_pos = np.array([c.jumps_pos.dens.integral() for c in comps])
    lam_neg = np.array([c.jumps_neg.dens.integral() for c in comps])
    trans = [[None if i == j or spec.Q[i, j] <= 0 else _SplitSampler(spec.trans[i][j]) for j in range(n)]
             for i in range(n)]
    pi0 = spec.pi if spec.pi is not None else invariant_dist(spec.Q)
    return _Prepared(n, spec.Q, drift, np.sqrt([c.gauss for c in comps]), kill, lam_pos, lam_neg,
                     [_FnSampler(c.jumps_pos.dens) if lam_pos[i] > 0 else None for i, c in enumerate(comps)],
                     [_FnSampler(c.jumps_neg.dens) if lam_neg[i] > 0 else None for i, c in enumerate(comps)],
                     trans, pi0)


def _continuous(rng, x0, b, sigma, L, h):
    """End point, max and min of ``x0 + b t + sigma W_t`` on [0, L] (grid step <= h)."""
    if sigma == 0.0:
        x1 = x0 + b * L
        return x1, max(x0, x1), min(x0, x1)
    m = max(1, math.ceil(L / h - 1e-9))
    dt = L / m
    path = np.cumsum(rng.normal(b * dt, sigma * math.sqrt(dt), m))
    x1 = x0 + float(path[-1])
    return x1, x0 + max(0.0, float(path.max())), x0 + min(0.0, float(path.min()))


def _simulate(prep: _Prepared, T: float, h: float, rng: np.random.Generator, phase0: int | None):
    n = prep.n
    phase = int(rng.choice(n, p=prep.pi0)) if phase0 is None else int(phase0)
    t, x = 0.0, 0.0
    events = [PathEvent(0.0, "start", phase, phase, 0.0, 0.0, 0.0, 0.0, 0.0)]
    out_rates = -np.diag(prep.Q)
    while True:
        i = phase
        rates = np.array([out_rates[i], prep.lam_pos[i], prep.lam_neg[i], prep.kill[i]])
        total = rates.sum()
        tau = rng.exponential(1.0 / total) if total > 0 else math.inf
        L = min(tau, T - t)
        x1, smax, smin = _continuous(rng, x, prep.drift[i], prep.sigma[i], L, h)
        t += L
        if tau >= T - (t - L):
            events.append(PathEvent(T, "end", i, i, 0.0, x1, x1, smax, smin))
            return events
        k = rng.choice(4, p=rates / total)
        if k == 0:
            row = prep.Q[i].copy()
            row[i] = 0.0
            j = int(rng.choice(n, p=row / row.sum()))
            y = prep.trans[i][j](rng)
            events.append(PathEvent(t, "switch", i, j, y, x1, x1 + y, smax, smin))
            phase = j
        elif k in (1, 2):
            y = prep.jump_pos[i](rng) if k == 1 else -prep.jump_neg[i](rng)
            events.append(PathEvent(t, "jump", i, i, y, x1, x1 + y, smax, smin))
        else:
            events.append(PathEvent(t, "kill", i, i, 0.0, x1, x1, smax, smin))
            return events
        x = x1 + events[-1].jump


def simulate_path(spec, T: float, h: float = 1e-4, seed: int = 0, path_id: int = 0,
                  phase0: int | None = None) -> list:
    """One path on [0, T]; deterministic in ``(seed, path_id)``.

    The initial phase is drawn from ``spec.pi`` (or the modulator's invariant
    law) unless ``phase0`` is given.
    """
    if not (T > 0 and h > 0):
        raise ValueError("T and h must be positive")
    rng = np.random.default_rng([seed, path_id])
    return _simulate(_prepare(spec), T, h, rng, phase0)


# -- ladder extraction -------------------------------------------------------------

@dataclass
class LadderSample:
    increment: np.ndarray
    kind: np.ndarray           # 'jump' (overshoot by a jump) or 'creep' (continuous rise)
    phase_prev: np.ndarray     # phase when the previous maximum was attained
    phase_at_max: np.ndarray
    time: np.ndarray

    def __len__(self):
        return int(self.increment.size)

    @property
    def jumps(self) -> np.ndarray:
        return self.kind == "jump"


def extract_ladder(path, which: str = "ascending") -> LadderSample:
    """Ladder records of a simulated path.

    Continuous rises within one inter-event stretch are merged into a single
    'creep' record. For ``descending`` the path is reflected.
    """
    if which not in ("ascending", "descending"):
        raise ValueError("which must be 'ascending' or 'descending'")
    sgn = 1.0 if which == "ascending" else -1.0
    start = path[0]
    M = 0.0
    prev = cur = start.dst
    inc, kind, pp, pm, tt = [], [], [], [], []

    def record(d, k, j, t):
        nonlocal prev
        inc.append(d)
        kind.append(k)
        pp.append(prev)
        pm.append(j)
        tt.append(t)
        prev = j

    for ev in path[1:]:
        top = ev.seg_max if sgn > 0 else -ev.seg_min
        if top > M:
            record(top - M, "creep", cur, ev.time)
            M = top
        if ev.kind in ("switch", "jump"):
            after = sgn * ev.x_after
            if after > M:
                record(after - M, "jump", ev.dst, ev.time)
                M = after
        cur = ev.dst
    return LadderSample(np.array(inc, dtype=float), np.array(kind, dtype=object),
                        np.array(pp, dtype=int), np.array(pm, dtype=int), np.array(tt, dtype=float))


def first_passage_overshoots(path, levels) -> list:
    """(level, overshoot, phase) at the first passage over each level; creeping gives 0."""
    lad = extract_ladder(path)
    h = np.cumsum(lad.increment)
    out = []
    for b in levels:
        k = int(np.searchsorted(h, b, side="right"))
        if k >= h.size:
            break
        over = h[k] - b if lad.kind[k] == "jump" else 0.0
        # a jump that starts below the level overshoots by the part above it
        out.append((b, float(over), int(lad.phase_at_max[k])))
    return out


# -- empirical check ---------------------------------------------------------------

def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("MAPWH_THREADS", "1")))
    except ValueError:
        return 1


def _path_job(args):
    prep, T, h, seed, k, levels = args
    path = _simulate(prep, T, h, np.random.default_rng([seed, k]), None)
    lad = extract_ladder(path)
    return lad, first_passage_overshoots(path, levels) if levels is not None else []


def simulate_ladders(spec, n_paths: int, T: float, h: float = 1e-4, seed: int = 0, levels=None):
    """Ladder samples (and optional first-passage overshoots) of ``n_paths`` paths.

    Results are ordered by path index, so output does not depend on the
    number of workers (``MAPWH_THREADS``).
    """
    prep = _prepare(spec)
    jobs = [(prep, T, h, seed, k, levels) for k in range(n_paths)]
    workers = min(_worker_count(), n_paths)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_path_job, jobs, chunksize=max(1, n_paths // (8 * workers))))
    return [_path_job(j) for j in jobs]


def _column_measures(Hp: MapSubordinatorSpec):
    """Jump-size law into each phase, weighted by the ladder phase occupation.

    Invariant under rescaling rows of Q+ together with the Lévy measures.
    """
    n = Hp.n
    pi_lad = invariant_dist(Hp.Q)
    cols = []
    for j in range(n):
        f = ExpPolyFn()
        for i in range(n):
            f = f + Hp.dens(i, j) * pi_lad[i]
        cols.append(f)
    return cols


def _cdf_from(f: ExpPolyFn, stationary: bool):
    """CDF of the law with density ``f`` (or of the stationary overshoot of it)."""
    g = f.tail()
    if stationary:
        g = g.tail()
    g0 = g.at0()
    return lambda x: 1.0 - g(np.asarray(x, dtype=float)) / g0


@dataclass
class LadderReport:
    epochs: int
    jump_epochs: int
    fitted_rate: np.ndarray
    expected_rate: np.ndarray
    rate_rel_err: np.ndarray
    ks_jump: np.ndarray
    switch_ratio: np.ndarray
    expected_switch_ratio: np.ndarray
    switch_rel_err: np.ndarray
    overshoot_ks: np.ndarray
    overshoot_n: np.ndarray
    warnings: list = field(default_factory=list)

    def passed(self, rate_tol=0.05, switch_tol=0.10, ks_tol=None) -> bool:
        ok = bool(np.all(self.rate_rel_err <= rate_tol))
        off = ~np.eye(self.switch_rel_err.shape[0], dtype=bool)
        ok &= bool(np.all(self.switch_rel_err[off] <= switch_tol))
        if ks_tol is not None:
            ok &= bool(np.all(np.nan_to_num(self.overshoot_ks, nan=0.0) <= ks_tol))
        return ok

    def to_json(self) -> dict:
        from .io import plain
        return plain(self.__dict__)


def ladder_statistics(ladders, Hp: MapSubordinatorSpec, overshoots=()) -> LadderReport:
    n = Hp.n
    inc = np.concatenate([l.increment for l in ladders]) if ladders else np.zeros(0)
    kind = np.concatenate([l.kind for l in ladders]) if ladders else np.zeros(0, dtype=object)
    pp = np.concatenate([l.phase_prev for l in ladders]) if ladders else np.zeros(0, dtype=int)
    pm = np.concatenate([l.phase_at_max for l in ladders]) if ladders else np.zeros(0, dtype=int)
    jumps = kind == "jump"
    warnings = []
    if inc.size < MIN_EPOCHS:
        warnings.append(f"only {inc.size} ladder epochs (< {MIN_EPOCHS})")
        log.info(warnings[-1])
    cols = _column_measures(Hp)
    fitted, expected, ks = np.full(n, np.nan), np.full(n, np.nan), np.full(n, np.nan)
    for j in range(n):
        x = inc[jumps & (pm == j)]
        f = cols[j]
        if f.is_zero():
            continue
        expected[j] = f.integral() / f.moment1()
        if x.size:
            fitted[j] = 1.0 / x.mean()
            ks[j] = stats.kstest(x, _cdf_from(f, False)).statistic
    # switches i -> j per same-phase jump in i, against q_ij / Pi_i mass
    ratio = np.full((n, n), np.nan)
    exp_ratio = np.full((n, n), np.nan)
    for i in range(n):
        same = np.count_nonzero(jumps & (pp == i) & (pm == i))
        lev = Hp.levy[i].dens.integral()
        for j in range(n):
            if i == j:
                continue
            if same:
                ratio[i, j] = np.count_nonzero((pp == i) & (pm == j)) / same
            if lev > 0:
                exp_ratio[i, j] = Hp.Q[i, j] / lev
    over_ks, over_n = np.full(n, np.nan), np.zeros(n, dtype=int)
    ov = np.array([(o, ph) for _, o, ph in overshoots]) if len(overshoots) else np.zeros((0, 2))
    for j in range(n):
        x = ov[(ov[:, 1] == j) & (ov[:, 0] > 0), 0] if ov.size else np.zeros(0)
        over_n[j] = x.size
        if x.size and not cols[j].is_zero():
            over_ks[j] = stats.kstest(x, _cdf_from(cols[j], False)).statistic
    with np.errstate(invalid="ignore"):
        return LadderReport(int(inc.size), int(jumps.sum()), fitted, expected,
                            np.abs(fitted / expected - 1), ks, ratio, exp_ratio,
                            np.abs(ratio / exp_ratio - 1), over_ks, over_n, warnings)


def empirical_ladder_check(bond: MapSpec, Hp: MapSubordinatorSpec, pi=None, n_paths: int = 1000,
                           T: float = 5.0, h: float = 1e-4, seed: int = 0, levels=(1.0, 2.0, 3.0)) -> LadderReport:
    """Simulate the bonding MAP and compare its ascending ladder with ``Hp``.

    Only scale-free features are compared: the jump-size law into each phase,
    switch counts relative to same-phase jumps, and positive overshoots over
    fixed levels (exact exponential laws when jumps are exponential).
    """
    if pi is not None:
        bond = MapSpec(bond.Q, bond.comps, bond.trans, pi)
    res = simulate_ladders(bond, n_paths, T, h, seed, levels)
    ladders = [r[0] for r in res]
    overs = [o for r in res for o in r[1]]
    return ladder_statistics(ladders, Hp, overs)


def ladder_rows(ladders):
    """CSV rows ``path_id, epoch, increment, phase_prev, phase_at_max``."""
    for pid, lad in enumerate(ladders):
        for e in range(len(lad)):
            yield pid, e, float(lad.increment[e]), int(lad.phase_prev[e]), int(lad.phase_at_max[e])
