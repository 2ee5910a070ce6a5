"""Exponential-polynomial functions and measures on a half-line.

Every object here is a finite sum of terms ``w * t**p * exp(-beta * t)``.
Such sums are closed under tails, derivatives, convolution and Fourier or
Laplace transforms, so all of them are computed exactly.

A measure on the negative half-line is stored as the reflection of a
positive-side measure: its terms describe the density at ``x < 0`` as a
function of ``|x|``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial
from typing import Iterable, NamedTuple

import numpy as np

RATE_RTOL = 1e-12     # equal-rate merge tolerance
DROP_RTOL = 64 * np.finfo(float).eps
SCAN_POINTS = 10_000
SCAN_SLACK = 1e-12


class ExpPolyTerm(NamedTuple):
    w: float
    p: int
    beta: float


def _canonical(terms: Iterable[tuple]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sort by (rate, power), merge duplicates and drop cancelled weights."""
    rows = [(float(b), int(p), float(w)) for w, p, b in terms if w != 0.0]
    if not rows:
        return np.zeros(0), np.zeros(0, dtype=int), np.zeros(0)
    rows.sort()
    # group rates that agree to RATE_RTOL, keyed by the first rate of a run
    merged: dict[tuple[float, int], list[float]] = {}
    anchor = rows[0][0]
    for b, p, w in rows:
        if abs(b - anchor) > RATE_RTOL * max(abs(anchor), abs(b), 1e-300):
            anchor = b
        merged.setdefault((anchor, p), []).append(w)
    out_w, out_p, out_b = [], [], []
    for (b, p), ws in sorted(merged.items()):
        total = float(np.sum(ws))
        if abs(total) <= DROP_RTOL * float(np.sum(np.abs(ws))):
            continue
        out_w.append(total)
        out_p.append(p)
        out_b.append(b)
    w = np.array(out_w, dtype=float)
    p = np.array(out_p, dtype=int)
    b = np.array(out_b, dtype=float)
    for a in (w, p, b):
        a.setflags(write=False)
    return w, p, b


_FACT = np.array([float(factorial(k)) for k in range(171)])


class ScanResult(NamedTuple):
    ok: bool
    t: float | None
    value: float | None


class ExpPolyFn:
    """Signed function ``t -> sum_k w_k t^p_k exp(-beta_k t)`` for ``t > 0``."""

    __slots__ = ("w", "p", "beta")

    def __init__(self, terms: Iterable[tuple] = ()):
        self.w, self.p, self.beta = _canonical(terms)

    @classmethod
    def _raw(cls, w, p, b) -> "ExpPolyFn":
        return cls(zip(w, p, b))

    # -- structure ---------------------------------------------------------
    @property
    def terms(self) -> list[ExpPolyTerm]:
        return [ExpPolyTerm(float(w), int(p), float(b)) for w, p, b in zip(self.w, self.p, self.beta)]

    def __len__(self) -> int:
        return len(self.w)

    def is_zero(self) -> bool:
        return len(self.w) == 0

    def __repr__(self) -> str:
        body = " + ".join(f"{w:.6g}*t^{p}*e^(-{b:.6g}t)" for w, p, b in self.terms)
        return f"ExpPolyFn({body or '0'})"

    def close_to(self, other: "ExpPolyFn", atol: float = 1e-10, rtol: float = 1e-12) -> bool:
        diff = self - other
        if diff.is_zero():
            return True
        # rates that differ beyond RATE_RTOL leave both terms; compare pointwise weights
        scale = max(np.max(np.abs(self.w), initial=0.0), np.max(np.abs(other.w), initial=0.0))
        return bool(np.all(np.abs(diff.w) <= atol + rtol * scale))

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, (int, float)) and other == 0:
            return self
        if not isinstance(other, ExpPolyFn):
            return NotImplemented
        return ExpPolyFn(list(zip(self.w, self.p, self.beta)) + list(zip(other.w, other.p, other.beta)))

    __radd__ = __add__

    def __neg__(self):
        return ExpPolyFn._raw(-self.w, self.p, self.beta)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        if isinstance(c, ExpPolyFn):
            return NotImplemented
        c = float(c)
        if c == 0.0:
            return ExpPolyFn()
        return ExpPolyFn._raw(c * self.w, self.p, self.beta)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    # -- calculus ----------------------------------------------------------
    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_zero():
            return np.zeros_like(t)
        tt = t[..., None]
        return np.sum(self.w * np.power(tt, self.p) * np.exp(-self.beta * tt), axis=-1)

    def at0(self) -> float:
        """Limit at 0+."""
        return float(np.sum(self.w[self.p == 0]))

    def deriv(self) -> "ExpPolyFn":
        terms = [(-w * b, p, b) for w, p, b in zip(self.w, self.p, self.beta)]
        terms += [(w * p, p - 1, b) for w, p, b in zip(self.w, self.p, self.beta) if p > 0]
        return ExpPolyFn(terms)

    def tail(self) -> "ExpPolyFn":
        """The function ``t -> integral of self over (t, inf)``."""
        if np.any(self.beta <= 0):
            raise ValueError("tail needs strictly positive rates")
        terms = []
        for w, p, b in zip(self.w, self.p, self.beta):
            for k in range(p + 1):
                terms.append((w * _FACT[p] / _FACT[k] / b ** (p - k + 1), k, b))
        return ExpPolyFn(terms)

    def integral(self) -> float:
        """Integral over (0, inf)."""
        if self.is_zero():
            return 0.0
        return float(np.sum(self.w * _FACT[self.p] / self.beta ** (self.p + 1)))

    def moment1(self) -> float:
        """Integral of ``t * self(t)`` over (0, inf)."""
        if self.is_zero():
            return 0.0
        return float(np.sum(self.w * _FACT[self.p + 1] / self.beta ** (self.p + 2)))

    def moment1_unit(self) -> float:
        """Integral of ``t * self(t)`` over (0, 1]."""
        from scipy.special import gammainc

        if self.is_zero():
            return 0.0
        k = self.p + 2
        return float(np.sum(self.w * _FACT[k - 1] / self.beta ** k * gammainc(k, self.beta)))

    def transform(self, s):
        """``integral of exp(-s t) self(t) dt`` for complex ``s`` with Re(s) > -min rate."""
        s = np.asarray(s, dtype=complex)
        if self.is_zero():
            return np.zeros_like(s)
        ss = s[..., None]
        return np.sum(self.w * _FACT[self.p] / (ss + self.beta) ** (self.p + 1), axis=-1)

    # -- sign analysis -----------------------------------------------------
    def scan_nonneg(self, slack: float = SCAN_SLACK) -> ScanResult:
        """Decide ``self(t) >= 0`` on (0, inf).

        Exact when every weight is positive. Otherwise the value at 0+, a log
        grid on (1e-6, 1e3 / min rate) and the sign of the dominant term at
        infinity are checked. A value counts as negative when it is below
        ``-slack`` times the sum of absolute term values at that point.
        """
        if self.is_zero() or np.all(self.w >= 0):
            return ScanResult(True, None, None)
        absf = ExpPolyFn._raw(np.abs(self.w), self.p, self.beta)
        z0 = self.at0()
        if z0 < -slack * absf.at0():
            # by continuity some small t > 0 is a witness too
            for tw in np.logspace(-12, 0, 25):
                v = float(self(tw))
                if v < 0:
                    return ScanResult(False, float(tw), v)
            return ScanResult(False, 0.0, z0)
        bmin = float(self.beta.min())
        t = np.logspace(-6, np.log10(1e3 / bmin), SCAN_POINTS)
        vals = self(t)
        mag = absf(t)
        # below ~1e-290 the values are denormal noise; the asymptotic check covers that range
        bad = (vals < -slack * mag) & (mag > 1e-290)
        if np.any(bad):
            k = int(np.argmin(np.where(bad, vals / np.maximum(mag, 1e-300), np.inf)))
            return ScanResult(False, float(t[k]), float(vals[k]))
        lead = np.flatnonzero(np.abs(self.beta - bmin) <= RATE_RTOL * bmin)
        k = lead[np.argmax(self.p[lead])]
        if self.w[k] < 0:
            tw = float(t[-1])
            for _ in range(200):
                tw *= 2.0
                if self(tw) < 0:
                    break
            return ScanResult(False, tw, float(self(tw)))
        return ScanResult(True, None, None)


class DensityFn:
    """Two-sided signed exp-poly function on R minus {0}.

    ``pos`` gives the value at ``x > 0``; ``neg`` gives the value at ``x < 0``
    as a function of ``|x|``.
    """

    __slots__ = ("pos", "neg")

    def __init__(self, pos: ExpPolyFn | None = None, neg: ExpPolyFn | None = None):
        self.pos = pos if pos is not None else ExpPolyFn()
        self.neg = neg if neg is not None else ExpPolyFn()

    def __repr__(self) -> str:
        return f"DensityFn(pos={self.pos!r}, neg={self.neg!r})"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, self.pos(np.abs(x)), np.where(x < 0, self.neg(np.abs(x)), np.nan))

    def __add__(self, other):
        if isinstance(other, (int, float)) and other == 0:
            return self
        if not isinstance(other, DensityFn):
            return NotImplemented
        return DensityFn(self.pos + other.pos, self.neg + other.neg)

    __radd__ = __add__

    def __neg__(self):
        return DensityFn(-self.pos, -self.neg)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        return DensityFn(self.pos * c, self.neg * c)

    __rmul__ = __mul__

    def reflect(self) -> "DensityFn":
        return DensityFn(self.neg, self.pos)

    def deriv(self) -> "DensityFn":
        """d/dx, so the negative side picks up a sign."""
        return DensityFn(self.pos.deriv(), -self.neg.deriv())

    def is_zero(self) -> bool:
        return self.pos.is_zero() and self.neg.is_zero()

    def limits0(self) -> tuple[float, float]:
        """(f(0-), f(0+))."""
        return self.neg.at0(), self.pos.at0()


@dataclass(frozen=True, eq=False)
class ExpPolyMeasure:
    """Nonnegative measure ``atom0 * delta_0 + density`` on one half-line."""

    atom0: float
    dens: ExpPolyFn
    side: str = "pos"

    def __post_init__(self):
        if self.side not in ("pos", "neg"):
            raise ValueError(f"side must be 'pos' or 'neg', got {self.side!r}")
        if not isinstance(self.dens, ExpPolyFn):
            object.__setattr__(self, "dens", ExpPolyFn(self.dens))
        if np.any(self.dens.beta <= 0):
            raise ValueError("exp-poly measures need strictly positive rates")
        if np.any(self.dens.p < 0):
            raise ValueError("powers must be nonnegative")
        a = float(self.atom0)
        if a < 0:
            if a < -1e-12:
                raise ValueError(f"negative atom at 0: {a}")
            a = 0.0
        object.__setattr__(self, "atom0", a)
        if getattr(self, "_trusted", False):
            return
        scan = self.dens.scan_nonneg()
        if not scan.ok:
            raise ValueError(f"density negative at |x|={scan.t:.6g} (value {scan.value:.3g})")

    @classmethod
    def _nonneg_by_construction(cls, atom0, dens, side):
        """Skip the sign scan for results that are nonnegative by construction."""
        m = cls.__new__(cls)
        object.__setattr__(m, "_trusted", True)
        m.__init__(atom0, dens, side)
        object.__delattr__(m, "_trusted")
        return m

    @classmethod
    def from_terms(cls, terms: Iterable[tuple] = (), atom0: float = 0.0, side: str = "pos"):
        return cls(float(atom0), ExpPolyFn(terms), side)

    @classmethod
    def zero(cls, side: str = "pos"):
        return cls(0.0, ExpPolyFn(), side)

    @classmethod
    def dirac0(cls, mass: float = 1.0, side: str = "pos"):
        return cls(float(mass), ExpPolyFn(), side)

    @property
    def terms(self) -> list[ExpPolyTerm]:
        return self.dens.terms

    def is_zero(self) -> bool:
        return self.atom0 == 0.0 and self.dens.is_zero()

    def close_to(self, other: "ExpPolyMeasure", atol: float = 1e-10) -> bool:
        return (self.side == other.side and abs(self.atom0 - other.atom0) <= atol
                and self.dens.close_to(other.dens, atol=atol))

    def scaled(self, c: float) -> "ExpPolyMeasure":
        return ExpPolyMeasure(self.atom0 * c, self.dens * c, self.side)

    def without_atom(self) -> "ExpPolyMeasure":
        return ExpPolyMeasure(0.0, self.dens, self.side)

    def __repr__(self) -> str:
        return f"ExpPolyMeasure(atom0={self.atom0:.6g}, {self.dens!r}, side={self.side})"

    # -- JSON --------------------------------------------------------------
    def to_json(self) -> dict:
        return {"atom0": self.atom0,
                "terms": [{"w": w, "p": p, "beta": b} for w, p, b in self.terms],
                "side": self.side}

    @classmethod
    def from_json(cls, obj: dict) -> "ExpPolyMeasure":
        terms = [(t["w"], int(t["p"]), t["beta"]) for t in obj.get("terms", [])]
        return cls.from_terms(terms, obj.get("atom0", 0.0), obj.get("side", "pos"))


# -- module-level operations --------------------------------------------------

def density(m: ExpPolyMeasure, x):
    """Density at distance ``x > 0`` from the origin (on the measure's own side)."""
    return m.dens(x)


def tail(m: ExpPolyMeasure, x):
    """Open tail ``m((x, inf))`` at distance ``x >= 0``; the atom is excluded."""
    return m.dens.tail()(x)


def mass(m: ExpPolyMeasure) -> float:
    return m.atom0 + m.dens.integral()


def mean(m: ExpPolyMeasure) -> float:
    """First moment, negative for measures on the negative half-line."""
    mu = m.dens.moment1()
    return mu if m.side == "pos" else -mu


def reflect(m: ExpPolyMeasure) -> ExpPolyMeasure:
    return ExpPolyMeasure(m.atom0, m.dens, "neg" if m.side == "pos" else "pos")


def laplace(m: ExpPolyMeasure, z):
    """``atom0 + sum w p! / (z + beta)^(p+1)``, the transform of the magnitude."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.real < 0):
        raise ValueError("laplace needs Re z >= 0")
    return m.atom0 + m.dens.transform(z)


def fourier(m: ExpPolyMeasure, theta):
    """``integral exp(i theta x) m(dx)`` respecting the side of ``m``."""
    theta = np.asarray(theta, dtype=float)
    s = -1j * theta if m.side == "pos" else 1j * theta
    return m.atom0 + m.dens.transform(s)


def _conv_terms(w1, p, b, w2, q, g) -> list[tuple]:
    """Terms of ``w1 t^p e^{-bt} * w2 t^q e^{-gt}`` (convolution on (0, inf)).

    For distinct rates the coefficients grow like ``|g - b|^-(p+q+1)`` and
    cancel on evaluation, so close rates with high powers lose digits.
    """
    if abs(b - g) <= RATE_RTOL * max(b, g):
        c = w1 * w2 * _FACT[p] * _FACT[q] / _FACT[p + q + 1]
        return [(c, p + q + 1, b)]
    # Laplace side: w1 p!/(s+b)^m * w2 q!/(s+g)^n, then partial fractions
    m, n = p + 1, q + 1
    d = g - b
    c = w1 * w2 * _FACT[p] * _FACT[q]
    out = []
    for k in range(1, m + 1):
        a_k = (-1) ** (m - k) * comb(m + n - k - 1, n - 1) / d ** (m + n - k)
        out.append((c * a_k / _FACT[k - 1], k - 1, b))
    for l in range(1, n + 1):
        b_l = (-1) ** (n - l) * comb(m + n - l - 1, m - 1) / (-d) ** (m + n - l)
        out.append((c * b_l / _FACT[l - 1], l - 1, g))
    return out


def convolve_fn(f: ExpPolyFn, g: ExpPolyFn) -> ExpPolyFn:
    terms = []
    for w1, p, b in zip(f.w, f.p, f.beta):
        for w2, q, c in zip(g.w, g.p, g.beta):
            terms += _conv_terms(w1, p, b, w2, q, c)
    return ExpPolyFn(terms)


def convolve(a: ExpPolyMeasure, b: ExpPolyMeasure) -> ExpPolyMeasure:
    if a.side != b.side:
        raise ValueError("convolve needs measures on the same side")
    dens = convolve_fn(a.dens, b.dens) + a.dens * b.atom0 + b.dens * a.atom0
    # rounding in nearly cancelling coefficients must not trip the sign scan
    return ExpPolyMeasure._nonneg_by_construction(a.atom0 * b.atom0, dens, a.side)


def cross_tail_fn(f: ExpPolyFn, T: ExpPolyFn) -> DensityFn:
    """Closed form of ``x -> integral over y > max(x, 0) of T(y - x) f(y) dy``.

    ``f`` and ``T`` live on (0, inf). For ``x >= 0`` this is
    ``int_0^inf f(u + x) T(u) du``; for ``x < 0`` it is
    ``int_0^inf f(y) T(y + |x|) dy``.
    """
    pos, neg = [], []
    for w, p, b in zip(f.w, f.p, f.beta):
        for c, r, g in zip(T.w, T.p, T.beta):
            s = b + g
            for m in range(p + 1):
                coef = w * c * comb(p, m) * _FACT[m + r] / s ** (m + r + 1)
                pos.append((coef, p - m, b))
            for m in range(r + 1):
                coef = w * c * comb(r, m) * _FACT[p + m] / s ** (p + m + 1)
                neg.append((coef, r - m, g))
    return DensityFn(ExpPolyFn(pos), ExpPolyFn(neg))


def cross_convolve_tail(a: ExpPolyMeasure, b: ExpPolyMeasure, x):
    """``int over y > max(x,0) of tail_b(y - x) a(dy)`` for real ``x``."""
    fn = cross_tail_fn(a.dens, b.dens.tail())
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, fn.pos(np.abs(x)), fn.neg(np.abs(x)))


def nonneg_scan(f: ExpPolyFn, slack: float = SCAN_SLACK) -> ScanResult:
    return f.scan_nonneg(slack)
