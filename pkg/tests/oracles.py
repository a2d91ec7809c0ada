"""Independent reference computations used by the tests (sympy, no shared code paths)."""

import itertools
import random
from fractions import Fraction as F

import sympy

from artifact.complex import Generator, WeightedComplex
from artifact.novikov import NovikovScalar

DEN = 6
EXPS = [F(0), F(1, 3), F(1, 2), F(1), F(3, 2), F(2)]
t = sympy.Symbol("t")


def split_monomial_complex(rng: random.Random, max_gens: int = 12, degrees=(0, 1, 2, 3)) -> WeightedComplex:
    """Random complex with monomial entries and d^2 = 0 by disjoint supports.

    In each degree the generators are split into those that receive d and
    those that emit d, so consecutive blocks compose to zero.
    """
    budget = max_gens
    by_deg = {}
    for q in degrees:
        k = min(rng.randint(1, 4), budget)
        budget -= k
        by_deg[q] = [f"e{q}_{i}" for i in range(k)]
    gens = [Generator(g, q) for q, ids in by_deg.items() for g in ids]
    role = {g: rng.random() < 0.5 for ids in by_deg.values() for g in ids}
    diff = {}
    for q in degrees:
        if q + 1 not in by_deg:
            continue
        for s in by_deg[q]:
            if role[s] is False and q != degrees[0]:
                continue
            for tg in by_deg[q + 1]:
                if role[tg] is True and q + 1 != degrees[-1]:
                    continue
                if rng.random() < 0.7:
                    diff.setdefault(s, {})[tg] = NovikovScalar.monomial(rng.choice([-2, -1, 1, 2, 3]), rng.choice(EXPS))
    # a receiver in the first degree or an emitter in the last is harmless; the
    # middle degrees are either receivers or emitters, never both
    c = WeightedComplex(gens, diff)
    for g in gens:
        assert not c.d(c.d({g.id: NovikovScalar.monomial(1)}))
    return c


def _sym(s: NovikovScalar):
    return sum(sympy.Rational(c.numerator, c.denominator) * t ** int(e * DEN) for c, e in s.terms)


def block(c: WeightedComplex, q: int) -> sympy.Matrix:
    """Matrix of d from degree q to degree q+1 in the variable t = T^(1/DEN)."""
    src = [g.id for g in c.generators if g.degree == q]
    tgt = [g.id for g in c.generators if g.degree == q + 1]
    M = sympy.zeros(len(tgt), len(src))
    for j, s in enumerate(src):
        for tg, v in c.differential.get(s, {}).items():
            M[tgt.index(tg), j] = _sym(v)
    return M


def free_ranks(c: WeightedComplex) -> dict:
    """dim H^q over the fraction field Q(t)."""
    degs = sorted({g.degree for g in c.generators})
    out = {}
    for q in degs:
        n = sum(1 for g in c.generators if g.degree == q)
        r_in = block(c, q - 1).rank() if q - 1 in degs else 0
        r_out = block(c, q).rank() if q + 1 in degs else 0
        out[q] = n - r_in - r_out
    return out


def _lowest_power(expr) -> int:
    poly = sympy.Poly(sympy.expand(expr), t)
    return min(m[0] for m in poly.monoms())


def invariant_factors(M: sympy.Matrix) -> list:
    """Valuations of the Smith invariants via minimal valuations of k x k minors."""
    rows, cols = M.shape
    prev, out = 0, []
    for k in range(1, min(rows, cols) + 1):
        best = None
        for R in itertools.combinations(range(rows), k):
            for C in itertools.combinations(range(cols), k):
                det = sympy.expand(M.extract(list(R), list(C)).det(method="berkowitz"))
                if det != 0:
                    v = _lowest_power(det)
                    best = v if best is None else min(best, v)
        if best is None:
            break
        out.append(F(best - prev, DEN))
        prev = best
    return out


def torsion(c: WeightedComplex) -> dict:
    degs = sorted({g.degree for g in c.generators})
    out = {}
    for q in degs:
        if q - 1 not in degs:
            out[q] = []
            continue
        out[q] = sorted(x for x in invariant_factors(block(c, q - 1)) if x > 0)
    return out
