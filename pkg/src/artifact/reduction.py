"""Homology over the Novikov ring by valuation-pivot elimination.

Every elimination step uses a pivot of minimal valuation ``v``.  Eliminating
an entry ``a`` with that pivot ``p`` replaces a row by ``u*row - (a/T^v)*pivot_row``
where ``u = p/T^v`` is a unit, so all operations stay invertible over the
nonnegative ring and entries remain finite Novikov sums (no series inverses).

The Smith invariants of the incoming differential give the torsion bars, the
rank counts give the free part, and the accumulated row transform ``P`` turns
any cycle into torsion coordinates and free coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .complex import (
    Chain,
    ChainMap,
    EquivariantComplex,
    WeightedComplex,
    add_chains,
)
from .novikov import INF, NovikovScalar, ONE, to_fraction

Row = Dict[int, NovikovScalar]


# -- elimination engine ---------------------------------------------------------------

def _combine(alpha: Optional[NovikovScalar], row: Row, beta: NovikovScalar, other: Row, trunc=None) -> Row:
    """``alpha*row - beta*other`` (``alpha=None`` means 1)."""
    out: Row = {}
    if alpha is None:
        out.update(row)
    else:
        for k, s in row.items():
            out[k] = alpha * s
    for k, s in other.items():
        t = beta * s
        if k in out:
            out[k] = out[k] - t
        else:
            out[k] = -t
    res = {}
    for k, s in out.items():
        if trunc is not None and s.terms and s.terms[-1][1] >= trunc:
            s = NovikovScalar([(c, e) for c, e in s.terms if e < trunc])
        if not s.is_zero():
            res[k] = s
    return res


@dataclass
class Elimination:
    pivots: List[Tuple[int, int, Fraction]]  # (row, column, valuation) in pivot order
    transform: Optional[List[Row]]  # rows of P (P @ input is echelon)
    nrows: int

    @property
    def rank(self) -> int:
        return len(self.pivots)

    def pivot_rows(self) -> Dict[int, Fraction]:
        return {i: v for i, _, v in self.pivots}

    def invariants(self) -> List[Fraction]:
        return sorted(v for _, _, v in self.pivots)

    def free_rows(self) -> List[int]:
        piv = self.pivot_rows()
        return [i for i in range(self.nrows) if i not in piv]


def row_reduce(
    rows: Sequence[Row],
    row_keys: Optional[Sequence] = None,
    col_keys: Optional[Sequence] = None,
    track: bool = False,
    trunc=None,
) -> Elimination:
    """Row-only elimination with minimal-valuation pivots.

    Ties are broken by preferring single-term pivots, then by row key and
    column key, so results are reproducible.  With ``trunc`` every entry is
    reduced modulo ``T^trunc`` (only invariants below ``trunc`` are then meaningful).
    """
    n = len(rows)
    work = [dict(r) for r in rows]
    if trunc is not None:
        work = [_combine(None, r, NovikovScalar.monomial(0), {}, trunc) for r in work]
    row_keys = list(range(n)) if row_keys is None else list(row_keys)
    col_index: Dict[int, set] = {}
    for i, r in enumerate(work):
        for k in r:
            col_index.setdefault(k, set()).add(i)
    if col_keys is None:
        ck = {k: k for k in col_index}
    else:
        ck = {k: col_keys[k] for k in col_index}
    active_rows = set(range(n))
    dead_cols: set = set()
    P = [{i: ONE} for i in range(n)] if track else None
    pivots = []
    while True:
        best = None
        for i in active_rows:
            for k, s in work[i].items():
                if k in dead_cols:
                    continue
                key = (s.terms[0][1], len(s.terms) > 1, row_keys[i], ck[k])
                if best is None or key < best[0]:
                    best = (key, i, k)
        if best is None:
            break
        _, i, k = best
        p = work[i][k]
        v = p.terms[0][1]
        if len(p.terms) == 1 and p.precision is None:
            unit = None
            inv_mono = NovikovScalar.monomial(1 / p.terms[0][0], -v)
        else:
            unit = p.shift(-v)
            inv_mono = None
        for j in sorted(col_index.get(k, ()) & active_rows):
            if j == i:
                continue
            a = work[j][k]
            if unit is None:
                beta = a * inv_mono
                alpha = None
            else:
                beta = a.shift(-v)
                alpha = unit
            old = work[j]
            new = _combine(alpha, old, beta, work[i], trunc)
            new.pop(k, None)
            for kk in old:
                if kk not in new:
                    col_index[kk].discard(j)
            for kk in new:
                col_index.setdefault(kk, set()).add(j)
                if kk not in ck:
                    ck[kk] = kk if col_keys is None else col_keys[kk]
            work[j] = new
            if P is not None:
                P[j] = _combine(alpha, P[j], beta, P[i])
        active_rows.discard(i)
        dead_cols.add(k)
        pivots.append((i, k, v))
    return Elimination(pivots, P, n)


def smith_invariants(rows: Sequence[Row], trunc=None) -> List[Fraction]:
    """Valuations of the Smith normal form entries (nonzero ones only)."""
    return row_reduce(rows, trunc=trunc).invariants()


def rank(rows: Sequence[Row]) -> int:
    return row_reduce(rows).rank


def _dot(prow: Row, vec: Dict[int, NovikovScalar]) -> NovikovScalar:
    total = NovikovScalar.monomial(0)
    for j, s in prow.items():
        x = vec.get(j)
        if x is not None:
            total = total + s * x
    return total


# -- barcodes ------------------------------------------------------------------------------

def _rat(q) -> str:
    if q == INF:
        return "inf"
    q = to_fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


@dataclass
class DegreeBars:
    infinite: int = 0
    finite: List[Fraction] = field(default_factory=list)


@dataclass
class Barcode:
    """Infinite bars (free rank; length at least the precision) and finite bars per degree."""

    precision: Optional[Fraction]
    degrees: Dict[int, DegreeBars] = field(default_factory=dict)
    meta: Dict = field(default_factory=dict, compare=False)

    def graded_rank(self, degree: int) -> int:
        d = self.degrees.get(degree)
        return d.infinite if d else 0

    def total_infinite(self) -> int:
        return sum(d.infinite for d in self.degrees.values())

    def finite_bars(self, degree: int) -> List[Fraction]:
        d = self.degrees.get(degree)
        return list(d.finite) if d else []

    def normalized(self) -> "Barcode":
        degs = {
            q: DegreeBars(d.infinite, sorted(d.finite))
            for q, d in sorted(self.degrees.items())
            if d.infinite or d.finite
        }
        return Barcode(self.precision, degs, dict(self.meta))

    def truncated(self, r) -> "Barcode":
        """Barcode seen at a smaller precision: bars of length >= r become infinite."""
        r = to_fraction(r)
        degs = {}
        for q, d in self.degrees.items():
            long = sum(1 for x in d.finite if x >= r)
            degs[q] = DegreeBars(d.infinite + long, sorted(x for x in d.finite if x < r))
        return Barcode(r, degs).normalized()

    def __eq__(self, other):
        if not isinstance(other, Barcode):
            return NotImplemented
        a, b = self.normalized(), other.normalized()
        return a.precision == b.precision and a.degrees == b.degrees

    def to_dict(self) -> dict:
        n = self.normalized()
        return {
            "precision": _rat(n.precision) if n.precision is not None else "inf",
            "degrees": {
                str(q): {"infinite": d.infinite, "finite": [_rat(x) for x in d.finite]}
                for q, d in n.degrees.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Barcode":
        prec = data.get("precision")
        prec = None if prec in (None, "inf") else Fraction(prec)
        degs = {
            int(q): DegreeBars(int(v.get("infinite", 0)), [Fraction(x) for x in v.get("finite", [])])
            for q, v in data.get("degrees", {}).items()
        }
        return cls(prec, degs).normalized()


def graded_rank(barcode: Barcode, degree: int) -> int:
    """Number of infinite bars in ``degree``."""
    return barcode.graded_rank(degree)


# -- reduction of a complex ------------------------------------------------------------------

class _Degree:
    __slots__ = ("ids", "index", "elim_in", "kernel", "free_basis")

    def __init__(self, ids):
        self.ids = ids
        self.index = {g: i for i, g in enumerate(ids)}
        self.elim_in: Optional[Elimination] = None
        self.kernel = None
        self.free_basis = None


class Reduction:
    """Homology data of one complex: bars, coordinates of cycles, free-part bases."""

    def __init__(self, c: WeightedComplex):
        self.complex = c
        self._deg: Dict[int, _Degree] = {q: _Degree(ids) for q, ids in c.degrees().items()}

    def degrees(self) -> List[int]:
        return sorted(q for q, D in self._deg.items() if D.ids)

    def _d(self, q: int) -> _Degree:
        if q not in self._deg:
            self._deg[q] = _Degree([])
        return self._deg[q]

    def _elim_in(self, q: int) -> Elimination:
        """Elimination of the differential into degree q (rows = degree-q generators)."""
        D = self._d(q)
        if D.elim_in is None:
            src = self._d(q - 1)
            rows: List[Row] = [dict() for _ in D.ids]
            for j, sid in enumerate(src.ids):
                for tgt, s in self.complex.differential.get(sid, {}).items():
                    rows[D.index[tgt]][j] = s
            D.elim_in = row_reduce(rows, D.ids, src.ids, track=True)
        return D.elim_in

    def rank_in(self, q: int) -> int:
        return self._elim_in(q).rank

    def torsion(self, q: int) -> List[Fraction]:
        return sorted(v for v in self._elim_in(q).pivot_rows().values() if v > 0)

    def free_rank(self, q: int) -> int:
        n = len(self._d(q).ids)
        return n - self.rank_in(q) - self.rank_in(q + 1)

    def barcode(self, r=None, coefficients: Optional[str] = None) -> Barcode:
        mode = coefficients or self.complex.coefficient_mode
        r = None if r is None else to_fraction(r)
        degs = {}
        for q in self.degrees():
            free = self.free_rank(q)
            if mode == "lambda":
                degs[q] = DegreeBars(free, [])
                continue
            tors = self.torsion(q)
            if r is None:
                degs[q] = DegreeBars(free, tors)
            else:
                degs[q] = DegreeBars(free + sum(1 for x in tors if x >= r), [x for x in tors if x < r])
        return Barcode(r, degs).normalized()

    # -- coordinates ------------------------------------------------------------
    def _vec(self, q: int, chain: Chain) -> Dict[int, NovikovScalar]:
        D = self._d(q)
        out = {}
        for g, s in chain.items():
            if g not in D.index:
                raise ValueError(f"{g!r} is not a generator of degree {q}")
            out[D.index[g]] = s
        return out

    def chain_degree(self, chain: Chain) -> Optional[int]:
        degs = {self.complex.degree_of(g) for g in chain}
        if len(degs) > 1:
            raise ValueError("chain is not homogeneous")
        return degs.pop() if degs else None

    def coordinates(self, q: int, chain: Chain) -> Tuple[List[Tuple[Fraction, NovikovScalar]], List[NovikovScalar]]:
        """Torsion coordinates ``(order, coefficient)`` and free coordinates of a cycle."""
        el = self._elim_in(q)
        vec = self._vec(q, chain)
        piv = el.pivot_rows()
        tors, free = [], []
        for i in range(el.nrows):
            x = _dot(el.transform[i], vec)
            if i in piv:
                if piv[i] > 0:
                    tors.append((piv[i], x))
            else:
                free.append(x)
        return tors, free

    def free_coordinates(self, q: int, chain: Chain) -> List[NovikovScalar]:
        el = self._elim_in(q)
        vec = self._vec(q, chain)
        return [_dot(el.transform[i], vec) for i in el.free_rows()]

    def is_cycle(self, chain: Chain) -> bool:
        return not self.complex.d(chain)

    def vanishes_over_lambda(self, chain: Chain) -> bool:
        """Class of a cycle is zero after tensoring with the Novikov field."""
        q = self.chain_degree(chain)
        if q is None:
            return True
        return all(x.is_zero() for x in self.free_coordinates(q, chain))

    def decay(self, chain: Chain):
        """Valuation of the free part of a cycle's class (inf if torsion)."""
        q = self.chain_degree(chain)
        if q is None:
            return INF
        return min((x.val() for x in self.free_coordinates(q, chain)), default=INF)

    def death_time(self, chain: Chain):
        """Least ``l`` with ``T^l [chain] = 0`` over the ring (inf for non-torsion classes)."""
        q = self.chain_degree(chain)
        if q is None:
            return Fraction(0)
        tors, free = self.coordinates(q, chain)
        if any(not x.is_zero() for x in free):
            return INF
        t = Fraction(0)
        for order, x in tors:
            if not x.is_zero():
                t = max(t, order - x.val())
        return t

    def is_boundary(self, chain: Chain) -> bool:
        return self.death_time(chain) == 0

    # -- bases -------------------------------------------------------------------
    def kernel_basis(self, q: int) -> List[Chain]:
        """A basis of the cycles in degree q over the nonnegative ring."""
        D = self._d(q)
        if D.kernel is None:
            tgt = self._d(q + 1)
            rows = []
            for g in D.ids:
                rows.append({tgt.index[t]: s for t, s in self.complex.differential.get(g, {}).items()})
            el = row_reduce(rows, D.ids, tgt.ids, track=True)
            basis = []
            for i in el.free_rows():
                basis.append({D.ids[j]: s for j, s in el.transform[i].items()})
            D.kernel = basis
        return D.kernel

    def free_basis(self, q: int) -> List[Chain]:
        """Cycles whose classes form a basis of homology modulo torsion."""
        D = self._d(q)
        if D.free_basis is None:
            Z = self.kernel_basis(q)
            rows = [dict(enumerate(self.free_coordinates(q, z))) for z in Z]
            rows = [{k: v for k, v in r.items() if not v.is_zero()} for r in rows]
            el = row_reduce(rows, track=True)
            basis = []
            for i, _, _ in sorted(el.pivots):
                chain: Chain = {}
                for j, s in el.transform[i].items():
                    chain = add_chains(chain, Z[j], s)
                basis.append(chain)
            D.free_basis = basis
        return D.free_basis

    def primitive(self, chain: Chain, extra: Sequence[Chain] = ()):
        """Solve ``d(y) + c*chain + sum b_l extra_l = 0`` with ``c != 0`` if possible.

        Returns ``(y, c, b)`` or ``None``; everything is exact (no division).
        """
        q = self.chain_degree(chain)
        if q is None:
            return {}, ONE, [NovikovScalar.monomial(0)] * len(extra)
        D = self._d(q)
        src = self._d(q - 1)
        rows: List[Row] = []
        for sid in src.ids:
            rows.append({D.index[t]: s for t, s in self.complex.differential.get(sid, {}).items()})
        rows.append(self._vec(q, chain))
        for e in extra:
            rows.append(self._vec(q, e))
        keys = list(range(len(rows)))
        el = row_reduce(rows, keys, D.ids, track=True)
        m = len(src.ids)
        for i in el.free_rows():
            comb = el.transform[i]
            c = comb.get(m)
            if c is None or c.is_zero():
                continue
            y = {src.ids[j]: s for j, s in comb.items() if j < m}
            b = [comb.get(m + 1 + l, NovikovScalar.monomial(0)) for l in range(len(extra))]
            return y, c, b
        return None


def reduce(c: WeightedComplex, r=None, coefficients: Optional[str] = None) -> Tuple[Barcode, Reduction]:
    """Barcode of ``H(c)`` (bars at least ``r`` count as infinite) and the reduction context."""
    red = Reduction(c)
    return red.barcode(r, coefficients), red


# -- induced maps -------------------------------------------------------------------------------

@dataclass
class HomologyMap:
    """Matrix of a chain map on homology modulo torsion, per degree."""

    matrices: Dict[int, List[List[NovikovScalar]]]  # degree -> columns (images of source free basis)
    source_ranks: Dict[int, int]
    target_ranks: Dict[int, int]

    def rank(self, q: int) -> int:
        cols = self.matrices.get(q, [])
        return rank([{i: s for i, s in enumerate(col) if not s.is_zero()} for col in cols])

    def invariants(self, q: int) -> List:
        """Smith invariants of the lattice map (inf for directions sent to zero)."""
        cols = self.matrices.get(q, [])
        inv = smith_invariants([{i: s for i, s in enumerate(col) if not s.is_zero()} for col in cols])
        return inv + [INF] * (self.source_ranks.get(q, 0) - len(inv))

    def is_zero(self) -> bool:
        return all(s.is_zero() for cols in self.matrices.values() for col in cols for s in col)

    def is_injective(self) -> bool:
        return all(self.rank(q) == self.source_ranks[q] for q in self.source_ranks)

    def is_surjective(self) -> bool:
        return all(self.rank(q) == self.target_ranks.get(q, 0) for q in self.target_ranks)

    def is_iso(self) -> bool:
        return self.is_injective() and self.is_surjective()


def induced_map(f: ChainMap, src: Reduction, tgt: Reduction, r=None, check: bool = True, degrees=None) -> HomologyMap:
    """Express ``f`` on free homology bases; raises for maps that are not chain maps.

    ``degrees`` limits the computation to the listed source degrees.
    """
    if check:
        probs = f.chain_problems(r)
        if probs:
            raise ValueError("not a chain map: " + probs[0])
    mats, sr, tr = {}, {}, {}
    qs = set(src.degrees()) | set(tgt.degrees())
    if degrees is not None:
        qs &= set(degrees)
    for q in sorted(qs):
        basis = src.free_basis(q) if q in src._deg else []
        sr[q] = len(basis)
        tq = q + f.degree
        tr[tq] = tgt.free_rank(tq) if tq in tgt._deg else 0
        cols = []
        for b in basis:
            img = f(b)
            if img and tq in tgt._deg:
                cols.append(tgt.free_coordinates(tq, img))
            else:
                cols.append([NovikovScalar.monomial(0)] * tr[tq])
        mats[q] = cols
    return HomologyMap(mats, sr, tr)


def image_bars(images: Sequence[Chain], tgt: Reduction, q: int, r) -> List[Fraction]:
    """Bars of the submodule of ``H^q(tgt) (x) Lambda_{>=0}/T^r`` generated by classes of ``images``.

    Returns lengths in (0, r]; a length equal to ``r`` is a class surviving to precision ``r``.
    """
    r = to_fraction(r)
    el = tgt._elim_in(q)
    piv = el.pivot_rows()
    rows: List[Row] = []
    for img in images:
        vec = tgt._vec(q, img) if img else {}
        row: Row = {}
        for i in range(el.nrows):
            x = _dot(el.transform[i], vec)
            if x.is_zero():
                continue
            mu = min(piv[i], r) if i in piv else r
            if mu == 0:
                continue
            x = x.shift(r - mu)
            if x.val() < r:
                row[i] = x
        rows.append(row)
    inv = smith_invariants(rows, trunc=r)
    return sorted(r - s for s in inv if s < r)


# -- spectral sequence of the u-filtration ---------------------------------------------------------------

def _subspace_rank(vectors: List[Row]) -> int:
    return rank([v for v in vectors if v])


def spectral_pages(ec: EquivariantComplex, r=None, max_page: int = 3) -> Dict[int, Dict[Tuple[int, int], int]]:
    """Ranks of the pages ``E_1 .. E_max_page`` (plus ``E_inf`` under key 0) over the Novikov field.

    Filtration: ``G_p`` spans ``u^k x`` with ``k <= p``; the differential lowers ``k``.
    Page entries are keyed ``(p, q)`` where ``q`` is the degree of the base generator.
    """
    c = ec.complex
    N = ec.N
    gens_by_p = {}
    for g in c.generators:
        k = int(g.id.split("|", 1)[0][1:])
        gens_by_p.setdefault(k, []).append(g.id)
    total_degrees = sorted(c.degrees())
    pages = {}
    for page in list(range(1, max_page + 1)) + [N + 2]:
        out = {}
        for p in range(N + 1):
            for t in total_degrees:
                dim = _page_dim(c, p, page, t, N)
                if dim:
                    out[(p, t + 2 * p)] = dim
        pages[0 if page == N + 2 else page] = out
    return pages


def _filtered(c: WeightedComplex, p: int, t: int) -> List[str]:
    if p < 0:
        return []
    return [g for g in c.degrees().get(t, []) if int(g.split("|", 1)[0][1:]) <= p]


def _page_dim(c: WeightedComplex, p: int, page: int, t: int, N: int) -> int:
    """dim (Z_r^p + G_{p-1}) / (B_r^p + G_{p-1}) in total degree t."""
    Gp = _filtered(c, p, t)
    Gp1 = set(_filtered(c, p - 1, t))
    if len(Gp) == len(Gp1):
        return 0
    # Z: x in G_p (degree t) with dx in G_{p-page}
    allowed = set(_filtered(c, p - page, t + 1))
    idx_t1 = {g: i for i, g in enumerate(c.degrees().get(t + 1, []))}
    Z = _preimage(c, Gp, allowed, idx_t1)
    # B: d(x) for x in G_{p+page-1} (degree t-1) with dx in G_p
    src = _filtered(c, min(p + page - 1, N), t - 1)
    idx_t = {g: i for i, g in enumerate(c.degrees().get(t, []))}
    Gp_set = set(Gp)
    pre = _preimage(c, src, Gp_set, idx_t)
    B = []
    for x in pre:
        dx = c.d(x)
        B.append({idx_t[g]: s for g, s in dx.items()})
    base = [{idx_t[g]: ONE} for g in Gp1]
    Zv = [{idx_t[g]: s for g, s in z.items()} for z in Z]
    return _subspace_rank(Zv + base) - _subspace_rank(B + base)


def _preimage(c: WeightedComplex, domain: List[str], allowed: set, idx_next: Dict[str, int]) -> List[Chain]:
    """Basis of {x in span(domain) : dx lies in span(allowed)} over the field."""
    rows = []
    for g in domain:
        dx = c.d({g: ONE})
        rows.append({idx_next[t]: s for t, s in dx.items() if t not in allowed})
    el = row_reduce(rows, domain, track=True)
    out = []
    for i in el.free_rows():
        out.append({domain[j]: s for j, s in el.transform[i].items()})
    return out
