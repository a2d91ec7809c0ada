"""Graded, action-weighted cochain complexes over Novikov coefficients.

Conventions: the differential raises degree by one, an entry from ``x`` to
``y`` is weighted by ``T^(action(y) - action(x))``, and chains are sparse
dicts ``{generator id: NovikovScalar}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .novikov import NovikovScalar, format_scalar, parse, to_fraction

KINDS = ("constant-lower", "nonconstant-lower", "upper")
Chain = Dict[str, NovikovScalar]


@dataclass(frozen=True)
class Generator:
    id: str
    degree: int
    action: Fraction = Fraction(0)
    kind: str = "nonconstant-lower"
    orbit_meta: Optional[Tuple[Fraction, int]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        object.__setattr__(self, "action", to_fraction(self.action))
        object.__setattr__(self, "degree", int(self.degree))


def _clean(entries: Mapping) -> Dict[str, Dict[str, NovikovScalar]]:
    out = {}
    for src, row in entries.items():
        items = row.items() if isinstance(row, dict) or isinstance(row, Mapping) else row
        kept = {}
        for tgt, s in items:
            if type(s) is not NovikovScalar:
                s = NovikovScalar.coerce(s)
            if tgt in kept:
                s = kept[tgt] + s
            kept[tgt] = s
        kept = {t: s for t, s in kept.items() if not s.is_zero()}
        if kept:
            out[src] = kept
    return out


def add_chains(a: Chain, b: Chain, scale: Optional[NovikovScalar] = None) -> Chain:
    """``a + scale * b`` as a new sparse chain."""
    out = dict(a)
    for k, v in b.items():
        if scale is not None:
            v = scale * v
        if k in out:
            s = out[k] + v
            if s.is_zero():
                del out[k]
            else:
                out[k] = s
        elif not v.is_zero():
            out[k] = v
    return out


def scale_chain(a: Chain, s: NovikovScalar) -> Chain:
    out = {}
    for k, v in a.items():
        w = s * v
        if not w.is_zero():
            out[k] = w
    return out


class WeightedComplex:
    """Free graded module on named generators with a sparse Novikov differential."""

    def __init__(
        self,
        generators: Iterable[Generator],
        differential: Mapping = None,
        coefficient_mode: str = "ring",
        index_bounded: Optional[bool] = None,
    ):
        gens = sorted(generators, key=lambda g: g.id)
        self.generators: Tuple[Generator, ...] = tuple(gens)
        self.by_id: Dict[str, Generator] = {}
        for g in gens:
            if g.id in self.by_id:
                raise ValueError(f"duplicate generator id {g.id!r}")
            self.by_id[g.id] = g
        self.differential = _clean(differential or {})
        for src, row in self.differential.items():
            if src not in self.by_id:
                raise ValueError(f"differential source {src!r} is not a generator")
            for tgt in row:
                if tgt not in self.by_id:
                    raise ValueError(f"differential target {tgt!r} is not a generator")
        if coefficient_mode not in ("ring", "lambda"):
            raise ValueError("coefficient_mode must be 'ring' or 'lambda'")
        self.coefficient_mode = coefficient_mode
        self.index_bounded = index_bounded
        self._degrees = None

    # -- basic access -----------------------------------------------------
    def __len__(self):
        return len(self.generators)

    def __contains__(self, gid):
        return gid in self.by_id

    def ids(self) -> List[str]:
        return [g.id for g in self.generators]

    def degree_of(self, gid: str) -> int:
        return self.by_id[gid].degree

    def degrees(self) -> Dict[int, List[str]]:
        """Generator ids grouped by degree, each list in id order."""
        if self._degrees is None:
            out: Dict[int, List[str]] = {}
            for g in self.generators:
                out.setdefault(g.degree, []).append(g.id)
            self._degrees = out
        return self._degrees

    def d(self, chain: Chain) -> Chain:
        out: Chain = {}
        for src, coef in chain.items():
            row = self.differential.get(src)
            if not row:
                continue
            for tgt, s in row.items():
                out[tgt] = out[tgt] + coef * s if tgt in out else coef * s
        return {k: v for k, v in out.items() if not v.is_zero()}

    def entries(self):
        for src in sorted(self.differential):
            row = self.differential[src]
            for tgt in sorted(row):
                yield src, tgt, row[tgt]

    def with_mode(self, coefficient_mode: str) -> "WeightedComplex":
        return WeightedComplex(self.generators, self.differential, coefficient_mode, self.index_bounded)

    def restrict(self, keep: Iterable[str]) -> "WeightedComplex":
        """Span of ``keep`` with the differential restricted (kept-to-kept entries)."""
        keep = set(keep)
        gens = [g for g in self.generators if g.id in keep]
        diff = {
            s: {t: v for t, v in row.items() if t in keep}
            for s, row in self.differential.items()
            if s in keep
        }
        return WeightedComplex(gens, diff, self.coefficient_mode, self.index_bounded)

    def __eq__(self, other):
        return (
            isinstance(other, WeightedComplex)
            and self.generators == other.generators
            and self.differential == other.differential
            and self.coefficient_mode == other.coefficient_mode
            and self.index_bounded == other.index_bounded
        )

    def __repr__(self):
        n = sum(len(r) for r in self.differential.values())
        return f"WeightedComplex({len(self.generators)} generators, {n} entries)"


# -- validation ---------------------------------------------------------------

def _weakest_precision(c: WeightedComplex):
    prec = None
    for _, _, s in c.entries():
        if s.precision is not None and (prec is None or s.precision < prec):
            prec = s.precision
    return prec


def validate(c: WeightedComplex, epsilon=None, check_energy: bool = True, strict_energy: bool = False) -> List[str]:
    """Return the list of invariant violations; empty means valid.

    ``check_energy`` enforces that an entry from x to y has valuation at least
    action(y) - action(x) >= 0; ``strict_energy`` demands equality.
    ``epsilon`` enables the action window check for constant generators.
    """
    problems: List[str] = []
    for src, tgt, s in c.entries():
        gs, gt = c.by_id[src], c.by_id[tgt]
        if gt.degree != gs.degree + 1:
            problems.append(f"degree: {src} -> {tgt} goes from {gs.degree} to {gt.degree}")
        if check_energy:
            gap = gt.action - gs.action
            v = s.val()
            if gap < 0 or v < gap:
                problems.append(
                    f"energy positivity: {src} -> {tgt} has valuation {v} but action gap {gap}"
                )
            elif strict_energy and v != gap:
                problems.append(f"energy identity: {src} -> {tgt} has valuation {v} != action gap {gap}")
            elif v == 0 and gap != 0:
                problems.append(f"energy positivity: {src} -> {tgt} has valuation 0 across unequal actions")
    if epsilon is not None:
        eps = to_fraction(epsilon)
        for g in c.generators:
            if g.kind == "constant-lower" and not (-eps < g.action <= 0):
                problems.append(f"action window: constant generator {g.id} has action {g.action} outside (-{eps}, 0]")
    lowers = [g.action for g in c.generators if g.kind != "upper"]
    if lowers:
        top = max(lowers)
        for g in c.generators:
            if g.kind == "upper" and g.action <= top:
                problems.append(f"upper ordering: upper generator {g.id} has action {g.action} <= lower action {top}")
    prec = _weakest_precision(c)
    for g in c.generators:
        dd = c.d(c.d({g.id: NovikovScalar.monomial(1)}))
        if prec is not None:
            dd = {k: v for k, v in dd.items() if v.val() < prec}
        for tgt in sorted(dd):
            problems.append(f"d^2: d(d({g.id})) has coefficient {format_scalar(dd[tgt])} on {tgt}")
    return problems


def default_epsilon(c: WeightedComplex) -> Fraction:
    """Half the smallest nonzero action magnitude among nonconstant lower generators."""
    mags = [abs(g.action) for g in c.generators if g.kind == "nonconstant-lower" and g.action != 0]
    if not mags:
        return Fraction(1, 2)
    return min(mags) / 2


# -- filtrations and quotients ---------------------------------------------------

def action_subcomplex(c: WeightedComplex, L=None) -> WeightedComplex:
    """Span of generators with action strictly greater than ``L`` (``None`` or -inf: everything)."""
    if L is None or L == -math.inf:
        return c.restrict(c.by_id)
    L = to_fraction(L)
    return c.restrict(g.id for g in c.generators if g.action > L)


def negative_quotient(c: WeightedComplex, epsilon=None) -> WeightedComplex:
    """Quotient by the subcomplex of actions above ``-epsilon``."""
    eps = default_epsilon(c) if epsilon is None else to_fraction(epsilon)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    if any(g.action == -eps for g in c.generators):
        raise ValueError("epsilon on spectrum")
    return c.restrict(g.id for g in c.generators if g.action <= -eps)


def prune_upper(c: WeightedComplex) -> WeightedComplex:
    """Delete upper generators; only allowed for index-bounded models."""
    if not c.index_bounded:
        raise ValueError("pruning unjustified")
    return c.restrict(g.id for g in c.generators if g.kind != "upper")


# -- maps -----------------------------------------------------------------------

class ChainMap:
    """Sparse graded linear map between two complexes."""

    def __init__(self, source: WeightedComplex, target: WeightedComplex, entries: Mapping = None, degree: int = 0):
        self.source = source
        self.target = target
        self.degree = degree
        self.entries = _clean(entries or {})
        for s, row in self.entries.items():
            if s not in source.by_id:
                raise ValueError(f"map source {s!r} is not a generator")
            for t in row:
                if t not in target.by_id:
                    raise ValueError(f"map target {t!r} is not a generator")

    def __call__(self, chain: Chain) -> Chain:
        out: Chain = {}
        for src, coef in chain.items():
            row = self.entries.get(src)
            if not row:
                continue
            for tgt, s in row.items():
                out[tgt] = out[tgt] + coef * s if tgt in out else coef * s
        return {k: v for k, v in out.items() if not v.is_zero()}

    def then(self, other: "ChainMap") -> "ChainMap":
        """Composite ``other o self``."""
        entries = {s: other(row) for s, row in self.entries.items()}
        return ChainMap(self.source, other.target, entries, self.degree + other.degree)

    def restrict(self, source: WeightedComplex, target: WeightedComplex) -> "ChainMap":
        entries = {
            s: {t: v for t, v in row.items() if t in target.by_id}
            for s, row in self.entries.items()
            if s in source.by_id
        }
        return ChainMap(source, target, entries, self.degree)

    def degree_problems(self) -> List[str]:
        out = []
        for s, row in self.entries.items():
            for t in row:
                if self.target.degree_of(t) != self.source.degree_of(s) + self.degree:
                    out.append(f"map degree: {s} -> {t}")
        return out

    def chain_problems(self, precision=None) -> List[str]:
        """Violations of ``d f = (-1)^degree f d`` on each generator."""
        sign = -1 if self.degree % 2 else 1
        out = self.degree_problems()
        for g in self.source.generators:
            e = {g.id: NovikovScalar.monomial(1)}
            lhs = self.target.d(self(e))
            rhs = self(self.source.d(e))
            diff = add_chains(lhs, rhs, NovikovScalar.monomial(-sign))
            if precision is not None:
                diff = {k: v for k, v in diff.items() if v.val() < precision}
            if diff:
                out.append(f"chain map: fails on {g.id}")
        return out

    def is_chain_map(self, precision=None) -> bool:
        return not self.chain_problems(precision)

    @classmethod
    def identity(cls, c: WeightedComplex) -> "ChainMap":
        return cls(c, c, {g.id: {g.id: 1} for g in c.generators})

    @classmethod
    def inclusion(cls, sub: WeightedComplex, ambient: WeightedComplex, rename=None) -> "ChainMap":
        rename = rename or (lambda x: x)
        return cls(sub, ambient, {g.id: {rename(g.id): 1} for g in sub.generators})

    @classmethod
    def projection(cls, ambient: WeightedComplex, quotient: WeightedComplex) -> "ChainMap":
        return cls(ambient, quotient, {g.id: {g.id: 1} for g in quotient.generators})


# -- shifts and sums ----------------------------------------------------------------

def shift(c: WeightedComplex, k: int) -> WeightedComplex:
    """``C[k]``: degrees lowered by ``k`` and the differential multiplied by ``(-1)^k``."""
    gens = [replace(g, degree=g.degree - k) for g in c.generators]
    if k % 2:
        diff = {s: {t: -v for t, v in row.items()} for s, row in c.differential.items()}
    else:
        diff = c.differential
    return WeightedComplex(gens, diff, c.coefficient_mode, c.index_bounded)


def regrade(c: WeightedComplex, k: int) -> WeightedComplex:
    """Lower all degrees by ``k`` without touching signs (even shifts agree with ``shift``)."""
    gens = [replace(g, degree=g.degree - k) for g in c.generators]
    return WeightedComplex(gens, c.differential, c.coefficient_mode, c.index_bounded)


def rename(c: WeightedComplex, fn) -> WeightedComplex:
    gens = [replace(g, id=fn(g.id)) for g in c.generators]
    diff = {fn(s): {fn(t): v for t, v in row.items()} for s, row in c.differential.items()}
    return WeightedComplex(gens, diff, c.coefficient_mode, c.index_bounded)


def direct_sum(*complexes: WeightedComplex, tags: Optional[Sequence[str]] = None) -> WeightedComplex:
    """Direct sum; with ``tags`` every id is prefixed by ``tag:``."""
    gens, diff = [], {}
    for i, c in enumerate(complexes):
        if tags is not None:
            c = rename(c, lambda x, t=tags[i]: f"{t}:{x}")
        gens.extend(c.generators)
        diff.update(c.differential)
    bounded = [c.index_bounded for c in complexes]
    ib = all(bounded) if bounded else None
    mode = complexes[0].coefficient_mode if complexes else "ring"
    return WeightedComplex(gens, diff, mode, ib)


def scale_actions(c: WeightedComplex, factor) -> WeightedComplex:
    """Multiply every action and every exponent by ``factor`` (conformal rescaling)."""
    f = to_fraction(factor)
    gens = []
    for g in c.generators:
        meta = g.orbit_meta
        if meta is not None:
            meta = (meta[0] * f, meta[1])
        gens.append(replace(g, action=g.action * f, orbit_meta=meta))
    diff = {s: {t: v.scale(f) for t, v in row.items()} for s, row in c.differential.items()}
    return WeightedComplex(gens, diff, c.coefficient_mode, c.index_bounded)


# -- S^1-equivariant extension -------------------------------------------------------

def u_id(k: int, gid: str) -> str:
    return f"u{k}|{gid}"


def split_u_id(uid: str) -> Tuple[int, str]:
    head, _, rest = uid.partition("|")
    return int(head[1:]), rest


class EquivariantComplex:
    """``u``-truncated equivariant complex ``Lambda[u]/u^(N+1) (x) C``.

    ``higher`` holds the maps psi_1, psi_2, ... as sparse dicts on base ids;
    psi_i must shift degree by ``1 - 2i``.
    """

    def __init__(self, base: WeightedComplex, N: int, higher: Sequence[Mapping] = ()):
        if N < 0:
            raise ValueError("u-truncation must be nonnegative")
        self.base = base
        self.N = int(N)
        self.higher = [_clean(h) for h in higher]
        for i, h in enumerate(self.higher, start=1):
            for s, row in h.items():
                if s not in base.by_id:
                    raise ValueError(f"psi_{i} source {s!r} is not a generator")
                for t in row:
                    if t not in base.by_id:
                        raise ValueError(f"psi_{i} target {t!r} is not a generator")
                    if base.degree_of(t) != base.degree_of(s) + 1 - 2 * i:
                        raise ValueError(f"psi_{i} has the wrong degree on {s} -> {t}")
        self.complex = self._materialize()

    def _materialize(self) -> WeightedComplex:
        gens = []
        diff: Dict[str, Dict[str, NovikovScalar]] = {}
        maps = [self.base.differential] + self.higher
        for k in range(self.N + 1):
            for g in self.base.generators:
                gens.append(replace(g, id=u_id(k, g.id), degree=g.degree - 2 * k))
                row: Dict[str, NovikovScalar] = {}
                for i, psi in enumerate(maps):
                    if i > k:
                        break
                    for t, v in psi.get(g.id, {}).items():
                        key = u_id(k - i, t)
                        row[key] = row[key] + v if key in row else v
                if row:
                    diff[u_id(k, g.id)] = row
        return WeightedComplex(gens, diff, self.base.coefficient_mode, self.base.index_bounded)

    def u_map(self, target: Optional["EquivariantComplex"] = None) -> ChainMap:
        """``U(u^k x) = u^(k-1) x`` onto the truncation ``N-1`` with degrees lowered by 2."""
        if self.N < 1:
            raise ValueError("U needs u-truncation at least 1")
        tgt = target if target is not None else lowered(self)
        entries = {}
        for g in self.complex.generators:
            k, x = split_u_id(g.id)
            if k >= 1 and u_id(k - 1, x) in tgt.by_id:
                entries[g.id] = {u_id(k - 1, x): 1}
        return ChainMap(self.complex, tgt, entries)

    def base_inclusion(self) -> ChainMap:
        """``x -> u^0 x``."""
        return ChainMap(self.base, self.complex, {g.id: {u_id(0, g.id): 1} for g in self.base.generators})


def lowered(ec: EquivariantComplex) -> WeightedComplex:
    """Truncation ``N-1`` regraded so that the U-map has degree zero."""
    return regrade(EquivariantComplex(ec.base, ec.N - 1, ec.higher).complex, 2)


def equivariantize(c: WeightedComplex, N: int, higher: Sequence[Mapping] = ()) -> EquivariantComplex:
    """Build the ``u``-truncated complex; rejects higher maps that break ``d^2 = 0``."""
    ec = EquivariantComplex(c, N, higher)
    bad = [p for p in validate(ec.complex, check_energy=False) if p.startswith("d^2")]
    if bad:
        raise ValueError("equivariant differential does not square to zero: " + bad[0])
    return ec


# -- JSON ------------------------------------------------------------------------------

def _rat_text(q: Fraction) -> str:
    q = to_fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def complex_to_dict(c: WeightedComplex) -> dict:
    gens = []
    for g in c.generators:
        item = {"id": g.id, "degree": g.degree, "action": _rat_text(g.action), "kind": g.kind}
        if g.orbit_meta is not None:
            item["cz"] = g.orbit_meta[1]
            item["period"] = _rat_text(g.orbit_meta[0])
        gens.append(item)
    diff = {
        s: [[t, format_scalar(c.differential[s][t])] for t in sorted(c.differential[s])]
        for s in sorted(c.differential)
    }
    out = {"generators": gens, "differential": diff, "index_bounded": c.index_bounded}
    if c.coefficient_mode != "ring":
        out["coefficient_mode"] = c.coefficient_mode
    return out


def complex_from_dict(data: dict) -> WeightedComplex:
    if not isinstance(data, dict) or "generators" not in data:
        raise ValueError("complex JSON needs a 'generators' list")
    gens = []
    for i, item in enumerate(data["generators"]):
        try:
            meta = None
            if "cz" in item:
                meta = (to_fraction(str(item.get("period", "0"))), int(item["cz"]))
            gens.append(
                Generator(
                    id=str(item["id"]),
                    degree=int(item["degree"]),
                    action=to_fraction(str(item.get("action", "0"))),
                    kind=item.get("kind", "nonconstant-lower"),
                    orbit_meta=meta,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"generators[{i}]: {exc}") from exc
    diff = {}
    for src, row in (data.get("differential") or {}).items():
        entries = []
        # rows are [[target, scalar], ...] or {target: scalar}
        pairs = row.items() if isinstance(row, dict) else row
        for j, pair in enumerate(pairs):
            try:
                tgt, text = pair
                entries.append((str(tgt), parse(str(text))))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"differential[{src!r}][{j}]: {exc}") from exc
        diff[src] = entries
    ib = data.get("index_bounded")
    return WeightedComplex(gens, diff, data.get("coefficient_mode", "ring"), ib)


def complex_to_json(c: WeightedComplex) -> str:
    return json.dumps(complex_to_dict(c), indent=2, sort_keys=True)


def complex_from_json(text: str) -> WeightedComplex:
    return complex_from_dict(json.loads(text))
