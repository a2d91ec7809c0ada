"""Toy geometries as rays of weighted complexes, and the capacities computed from them.

Disk in the sphere: per copy, slice k has gamma_0..gamma_k in degree 0 and
beta_1..beta_k in degree -1 with ``d beta_{i+1} = T^D gamma_i + T^(1-D) gamma_{i+1}``.
The second copy sits one degree higher.  Every lower generator has an upper
mirror image whose action is pushed above the lower spectrum.

Staircase: each Reeb orbit ``(period, cz)`` contributes ``gamma_Max`` in degree
``-cz`` and ``gamma_min`` in degree ``-cz-1``, both of action ``-period``; the
Morse part lists constant generators ``(degree, action)``.  A ``gamma_Max`` one
degree below a constant hits it with weight ``T^(action gap)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .complex import (
    Chain,
    ChainMap,
    EquivariantComplex,
    Generator,
    WeightedComplex,
    action_subcomplex,
    default_epsilon,
    direct_sum,
    equivariantize,
    lowered,
    negative_quotient,
    prune_upper,
    scale_actions,
    split_u_id,
    u_id,
)
from .cubes import (
    LongExactSequenceReport,
    Ray,
    completed_class_vanishes,
    completed_map_ranks,
    completed_telescope_homology,
    les_from_ses,
    ray_direct_sum,
    slice_budget,
)
from .novikov import INF, ONE, T, to_fraction
from .reduction import Barcode

DEFAULT_TRUNCATION = 16


def _rat(q) -> str:
    if q == INF:
        return "inf"
    q = to_fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


# -- specs --------------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    variant: str
    delta: Optional[Fraction] = None
    reeb: Tuple[Tuple[Fraction, int], ...] = ()
    half_dim: Optional[int] = None
    morse_part: Tuple[Tuple[int, Fraction], ...] = ()
    parts: Tuple["ModelSpec", ...] = ()
    base: Optional["ModelSpec"] = None
    factor: Optional[Fraction] = None
    orbit_truncation: int = DEFAULT_TRUNCATION
    index_bounded: bool = True

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("invalid model spec: " + "; ".join(problems))

    def problems(self) -> List[str]:
        out = []
        if self.orbit_truncation < 1:
            out.append("orbit_truncation must be at least 1")
        if self.variant == "disk_in_sphere":
            if self.delta is None or not 0 < self.delta < 1:
                out.append("delta must lie in (0, 1)")
        elif self.variant == "staircase":
            if self.half_dim is None or self.half_dim < 1:
                out.append("half_dim must be a positive integer")
            if not self.reeb and not self.morse_part:
                out.append("staircase needs orbits or a Morse part")
            for p, _ in self.reeb:
                if p <= 0:
                    out.append(f"period {p} is not positive")
        elif self.variant == "disjoint_union":
            if not self.parts:
                out.append("disjoint_union needs parts")
        elif self.variant == "scaled":
            if self.base is None:
                out.append("scaled needs a base spec")
            if self.factor is None or self.factor <= 0:
                out.append("factor must be positive")
        else:
            out.append(f"unknown variant {self.variant!r}")
        return out


def disk(delta, orbit_truncation: int = DEFAULT_TRUNCATION, index_bounded: bool = True) -> ModelSpec:
    return ModelSpec("disk_in_sphere", delta=to_fraction(delta), orbit_truncation=orbit_truncation, index_bounded=index_bounded)


def staircase(
    reeb: Sequence[Tuple],
    half_dim: int,
    morse_part: Optional[Sequence[Tuple]] = None,
    orbit_truncation: int = DEFAULT_TRUNCATION,
    index_bounded: bool = True,
) -> ModelSpec:
    if morse_part is None:
        morse_part = [(-half_dim, 0)]
    return ModelSpec(
        "staircase",
        reeb=tuple((to_fraction(p), int(cz)) for p, cz in reeb),
        half_dim=int(half_dim),
        morse_part=tuple((int(d), to_fraction(a)) for d, a in morse_part),
        orbit_truncation=orbit_truncation,
        index_bounded=index_bounded,
    )


def disjoint_union(*parts: ModelSpec) -> ModelSpec:
    trunc = min(p.orbit_truncation for p in parts)
    return ModelSpec("disjoint_union", parts=tuple(parts), orbit_truncation=trunc, index_bounded=all(p.index_bounded for p in parts))


def scaled(base: ModelSpec, factor) -> ModelSpec:
    return ModelSpec("scaled", base=base, factor=to_fraction(factor), orbit_truncation=base.orbit_truncation, index_bounded=base.index_bounded)


def spec_to_dict(spec: ModelSpec) -> dict:
    out: dict = {"variant": spec.variant}
    if spec.variant == "disk_in_sphere":
        out["delta"] = _rat(spec.delta)
    elif spec.variant == "staircase":
        out["half_dim"] = spec.half_dim
        out["reeb"] = [[_rat(p), cz] for p, cz in spec.reeb]
        out["morse_part"] = [[d, _rat(a)] for d, a in spec.morse_part]
    elif spec.variant == "disjoint_union":
        out["parts"] = [spec_to_dict(p) for p in spec.parts]
    elif spec.variant == "scaled":
        out["base"] = spec_to_dict(spec.base)
        out["factor"] = _rat(spec.factor)
    out["orbit_truncation"] = spec.orbit_truncation
    out["index_bounded"] = spec.index_bounded
    return out


def spec_from_dict(data: dict, where: str = "$") -> ModelSpec:
    if not isinstance(data, dict):
        raise ValueError(f"{where}: model spec must be an object")
    variant = data.get("variant")
    trunc = int(data.get("orbit_truncation", DEFAULT_TRUNCATION))
    bounded = bool(data.get("index_bounded", True))
    try:
        if variant == "disk_in_sphere":
            return disk(Fraction(str(data["delta"])), trunc, bounded)
        if variant == "staircase":
            n = int(data["half_dim"])
            reeb = [(Fraction(str(p)), int(cz)) for p, cz in data.get("reeb", [])]
            morse = data.get("morse_part")
            morse = None if morse is None else [(int(d), Fraction(str(a))) for d, a in morse]
            return staircase(reeb, n, morse, trunc, bounded)
        if variant == "disjoint_union":
            parts = tuple(spec_from_dict(p, f"{where}.parts[{i}]") for i, p in enumerate(data["parts"]))
            return ModelSpec("disjoint_union", parts=parts, orbit_truncation=trunc if "orbit_truncation" in data else min(p.orbit_truncation for p in parts), index_bounded=bounded)
        if variant == "scaled":
            base = spec_from_dict(data["base"], f"{where}.base")
            return ModelSpec("scaled", base=base, factor=Fraction(str(data["factor"])), orbit_truncation=trunc if "orbit_truncation" in data else base.orbit_truncation, index_bounded=bounded)
    except KeyError as exc:
        raise ValueError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ZeroDivisionError) as exc:
        raise ValueError(f"{where}: {exc}") from None
    except ValueError as exc:
        raise ValueError(f"{where}: {exc}") from None
    raise ValueError(f"{where}.variant: unknown variant {variant!r}")


def spec_from_json(text: str) -> ModelSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return spec_from_dict(data)


# -- builders -----------------------------------------------------------------------------

def _upper_offset(k: int) -> Fraction:
    return Fraction(2 * k + 2)


def _with_uppers(lower: WeightedComplex, offset: Fraction) -> WeightedComplex:
    """Add an upper mirror ``up.x`` of every lower generator, actions raised by ``offset``."""
    gens = list(lower.generators)
    diff = {s: dict(row) for s, row in lower.differential.items()}
    for g in lower.generators:
        gens.append(replace(g, id=f"up.{g.id}", action=g.action + offset, kind="upper"))
    for s, row in lower.differential.items():
        diff[f"up.{s}"] = {f"up.{t}": v for t, v in row.items()}
    return WeightedComplex(gens, diff, lower.coefficient_mode, lower.index_bounded)


def _upper_aware_map(a: WeightedComplex, b: WeightedComplex, k: int) -> ChainMap:
    w = T(_upper_offset(k + 1) - _upper_offset(k))
    entries = {}
    for g in a.generators:
        if g.id not in b.by_id:
            continue
        entries[g.id] = {g.id: w if g.kind == "upper" else ONE}
    return ChainMap(a, b, entries)


def _disk_copy(delta: Fraction, k: int, shift: int) -> WeightedComplex:
    step = 1 - 2 * delta
    gens = [Generator("g0", shift, 0, "constant-lower")]
    gens += [Generator(f"g{i}", shift, i * step) for i in range(1, k + 1)]
    gens += [Generator(f"b{i}", shift - 1, (i - 1) * step - delta) for i in range(1, k + 1)]
    diff = {f"b{i}": {f"g{i - 1}": T(delta), f"g{i}": T(1 - delta)} for i in range(1, k + 1)}
    return WeightedComplex(gens, diff)


def _disk_slice(delta: Fraction, k: int, bounded: bool) -> WeightedComplex:
    lower = direct_sum(_disk_copy(delta, k, 0), _disk_copy(delta, k, 1), tags=["s", "n"])
    lower = WeightedComplex(lower.generators, lower.differential, "ring", bounded)
    return _with_uppers(lower, _upper_offset(k))


def _staircase_slice(spec: ModelSpec, k: int) -> WeightedComplex:
    periods = sorted({p for p, _ in spec.reeb})
    cutoff = periods[min(k, len(periods)) - 1] if periods else None
    gens, consts = [], []
    for i, (deg, act) in enumerate(spec.morse_part):
        gid = f"m{i}"
        gens.append(Generator(gid, deg, act, "constant-lower"))
        consts.append((gid, deg, act))
    diff = {}
    for j, (p, cz) in enumerate(spec.reeb):
        if cutoff is None or p > cutoff:
            continue
        gmax = Generator(f"o{j}.max", -cz, -p, "nonconstant-lower", (p, cz))
        gmin = Generator(f"o{j}.min", -cz - 1, -p, "nonconstant-lower", (p, cz))
        gens += [gmax, gmin]
        row = {gid: T(act + p) for gid, deg, act in consts if deg == -cz + 1}
        if row:
            diff[gmax.id] = row
    lower = WeightedComplex(gens, diff, "ring", spec.index_bounded)
    return _with_uppers(lower, _staircase_offset(spec, k))


def _staircase_offset(spec: ModelSpec, k: int) -> Fraction:
    span = max([p for p, _ in spec.reeb] + [abs(a) for _, a in spec.morse_part] + [1])
    return 2 * span + 2 * k


@dataclass
class Model:
    """A built model: the ray of complexes and the fundamental cycle (ids of slice 1)."""

    spec: ModelSpec
    ray: Ray
    fundamental: Chain
    morse_ids: List[str]
    stable_after: Optional[int]


@lru_cache(maxsize=64)
def build(spec: ModelSpec) -> Model:
    """Ray of complexes for ``spec`` (uppers included) and its fundamental class.

    Cached per spec, so repeated queries share slices and reductions.
    """
    if spec.variant == "disk_in_sphere":
        d, bounded = spec.delta, spec.index_bounded
        ray = Ray(lambda k: _disk_slice(d, k, bounded), lambda k, a, b: _upper_aware_map(a, b, k), spec.orbit_truncation, "disk")
        fund = {"s:g0": ONE, "n:g0": ONE}
        return Model(spec, ray, fund, ["s:g0", "n:g0"], None)
    if spec.variant == "staircase":
        n_periods = len({p for p, _ in spec.reeb})
        ray = Ray(
            lambda k: _staircase_slice(spec, k),
            lambda k, a, b: _staircase_map(spec, a, b, k),
            spec.orbit_truncation,
            "staircase",
        )
        # no class is born after the last period (uppers only decay)
        consts = [(f"m{i}", d) for i, (d, _) in enumerate(spec.morse_part)]
        if not consts:
            raise ValueError("staircase without a Morse part has no fundamental class")
        top = min(d for _, d in consts)
        fund_id = sorted(g for g, d in consts if d == top)[0]
        stable = max(n_periods, 1)
        return Model(spec, ray, {fund_id: ONE}, [g for g, _ in consts], stable)
    if spec.variant == "disjoint_union":
        models = [build(p) for p in spec.parts]
        tags = [f"p{i}" for i in range(len(models))]
        ray = ray_direct_sum([m.ray for m in models], tags)
        fund = {f"{t}:{g}": s for m, t in zip(models, tags) for g, s in m.fundamental.items()}
        morse = [f"{t}:{g}" for m, t in zip(models, tags) for g in m.morse_ids]
        stables = [m.stable_after for m in models]
        stable = max(stables) if all(s is not None for s in stables) else None
        return Model(spec, ray, fund, morse, stable)
    if spec.variant == "scaled":
        inner = build(spec.base)
        f = spec.factor

        def scale_map(m, a, b):
            return ChainMap(a, b, {s: {t: v.scale(f) for t, v in row.items()} for s, row in m.entries.items()})

        ray = inner.ray.transform(lambda c: scale_actions(c, f), scale_map, "scaled")
        return Model(spec, ray, dict(inner.fundamental), list(inner.morse_ids), inner.stable_after)
    raise ValueError(f"unknown variant {spec.variant!r}")


def _staircase_map(spec: ModelSpec, a: WeightedComplex, b: WeightedComplex, k: int) -> ChainMap:
    w = T(_staircase_offset(spec, k + 1) - _staircase_offset(spec, k))
    entries = {}
    for g in a.generators:
        if g.id in b.by_id:
            entries[g.id] = {g.id: w if g.kind == "upper" else ONE}
    return ChainMap(a, b, entries)


def working_ray(model: Model) -> Ray:
    """The ray used for computations: uppers pruned when the boundary is index-bounded."""
    model.ray.stable_after = model.stable_after
    if not model.spec.index_bounded:
        return model.ray
    key = ("working",)
    if key not in model.ray.memo:
        model.ray.memo.setdefault(key, model.ray.transform(prune_upper))
    return model.ray.memo[key]


def equivariant_ray(ray: Ray, N: int) -> Ray:
    def lift(f: ChainMap, a: WeightedComplex, b: WeightedComplex) -> ChainMap:
        entries = {}
        for k in range(N + 1):
            for s, row in f.entries.items():
                entries[u_id(k, s)] = {u_id(k, t): v for t, v in row.items()}
        return ChainMap(a, b, entries)

    key = ("equivariant", N)
    if key not in ray.memo:
        # no higher maps, so u (x) d squares to zero whenever d does
        ray.memo.setdefault(key, ray.transform(lambda c: EquivariantComplex(c, N).complex, lift))
    return ray.memo[key]


def _budget(spec: ModelSpec, budget: Optional[int]) -> int:
    b = slice_budget() if budget is None else budget
    return min(b, spec.orbit_truncation)


# -- symplectic cohomology --------------------------------------------------------------------

def sh(spec: ModelSpec, r=1, coefficients: str = "lambda", budget: Optional[int] = None) -> Barcode:
    model = build(spec)
    bc = completed_telescope_homology(working_ray(model), r, coefficients, _budget(spec, budget))
    return _label(spec, bc)


def sh_equivariant(spec: ModelSpec, r=1, N: int = 0, coefficients: str = "lambda", budget: Optional[int] = None) -> Barcode:
    model = build(spec)
    ray = equivariant_ray(working_ray(model), N)
    bc = completed_telescope_homology(ray, r, coefficients, _budget(spec, budget))
    return _label(spec, bc)


DISK_CONVENTION = "disk copies sit in degrees 0 and 1 (convention: see docs); totals do not depend on it"


def _has_disk(spec: ModelSpec) -> bool:
    if spec.variant == "disk_in_sphere":
        return True
    if spec.variant == "scaled":
        return _has_disk(spec.base)
    return spec.variant == "disjoint_union" and any(_has_disk(p) for p in spec.parts)


def _label(spec: ModelSpec, bc: Barcode) -> Barcode:
    if _has_disk(spec):
        bc.meta["convention"] = DISK_CONVENTION
    return bc


def filtered_ray(ray: Ray, L=None, negative: bool = False, epsilon=None) -> Ray:
    """``CF^{>L}`` slice-wise; with ``negative`` the quotient by the part above ``-epsilon``."""

    def fn(c):
        sub = action_subcomplex(c, L)
        if negative:
            sub = negative_quotient(sub, epsilon)
        return sub

    key = ("filtered", L, negative, epsilon)
    if key not in ray.memo:
        ray.memo.setdefault(key, ray.transform(fn))
    return ray.memo[key]


def sh_negative(spec: ModelSpec, L=None, r=1, N: Optional[int] = None, epsilon=None, budget: Optional[int] = None) -> Barcode:
    """Completed homology of the negative part ``CF^{-,>L}`` (equivariant when ``N`` is given)."""
    model = build(spec)
    ray = working_ray(model)
    eps = epsilon if epsilon is not None else model_epsilon(model)
    ray = filtered_ray(ray, L, True, eps)
    if N is not None:
        ray = equivariant_ray(ray, N)
    return completed_telescope_homology(ray, r, "lambda", _budget(spec, budget))


def model_epsilon(model: Model, upto: Optional[int] = None) -> Fraction:
    """Half the least nonzero |action| of nonconstant lower generators over the first slices."""
    k = upto or min(model.spec.orbit_truncation, 4)
    ray = working_ray(model)
    return min(default_epsilon(ray.slice(j)) for j in range(1, k + 1))


def is_dynamically_convex(spec: ModelSpec) -> bool:
    if spec.variant == "staircase":
        return all(cz >= spec.half_dim + 1 for _, cz in spec.reeb)
    if spec.variant == "scaled":
        return is_dynamically_convex(spec.base)
    if spec.variant == "disjoint_union":
        return all(is_dynamically_convex(p) for p in spec.parts)
    raise ValueError("dynamical convexity is defined for staircase models")


# -- delta -----------------------------------------------------------------------------------

def delta_map(spec: ModelSpec, r=1, N: Optional[int] = None, L=None, slice_index: Optional[int] = None, coefficients: str = "ring") -> LongExactSequenceReport:
    """Exact sequence of ``0 -> CF^{>-eps} -> CF^{>L} -> CF^{-,>L} -> 0`` on one slice; its
    connecting map is the boundary map from the negative part to the Morse part."""
    model = build(spec)
    ray = working_ray(model)
    k = slice_index or min(spec.orbit_truncation, 4)
    c = action_subcomplex(ray.slice(k), L)
    eps = model_epsilon(model)
    top = action_subcomplex(c, -eps)
    quo = negative_quotient(c, eps)
    if N is not None:
        c, top, quo = (equivariantize(x, N).complex for x in (c, top, quo))
    inc = ChainMap(top, c, {g.id: {g.id: 1} for g in top.generators})
    proj = ChainMap(c, quo, {g.id: {g.id: 1} for g in quo.generators})
    return les_from_ses(inc, proj, r, coefficients)


def connecting_images(spec: ModelSpec, L=None, slice_index: Optional[int] = None) -> Dict[str, Chain]:
    """Chain-level boundary map: for each cycle of the negative quotient basis, ``d`` of its lift."""
    model = build(spec)
    ray = working_ray(model)
    k = slice_index or min(spec.orbit_truncation, 4)
    c = action_subcomplex(ray.slice(k), L)
    eps = model_epsilon(model)
    quo = negative_quotient(c, eps)
    from .reduction import Reduction

    red = Reduction(quo)
    out = {}
    for q in red.degrees():
        for i, z in enumerate(red.kernel_basis(q)):
            out[f"{q}.{i}"] = {g: s for g, s in c.d(z).items() if g not in quo.by_id}
    return out


# -- capacities -------------------------------------------------------------------------------

@dataclass
class CapacityReport:
    value: object  # Fraction or INF
    status: str  # "finite" or "stable at +inf up to budget"
    threshold: Optional[Fraction]
    witness: Optional[dict]
    precision: Fraction
    slices: int
    budget: int
    u_truncation: Optional[int] = None
    k: Optional[int] = None
    kind: str = "csh"

    @property
    def finite(self) -> bool:
        return self.value != INF

    def to_dict(self, verbose: bool = False) -> dict:
        out = {
            "kind": self.kind,
            "value": _rat(self.value),
            "status": self.status,
            "threshold": None if self.threshold is None else _rat(self.threshold),
            "precision": _rat(self.precision),
            "slices": self.slices,
            "budget": self.budget,
        }
        if self.k is not None:
            out["k"] = self.k
        if self.u_truncation is not None:
            out["u_truncation"] = self.u_truncation
        if verbose:
            out["witness"] = self.witness
        elif self.witness is not None:
            # chain-level primitives only with verbose
            w = dict(self.witness)
            w["components"] = [{k: v for k, v in c.items() if k != "primitive"} for c in w.get("components", [])]
            out["witness"] = w
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CapacityReport":
        def num(x):
            return INF if x == "inf" else Fraction(x)

        return cls(
            value=num(data["value"]),
            status=data["status"],
            threshold=None if data.get("threshold") is None else num(data["threshold"]),
            witness=data.get("witness"),
            precision=Fraction(data["precision"]),
            slices=int(data["slices"]),
            budget=int(data["budget"]),
            u_truncation=data.get("u_truncation"),
            k=data.get("k"),
            kind=data.get("kind", "csh"),
        )


def _split_by_degree(c: WeightedComplex, chain: Chain) -> List[Chain]:
    parts: Dict[int, Chain] = {}
    for g, s in chain.items():
        parts.setdefault(c.degree_of(g), {})[g] = s
    return [parts[q] for q in sorted(parts)]


def _spectrum(ray: Ray, k: int, epsilon: Fraction) -> List[Fraction]:
    return sorted({g.action for g in ray.slice(k).generators if g.action <= -epsilon})


def _candidates(spectrum: List[Fraction], epsilon: Fraction) -> List[Fraction]:
    pts = spectrum + [-epsilon]
    cands = [pts[0] - 1]
    cands += [(a + b) / 2 for a, b in zip(pts, pts[1:])]
    return cands


def _scan(
    ray: Ray,
    targets: Callable[[int], Tuple[Chain, List[Chain], WeightedComplex]],
    spectrum: List[Fraction],
    epsilon: Fraction,
    r,
    budget: int,
) -> Tuple[Optional[Fraction], Optional[dict], int]:
    """Largest candidate level L at which the target class vanishes in ``CF^{>L}``."""
    cands = _candidates(spectrum, epsilon)
    cache = {}

    def test(i):
        if i in cache:
            return cache[i]
        L = cands[i]
        sub = filtered_ray(ray, L)
        sub.stable_after = ray.stable_after
        x, others, c1 = targets(0)
        ok = True
        slices = 1
        wit = []
        for part in _split_by_degree(c1, x):
            deg = c1.degree_of(next(iter(part)))
            same = [o for o in others if o and c1.degree_of(next(iter(o))) == deg]
            verdict = completed_class_vanishes(sub, part, r, same, budget=budget)
            slices = max(slices, verdict.slices)
            if not verdict.vanishes:
                ok = False
                break
            wit.append(verdict.witness)
        cache[i] = (ok, wit, slices)
        return cache[i]

    lo_ok, _, used = test(0)
    if not lo_ok:
        return None, None, used
    lo, hi = 0, len(cands)  # cands[lo] vanishes; search the last vanishing index
    while hi - lo > 1:
        mid = (lo + hi) // 2
        ok, _, s = test(mid)
        used = max(used, s)
        if ok:
            lo = mid
        else:
            hi = mid
    ok, wit, s = test(lo)
    L = cands[lo]
    return L, {"level": _rat(L), "components": wit}, max(used, s)


def _next_spectrum_value(L: Fraction, spectrum: List[Fraction], epsilon: Fraction) -> Fraction:
    above = [a for a in spectrum + [-epsilon] if a > L]
    return min(above)


def _scan_setup(model: Model, ray: Ray, budget: int):
    eps = model_epsilon(model)
    k_spec = min(budget, model.spec.orbit_truncation)
    if model.stable_after is not None:
        k_spec = min(k_spec, max(model.stable_after, 1))
    spectrum = _spectrum(ray, k_spec, eps)
    return eps, spectrum


def csh(spec: ModelSpec, r=1, budget: Optional[int] = None) -> CapacityReport:
    """``-sup{L : j_L(fundamental) = 0}`` with the class tested in completed ``H(CF^{>L})``."""
    r = to_fraction(r)
    b = _budget(spec, budget)
    model = build(spec)
    ray = working_ray(model)
    eps, spectrum = _scan_setup(model, ray, b)
    c1 = ray.slice(1)
    L, wit, used = _scan(ray, lambda _: (model.fundamental, [], c1), spectrum, eps, r, b)
    if L is None:
        return CapacityReport(INF, "stable at +inf up to budget", None, None, r, used, b)
    top = _next_spectrum_value(L, spectrum, eps)
    return CapacityReport(-top, "finite", top, wit, r, used, b)


def cgh(spec: ModelSpec, k: int = 1, r=1, N: Optional[int] = None, budget: Optional[int] = None) -> CapacityReport:
    """Equivariant capacity of index k.

    With ``U`` commuting with the boundary map and the kernel of ``j^{S1}_L``
    equal to the image of that boundary map, the defining condition becomes:
    some class ``z`` of the Morse part with ``U^(k-1) z = fundamental (x) [pt]``
    vanishes in ``H(CF^{S1,>L})``.  Such ``z`` are ``fundamental (x) u^(k-1)``
    plus Morse classes times lower powers of ``u``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    N = k - 1 if N is None else N
    if N < k - 1:
        raise ValueError("u-truncation must be at least k - 1")
    r = to_fraction(r)
    b = _budget(spec, budget)
    model = build(spec)
    base_ray = working_ray(model)
    ray = equivariant_ray(base_ray, N)
    ray.stable_after = base_ray.stable_after
    eps, spectrum = _scan_setup(model, base_ray, b)
    c1 = ray.slice(1)
    x = {u_id(k - 1, g): s for g, s in model.fundamental.items()}
    others = []
    for j in range(k - 1):
        for m in model.morse_ids:
            others.append({u_id(j, m): ONE})
    L, wit, used = _scan(ray, lambda _: (x, others, c1), spectrum, eps, r, b)
    if L is None:
        return CapacityReport(INF, "stable at +inf up to budget", None, None, r, used, b, N, k, "cgh")
    top = _next_spectrum_value(L, spectrum, eps)
    return CapacityReport(-top, "finite", top, wit, r, used, b, N, k, "cgh")


# -- Gysin, spectral sequence --------------------------------------------------------------------

def gysin_check(spec: ModelSpec, N: int = 2, r=1, levels: Sequence = (None,), slice_index: Optional[int] = None, coefficients: str = "ring") -> Dict[str, LongExactSequenceReport]:
    """Exact sequences of ``0 -> CF -> CF^{S1}_N -> CF^{S1}_{N-1}[2] -> 0`` for each level."""
    model = build(spec)
    ray = working_ray(model)
    k = slice_index or min(spec.orbit_truncation, 3)
    out = {}
    for L in levels:
        c = action_subcomplex(ray.slice(k), L)
        ec = equivariantize(c, N)
        low = lowered(ec)
        out["-inf" if L is None else _rat(L)] = les_from_ses(ec.base_inclusion(), ec.u_map(low), r, coefficients)
    return out


def _u_power(gid: str) -> int:
    return split_u_id(gid)[0]


def sh_spectral_pages(spec: ModelSpec, N: int, r=1, max_page: int = 2, budget: Optional[int] = None) -> Dict[int, Dict[Tuple[int, int], int]]:
    """Pages of the u-filtration spectral sequence on completed homology.

    ``E_s^p`` is the image of ``H(G_p/G_{p-s})`` in ``H(G_{p+s-1}/G_{p-1})``; keys are
    ``(p, q)`` with q the base degree; page ``0`` holds the limit page.
    """
    b = _budget(spec, budget)
    model = build(spec)
    base = working_ray(model)
    ray = equivariant_ray(base, N)
    ray.stable_after = base.stable_after
    pages = {}
    for s in list(range(1, max_page + 1)) + [N + 2]:
        out = {}
        for p in range(N + 1):
            def band(c, lo, hi):
                return c.restrict(g.id for g in c.generators if lo < _u_power(g.id) <= hi)

            X = ray.transform(lambda c, p=p, s=s: band(c, p - s, p))
            Y = ray.transform(lambda c, p=p, s=s: band(c, p - 1, p + s - 1))
            X.stable_after = Y.stable_after = ray.stable_after

            def phi(K, X=X, Y=Y, p=p):
                a, bb = X.slice(K), Y.slice(K)
                return ChainMap(a, bb, {g.id: {g.id: 1} for g in a.generators if _u_power(g.id) == p})

            ranks = completed_map_ranks(X, Y, phi, r, b)
            for t, n in ranks.items():
                if n:
                    out[(p, t + 2 * p)] = n
        pages[0 if s == N + 2 else s] = out
    return pages


# -- axiom checks ----------------------------------------------------------------------------------

def _max_value(values):
    return INF if any(v == INF for v in values) else max(values)


def disjoint_capacity_check(specA: ModelSpec, specB: ModelSpec, k: int = 1, r=1, budget: Optional[int] = None) -> dict:
    union = disjoint_union(specA, specB)
    a, bb, u = csh(specA, r, budget), csh(specB, r, budget), csh(union, r, budget)
    ga, gb, gu = cgh(specA, k, r, None, budget), cgh(specB, k, r, None, budget), cgh(union, k, r, None, budget)
    return {
        "csh": {"A": _rat(a.value), "B": _rat(bb.value), "union": _rat(u.value), "equal": u.value == _max_value([a.value, bb.value])},
        "cgh": {"A": _rat(ga.value), "B": _rat(gb.value), "union": _rat(gu.value), "equal": gu.value == _max_value([ga.value, gb.value])},
        "holds": u.value == _max_value([a.value, bb.value]) and gu.value == _max_value([ga.value, gb.value]),
    }


def restriction_logic_check(
    specA: ModelSpec,
    specB: ModelSpec,
    restriction: Callable[[int, WeightedComplex, WeightedComplex], ChainMap],
    r=1,
    budget: Optional[int] = None,
) -> dict:
    """Consequences of a restriction ``SH(A) -> SH(B)`` sending fundamental class to fundamental class.

    Vanishing propagates forward, so ``csh(B) <= csh(A)``; the reverse inequality
    (hence equality) is concluded only when the restriction is injective.
    """
    ma, mb = build(specA), build(specB)
    ra, rb = working_ray(ma), working_ray(mb)
    b = min(_budget(specA, budget), _budget(specB, budget))
    f1 = restriction(1, ra.slice(1), rb.slice(1))
    maps_fund = f1(ma.fundamental) == mb.fundamental
    ranks = completed_map_ranks(ra, rb, lambda K: restriction(K, ra.slice(K), rb.slice(K)), r, b)
    src = completed_telescope_homology(ra, r, "lambda", b)
    injective = all(ranks.get(q, 0) == d.infinite for q, d in src.degrees.items())
    ca, cb = csh(specA, r, budget), csh(specB, r, budget)
    propagation = cb.value <= ca.value if maps_fund else None
    return {
        "csh_source": _rat(ca.value),
        "csh_target": _rat(cb.value),
        "maps_fundamental": maps_fund,
        "injective": injective,
        "propagation_holds": propagation,
        "equality_concluded": bool(maps_fund and injective),
        "equal": ca.value == cb.value,
        "consistent": bool(propagation) and (not (maps_fund and injective) or ca.value == cb.value),
    }
