"""Bounded derivation search and the indicator-obstruction certificate.

`derive` asks whether an adversary can assemble a target message from a
knowledge set using the strand repertoire: splitting concatenations,
decrypting with available keys, emitting its own basic values, and
building arbitrary algebraic combinations.  Construction is searched
goal-directedly: group-element targets are regressed through exact
division of their exponent polynomials by small derivable exponents and
by known group powers, with canonical-form deduplication.  Success
returns a replayable web; exhausting the bounds is inconclusive.

`indicator_obstruction` is the complementary certificate: if the target
carries an indicator vector that no received message carries, no web at
all can produce it, regardless of bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional

from .terms import (
    ADD,
    App,
    BOX,
    CONCAT,
    Const,
    ENC,
    EXP,
    GID,
    GOP,
    HASH,
    INV,
    INVE,
    MUL,
    NEG,
    ONE,
    Sort,
    Term,
    Var,
    ZERO,
    app,
    exp,
    inve,
    is_basic,
    mul,
    pretty,
)
from .rewrite import monomial_atoms, normal_form, normalize
from .indicator import IndicatorBasis, indicators, is_free, render_vector
from .strands import AdversaryWeb, KnowledgeSet, WebStrand, _emittable, inverse_key


@dataclass(frozen=True)
class Bounds:
    max_depth: int = 6
    max_term_size: int = 24  # atom occurrences in a normal form

    def __post_init__(self):
        if self.max_depth <= 0 or self.max_term_size <= 0:
            raise ValueError("bounds must be positive")


def atom_size(t: Term) -> int:
    """Normalized size measured in atom occurrences (boxes count once)."""
    nf = normalize(t)
    if nf.g_factors is not None:
        total = 0
        for f in nf.g_factors:
            total += 1 if f.exponent is None else max(
                1, len(monomial_atoms(f.exponent))
            )
        return max(total, 1)
    if nf.e_monomials is not None:
        return max(
            sum(max(1, len(monomial_atoms(m.monomial))) for m in nf.e_monomials), 1
        )
    if isinstance(nf.term, App):
        return sum(atom_size(a) for a in nf.term.args)
    return 1


# ---------------------------------------------------------------------------
# Exponent polynomials with Laurent monomials over opaque atoms

Mono = tuple  # sorted tuple of (atom: Term, exponent: int), exponents non-zero


def _mono_sorted(items) -> Mono:
    return tuple(sorted(((a, k) for a, k in items if k != 0), key=lambda p: p[0].key()))


def mono_of_term(m: Term) -> Mono:
    counts: dict = {}
    for atom, inverted in monomial_atoms(m):
        counts[atom] = counts.get(atom, 0) + (-1 if inverted else 1)
    return _mono_sorted(counts.items())


def mono_mul(a: Mono, b: Mono) -> Mono:
    counts = dict(a)
    for atom, k in b:
        counts[atom] = counts.get(atom, 0) + k
    return _mono_sorted(counts.items())


def mono_div(a: Mono, b: Mono) -> Mono:
    counts = dict(a)
    for atom, k in b:
        counts[atom] = counts.get(atom, 0) - k
    return _mono_sorted(counts.items())


def poly_of_e(e: Term) -> dict:
    out: dict = {}
    for m in normalize(e).e_monomials:
        mono = mono_of_term(m.monomial)
        out[mono] = out.get(mono, 0) + m.coefficient
        if out[mono] == 0:
            del out[mono]
    return out


def poly_div(P: dict, Q: dict) -> Optional[dict]:
    """Exact quotient of Laurent polynomials with integer coefficients."""
    if not Q:
        return None
    universe = sorted(
        {a for m in list(P) + list(Q) for a, _ in m}, key=lambda t: t.key()
    )
    index = {a: i for i, a in enumerate(universe)}

    def dense(m: Mono):
        v = [0] * len(universe)
        for a, k in m:
            v[index[a]] = k
        return tuple(v)

    lead_q = max(Q, key=dense)
    R: dict = {}
    W = dict(P)
    for _ in range(500):
        if not W:
            return R
        lead_w = max(W, key=dense)
        c = Fraction(W[lead_w], Q[lead_q])
        if c.denominator != 1:
            return None
        m = mono_div(lead_w, lead_q)
        R[m] = R.get(m, 0) + int(c)
        for qm, qc in Q.items():
            key = mono_mul(m, qm)
            W[key] = W.get(key, 0) - int(c) * qc
            if W[key] == 0:
                del W[key]
    return None


def e_term_of_poly(P: dict) -> Optional[Term]:
    """Rebuild the E-term of a polynomial (None if uninvertible atoms)."""
    if not P:
        return ZERO
    monomials = []
    for m, c in sorted(P.items(), key=lambda kv: _mono_key(kv[0])):
        factors = []
        for atom, k in m:
            if k < 0 and atom.sort is not Sort.NZE:
                return None
            piece = atom if k > 0 else inve(atom)
            factors.extend([piece] * abs(k))
        body = ONE if not factors else (factors[0] if len(factors) == 1 else mul(*factors))
        for _ in range(abs(c)):
            monomials.append(app(NEG, body) if c < 0 else body)
    return monomials[0] if len(monomials) == 1 else app(ADD, *monomials)


def _mono_key(m: Mono):
    return tuple((a.key(), k) for a, k in m)


def _poly_weight(P: dict) -> int:
    return sum(abs(c) * max(1, sum(abs(k) for _, k in m)) for m, c in P.items())


def _quotient_admissible(R: dict, P: dict) -> bool:
    """A useful quotient is strictly smaller and inverts no fresh atoms."""
    if _poly_weight(R) >= _poly_weight(P):
        return False
    neg_in_p = {a for m in P for a, k in m if k < 0}
    return all(a in neg_in_p for m in R for a, k in m if k < 0)


def g_term_of(base: Term, P: dict) -> Term:
    if not P:
        return GID
    factors = []
    for m, c in sorted(P.items(), key=lambda kv: _mono_key(kv[0])):
        e = e_term_of_poly({m: 1})
        piece = base if e is ONE else exp(base, e)
        if c < 0:
            piece = app(INV, piece)
        factors.extend([piece] * abs(c))
    return factors[0] if len(factors) == 1 else app(GOP, *factors)


# ---------------------------------------------------------------------------
# Recipes: a derived term together with the strands that produce it


@dataclass(frozen=True)
class Recipe:
    term: Term
    strands: tuple  # WebStrand, in usable order


def _apply(op_name: str, variant: str, *parts: Recipe) -> Recipe:
    from .terms import OPS

    inputs = tuple(r.term for r in parts)
    if variant == "encrypt":
        out = normal_form(app(ENC, inputs[1], inputs[0]))
    else:
        out = normal_form(app(OPS[op_name], *inputs))
    strand = WebStrand(variant, inputs, (out,), op_name)
    strands: list = []
    for r in parts:
        strands.extend(r.strands)
    strands.append(strand)
    return Recipe(out, tuple(strands))


def _emit(t: Term) -> Recipe:
    return Recipe(t, (WebStrand("emit", (), (t,)),))


class Deriver:
    def __init__(self, knowledge: KnowledgeSet, bounds: Bounds):
        self.k = knowledge
        self.bounds = bounds
        self.closure: dict = {}
        self._memo: dict = {}
        self._divisors: Optional[list] = None
        self._saturate()

    # -- knowledge closure under destructors ------------------------------

    def _learn(self, t: Term, recipe: Recipe, queue: list):
        if t not in self.closure:
            self.closure[t] = recipe
            queue.append(t)

    def _saturate(self):
        queue: list = []
        for t in self.k.received:
            self._learn(t, Recipe(t, ()), queue)
        for t in self.k.emitted_basics:
            self._learn(t, _emit(t), queue)
        while queue:
            t = queue.pop()
            recipe = self.closure[t]
            if isinstance(t, App) and t.op is CONCAT:
                strand = WebStrand("destruct", (t,), t.args)
                for part in t.args:
                    self._learn(part, Recipe(part, recipe.strands + (strand,)), queue)
            if isinstance(t, App) and t.op is ENC:
                body, key = t.args
                kinv = inverse_key(key)
                hit = self.closure.get(kinv)
                if hit is not None:
                    strand = WebStrand("decrypt", (kinv, t), (body,))
                    self._learn(
                        body,
                        Recipe(body, hit.strands + recipe.strands + (strand,)),
                        queue,
                    )
            # fresh keys may unlock earlier ciphertexts
            for u in list(self.closure):
                if isinstance(u, App) and u.op is ENC and inverse_key(u.args[1]) is t:
                    strand = WebStrand("decrypt", (t, u), (u.args[0],))
                    self._learn(
                        u.args[0],
                        Recipe(
                            u.args[0],
                            recipe.strands + self.closure[u].strands + (strand,),
                        ),
                        queue,
                    )

    # -- public entry ------------------------------------------------------

    def derive(self, target: Term) -> Optional[AdversaryWeb]:
        recipe = self._msg(normal_form(target), self.bounds.max_depth)
        if recipe is None:
            return None
        seen = set()
        ordered = []
        for s in recipe.strands:
            if s not in seen:
                seen.add(s)
                ordered.append(s)
        return AdversaryWeb(tuple(ordered), recipe.term)

    # -- recursive regression ---------------------------------------------

    def _msg(self, t: Term, d: int) -> Optional[Recipe]:
        key = ("msg", t, d)
        if key in self._memo:
            return self._memo[key]
        self._memo[key] = None  # cut cycles
        out = self._msg_inner(t, d)
        self._memo[key] = out
        return out

    def _msg_inner(self, t: Term, d: int) -> Optional[Recipe]:
        hit = self.closure.get(t)
        if hit is not None:
            return hit
        if d <= 0:
            return None
        if isinstance(t, App) and t.op is CONCAT:
            left = self._msg(t.args[0], d - 1)
            right = self._msg(t.args[1], d - 1)
            if left and right:
                return _apply("concat", "construct", left, right)
            return None
        if isinstance(t, App) and t.op is ENC:
            body = self._msg(t.args[0], d - 1)
            key = self._msg(t.args[1], d - 1)
            if body and key:
                return _apply("enc", "encrypt", key, body)
            return None
        if isinstance(t, App) and t.op is HASH:
            arg = self._msg(t.args[0], d - 1)
            if arg:
                return _apply("h", "construct", arg)
            return None
        if _emittable(t, self.k):
            return _emit(t)
        if t.sort is Sort.G:
            return self._group(t, d)
        if t.sort in (Sort.E, Sort.NZE):
            return self._exponent(poly_of_e(t), d)
        return None

    def _group(self, t: Term, d: int) -> Optional[Recipe]:
        if t is GID:
            return _emit(GID)
        if atom_size(t) > self.bounds.max_term_size:
            return None
        by_base: dict = {}
        order: list = []
        for f in normalize(t).g_factors:
            P = by_base.setdefault(f.base, {})
            if f.base not in order:
                order.append(f.base)
            mono = () if f.exponent is None else mono_of_term(f.exponent)
            P[mono] = P.get(mono, 0) + f.sign
        pieces = []
        budget = d if len(order) == 1 else d - 1
        for v in order:
            P = {m: c for m, c in by_base[v].items() if c != 0}
            r = self._power(v, P, budget)
            if r is None:
                return None
            pieces.append(r)
        out = pieces[0]
        for r in pieces[1:]:
            out = _apply("gop", "construct", out, r)
        return out

    def _power(self, v: Var, P: dict, d: int) -> Optional[Recipe]:
        t = normal_form(g_term_of(v, P))
        key = ("pow", t, d)
        if key in self._memo:
            return self._memo[key]
        self._memo[key] = None
        out = self._power_inner(v, P, t, d)
        self._memo[key] = out
        return out

    def _power_inner(self, v, P, t, d) -> Optional[Recipe]:
        hit = self.closure.get(t)
        if hit is not None:
            return hit
        if not P:
            return _emit(GID)
        if d <= 0:
            return None
        # direct: base and exponent both derivable
        base = self.closure.get(v) or (_emit(v) if _emittable(v, self.k) else None)
        if base is not None:
            if P == {(): 1}:
                return base
            e = self._exponent(P, d - 1)
            if e is not None:
                return _apply("exp", "construct", base, e)
        # division by a known power of the same base
        for u, u_recipe in self._single_base_powers(v):
            Q = self._g_poly(u)
            if Q == P:
                continue
            R = poly_div(P, Q)
            if R is not None and _quotient_admissible(R, P):
                e = self._exponent(R, d - 1)
                if e is not None:
                    return _apply("exp", "construct", u_recipe, e)
        # division by a small derivable exponent built from the goal's atoms
        goal_atoms = {a for m in P for a, _ in m}
        for e_poly, builder in self._candidate_divisors():
            if not all(a in goal_atoms for m in e_poly for a, _ in m):
                continue
            R = poly_div(P, e_poly)
            if R is None or R == P or not _quotient_admissible(R, P):
                continue
            sub = self._power(v, R, d - 1)
            if sub is not None:
                e = builder(d - 1)
                if e is not None:
                    return _apply("exp", "construct", sub, e)
        # split a sum of monomials into separate factors
        if len(P) > 1:
            pieces = []
            for m, c in sorted(P.items(), key=lambda kv: _mono_key(kv[0])):
                r = self._power(v, {m: c}, d - 1)
                if r is None:
                    return None
                pieces.append(r)
            out = pieces[0]
            for r in pieces[1:]:
                out = _apply("gop", "construct", out, r)
            return out
        # a single monomial with sign or multiplicity: peel them off
        ((m, c),) = P.items()
        if c != 1:
            unit = self._power(v, {m: 1}, d - 1)
            if unit is None:
                return None
            piece = _apply("inv", "construct", unit) if c < 0 else unit
            out = piece
            for _ in range(abs(c) - 1):
                out = _apply("gop", "construct", out, piece)
            return out
        return None

    def _g_poly(self, t: Term) -> dict:
        P: dict = {}
        for f in normalize(t).g_factors:
            mono = () if f.exponent is None else mono_of_term(f.exponent)
            P[mono] = P.get(mono, 0) + f.sign
        return {m: c for m, c in P.items() if c != 0}

    def _single_base_powers(self, v: Var):
        for u in sorted(self.closure, key=lambda t: (t.size, t.key())):
            if u.sort is not Sort.G or u is GID:
                continue
            nf = normalize(u)
            if nf.g_factors and all(f.base is v for f in nf.g_factors):
                yield u, self.closure[u]

    def _exponent(self, P: dict, d: int) -> Optional[Recipe]:
        t = e_term_of_poly(P)
        if t is None:
            return None
        t = normal_form(t)
        key = ("exp", t, d)
        if key in self._memo:
            return self._memo[key]
        self._memo[key] = None
        out = self._exponent_inner(P, t, d)
        self._memo[key] = out
        return out

    def _exponent_inner(self, P, t, d) -> Optional[Recipe]:
        hit = self.closure.get(t)
        if hit is not None:
            return hit
        if not P:
            return _emit(ZERO)
        if d < 0 or atom_size(t) > self.bounds.max_term_size:
            return None
        parts = []
        for m, c in sorted(P.items(), key=lambda kv: _mono_key(kv[0])):
            mr = self._monomial(m, d)
            if mr is None:
                return None
            if c < 0:
                mr = _apply("neg", "construct", mr)
            parts.extend([mr] * abs(c))
        out = parts[0]
        for r in parts[1:]:
            out = _apply("+", "construct", out, r)
        return out

    def _monomial(self, m: Mono, d: int) -> Optional[Recipe]:
        if not m:
            return _emit(ONE)
        factors = []
        for atom, k in m:
            ar = self._atom(atom, d)
            if ar is None:
                return None
            if k < 0:
                if atom.sort is not Sort.NZE:
                    return None
                ar = _apply("i", "construct", ar)
            factors.extend([ar] * abs(k))
        out = factors[0]
        for r in factors[1:]:
            out = _apply("*", "construct", out, r)
        return out

    def _atom(self, atom: Term, d: int) -> Optional[Recipe]:
        hit = self.closure.get(atom)
        if hit is not None:
            return hit
        if _emittable(atom, self.k):
            return _emit(atom)
        if isinstance(atom, App) and atom.op is BOX and d > 0:
            inner = self._msg(atom.args[0], d - 1)
            if inner is not None:
                return _apply("box", "construct", inner)
        return None

    def _candidate_divisors(self):
        """Small derivable exponents, singles then products then binomials."""
        if self._divisors is None:
            atoms = self._derivable_atoms()
            singles = []
            for a in atoms:
                singles.append({((a, 1),): 1})
                if a.sort is Sort.NZE:
                    singles.append({((a, -1),): 1})
            products = []
            for i, a in enumerate(atoms):
                for b in atoms[i:]:
                    products.append({mono_mul(((a, 1),), ((b, 1),)): 1})
            monos = [list(p)[0] for p in singles + products]
            binomials = []
            units = [()] + monos
            for i, m1 in enumerate(units):
                for m2 in monos:
                    if m1 == m2:
                        continue
                    for sign in (1, -1):
                        q = {m2: sign}
                        q[m1] = q.get(m1, 0) + 1
                        if len(q) == 2:
                            binomials.append(q)
            out = singles + products + binomials
            dedup = []
            seen = set()
            for q in out:
                key = tuple(sorted((_mono_key(m), c) for m, c in q.items()))
                if key not in seen:
                    seen.add(key)
                    dedup.append(q)
            self._divisors = [(q, self._make_builder(q)) for q in dedup]
        return self._divisors

    def _make_builder(self, Q: dict) -> Callable[[int], Optional[Recipe]]:
        return lambda d: self._exponent(Q, d)

    def _derivable_atoms(self) -> list:
        """Atoms the adversary can build: known exponent variables, boxes of
        known group values, and boxes of g^w for known base g and exponent w."""
        out: list = []
        seen: set = set()

        def add(atom):
            if atom not in seen:
                seen.add(atom)
                out.append(atom)

        ordered = sorted(self.closure, key=lambda t: (t.size, t.key()))
        e_vars = [
            t for t in ordered if isinstance(t, Var) and t.sort in (Sort.E, Sort.NZE)
        ]
        for t in e_vars:
            add(t)
        g_vars = [t for t in ordered if isinstance(t, Var) and t.sort is Sort.G]
        for u in ordered:
            if u.sort is Sort.G and u is not GID and u.size <= 12:
                add(normal_form(app(BOX, u)))
        for v in g_vars:
            for w in e_vars:
                if w.sort is Sort.NZE:
                    add(normal_form(app(BOX, exp(v, w))))
        return out


def derive(
    target: Term, knowledge: KnowledgeSet, bounds: Bounds = Bounds()
) -> Optional[AdversaryWeb]:
    """Search for an adversary web producing the target; None within bounds
    is inconclusive, never a security proof."""
    return Deriver(knowledge, bounds).derive(target)


# ---------------------------------------------------------------------------
# Indicator obstruction certificates


@dataclass(frozen=True)
class Certificate:
    """Proof that no adversary web over the knowledge outputs the target:
    the named indicator vector occurs in the target but in no received or
    emitted message."""

    vector: tuple
    basis: IndicatorBasis
    target: Term
    available: frozenset

    def render(self) -> str:
        return (
            f"obstruction {render_vector(self.vector)} over basis {self.basis}"
        )

    def revalidate(self, knowledge: KnowledgeSet) -> bool:
        available = _available_vectors(knowledge, self.basis)
        if available is None:
            return False
        return (
            self.vector in indicators(self.target, self.basis)
            and self.vector not in available
        )


def _available_vectors(k: KnowledgeSet, basis: IndicatorBasis) -> Optional[frozenset]:
    out = {(0,) * len(basis)}
    for t in sorted(k.received | k.emitted_basics, key=lambda t: t.key()):
        if t.sort in (Sort.E, Sort.NZE) and not is_free(t, basis):
            return None  # the preservation theorem needs N-free exponents
        out |= indicators(t, basis)
    return frozenset(out)


def indicator_obstruction(
    target: Term, knowledge: KnowledgeSet, basis: IndicatorBasis
) -> Optional[Certificate]:
    available = _available_vectors(knowledge, basis)
    if available is None:
        return None
    missing = sorted(indicators(target, basis) - available)
    if not missing:
        return None
    return Certificate(missing[0], basis, normal_form(target), available)
