"""Rewriting modulo AC for the Diffie-Hellman message theory.

The rule set orients the group/ring/exponentiation equations left to
right (associativity and commutativity of the three AC operators are
handled by the flattened-multiset term representation), together with
the extra joinability rules and a non-zero-exponent cancellation rule
u * i(u) -> 1.

Two normalization paths are provided: `normalize` is the fast memoized
innermost engine used everywhere, and `normalize_steps` drives the
one-step relation `rewrite_step` under a selectable strategy, which the
confluence tests compare pairwise.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .terms import (
    ADD,
    App,
    BOX,
    Const,
    EXP,
    GID,
    GOP,
    INV,
    INVE,
    MUL,
    NEG,
    ONE,
    STAR2,
    Sort,
    Term,
    Var,
    ZERO,
    ac_equal,
    app,
    is_basic,
    pretty,
    var,
)


class BudgetExceeded(Exception):
    """Normalization ran past its step budget; signals a rule-set bug."""


class TaxonomyError(Exception):
    """A term claimed normal violates the normal-form taxonomy."""


@dataclass(frozen=True)
class Rule:
    rule_id: str
    lhs: Term
    rhs: Term


def _rules() -> tuple:
    a, b = var("?a", Sort.G), var("?b", Sort.G)
    x, y, z = var("?x", Sort.E), var("?y", Sort.E), var("?z", Sort.E)
    u, v, w = var("?u", Sort.NZE), var("?v", Sort.NZE), var("?w", Sort.NZE)
    from .terms import add, box, exp, gop, inv, inve, mul, neg

    table2 = [
        Rule("gop-id", gop(b, GID), b),
        Rule("gop-inv", gop(b, inv(b)), GID),
        Rule("add-id", add(x, ZERO), x),
        Rule("add-inv", add(x, neg(x)), ZERO),
        Rule("distrib", mul(x, add(y, z)), add(mul(x, y), mul(x, z))),
        Rule("mul-id", mul(x, ONE), x),
        Rule("star2", app(STAR2, u, v), mul(u, v)),
        Rule("i-mul", inve(mul(u, v)), mul(inve(u), inve(v))),
        Rule("i-one", inve(ONE), ONE),
        Rule("i-i", inve(inve(w)), w),
        Rule("exp-exp", exp(exp(a, x), y), exp(a, mul(x, y))),
        Rule("exp-one", exp(a, ONE), a),
        Rule("exp-gop", exp(gop(a, b), x), gop(exp(a, x), exp(b, x))),
        Rule("exp-add", exp(a, add(x, y)), gop(exp(a, x), exp(a, y))),
        Rule("exp-gid", exp(GID, x), GID),
    ]
    table3 = [
        Rule("inv-gid", inv(GID), GID),
        Rule("inv-gop", inv(gop(a, b)), gop(inv(a), inv(b))),
        Rule("inv-inv", inv(inv(b)), b),
        Rule("exp-inv", exp(inv(a), x), inv(exp(a, x))),
        Rule("exp-zero", exp(a, ZERO), GID),
        Rule("exp-neg", exp(a, neg(x)), inv(exp(a, x))),
        Rule("neg-zero", neg(ZERO), ZERO),
        Rule("neg-add", neg(add(x, y)), add(neg(x), neg(y))),
        Rule("neg-neg", neg(neg(x)), x),
        Rule("mul-zero", mul(ZERO, x), ZERO),
        Rule("mul-neg", mul(neg(x), y), neg(mul(x, y))),
    ]
    extra = [Rule("mul-i", mul(u, inve(u)), ONE)]
    return tuple(table2 + table3 + extra)


RULES = _rules()

_RULES_BY_HEAD: dict = {}
for _r in RULES:
    _RULES_BY_HEAD.setdefault(_r.lhs.op.name, []).append(_r)


def rules_by_head(op_name: str):
    return _RULES_BY_HEAD.get(op_name, ())


# ---------------------------------------------------------------------------
# AC matching
#
# Patterns are ordinary terms whose variables have names starting with "?".
# Matching an AC pattern node binds every pattern argument to a sub-multiset
# of the subject's arguments; a variable may absorb several arguments (their
# AC combination).  At the redex root, unmatched subject arguments are
# returned as a remainder and re-wrapped around the instantiated right side.


def _is_pvar(t: Term) -> bool:
    return isinstance(t, Var) and t.name.startswith("?")


def _match(p: Term, t: Term, binding: dict) -> Iterator[dict]:
    if _is_pvar(p):
        bound = binding.get(p)
        if bound is not None:
            if bound is t:
                yield binding
            return
        if t.sort <= p.sort:
            b2 = dict(binding)
            b2[p] = t
            yield b2
        return
    if isinstance(p, (Const, Var)):
        if p is t:
            yield binding
        return
    if not isinstance(t, App) or t.op is not p.op:
        return
    if p.op.ac:
        yield from (b for b, rem in _match_ac(p.op, list(p.args), list(t.args), binding) if not rem)
    else:
        yield from _match_seq(p.args, t.args, binding)


def _match_seq(ps, ts, binding) -> Iterator[dict]:
    if not ps:
        yield binding
        return
    for b in _match(ps[0], ts[0], binding):
        yield from _match_seq(ps[1:], ts[1:], b)


def _match_ac(op, pargs, targs, binding) -> Iterator[tuple]:
    """Yield (binding, remainder) pairs for an AC pattern node.

    Non-variable pattern arguments consume exactly one subject argument;
    bound variables consume their value (as a sub-multiset if the value
    has the same AC head); each unbound variable absorbs one or more of
    the remaining arguments.  The remainder is whatever stays unconsumed
    (only permitted at a redex root).
    """
    if not pargs:
        yield binding, targs
        return
    # order: structural patterns first, then variables
    pargs = sorted(pargs, key=lambda p: 1 if _is_pvar(p) else 0)
    yield from _match_ac_go(op, pargs, targs, binding)


def _match_ac_go(op, pargs, targs, binding) -> Iterator[tuple]:
    if not pargs:
        yield binding, targs
        return
    p, rest = pargs[0], pargs[1:]
    if _is_pvar(p) and p in binding:
        val = binding[p]
        for remaining in _consume_value(op, val, targs):
            yield from _match_ac_go(op, rest, remaining, binding)
    elif _is_pvar(p):
        # choose a non-empty group for this variable
        seen = set()
        if not rest or all(_is_pvar(q) and q not in binding for q in rest):
            # singles are enough when only unconstrained variables remain,
            # except the last variable absorbs everything left
            if not rest:
                group = targs
                groups = [group] if group else []
            else:
                groups = [[t] for t in targs]
        else:
            groups = [[t] for t in targs]
        for group in groups:
            if len(group) == len(targs) and not rest:
                pass
            key = tuple(sorted(id(t) for t in group))
            if key in seen:
                continue
            seen.add(key)
            val = group[0] if len(group) == 1 else app(op, *group)
            if not val.sort <= p.sort:
                continue
            b2 = dict(binding)
            b2[p] = val
            remaining = list(targs)
            for g in group:
                remaining.remove(g)
            yield from _match_ac_go(op, rest, remaining, b2)
    else:
        tried = set()
        for t in targs:
            if t in tried:
                continue
            tried.add(t)
            remaining = list(targs)
            remaining.remove(t)
            for b in _match(p, t, binding):
                yield from _match_ac_go(op, rest, remaining, b)


def _consume_value(op, val, targs) -> Iterator[list]:
    """Ways to remove `val` from the argument multiset."""
    if isinstance(val, App) and val.op is op:
        remaining = list(targs)
        for piece in val.args:
            if piece in remaining:
                remaining.remove(piece)
            else:
                return
        yield remaining
    elif val in targs:
        remaining = list(targs)
        remaining.remove(val)
        yield remaining


def match_root(rule: Rule, t: Term) -> Optional[tuple]:
    """Match a rule at the root of t; returns (binding, remainder)."""
    lhs = rule.lhs
    if not isinstance(t, App) or not isinstance(lhs, App) or t.op is not lhs.op:
        return None
    if lhs.op.ac:
        for binding, rem in _match_ac(lhs.op, list(lhs.args), list(t.args), {}):
            return binding, rem
        return None
    for binding in _match_seq(lhs.args, t.args, {}):
        return binding, []
    return None


def _instantiate(t: Term, binding: dict) -> Term:
    if _is_pvar(t):
        return binding[t]
    if isinstance(t, App):
        return app(t.op, *[_instantiate(a, binding) for a in t.args])
    return t


def step_root(t: Term) -> Optional[tuple]:
    """One rewrite at the root of t: (result, rule_id) or None."""
    if not isinstance(t, App):
        return None
    for rule in rules_by_head(t.op.name):
        m = match_root(rule, t)
        if m is not None:
            binding, rem = m
            out = _instantiate(rule.rhs, binding)
            if rem:
                out = app(t.op, out, *rem)
            return out, rule.rule_id
    return None


# ---------------------------------------------------------------------------
# Strategies and the one-step relation

_normal_cache: dict = {}


def _root_reducible(t: Term) -> bool:
    return step_root(t) is not None


def is_normal(t: Term) -> bool:
    hit = _normal_cache.get(t)
    if hit is not None:
        return hit
    out = True
    if isinstance(t, App):
        if any(not is_normal(a) for a in t.args) or _root_reducible(t):
            out = False
    _normal_cache[t] = out
    return out


def _replace_at(t: Term, path: tuple, sub: Term) -> Term:
    if not path:
        return sub
    args = list(t.args)
    args[path[0]] = _replace_at(args[path[0]], path[1:], sub)
    return app(t.op, *args)


def _find_innermost(t: Term, path: tuple) -> Optional[tuple]:
    if is_normal(t):
        return None
    for idx, a in enumerate(t.args):
        found = _find_innermost(a, path + (idx,))
        if found is not None:
            return found
    res = step_root(t)
    if res is None:
        return None
    return path, res[0], res[1]


def _find_outermost(t: Term, path: tuple) -> Optional[tuple]:
    if is_normal(t):
        return None
    res = step_root(t)
    if res is not None:
        return path, res[0], res[1]
    for idx, a in enumerate(t.args):
        found = _find_outermost(a, path + (idx,))
        if found is not None:
            return found
    return None


def _all_redexes(t: Term, path: tuple, acc: list):
    if is_normal(t):
        return
    res = step_root(t)
    if res is not None:
        acc.append((path, res[0], res[1]))
    for idx, a in enumerate(t.args):
        _all_redexes(a, path + (idx,), acc)


class Strategy:
    """Redex selection policy: innermost, outermost, or seeded random."""

    def __init__(self, kind: str, seed: int = 0):
        if kind not in ("leftmost-innermost", "leftmost-outermost", "random"):
            raise ValueError(f"unknown strategy {kind!r}")
        self.kind = kind
        self.rng = random.Random(seed) if kind == "random" else None

    def pick(self, t: Term) -> Optional[tuple]:
        if self.kind == "leftmost-innermost":
            return _find_innermost(t, ())
        if self.kind == "leftmost-outermost":
            return _find_outermost(t, ())
        acc: list = []
        _all_redexes(t, (), acc)
        if not acc:
            return None
        return acc[self.rng.randrange(len(acc))]


def rewrite_step(t: Term, strategy: Strategy) -> Optional[Term]:
    """One AC-rewrite successor of t, or None if t is irreducible."""
    found = strategy.pick(t)
    if found is None:
        return None
    path, sub, _rule = found
    return _replace_at(t, path, sub)


@dataclass
class TraceEntry:
    rule_id: str
    path: tuple
    size_before: int
    size_after: int


def normalize_steps(t: Term, strategy: Strategy, budget: int = 20000, trace: Optional[list] = None) -> tuple:
    """Drive rewrite_step to a fixpoint; returns (normal form, steps)."""
    steps = 0
    while True:
        found = strategy.pick(t)
        if found is None:
            return t, steps
        path, sub, rule_id = found
        t2 = _replace_at(t, path, sub)
        if trace is not None:
            trace.append(TraceEntry(rule_id, path, t.size, t2.size))
        t = t2
        steps += 1
        if steps > budget:
            raise BudgetExceeded(f"no fixpoint within {budget} steps: {pretty(t)}")


# ---------------------------------------------------------------------------
# Fast memoized normalization

_nf_cache: dict = {}


def _normalize_term(t: Term, counter: list, budget: int) -> Term:
    hit = _nf_cache.get(t)
    if hit is not None:
        return hit
    u = t
    while True:
        if isinstance(u, App):
            args = tuple(_normalize_term(a, counter, budget) for a in u.args)
            if args != u.args:
                u = app(u.op, *args)
        res = step_root(u)
        if res is None:
            break
        counter[0] += 1
        if counter[0] > budget:
            raise BudgetExceeded(f"no fixpoint within {budget} root steps")
        u = res[0]
    _nf_cache[t] = u
    _nf_cache[u] = u
    return u


@dataclass(frozen=True)
class GFactor:
    base: Term  # a G-variable
    exponent: Optional[Term]  # an irreducible monomial, or None for a bare base
    sign: int  # +1, or -1 under inv(...)


@dataclass(frozen=True)
class EMonomial:
    monomial: Term  # mul-combination of atoms, or ONE
    coefficient: int  # signed multiplicity in the sum


@dataclass(frozen=True)
class NormalForm:
    term: Term
    g_factors: Optional[tuple] = None
    e_monomials: Optional[tuple] = None


def normalize(t: Term, budget: int = 200000) -> NormalForm:
    """Full normal form plus its taxonomy decomposition."""
    nf = _normalize_term(t, [0], budget)
    g_factors = e_monomials = None
    if nf.sort is Sort.G:
        g_factors = tuple(_g_factors(nf))
    elif nf.sort in (Sort.E, Sort.NZE):
        e_monomials = tuple(_e_monomials(nf))
    return NormalForm(nf, g_factors, e_monomials)


def normal_form(t: Term, budget: int = 200000) -> Term:
    return _normalize_term(t, [0], budget)


def theory_equal(s: Term, t: Term) -> bool:
    """Equality in the theory: identical normal forms modulo AC."""
    return normal_form(s) is normal_form(t)


def clear_caches():
    _nf_cache.clear()
    _normal_cache.clear()


# ---------------------------------------------------------------------------
# Normal-form taxonomy

def monomial_atoms(m: Term) -> tuple:
    """Atoms of an irreducible monomial as (atom, inverted) pairs.

    Atoms are E-variables or boxed G-terms; ONE is the empty product.
    """
    if m is ONE:
        return ()
    factors = m.args if isinstance(m, App) and m.op is MUL else (m,)
    out = []
    for f in factors:
        if isinstance(f, App) and f.op is INVE:
            inner = f.args[0]
            if not _is_atom(inner):
                raise TaxonomyError(f"non-atomic inverse {pretty(f)}")
            out.append((inner, True))
        elif _is_atom(f):
            out.append((f, False))
        else:
            raise TaxonomyError(f"non-atomic monomial factor {pretty(f)}")
    return tuple(out)


def _is_atom(t: Term) -> bool:
    if isinstance(t, Var) and t.sort in (Sort.E, Sort.NZE):
        return True
    return isinstance(t, App) and t.op is BOX


def _e_monomials(nf: Term):
    counts: dict = {}
    order: list = []
    terms = nf.args if isinstance(nf, App) and nf.op is ADD else (nf,)
    if nf is ZERO:
        terms = ()
    for m in terms:
        sign = 1
        if isinstance(m, App) and m.op is NEG:
            sign, m = -1, m.args[0]
        if m not in counts:
            counts[m] = 0
            order.append(m)
        counts[m] += sign
    for m in order:
        yield EMonomial(m, counts[m])


def _g_factors(nf: Term):
    factors = nf.args if isinstance(nf, App) and nf.op is GOP else (nf,)
    if nf is GID:
        factors = ()
    for f in factors:
        sign = 1
        if isinstance(f, App) and f.op is INV:
            sign, f = -1, f.args[0]
        if isinstance(f, App) and f.op is EXP:
            base, e = f.args
            yield GFactor(base, e, sign)
        else:
            yield GFactor(f, None, sign)


def taxonomy(nf: NormalForm) -> dict:
    """Check every clause of the normal-form shape; fail loudly otherwise."""
    t = nf.term
    report = {"sort": str(t.sort)}
    if t.sort is Sort.G:
        seen = set()
        for f in nf.g_factors:
            if not isinstance(f.base, Var) or f.base.sort is not Sort.G:
                raise TaxonomyError(f"factor base not a G-variable: {pretty(f.base)}")
            if f.exponent is not None:
                atoms = monomial_atoms(f.exponent)
                _check_monomial(atoms, f.exponent)
                if f.exponent is ONE:
                    raise TaxonomyError("unit exponent should have been reduced")
            key = (f.base, f.exponent)
            if (key, -f.sign) in seen:
                raise TaxonomyError(f"factor and its inverse co-occur: {pretty(f.base)}")
            seen.add((key, f.sign))
        report["g_factors"] = len(nf.g_factors)
    elif t.sort in (Sort.E, Sort.NZE):
        for m in nf.e_monomials:
            atoms = monomial_atoms(m.monomial)
            _check_monomial(atoms, m.monomial)
            if m.coefficient == 0:
                raise TaxonomyError(f"cancelling monomial survived: {pretty(m.monomial)}")
        report["e_monomials"] = len(nf.e_monomials)
    else:
        report["basic"] = is_basic(t)
    return report


def _check_monomial(atoms, m):
    plain = {a for a, invd in atoms if not invd}
    inverted = {a for a, invd in atoms if invd}
    if plain & inverted:
        raise TaxonomyError(f"atom and its inverse co-occur in {pretty(m)}")
    for a, _ in atoms:
        if isinstance(a, App) and a.op is BOX:
            inner = a.args[0]
            if normal_form(inner) is not inner:
                raise TaxonomyError(f"box argument not normal in {pretty(m)}")
