"""Indicator vectors: counting secret exponents in normalized messages.

An indicator basis is an ordered list of non-zero-exponent variables
(typically the uncompromised secrets of a scenario).  Each irreducible
monomial maps to the vector of signed multiplicities of the basis
variables among its atoms; boxed group elements are opaque and
contribute nothing.  The indicator set of a message collects the
vectors of all monomials occurring at exponent positions of its
ingredients, where ingredients are closed under concatenation parts,
hash arguments, and encryption plaintexts (never encryption keys).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .terms import (
    App,
    CONCAT,
    ENC,
    HASH,
    Sort,
    Term,
    Var,
    is_basic,
)
from .rewrite import NormalForm, monomial_atoms, normal_form, normalize


@dataclass(frozen=True)
class IndicatorBasis:
    variables: tuple

    def __post_init__(self):
        seen = set()
        for v in self.variables:
            if not isinstance(v, Var) or v.sort is not Sort.NZE:
                raise ValueError(f"basis members must be NZE variables, got {v!r}")
            if v in seen:
                raise ValueError(f"duplicate basis variable {v!r}")
            seen.add(v)

    def __len__(self):
        return len(self.variables)

    def __str__(self):
        return ", ".join(v.name for v in self.variables)

    @staticmethod
    def of(*variables) -> "IndicatorBasis":
        return IndicatorBasis(tuple(variables))


def render_vector(vec: tuple) -> str:
    return "⟨" + ",".join(str(z) for z in vec) + "⟩"


def render_set(vectors: Iterable[tuple], basis: IndicatorBasis) -> str:
    body = ", ".join(render_vector(v) for v in sorted(vectors))
    return f"{{{body}}} over basis: {basis}"


def monomial_vector(m: Term, basis: IndicatorBasis) -> tuple:
    """Signed multiplicities of the basis variables in one monomial."""
    counts = {v: 0 for v in basis.variables}
    for atom, inverted in monomial_atoms(m):
        if atom in counts:
            counts[atom] += -1 if inverted else 1
    return tuple(counts[v] for v in basis.variables)


def ingredients(t: Term) -> frozenset:
    """The carried-value relation: concat parts, hash arguments, and
    encryption plaintexts, but never encryption keys."""
    out = set()
    stack = [t]
    while stack:
        u = stack.pop()
        if u in out:
            continue
        out.add(u)
        if isinstance(u, App):
            if u.op is CONCAT:
                stack.extend(u.args)
            elif u.op is ENC or u.op is HASH:
                stack.append(u.args[0])
    return frozenset(out)


def indicators(t: Term, basis: IndicatorBasis) -> frozenset:
    """Indicator set of a message (its normal form's, for algebraic terms)."""
    t = normal_form(t)
    out: set = set()
    for ing in ingredients(t):
        if not is_basic(ing):
            continue
        out |= _basic_indicators(ing, basis)
    return frozenset(out)


def _basic_indicators(t: Term, basis: IndicatorBasis) -> set:
    nf = normalize(t)
    out: set = set()
    if t.sort is Sort.G:
        zero = (0,) * len(basis)
        for f in nf.g_factors:
            if f.exponent is None:
                out.add(zero)
            else:
                out.add(monomial_vector(f.exponent, basis))
    elif t.sort in (Sort.E, Sort.NZE):
        for m in nf.e_monomials:
            out.add(monomial_vector(m.monomial, basis))
    return out


def is_free(e: Term, basis: IndicatorBasis) -> bool:
    """N-freeness: every monomial of the exponent has the zero vector."""
    if not e.sort <= Sort.E:
        raise ValueError(f"is_free expects an exponent term, got {e.sort}")
    nf = normalize(e)
    zero = (0,) * len(basis)
    return all(monomial_vector(m.monomial, basis) == zero for m in nf.e_monomials)
