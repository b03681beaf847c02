"""Semantic oracle: evaluate terms in field-derived models.

A field F induces a model where both the group and the exponents are
interpreted as F itself: the group operation is field addition, the
identity is 0, inversion is negation, and exponentiation is field
multiplication.  The box coercion becomes an arbitrary function into the
non-zero elements; we draw a fresh random injection per trial.

Evaluation is exact: rationals use Fraction, prime fields use modular
integers.  Disagreement of two terms under some (environment, box)
sample is a proof that they are inequal in the theory; agreement over
many samples is probabilistic evidence of equality.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

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
    SK,
    STAR2,
    Sort,
    Term,
    Var,
    ZERO,
    is_basic,
    pretty,
    vars_of,
)
from .rewrite import normal_form


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class FieldSpec:
    """Rationals, or a prime field of odd 61-bit order."""

    prime: Optional[int] = None  # None means the rationals

    def __str__(self):
        return "Q" if self.prime is None else f"F_{self.prime}"


RATIONALS = FieldSpec(None)


def _is_probable_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime_field(rng: random.Random, bits: int = 61) -> FieldSpec:
    while True:
        n = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if _is_probable_prime(n):
            return FieldSpec(n)


class BoxAssignment:
    """Seeded random injection from field elements to non-zero elements."""

    def __init__(self, seed: int, fld: FieldSpec):
        self.seed = seed
        self.field = fld
        self.rng = random.Random(seed)
        self.table: dict = {}
        self._used: set = set()

    def __call__(self, value):
        hit = self.table.get(value)
        if hit is not None:
            return hit
        while True:
            out = _random_nonzero(self.rng, self.field)
            if out not in self._used:
                break
        self.table[value] = out
        self._used.add(out)
        return out


def _random_nonzero(rng: random.Random, fld: FieldSpec):
    if fld.prime is None:
        n = 0
        while n == 0:
            n = rng.randint(-999, 999)
        return Fraction(n, rng.randint(1, 99))
    v = 0
    while v == 0:
        v = rng.randrange(1, fld.prime)
    return v


def random_environment(variables, rng: random.Random, fld: FieldSpec) -> dict:
    env = {}
    for v in sorted(variables, key=lambda v: v.name):
        if v.sort is Sort.NZE:
            env[v] = _random_nonzero(rng, fld)
        elif fld.prime is None:
            env[v] = Fraction(rng.randint(-999, 999), rng.randint(1, 99))
        else:
            env[v] = rng.randrange(fld.prime)
    return env


def _inverse(x, fld: FieldSpec):
    if fld.prime is None:
        if x == 0:
            raise EvalError("inverse of zero")
        return 1 / Fraction(x)
    return pow(x, -1, fld.prime)


def eval_term(t: Term, env: dict, boxer: BoxAssignment, fld: FieldSpec):
    """Interpret an algebraic term as a field element.

    Message-sorted terms evaluate leaf-wise: free constructors yield
    tagged tuples whose basic leaves are field elements.
    """
    if isinstance(t, Var):
        try:
            return env[t] if fld.prime is None else env[t] % fld.prime
        except KeyError:
            raise EvalError(f"environment does not cover {t.name}") from None
    if isinstance(t, Const):
        if t is GID or t is ZERO:
            return 0 if fld.prime is not None else Fraction(0)
        if t is ONE:
            return 1 if fld.prime is not None else Fraction(1)
        return ("const", t.name)
    op = t.op
    if op in (CONCAT, ENC, HASH, SK):
        return (op.name,) + tuple(eval_term(a, env, boxer, fld) for a in t.args)
    args = [eval_term(a, env, boxer, fld) for a in t.args]
    p = fld.prime
    if op is GOP or op is ADD:
        s = sum(args)
        return s if p is None else s % p
    if op is MUL or op is STAR2:
        out = 1
        for a in args:
            out = out * a
        return out if p is None else out % p
    if op is EXP:
        out = args[0] * args[1]
        return out if p is None else out % p
    if op is INV or op is NEG:
        return -args[0] if p is None else (-args[0]) % p
    if op is INVE:
        return _inverse(args[0], fld)
    if op is BOX:
        return boxer(args[0])
    raise EvalError(f"cannot evaluate operator {op.name}")


@dataclass(frozen=True)
class DistinctWitness:
    env: dict
    box_seed: int
    field: FieldSpec
    left: object
    right: object
    confirmed_over: Optional[FieldSpec] = None

    def render(self) -> str:
        lines = [f"witness over {self.field} (box seed {self.box_seed}):"]
        for v, val in sorted(self.env.items(), key=lambda kv: kv[0].name):
            lines.append(f"  {v.name} = {val}")
        lines.append(f"  values: {self.left} vs {self.right}")
        if self.confirmed_over is not None:
            lines.append(f"  re-confirmed over {self.confirmed_over}")
        return "\n".join(lines)


@dataclass(frozen=True)
class OracleVerdict:
    equal: bool
    trials: int
    fields: tuple
    witness: Optional[DistinctWitness] = None

    def render(self) -> str:
        fields = ", ".join(str(f) for f in self.fields)
        if self.equal:
            return f"ProbablyEqual after {self.trials} trials over {fields}"
        return f"DistinctWitness\n{self.witness.render()}"


def _trial_fields(seed: int) -> tuple:
    rng = random.Random(seed ^ 0x5EED)
    return (RATIONALS,) + tuple(random_prime_field(rng) for _ in range(3))


def oracle_equal(s: Term, t: Term, trials: int = 100, seed: int = 0) -> OracleVerdict:
    """Randomized equality test; witnesses are proofs of inequality."""
    fields = _trial_fields(seed)
    variables = vars_of(s) | vars_of(t)
    rng = random.Random(seed)
    witness = None
    for k in range(trials):
        for fld in fields:
            env = random_environment(variables, rng, fld)
            box_seed = rng.randrange(1 << 30)
            boxer = BoxAssignment(box_seed, fld)  # one box function per trial
            lv = eval_term(s, env, boxer, fld)
            rv = eval_term(t, env, boxer, fld)
            if lv != rv:
                confirmed = None
                if fld.prime is None:
                    confirmed = _confirm_over_prime(s, t, env, box_seed, fields)
                witness = DistinctWitness(env, box_seed, fld, lv, rv, confirmed)
                return OracleVerdict(False, k + 1, fields, witness)
    return OracleVerdict(True, trials, fields)


def _confirm_over_prime(s, t, qenv, box_seed, fields) -> Optional[FieldSpec]:
    """Re-check a rational witness in a prime field (same assignment mod q)."""
    for fld in fields:
        if fld.prime is None:
            continue
        q = fld.prime
        env = {}
        ok = True
        for v, val in qenv.items():
            r = _fraction_mod(val, q)
            if r is None or (v.sort is Sort.NZE and r == 0):
                ok = False
                break
            env[v] = r
        if not ok:
            continue
        boxer = BoxAssignment(box_seed, fld)
        lv = eval_term(s, env, boxer, fld)
        rv = eval_term(t, env, boxer, fld)
        if lv != rv:
            return fld
    return None


def _fraction_mod(x, q):
    x = Fraction(x)
    if x.denominator % q == 0:
        return None
    return x.numerator * pow(x.denominator, -1, q) % q


@dataclass
class CrossReport:
    term: Term
    trials: int
    fields: tuple
    agreed: bool
    failure: Optional[str] = None

    def render(self) -> str:
        if self.agreed:
            return (
                f"cross-validation OK: {self.trials} trials over "
                f"{', '.join(str(f) for f in self.fields)}"
            )
        return f"cross-validation FAILED: {self.failure}"


def cross_validate(t: Term, trials: int = 50, seed: int = 0) -> CrossReport:
    """Check that evaluation is invariant under normalization."""
    nf = normal_form(t)
    fields = _trial_fields(seed)
    variables = vars_of(t) | vars_of(nf)
    rng = random.Random(seed)
    for _ in range(trials):
        for fld in fields:
            env = random_environment(variables, rng, fld)
            box_seed = rng.randrange(1 << 30)
            boxer = BoxAssignment(box_seed, fld)
            lv = eval_term(t, env, boxer, fld)
            rv = eval_term(nf, env, boxer, fld)
            if lv != rv:
                failure = _bisect_trace(t, env, box_seed, fld)
                return CrossReport(t, trials, fields, False, failure)
    return CrossReport(t, trials, fields, True)


def _bisect_trace(t: Term, env, box_seed, fld) -> str:
    """Name the first rewrite step that changes the evaluated value."""
    from .rewrite import Strategy, _replace_at

    strategy = Strategy("leftmost-innermost")
    boxer = BoxAssignment(box_seed, fld)
    cur = t
    base = eval_term(cur, env, boxer, fld)
    step = 0
    while True:
        found = strategy.pick(cur)
        if found is None:
            return f"value changed but no step located (term {pretty(t)})"
        path, sub, rule_id = found
        nxt = _replace_at(cur, path, sub)
        val = eval_term(nxt, env, boxer, fld)
        if val != base:
            return f"step {step}: rule {rule_id} at {path} changed the value"
        cur = nxt
        step += 1
