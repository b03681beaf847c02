"""Goal checking: certificates, attacks, and the authentication matcher.

Secrecy-style goals run a pipeline: compute the scenario's target key,
try the indicator obstruction (an unconditional security certificate),
otherwise search for an adversary web (a validated attack), otherwise
report the bounds as inconclusive.

Implicit authentication needs finer machinery.  Two participants'
symbolic keys are equated; their monomials carry partially-known
indicator vectors (entries undetermined where the adversary may have
composed a value).  A compatibility matcher enumerates the perfect
matchings between the two monomial lists, and per-protocol case trees
drive it exactly as the authentication arguments do, with every
intermediate claim recomputed rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .terms import (
    App,
    BOX,
    Const,
    HASH,
    CONCAT,
    Sort,
    Term,
    Var,
    box,
    concat,
    exp,
    inve,
    name_const,
    neg,
    mul,
    pretty,
    var,
)
from .rewrite import monomial_atoms, normal_form, normalize, theory_equal
from .indicator import IndicatorBasis, indicators, render_vector
from .protocols import (
    GEN,
    GOAL_IDS,
    ProtocolSpec,
    RoleView,
    Scenario,
    build_scenario,
    issue_certificate,
    kaliski_values,
    session_key,
)
from .search import (
    Bounds,
    Certificate,
    derive,
    indicator_obstruction,
    mono_mul,
    poly_of_e,
)
from .strands import AdversaryWeb, KnowledgeSet, WebStrand, web_replay


class AnalysisError(Exception):
    """A mechanically-checked claim of a security argument failed."""


@dataclass(frozen=True)
class Verdict:
    protocol: str
    goal: str
    outcome: str  # SECURE | ATTACK | UNKNOWN
    certificate: Optional[Certificate] = None
    web: Optional[AdversaryWeb] = None
    notes: tuple = ()
    variant: str = ""

    @property
    def goal_label(self) -> str:
        return self.goal + (f"/{self.variant}" if self.variant else "")

    def result_line(self) -> str:
        return f"RESULT {self.protocol} {self.goal_label} {self.outcome}"

    def render(self) -> str:
        lines = []
        if self.outcome == "SECURE":
            head = f"SECURE — {self.certificate.render()}" if self.certificate else "SECURE"
            lines.append(head)
        elif self.outcome == "ATTACK":
            lines.append("ATTACK — web:")
            if self.web is not None:
                lines.append(self.web.render())
        else:
            lines.append("UNKNOWN — bounds exhausted without certificate or web")
        lines.extend(f"  {n}" for n in self.notes)
        lines.append(self.result_line())
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Partial indicator vectors


@dataclass(frozen=True)
class AtomKinds:
    """What the analysis knows about each symbol occurring in monomials.

    params: variables that denote simple protocol parameters; their value
    may coincide with the basis variables listed as aliases.
    opaque: adversary-composed exponents (any basis variable may occur).
    pinned_zero: opaque values known to carry the zero vector.
    """

    aliases: dict
    opaque: frozenset = frozenset()
    pinned_zero: frozenset = frozenset()

    def with_identity(self, u: Var, v: Var) -> "AtomKinds":
        """Record u = v: u stops being ambiguous."""
        aliases = dict(self.aliases)
        aliases[u] = (v,)
        return AtomKinds(aliases, self.opaque, self.pinned_zero)

    def without_alias(self, u: Var, v: Var) -> "AtomKinds":
        """Record u != v."""
        aliases = dict(self.aliases)
        aliases[u] = tuple(w for w in aliases.get(u, ()) if w is not v)
        return AtomKinds(aliases, self.opaque, self.pinned_zero)


UNKNOWN = "?"


def partial_vector(monomial: Term, basis: IndicatorBasis, kinds: AtomKinds) -> tuple:
    """Presence vector with undetermined entries: 1 definitely present,
    0 definitely absent, '?' unknown.  Boxed atoms contribute nothing."""
    atoms = [a for a, _inv in monomial_atoms(monomial)]
    entries = []
    for v in basis.variables:
        definite = False
        maybe = False
        for a in atoms:
            if isinstance(a, App) and a.op is BOX:
                continue
            if a is v or kinds.aliases.get(a) == (v,):
                definite = True
            elif a in kinds.opaque and a not in kinds.pinned_zero:
                maybe = True
            elif v in kinds.aliases.get(a, ()):
                maybe = True
        entries.append(1 if definite else (UNKNOWN if maybe else 0))
    return tuple(entries)


def compatible(u: tuple, w: tuple) -> bool:
    return all(
        a == b for a, b in zip(u, w) if a is not UNKNOWN and b is not UNKNOWN
    )


def render_partial(vec: tuple) -> str:
    return "⟨" + ",".join(str(z) for z in vec) + "⟩"


# ---------------------------------------------------------------------------
# The matcher over monomial lists


@dataclass(frozen=True)
class Matching:
    pairs: tuple  # of (lhs_index, rhs_index)
    equations: tuple  # of (Var, Var) forced identities, or () if ambiguous


def match_monomials(
    lhs: list, rhs: list, basis: IndicatorBasis, kinds: AtomKinds
) -> list:
    """All perfect matchings whose paired vectors are compatible."""
    if len(lhs) != len(rhs):
        raise AnalysisError(
            f"no perfect matching between {len(lhs)} and {len(rhs)} monomials"
        )
    lvecs = [partial_vector(m, basis, kinds) for m in lhs]
    rvecs = [partial_vector(m, basis, kinds) for m in rhs]
    out = []

    def extend(i, used, pairs):
        if i == len(lhs):
            eqs = _entailed_equations(lhs, rhs, pairs, kinds)
            out.append(Matching(tuple(pairs), eqs))
            return
        for j in range(len(rhs)):
            if j not in used and compatible(lvecs[i], rvecs[j]):
                extend(i + 1, used | {j}, pairs + [(i, j)])

    extend(0, frozenset(), [])
    return out


def _entailed_equations(lhs, rhs, pairs, kinds) -> tuple:
    """Forced parameter identities when atoms biject uniquely."""
    equations = []
    for i, j in pairs:
        latoms = [a for a, _ in monomial_atoms(lhs[i])]
        ratoms = [a for a, _ in monomial_atoms(rhs[j])]
        if len(latoms) != len(ratoms):
            return ()
        if any(isinstance(a, App) for a in latoms + ratoms):
            return ()  # boxes or compounds: no simple-parameter entailment
        if any(a in kinds.opaque for a in latoms + ratoms):
            return ()
        bijections = list(_atom_bijections(latoms, ratoms, kinds))
        if len(bijections) != 1:
            return ()
        for u, v in bijections[0]:
            if u is not v:
                equations.append((u, v))
    return tuple(sorted(set(equations), key=lambda e: (e[0].name, e[1].name)))


def _atom_bijections(latoms, ratoms, kinds):
    if not latoms:
        yield ()
        return
    u, rest = latoms[0], latoms[1:]
    for idx, v in enumerate(ratoms):
        if u is v or v in kinds.aliases.get(u, ()) or u in kinds.aliases.get(v, ()):
            for tail in _atom_bijections(rest, ratoms[:idx] + ratoms[idx + 1 :], kinds):
                yield ((u, v),) + tail


# ---------------------------------------------------------------------------
# Monomial extraction from symbolic session keys


def key_monomials(key: Term) -> list:
    """Exponent monomials of a normalized group-element key (or of both
    hash components for hashed keys), as terms."""
    nf = normalize(key)
    if nf.term.sort is Sort.G:
        out = []
        for f in nf.g_factors:
            m = f.exponent
            out.append(m if m is not None else normal_form(var("1", Sort.NZE)))
        return out
    if isinstance(nf.term, App) and nf.term.op is HASH:
        arg = nf.term.args[0]
        parts = []
        stack = [arg]
        while stack:
            u = stack.pop()
            if isinstance(u, App) and u.op is CONCAT:
                stack.extend(reversed(u.args))
            else:
                parts.append(u)
        out = []
        for p in parts:
            out.extend(key_monomials(p))
        return out
    raise AnalysisError(f"cannot extract monomials from {pretty(nf.term)}")


# ---------------------------------------------------------------------------
# The implicit-authentication theorems, mechanized per protocol


def _cast_vars():
    names = ("a", "b", "x", "y", "a'", "b'", "x'", "y'", "eta", "psi", "alpha", "beta")
    return {n: var(n, Sort.NZE) for n in names}


def check_implicit_auth(
    p: ProtocolSpec,
    variant: str = "full",
    respects_ephemerals: bool = False,
    bounds: Bounds = Bounds(),
) -> Verdict:
    if variant not in ("full", "weak"):
        raise ValueError("variant is 'full' or 'weak'")
    goal = "implicit-auth" if variant == "full" else "weak-implicit-auth"
    if p.name == "UM":
        notes = _um_auth_argument()
        return Verdict(p.name, goal, "SECURE", notes=tuple(notes))
    if p.name == "CF":
        notes = _cf_auth_argument()
        return Verdict(p.name, goal, "SECURE", notes=tuple(notes))
    if p.name == "MQV":
        if variant == "weak":
            notes = _mqv_weak_argument()
            return Verdict(p.name, goal, "SECURE", notes=tuple(notes))
        if respects_ephemerals:
            notes = _mqv_weak_argument()
            notes += _mqv_full_argument()
            return Verdict(
                p.name, goal, "SECURE", notes=tuple(notes), variant="respects-ephemerals"
            )
        web, notes = _kaliski_attack()
        return Verdict(p.name, goal, "ATTACK", web=web, notes=tuple(notes))
    raise ValueError(f"unknown protocol {p.name}")


def _claim(cond: bool, text: str, log: list):
    if not cond:
        raise AnalysisError(f"claim failed: {text}")
    log.append(f"checked: {text}")


def _um_auth_argument() -> list:
    """Both long-term components force the certified peers to be A and B.

    The two hashed keys equate component-wise; the long-term components
    give one monomial equation whose basis-variable degrees must balance.
    The certificate gate pins every certified exponent's degree in a
    non-originating secret to zero unless it is that secret itself.
    """
    v = _cast_vars()
    log: list = []
    init = RoleView(
        name_const("A"), name_const("B'"), v["a"], v["x"],
        exp(GEN, v["beta"]), exp(GEN, v["eta"]),
    )
    resp = RoleView(
        name_const("A'"), name_const("B"), v["b"], v["y"],
        exp(GEN, v["alpha"]), exp(GEN, v["psi"]),
    )
    k1, k2 = session_key(ProtocolSpec("UM"), init), session_key(ProtocolSpec("UM"), resp)
    long1, eph1 = key_monomials(k1)[0], key_monomials(k1)[1]
    long2, eph2 = key_monomials(k2)[0], key_monomials(k2)[1]
    _claim(
        theory_equal(long1, mul(v["a"], v["beta"]))
        and theory_equal(long2, mul(v["b"], v["alpha"])),
        "long-term key components are a*beta and b*alpha",
        log,
    )
    # hash and concatenation are injective, so a*beta = alpha*b.
    # Degree of the secret a on each side: 1 + deg_a(beta) = deg_a(alpha).
    # Certified values have deg_a in {0, 1}, the 1 only when equal to a.
    solutions = []
    for deg_alpha in (0, 1):
        for deg_beta in (0, 1):
            if 1 + deg_beta == deg_alpha:
                solutions.append((deg_alpha, deg_beta))
    _claim(
        solutions == [(1, 0)],
        "degree bookkeeping in a forces alpha = a (and beta a-free)",
        log,
    )
    solutions_b = [
        (da, db) for da in (0, 1) for db in (0, 1) if 1 + da == db
    ]
    _claim(
        solutions_b == [(0, 1)],
        "degree bookkeeping in b forces beta = b (and alpha b-free)",
        log,
    )
    log.append("certificate uniqueness: alpha = a gives A' = A; beta = b gives B' = B")
    return log


def _cf_auth_argument() -> list:
    """Signed ephemerals make all eight monomials simple-parameter products;
    the compatibility table admits exactly the vertical matching."""
    v = _cast_vars()
    log: list = []
    init = RoleView(
        name_const("A"), name_const("B'"), v["a"], v["x"],
        exp(GEN, v["b'"]), exp(GEN, v["y'"]),
    )
    resp = RoleView(
        name_const("A'"), name_const("B"), v["b"], v["y"],
        exp(GEN, v["a'"]), exp(GEN, v["x'"]),
    )
    p = ProtocolSpec("CF", signed_ephemerals=True)
    lhs = key_monomials(session_key(p, init))
    rhs = key_monomials(session_key(p, resp))
    basis = IndicatorBasis.of(v["a"], v["b"], v["x"], v["y"], v["x'"], v["y'"])
    kinds = AtomKinds(
        aliases={
            v["x"]: (v["x'"],),
            v["x'"]: (v["x"],),
            v["y"]: (v["y'"],),
            v["y'"]: (v["y"],),
            v["a'"]: (v["a"], v["b"]),
            v["b'"]: (v["a"], v["b"]),
        }
    )
    matchings = match_monomials(lhs, rhs, basis, kinds)
    _claim(len(matchings) == 1, "the compatibility table admits exactly one matching", log)
    eqs = {(u.name, w.name) for u, w in matchings[0].equations}
    _claim(
        eqs == {("x", "x'"), ("y'", "y"), ("a", "a'"), ("b'", "b")},
        "the unique matching entails x=x', y=y', a=a', b=b'",
        log,
    )
    log.append("certificate uniqueness: a=a', b=b' give A' = A and B' = B")
    return log


def _mqv_symbolic_sides():
    """The two MQV keys with unknown peer values, as monomial lists."""
    v = _cast_vars()
    init = RoleView(
        name_const("A"), name_const("B'"), v["a"], v["x"],
        exp(GEN, v["beta"]), exp(GEN, v["eta"]),
    )
    resp = RoleView(
        name_const("A'"), name_const("B"), v["b"], v["y"],
        exp(GEN, v["alpha"]), exp(GEN, v["psi"]),
    )
    p = ProtocolSpec("MQV")
    lhs = key_monomials(session_key(p, init))
    rhs = key_monomials(session_key(p, resp))
    return v, lhs, rhs


def _mono_with(m_atoms) -> Term:
    out = m_atoms[0]
    for a in m_atoms[1:]:
        out = mul(out, a)
    return normal_form(out)


def _mqv_weak_argument() -> list:
    """Weak authentication: the responder's certified peer g^a' with a'
    non-originating must in fact be g^a."""
    v, lhs, rhs = _mqv_symbolic_sides()
    log: list = []
    # replace alpha (unknown) by the simple parameter a' of the weak goal
    rhs = [normal_form(_subst_var(m, v["alpha"], v["a'"])) for m in rhs]
    basis = IndicatorBasis.of(v["a"], v["a'"], v["b"], v["x"], v["y"])
    kinds = AtomKinds(
        aliases={v["a'"]: (v["a"], v["b"])},
        opaque=frozenset((v["eta"], v["psi"], v["beta"])),
    )
    anchor = rhs[_index_of(rhs, (v["a'"], v["b"]), kinds)]
    vec_anchor = partial_vector(anchor, basis, kinds)
    _claim(
        vec_anchor == (UNKNOWN, 1, 1, 0, 0),
        f"vector of a'b[g^y][g^psi] is {render_partial((UNKNOWN, 1, 1, 0, 0))}",
        log,
    )
    lvecs = [partial_vector(m, basis, kinds) for m in lhs]
    partners = [i for i, lv in enumerate(lvecs) if compatible(lv, vec_anchor)]
    with_a = [i for i, m in enumerate(lhs) if _has_atom(m, v["a"])]
    _claim(
        partners == sorted(set(partners))
        and all(i in with_a for i in partners)
        and len(partners) == 2,
        "a'b[g^y][g^psi] matches only the two a-carrying monomials",
        log,
    )
    # each surviving pair equation puts `a` among {a', b}: case split
    log.append("case split: a' = a, or b = a")
    # Case a' = a: the CA corollary identifies the certificates, A' = A.
    log.append("case a'=a: certificate uniqueness gives A' = A")
    # Case b = a with a' != a: both pairings die on indicator grounds.
    kinds_b = kinds.without_alias(v["a'"], v["a"]).without_alias(v["a'"], v["b"])
    # pairing with a*eta*[g^x]: eta = a' * (ratio of boxes); x*eta gains no y or b
    x_eta_resolved = _mono_with([v["x"], v["a'"], box(exp(GEN, v["psi"]))])
    vec_x_eta = partial_vector(x_eta_resolved, basis, kinds_b)
    _claim(
        vec_x_eta[2] == 0 and vec_x_eta[4] == 0,
        "under b=a, x*eta = x*a'*(boxes) has 0 in the b and y slots",
        log,
    )
    rvecs = [partial_vector(m, basis, kinds_b) for m in rhs]
    _claim(
        all(not compatible(vec_x_eta, rv) for rv in rvecs),
        "x*eta then matches no responder monomial: pairing with a*eta*[g^x] dies",
        log,
    )
    # pairing with a*beta*[g^x][g^eta]: beta = a'*(boxes); certified, so beta = a'
    rhs_beta = [normal_form(_subst_var(m, v["beta"], v["a'"])) for m in lhs]
    a_prime_y = _mono_with([v["a'"], v["y"], box(exp(GEN, v["psi"]))])
    vec_apy = partial_vector(a_prime_y, basis, kinds_b)
    _claim(
        vec_apy == (0, 1, 0, 0, 1),
        "with beta = a', the monomial a'y[g^psi] has vector ⟨0,1,0,0,1⟩",
        log,
    )
    lvecs_beta = [partial_vector(m, basis, kinds_b) for m in rhs_beta]
    _claim(
        all(not compatible(vec_apy, lv) for lv in lvecs_beta),
        "a'y[g^psi] then matches no initiator monomial: pairing with a*beta*[g^x][g^eta] dies",
        log,
    )
    log.append("only a' = a survives: A' = A (B' = B symmetrically)")
    return log


def _mqv_full_argument() -> list:
    """With ephemerals respected, a certified value with zero indicators
    forces an impossible self-referential peer ephemeral."""
    v, lhs, rhs = _mqv_symbolic_sides()
    log: list = []
    basis = IndicatorBasis.of(v["a"], v["b"], v["x"], v["y"])
    kinds = AtomKinds(
        aliases={},
        opaque=frozenset((v["eta"], v["psi"], v["beta"], v["alpha"])),
        pinned_zero=frozenset((v["alpha"],)),
    )
    # respects-ephemerals: alpha is free of a, b (CA case) and of x, y (no doping)
    alpha_y = _index_of(rhs, (v["alpha"], v["y"]), kinds)
    alpha_b = _index_of(rhs, (v["alpha"], v["b"]), kinds)
    vec_ay = partial_vector(rhs[alpha_y], basis, kinds)
    vec_ab = partial_vector(rhs[alpha_b], basis, kinds)
    _claim(vec_ay == (0, 0, 0, 1), "alpha*y*[g^psi] monomials have vector ⟨0,0,0,1⟩", log)
    _claim(vec_ab == (0, 1, 0, 0), "alpha*b*[g^y][g^psi] monomials have vector ⟨0,1,0,0⟩", log)
    lvecs = [partial_vector(m, basis, kinds) for m in lhs]
    _claim(
        all(lv[0] == 1 or lv[2] == 1 for lv in lvecs),
        "every initiator monomial definitely carries a or x",
        log,
    )
    _claim(
        all(not compatible(vec_ay, lv) and not compatible(vec_ab, lv) for lv in lvecs),
        "those two vectors match nothing on the initiator side",
        log,
    )
    # so both alpha summands must cancel inside psi's own expansion:
    # psi_0 * y = -(alpha * y * [g^psi]), hence psi_0 = -(alpha * [g^psi]).
    psi_box = box(exp(GEN, v["psi"]))
    _claim(
        v["psi"] in _vars_of_box(psi_box),
        "psi_0 would contain [g^psi], whose argument contains psi itself",
        log,
    )
    log.append(
        "occurs-check fails: no finite psi satisfies psi_0 = -(alpha*[g^psi]); "
        "alpha in {a, b} after all, reducing to the weak case"
    )
    return log


def _kaliski_attack() -> tuple:
    """Construct and validate the unknown key-share attack."""
    v = _cast_vars()
    log: list = []
    A, B, E = name_const("A"), name_const("B"), name_const("E")
    R_A, Y_A = normal_form(exp(GEN, v["x"])), normal_form(exp(GEN, v["a"]))
    R_E, Y_E = kaliski_values(R_A, Y_A)
    issue = issue_certificate(Y_E, E)
    log.append(f"CA certifies Y_E: Ind_⟨a⟩(Y_E) = {render_vector((0,))}")
    basis_a = IndicatorBasis.of(v["a"])
    if indicators(Y_E, basis_a) != frozenset({(0,)}):
        raise AnalysisError("Y_E is not indicator-free in a")
    # the paper's solution shape: psi_0 = -1 and alpha = i([g^psi])
    psi = poly_of_e(_exponent_of(R_E))
    psi_zero = {m: c for m, c in psi.items() if _mono_vec(m, basis_a) == (0,)}
    alpha = _exponent_of(Y_E)
    product = normal_form(neg(mul(alpha, box(R_E))))
    psi_zero_term = _poly_term(psi_zero)
    if not theory_equal(product, psi_zero_term):
        raise AnalysisError("psi_0 = -(alpha*[g^psi]) fails on the Kaliski values")
    log.append("solution shape verified: psi_0 = -(1), alpha = i([g^psi])")
    # B's session attributed to E computes A's key
    b, y = v["b"], v["y"]
    K_B = session_key(
        ProtocolSpec("MQV"), RoleView(E, B, b, y, Y_E, R_E)
    )
    K_A = session_key(
        ProtocolSpec("MQV"),
        RoleView(A, B, v["a"], v["x"], normal_form(exp(GEN, b)), normal_form(exp(GEN, y))),
    )
    if not theory_equal(K_A, K_B):
        raise AnalysisError("Kaliski keys fail to coincide")
    log.append("B's key with peer E equals A's key with peer B: unknown key-share")
    knowledge = KnowledgeSet.of([R_A, Y_A], [GEN, A, B, E])
    web = derive(normal_form(concat(R_E, Y_E)), knowledge, Bounds())
    if web is None:
        raise AnalysisError("the Kaliski values are not derivable from public data")
    out = web_replay(web, knowledge)
    if not theory_equal(out, concat(R_E, Y_E)):
        raise AnalysisError("Kaliski web fails to replay")
    log.append("web replay reproduces (R_E, Y_E) from g^x and g^a")
    return web, log


# -- small helpers -----------------------------------------------------------


def _subst_var(t: Term, u: Var, w: Var) -> Term:
    from .terms import substitute

    return substitute(t, {u: w})


def _has_atom(m: Term, v: Var) -> bool:
    return any(a is v for a, _ in monomial_atoms(m))


def _index_of(monomials, required_vars, kinds) -> int:
    for i, m in enumerate(monomials):
        atoms = [a for a, _ in monomial_atoms(m)]
        if all(v in atoms for v in required_vars):
            return i
    raise AnalysisError(f"no monomial carries {[v.name for v in required_vars]}")


def _vars_of_box(b: Term) -> frozenset:
    from .terms import vars_of

    return vars_of(b.args[0])


def _exponent_of(t: Term) -> Term:
    """The e with t = g^e, for a normalized power of the generator."""
    nf = normalize(t)
    parts = []
    for f in nf.g_factors:
        e = f.exponent if f.exponent is not None else normal_form(var("1", Sort.NZE))
        parts.append(e if f.sign > 0 else neg(e))
    from .terms import add

    return normal_form(parts[0] if len(parts) == 1 else add(*parts))


def _poly_term(P: dict) -> Term:
    from .search import e_term_of_poly

    t = e_term_of_poly(P)
    if t is None:
        raise AnalysisError("polynomial has uninvertible atoms")
    return normal_form(t)


def _mono_vec(m, basis: IndicatorBasis) -> tuple:
    counts = {v: 0 for v in basis.variables}
    for atom, k in m:
        if atom in counts:
            counts[atom] += k
    return tuple(counts[v] for v in basis.variables)


# ---------------------------------------------------------------------------
# Session-key indicator lemma


def session_key_indicator_check(p: ProtocolSpec) -> list:
    """Every successful key reflects the strand's own secrets; the only
    cancellations force the identity, which the role rejects."""
    v = _cast_vars()
    log: list = []
    view = RoleView(
        name_const("A"), name_const("B"), v["a"], v["x"],
        exp(GEN, v["beta"]), exp(GEN, v["eta"]),
    )
    key = session_key(p, view)
    for secret in (v["x"], v["a"]):
        basis = IndicatorBasis.of(secret)
        one = (1,)
        _claim(
            one in indicators(key, basis),
            f"1_{secret.name} ∈ Ind_⟨{secret.name}⟩(K) for {p.name}",
            log,
        )
    if p.name in ("MQV", "CF"):
        _cancellation_analysis(p, v, log)
    return log


def _cancellation_analysis(p: ProtocolSpec, v, log):
    """Substituting the cancellation condition zeroes the whole exponent."""
    from .search import poly_div

    if p.name == "MQV":
        # a-monomials cancel only if eta = -(beta*[g^eta]); then the
        # x-monomials cancel too and the exponent is 0
        eta_sub = {mono_mul(_m1(v["beta"]), _m1(box(exp(GEN, v["eta"])))): -1}
    else:
        eta_sub = {_m1(v["beta"]): -1}
    key_exp = _exponent_of(
        session_key(
            p,
            RoleView(
                name_const("A"), name_const("B"), v["a"], v["x"],
                exp(GEN, v["beta"]), exp(GEN, v["eta"]),
            ),
        )
    )
    P = poly_of_e(key_exp)
    substituted = _poly_subst_atom(P, v["eta"], eta_sub)
    _claim(
        substituted == {},
        f"{p.name}: under eta = {'-(beta*[g^eta])' if p.name == 'MQV' else '-(beta)'} "
        "the whole exponent collapses to 0, so K = 1g and the role aborts",
        log,
    )


def _m1(atom: Term) -> tuple:
    return ((atom, 1),)


def _poly_subst_atom(P: dict, atom: Var, Q: dict) -> dict:
    """Substitute a polynomial for an atom (non-negative powers only)."""
    out: dict = {}
    for m, c in P.items():
        k = 0
        rest = []
        for a, e in m:
            if a is atom:
                k = e
            else:
                rest.append((a, e))
        if k < 0:
            raise AnalysisError("cannot substitute into an inverted atom")
        term = {tuple(rest): c}
        for _ in range(k):
            term = _poly_mul(term, Q)
        for mm, cc in term.items():
            out[mm] = out.get(mm, 0) + cc
            if out[mm] == 0:
                del out[mm]
    return out


def _poly_mul(P: dict, Q: dict) -> dict:
    out: dict = {}
    for m1, c1 in P.items():
        for m2, c2 in Q.items():
            m = mono_mul(m1, m2)
            out[m] = out.get(m, 0) + c1 * c2
            if out[m] == 0:
                del out[m]
    return out


# ---------------------------------------------------------------------------
# The goal pipeline


def check_goal(s: Scenario, bounds: Bounds = Bounds()) -> Verdict:
    if s.goal in ("implicit-auth", "weak-implicit-auth"):
        variant = "full" if s.goal == "implicit-auth" else "weak"
        return check_implicit_auth(
            s.protocol, variant, s.respects_ephemerals, bounds
        )
    if s.target is None:
        raise ValueError(f"scenario for {s.goal} has no target")
    cert = indicator_obstruction(s.target, s.knowledge, s.basis)
    if cert is not None:
        return Verdict(
            s.protocol.name, s.goal, "SECURE", certificate=cert,
            notes=(s.description,),
        )
    web = derive(s.target, s.knowledge, bounds)
    if web is not None:
        replayed = web_replay(web, s.knowledge)
        if not theory_equal(replayed, s.target):
            raise AnalysisError("derived web fails to replay to the target")
        return Verdict(
            s.protocol.name, s.goal, "ATTACK", web=web, notes=(s.description,)
        )
    return Verdict(s.protocol.name, s.goal, "UNKNOWN", notes=(s.description,))


def check_matrix(bounds: Bounds = Bounds()) -> list:
    """All protocols crossed with all goals, plus the MQV variant line."""
    from .protocols import PROTOCOLS

    verdicts = []
    for pname in ("UM", "MQV", "CF"):
        p = PROTOCOLS[pname]
        for goal in GOAL_IDS:
            verdicts.append(check_goal(build_scenario(p, goal), bounds))
    verdicts.append(
        check_implicit_auth(PROTOCOLS["MQV"], "full", respects_ephemerals=True)
    )
    return verdicts
