"""Concrete IADH protocols: UM, MQV, and the signed-ephemeral CF variant.

Each protocol shares the same four roles (initiator, responder,
certificate request, certificate authority) and differs only in the key
computation.  This module builds role views, session keys with the
degenerate-key abort, the CA's certificate gate, the Kaliski attack
values, and per-goal scenario skeletons with their indicator bases and
adversary knowledge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .terms import (
    Const,
    GID,
    ONE,
    Sort,
    Term,
    Var,
    TAG_CERT,
    TAG_CERTREQ,
    TAG_KEYREC,
    add,
    box,
    concat,
    exp,
    gop,
    hash_,
    inv,
    inve,
    mul,
    name_const,
    neg,
    parse,
    pretty,
    sign,
    sk,
    var,
)
from .rewrite import normal_form, normalize, theory_equal
from .indicator import IndicatorBasis
from .strands import (
    Bundle,
    KnowledgeSet,
    NEUTRAL,
    Node,
    RECEPTION,
    Strand,
    TRANSMISSION,
)

GEN = var("g", Sort.G)

GOAL_IDS = (
    "key-secrecy",
    "resist-impersonation",
    "weak-forward-secrecy",
    "forward-secrecy",
    "implicit-auth",
    "weak-implicit-auth",
)


class DegenerateKey(Exception):
    """The key computation yielded the group identity; the role aborts."""


class CertificateRejected(Exception):
    """The CA refused to certify the submitted public value."""


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    signed_ephemerals: bool = False


UM = ProtocolSpec("UM")
MQV = ProtocolSpec("MQV")
CF = ProtocolSpec("CF", signed_ephemerals=True)

PROTOCOLS = {"UM": UM, "MQV": MQV, "CF": CF}


@dataclass(frozen=True)
class RoleView:
    """One participant's parameters: names, own secrets, peer values."""

    self_name: Const
    peer_name: Const
    long_term: Term  # own long-term secret exponent
    ephemeral: Term  # own ephemeral secret exponent
    peer_public: Term  # certified long-term value of the peer
    peer_ephemeral: Term  # the ephemeral group element received
    generator: Term = GEN

    @property
    def own_ephemeral_public(self) -> Term:
        return exp(self.generator, self.ephemeral)


def session_key(p: ProtocolSpec, view: RoleView) -> Term:
    """The key this participant computes; aborts on identity values."""
    a, x = view.long_term, view.ephemeral
    Y, R = view.peer_public, view.peer_ephemeral
    if p.name == "UM":
        left = normal_form(exp(Y, a))
        right = normal_form(exp(R, x))
        if left is GID or right is GID:
            raise DegenerateKey("UM exponentiation yielded the identity")
        return normal_form(hash_(concat(left, right)))
    if p.name == "MQV":
        s_own = add(x, mul(a, box(view.own_ephemeral_public)))
        key = normal_form(exp(gop(R, exp(Y, box(R))), s_own))
    elif p.name == "CF":
        key = normal_form(exp(gop(R, Y), add(a, x)))
    else:
        raise ValueError(f"unknown protocol {p.name}")
    if key is GID:
        raise DegenerateKey(f"{p.name} key computation yielded the identity")
    return key


def honest_views(p: ProtocolSpec) -> tuple:
    """The standard two-party instantiation: A(a,x) with B(b,y)."""
    A, B = name_const("A"), name_const("B")
    a, b = var("a", Sort.NZE), var("b", Sort.NZE)
    x, y = var("x", Sort.NZE), var("y", Sort.NZE)
    init = RoleView(A, B, a, x, exp(GEN, b), exp(GEN, y))
    resp = RoleView(B, A, b, y, exp(GEN, a), exp(GEN, x))
    return init, resp


# ---------------------------------------------------------------------------
# Certification


@dataclass(frozen=True)
class CertIssue:
    certificate: Term
    exponent: Term  # the e with Y = g^e
    adversary_learns: Optional[Term]  # e, when the request is not regular


def certificate_message(Y: Term, principal: Const, ca: Const) -> Term:
    return sign(concat(TAG_CERT, Y, principal), ca)


def issue_certificate(
    Y: Term,
    principal: Const,
    ca: Const = name_const("CA"),
    regular_request: bool = False,
) -> CertIssue:
    """The CA's gate: Y must be g^e for some e distinct from 0 and 1.

    A regular request keeps its exponent secret; any other request is
    modeled as proving possession, so the exponent joins the adversary's
    knowledge.
    """
    nf = normalize(Y)
    if nf.term.sort is not Sort.G:
        raise CertificateRejected(f"{pretty(Y)} is not a group element")
    if nf.term is GID:
        raise CertificateRejected("g^0 is not certifiable")
    if nf.term is GEN:
        raise CertificateRejected("g^1 is not certifiable")
    if not all(f.base is GEN for f in nf.g_factors):
        raise CertificateRejected(f"{pretty(Y)} is not a power of the generator")
    parts = []
    for f in nf.g_factors:
        e = f.exponent if f.exponent is not None else ONE
        parts.append(e if f.sign > 0 else neg(e))
    e_term = normal_form(parts[0] if len(parts) == 1 else add(*parts))
    cert = certificate_message(nf.term, principal, ca)
    return CertIssue(cert, e_term, None if regular_request else e_term)


def kaliski_values(R_A: Term, Y_A: Term, generator: Term = GEN) -> tuple:
    """The unknown key-share values forged from an observed exchange."""
    R_E = normal_form(gop(R_A, exp(Y_A, box(R_A)), inv(generator)))
    Y_E = normal_form(exp(generator, inve(box(R_E))))
    return R_E, Y_E


# ---------------------------------------------------------------------------
# Scenario construction


@dataclass(frozen=True)
class Scenario:
    protocol: ProtocolSpec
    goal: str
    bundle: Bundle
    basis: IndicatorBasis
    knowledge: KnowledgeSet
    target: Optional[Term]
    side_conditions: tuple = ()
    respects_ephemerals: bool = False
    description: str = ""

    def render(self) -> str:
        lines = [
            f"protocol {self.protocol.name}",
            f"goal {self.goal}",
            f"non {' '.join(sorted(pretty(t) for t in self.bundle.non_orig))}",
            f"unique {' '.join(sorted(pretty(t) for t in self.bundle.unique_orig))}",
        ]
        for t in sorted(self.knowledge.received, key=lambda t: (t.size, t.key())):
            lines.append(f"know {pretty(t)}")
        for t in sorted(self.knowledge.emitted_basics, key=lambda t: t.key()):
            lines.append(f"emit {pretty(t)}")
        if self.respects_ephemerals:
            lines.append("flag respects-ephemerals")
        for c in self.side_conditions:
            lines.append(f"order {c}")
        if self.target is not None:
            lines.append(f"target {pretty(self.target)}")
        return "\n".join(lines)


@dataclass
class _Cast:
    """The fixed dramatis personae of every scenario."""

    A: Const
    B: Const
    CA: Const
    E: Const
    a: Var
    b: Var
    x: Var
    y: Var
    y_adv: Var

    @staticmethod
    def standard() -> "_Cast":
        return _Cast(
            name_const("A"),
            name_const("B"),
            name_const("CA"),
            name_const("E"),
            var("a", Sort.NZE),
            var("b", Sort.NZE),
            var("x", Sort.NZE),
            var("y", Sort.NZE),
            var("y'", Sort.NZE),
        )


def _ephemeral_out(p: ProtocolSpec, value: Term, who: Const) -> Term:
    return sign(value, who) if p.signed_ephemerals else value


def _initiator_strand(p, view: RoleView, cert_self, cert_peer, key) -> Strand:
    state = concat(view.self_name, view.long_term, cert_self)
    nodes = (
        Node(NEUTRAL, state),
        Node(TRANSMISSION, _ephemeral_out(p, view.own_ephemeral_public, view.self_name)),
        Node(RECEPTION, _ephemeral_out(p, view.peer_ephemeral, view.peer_name)),
        Node(RECEPTION, cert_peer),
        Node(NEUTRAL, concat(TAG_KEYREC, view.self_name, view.peer_name, key)),
    )
    return Strand(nodes, "regular", "initiator")


def _responder_strand(p, view: RoleView, cert_self, cert_peer, key) -> Strand:
    state = concat(view.self_name, view.long_term, cert_self)
    nodes = (
        Node(NEUTRAL, state),
        Node(RECEPTION, _ephemeral_out(p, view.peer_ephemeral, view.peer_name)),
        Node(TRANSMISSION, _ephemeral_out(p, view.own_ephemeral_public, view.self_name)),
        Node(RECEPTION, cert_peer),
        Node(NEUTRAL, concat(TAG_KEYREC, view.peer_name, view.self_name, key)),
    )
    return Strand(nodes, "regular", "responder")


def _cert_request_strand(P: Const, Y: Term, cert: Term) -> Strand:
    request = sign(concat(TAG_CERTREQ, P, Y), P)
    return Strand(
        (Node(TRANSMISSION, request), Node(RECEPTION, cert), Node(NEUTRAL, cert)),
        "regular",
        "cert-request",
    )


def _ca_strand(P: Const, Y: Term, cert: Term) -> Strand:
    request = sign(concat(TAG_CERTREQ, P, Y), P)
    return Strand(
        (Node(RECEPTION, request), Node(TRANSMISSION, cert)),
        "regular",
        "ca",
    )


def _adversary_feed(value: Term, knowledge: KnowledgeSet) -> tuple:
    """Adversary strands transmitting `value` into a regular reception."""
    from .search import Bounds, derive

    web = derive(value, knowledge, Bounds())
    if web is None:
        raise ValueError(f"scenario feed {pretty(value)} is not derivable")
    return tuple(s.to_strand() for s in web.strands)


def _wire(strands: tuple) -> frozenset:
    """Feed every reception from the first transmission of an equal message."""
    transmissions = []
    for si, s in enumerate(strands):
        for ni, n in enumerate(s.nodes):
            if n.kind == TRANSMISSION:
                transmissions.append(((si, ni), normal_form(n.message)))
    edges = set()
    for si, s in enumerate(strands):
        for ni, n in enumerate(s.nodes):
            if n.kind != RECEPTION:
                continue
            msg = normal_form(n.message)
            for src, tmsg in transmissions:
                if tmsg is msg and src[0] != si:
                    edges.add((src, (si, ni)))
                    break
    return frozenset(edges)


def _transmissions(strands) -> list:
    return [
        n.message
        for s in strands
        if s.kind == "regular"
        for n in s.nodes
        if n.kind == TRANSMISSION
    ]


def build_scenario(
    p: ProtocolSpec, goal: str, respects_ephemerals: bool = False
) -> Scenario:
    if goal not in GOAL_IDS:
        raise ValueError(f"unknown goal {goal!r}")
    c = _Cast.standard()
    Y_A, Y_B = exp(GEN, c.a), exp(GEN, c.b)
    cert_A = certificate_message(Y_A, c.A, c.CA)
    cert_B = certificate_message(Y_B, c.B, c.CA)
    infra = (
        _cert_request_strand(c.A, Y_A, cert_A),
        _ca_strand(c.A, Y_A, cert_A),
        _cert_request_strand(c.B, Y_B, cert_B),
        _ca_strand(c.B, Y_B, cert_B),
    )
    public = (GEN, c.A, c.B, c.CA, c.E, c.y_adv)

    if goal in ("key-secrecy", "weak-forward-secrecy"):
        init, resp = honest_views(p)
        key = session_key(p, init)
        strands = infra + (
            _initiator_strand(p, init, cert_A, cert_B, key),
            _responder_strand(p, resp, cert_B, cert_A, key),
        )
        basis = (c.a, c.b) if goal == "key-secrecy" else (c.x, c.y)
        return _finish(
            p, goal, strands, basis,
            non=(c.a, c.b, c.x, c.y),
            unique=(exp(GEN, c.x), exp(GEN, c.y), Y_A, Y_B),
            compromised=(),
            public=public,
            target=key,
            description=(
                "uncompromised long-term secrets; a listener for K cannot occur"
                if goal == "key-secrecy"
                else "two strands agree on K; ephemerals uncompromised"
            ),
        )

    if goal == "resist-impersonation":
        # the adversary holds A's long-term secret and picks the peer
        # ephemeral itself when the protocol leaves ephemerals unsigned
        if p.signed_ephemerals:
            init, resp = honest_views(p)
            key = session_key(p, init)
            strands = infra + (
                _initiator_strand(p, init, cert_A, cert_B, key),
                _responder_strand(p, resp, cert_B, cert_A, key),
                Strand((Node(TRANSMISSION, c.a),), "regular", "compromise"),
            )
            unique = (exp(GEN, c.x), exp(GEN, c.y), Y_A, Y_B)
        else:
            R_B = normal_form(exp(GEN, c.y_adv))
            view = RoleView(c.A, c.B, c.a, c.x, Y_B, R_B)
            key = session_key(p, view)
            regular = infra + (
                _initiator_strand(p, view, cert_A, cert_B, key),
                Strand((Node(TRANSMISSION, c.a),), "regular", "compromise"),
            )
            feed = _adversary_feed(R_B, KnowledgeSet.of(_transmissions(regular), public))
            strands = regular + feed
            unique = (exp(GEN, c.x), Y_A, Y_B)
        return _finish(
            p, goal, strands, (c.b, c.x),
            non=(c.b, c.x, c.y),
            unique=unique,
            compromised=(),
            public=public,
            target=key,
            description="adversary holds a and its own y'; can it obtain A's key?",
        )

    if goal == "forward-secrecy":
        disclosure = Strand(
            (Node(TRANSMISSION, concat(sk(c.B), c.b, c.a)),), "regular", "compromise"
        )
        if p.signed_ephemerals:
            # the signed unit resolves R_B to a regular strand's g^y
            init, resp = honest_views(p)
            key = session_key(p, init)
            strands = infra + (
                _initiator_strand(p, init, cert_A, cert_B, key),
                _responder_strand(p, resp, cert_B, cert_A, key),
                disclosure,
            )
            unique = (exp(GEN, c.x), exp(GEN, c.y), Y_A, Y_B, sk(c.B), c.a, c.b)
            resolution = "signed unit resolves R_B to g^y from a regular strand"
        else:
            R_B = normal_form(exp(GEN, c.y_adv))
            view = RoleView(c.A, c.B, c.a, c.x, Y_B, R_B)
            key = session_key(p, view)
            regular = infra + (
                _initiator_strand(p, view, cert_A, cert_B, key),
                disclosure,
            )
            feed = _adversary_feed(R_B, KnowledgeSet.of(_transmissions(regular), public))
            strands = regular + feed
            unique = (exp(GEN, c.x), Y_A, Y_B, sk(c.B), c.a, c.b)
            resolution = "unsigned R_B may be the adversary's own g^y'"
        return _finish(
            p, goal, strands, (c.x, c.y),
            non=(c.x, c.y),
            unique=unique,
            compromised=(),
            public=public,
            target=key,
            side_conditions=("disclosure after the last reception on the session",),
            description=f"a, b, sk(B) disclosed after the session; {resolution}",
        )

    # implicit authentication goals: no single target term; the analyzer
    # runs the per-protocol decision procedure over symbolic peer values
    strands = infra
    return _finish(
        p, goal, strands, (c.a, c.b, c.x, c.y),
        non=(c.a, c.b, c.x, c.y),
        unique=(Y_A, Y_B),
        compromised=(),
        public=public,
        target=None,
        respects_ephemerals=respects_ephemerals,
        description="two strands computing one key must agree on the names",
    )


def _finish(
    p, goal, strands, basis, non, unique, compromised, public, target,
    side_conditions=(), respects_ephemerals=False, description="",
):
    knowledge = KnowledgeSet.of(
        _transmissions(strands) + list(compromised), public
    )
    bundle = Bundle(
        strands,
        _wire(strands),
        frozenset(non),
        frozenset(normal_form(t) for t in unique),
    )
    return Scenario(
        protocol=p,
        goal=goal,
        bundle=bundle,
        basis=IndicatorBasis.of(*basis),
        knowledge=knowledge,
        target=target,
        side_conditions=tuple(side_conditions),
        respects_ephemerals=respects_ephemerals,
        description=description,
    )


# ---------------------------------------------------------------------------
# Scenario files


def load_scenario(text: str) -> Scenario:
    """Line-oriented scenario files: protocol/goal plus optional flags."""
    protocol = None
    goal = None
    respects = False
    extra_know: list = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "protocol":
            protocol = PROTOCOLS.get(rest.upper())
            if protocol is None:
                raise ValueError(f"unknown protocol {rest!r}")
        elif head == "goal":
            goal = rest
        elif head == "flag":
            if rest != "respects-ephemerals":
                raise ValueError(f"unknown flag {rest!r}")
            respects = True
        elif head == "know":
            extra_know.append(parse(rest))
        elif head in ("non", "unique", "emit", "order", "target"):
            continue  # regenerated canonically by build_scenario
        else:
            raise ValueError(f"unknown scenario directive {head!r}")
    if protocol is None or goal is None:
        raise ValueError("scenario files need `protocol` and `goal` lines")
    scenario = build_scenario(protocol, goal, respects)
    if extra_know:
        scenario = Scenario(
            protocol=scenario.protocol,
            goal=scenario.goal,
            bundle=scenario.bundle,
            basis=scenario.basis,
            knowledge=KnowledgeSet.of(
                set(scenario.knowledge.received) | set(extra_know),
                scenario.knowledge.emitted_basics,
            ),
            target=scenario.target,
            side_conditions=scenario.side_conditions,
            respects_ephemerals=scenario.respects_ephemerals,
            description=scenario.description,
        )
    return scenario
