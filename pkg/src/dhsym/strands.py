"""Strand-space execution model: strands, bundles, origination, webs.

Regular strands model one principal's local session; adversary strands
are single capabilities (emit a basic value, apply one operator, split a
concatenation, encrypt, decrypt).  A bundle is a causally closed DAG of
strand nodes linked by succession and communication edges.  An adversary
web is an acyclic composition of adversary strands over a knowledge set;
replaying it recomputes its output, which validates derivations
independently of how they were found.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .terms import (
    App,
    CONCAT,
    Const,
    ENC,
    HASH,
    SK,
    Sort,
    Term,
    Var,
    app,
    is_basic,
    pretty,
)
from .rewrite import normal_form, theory_equal
from .indicator import ingredients

TRANSMISSION = "+"
RECEPTION = "-"
NEUTRAL = "o"


@dataclass(frozen=True)
class Node:
    kind: str  # "+", "-", or "o"
    message: Term

    def __str__(self):
        return f"{self.kind}{pretty(self.message)}"


@dataclass(frozen=True)
class Strand:
    nodes: tuple
    kind: str = "regular"  # "regular" or "adversary"
    role: str = ""  # role name, or adversary variant

    def __post_init__(self):
        if self.kind == "adversary":
            if any(n.kind == NEUTRAL for n in self.nodes):
                raise ValueError("adversary strands have no neutral nodes")
            kinds = [n.kind for n in self.nodes]
            split = kinds.index(TRANSMISSION) if TRANSMISSION in kinds else len(kinds)
            if not all(k == RECEPTION for k in kinds[:split]) or not all(
                k == TRANSMISSION for k in kinds[split:]
            ):
                raise ValueError("adversary strands are receptions then transmissions")
        elif self.kind != "regular":
            raise ValueError(f"unknown strand kind {self.kind}")


def listener(t: Term) -> Strand:
    return Strand((Node(RECEPTION, t),), "regular", "listener")


@dataclass(frozen=True)
class Bundle:
    strands: tuple
    comm_edges: frozenset  # of ((si, ni), (sj, nj))
    non_orig: frozenset = frozenset()
    unique_orig: frozenset = frozenset()

    def node(self, addr) -> Node:
        si, ni = addr
        return self.strands[si].nodes[ni]

    def all_nodes(self):
        for si, s in enumerate(self.strands):
            for ni in range(len(s.nodes)):
                yield (si, ni)


def origination_points(v: Term, bundle: Bundle) -> frozenset:
    """Transmission nodes where the basic value v originates."""
    if not is_basic(v):
        raise ValueError("origination is defined for basic values")
    v = normal_form(v)
    out = set()
    for si, s in enumerate(bundle.strands):
        for ni, n in enumerate(s.nodes):
            if n.kind != TRANSMISSION:
                continue
            if v not in ingredients(normal_form(n.message)):
                continue
            earlier = any(
                v in ingredients(normal_form(m.message)) for m in s.nodes[:ni]
            )
            if not earlier:
                out.add((si, ni))
    return frozenset(out)


def check_bundle(bundle: Bundle) -> list:
    """All well-formedness violations (empty list means a valid bundle)."""
    problems = []
    nodes = set(bundle.all_nodes())
    incoming: dict = {}
    for (src, dst) in bundle.comm_edges:
        if src not in nodes or dst not in nodes:
            problems.append(f"edge {src}->{dst} references a missing node")
            continue
        if bundle.node(src).kind != TRANSMISSION:
            problems.append(f"edge source {src} is not a transmission")
        if bundle.node(dst).kind != RECEPTION:
            problems.append(f"edge target {dst} is not a reception")
        if not theory_equal(bundle.node(src).message, bundle.node(dst).message):
            problems.append(f"edge {src}->{dst} messages differ")
        incoming.setdefault(dst, []).append(src)
    for addr in nodes:
        if bundle.node(addr).kind == RECEPTION:
            n = len(incoming.get(addr, []))
            if n != 1:
                problems.append(f"reception {addr} has {n} incoming edges")
    # acyclicity of succession plus communication
    succ: dict = {a: [] for a in nodes}
    for si, s in enumerate(bundle.strands):
        for ni in range(len(s.nodes) - 1):
            succ[(si, ni)].append((si, ni + 1))
    for (src, dst) in bundle.comm_edges:
        if src in succ and dst in nodes:
            succ[src].append(dst)
    if _has_cycle(nodes, succ):
        problems.append("succession and communication edges form a cycle")
    for v in bundle.unique_orig:
        pts = origination_points(v, bundle)
        if len(pts) != 1:
            problems.append(
                f"uniquely-originating {pretty(v)} originates at {len(pts)} nodes"
            )
    for v in bundle.non_orig:
        pts = origination_points(v, bundle)
        if pts:
            problems.append(f"non-originating {pretty(v)} originates at {sorted(pts)}")
    return problems


def _has_cycle(nodes, succ) -> bool:
    indeg = {a: 0 for a in nodes}
    for a, outs in succ.items():
        for b in outs:
            indeg[b] += 1
    queue = [a for a, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        a = queue.pop()
        seen += 1
        for b in succ[a]:
            indeg[b] -= 1
            if indeg[b] == 0:
                queue.append(b)
    return seen != len(nodes)


# ---------------------------------------------------------------------------
# Knowledge and adversary webs


@dataclass(frozen=True)
class KnowledgeSet:
    received: frozenset
    emitted_basics: frozenset = frozenset()

    def __post_init__(self):
        for b in self.emitted_basics:
            if not is_basic(b):
                raise ValueError(f"emitted values must be basic, got {pretty(b)}")

    @staticmethod
    def of(received: Iterable[Term], emitted: Iterable[Term] = ()) -> "KnowledgeSet":
        return KnowledgeSet(
            frozenset(normal_form(t) for t in received),
            frozenset(normal_form(t) for t in emitted),
        )


class ReplayError(Exception):
    pass


@dataclass(frozen=True)
class WebStrand:
    """One adversary strand, with its wiring spelled out."""

    variant: str  # emit | construct | destruct | encrypt | decrypt
    inputs: tuple  # normalized received messages, in order
    outputs: tuple  # normalized transmitted messages
    op_name: str = ""  # operator for construct strands

    def to_strand(self) -> Strand:
        nodes = tuple(Node(RECEPTION, t) for t in self.inputs) + tuple(
            Node(TRANSMISSION, t) for t in self.outputs
        )
        return Strand(nodes, "adversary", self.variant)

    def render(self) -> str:
        if self.variant == "emit":
            return f"emit {pretty(self.outputs[0])}"
        if self.variant == "destruct":
            outs = ", ".join(pretty(t) for t in self.outputs)
            return f"recv {pretty(self.inputs[0])} | split into {outs}"
        srcs = ", ".join(pretty(t) for t in self.inputs)
        label = self.op_name or self.variant
        return f"build {pretty(self.outputs[0])} from [{srcs}] via {label}"


@dataclass(frozen=True)
class AdversaryWeb:
    strands: tuple  # WebStrand, topologically ordered
    output: Term

    def render(self) -> str:
        lines = []
        produced: set = set()
        received: set = set()
        for s in self.strands:
            for t in s.inputs:
                if t not in produced and t not in received:
                    received.add(t)
                    lines.append(f"recv {pretty(t)}")
            lines.append(s.render())
            produced.update(s.outputs)
        lines.append(f"output {pretty(self.output)}")
        return "\n".join(lines)

    def depth(self) -> int:
        """Longest chain of strand applications."""
        level: dict = {}
        best = 0
        for s in self.strands:
            d = 0
            for t in s.inputs:
                d = max(d, level.get(t, 0))
            d += 1
            for t in s.outputs:
                level[t] = max(level.get(t, 0), d)
            best = max(best, d)
        return best


_PUBLIC_CONSTS = ("1g", "0", "1", "cert", "keyrec", "cert_req")


def _emittable(t: Term, k: KnowledgeSet) -> bool:
    if t in k.emitted_basics:
        return True
    if isinstance(t, Const):
        return t.sort is Sort.NAME or t.name in _PUBLIC_CONSTS
    return False


def web_replay(web: AdversaryWeb, k: KnowledgeSet) -> Term:
    """Execute the web over the knowledge set; returns its output term."""
    pool = set(k.received) | set(k.emitted_basics)
    for s in web.strands:
        for t in s.inputs:
            if t not in pool:
                raise ReplayError(f"dangling reception of {pretty(t)}")
        if s.variant == "emit":
            out = s.outputs[0]
            if not _emittable(out, k):
                raise ReplayError(f"cannot emit non-adversary value {pretty(out)}")
            pool.add(out)
            continue
        if s.variant == "construct":
            from .terms import OPS

            op = OPS[s.op_name]
            built = normal_form(app(op, *s.inputs))
            if built not in set(s.outputs):
                raise ReplayError(
                    f"construct strand output mismatch: {pretty(built)}"
                )
            pool.add(built)
            continue
        if s.variant == "destruct":
            t = s.inputs[0]
            if not (isinstance(t, App) and t.op is CONCAT):
                raise ReplayError(f"cannot split non-concatenation {pretty(t)}")
            if set(s.outputs) != set(t.args):
                raise ReplayError("destructor outputs are not the parts")
            pool.update(t.args)
            continue
        if s.variant == "encrypt":
            key, msg = s.inputs
            built = normal_form(app(ENC, msg, key))
            pool.add(built)
            continue
        if s.variant == "decrypt":
            key, cipher = s.inputs
            if not (isinstance(cipher, App) and cipher.op is ENC):
                raise ReplayError(f"cannot decrypt {pretty(cipher)}")
            if inverse_key(cipher.args[1]) is not normal_form(key):
                raise ReplayError("decryption key does not invert the cipher key")
            pool.add(cipher.args[0])
            continue
        raise ReplayError(f"unknown strand variant {s.variant}")
    if web.output not in pool:
        raise ReplayError(f"output {pretty(web.output)} was never produced")
    return web.output


def inverse_key(key: Term) -> Term:
    """Symmetric keys are self-inverse; signing keys invert themselves
    (their ciphertexts stay sealed unless sk itself is compromised)."""
    return normal_form(key)
