"""Key-dependency extraction from protocol models.

Builds the directed acyclic graph of key classes: nodes are equivalence
classes of key occurrences across rules (identified by fact unification),
edges are secrecy or authenticity dependencies.  An edge a -> b means
"compromising b compromises a", so the linear extension lists the
depended-upon classes (certificate authority keys and the like) first.

Extraction rules, applied to every term sent with Out:

  1. senc(p, kB) or aenc(p, pk(kB)) emits a secrecy edge kA -> kB for
     every key kA occurring inside the payload p.
  2. sign(p, kS) emits an authenticity edge kA -> kS for every key kA
     with kA or pk(kA) inside p.
  3. a key kdf(a, b) emits secrecy edges kdf(a, b) -> a and
     kdf(a, b) -> b (disjunctive over-approximation of the conjunctive
     dependency; a warning is issued).

Fresh terms transported inside an encryption payload count as keys; this
deliberately over-approximates (a transported nonce becomes a node) but
never drops a real dependency.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .model import Fact, Model, RewriteRule
from .terms import (
    App,
    Const,
    Name,
    Role,
    Term,
    Var,
    free_vars,
    render,
    subterms,
    substitute,
    term_key,
    unify_all,
    var,
)


class CyclicDependencyError(ValueError):
    def __init__(self, cycle: List[str]):
        super().__init__("cyclic key dependency: " + " -> ".join(cycle + cycle[:1]))
        self.cycle = cycle


class KdfApproximationWarning(UserWarning):
    """kdf dependencies are approximated disjunctively."""


@dataclass(frozen=True)
class KeyNode:
    rule: str
    occurrence: Term
    kind: Role

    @property
    def label(self) -> str:
        return occurrence_label(self.occurrence)


@dataclass(frozen=True)
class NodeEdge:
    rule: str
    source: Term  # the dependent key occurrence
    target: Term  # the depended-upon key occurrence
    kind: str  # "secrecy" | "authenticity"


@dataclass(frozen=True)
class KeyClass:
    label: str
    nodes: tuple  # KeyNode members

    def kinds(self) -> FrozenSet[Role]:
        return frozenset(n.kind for n in self.nodes)


@dataclass(frozen=True)
class ClassEdge:
    source: str
    target: str
    kinds: frozenset  # subset of {"secrecy", "authenticity"}


@dataclass
class KeyClassDag:
    classes: tuple
    edges: tuple
    _topo: Optional[tuple] = field(default=None, compare=False, repr=False)

    def labels(self) -> list:
        return [c.label for c in self.classes]

    def by_label(self, label: str) -> KeyClass:
        for c in self.classes:
            if c.label == label:
                return c
        raise KeyError(label)

    def successors(self) -> Dict[str, Set[str]]:
        out: Dict[str, Set[str]] = {c.label: set() for c in self.classes}
        for e in self.edges:
            out[e.source].add(e.target)
        return out

    def closure(self) -> Dict[str, Set[str]]:
        """Transitive closure of the joint relation (label -> reachable)."""
        succ = self.successors()
        reach: Dict[str, Set[str]] = {}

        def go(u: str) -> Set[str]:
            if u in reach:
                return reach[u]
            reach[u] = set()  # cycle guard; dag is acyclic by construction
            acc: Set[str] = set()
            for v in succ[u]:
                acc.add(v)
                acc |= go(v)
            reach[u] = acc
            return acc

        for c in self.classes:
            go(c.label)
        return reach

    def depends_on(self) -> Dict[str, Set[str]]:
        """Reflexive-transitive dependency sets, for secrecy excuses."""
        reach = self.closure()
        return {lab: reach[lab] | {lab} for lab in reach}

    def max_chain_length(self) -> int:
        """Longest path measured in edges."""
        succ = self.successors()
        memo: Dict[str, int] = {}

        def go(u: str) -> int:
            if u not in memo:
                memo[u] = 0
                memo[u] = max((1 + go(v) for v in succ[u]), default=0)
            return memo[u]

        return max((go(c.label) for c in self.classes), default=0)


def occurrence_label(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Name):
        return t.base
    if isinstance(t, Const):
        return t.name
    if isinstance(t, App) and t.fun == "kdf":
        return f"kdf({occurrence_label(t.args[0])},{occurrence_label(t.args[1])})"
    return render(t)


def _is_key_shape(t: Term) -> bool:
    """Occurrence shapes we track as nodes: variables, runtime names, kdf terms."""
    if isinstance(t, (Var, Name)):
        return True
    return isinstance(t, App) and t.fun == "kdf"


def _out_terms(r: RewriteRule) -> list:
    return [f.args[0] for f in r.conclusions if f.name == "Out"]


def _in_terms(r: RewriteRule) -> list:
    return [f.args[0] for f in r.premises if f.name == "In"]


def _persistent_conclusion_terms(r: RewriteRule) -> list:
    out = []
    for f in r.conclusions:
        if f.persistent:
            out.extend(f.args)
    return out


def _fresh_bound(r: RewriteRule) -> list:
    return [f.args[0] for f in r.premises if f.name == "Fr" and isinstance(f.args[0], Var)]


def _transported_fresh(t: Term) -> Iterable[Term]:
    """Fresh-sorted subterms inside encryption payloads of t."""
    for u in subterms(t):
        if isinstance(u, App) and u.fun in ("senc", "aenc"):
            for s in subterms(u.args[0]):
                if isinstance(s, Var) and s.sort == "fresh" or isinstance(s, Name):
                    yield s


def collect_key_nodes(m: Model) -> List[KeyNode]:
    """One node per syntactic key occurrence per rule.

    Sources: key positions in Out terms, persistent conclusion facts
    (certificates) and In terms; fresh terms transported under encryption
    in Out terms; and keys appearing only under pk() (signature keypairs
    published in certificates or requests).
    """
    nodes: List[KeyNode] = []
    seen: Set[Tuple[str, Term, Role]] = set()

    def add(rule: str, occ: Term, kind: Role) -> None:
        if not _is_key_shape(occ):
            return
        k = (rule, occ, kind)
        if k not in seen:
            seen.add(k)
            nodes.append(KeyNode(rule, occ, kind))

    for r in m.rules:
        scan = _out_terms(r) + _persistent_conclusion_terms(r) + _in_terms(r)
        from .terms import key_positions

        for t in scan:
            for occ, role in key_positions(t):
                add(r.name, occ, role)
        for t in _out_terms(r):
            for occ in _transported_fresh(t):
                add(r.name, occ, Role.SYM_KEY)
        # bare pk(k) occurrences with no other role in this rule
        roled = {occ for (rn, occ, _k) in seen if rn == r.name}
        for t in _out_terms(r) + _persistent_conclusion_terms(r):
            for u in subterms(t):
                if isinstance(u, App) and u.fun == "aenc":
                    continue
                if isinstance(u, App) and u.fun == "pk":
                    inner = u.args[0]
                    if _is_key_shape(inner) and inner not in roled:
                        add(r.name, inner, Role.SIG_KEY)
    return nodes


def extract_edges(m: Model, extended_authenticity: bool = False) -> List[NodeEdge]:
    """Node-level dependency edges from the three extraction rules."""
    node_terms: Dict[str, Set[Term]] = {}
    for n in collect_key_nodes(m):
        node_terms.setdefault(n.rule, set()).add(n.occurrence)

    edges: List[NodeEdge] = []
    seen: Set[Tuple[str, Term, Term, str]] = set()
    kdf_seen = False

    def add(rule: str, src: Term, dst: Term, kind: str) -> None:
        if src is dst:
            return
        k = (rule, src, dst, kind)
        if k not in seen:
            seen.add(k)
            edges.append(NodeEdge(rule, src, dst, kind))

    for r in m.rules:
        occs = node_terms.get(r.name, set())
        for t in _out_terms(r):
            for u in subterms(t):
                if not isinstance(u, App):
                    continue
                if u.fun in ("senc", "aenc"):
                    payload, keyterm = u.args
                    target = None
                    if u.fun == "senc":
                        target = keyterm
                    elif isinstance(keyterm, App) and keyterm.fun == "pk":
                        target = keyterm.args[0]
                    if target is None or target not in occs:
                        continue
                    inner = set(subterms(payload))
                    for kA in occs & inner:
                        add(r.name, kA, target, "secrecy")
                        if extended_authenticity:
                            add(r.name, kA, target, "authenticity")
                elif u.fun == "sign":
                    payload, keyterm = u.args
                    if keyterm not in occs:
                        continue
                    inner = set(subterms(payload))
                    for kA in occs:
                        if kA in inner or app_pk(kA) in inner:
                            add(r.name, kA, keyterm, "authenticity")
        # rule 3: kdf used as a key
        for t in _out_terms(r):
            from .terms import key_positions

            for occ, _role in key_positions(t):
                if isinstance(occ, App) and occ.fun == "kdf":
                    kdf_seen = True
                    for arg in occ.args:
                        if _is_key_shape(arg):
                            add(r.name, occ, arg, "secrecy")
                        else:
                            warnings.warn(
                                f"kdf argument {render(arg)} is not a key occurrence; "
                                "no dependency edge emitted",
                                KdfApproximationWarning,
                            )
    if kdf_seen:
        warnings.warn(
            "kdf dependencies were approximated disjunctively: an attacker is "
            "assumed to reconstruct kdf(a, b) from either input",
            KdfApproximationWarning,
        )
    return edges


class Partition:
    """Union-find over per-rule occurrences, the result of key unification."""

    def __init__(self) -> None:
        self._parent: Dict[Tuple[str, Term], Tuple[str, Term]] = {}

    def add(self, rule: str, occ: Term) -> None:
        key = (rule, occ)
        self._parent.setdefault(key, key)

    def find(self, rule: str, occ: Term) -> Tuple[str, Term]:
        key = (rule, occ)
        if key not in self._parent:
            self._parent[key] = key
            return key
        root = key
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[key] != root:
            self._parent[key], key = root, self._parent[key]
        return root

    def union(self, a: Tuple[str, Term], b: Tuple[str, Term]) -> None:
        ra, rb = self.find(*a), self.find(*b)
        if ra != rb:
            # deterministic root choice
            if (ra[0], term_key(ra[1])) <= (rb[0], term_key(rb[1])):
                self._parent[rb] = ra
            else:
                self._parent[ra] = rb

    def groups(self) -> Dict[Tuple[str, Term], List[Tuple[str, Term]]]:
        out: Dict[Tuple[str, Term], List[Tuple[str, Term]]] = {}
        for key in self._parent:
            out.setdefault(self.find(*key), []).append(key)
        for members in out.values():
            members.sort(key=lambda k: (k[0], term_key(k[1])))
        return out


def app_pk(t: Term) -> Term:
    from .terms import pk

    return pk(t)


def _rename_rule_vars(r: RewriteRule, suffix: str) -> Dict[Var, Var]:
    return {v: var(v.name + suffix, v.sort) for v in r.variables()}


def unify_equivalent_keys(m: Model) -> Partition:
    """Merge key occurrences across rules via fact unification.

    Every (conclusion, premise) fact pair with equal name, persistence and
    arity, and every (Out, In) pair, is unified after renaming the two
    rules apart; occurrences that the unifier maps to the same term are
    merged.  The occurrence universe is every variable of a rule plus any
    kdf key terms, so keys are tracked through state-fact carriers.
    """
    part = Partition()
    universes: Dict[str, List[Term]] = {}
    for r in m.rules:
        occs: Set[Term] = set(r.variables())
        for f in r.facts():
            for a in f.args:
                for u in subterms(a):
                    if isinstance(u, App) and u.fun == "kdf":
                        occs.add(u)
                    if isinstance(u, Name):
                        occs.add(u)
        universes[r.name] = sorted(occs, key=term_key)
        for occ in occs:
            part.add(r.name, occ)

    def match_pairs(ra: RewriteRule, fa: Fact, rb: RewriteRule, fb: Fact) -> None:
        ren_a = _rename_rule_vars(ra, "⁁a")
        ren_b = _rename_rule_vars(rb, "⁁b")
        eqs = [
            (substitute(x, ren_a), substitute(y, ren_b))
            for x, y in zip(fa.args, fb.args)
        ]
        sigma = unify_all(eqs)
        if sigma is None:
            return
        images_a = [
            (occ, substitute(substitute(occ, ren_a), sigma)) for occ in universes[ra.name]
        ]
        images_b: Dict[Term, List[Term]] = {}
        for occ in universes[rb.name]:
            img = substitute(substitute(occ, ren_b), sigma)
            images_b.setdefault(img, []).append(occ)
        for occ_a, img in images_a:
            for occ_b in images_b.get(img, ()):
                part.union((ra.name, occ_a), (rb.name, occ_b))

    rules = m.rules
    for ra in rules:
        for rb in rules:
            for fa in ra.conclusions:
                if fa.name == "Out":
                    continue
                for fb in rb.premises:
                    if fb.name in ("In", "Fr"):
                        continue
                    if (
                        fa.name == fb.name
                        and fa.persistent == fb.persistent
                        and fa.arity == fb.arity
                    ):
                        match_pairs(ra, fa, rb, fb)
            for fa in ra.conclusions:
                if fa.name != "Out":
                    continue
                if isinstance(fa.args[0], Var):
                    continue  # a bare reveal output identifies nothing
                for fb in rb.premises:
                    if fb.name != "In":
                        continue
                    if isinstance(fb.args[0], Var):
                        continue  # unconstrained input, same reason
                    match_pairs(ra, fa, rb, fb)
    return part


def build_class_dag(
    nodes: List[KeyNode],
    edges: List[NodeEdge],
    partition: Partition,
    model: Optional[Model] = None,
) -> KeyClassDag:
    """Quotient the node graph by the unification partition.

    Self-loops produced by quotienting are dropped with a warning
    (reflexivity of the secrecy relation stays implicit); a cycle among
    distinct classes raises CyclicDependencyError.
    """
    by_root: Dict[Tuple[str, Term], List[KeyNode]] = {}
    for n in nodes:
        root = partition.find(n.rule, n.occurrence)
        by_root.setdefault(root, []).append(n)

    rule_order = {r.name: i for i, r in enumerate(model.rules)} if model else {}

    fresh_by_rule: Dict[str, Set[Term]] = {}
    if model is not None:
        for r in model.rules:
            fresh_by_rule[r.name] = set(_fresh_bound(r))

    def class_label_candidates(root: Tuple[str, Term]) -> List[Tuple[int, str]]:
        cands = []
        for rule, occ in partition.groups().get(root, [root]):
            if occ in fresh_by_rule.get(rule, ()):  # Fr-generated occurrence
                cands.append((rule_order.get(rule, 0), occurrence_label(occ)))
        return sorted(cands)

    groups = partition.groups()
    roots = sorted(by_root, key=lambda r: (r[0], term_key(r[1])))
    labels: Dict[Tuple[str, Term], str] = {}
    for root in roots:
        cands = class_label_candidates(root)
        if cands:
            labels[root] = cands[0][1]
        else:
            members = by_root[root]
            kdfs = [n.occurrence for n in members if isinstance(n.occurrence, App)]
            if kdfs:
                labels[root] = occurrence_label(sorted(kdfs, key=term_key)[0])
            else:
                names = sorted(occurrence_label(n.occurrence) for n in members)
                labels[root] = names[0]

    # disambiguate label collisions between distinct classes
    order_of_root: Dict[Tuple[str, Term], int] = {}
    for root in roots:
        cands = class_label_candidates(root)
        order_of_root[root] = cands[0][0] if cands else len(rule_order)
    by_label: Dict[str, List[Tuple[str, Term]]] = {}
    for root in roots:
        by_label.setdefault(labels[root], []).append(root)
    for label, rs in by_label.items():
        if len(rs) > 1:
            rs.sort(key=lambda r: (order_of_root[r], r[0], term_key(r[1])))
            for i, root in enumerate(rs[1:], start=2):
                labels[root] = f"{label}#{i}"

    classes = tuple(
        KeyClass(labels[root], tuple(sorted(by_root[root], key=lambda n: (n.rule, term_key(n.occurrence), n.kind.value))))
        for root in roots
    )

    class_edges: Dict[Tuple[str, str], Set[str]] = {}
    for e in edges:
        src_root = partition.find(e.rule, e.source)
        dst_root = partition.find(e.rule, e.target)
        if src_root not in labels or dst_root not in labels:
            continue
        a, b = labels[src_root], labels[dst_root]
        if a == b:
            warnings.warn(
                f"dropping self-loop on class {a} produced by quotienting "
                "(reflexive dependency is implicit)"
            )
            continue
        class_edges.setdefault((a, b), set()).add(e.kind)

    edge_tuple = tuple(
        ClassEdge(a, b, frozenset(kinds))
        for (a, b), kinds in sorted(class_edges.items())
    )
    dag = KeyClassDag(classes, edge_tuple)
    _check_acyclic(dag)
    return dag


def _check_acyclic(dag: KeyClassDag) -> None:
    succ = dag.successors()
    state: Dict[str, int] = {}
    stack: List[str] = []

    def visit(u: str) -> None:
        state[u] = 1
        stack.append(u)
        for v in sorted(succ[u]):
            if state.get(v, 0) == 1:
                cycle = stack[stack.index(v):]
                raise CyclicDependencyError(cycle)
            if state.get(v, 0) == 0:
                visit(v)
        stack.pop()
        state[u] = 2

    for c in dag.classes:
        if state.get(c.label, 0) == 0:
            visit(c.label)


def transitive_reduction(dag: KeyClassDag) -> KeyClassDag:
    """Minimal edge set with the same transitive closure of the joint relation."""
    succ = dag.successors()

    def reachable_avoiding(u: str, v: str) -> bool:
        # is v reachable from u without using the direct edge u->v
        seen = set()
        stack = [w for w in succ[u] if w != v]
        while stack:
            w = stack.pop()
            if w == v:
                return True
            if w in seen:
                continue
            seen.add(w)
            stack.extend(succ[w])
        return False

    kept = tuple(e for e in dag.edges if not reachable_avoiding(e.source, e.target))
    return KeyClassDag(dag.classes, kept)


def linearize(dag: KeyClassDag) -> List[KeyClass]:
    """Linear extension: depended-upon classes first, ties by label."""
    indeg: Dict[str, int] = {c.label: 0 for c in dag.classes}
    dependents: Dict[str, List[str]] = {c.label: [] for c in dag.classes}
    for e in dag.edges:
        # e.source depends on e.target, so target must come first
        indeg[e.source] += 1
        dependents[e.target].append(e.source)
    ready = [lab for lab, d in sorted(indeg.items()) if d == 0]
    heapq.heapify(ready)
    order: List[str] = []
    while ready:
        lab = heapq.heappop(ready)
        order.append(lab)
        for dep in dependents[lab]:
            indeg[dep] -= 1
            if indeg[dep] == 0:
                heapq.heappush(ready, dep)
    if len(order) != len(dag.classes):
        _check_acyclic(dag)  # raises with a concrete cycle
        raise AssertionError("linearize failed on an acyclic graph")
    return [dag.by_label(lab) for lab in order]


def has_unique_linear_extension(dag: KeyClassDag) -> bool:
    """True iff exactly one class is available at every Kahn step."""
    indeg: Dict[str, int] = {c.label: 0 for c in dag.classes}
    dependents: Dict[str, List[str]] = {c.label: [] for c in dag.classes}
    for e in dag.edges:
        indeg[e.source] += 1
        dependents[e.target].append(e.source)
    ready = sorted(lab for lab, d in indeg.items() if d == 0)
    while ready:
        if len(ready) != 1:
            return False
        lab = ready.pop()
        for dep in dependents[lab]:
            indeg[dep] -= 1
            if indeg[dep] == 0:
                ready.append(dep)
        ready.sort()
    return True


def emit_dot(dag: KeyClassDag) -> str:
    """Deterministic DOT rendering of the transitively reduced graph.

    Secrecy edges are solid, authenticity edges dashed; an edge carrying
    both kinds is drawn once per kind.
    """
    reduced = transitive_reduction(dag)
    lines = ["digraph key_dependencies {"]
    for label in sorted(c.label for c in reduced.classes):
        lines.append(f'  "{label}";')
    for e in sorted(reduced.edges, key=lambda e: (e.source, e.target)):
        for kind in sorted(e.kinds):
            style = "solid" if kind == "secrecy" else "dashed"
            lines.append(f'  "{e.source}" -> "{e.target}" [style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def extract(m: Model, extended_authenticity: bool = False) -> KeyClassDag:
    """Full pipeline: nodes, edges, unification, quotient graph."""
    nodes = collect_key_nodes(m)
    edges = extract_edges(m, extended_authenticity=extended_authenticity)
    partition = unify_equivalent_keys(m)
    return build_class_dag(nodes, edges, partition, model=m)


def order_file(dag: KeyClassDag) -> str:
    """Priority order, one label per line, with an edge summary in comments."""
    reduced = transitive_reduction(dag)
    lines = ["# key class priority order (prove earlier lines first)"]
    for e in sorted(reduced.edges, key=lambda e: (e.source, e.target)):
        kinds = ",".join(sorted(e.kinds))
        lines.append(f"# edge: {e.source} -> {e.target} [{kinds}]")
    for c in linearize(dag):
        lines.append(c.label)
    return "\n".join(lines) + "\n"
