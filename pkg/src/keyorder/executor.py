"""Bounded concrete execution of multiset-rewriting models.

One rule application consumes linear premise facts (with multiplicity),
reads persistent ones, mints fresh names for Fr premises, and binds In
premises against anything the Dolev-Yao attacker can derive, pattern
directed.  Out payloads feed the attacker.  Uniqueness-shaped
restrictions (replay protection and friends) are enforced on every path.

Scenario replay is deterministic.  Attack search is breadth-first over
rule applications with canonical-state deduplication, so a returned
counterexample is minimal in steps; search bounds are the step count,
the number of fresh-minting applications, and the composition depth the
attacker may use when forging inputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

from .knowledge import KnowledgeSet
from .model import Fact, Model, RewriteRule, uniqueness_restrictions
from .terms import (
    App,
    CONSTRUCTIVE,
    Const,
    Name,
    SORT_FRESH,
    SORT_PUB,
    Term,
    Var,
    const,
    depth as term_depth,
    fresh_name,
    is_ground,
    match,
    normalize,
    render,
    substitute,
    subterms,
    term_key,
)

ALIVENESS = "aliveness"
WEAK_AGREEMENT = "weak-agreement"
NON_INJECTIVE_AGREEMENT = "non-injective-agreement"
AGREEMENT_KINDS = (ALIVENESS, WEAK_AGREEMENT, NON_INJECTIVE_AGREEMENT)


class StuckScenario(RuntimeError):
    def __init__(self, step: int, rule: str, reason: str = ""):
        msg = f"scenario stuck at step {step} ({rule})"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.step = step
        self.rule = rule


@dataclass(frozen=True)
class TraceStep:
    index: int
    rule: str
    actions: tuple  # ground Facts

    def __str__(self):
        acts = " ".join(str(a) for a in self.actions)
        return f"{self.index} {self.rule} {acts}".rstrip()


Trace = Tuple[TraceStep, ...]


@dataclass(frozen=True)
class ExecConfig:
    identities: tuple = ("v1", "v2", "v3")
    composition_depth: Optional[int] = None  # None: max message depth + 2
    reveals: frozenset = frozenset()  # enabled reveal classes; "*" enables all
    max_instances: int = 512  # per rule and state; analyzed matches come first
    # Opaque values the attacker may inject into unconstrained slots of
    # composed messages.  Receivers treat such slots as opaque, so one
    # distinguished constant (plus every learned fresh name) stands in
    # for all junk; add a second to exercise unequal-junk scenarios.
    fillers: tuple = ("att0",)

    def reveal_enabled(self, label: str) -> bool:
        return "*" in self.reveals or label in self.reveals


@dataclass(frozen=True)
class SearchBounds:
    max_steps: int
    fresh_budget: int  # number of rule applications that mint fresh names
    composition_depth: int


@dataclass(frozen=True)
class SecrecyViolation:
    step: int
    label: str
    platoon: Optional[Term]
    term: Term

    def __str__(self):
        return f"secrecy of {self.label} instance {render(self.term)} violated at step {self.step}"


@dataclass(frozen=True)
class AgreementViolation:
    step: int
    kind: str
    claimant: Term
    peer: Term
    data: Term

    def __str__(self):
        return (
            f"{self.kind} violated at step {self.step}: "
            f"{render(self.claimant)} commits with {render(self.peer)} on {render(self.data)}"
        )


class ExecutionState:
    __slots__ = (
        "linear", "persistent", "knowledge", "fresh_idx", "fresh_rounds", "trace",
        "unique_seen",
    )

    def __init__(self, linear, persistent, knowledge, fresh_idx, fresh_rounds, trace,
                 unique_seen=frozenset()):
        self.linear: Dict[Fact, int] = linear
        self.persistent: Set[Fact] = persistent
        self.knowledge: KnowledgeSet = knowledge
        self.fresh_idx: int = fresh_idx
        self.fresh_rounds: int = fresh_rounds
        self.trace: Trace = trace
        self.unique_seen: frozenset = unique_seen  # restricted action instances

    def facts(self) -> Iterator[Fact]:
        for f, n in self.linear.items():
            for _ in range(n):
                yield f
        yield from self.persistent

    def assert_normal(self) -> None:
        for f in list(self.linear) + list(self.persistent):
            for a in f.args:
                assert is_ground(a) and normalize(a) is a, f"non-normal state term {a!r}"


def message_depth(m: Model) -> int:
    d = 0
    for r in m.rules:
        for f in r.facts():
            if f.name in ("In", "Out"):
                d = max(d, term_depth(f.args[0]))
    return d


def model_constants(m: Model) -> Set[Term]:
    out: Set[Term] = set()
    for r in m.rules:
        for f in r.facts():
            for a in f.args:
                for u in subterms(a):
                    if isinstance(u, Const):
                        out.add(u)
    return out


def initial_state(m: Model, cfg: ExecConfig) -> ExecutionState:
    depth = cfg.composition_depth
    if depth is None:
        depth = message_depth(m) + 2
    seeds = model_constants(m) | {const(i) for i in cfg.identities}
    seeds |= {const(c) for c in cfg.fillers}
    return ExecutionState(
        linear={},
        persistent=set(),
        knowledge=KnowledgeSet(seeds, composition_depth=depth),
        fresh_idx=0,
        fresh_rounds=0,
        trace=(),
    )


def _reveal_class(r: RewriteRule) -> Optional[str]:
    for f in r.actions:
        if f.name == "Rev" and f.args and isinstance(f.args[0], Const):
            return f.args[0].name
    return None


def _ground_fact(f: Fact, sigma) -> Fact:
    return Fact(
        f.name,
        tuple(normalize(substitute(a, sigma)) for a in f.args),
        f.persistent,
    )


# ---------------------------------------------------------------------------
# Pattern-directed matching of In premises against attacker knowledge

def _solve_pattern(
    p: Term,
    sigma: dict,
    know: KnowledgeSet,
    depth: int,
    identities: Sequence[Term],
    fillers: Sequence[Term],
    memo: dict,
    cap: int,
    toplevel: bool = False,
) -> List[dict]:
    """All extensions of sigma making p derivable; pattern directed.

    Tries analyzed terms with the same head first, then attacker
    composition (constructive symbols only), decrementing the depth
    budget per constructed level.  Results are memoised per pattern and
    relevant bindings, so sibling instances share work; each pattern
    yields at most ``cap`` bindings, with matches against observed terms
    enumerated before composed ones.
    """
    pvars = _pattern_vars_ordered(p)
    if pvars:
        key = (p, tuple(sigma.get(v) for v in pvars), depth, toplevel)
    else:
        key = (p, depth, toplevel)
    cached = memo.get(key)
    if cached is None:
        rel = {v: sigma[v] for v in pvars if v in sigma}
        cached = _solve_uncached(p, rel, know, depth, identities, fillers, memo, cap, toplevel)
        memo[key] = cached
    if not cached:
        return []
    out = []
    for binding in cached:
        merged = dict(sigma)
        merged.update(binding)
        out.append(merged)
    return out


def _solve_uncached(p, bound, know, depth, identities, fillers, memo, cap, toplevel=False) -> List[dict]:
    """Bindings over p's variables, extending ``bound``, making p derivable.

    No substitution happens on the way down: candidates from the analyzed
    set are matched structurally, and a composition is derivable by
    construction once all argument slots are solved.
    """
    pvars = _pattern_vars_ordered(p)
    if not pvars or all(v in bound for v in pvars):
        t = substitute(p, bound) if pvars else p
        return [dict(bound)] if know.derivable(t, depth) else []
    results: List[dict] = []
    seen: Set[tuple] = set()

    def emit(binding: dict) -> bool:
        key = tuple(binding.get(v) for v in pvars)
        if key not in seen:
            seen.add(key)
            results.append(binding)
        return len(results) >= cap

    if isinstance(p, Var):
        if p.sort == SORT_PUB:
            for c in identities:
                if emit({p: c}):
                    break
            return results
        if toplevel:
            # a whole-premise variable observes anything derivable so far
            for t in know.sorted_analyzed():
                if p.sort == SORT_FRESH and not isinstance(t, Name):
                    continue
                if emit({p: t}):
                    return results
            return results
        # an unconstrained slot inside a composed message: opaque to the
        # receiver, so distinguished filler constants plus learned fresh
        # names cover the receiver-visible cases
        candidates = [t for t in know.analyzed if isinstance(t, Name)]
        if p.sort != SORT_FRESH:
            candidates.extend(f for f in fillers if know.derivable(f))
        for t in sorted(candidates, key=term_key):
            if emit({p: t}):
                return results
        return results

    assert isinstance(p, App)
    first = p.args[0] if p.args and isinstance(p.args[0], Const) else None
    for t in know.sorted_by_head(p.fun, first):
        s = match(p, t, bound)
        if s is not None and emit(s):
            return results
    if p.fun in CONSTRUCTIVE and depth > 0:
        partial: List[dict] = [bound]
        for arg in p.args:
            nxt: List[dict] = []
            for s in partial:
                nxt.extend(
                    _solve_pattern(arg, s, know, depth - 1, identities, fillers, memo, cap)
                )
                if len(nxt) > cap:
                    nxt = nxt[:cap]
                    break
            partial = nxt
            if not partial:
                break
        for s in partial:
            if emit({v: s[v] for v in pvars}):
                break
    return results


_pattern_vars_cache: dict = {}


def _pattern_vars_ordered(p: Term) -> tuple:
    got = _pattern_vars_cache.get(p)
    if got is None:
        seen = []
        for v in subterms(p):
            if isinstance(v, Var) and v not in seen:
                seen.append(v)
        got = tuple(seen)
        _pattern_vars_cache[p] = got
    return got


# ---------------------------------------------------------------------------
# Rule instantiation

@dataclass(frozen=True)
class Instance:
    rule: RewriteRule
    sigma: dict = field(compare=False)
    consumed: tuple = field(compare=False)  # ground linear Facts

    def sort_key(self):
        return (
            self.rule.name,
            tuple(
                (v.name, v.sort, term_key(t))
                for v, t in sorted(self.sigma.items(), key=lambda kv: (kv[0].name, kv[0].sort))
            ),
        )


def applicable_instances(
    r: RewriteRule,
    state: ExecutionState,
    cfg: ExecConfig,
    in_depth: Optional[int] = None,
) -> List[Instance]:
    """All ground instantiations of r enabled in the current state."""
    reveal = _reveal_class(r)
    if reveal is not None and not cfg.reveal_enabled(reveal):
        return []
    depth = in_depth if in_depth is not None else state.knowledge.composition_depth
    identities = tuple(sorted((const(i) for i in cfg.identities), key=term_key))
    fillers = tuple(sorted((const(c) for c in cfg.fillers), key=term_key))

    fact_premises = [f for f in r.premises if f.name not in ("Fr", "In")]
    in_premises = [f for f in r.premises if f.name == "In"]
    fr_premises = [f for f in r.premises if f.name == "Fr"]

    # cheap applicability screen on fact names
    for f in fact_premises:
        pool = state.persistent if f.persistent else state.linear
        if not any(g.name == f.name and g.arity == f.arity for g in pool):
            return []

    # pattern-solving cache lives on the knowledge set, which is shared
    # copy-on-write between states; results depend only on its contents
    memo: dict = state.knowledge.solve_memo.setdefault((identities, fillers, depth), {})
    partial: List[Tuple[dict, Dict[Fact, int]]] = [({}, {})]
    for f in fact_premises:
        nxt: List[Tuple[dict, Dict[Fact, int]]] = []
        if f.persistent:
            candidates = sorted(
                (g for g in state.persistent if g.name == f.name and g.arity == f.arity),
                key=lambda g: tuple(map(term_key, g.args)),
            )
        else:
            candidates = sorted(
                (g for g in state.linear if g.name == f.name and g.arity == f.arity),
                key=lambda g: tuple(map(term_key, g.args)),
            )
        for sigma, used in partial:
            for g in candidates:
                if not f.persistent:
                    if used.get(g, 0) >= state.linear.get(g, 0):
                        continue  # multiplicity exhausted
                s = sigma
                ok = True
                for parg, garg in zip(f.args, g.args):
                    s = match(parg, garg, s)
                    if s is None:
                        ok = False
                        break
                if not ok:
                    continue
                used2 = dict(used)
                if not f.persistent:
                    used2[g] = used2.get(g, 0) + 1
                nxt.append((s, used2))
        partial = nxt
        if not partial:
            return []

    # In premises: anything the attacker can derive
    cap = cfg.max_instances
    expanded: List[Tuple[dict, Dict[Fact, int]]] = []
    for sigma, used in partial:
        sigmas = [sigma]
        for f in in_premises:
            out: List[dict] = []
            for s in sigmas:
                out.extend(
                    _solve_pattern(
                        f.args[0], s, state.knowledge, depth, identities, fillers,
                        memo, cap, toplevel=isinstance(f.args[0], Var),
                    )
                )
                if len(out) > cap:
                    out = out[:cap]
                    break
            sigmas = out
            if not sigmas:
                break
        expanded.extend((s, used) for s in sigmas)
        if len(expanded) > cap:
            expanded = expanded[:cap]
            break
    if not expanded:
        return []

    instances = []
    for sigma, used in expanded:
        full = dict(sigma)
        for i, f in enumerate(fr_premises):
            v = f.args[0]
            assert isinstance(v, Var)
            full[v] = fresh_name(v.name, state.fresh_idx + i + 1)
        consumed = []
        for g, n in sorted(used.items(), key=lambda kv: (kv[0].name, tuple(map(term_key, kv[0].args)))):
            consumed.extend([g] * n)
        instances.append(Instance(r, full, tuple(consumed)))
    instances.sort(key=Instance.sort_key)
    return instances


def apply_instance(
    state: ExecutionState,
    inst: Instance,
    unique_facts: Sequence[str],
) -> Optional[ExecutionState]:
    """Successor state, or None when a uniqueness restriction blocks it."""
    r = inst.rule
    sigma = inst.sigma
    actions = tuple(_ground_fact(f, sigma) for f in r.actions)

    unique_seen = state.unique_seen
    if unique_facts:
        restricted = [a for a in actions if a.name in unique_facts]
        if len(set(restricted)) != len(restricted):
            return None
        for a in restricted:
            if a in unique_seen:
                return None
        if restricted:
            unique_seen = unique_seen | frozenset(restricted)

    linear = dict(state.linear)
    for g in inst.consumed:
        n = linear.get(g, 0)
        if n <= 1:
            linear.pop(g, None)
        else:
            linear[g] = n - 1

    persistent = state.persistent
    knowledge = state.knowledge
    new_persistent = None
    new_knowledge = None
    minted = any(f.name == "Fr" for f in r.premises)

    for f in r.conclusions:
        g = _ground_fact(f, sigma)
        if f.name == "Out":
            if new_knowledge is None:
                new_knowledge = knowledge.copy()
            new_knowledge.add(g.args[0])
        elif f.persistent:
            if new_persistent is None:
                new_persistent = set(persistent)
            new_persistent.add(g)
        else:
            linear[g] = linear.get(g, 0) + 1

    step = TraceStep(len(state.trace) + 1, r.name, actions)
    return ExecutionState(
        linear=linear,
        persistent=new_persistent if new_persistent is not None else persistent,
        knowledge=new_knowledge if new_knowledge is not None else knowledge,
        fresh_idx=state.fresh_idx + sum(1 for f in r.premises if f.name == "Fr"),
        fresh_rounds=state.fresh_rounds + (1 if minted else 0),
        trace=state.trace + (step,),
        unique_seen=unique_seen,
    )


# ---------------------------------------------------------------------------
# Scenario replay

@dataclass(frozen=True)
class ScenarioStep:
    rule: str
    bindings: tuple  # ((var name, Term), ...)


def parse_scenario(text: str, m: Model) -> List[ScenarioStep]:
    """Line oriented: ``rule-name [var=term ...]``; ``#`` comments."""
    from .model import parse_term

    sig = m.signature()
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        rule = parts[0]
        bindings = []
        for b in parts[1:]:
            if "=" not in b:
                raise ValueError(f"scenario line {lineno}: malformed binding {b!r}")
            vname, vtext = b.split("=", 1)
            bindings.append((vname.lstrip("~$"), parse_term(vtext, sig)))
        steps.append(ScenarioStep(rule, tuple(bindings)))
    return steps


@dataclass
class RunResult:
    trace: Trace
    state: ExecutionState

    def trace_lines(self) -> List[str]:
        return [str(s) for s in self.trace]


def _binding_consistent(inst: Instance, bindings) -> bool:
    byname = {}
    for v, t in inst.sigma.items():
        byname.setdefault(v.name, set()).add(t)
    for vname, want in bindings:
        got = byname.get(vname)
        if got is None or want not in got:
            return False
    return True


def run_scenario(
    m: Model,
    script: Sequence[ScenarioStep],
    cfg: ExecConfig = ExecConfig(),
) -> RunResult:
    """Deterministic replay: first applicable instance matching the bindings."""
    unique = uniqueness_restrictions(m)
    state = initial_state(m, cfg)
    for i, step in enumerate(script, start=1):
        try:
            rule = m.rule(step.rule)
        except KeyError:
            raise StuckScenario(i, step.rule, "no such rule")
        chosen = None
        for inst in applicable_instances(rule, state, cfg):
            if not _binding_consistent(inst, step.bindings):
                continue
            nxt = apply_instance(state, inst, unique)
            if nxt is not None:
                chosen = nxt
                break
        if chosen is None:
            raise StuckScenario(i, step.rule, "no applicable instance")
        state = chosen
        state.assert_normal()
    return RunResult(state.trace, state)


# ---------------------------------------------------------------------------
# Trace properties

def check_replay_restriction(trace: Trace) -> bool:
    """Def-3 style check: no Message(x, n) instance occurs at two steps."""
    seen: Set[Fact] = set()
    for step in trace:
        for a in step.actions:
            if a.name == "Message":
                if a in seen:
                    return False
                seen.add(a)
    return True


def _revealed_parties(trace: Trace) -> Set[Term]:
    out = set()
    for step in trace:
        for a in step.actions:
            if a.name == "Rev" and len(a.args) >= 2:
                out.add(a.args[1])
    return out


def _reveals(trace: Trace) -> List[Tuple[str, Term]]:
    out = []
    for step in trace:
        for a in step.actions:
            if a.name == "Rev" and len(a.args) >= 2 and isinstance(a.args[0], Const):
                out.append((a.args[0].name, a.args[1]))
    return out


def _honest(trace: Trace) -> Set[Tuple[Term, Term]]:
    out = set()
    for step in trace:
        for a in step.actions:
            if a.name == "Honest" and len(a.args) == 2:
                out.add((a.args[0], a.args[1]))
    return out


def secret_actions(trace: Trace) -> List[Tuple[int, str, Optional[Term], Term]]:
    """(step, class label, platoon or None, secret term) for Secret_* actions."""
    out = []
    for step in trace:
        for a in step.actions:
            if a.name.startswith("Secret_") and a.args:
                label = a.name[len("Secret_"):]
                if len(a.args) >= 2:
                    out.append((step.index, label, a.args[0], a.args[-1]))
                else:
                    out.append((step.index, label, None, a.args[0]))
    return out


def check_secrecy(
    trace: Trace,
    know: KnowledgeSet,
    deps: Optional[Dict[str, Set[str]]] = None,
    only_label: Optional[str] = None,
) -> List[SecrecyViolation]:
    """Violations of the secrecy claims recorded in the trace.

    A claim Secret_c(P, x) is violated when x is attacker derivable and
    no reveal excuses it: an excuse is a Rev(c', n, _) action with
    Honest(P, n) in the trace and c' in the dependency set of c (the set
    always contains c itself; pass the extractor's depends_on map to
    honour indirect dependencies).
    """
    honest = _honest(trace)
    reveals = _reveals(trace)
    out = []
    for stepidx, label, platoon, x in secret_actions(trace):
        if only_label is not None and label != only_label:
            continue
        if not know.derivable(x):
            continue
        depset = set(deps.get(label, ())) if deps else set()
        depset.add(label)
        excused = False
        for revclass, party in reveals:
            if revclass not in depset:
                continue
            if platoon is None or (platoon, party) in honest:
                excused = True
                break
        if not excused:
            out.append(SecrecyViolation(stepidx, label, platoon, x))
    return out


def check_agreement(trace: Trace, kind: str) -> List[AgreementViolation]:
    """Lowe-style agreement over Running/Commit annotations.

    Aliveness: the peer acted (some Running or Commit by it) before the
    commit.  Weak agreement: a prior Running(peer, claimant, _).
    Non-injective agreement: a prior Running(peer, claimant, data) with
    equal data.  A reveal of either party excuses, as in the secrecy
    checks.
    """
    if kind not in AGREEMENT_KINDS:
        raise ValueError(f"unknown agreement kind {kind!r}")
    revealed = _revealed_parties(trace)
    out = []
    runnings: List[Tuple[int, Term, Term, Term]] = []
    acted_by: Dict[Term, int] = {}
    commits: List[Tuple[int, Term, Term, Term]] = []
    for step in trace:
        for a in step.actions:
            if a.name == "Running" and len(a.args) == 3:
                runnings.append((step.index, a.args[0], a.args[1], a.args[2]))
                acted_by.setdefault(a.args[0], step.index)
            elif a.name == "Commit" and len(a.args) == 3:
                commits.append((step.index, a.args[0], a.args[1], a.args[2]))
                acted_by.setdefault(a.args[0], step.index)
    for stepidx, claimant, peer, data in commits:
        if claimant in revealed or peer in revealed:
            continue
        if kind == ALIVENESS:
            ok = acted_by.get(peer, stepidx + 1) < stepidx or any(
                s < stepidx for (s, m, _n, _t) in runnings if m is peer
            )
        elif kind == WEAK_AGREEMENT:
            ok = any(
                s < stepidx and m is peer and n is claimant
                for (s, m, n, _t) in runnings
            )
        else:
            ok = any(
                s < stepidx and m is peer and n is claimant and t is data
                for (s, m, n, t) in runnings
            )
        if not ok:
            out.append(AgreementViolation(stepidx, kind, claimant, peer, data))
    return out


# ---------------------------------------------------------------------------
# Attack search

@dataclass(frozen=True)
class SearchProperty:
    kind: str  # "secrecy" or an agreement kind
    label: Optional[str] = None  # class label for secrecy
    deps: Optional[dict] = None  # label -> set of labels it depends on

    def violations(self, trace: Trace, know: KnowledgeSet):
        if self.kind == "secrecy":
            return check_secrecy(trace, know, self.deps, only_label=self.label)
        return check_agreement(trace, self.kind)


_PROPERTY_ACTIONS = ("Running", "Commit", "Rev", "Honest")


def _relevant_actions(state: ExecutionState, unique_facts) -> List[Fact]:
    """Past actions that can influence future property verdicts or rule
    admissibility: agreement and reveal annotations, secrecy claims, and
    instances of uniqueness-restricted facts.  Order is irrelevant for the
    future because violations are checked exactly when a step is applied."""
    out: Set[Fact] = set(state.unique_seen)
    for step in state.trace:
        for a in step.actions:
            if a.name in _PROPERTY_ACTIONS or a.name.startswith("Secret_"):
                out.add(a)
            elif unique_facts and a.name in unique_facts:
                out.add(a)
    return sorted(out, key=lambda f: (f.name, tuple(map(term_key, f.args))))


def _canonical_key(state: ExecutionState, pool: frozenset, unique_facts=()) -> bytes:
    """Dedup key: facts, knowledge, budget use, and the set of property
    relevant actions, after renaming minted names and pool identities.

    Renaming is assigned while traversing a deterministic ordering of the
    concrete state, so equal keys certify isomorphic states; symmetric
    states collapse whenever the concrete ordering agrees with the
    symmetry, and never merge semantically distinct states.
    """
    ren: Dict[Term, str] = {}

    def canon(t: Term) -> str:
        if isinstance(t, Name):
            tok = ren.get(t)
            if tok is None:
                tok = ren[t] = f"N{len(ren)}"
            return tok
        if isinstance(t, Const):
            if t.name in pool:
                tok = ren.get(t)
                if tok is None:
                    tok = ren[t] = f"I{len(ren)}"
                return tok
            return f"'{t.name}'"
        if isinstance(t, App):
            return t.fun + "(" + ",".join(canon(a) for a in t.args) + ")"
        return render(t)

    def fact_str(f: Fact) -> str:
        return ("!" if f.persistent else "") + f.name + "(" + ",".join(canon(a) for a in f.args) + ")"

    def sort_key(f: Fact):
        return (f.name, f.persistent, tuple(map(term_key, f.args)))

    parts = [str(state.fresh_rounds)]
    for f, n in sorted(state.linear.items(), key=lambda kv: sort_key(kv[0])):
        parts.append(f"{n}*{fact_str(f)}")
    parts.append("#")
    for f in sorted(state.persistent, key=sort_key):
        parts.append(fact_str(f))
    parts.append("#")
    for f in _relevant_actions(state, unique_facts):
        parts.append(fact_str(f))
    parts.append("#")
    # the knowledge part depends only on the set contents plus the tokens
    # assigned to its renamable atoms; states share knowledge objects, so
    # cache the serialisation per (object, token assignment)
    know = state.knowledge
    cached_atoms = getattr(know, "_renamable_atoms", None)
    if cached_atoms is None or cached_atoms[0] != pool:
        found = set()
        for t in know.analyzed:
            for u in subterms(t):
                if isinstance(u, Name) or (isinstance(u, Const) and u.name in pool):
                    found.add(u)
        cached_atoms = (pool, tuple(sorted(found, key=term_key)))
        know._renamable_atoms = cached_atoms
        know._canon_cache = {}
    atoms = cached_atoms[1]
    sig = tuple(canon(a) for a in atoms)
    cache = getattr(know, "_canon_cache", None)
    if cache is None:
        cache = know._canon_cache = {}
    know_str = cache.get(sig)
    if know_str is None:
        know_str = ",".join(sorted(canon(t) for t in know.analyzed))
        cache[sig] = know_str
    parts.append(know_str)
    return hashlib.sha256("\n".join(parts).encode()).digest()


def search_attack(
    m: Model,
    prop: SearchProperty,
    bounds: SearchBounds,
    cfg: ExecConfig = ExecConfig(),
) -> Optional[Trace]:
    """Exhaustive bounded interleaving search for a property violation.

    Returns a minimal-length violating trace (ties resolved toward the
    lexicographically least rule-name sequence), or None when the bounded
    state space contains no violation.  None is a bounded verdict, never
    a proof.
    """
    cfg = replace(cfg, composition_depth=bounds.composition_depth)
    unique = uniqueness_restrictions(m)
    pool = frozenset(cfg.identities) | frozenset(cfg.fillers)
    rules = sorted(m.rules, key=lambda r: r.name)

    start = initial_state(m, cfg)
    v = prop.violations(start.trace, start.knowledge)
    if v:
        return start.trace
    frontier = [start]
    visited = {_canonical_key(start, pool, unique)}
    for _depth in range(bounds.max_steps):
        nxt: List[ExecutionState] = []
        for state in frontier:
            for r in rules:
                mints = any(f.name == "Fr" for f in r.premises)
                if mints and state.fresh_rounds >= bounds.fresh_budget:
                    continue
                for inst in applicable_instances(r, state, cfg):
                    succ = apply_instance(state, inst, unique)
                    if succ is None:
                        continue
                    if prop.violations(succ.trace, succ.knowledge):
                        return succ.trace
                    key = _canonical_key(succ, pool, unique)
                    if key not in visited:
                        visited.add(key)
                        nxt.append(succ)
        frontier = nxt
        if not frontier:
            break
    return None


# ---------------------------------------------------------------------------
# Structured trace output

def trace_to_json(
    m: Model,
    result: RunResult,
    scenario_name: str = "",
) -> str:
    """Machine-readable trace; field meanings documented in the README."""
    doc = {
        "model": m.name,
        "scenario": scenario_name,
        "steps": [
            {
                "index": s.index,
                "rule": s.rule,
                "actions": [
                    {"name": a.name, "args": [render(x) for x in a.args]}
                    for a in s.actions
                ],
            }
            for s in result.trace
        ],
        "attacker_knowledge": [render(t) for t in result.state.knowledge],
        "replay_restriction_satisfied": check_replay_restriction(result.trace),
    }
    return json.dumps(doc, indent=2) + "\n"
