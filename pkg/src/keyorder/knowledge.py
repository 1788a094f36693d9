"""Dolev-Yao attacker knowledge: decomposition closure plus bounded composition.

The analyzed set is saturated under the size-decreasing deduction rules
(projection, symmetric and asymmetric decryption with derivable keys).
Composition is kept symbolic: membership queries decide whether a term
can be built from analyzed parts with constructive symbols, bounded by a
nesting budget.  Materialising compositions would blow up; the bounded
``derivable`` check gives the same observable answers.
"""

from __future__ import annotations

from typing import Dict, Iterable, Iterator, Optional, Set

from .terms import (
    App,
    CONSTRUCTIVE,
    Const,
    Name,
    Term,
    is_ground,
    normalize,
    term_key,
)

DEFAULT_COMPOSITION_DEPTH = 12


class KnowledgeSet:
    """A deduction-closed set of ground terms.

    ``add`` inserts and re-saturates; ``derivable`` (and ``in``) answer
    membership in the closure.  Instances are cheap to copy; saturation
    is incremental.  Derivability results cached as true stay true: the
    set only grows.
    """

    def __init__(self, terms: Iterable[Term] = (), composition_depth: int = DEFAULT_COMPOSITION_DEPTH):
        self.composition_depth = composition_depth
        self._analyzed: Set[Term] = set()
        self._by_head: Dict[str, Set[Term]] = {}
        self._true_budget: Dict[Term, int] = {}  # minimal sufficient budget
        self._false_budget: Dict[Term, int] = {}  # maximal failing budget; reset on growth
        self.solve_memo: Dict = {}  # pattern solving cache, owned by matching
        self._sorted_cache: Dict = {}
        for t in terms:
            self._insert(normalize(t))
        self._saturate()

    # -- core set maintenance

    def _insert(self, t: Term) -> bool:
        if t in self._analyzed:
            return False
        self._analyzed.add(t)
        if isinstance(t, App):
            self._by_head.setdefault(t.fun, set()).add(t)
        return True

    def _saturate(self) -> None:
        work = True
        while work:
            work = False
            for t in list(self._analyzed):
                if isinstance(t, App) and t.fun == "pair":
                    for part in t.args:
                        work |= self._insert(part)
            for c in list(self.by_head("senc")):
                payload, keyterm = c.args
                if payload not in self._analyzed and self.derivable(keyterm):
                    work |= self._insert(payload)
            for c in list(self.by_head("aenc")):
                payload, keyterm = c.args
                if (
                    payload not in self._analyzed
                    and isinstance(keyterm, App)
                    and keyterm.fun == "pk"
                    and self.derivable(keyterm.args[0])
                ):
                    work |= self._insert(payload)

    def add(self, *terms: Term) -> "KnowledgeSet":
        changed = False
        for t in terms:
            changed |= self._insert(normalize(t))
        if changed:
            self._saturate()
            self.solve_memo = {}  # solver results are not growth-stable
            self._false_budget = {}
            self._sorted_cache = {}
        return self

    def copy(self) -> "KnowledgeSet":
        k = KnowledgeSet.__new__(KnowledgeSet)
        k.composition_depth = self.composition_depth
        k._analyzed = set(self._analyzed)
        k._by_head = {h: set(s) for h, s in self._by_head.items()}
        k._true_budget = dict(self._true_budget)
        k._false_budget = dict(self._false_budget)
        k.solve_memo = {}
        k._sorted_cache = {}
        return k

    # -- queries

    @property
    def analyzed(self) -> frozenset:
        return frozenset(self._analyzed)

    def by_head(self, fun: str) -> Set[Term]:
        return self._by_head.get(fun, set())

    def sorted_by_head(self, fun: str, first=None) -> list:
        """Analyzed terms with the given head, optionally narrowed by an
        interned first argument, in stable order.  Cached until growth."""
        key = (fun, first)
        got = self._sorted_cache.get(key)
        if got is None:
            terms = self._by_head.get(fun, ())
            if first is not None:
                terms = [t for t in terms if t.args and t.args[0] is first]
            got = sorted(terms, key=term_key)
            self._sorted_cache[key] = got
        return got

    def sorted_analyzed(self) -> list:
        got = self._sorted_cache.get(("*", None))
        if got is None:
            got = sorted(self._analyzed, key=term_key)
            self._sorted_cache[("*", None)] = got
        return got

    def derivable(self, t: Term, depth: Optional[int] = None) -> bool:
        """Can the attacker produce t from the analyzed set?

        Composition is allowed for constructive symbols only, nested at
        most ``depth`` levels (the configured default when omitted).
        """
        if depth is None:
            depth = self.composition_depth
        t = normalize(t)
        if t in self._analyzed:
            return True
        tb = self._true_budget.get(t)
        if tb is not None and depth >= tb:
            return True
        fb = self._false_budget.get(t)
        if fb is not None and depth <= fb:
            return False
        if isinstance(t, Const):
            self._true_budget[t] = 0
            return True  # public names are attacker knowledge
        if isinstance(t, Name):
            return False
        if isinstance(t, App) and t.fun in CONSTRUCTIVE and depth > 0:
            if all(self.derivable(a, depth - 1) for a in t.args):
                if tb is None or depth < tb:
                    self._true_budget[t] = depth
                return True
        if fb is None or depth > fb:
            self._false_budget[t] = depth
        return False

    def __contains__(self, t: Term) -> bool:
        return self.derivable(t)

    def __len__(self) -> int:
        return len(self._analyzed)

    def __iter__(self) -> Iterator[Term]:
        return iter(sorted(self._analyzed, key=term_key))

    def closure(self) -> "KnowledgeSet":
        """The set is kept saturated; exposed for API symmetry."""
        self._saturate()
        return self

    def snapshot_key(self):
        return frozenset(self._analyzed)


def closure(terms: Iterable[Term], composition_depth: int = DEFAULT_COMPOSITION_DEPTH) -> KnowledgeSet:
    """Deduction closure of ground terms (see KnowledgeSet)."""
    for t in terms:
        assert is_ground(t), f"knowledge must be ground: {t!r}"
    return KnowledgeSet(terms, composition_depth=composition_depth)
