"""Frontend for the ``.spk`` protocol model dialect.

The dialect is a multiset-rewriting subset compatible with Tamarin-style
provers:

    theory NAME
    begin
    functions: f/2, g/1
    rule R:
      let x = <t1, t2> in
      [ premises ] --[ actions ]-> [ conclusions ]
    lemma name [reuse]: "formula"
    restriction name: "formula"
    end

``//`` and ``/* */`` comments are stripped by the lexer.  Lemma and
restriction formulas are stored verbatim; the toolkit never interprets
them beyond recognising uniqueness-shaped restrictions.  Multiset union
operators (``+``) are rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .terms import (
    App,
    Signature,
    SignatureError,
    SORT_FRESH,
    SORT_MSG,
    SORT_PUB,
    Term,
    Var,
    app,
    const,
    free_vars,
    render,
    substitute,
    term_key,
    tuple_term,
    var,
)

BUILTIN_FACTS = {"Fr": 1, "In": 1, "Out": 1, "K": 1}


class SpkSyntaxError(ValueError):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col
        self.reason = message


class ModelError(ValueError):
    """A structurally invalid model (arity conflicts, free variables, ...)."""


@dataclass(frozen=True)
class Fact:
    name: str
    args: tuple
    persistent: bool = False

    def __str__(self):
        bang = "!" if self.persistent else ""
        return f"{bang}{self.name}(" + ", ".join(render(a) for a in self.args) + ")"

    @property
    def arity(self) -> int:
        return len(self.args)


@dataclass(frozen=True)
class RewriteRule:
    name: str
    premises: tuple
    actions: tuple
    conclusions: tuple
    let_bindings: tuple = field(default=(), compare=False)

    def facts(self) -> Iterable[Fact]:
        yield from self.premises
        yield from self.actions
        yield from self.conclusions

    def variables(self) -> frozenset:
        out = set()
        for f in self.facts():
            for a in f.args:
                out |= free_vars(a)
        return frozenset(out)


@dataclass(frozen=True)
class Lemma:
    name: str
    attributes: tuple
    formula: str


@dataclass(frozen=True)
class Restriction:
    name: str
    formula: str


@dataclass(frozen=True)
class Model:
    name: str
    functions: tuple  # ((symbol, arity), ...) beyond the base signature
    rules: tuple
    lemmas: tuple = ()
    restrictions: tuple = ()

    def signature(self) -> Signature:
        return Signature(dict(self.functions))

    def rule(self, name: str) -> RewriteRule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)


@dataclass(frozen=True)
class Diagnostic:
    rule: str  # rule name or "" for model-level issues
    severity: str  # "error" | "warning"
    message: str


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<linecomment>//[^\n]*)
  | (?P<blockcomment>/\*.*?\*/)
  | (?P<string>"[^"]*")
  | (?P<const>'[^'\n]*')
  | (?P<arrowl>--\[)
  | (?P<arrowplain>-->)
  | (?P<arrowr>\]->)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>[\[\](),:=<>!~$./])
  | (?P<union>\+\+?)
    """,
    re.VERBOSE | re.DOTALL,
)

KEYWORDS = {"theory", "begin", "end", "functions", "rule", "lemma", "restriction", "let", "in"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str) -> list:
    toks = []
    pos = 0
    line = 1
    linestart = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if not m:
            col = pos - linestart + 1
            raise SpkSyntaxError(line, col, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        tok = m.group()
        col = pos - linestart + 1
        if kind == "union":
            raise SpkSyntaxError(
                line, col, "multiset union operator is not supported; "
                "use counter terms instead"
            )
        if kind not in ("ws", "linecomment", "blockcomment"):
            toks.append(_Tok(kind, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            linestart = pos + tok.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, n - linestart + 1))
    return toks


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def error(self, message: str, tok: Optional[_Tok] = None):
        tok = tok or self.peek()
        raise SpkSyntaxError(tok.line, tok.col, message)

    def expect(self, kind: str, text: Optional[str] = None) -> _Tok:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            self.error(f"expected {want!r}, found {t.text!r}")
        return self.next()

    def accept(self, kind: str, text: Optional[str] = None) -> Optional[_Tok]:
        t = self.peek()
        if t.kind == kind and (text is None or t.text == text):
            return self.next()
        return None

    # -- terms

    def parse_term(self, sig: Signature) -> Term:
        t = self.peek()
        if t.kind == "sym" and t.text == "~":
            self.next()
            name = self.expect("ident").text
            return var(name, SORT_FRESH)
        if t.kind == "sym" and t.text == "$":
            self.next()
            name = self.expect("ident").text
            return var(name, SORT_PUB)
        if t.kind == "const":
            self.next()
            return const(t.text[1:-1])
        if t.kind == "sym" and t.text == "<":
            self.next()
            parts = [self.parse_term(sig)]
            while self.accept("sym", ","):
                parts.append(self.parse_term(sig))
            self.expect("sym", ">")
            if len(parts) < 2:
                self.error("tuple needs at least two components", t)
            return tuple_term(*parts)
        if t.kind in ("ident", "int"):
            self.next()
            name = t.text
            if self.peek().kind == "sym" and self.peek().text == "(":
                if not sig.knows(name):
                    self.error(f"unknown function symbol {name!r}", t)
                self.next()
                args = []
                if not (self.peek().kind == "sym" and self.peek().text == ")"):
                    args.append(self.parse_term(sig))
                    while self.accept("sym", ","):
                        args.append(self.parse_term(sig))
                self.expect("sym", ")")
                if sig.arity(name) != len(args):
                    self.error(
                        f"{name} expects {sig.arity(name)} arguments, got {len(args)}", t
                    )
                return app(name, tuple(args))
            if sig.knows(name) and sig.arity(name) == 0:
                return app(name, ())
            if t.kind == "int":
                self.error("numeric literals must be quoted constants", t)
            return var(name, SORT_MSG)
        self.error(f"expected a term, found {t.text!r}")

    # -- facts

    def parse_fact(self, sig: Signature) -> Fact:
        persistent = bool(self.accept("sym", "!"))
        nametok = self.expect("ident")
        name = nametok.text
        self.expect("sym", "(")
        args = []
        if not (self.peek().kind == "sym" and self.peek().text == ")"):
            args.append(self.parse_term(sig))
            while self.accept("sym", ","):
                args.append(self.parse_term(sig))
        self.expect("sym", ")")
        if name in BUILTIN_FACTS:
            if persistent:
                self.error(f"builtin fact {name} cannot be persistent", nametok)
            if len(args) != BUILTIN_FACTS[name]:
                self.error(
                    f"builtin fact {name} expects {BUILTIN_FACTS[name]} argument(s)",
                    nametok,
                )
        return Fact(name, tuple(args), persistent)

    def parse_fact_list(self, sig: Signature) -> tuple:
        self.expect("sym", "[")
        facts = []
        if not (self.peek().kind == "sym" and self.peek().text == "]"):
            facts.append(self.parse_fact(sig))
            while self.accept("sym", ","):
                facts.append(self.parse_fact(sig))
        self.expect("sym", "]")
        return tuple(facts)

    # -- rules and model

    def parse_rule(self, sig: Signature) -> RewriteRule:
        self.expect("ident", "rule")
        name = self.expect("ident").text
        self.expect("sym", ":")
        lets = []
        if self.accept("ident", "let"):
            while self.peek().kind == "ident" and self.peek().text != "in":
                v = msg_let_var(self.expect("ident").text)
                self.expect("sym", "=")
                rhs = self.parse_term(sig)
                # earlier bindings are in scope for later ones
                rhs = substitute(rhs, dict(lets))
                lets.append((v, rhs))
            self.expect("ident", "in")
        binding = dict(lets)

        def expand(facts):
            return tuple(
                Fact(f.name, tuple(substitute(a, binding) for a in f.args), f.persistent)
                for f in facts
            )

        premises = expand(self.parse_fact_list(sig))
        arrow = self.peek()
        if arrow.kind == "arrowplain":
            self.next()
            actions: tuple = ()
        elif arrow.kind == "arrowl":
            self.next()
            actions = ()
            if not (self.peek().kind == "arrowr"):
                acts = [self.parse_fact(sig)]
                while self.accept("sym", ","):
                    acts.append(self.parse_fact(sig))
                actions = tuple(acts)
            self.expect("arrowr")
            actions = expand(actions)
        else:
            self.error("expected '-->' or '--[' after premises")
        conclusions = expand(self.parse_fact_list(sig))
        return RewriteRule(name, premises, actions, conclusions, tuple(lets))

    def parse_model(self) -> Model:
        self.expect("ident", "theory")
        name = self.expect("ident").text
        self.accept("ident", "begin")
        sig = Signature()
        declared = []
        if self.peek().kind == "ident" and self.peek().text == "functions":
            self.next()
            self.expect("sym", ":")
            while True:
                fn = self.expect("ident").text
                self.expect("sym", "/")
                ar = int(self.expect("int").text)
                try:
                    sig.declare(fn, ar)
                except SignatureError as e:
                    self.error(str(e))
                declared.append((fn, ar))
                if not self.accept("sym", ","):
                    break
        rules = []
        lemmas = []
        restrictions = []
        while True:
            t = self.peek()
            if t.kind == "eof":
                break
            if t.kind == "ident" and t.text == "end":
                self.next()
                if self.peek().kind != "eof":
                    self.error("unexpected input after 'end'")
                break
            if t.kind == "ident" and t.text == "rule":
                rules.append(self.parse_rule(sig))
            elif t.kind == "ident" and t.text in ("lemma", "restriction"):
                self.next()
                itemname = self.expect("ident").text
                attrs = []
                if t.text == "lemma" and self.accept("sym", "["):
                    attrs.append(self.expect("ident").text)
                    while self.accept("sym", ","):
                        attrs.append(self.expect("ident").text)
                    self.expect("sym", "]")
                self.expect("sym", ":")
                ftok = self.expect("string")
                formula = ftok.text[1:-1]
                if t.text == "lemma":
                    lemmas.append(Lemma(itemname, tuple(attrs), formula))
                else:
                    restrictions.append(Restriction(itemname, formula))
            else:
                self.error(f"expected 'rule', 'lemma', 'restriction' or 'end', found {t.text!r}")
        return Model(name, tuple(sorted(declared)), tuple(rules), tuple(lemmas), tuple(restrictions))


def msg_let_var(name: str) -> Var:
    return var(name, SORT_MSG)


def parse_term(text: str, signature: Optional[Signature] = None) -> Term:
    """Parse a single term in the shared surface syntax."""
    p = _Parser(text)
    t = p.parse_term(signature or Signature())
    if p.peek().kind != "eof":
        p.error("trailing input after term")
    return t


def parse_model(text: str) -> Model:
    """Parse and validate a model; raises on syntax or structural errors."""
    m = _Parser(text).parse_model()
    errors = [d for d in validate(m) if d.severity == "error"]
    if errors:
        d = errors[0]
        where = f" in rule {d.rule}" if d.rule else ""
        raise ModelError(f"{d.message}{where}" + (
            f" (+{len(errors) - 1} more)" if len(errors) > 1 else ""))
    return m


# ---------------------------------------------------------------------------
# Validation

def validate(m: Model) -> list:
    """Structural diagnostics; an empty list means the model is well formed."""
    diags: list = []
    seen_rules = set()
    for r in m.rules:
        if r.name in seen_rules:
            diags.append(Diagnostic(r.name, "error", f"duplicate rule name {r.name}"))
        seen_rules.add(r.name)
    seen_lemmas = set()
    for l in m.lemmas:
        if l.name in seen_lemmas:
            diags.append(Diagnostic("", "error", f"duplicate lemma name {l.name}"))
        seen_lemmas.add(l.name)

    arities: dict = dict(BUILTIN_FACTS)
    persistence: dict = {}
    for r in m.rules:
        for f in r.facts():
            known = arities.get(f.name)
            if known is not None and known != f.arity:
                diags.append(
                    Diagnostic(
                        r.name,
                        "error",
                        f"fact {f.name} used with arity {f.arity} but previously {known}",
                    )
                )
            else:
                arities.setdefault(f.name, f.arity)
            if f.name not in BUILTIN_FACTS:
                prev = persistence.get(f.name)
                if prev is not None and prev != f.persistent:
                    diags.append(
                        Diagnostic(
                            r.name,
                            "error",
                            f"fact {f.name} used both with and without persistence",
                        )
                    )
                persistence.setdefault(f.name, f.persistent)

    for r in m.rules:
        fresh_bound = set()
        for f in r.premises:
            if f.name == "Out":
                diags.append(Diagnostic(r.name, "error", "Out not allowed in premise"))
            if f.name == "K":
                diags.append(Diagnostic(r.name, "error", "K not allowed in premise"))
            if f.name == "Fr":
                a = f.args[0]
                if not (isinstance(a, Var) and a.sort == SORT_FRESH):
                    diags.append(
                        Diagnostic(r.name, "error", "Fr premise must bind a fresh variable")
                    )
                else:
                    fresh_bound.add(a)
        for f in r.conclusions:
            if f.name == "In":
                diags.append(Diagnostic(r.name, "error", "In not allowed in conclusion"))
            if f.name == "Fr":
                diags.append(Diagnostic(r.name, "error", "Fr not allowed in conclusion"))
            if f.name == "K":
                diags.append(Diagnostic(r.name, "error", "K not allowed in conclusion"))
        for f in r.actions:
            if f.name in ("In", "Out", "Fr"):
                diags.append(
                    Diagnostic(r.name, "error", f"{f.name} not allowed as an action")
                )

        premise_vars = set()
        for f in r.premises:
            for a in f.args:
                premise_vars |= free_vars(a)
        let_vars = {v for v, _ in r.let_bindings}
        allowed = premise_vars | fresh_bound | let_vars
        for f in list(r.conclusions) + list(r.actions):
            for a in f.args:
                for v in free_vars(a) - allowed:
                    diags.append(
                        Diagnostic(
                            r.name,
                            "error",
                            f"variable {render(v)} in {f.name} does not occur in "
                            "premises, let bindings, or Fr",
                        )
                    )
                    allowed.add(v)  # report each variable once

        names_by_sort: dict = {}
        for v in r.variables():
            names_by_sort.setdefault(v.name, set()).add(v.sort)
        for vname, sorts in sorted(names_by_sort.items()):
            if SORT_FRESH in sorts and SORT_PUB in sorts:
                diags.append(
                    Diagnostic(
                        r.name,
                        "error",
                        f"name {vname} used with both fresh and public sort",
                    )
                )
    return diags


# ---------------------------------------------------------------------------
# Serializer

def _fact_str(f: Fact) -> str:
    return str(f)


def serialize(m: Model) -> str:
    """Canonical text form; re-parsing yields an equal Model."""
    out = [f"theory {m.name}", "begin", ""]
    if m.functions:
        decls = ", ".join(f"{f}/{a}" for f, a in sorted(m.functions))
        out.append(f"functions: {decls}")
        out.append("")
    for r in m.rules:
        out.append(f"rule {r.name}:")
        out.append("  [ " + ", ".join(map(_fact_str, r.premises)) + " ]")
        if r.actions:
            out.append("  --[ " + ", ".join(map(_fact_str, r.actions)) + " ]->")
        else:
            out.append("  -->")
        out.append("  [ " + ", ".join(map(_fact_str, r.conclusions)) + " ]")
        out.append("")
    for l in m.lemmas:
        attr = f" [{', '.join(l.attributes)}]" if l.attributes else ""
        out.append(f"lemma {l.name}{attr}:")
        out.append(f'  "{l.formula}"')
        out.append("")
    for rst in m.restrictions:
        out.append(f"restriction {rst.name}:")
        out.append(f'  "{rst.formula}"')
        out.append("")
    out.append("end")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Restriction recognition

_UNIQ_RE = re.compile(
    r"^All\s+(?P<vars>[A-Za-z0-9_\s]*?)\s*#(?P<i>\w+)\s+#(?P<j>\w+)\s*\.\s*"
    r"(?P<fact>\w+)\((?P<args1>[^)]*)\)\s*@\s*#?(?P=i)\s*&\s*"
    r"(?P=fact)\((?P<args2>[^)]*)\)\s*@\s*#?(?P=j)\s*==>\s*#?(?P=i)\s*=\s*#?(?P=j)\s*$"
)


def uniqueness_restrictions(m: Model) -> list:
    """Fact names constrained to at most one occurrence per ground instance.

    Recognises the restriction shape
    ``All xs #i #j. F(xs) @ i & F(xs) @ j ==> #i = #j`` (replay protection
    uses it with the Message fact).  Other restriction shapes are kept
    verbatim for the external prover and ignored by the executor.
    """
    names = []
    for r in m.restrictions:
        mm = _UNIQ_RE.match(" ".join(r.formula.split()))
        if mm and mm.group("args1").strip() == mm.group("args2").strip():
            names.append(mm.group("fact"))
    return names


def sort_facts(facts: Iterable[Fact]) -> list:
    return sorted(facts, key=lambda f: (f.name, f.persistent, tuple(map(term_key, f.args))))
