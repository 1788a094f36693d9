"""Sorted first-order terms over a fixed cryptographic signature.

Terms are interned: always build them through the factory functions below
(``fresh_var``, ``const``, ``app``, ...).  Equality and hashing are then
identity based, which keeps the executor's set-heavy workloads cheap.

The sort lattice is ``fresh < msg`` and ``pub < msg``: a message variable
may bind any term, a fresh variable only fresh-sorted terms, a public
variable only public names.
"""

from __future__ import annotations

import enum
from typing import Iterable, Iterator, Mapping, Optional

SORT_FRESH = "fresh"
SORT_PUB = "pub"
SORT_MSG = "msg"


class Term:
    __slots__ = ()


class Var(Term):
    """A variable with one of the three sorts (surface: ``~x``, ``$x``, ``x``)."""

    __slots__ = ("name", "sort", "ground")

    def __init__(self, name: str, sort: str):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "sort", sort)
        object.__setattr__(self, "ground", False)

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("Var is immutable")

    def __repr__(self):
        return render(self)


class Const(Term):
    """A public name, written ``'c'`` in the surface syntax."""

    __slots__ = ("name", "ground")

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "ground", True)

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("Const is immutable")

    def __repr__(self):
        return render(self)


class Name(Term):
    """A fresh name minted at execution time, displayed ``~base.index``."""

    __slots__ = ("base", "index", "ground")

    def __init__(self, base: str, index: int):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "ground", True)

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("Name is immutable")

    def __repr__(self):
        return render(self)


class App(Term):
    """Application of a function symbol to argument terms."""

    __slots__ = ("fun", "args", "ground")

    def __init__(self, fun: str, args: tuple):
        object.__setattr__(self, "fun", fun)
        object.__setattr__(self, "args", args)
        object.__setattr__(self, "ground", all(a.ground for a in args))

    def __setattr__(self, *a):  # pragma: no cover - guard
        raise AttributeError("App is immutable")

    def __repr__(self):
        return render(self)


_vars: dict = {}
_consts: dict = {}
_names: dict = {}
_apps: dict = {}


def var(name: str, sort: str) -> Var:
    key = (name, sort)
    t = _vars.get(key)
    if t is None:
        t = _vars[key] = Var(name, sort)
    return t


def fresh_var(name: str) -> Var:
    return var(name, SORT_FRESH)


def pub_var(name: str) -> Var:
    return var(name, SORT_PUB)


def msg_var(name: str) -> Var:
    return var(name, SORT_MSG)


def const(name: str) -> Const:
    t = _consts.get(name)
    if t is None:
        t = _consts[name] = Const(name)
    return t


def fresh_name(base: str, index: int) -> Name:
    key = (base, index)
    t = _names.get(key)
    if t is None:
        t = _names[key] = Name(base, index)
    return t


def app(fun: str, args: Iterable[Term] = ()) -> App:
    args = tuple(args)
    key = (fun, args)
    t = _apps.get(key)
    if t is None:
        t = _apps[key] = App(fun, args)
    return t


# Convenience constructors for the fixed signature.

def senc(m, k):
    return app("senc", (m, k))


def sdec(c, k):
    return app("sdec", (c, k))


def aenc(m, k):
    return app("aenc", (m, k))


def adec(c, k):
    return app("adec", (c, k))


def pk(k):
    return app("pk", (k,))


def sign(m, k):
    return app("sign", (m, k))


def verify(sig, m, key):
    return app("verify", (sig, m, key))


def h(m):
    return app("h", (m,))


def kdf(a, b):
    return app("kdf", (a, b))


def pair(a, b):
    return app("pair", (a, b))


def fst(p):
    return app("fst", (p,))


def snd(p):
    return app("snd", (p,))


TRUE = app("true", ())


def tuple_term(*parts: Term) -> Term:
    """Right-nested pair encoding of ``<t1, ..., tn>``."""
    if not parts:
        raise ValueError("empty tuple")
    if len(parts) == 1:
        return parts[0]
    return pair(parts[0], tuple_term(*parts[1:]))


def tuple_parts(t: Term) -> list:
    """Flatten the right spine of nested pairs (inverse of tuple_term)."""
    parts = []
    while isinstance(t, App) and t.fun == "pair":
        parts.append(t.args[0])
        t = t.args[1]
    parts.append(t)
    return parts


BASE_SIGNATURE = {
    "senc": 2,
    "sdec": 2,
    "aenc": 2,
    "adec": 2,
    "pk": 1,
    "sign": 2,
    "verify": 3,
    "h": 1,
    "kdf": 2,
    "pair": 2,
    "fst": 1,
    "snd": 1,
    "true": 0,
}

# Symbols the attacker may apply when composing messages.  Destructors are
# omitted: on ground normal forms they only produce stuck terms that no
# receiver pattern can use.
CONSTRUCTIVE = {"senc", "aenc", "pk", "sign", "verify", "h", "kdf", "pair", "true"}


class SignatureError(ValueError):
    pass


class Signature:
    """The fixed symbol set, optionally extended by model declarations."""

    def __init__(self, extra: Optional[Mapping[str, int]] = None):
        self._arities = dict(BASE_SIGNATURE)
        if extra:
            for fun, arity in extra.items():
                self.declare(fun, arity)

    def declare(self, fun: str, arity: int) -> None:
        known = self._arities.get(fun)
        if known is not None and known != arity:
            raise SignatureError(
                f"symbol {fun}/{arity} conflicts with existing arity {known}"
            )
        self._arities[fun] = arity

    def knows(self, fun: str) -> bool:
        return fun in self._arities

    def arity(self, fun: str) -> int:
        return self._arities[fun]

    def declared(self) -> dict:
        """Symbols beyond the base signature, for serialization."""
        return {
            f: a for f, a in self._arities.items() if BASE_SIGNATURE.get(f) != a
        }


class Role(enum.Enum):
    """Why a subterm counts as a key occurrence."""

    SYM_KEY = "SymKey"
    ASYM_PRIV_KEY = "AsymPrivKey"
    SIG_KEY = "SigKey"
    KDF_INPUT = "KdfInput"


def term_sort(t: Term) -> str:
    if isinstance(t, Var):
        return t.sort
    if isinstance(t, Const):
        return SORT_PUB
    if isinstance(t, Name):
        return SORT_FRESH
    return SORT_MSG


def _sort_accepts(var_sort: str, t: Term) -> bool:
    if var_sort == SORT_MSG:
        return True
    return term_sort(t) == var_sort


def is_ground(t: Term) -> bool:
    return t.ground


def subterms(t: Term) -> Iterator[Term]:
    """All subterms including ``t`` itself, pre-order."""
    stack = [t]
    while stack:
        u = stack.pop()
        yield u
        if isinstance(u, App):
            stack.extend(reversed(u.args))


def free_vars(t: Term) -> frozenset:
    out = set()
    for u in subterms(t):
        if isinstance(u, Var):
            out.add(u)
    return frozenset(out)


def substitute(t: Term, s: Mapping[Var, Term]) -> Term:
    """Apply the substitution recursively; domain variables never survive."""
    if not s or t.ground:
        return t
    if isinstance(t, Var):
        r = s.get(t)
        return t if r is None else r
    if isinstance(t, App):
        args = tuple(substitute(a, s) for a in t.args)
        if args == t.args:
            return t
        return app(t.fun, args)
    return t


def compose(s1: Mapping[Var, Term], s2: Mapping[Var, Term]) -> dict:
    """Substitution equal to applying s1 first, then s2."""
    out = {v: substitute(t, s2) for v, t in s1.items()}
    for v, t in s2.items():
        if v not in out:
            out[v] = t
    return {v: t for v, t in out.items() if v is not t}


def unify(t1: Term, t2: Term) -> Optional[dict]:
    """Most general unifier of two terms, or None.

    Syntactic (free theory) unification with occurs check; the result is
    idempotent.  Sort discipline: a variable only binds terms of its sort,
    with msg accepting everything.
    """
    return unify_all([(t1, t2)])


def unify_all(eqs: list) -> Optional[dict]:
    unifier: dict = {}
    work = list(eqs)
    while work:
        a, b = work.pop()
        a = substitute(a, unifier)
        b = substitute(b, unifier)
        if a is b:
            continue
        if isinstance(a, App) and isinstance(b, App):
            if a.fun != b.fun or len(a.args) != len(b.args):
                return None
            work.extend(zip(a.args, b.args))
            continue
        if not isinstance(a, Var) and isinstance(b, Var):
            a, b = b, a
        if not isinstance(a, Var):
            return None  # two distinct atoms
        if isinstance(b, Var) and not _sort_accepts(a.sort, b) and _sort_accepts(b.sort, a):
            a, b = b, a  # bind the more general variable
        if not _sort_accepts(a.sort, b):
            return None
        if a in free_vars(b):
            return None  # occurs check
        binding = {a: b}
        unifier = {v: substitute(t, binding) for v, t in unifier.items()}
        unifier[a] = b
    return unifier


def match(pattern: Term, ground: Term, binding: Optional[dict] = None) -> Optional[dict]:
    """One-way matching of a pattern against a ground term."""
    out = dict(binding) if binding else {}
    work = [(pattern, ground)]
    while work:
        p, g = work.pop()
        if isinstance(p, Var):
            bound = out.get(p)
            if bound is not None:
                if bound is not g:
                    return None
                continue
            if not _sort_accepts(p.sort, g):
                return None
            out[p] = g
            continue
        if isinstance(p, App):
            if not isinstance(g, App) or p.fun != g.fun or len(p.args) != len(g.args):
                return None
            work.extend(zip(p.args, g.args))
            continue
        if p is not g:
            return None
    return out


_normal_cache: dict = {}

_PROJ = {"fst": 0, "snd": 1}


def normalize(t: Term) -> Term:
    """Normal form under the convergent cryptographic rewrite rules.

    sdec(senc(m,k),k) -> m;  adec(aenc(m,pk(k)),k) -> m;
    fst(pair(a,b)) -> a;  snd(pair(a,b)) -> b;
    verify(sign(m,k),m,pk(k)) -> true.  h, kdf and sign stay free.
    """
    if not isinstance(t, App):
        return t
    cached = _normal_cache.get(t)
    if cached is not None:
        return cached
    args = tuple(normalize(a) for a in t.args)
    out = app(t.fun, args)
    fun = t.fun
    if fun == "sdec":
        c, k = args
        if isinstance(c, App) and c.fun == "senc" and c.args[1] is k:
            out = c.args[0]
    elif fun == "adec":
        c, k = args
        if (
            isinstance(c, App)
            and c.fun == "aenc"
            and isinstance(c.args[1], App)
            and c.args[1].fun == "pk"
            and c.args[1].args[0] is k
        ):
            out = c.args[0]
    elif fun in _PROJ:
        (p,) = args
        if isinstance(p, App) and p.fun == "pair":
            out = p.args[_PROJ[fun]]
    elif fun == "verify":
        sig, m, key = args
        if (
            isinstance(sig, App)
            and sig.fun == "sign"
            and sig.args[0] is m
            and isinstance(key, App)
            and key.fun == "pk"
            and key.args[0] is sig.args[1]
        ):
            out = TRUE
    _normal_cache[t] = out
    return out


def key_positions(t: Term) -> list:
    """Subterms standing in a key position, with their role.

    Scans recursively, including encryption payloads: the second argument
    of senc, k inside aenc(_, pk(k)), the second argument of sign, and
    both arguments of kdf.
    """
    out = []

    def go(u: Term) -> None:
        if not isinstance(u, App):
            return
        if u.fun == "senc":
            out.append((u.args[1], Role.SYM_KEY))
        elif u.fun == "aenc":
            k = u.args[1]
            if isinstance(k, App) and k.fun == "pk":
                out.append((k.args[0], Role.ASYM_PRIV_KEY))
        elif u.fun == "sign":
            out.append((u.args[1], Role.SIG_KEY))
        elif u.fun == "kdf":
            out.append((u.args[0], Role.KDF_INPUT))
            out.append((u.args[1], Role.KDF_INPUT))
        for a in u.args:
            go(a)

    go(t)
    return out


_term_key_cache: dict = {}


def term_key(t: Term):
    """Stable sort key, independent of interning order."""
    k = _term_key_cache.get(t)
    if k is not None:
        return k
    if isinstance(t, Var):
        k = (0, t.sort, t.name)
    elif isinstance(t, Const):
        k = (1, t.name)
    elif isinstance(t, Name):
        k = (2, t.base, t.index)
    else:
        k = (3, t.fun, tuple(term_key(a) for a in t.args))
    _term_key_cache[t] = k
    return k


def render(t: Term) -> str:
    """Surface syntax: ``~x``, ``$x``, ``x``, ``'c'``, ``f(...)``, ``<...>``."""
    if isinstance(t, Var):
        marker = {SORT_FRESH: "~", SORT_PUB: "$", SORT_MSG: ""}[t.sort]
        return marker + t.name
    if isinstance(t, Const):
        return f"'{t.name}'"
    if isinstance(t, Name):
        return f"~{t.base}.{t.index}"
    if t.fun == "pair":
        return "<" + ", ".join(render(p) for p in tuple_parts(t)) + ">"
    if not t.args:
        return t.fun
    return t.fun + "(" + ", ".join(render(a) for a in t.args) + ")"


def depth(t: Term) -> int:
    if isinstance(t, App) and t.args:
        return 1 + max(depth(a) for a in t.args)
    return 0
