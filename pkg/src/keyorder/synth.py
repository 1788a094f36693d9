"""Synthetic ping-pong chain-of-keys benchmark models.

Two roles share a pre-shared key k0; exchange i mints a fresh key k_i and
sends it encrypted under k_{i-1}, alternating sender roles.  One secrecy
lemma per minted key.  Lemma order is the dependency order, a seeded
random permutation of it, or the dependency order with reuse disabled.

The permutation generator is pinned: Fisher-Yates driven by splitmix64,
so a given seed reproduces byte-identical models everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

from .model import Fact, Lemma, Model, RewriteRule
from .terms import const, fresh_var, msg_var, senc, sign, tuple_term

ORDER_DEPENDENCY = "dep"
ORDER_RANDOM = "rand"
ORDER_NONE = "none"

_ORDERINGS = (ORDER_DEPENDENCY, ORDER_RANDOM, ORDER_NONE)


@dataclass(frozen=True)
class ChainSpec:
    depth: int
    reuse: bool = False
    ordering: str = ORDER_DEPENDENCY
    seed: Optional[int] = None

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError("depth must be at least 2")
        if self.depth % 2 != 0:
            raise ValueError("depth must be even (ping-pong alternation)")
        if self.ordering not in _ORDERINGS:
            raise ValueError(f"ordering must be one of {_ORDERINGS}")
        if self.ordering == ORDER_RANDOM and self.seed is None:
            raise ValueError("random ordering needs a seed")


_MASK = (1 << 64) - 1


def _splitmix64(state: int):
    """The splitmix64 generator; yields 64-bit values forever."""
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        yield z ^ (z >> 31)


def seeded_permutation(n: int, seed: int) -> List[int]:
    """Fisher-Yates permutation of range(n) driven by splitmix64(seed)."""
    gen = _splitmix64(seed & _MASK)
    out = list(range(n))
    for i in range(n - 1, 0, -1):
        j = next(gen) % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def _secrecy_lemma(i: int, reuse: bool) -> Lemma:
    attrs = ("reuse",) if reuse else ()
    formula = (
        f"All x #i. Secret_k{i}(x) @ i ==> not (Ex #j. KU(x) @ j)"
    )
    return Lemma(f"secret_k{i}", attrs, formula)


def generate_chain_model(spec: ChainSpec) -> Model:
    """Build the chain model of the given depth as a Model value."""
    d = spec.depth
    rules = []

    k0 = fresh_var("k0")
    # the pre-shared key is installed in both role states
    rules.append(
        RewriteRule(
            "Setup",
            premises=(Fact("Fr", (k0,)),),
            actions=(Fact("Secret_k0", (k0,)),),
            conclusions=(
                Fact("F_StA", (const("c0"), k0)),
                Fact("F_StB", (const("c0"), k0)),
            ),
        )
    )

    for i in range(1, d + 1):
        side = "F_StA" if i % 2 == 1 else "F_StB"
        ki = fresh_var(f"k{i}")
        if i == 1:
            prev = msg_var("k0")
            premises = (Fact(side, (const("c0"), prev)), Fact("Fr", (ki,)))
        else:
            older = msg_var(f"k{i - 2}")
            prev = msg_var(f"k{i - 1}")
            premises = (
                Fact(side, (const(f"c{i - 2}"), older)),
                Fact("In", (senc(tuple_term(const(f"m{i - 1}"), prev), older),)),
                Fact("Fr", (ki,)),
            )
        rules.append(
            RewriteRule(
                f"Exchange{i}",
                premises=premises,
                actions=(Fact(f"Secret_k{i}", (ki,)),),
                conclusions=(
                    Fact(side, (const(f"c{i}"), ki)),
                    Fact("Out", (senc(tuple_term(const(f"m{i}"), ki), prev),)),
                ),
            )
        )

    order = list(range(1, d + 1))
    if spec.ordering == ORDER_RANDOM:
        order = [order[i] for i in seeded_permutation(d, spec.seed)]
    reuse = spec.reuse and spec.ordering != ORDER_NONE
    lemmas = tuple(_secrecy_lemma(i, reuse) for i in order)

    name = f"chain_depth{d}"
    return Model(name, (), tuple(rules), lemmas, ())
