"""Goal ranking for the external prover's oracle hook.

The prover pipes proof goals as ``index: goal-text`` lines; the oracle
answers with the indices it wants solved first, one per line.  Ranking
policy: helper lemmas for a key class are emitted, in key order, only if
a knowledge goal ``KU(k)`` for that class is present; signature goals
come next, then the knowledge goals themselves in key order.  Goals that
match nothing are withheld so the prover's own heuristics take over.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from typing import IO, Iterable, List, Optional, Sequence, Tuple

try:
    import tomllib as _toml  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as _toml


@dataclass(frozen=True)
class GoalLine:
    index: int
    text: str


@dataclass(frozen=True)
class OracleConfig:
    ordering: Tuple[str, ...]
    helper_pattern: str = "secret_{label}"
    ltk_labels: frozenset = frozenset()

    def __post_init__(self):
        if len(set(self.ordering)) != len(self.ordering):
            raise ValueError("ordering labels must be distinct")
        if "{label}" not in self.helper_pattern:
            raise ValueError("helper_pattern must contain {label}")


@dataclass(frozen=True)
class GoalKind:
    kind: str  # "knowledge" | "helper" | "signature" | "other"
    label: Optional[str] = None


KNOWLEDGE = "knowledge"
HELPER = "helper"
SIGNATURE = "signature"
OTHER = "other"

_KU_RE = re.compile(r"!?KU\s*\(")
_SUFFIX_RE = re.compile(r"\.\d+$")


def _ku_argument(text: str) -> Optional[str]:
    m = _KU_RE.search(text)
    if not m:
        return None
    depth = 1
    start = m.end()
    for i in range(start, len(text)):
        c = text[i]
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                return text[start:i].strip()
    return text[start:].strip()


def _key_name(arg: str) -> Optional[str]:
    """Class-label candidate from a printed KU argument."""
    arg = arg.strip()
    head = re.match(r"[~$']*([A-Za-z_][A-Za-z0-9_]*)", arg)
    if not head:
        return None
    name = head.group(1)
    rest = arg[head.end():]
    if rest.startswith("("):
        return name  # application head
    # a bare token, possibly with a fresh-instance suffix like ~pgk.3
    token = re.match(r"[~$']*([A-Za-z_][A-Za-z0-9_]*)(\.\d+)?'?\s*$", arg)
    return token.group(1) if token else name


def classify_goal(goal: GoalLine, cfg: OracleConfig) -> GoalKind:
    """Classify one printed goal line.

    Helper-lemma name matches take precedence; then KU goals are split
    into signature goals (a sign(..) under KU, or a long-term-key label)
    and knowledge-of-key goals.
    """
    text = goal.text
    for label in cfg.ordering:
        if cfg.helper_pattern.format(label=label) in text:
            return GoalKind(HELPER, label)
    arg = _ku_argument(text)
    if arg is not None:
        if "sign(" in arg:
            return GoalKind(SIGNATURE)
        name = _key_name(arg)
        if name is not None:
            if name in cfg.ordering:
                return GoalKind(KNOWLEDGE, name)
            if name in cfg.ltk_labels:
                return GoalKind(SIGNATURE)
    return GoalKind(OTHER)


def rank_goals(goals: Sequence[GoalLine], cfg: OracleConfig) -> List[int]:
    """Ordered list of goal indices per the key-order ranking policy.

    Within a category input order is preserved; indices never repeat and
    unmatched goals are not emitted.
    """
    kinds = [(g, classify_goal(g, cfg)) for g in goals]
    knowledge_labels = {k.label for _g, k in kinds if k.kind == KNOWLEDGE}
    ranked: List[int] = []
    for label in cfg.ordering:
        if label not in knowledge_labels:
            continue
        ranked.extend(g.index for g, k in kinds if k.kind == HELPER and k.label == label)
    ranked.extend(g.index for g, k in kinds if k.kind == SIGNATURE)
    for label in cfg.ordering:
        ranked.extend(
            g.index for g, k in kinds if k.kind == KNOWLEDGE and k.label == label
        )
    return ranked


_LINE_RE = re.compile(r"^\s*(\d+)\s*:\s*(.*\S)\s*$")


def parse_goal_lines(lines: Iterable[str], err: IO = sys.stderr) -> List[GoalLine]:
    goals = []
    for line in lines:
        if not line.strip():
            continue
        m = _LINE_RE.match(line)
        if not m:
            print(f"oracle: skipping malformed goal line: {line.rstrip()}", file=err)
            continue
        goals.append(GoalLine(int(m.group(1)), m.group(2)))
    return goals


def serve(
    cfg: OracleConfig,
    lemma_name: str,
    in_stream: IO = sys.stdin,
    out_stream: IO = sys.stdout,
    err_stream: IO = sys.stderr,
) -> int:
    """One oracle invocation: goals on stdin, chosen indices on stdout.

    The lemma name is accepted for wire compatibility; the ranking policy
    is currently lemma independent.
    """
    del lemma_name
    try:
        goals = parse_goal_lines(in_stream, err=err_stream)
    except OSError as e:  # unreadable stream
        print(f"oracle: cannot read goals: {e}", file=err_stream)
        return 1
    for idx in rank_goals(goals, cfg):
        print(idx, file=out_stream)
    return 0


def load_config(path: str) -> OracleConfig:
    with open(path, "rb") as fh:
        data = _toml.load(fh)
    ordering = tuple(data.get("ordering", ()))
    return OracleConfig(
        ordering=ordering,
        helper_pattern=data.get("helper_pattern", "secret_{label}"),
        ltk_labels=frozenset(data.get("ltk_labels", ())),
    )


def dump_config(cfg: OracleConfig) -> str:
    lines = ["# oracle configuration: key class priority and goal patterns"]
    lines.append("ordering = [" + ", ".join(f'"{l}"' for l in cfg.ordering) + "]")
    lines.append(f'helper_pattern = "{cfg.helper_pattern}"')
    lines.append(
        "ltk_labels = [" + ", ".join(f'"{l}"' for l in sorted(cfg.ltk_labels)) + "]"
    )
    return "\n".join(lines) + "\n"
