"""Command line entry point.

Subcommands: extract / graph / oracle / gen / run / check / closure.
Exit codes: 0 success, 1 usage or input error, 2 analysis finding
(property violation, cyclic dependency graph, stuck scenario).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, assets
from .deps import (
    CyclicDependencyError,
    emit_dot,
    extract,
    linearize,
    order_file,
    transitive_reduction,
)
from .executor import (
    AGREEMENT_KINDS,
    ExecConfig,
    SearchBounds,
    SearchProperty,
    StuckScenario,
    check_agreement,
    check_replay_restriction,
    check_secrecy,
    parse_scenario,
    run_scenario,
    search_attack,
    trace_to_json,
)
from .model import ModelError, SpkSyntaxError, parse_model, serialize
from .oracle import OracleConfig, dump_config, load_config, serve
from .synth import ChainSpec, ORDER_DEPENDENCY, ORDER_NONE, ORDER_RANDOM, generate_chain_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FINDING = 2


def _load_model(spec: str):
    try:
        path = assets.asset(spec).path
    except KeyError:
        path = Path(spec)
    try:
        text = path.read_text()
    except OSError as e:
        raise SystemExit(f"keyorder: cannot read model {spec!r}: {e}")
    return parse_model(text)


def _load_scenario_text(spec: str) -> str:
    p = Path(spec)
    if p.exists():
        return p.read_text()
    try:
        return assets.scenario_path(spec).read_text()
    except KeyError:
        raise SystemExit(f"keyorder: no scenario file or bundled scenario {spec!r}")


def _ltk_labels(dag) -> set:
    from .terms import Role

    out = set()
    for c in dag.classes:
        for n in c.nodes:
            if n.kind is Role.SIG_KEY:
                out.add(c.label)
    return out


def _signer_labels(m, dag) -> set:
    """Classes used as the key of sign() somewhere in the model."""
    from .deps import unify_equivalent_keys
    from .terms import App, subterms

    part = unify_equivalent_keys(m)
    roots = {}
    for c in dag.classes:
        for n in c.nodes:
            roots[part.find(n.rule, n.occurrence)] = c.label
    out = set()
    for r in m.rules:
        for f in r.facts():
            for a in f.args:
                for u in subterms(a):
                    if isinstance(u, App) and u.fun == "sign":
                        root = part.find(r.name, u.args[1])
                        if root in roots:
                            out.add(roots[root])
    return out


def cmd_extract(args) -> int:
    m = _load_model(args.model)
    try:
        dag = extract(m, extended_authenticity=args.extended_authenticity)
    except CyclicDependencyError as e:
        print(f"keyorder: {e}", file=sys.stderr)
        return EXIT_FINDING
    text = order_file(dag)
    if args.order:
        Path(args.order).write_text(text)
    else:
        sys.stdout.write(text)
    if args.dot:
        Path(args.dot).write_text(emit_dot(dag))
    if args.oracle_config:
        cfg = OracleConfig(
            ordering=tuple(c.label for c in linearize(dag)),
            ltk_labels=frozenset(_signer_labels(m, dag)),
        )
        Path(args.oracle_config).write_text(dump_config(cfg))
    reduced = transitive_reduction(dag)
    print(
        f"extracted {len(dag.classes)} key classes, "
        f"{len(reduced.edges)} reduced edges, "
        f"max chain length {dag.max_chain_length()}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_graph(args) -> int:
    m = _load_model(args.model)
    try:
        dag = extract(m, extended_authenticity=args.extended_authenticity)
    except CyclicDependencyError as e:
        print(f"keyorder: {e}", file=sys.stderr)
        return EXIT_FINDING
    wrote = []
    if args.dot:
        Path(args.dot).write_text(emit_dot(dag))
        wrote.append(args.dot)
    if args.order:
        Path(args.order).write_text(order_file(dag))
        wrote.append(args.order)
    if args.csv:
        from .report import edges_csv

        Path(args.csv).write_text(edges_csv(dag))
        wrote.append(args.csv)
    if args.fig:
        from .report import render_figure

        render_figure(dag, args.fig)
        wrote.append(args.fig)
    if not wrote:
        sys.stdout.write(emit_dot(dag))
    else:
        print("wrote " + ", ".join(wrote), file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    return serve(cfg, args.lemma)


def cmd_gen(args) -> int:
    ordering = ORDER_DEPENDENCY
    seed = None
    if args.order:
        if args.order == "dep":
            ordering = ORDER_DEPENDENCY
        elif args.order == "none":
            ordering = ORDER_NONE
        elif args.order.startswith("rand:"):
            ordering = ORDER_RANDOM
            seed = int(args.order.split(":", 1)[1])
        else:
            print(f"keyorder: bad --order {args.order!r} (use dep, none or rand:SEED)", file=sys.stderr)
            return EXIT_USAGE
    try:
        spec = ChainSpec(depth=args.depth, reuse=args.reuse, ordering=ordering, seed=seed)
    except ValueError as e:
        print(f"keyorder: {e}", file=sys.stderr)
        return EXIT_USAGE
    text = serialize(generate_chain_model(spec))
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _exec_config(args, m) -> ExecConfig:
    reveals = frozenset(args.reveal or ())
    identities = tuple(args.identities.split(",")) if args.identities else ("v1", "v2", "v3")
    return ExecConfig(identities=identities, reveals=reveals)


def cmd_run(args) -> int:
    m = _load_model(args.model)
    cfg = _exec_config(args, m)
    script = parse_scenario(_load_scenario_text(args.scenario), m)
    try:
        result = run_scenario(m, script, cfg)
    except StuckScenario as e:
        print(f"keyorder: {e}", file=sys.stderr)
        return EXIT_FINDING
    for line in result.trace_lines():
        print(line)
    if args.output:
        Path(args.output).write_text(trace_to_json(m, result, args.scenario))
    findings = 0
    if not check_replay_restriction(result.trace):
        print("replay restriction violated", file=sys.stderr)
        findings += 1
    dag = extract(m)
    deps = dag.depends_on()
    for v in check_secrecy(result.trace, result.state.knowledge, deps):
        print(str(v), file=sys.stderr)
        findings += 1
    for kind in AGREEMENT_KINDS:
        for v in check_agreement(result.trace, kind):
            print(str(v), file=sys.stderr)
            findings += 1
    return EXIT_FINDING if findings else EXIT_OK


def cmd_check(args) -> int:
    m = _load_model(args.model)
    cfg = _exec_config(args, m)
    if args.property.startswith("secrecy:"):
        label = args.property.split(":", 1)[1]
        deps = extract(m).depends_on()
        prop = SearchProperty("secrecy", label=label, deps=deps)
    elif args.property in AGREEMENT_KINDS:
        prop = SearchProperty(args.property)
    else:
        print(
            f"keyorder: unknown property {args.property!r} "
            f"(use secrecy:CLASS or one of {', '.join(AGREEMENT_KINDS)})",
            file=sys.stderr,
        )
        return EXIT_USAGE
    bounds = SearchBounds(
        max_steps=args.max_steps,
        fresh_budget=args.fresh,
        composition_depth=args.depth,
    )
    trace = search_attack(m, prop, bounds, cfg)
    if trace is None:
        print(
            f"no {args.property} counterexample within bounds "
            f"(steps={args.max_steps}, fresh={args.fresh}, depth={args.depth}); "
            "bounded verdict, not a proof"
        )
        return EXIT_OK
    print(f"counterexample found ({len(trace)} steps):")
    for step in trace:
        print(f"  {step}")
    if args.output:
        from .executor import RunResult, initial_state

        doc_state = initial_state(m, cfg)
        # replaying for knowledge is unnecessary; serialize the trace only
        import json

        doc = {
            "model": m.name,
            "property": args.property,
            "steps": [
                {
                    "index": s.index,
                    "rule": s.rule,
                    "actions": [
                        {"name": a.name, "args": [str(x) for x in a.args]} for a in s.actions
                    ],
                }
                for s in trace
            ],
        }
        Path(args.output).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_FINDING


def cmd_closure(args) -> int:
    m = _load_model(args.model)
    cfg = _exec_config(args, m)
    script = parse_scenario(_load_scenario_text(args.scenario), m)
    try:
        result = run_scenario(m, script, cfg)
    except StuckScenario as e:
        print(f"keyorder: {e}", file=sys.stderr)
        return EXIT_FINDING
    know = result.state.knowledge
    from .executor import secret_actions

    secrets = secret_actions(result.trace)
    if args.reveal_class:
        injected = [
            term for (_s, label, _p, term) in secrets if label in args.reveal_class
        ]
        know = know.copy()
        if injected:
            know.add(*injected)
    exposed = [(label, term) for (_s, label, _p, term) in secrets if know.derivable(term)]
    print(f"secret instances recorded: {len(secrets)}")
    print(f"derivable after closure: {len(exposed)}")
    for label, term in exposed:
        from .terms import render

        print(f"  {label}: {render(term)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="keyorder",
        description="Key-dependency extraction, oracle ranking, synthetic models "
        "and bounded symbolic execution for multiset-rewriting protocol models.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add_model_arg(sp):
        sp.add_argument("model", help=".spk file or bundled variant name")

    sp = sub.add_parser("extract", help="extract the key order from a model")
    add_model_arg(sp)
    sp.add_argument("--dot", help="write the reduced graph in DOT form")
    sp.add_argument("--order", help="write the priority order file")
    sp.add_argument("--oracle-config", help="write an oracle configuration (TOML)")
    sp.add_argument("--extended-authenticity", action="store_true",
                    help="also derive authenticity edges from encrypted transport")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("graph", help="report the key graph (DOT, order, CSV, figure)")
    add_model_arg(sp)
    sp.add_argument("--dot")
    sp.add_argument("--order")
    sp.add_argument("--csv", help="write reduced edges as CSV")
    sp.add_argument("--fig", help="render the graph with matplotlib (png/svg/pdf)")
    sp.add_argument("--extended-authenticity", action="store_true")
    sp.set_defaults(func=cmd_graph)

    sp = sub.add_parser("oracle", help="rank prover goals from stdin")
    sp.add_argument("--config", required=True, help="oracle configuration (TOML)")
    sp.add_argument("lemma", help="lemma name (passed by the prover)")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("gen", help="generate a synthetic key-chain model")
    sp.add_argument("--depth", type=int, required=True)
    sp.add_argument("--reuse", action="store_true")
    sp.add_argument("--order", help="dep | rand:SEED | none")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_gen)

    def add_exec_args(sp):
        sp.add_argument("--reveal", action="append", metavar="CLASS",
                        help="enable reveal rules for a key class ('*' for all)")
        sp.add_argument("--identities", help="comma separated identity pool")

    sp = sub.add_parser("run", help="replay a scenario script")
    add_model_arg(sp)
    sp.add_argument("--scenario", required=True, help="scenario file or bundled name")
    sp.add_argument("-o", "--output", help="write the structured trace (JSON)")
    add_exec_args(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("check", help="bounded attack search for a property")
    add_model_arg(sp)
    sp.add_argument("--property", required=True,
                    help="aliveness | weak-agreement | non-injective-agreement | secrecy:CLASS")
    sp.add_argument("--max-steps", type=int, default=12)
    sp.add_argument("--fresh", type=int, default=6,
                    help="bound on fresh-minting rule applications")
    sp.add_argument("--depth", type=int, default=6,
                    help="attacker composition depth")
    sp.add_argument("-o", "--output", help="write the counterexample trace (JSON)")
    add_exec_args(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("closure", help="attacker closure over a scenario transcript")
    add_model_arg(sp)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--reveal", dest="reveal_class", action="append", metavar="CLASS",
                    help="inject this class's secret instances into the closure")
    sp.add_argument("--identities")
    sp.set_defaults(func=cmd_closure, reveal=None)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (SpkSyntaxError, ModelError) as e:
        print(f"keyorder: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        if isinstance(e.code, str):
            print(e.code, file=sys.stderr)
            return EXIT_USAGE
        return e.code if e.code is not None else 0


if __name__ == "__main__":
    sys.exit(main())
