"""Command-line entry point: ``hypercoord {run,query,validate,serve,export-fixture}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from hypercoord import vocab
from hypercoord.errors import HypercoordError
from hypercoord.model import DEFAULT_BASE

FIXTURE_HEADER = ("# Chilled-water plant: pump group plus three chiller branches.\n"
                  "# Regenerate with: hypercoord export-fixture\n\n")


def _read_graph(path):
    from hypercoord.graph import NTRIPLES, TURTLE, parse_document
    from hypercoord.model import build_chilled_water_fixture

    if path is None:
        return build_chilled_water_fixture()
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_document(text, NTRIPLES if path.endswith(".nt") else TURTLE)


def cmd_run(args) -> int:
    from hypercoord.sim.scenario import dumps_trace, load_scenario, run_scenario

    script = load_scenario(args.script)
    trace = run_scenario(script, deterministic=args.deterministic, base_uri=args.base_uri,
                         http_port=args.http_port)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(dumps_trace(trace))
    print(json.dumps(trace["summary"], indent=2, sort_keys=True))
    return 1 if trace["summary"]["safety_violations"] else 0


def cmd_query(args) -> int:
    from hypercoord.graph import TripleStore, match_pattern
    from hypercoord.graph.query_json import decode_query, encode_bindings

    with open(args.pattern, encoding="utf-8") as fh:
        doc = json.load(fh)
    patterns, select = decode_query(doc)
    rows = match_pattern(TripleStore(_read_graph(args.data)), patterns)
    print(json.dumps(encode_bindings(rows, select), indent=2, sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    from hypercoord.graph import TripleStore
    from hypercoord.model import validate_topology

    store = TripleStore(_read_graph(args.fixture))
    violations = validate_topology(store)
    for v in violations:
        print(v)
    print(f"{len(store)} triples, {len(violations)} violation(s)")
    return 1 if violations else 0


def cmd_serve(args) -> int:
    from hypercoord.env.environment import Environment
    from hypercoord.env.http import Network, serve

    base = args.base_uri or f"http://{args.host}:{args.port}/"
    env = Environment(base, Network())
    env.load_graph(_read_graph(args.data))
    name = "request-flowrate-change"
    env.handle_put(f"{env.base}protocols/{name}", vocab.asset_text(f"protocols/{name}.ttl"),
                   "turtle")
    server = serve(env.network, env.base, args.host, args.port)
    print(f"environment at {env.base} (listening on {args.host}:{args.port})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_export_fixture(args) -> int:
    from hypercoord.graph import serialize_turtle
    from hypercoord.model import build_chilled_water_fixture

    text = FIXTURE_HEADER + serialize_turtle(build_chilled_water_fixture())
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypercoord",
                                description="Hypermedia coordination of plant automation agents.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario script")
    run.add_argument("script", help="scenario JSON file, or a shipped name such as 'startup'")
    run.add_argument("--deterministic", action="store_true",
                     help="deliver notifications synchronously (reproducible traces)")
    run.add_argument("--trace", help="write the full trace JSON here")
    run.add_argument("--http-port", type=int, help="also expose the environment over HTTP")
    run.add_argument("--base-uri", default=DEFAULT_BASE)
    run.set_defaults(func=cmd_run)

    q = sub.add_parser("query", help="evaluate a JSON pattern query")
    q.add_argument("pattern")
    q.add_argument("--data", help="Turtle or N-Triples file (default: the plant fixture)")
    q.set_defaults(func=cmd_query)

    v = sub.add_parser("validate", help="check a system description for modelling errors")
    v.add_argument("fixture")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("serve", help="serve the environment over HTTP")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8080)
    s.add_argument("--base-uri", help="public base URI (default: derived from host and port)")
    s.add_argument("--data", help="graph to load (default: the plant fixture)")
    s.set_defaults(func=cmd_serve)

    e = sub.add_parser("export-fixture", help="write the plant fixture as Turtle")
    e.add_argument("-o", "--output", default="-")
    e.set_defaults(func=cmd_export_fixture)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (HypercoordError, OSError, ValueError) as exc:
        print(f"hypercoord: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
