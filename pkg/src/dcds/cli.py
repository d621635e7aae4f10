"""``bench``: run benchmarks or print the IR of a catalog structure.

Exit codes: 0 on success, 1 when a post-run sanity check fails, 2 on a
usage error.
"""

from __future__ import annotations

import argparse
import sys

from .analysis import analyze
from .bench import BenchConfig, ConfigError, SanityError, run, to_csv
from .catalog import CATALOG, get_entry
from .cc_injector import inject_cc
from .ir import dump_spec
from .optimizer import optimize

STAGES = ("pre-opt", "post-opt", "analysis", "post-cc")


def _thread_list(text: str) -> list[int]:
    try:
        counts = [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad thread list {text!r}") from None
    if not counts:
        raise argparse.ArgumentTypeError("empty thread list")
    return counts


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one benchmark configuration, one CSV row per run")
    r.add_argument("--structure", required=True, choices=sorted(CATALOG))
    r.add_argument("--threads", type=_thread_list, default=[1],
                   help="worker count, or a comma list such as 1,2,4,8")
    r.add_argument("--ops", type=int, default=100_000, help="operations per thread")
    r.add_argument("--dist", choices=("uniform", "zipf"), default="uniform")
    r.add_argument("--theta", type=float, default=0.4)
    r.add_argument("--read-ratio", type=float, default=0.5)
    r.add_argument("--columns", type=int, default=10)
    r.add_argument("--records", type=int, default=100_000, help="YCSB records per worker")
    r.add_argument("--domain", type=int, default=1 << 20, help="LRU key domain")
    r.add_argument("--capacity", type=int, default=1 << 10, help="LRU capacity")
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--runs", type=int, default=1)
    r.add_argument("--no-pin", action="store_true", help="skip thread pinning")
    r.add_argument("--csv", nargs="?", const="-", default="-", metavar="PATH",
                   help="write CSV to PATH (default: standard output)")

    d = sub.add_parser("dump-ir", help="print a structure's IR at one pipeline stage")
    d.add_argument("--structure", required=True, choices=sorted(CATALOG))
    d.add_argument("--stage", required=True, choices=STAGES)
    return p


def dump_ir(structure: str, stage: str) -> str:
    entry = get_entry(structure)
    spec = entry.build()
    if stage == "pre-opt":
        return dump_spec(spec)
    reports = []
    if entry.optimize:
        spec, reports = optimize(spec)
    if stage == "post-opt":
        lines = [dump_spec(spec)]
        lines += [str(r) for r in reports]
        return "\n".join(lines)
    if stage == "analysis":
        rw = analyze(spec)
        out = []
        for name in spec.all_specs():
            out.append(f"spec {name}")
            out.append(rw.dump(name))
        return "\n".join(out)
    return dump_spec(inject_cc(spec))


def _run(args) -> int:
    results = []
    for threads in args.threads:
        for i in range(args.runs):
            cfg = BenchConfig(
                structure=args.structure, threads=threads, ops_per_thread=args.ops,
                distribution=args.dist, theta=args.theta, key_domain=args.domain,
                capacity=args.capacity, read_ratio=args.read_ratio,
                num_columns=args.columns, records_per_worker=args.records,
                seed=args.seed + i, pin=not args.no_pin,
            )
            results.append(run(cfg))
    text = to_csv(results)
    if args.csv == "-":
        sys.stdout.write(text)
    else:
        with open(args.csv, "w", newline="") as fh:
            fh.write(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "dump-ir":
            print(dump_ir(args.structure, args.stage))
            return 0
        return _run(args)
    except ConfigError as exc:
        parser.error(str(exc))  # exits with 2
    except (SanityError, AssertionError) as exc:
        print(f"sanity check failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
