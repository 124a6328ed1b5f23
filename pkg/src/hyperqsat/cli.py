"""Command-line front end: sat, implies, equiv, random and bench."""

from __future__ import annotations

import argparse
import csv
import logging
import multiprocessing as mp
import os
import random
import re
import sys
import tempfile
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import formula as F
from .engine import Budget, Sat, ValidationError, check_sat, find_nonimplication
from .formula import Formula, Model, Quant, QuantGroup
from .qbf import emit_qdimacs
from .solve import BackendConfig

EXIT_SAT = 10
EXIT_UNKNOWN = 30
EXIT_USAGE = 1
EXIT_INTERNAL = 2

POLICIES = ("gni", "ni", "od", "god", "wod")
POLICY_CHECKS = (
    ("od", "gni"), ("god", "gni"), ("wod", "gni"),
    ("od", "ni"), ("god", "ni"), ("wod", "ni"),
    ("gni", "ni"),
)

log = logging.getLogger("hyperqsat")


# ---------------------------------------------------------------------------
# Random formulas
# ---------------------------------------------------------------------------

WEIGHTS = {
    "atom": 30, "not": 10, "and": 12, "or": 12, "implies": 6, "iff": 4,
    "next": 8, "finally": 6, "globally": 6, "until": 6,
}
_UNARY_OPS = {"not": F.Not, "next": F.Next, "finally": F.Finally, "globally": F.Globally}
_BINARY_OPS = {"and": F.And, "or": F.Or, "implies": F.Implies, "iff": F.Iff, "until": F.Until}


@dataclass(frozen=True)
class RandomSpec:
    seed: int
    size: int
    n_aps: int = 1
    groups: tuple[tuple[Quant, int], ...] | None = None
    alternations: int = 0
    start: Quant = Quant.EXISTS

    def __post_init__(self):
        if self.size < 1 or self.n_aps < 1 or self.alternations < 0:
            raise ValueError("size and n_aps must be >= 1, alternations >= 0")
        if self.groups is not None and (not self.groups or any(n < 1 for _, n in self.groups)):
            raise ValueError("group sizes must be >= 1")

    def prefix_shape(self) -> list[tuple[Quant, int]]:
        if self.groups is not None:
            return [(Quant(q), n) for q, n in self.groups]
        shape, q = [], self.start
        for _ in range(self.alternations + 1):
            shape.append((q, 1))
            q = q.dual()
        return shape


def parse_prefix(text: str) -> tuple[tuple[Quant, int], ...]:
    """'E2A2' -> ((exists, 2), (forall, 2)); a missing count means 1."""
    items = re.findall(r"([AaEe])(\d*)", text)
    if not items or "".join(q + n for q, n in items) != text:
        raise ValueError(f"bad prefix shape {text!r} (expected e.g. E2A2)")
    return tuple((Quant.FORALL if q in "Aa" else Quant.EXISTS, int(n or 1)) for q, n in items)


def gen_random(spec: RandomSpec) -> Formula:
    """Formula whose body has exactly spec.size AST nodes; a pure function of spec."""
    rng = random.Random(spec.seed)
    prefix, names, counter = [], [], 0
    for quant, n in spec.prefix_shape():
        group = tuple(f"p{counter + i}" for i in range(n))
        counter += n
        names.extend(group)
        prefix.append(QuantGroup(quant, group))
    aps = [f"a{i}" for i in range(spec.n_aps)]

    def choose(ops):
        return rng.choices(ops, weights=[WEIGHTS[o] for o in ops])[0]

    def grow(budget: int):
        if budget == 1:
            return F.Atom(rng.choice(aps), rng.choice(names))
        if budget == 2:
            return _UNARY_OPS[choose(list(_UNARY_OPS))](grow(1))
        op = choose(list(_UNARY_OPS) + list(_BINARY_OPS))
        if op in _UNARY_OPS:
            return _UNARY_OPS[op](grow(budget - 1))
        left = rng.randint(1, budget - 2)
        return _BINARY_OPS[op](grow(left), grow(budget - 1 - left))

    return Formula(tuple(prefix), grow(spec.size))


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def format_letter(letter) -> str:
    return "{" + " ".join(sorted(letter)) + "}"


def format_model(model: Model) -> str:
    lines = []
    for i, t in enumerate(model.traces):
        stem = "".join(format_letter(x) + " " for x in t.stem)
        loop = " ".join(format_letter(x) for x in t.loop)
        lines.append(f"trace {i}: {stem}| {loop}")
    return "\n".join(lines)


def write_atomic(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def policy_text(name: str) -> str:
    return resources.files("hyperqsat").joinpath("policies", f"{name}.hltl").read_text()


def load_formula(path: str) -> Formula:
    """Read a formula file; 'policy:NAME' loads a bundled policy."""
    if path.startswith("policy:"):
        return F.parse(policy_text(path[len("policy:"):]))
    return F.parse(Path(path).read_text())


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _budget(args) -> Budget:
    kind = {"extern": "external"}.get(args.backend, args.backend)
    cfg = BackendConfig(kind=kind, time_limit=args.timeout)
    if args.solver_cmd:
        cfg.command = args.solver_cmd
    if kind == "external" and not cfg.command:
        raise UsageError("--backend extern needs --solver-cmd or $HYPERQSAT_SOLVER")
    return Budget(args.max_m, args.max_k, args.timeout, cfg)


class UsageError(Exception):
    pass


def _dumper(args):
    if not args.emit_qdimacs:
        return None, lambda: None
    last = []

    def keep(inst):
        last[:] = [inst]

    def flush():
        if last:
            inst = last[0]
            write_atomic(args.emit_qdimacs, emit_qdimacs(inst, [f"m={inst.m} k={inst.k}"]))
    return keep, flush


def _report(result, args, sat_line: str) -> int:
    if isinstance(result, Sat):
        print(sat_line)
        text = format_model(result.model)
        print(text)
        if args.model_out:
            write_atomic(args.model_out, text + "\n")
        return EXIT_SAT
    print(f"unknown ({result.reason})")
    return EXIT_UNKNOWN


def cmd_sat(args) -> int:
    f = load_formula(args.file)
    keep, flush = _dumper(args)
    result = check_sat(f, _budget(args), keep)
    flush()
    return _report(result, args, f"sat (m={result.m}, k={result.k})" if isinstance(result, Sat) else "")


def cmd_implies(args) -> int:
    f, g = load_formula(args.file1), load_formula(args.file2)
    keep, flush = _dumper(args)
    result = find_nonimplication(f, g, _budget(args), keep)
    flush()
    return _report(result, args, "non-implication witnessed")


def cmd_equiv(args) -> int:
    f, g = load_formula(args.file1), load_formula(args.file2)
    budget = _budget(args)
    witnessed = False
    for label, (a, b) in (("first => second", (f, g)), ("second => first", (g, f))):
        result = find_nonimplication(a, b, budget)
        if isinstance(result, Sat):
            witnessed = True
            print(f"{label}: violated")
            print(format_model(result.model))
        else:
            print(f"{label}: unknown ({result.reason})")
    print("not equivalent" if witnessed else "no verdict")
    return EXIT_SAT if witnessed else EXIT_UNKNOWN


def _random_spec(args, seed: int) -> RandomSpec:
    groups = parse_prefix(args.prefix) if args.prefix else None
    return RandomSpec(seed, args.size, args.aps, groups, args.alternations, Quant(args.start))


def cmd_random(args) -> int:
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for seed in range(args.seed, args.seed + args.count):
        text = F.print_formula(gen_random(_random_spec(args, seed)))
        if out:
            write_atomic(out / f"rand_{seed}.hltl", text + "\n")
        else:
            print(text)
    return 0


# ---------------------------------------------------------------------------
# Benchmark runner
# ---------------------------------------------------------------------------

CSV_HEADER = ("name", "verdict", "m", "k", "time_ms", "backend")
_NAME_BAD = re.compile(r"[^A-Za-z0-9_.-]")


@dataclass
class BenchRecord:
    name: str
    verdict: str  # sat, unknown or error
    m: int | None
    k: int | None
    time_ms: float
    backend: str

    def row(self) -> list[str]:
        return [self.name, self.verdict, "" if self.m is None else str(self.m),
                "" if self.k is None else str(self.k), f"{self.time_ms:.3f}", self.backend]


def bench_instances(args) -> list[tuple[str, Formula | Exception]]:
    source = args.source
    if source == "policies":
        policies = {n: F.parse(policy_text(n)) for n in POLICIES}
        return [(f"{a}_not_{b}", F.implication(policies[a], policies[b])) for a, b in POLICY_CHECKS]
    if source == "random":
        return [(f"rand_{seed}", gen_random(_random_spec(args, seed)))
                for seed in range(args.seed, args.seed + args.count)]
    root = Path(source)
    if not root.is_dir():
        raise UsageError(f"{source}: not a directory (or 'policies' / 'random')")
    out = []
    for path in sorted(root.glob("*.hltl")):
        name = _NAME_BAD.sub("_", path.stem)
        try:
            out.append((name, F.parse(path.read_text())))
        except (OSError, UnicodeDecodeError, F.FormulaError) as exc:
            out.append((name, exc))
    return out


def _bench_child(conn, f: Formula, budget: Budget) -> None:
    t0 = time.perf_counter()
    try:
        result = check_sat(f, budget)
    except Exception as exc:  # reported as an error row
        conn.send(("error", None, None, (time.perf_counter() - t0) * 1e3, "", repr(exc)))
        return
    ms = (time.perf_counter() - t0) * 1e3
    if isinstance(result, Sat):
        conn.send(("sat", result.m, result.k, ms, result.backend, ""))
    else:
        m, k = result.last or (None, None)
        backend = result.attempts[-1].backend if result.attempts else ""
        conn.send(("unknown", m, k, ms, backend, result.reason))


def run_bench(instances, budget: Budget, timeout: float, jobs: int = 1) -> list[BenchRecord]:
    """Run instances in child processes, killing any that exceed `timeout` seconds."""
    records: list[BenchRecord] = []
    pending = list(instances)
    running: list[tuple[str, mp.Process, object, float]] = []
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()

    while pending or running:
        while pending and len(running) < max(1, jobs):
            name, f = pending.pop(0)
            if isinstance(f, Exception):
                log.warning("%s: %s", name, f)
                records.append(BenchRecord(name, "error", None, None, 0.0, ""))
                continue
            recv, send = ctx.Pipe(duplex=False)
            proc = ctx.Process(target=_bench_child, args=(send, f, budget), daemon=True)
            proc.start()
            send.close()
            running.append((name, proc, recv, time.perf_counter()))
        if not running:
            continue
        time.sleep(0.005)
        still = []
        for name, proc, recv, t0 in running:
            elapsed = time.perf_counter() - t0
            if recv.poll():
                try:
                    verdict, m, k, ms, backend, note = recv.recv()
                except EOFError:
                    verdict, m, k, ms, backend, note = "error", None, None, elapsed * 1e3, "", "child died"
                if note:
                    log.info("%s: %s", name, note)
                records.append(BenchRecord(name, verdict, m, k, ms, backend))
            elif not proc.is_alive():
                records.append(BenchRecord(name, "error", None, None, elapsed * 1e3, ""))
            elif elapsed > timeout:
                proc.kill()
                records.append(BenchRecord(name, "unknown", None, None, elapsed * 1e3, ""))
            else:
                still.append((name, proc, recv, t0))
                continue
            proc.join()
            recv.close()
        running = still
    return records


def write_csv(path: str, records: Sequence[BenchRecord]) -> None:
    lines = [",".join(CSV_HEADER)] + [",".join(r.row()) for r in records]
    write_atomic(path, "\n".join(lines) + "\n")


def summary(records: Sequence[BenchRecord]) -> str:
    solved = [r for r in records if r.verdict == "sat"]
    avg = sum(r.time_ms for r in solved) / len(solved) if solved else 0.0
    return f"solved {len(solved)}/{len(records)}, avg time {avg:.1f} ms over solved"


def cmd_bench(args) -> int:
    records = run_bench(bench_instances(args), _budget(args), args.timeout, args.jobs)
    if args.csv:
        write_csv(args.csv, records)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())
    print(summary(records))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _positive(kind):
    def conv(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text}")
        return value
    return conv


def build_parser() -> argparse.ArgumentParser:
    solve = argparse.ArgumentParser(add_help=False)
    solve.add_argument("--max-m", type=_positive(int), default=8)
    solve.add_argument("--max-k", type=_positive(int), default=8)
    solve.add_argument("--timeout", type=_positive(float), default=120.0, help="seconds")
    solve.add_argument("--backend", choices=("builtin", "extern", "auto"), default="auto")
    solve.add_argument("--solver-cmd", help="QBF solver command line; {file} is replaced by the instance")
    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--emit-qdimacs", metavar="PATH", help="dump the last QBF instance built")
    out.add_argument("--model-out", metavar="PATH")
    rnd = argparse.ArgumentParser(add_help=False)
    rnd.add_argument("--seed", type=int, default=0)
    rnd.add_argument("--size", type=_positive(int), default=20)
    rnd.add_argument("--aps", type=_positive(int), default=1)
    rnd.add_argument("--alternations", type=int, default=0)
    rnd.add_argument("--start", choices=("forall", "exists"), default="exists")
    rnd.add_argument("--prefix", help="explicit group shape such as E2A2 (overrides --alternations)")
    rnd.add_argument("--count", type=_positive(int), default=1)

    p = _Parser(prog="hyperqsat", description="HyperLTL satisfiability via QBF.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("sat", parents=[solve, out], help="search for a model")
    s.add_argument("file")
    s.set_defaults(run=cmd_sat)
    for name, fn, parents in (("implies", cmd_implies, [solve, out]), ("equiv", cmd_equiv, [solve])):
        s = sub.add_parser(name, parents=parents, help=f"counterexample search ({name})")
        s.add_argument("file1")
        s.add_argument("file2")
        s.set_defaults(run=fn)
    s = sub.add_parser("random", parents=[rnd], help="print generated formulas")
    s.add_argument("--out", metavar="DIR", help="write rand_<seed>.hltl files instead of printing")
    s.set_defaults(run=cmd_random)
    s = sub.add_parser("bench", parents=[solve, rnd], help="benchmark a directory, 'policies' or 'random'")
    s.add_argument("source")
    s.add_argument("--csv", metavar="PATH")
    s.add_argument("--jobs", type=_positive(int), default=1)
    s.set_defaults(run=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.run(args)
    except F.ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
