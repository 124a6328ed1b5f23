"""Semi-decision search over trace-set size m and unrolling bound k."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator

from . import formula as F
from .formula import Formula, Model
from .qbf import QbfInstance, build_instance, outer_vars
from .solve import (
    BackendConfig, DecodeError, ExpansionCapExceeded, Unknown as SolverUnknown,
    Unsat as SolverUnsat, decode_model, expand_to_sat, instantiation_count,
    solve_builtin, solve_external,
)

log = logging.getLogger(__name__)


class ValidationError(RuntimeError):
    """A solver-reported witness was rejected by the semantics oracle."""


@dataclass
class Budget:
    max_m: int = 8
    max_k: int = 8
    time_limit: float = 120.0
    backend: BackendConfig = field(default_factory=BackendConfig)

    def __post_init__(self):
        if self.max_m < 1 or self.max_k < 1 or self.time_limit <= 0:
            raise ValueError("budget limits must be positive")


@dataclass(frozen=True)
class Attempt:
    m: int
    k: int
    verdict: str  # "sat", "unsat" or "unknown"
    backend: str
    note: str = ""


@dataclass
class Sat:
    model: Model
    m: int
    k: int
    backend: str
    attempts: list[Attempt] = field(default_factory=list)


@dataclass
class Unknown:
    reason: str
    last: tuple[int, int] | None
    attempts: list[Attempt] = field(default_factory=list)


CheckResult = Sat | Unknown


def schedule(max_m: int, max_k: int) -> Iterator[tuple[int, int]]:
    """Diagonal dovetailing: m + k = 2, 3, ...; increasing m on each diagonal."""
    for n in range(2, max_m + max_k + 1):
        for m in range(1, n):
            k = n - m
            if m <= max_m and k <= max_k:
                yield m, k


def _validated(f: Formula, outer: dict, m: int, k: int) -> Model | None:
    try:
        model = decode_model(outer, m, k, f.aps)
    except DecodeError as exc:
        log.warning("undecodable certificate at m=%d k=%d: %s", m, k, exc)
        return None
    return model if F.evaluate(model, f) else None


def check_sat(f: Formula, budget: Budget | None = None,
              on_instance: Callable[[QbfInstance], None] | None = None) -> CheckResult:
    budget = budget or Budget()
    cfg = budget.backend
    start = time.monotonic()
    attempts: list[Attempt] = []
    last = None

    for m, k in schedule(budget.max_m, budget.max_k):
        remaining = budget.time_limit - (time.monotonic() - start)
        if remaining <= 0:
            return Unknown(f"time limit ({budget.time_limit:g} s)", last, attempts)
        last = (m, k)
        limit = min(cfg.time_limit, remaining)
        inst = None
        if on_instance:
            inst = build_instance(f, m, k)
            on_instance(inst)

        count = instantiation_count(f, m)
        use_builtin = cfg.kind == "builtin" or (cfg.kind == "auto" and count <= cfg.expansion_cap)
        if use_builtin:
            backend = "builtin"
            try:
                prop = expand_to_sat(f, m, k, cfg.expansion_cap)
            except ExpansionCapExceeded as exc:
                attempts.append(Attempt(m, k, "unknown", backend, str(exc)))
                continue
            outcome = solve_builtin(prop, outer_vars(f.aps, m, k), limit)
        elif cfg.command:
            backend = "external"
            inst = inst or build_instance(f, m, k)
            outcome = solve_external(inst, BackendConfig(
                "external", cfg.command, limit, cfg.strict_certificate, cfg.expansion_cap))
        else:
            attempts.append(Attempt(m, k, "unknown", "none",
                                    f"{count} instantiations over the cap and no external solver"))
            continue

        if isinstance(outcome, SolverUnsat):
            attempts.append(Attempt(m, k, "unsat", backend))
            continue
        if isinstance(outcome, SolverUnknown):
            attempts.append(Attempt(m, k, "unknown", backend, outcome.reason))
            continue

        model = _validated(f, outcome.assignment, m, k)
        if model is None and backend == "external":
            # untrusted certificate (e.g. defaulted variables): redo with the builtin search
            log.warning("external certificate rejected at m=%d k=%d; retrying builtin", m, k)
            if count > cfg.expansion_cap:
                raise ValidationError(f"external witness rejected at m={m}, k={k}")
            backend = "builtin"
            outcome = solve_builtin(expand_to_sat(f, m, k, cfg.expansion_cap),
                                    outer_vars(f.aps, m, k), limit)
            if isinstance(outcome, SolverUnsat):
                attempts.append(Attempt(m, k, "unsat", backend, "after rejected certificate"))
                continue
            if isinstance(outcome, SolverUnknown):
                attempts.append(Attempt(m, k, "unknown", backend, outcome.reason))
                continue
            model = _validated(f, outcome.assignment, m, k)
        if model is None:
            raise ValidationError(f"internal: validation failed at m={m}, k={k}")

        reduced = model.dedup()
        if not F.evaluate(reduced, f):
            raise ValidationError(f"internal: validation failed after dedup at m={m}, k={k}")
        attempts.append(Attempt(m, k, "sat", backend))
        return Sat(reduced, m, k, backend, attempts)

    return Unknown(f"budget exhausted: m≤{budget.max_m}, k≤{budget.max_k}", last, attempts)


def find_nonimplication(f: Formula, g: Formula, budget: Budget | None = None,
                        on_instance: Callable[[QbfInstance], None] | None = None) -> CheckResult:
    """Search for a trace set satisfying f but violating g."""
    return check_sat(F.implication(f, g), budget, on_instance)


def check_equiv(f: Formula, g: Formula, budget: Budget | None = None) -> tuple[CheckResult, CheckResult]:
    return find_nonimplication(f, g, budget), find_nonimplication(g, f, budget)
