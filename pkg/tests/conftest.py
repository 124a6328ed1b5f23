"""Session-wide soundness gate and the acceptance summary."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import hyperqsat  # noqa: E402
from hyperqsat import cli, engine  # noqa: E402
from hyperqsat.formula import evaluate  # noqa: E402

# Every Sat the engine hands out during the run is re-checked here; one
# rejected model fails the whole session.
GATE = {"checked": 0, "failures": []}
ACCEPTANCE: dict[str, tuple[bool, str]] = {}

_check_sat = engine.check_sat


def _gated_check_sat(f, budget=None, on_instance=None):
    result = _check_sat(f, budget, on_instance)
    if isinstance(result, engine.Sat):
        GATE["checked"] += 1
        if not evaluate(result.model, f):
            GATE["failures"].append((str(f), result.model))
    return result


for mod in (engine, hyperqsat, cli):
    mod.check_sat = _gated_check_sat


def pytest_sessionfinish(session, exitstatus):
    if GATE["failures"]:
        session.exitstatus = pytest.ExitCode.TESTS_FAILED


def pytest_terminal_summary(terminalreporter):
    tr = terminalreporter
    if ACCEPTANCE:
        tr.section("acceptance criteria")
        for name in sorted(ACCEPTANCE):
            ok, detail = ACCEPTANCE[name]
            tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    tr.write_line(f"soundness gate: {GATE['checked']} sat results re-validated, "
                  f"{len(GATE['failures'])} rejected")
