import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def bank_cache():
    """Directory holding optimized pattern banks, shared across tests and runs."""
    path = Path(os.environ.get("RHSSLAM_BANK_CACHE", ROOT / ".bank_cache"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def pytest_terminal_summary(terminalreporter):
    rows = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) != "call" and key != "error":
                continue
            if "test_acceptance.py::test_criterion_" not in rep.nodeid:
                continue
            num = int(rep.nodeid.split("test_criterion_")[1][:2])
            detail = dict(rep.user_properties).get("detail", "")
            rows.append((num, "PASS" if key == "passed" else "FAIL", detail))
    if not rows:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, status, detail in sorted(rows):
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {detail}")
