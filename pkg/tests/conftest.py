import numpy as np
import pytest
from hypothesis import settings

from haarbook.ltgroup import TriMatrix

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_tri(rng, p, lo=0.5, hi=2.0):
    a = np.tril(rng.standard_normal((p, p)), -1) + np.diag(rng.uniform(lo, hi, p))
    return TriMatrix.from_array(a)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> list of (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        results = ACCEPTANCE[k]
        ok = all(p for p, _ in results)
        failed = [d for p, d in results if not p]
        detail = "; ".join(failed) if failed else "; ".join(d for _, d in results)
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
