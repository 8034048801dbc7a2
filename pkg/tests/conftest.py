from __future__ import annotations

import pytest

from convexlab.norms import NormSpec, SectionBudget, euclidean, modulus_convexity_estimate

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def euclid2_estimate():
    return modulus_convexity_estimate(euclidean(2))


@pytest.fixture(scope="session")
def l1_estimate():
    return modulus_convexity_estimate(NormSpec.lp(1, 2), budget=SectionBudget(n_random_planes=8))


@pytest.fixture(scope="session")
def linf_estimate():
    return modulus_convexity_estimate(NormSpec.lp(float("inf"), 2), budget=SectionBudget(n_random_planes=8))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k[1:].split(".")[0]), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:<6} {'PASS' if ok else 'FAIL'}  {detail}")
