from pathlib import Path

import pytest

from bilevelcert.certify import parse_certificates
from bilevelcert.expr import load_problem, parse_problem

CORPUS = Path(__file__).resolve().parents[1] / "src" / "bilevelcert" / "corpus"

ACCEPTANCE = {
    1: "certificate at the first example point verifies exactly",
    2: "certificate at the second example point verifies exactly",
    3: "dual-side certificate and dual feasibility at (-1, 0)",
    4: "certificate search on the three corpus data sets",
    5: "ACQ on the first example",
    6: "signed distance property suite",
    7: "lower-level solution map",
    8: "weak-Pareto oracle at (0, 0)",
    9: "generalized convexity hypotheses",
    10: "weak duality scan",
    11: "cone / validation / scaling / reduction properties",
    12: "Dini derivative closed forms",
}

# Linear objective minimised at y = 1/5, which a coarse grid cannot see.
SHIFTED = """
problem "shifted"
dims x=1 y=1 objectives=1
box x in [0, 1] step 0.05
box y in [-1, 1] step 0.05
F1 = x + y + 2
G1 = 1
f = (y - 1/5)^2
refpoint = (0, 1/5)
D = orthant(+, 0)
convexificator varphi1 semiregular = { (1, 1) }
convexificator Psi upper = { (0, 0) }
"""

SHIFTED_CERT = """certificate "shifted"
point = (0, 1/5)
xi = [1]
tau = []
rho = []
eta = 0
z = (-1, -1)
end
"""

_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes.setdefault(marker.args[0], []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        results = _outcomes.get(n)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status:7s} {ACCEPTANCE[n]}")


@pytest.fixture(scope="session")
def q1_sec3():
    return load_problem(CORPUS / "q1_sec3.blp")


@pytest.fixture(scope="session")
def q1_sec4():
    return load_problem(CORPUS / "q1_sec4.blp")


@pytest.fixture(scope="session")
def mq_sec5():
    return load_problem(CORPUS / "mq_sec5.blp")


@pytest.fixture(scope="session")
def corpus_cert():
    def load(name):
        return parse_certificates((CORPUS / name).read_text())[0]
    return load


@pytest.fixture(scope="session")
def shifted():
    return parse_problem(SHIFTED)
