import numpy as np
import pytest

from multidefault.fixtures import load_fixture
from multidefault.model import PayoffSpec

GRID_FIXTURES = ["fixtureA-grid", "fixtureB", "fixtureC", "fixtureC-nonordered", "fixture-marked"]

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def record(number, name, ok, detail=""):
    line = f"[acceptance {number:>2}] {'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def table_payoff(model, seed, T=None, low=-1.0, high=2.0):
    """Seeded node-dependent claim on the grid."""
    T = model.horizon if T is None else T
    rng = np.random.default_rng(seed)
    vals = rng.uniform(low, high, size=(model.tree.size(T), model.reference.size))
    return PayoffSpec.table(vals, model.reference, T, label=f"table-{seed}")


def payoffs_for(model, seed=0):
    n = model.n
    pays = [table_payoff(model, seed), table_payoff(model, seed + 1, T=max(1, model.horizon - 1))]
    pays.append(PayoffSpec.survival(1.5, model.horizon, coord="min", n_time=n))
    if n > 1:
        pays.append(PayoffSpec.survival(1.5, model.horizon, coord="max", n_time=n))
    return pays


@pytest.fixture(scope="session")
def fixture():
    return load_fixture
