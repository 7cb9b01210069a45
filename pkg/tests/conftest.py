import math

import pytest
from hypothesis import settings

from neutral_stability.model import load_example, load_problem

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

INV_E = 1.0 / math.e


@pytest.fixture
def example1():
    return load_example("example1")


@pytest.fixture
def example2():
    return load_example("example2")


@pytest.fixture
def example3():
    return load_example("example3")


def make_spec(**keys):
    """Build a spec from keyword config entries; strings become quoted expressions."""
    lines = []
    for key, value in keys.items():
        key = key.replace("param_", "param.")
        if isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        else:
            lines.append(f"{key} = {value!r}")
    return load_problem("\n".join(lines))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_RESULTS: dict = {}


def record_acceptance(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[number] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(
            f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}")
