from pathlib import Path

import pytest

import maat

DATA = Path(maat.__file__).parent / "data"
INTENTS = DATA / "intents"
TOPOLOGIES = DATA / "topologies"
SCENARIOS = DATA / "scenarios"
GOLDEN = Path(__file__).parent / "golden"


def intent_text(name: str) -> str:
    return (INTENTS / f"{name}.intent").read_text()


@pytest.fixture
def uc_texts():
    return {u: intent_text(u) for u in ("uc1", "uc2", "uc3")}


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
