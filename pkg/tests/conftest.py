import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uatag.synthgen import generate_fleet  # noqa: E402
from uatag.vocab import load_vocabulary  # noqa: E402


@pytest.fixture(scope="session")
def vocab():
    return load_vocabulary()


@pytest.fixture(scope="session")
def fleet():
    return generate_fleet(3, seed=7)


@pytest.fixture(scope="session")
def small_vocab():
    from uatag.vocab import parse_vocabulary

    return parse_vocabulary("tag,kind,group\nsensor,marker,role\nsp,marker,role\ncmd,marker,role\n"
                            "heat,marker,mode\ncool,marker,mode\ntemp,marker,\n")


@pytest.fixture(scope="session")
def trained(fleet, vocab):
    """Bundle trained on the first two fleet buildings with default parameters."""
    from uatag.modelstore import Reservoir, rows_from_corpus, train_scratch

    rows = [r for b in fleet[:2] for r in rows_from_corpus(b.corpus(), vocab)]
    return train_scratch(Reservoir(tuple(rows)), vocab)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
