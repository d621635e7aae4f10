import itertools
import sys
from pathlib import Path

import pytest

from dcds.executor import forget_namespace

sys.path.insert(0, str(Path(__file__).parent))

_ids = itertools.count()


@pytest.fixture
def ns():
    """A fresh namespace, dropped (tables, indexes, compiled code) afterwards."""
    name = f"test{next(_ids)}"
    yield name
    forget_namespace(name)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
