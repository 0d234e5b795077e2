"""One test per acceptance criterion; the result lines are echoed in the terminal summary."""

import pytest

from mpcevm import acceptance

LINES = []


@pytest.mark.parametrize("check", acceptance.ALL, ids=lambda fn: fn.__name__)
def test_criterion(check):
    chk = check()
    line = f"{chk.line()} ({chk.seconds:.1f}s)"
    LINES.append(line)
    print(line)
    assert chk.passed, line
