import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


@pytest.fixture()
def acceptance_line(request):
    """Record one PASS/FAIL line for the end-of-run acceptance summary."""
    lines = request.config.stash[_LINES_KEY]

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines):
            terminalreporter.write_line(line)
