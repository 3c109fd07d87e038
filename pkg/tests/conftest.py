import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record ``(passed, detail)`` for one acceptance criterion.

    A test that errors before recording is listed as failed.
    """
    result = {}

    def record(passed: bool, detail: str) -> bool:
        result["value"] = (bool(passed), detail)
        return bool(passed)

    yield record
    passed, detail = result.get("value", (False, "did not complete"))
    _ACCEPTANCE.append((request.node.name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
