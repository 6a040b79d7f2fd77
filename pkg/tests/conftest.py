import re

_ACCEPTANCE: list[tuple[str, str, str]] = []  # (criterion id, title, outcome)


def pytest_runtest_makereport(item, call):
    if call.when != "call" or "test_acceptance" not in str(item.fspath):
        return
    m = re.match(r"test_criterion_(\d+)", item.name)
    if not m:
        return
    title = (item.function.__doc__ or "").strip().splitlines()[0] if item.function.__doc__ else item.name
    outcome = "PASS" if call.excinfo is None else "FAIL"
    _ACCEPTANCE.append((m.group(1), title, outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, title, outcome in sorted(_ACCEPTANCE, key=lambda r: int(r[0])):
        terminalreporter.write_line(f"criterion {int(num):2d}: {outcome}  - {title}")
