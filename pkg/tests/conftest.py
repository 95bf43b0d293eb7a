"""Shared pytest hooks: the acceptance suite records one line per criterion
and this hook prints the table at the end of the run."""

CRITERION_RESULTS: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    CRITERION_RESULTS.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    width = max(len(name) for name, _, _ in CRITERION_RESULTS)
    for name, passed, detail in CRITERION_RESULTS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{name:<{width}}  {status}  {detail}")
