ACCEPTANCE_LINES = {}


def record(criterion, passed, detail=""):
    """Store one summary line; printed at the end of the session."""
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion:>2}: {status}  {detail}".rstrip()
    print(ACCEPTANCE_LINES[criterion])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda c: (len(str(c)), str(c))):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
