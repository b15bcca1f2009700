# acceptance verdict lines, shown again at the end of the session
VERDICTS = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(VERDICTS, key=lambda k: int(k[2:])):
        terminalreporter.write_line(VERDICTS[key])
