"""Shared pytest hooks: print one verdict line per acceptance check."""

ACCEPTANCE_FILE = "test_acceptance.py"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if ACCEPTANCE_FILE not in nodeid:
                continue
            verdict = "PASS" if key == "passed" else "FAIL"
            rows.append((nodeid.split("::")[-1], verdict))
    if rows:
        terminalreporter.write_sep("=", "acceptance checks")
        for name, verdict in rows:
            terminalreporter.write_line(f"[ACCEPTANCE] {verdict} {name}")
