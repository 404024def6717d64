"""Prints one line per acceptance criterion at the end of the run."""


def pytest_terminal_summary(terminalreporter):
    rows = []
    for status in ("passed", "failed"):
        for rep in terminalreporter.stats.get(status, []):
            if rep.when != "call" or "test_acceptance" not in rep.nodeid:
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                rows.append((props["criterion"], status, props.get("title", ""), props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, title, detail in sorted(rows):
        verdict = "PASS" if status == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {num:2d}: {title} | {detail}")
