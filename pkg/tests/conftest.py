"""Prints one PASS/FAIL line per acceptance criterion after the run."""


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" not in props or rep.when != "call" and outcome != "error":
                continue
            status = "PASS" if outcome == "passed" else "FAIL"
            lines.append((props["criterion"], status, props.get("detail", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(lines):
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({detail})" if detail else ""))
