from hypothesis import HealthCheck, settings

settings.register_profile("nocweave", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("nocweave")

# criterion number -> (passed, title, detail), filled by test_acceptance
CRITERIA: dict[int, tuple[bool, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, title, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n} ({title}): {'PASS' if ok else 'FAIL'} | {detail}")
