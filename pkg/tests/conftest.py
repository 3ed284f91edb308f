_ACCEPTANCE = "test_acceptance.py"
_criteria = {}


def pytest_runtest_logreport(report):
    """Collect one outcome per acceptance criterion (tagged via record_property)."""
    if _ACCEPTANCE not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _criteria.get(props["criterion"], (True,))[0]
        _criteria[props["criterion"]] = (
            prev and report.outcome == "passed", props.get("title", ""), props.get("detail", ""))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, title, detail = _criteria[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
