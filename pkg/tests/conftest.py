import pytest

_outcomes: dict[str, dict] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            cid, title = mark.args
            _outcomes.setdefault(cid, {"title": title, "states": []})


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    cid = dict(report.user_properties).get("criterion")
    if cid is not None and cid in _outcomes:
        _outcomes[cid]["states"].append(report.outcome)


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        item.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_outcomes, key=lambda c: int(c[1:])):
        entry = _outcomes[cid]
        states = entry["states"]
        if not states:
            verdict = "NOT RUN"
        elif "failed" in states:
            verdict = "FAIL"
        elif all(s == "skipped" for s in states):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"{cid} {verdict:7s} {entry['title']}")
