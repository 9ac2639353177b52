"""Per-criterion summary for the acceptance suite.

Tests marked ``@pytest.mark.criterion(n, title)`` are grouped by ``n``; a
criterion passes only if all of its tests pass. Tests may attach a ``note``
via ``record_property`` to explain how the criterion was exercised.
"""

_criteria = {}
_by_nodeid = {}


def pytest_collection_finish(session):
    # session.items is the list left after -k / -m deselection
    for item in session.items:
        mark = item.get_closest_marker("criterion")
        if mark:
            number, title = mark.args
            _by_nodeid[item.nodeid] = number
            _criteria.setdefault(number, {"title": title, "ok": True, "ran": False, "notes": []})


def pytest_runtest_logreport(report):
    number = _by_nodeid.get(report.nodeid)
    if number is None:
        return
    entry = _criteria[number]
    if report.when == "call" or report.failed or report.skipped:
        entry["ran"] = True
    if report.failed or report.skipped:
        entry["ok"] = False
    if report.when == "call":
        entry["notes"] += [v for k, v in report.user_properties if k == "note"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] and entry["ran"] else "FAIL"
        line = f"criterion {number:>2} {status}  {entry['title']}"
        if entry["notes"]:
            line += "  [" + "; ".join(entry["notes"]) + "]"
        terminalreporter.write_line(line)
