import pytest

_criteria = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.stash[_criteria] = {}


@pytest.fixture
def measured(request):
    """Attach ``name=value`` measurements to the acceptance summary line."""
    def note(**kw):
        for k, v in kw.items():
            request.node.user_properties.append((k, v))
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    seen = item.config.stash[_criteria]
    failed = report.failed or (number in seen and not seen[number][1])
    if report.when == "call" or report.failed:
        seen[number] = (title, not failed, list(item.user_properties), report.duration)


def _fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def pytest_terminal_summary(terminalreporter, config):
    seen = config.stash[_criteria]
    if not seen:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(seen):
        title, ok, props, duration = seen[number]
        detail = ", ".join(f"{k}={_fmt(v)}" for k, v in props)
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
