import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="run long opt-in checks such as the exhaustive exp sweep")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="opt-in: pass --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True, scope="session")
def _isolated_tuning_cache(tmp_path_factory):
    # keep a developer's tuned settings out of the test run
    mp = pytest.MonkeyPatch()
    mp.setenv("TWOPASS_TUNING_CACHE", str(tmp_path_factory.mktemp("tuning") / "tuning.txt"))
    yield
    mp.undo()


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


# ---------------------------------------------------------------- acceptance summary

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.skipped and rep.passed):
        return
    number, title = mark.args
    details = [str(v) for k, v in item.user_properties if k == "detail"]
    if rep.skipped:
        status = "SKIP"
    elif rep.failed:
        status = "FAIL"
    elif rep.when == "call":
        status = "PASS"
    else:
        return
    entry = item.config._criteria.setdefault((number, title), [])
    entry.append((item.name, status, "; ".join(details)))


def pytest_terminal_summary(terminalreporter, config):
    crit = getattr(config, "_criteria", {})
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), runs in sorted(crit.items()):
        worst = "FAIL" if any(s == "FAIL" for _, s, _ in runs) else (
            "PASS" if any(s == "PASS" for _, s, _ in runs) else "SKIP")
        if len(runs) <= 3:
            detail = " | ".join(d for _, _, d in runs if d)
        else:
            ok = sum(s == "PASS" for _, s, _ in runs)
            detail = "; ".join([f"{ok}/{len(runs)} cases passed"] + [f"{n}: {d}" for n, s, d in runs if s == "FAIL"])
        terminalreporter.write_line(f"criterion {number} [{title}]: {worst}" + (f"  ({detail})" if detail else ""))
