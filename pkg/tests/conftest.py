import numpy as np
import pytest

from hybrecycle import linops, problems

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    entry = _CRITERIA.setdefault(num, {"title": title, "ok": True, "ran": False, "metrics": {}})
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed or (rep.when == "setup" and rep.skipped):
        entry["ok"] = False
    metrics = getattr(item, "_criterion_metrics", None)
    if metrics:
        entry["metrics"].update(metrics)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        line = f"criterion {num:2d} {status}: {e['title']}"
        if e["metrics"]:
            line += "  [" + ", ".join(f"{k}={_fmt(v)}" for k, v in e["metrics"].items()) + "]"
        terminalreporter.write_line(line)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


@pytest.fixture
def report(request):
    """Attach named measurements to the criterion line of the running test."""
    store: dict = {}
    request.node._criterion_metrics = store

    def put(**kw):
        store.update(kw)

    return put


def dense_random(rows=50, cols=30, seed=0):
    rng = np.random.default_rng(seed)
    return linops.DenseMatrix(rng.standard_normal((rows, cols)))


def blur1d_problem(n=64, psf=2.0, level=0.002, seed=0):
    op = problems.gaussian_blur_1d(n, psf)
    return problems.make_noisy_problem(op, problems.test_signal_1d(n), level, seed)


def blur2d_problem(n=16, psf=1.5, level=0.002, seed=0):
    op = problems.gaussian_blur_2d(n, n, psf)
    return problems.make_noisy_problem(op, problems.shepp_logan(n), level, seed)


def tomo_problem(n=32, n_angles=30, level=0.002, seed=0):
    op = problems.parallel_tomo(n, np.linspace(0.0, 180.0, n_angles, endpoint=False))
    return problems.make_noisy_problem(op, problems.shepp_logan(n), level, seed)


def dense_problem(seed=0, level=0.002):
    op = dense_random(seed=seed)
    rng = np.random.default_rng(seed + 100)
    return problems.make_noisy_problem(op, rng.standard_normal(op.ncols), level, seed)


def orth(X):
    q, _ = np.linalg.qr(X)
    return q
