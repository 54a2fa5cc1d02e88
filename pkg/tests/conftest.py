import numpy as np
import pytest


def numeric_grad(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. ``arr`` (mutated in place, restored)."""
    g = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-6) -> float:
    """||a - n|| / max(||a||, ||n||).

    Returns 0 when both norms are below ``atol``: a structurally zero gradient
    is checked against finite-difference roundoff, not relatively.
    """
    a, n = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < atol:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance report ----------------------------------------------------------
# Tests marked ``@pytest.mark.acceptance(n, "title")`` get one PASS/FAIL line
# each in the terminal summary, in criterion order.

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        detail = ""
        for name, text in report.user_properties:
            if name == "detail":
                detail = text
        _ACCEPTANCE[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[number]
        line = f"[{status}] criterion {number:2d}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
