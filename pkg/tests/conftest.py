import numpy as np
import pytest

from satuav.channel import NetworkStatistics, array_response
from satuav.cli import make_drop
from satuav.scenario import preset


def random_psd(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (A @ A.conj().T) / n


def deterministic_stats(uav_mu, sat_mu):
    """NetworkStatistics with R = 0 everywhere."""
    uav_mu = np.asarray(uav_mu, dtype=complex)
    sat_mu = np.asarray(sat_mu, dtype=complex)
    L, K, M = uav_mu.shape
    N = sat_mu.shape[1]
    return NetworkStatistics(uav_mu, np.zeros((L, K, M, M), complex), sat_mu, np.zeros((K, N, N), complex))


def random_stats(rng, L=3, K=2, M=2, N=3, scale=1.0):
    """Correlated Rician-like statistics with unit-order entries."""
    uav_mu = scale * (rng.standard_normal((L, K, M)) + 1j * rng.standard_normal((L, K, M))) / 2
    uav_R = np.array([[random_psd(rng, M, scale**2) for _ in range(K)] for _ in range(L)])
    sat_mu = scale * (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / 2
    sat_R = np.array([random_psd(rng, N, scale**2) for _ in range(K)])
    return NetworkStatistics(uav_mu, uav_R, sat_mu, sat_R)


@pytest.fixture(scope="session")
def desk():
    return preset("desk")


@pytest.fixture(scope="session")
def desk_drop(desk):
    return make_drop(desk, 0)


@pytest.fixture
def ula():
    return array_response


# --- acceptance reporting ----------------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    if rep.when == "call" or rep.failed:
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number} {verdict}: {title}" + (f" ({detail})" if detail else ""))
