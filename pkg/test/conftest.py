import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")

def pytest_configure(config):
    config.addinivalue_line("markers", "slow: mark test as slow to run")

def pytest_collection_modifyitems(config, items):

    if config.getoption("--runslow"):
        return

    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(params=["sym", "asym", "alt"])
def dgp(request):
    """Every bivariate design of the simulation study, with a power of 1.
    """

    from apgarch.experiments import dgp_preset
    return dgp_preset(request.param, (1.0, 1.0))

@pytest.fixture(scope="session")
def alt_series():
    """A short series simulated from the (1,1) alternative design, shared by the tests
    that only need realistic returns.
    """

    from apgarch.experiments import dgp_preset
    from apgarch.model import simulate
    from apgarch.linalg import RngStream

    order, params = dgp_preset("alt", (1.0, 1.0))
    return simulate(order, params, 200, 100, RngStream(42))
