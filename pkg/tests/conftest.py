"""Shared test fixtures."""
import pytest

import settings
from cooling_app import app as _flask_app
from cooling_state import make_reset, make_thermal_reset


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full acceptance grids, run with PPA_RUN_SLOW=1')


def pytest_collection_modifyitems(config, items):
    if settings.RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason='set PPA_RUN_SLOW=1 to run')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def app():
    _flask_app.config['TESTING'] = True
    yield _flask_app


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture
def reset_60_40():
    return make_reset([0.6, 0.4])


@pytest.fixture
def exact_reset_60_40():
    return make_reset('3/5,2/5', rational=True)


@pytest.fixture
def thermal_02():
    return make_thermal_reset(0.2)
