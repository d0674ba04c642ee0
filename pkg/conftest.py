# -*- coding: utf-8 -*-
# conftest.py - shared pytest options: long acceptance runs are opt-in

import pytest

import lied_core


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def single_fft_worker():
    lied_core.set_fft_workers(1)
    yield
