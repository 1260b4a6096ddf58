import warnings

import pytest

from psgld.samplers import Assumption1Warning


@pytest.fixture(autouse=True)
def _quiet_assumption_warnings():
    # experiment-parity schedules (constant, block decay) warn by design;
    # tests that assert the warning use pytest.warns explicitly
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", Assumption1Warning)
        yield
