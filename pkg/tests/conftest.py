import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from minkbvp import build_step_weight, make_builtin  # noqa: E402


@pytest.fixture(scope="session")
def fig2_weight():
    return build_step_weight([1.0], [1.0, -10.0], 2.0)


@pytest.fixture(scope="session")
def exp2():
    return make_builtin("exp_power", 2)
