import warnings

import pytest

from beltflow.experiments import builtin_scenario


@pytest.fixture(autouse=True)
def _quiet_numba():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=DeprecationWarning)
        yield


_CACHE = {}


def reference_run(name, **overrides):
    """Scenario, oracle and trajectory for a built-in scenario, computed once per session."""
    key = (name, tuple(sorted(overrides.items())))
    if key not in _CACHE:
        sc = builtin_scenario(name, **overrides)
        _CACHE[key] = (sc, sc.oracle(), sc.run())
    return _CACHE[key]
