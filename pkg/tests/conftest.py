import numpy as np
import pytest

from stabcert import mapdef

# prepared normalized maps, cached per session
_CACHE = {}


def prepared(name, params=None):
    key = (name, tuple(sorted((params or {}).items())))
    if key not in _CACHE:
        _CACHE[key] = mapdef.prepare(mapdef.get_map(name, params))
    return _CACHE[key]


@pytest.fixture
def prep():
    return prepared


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
