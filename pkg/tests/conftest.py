import numpy as np
import pytest

from flowmatch import _slowkern

try:
    from flowmatch import _fastkern
except ImportError:  # extension not built on this interpreter
    _fastkern = None

KERNELS = [_slowkern] + ([_fastkern] if _fastkern is not None else [])


@pytest.fixture(params=KERNELS, ids=lambda m: m.NAME)
def kernels(request):
    """Each registered kernel backend, compiled and pure Python."""
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
