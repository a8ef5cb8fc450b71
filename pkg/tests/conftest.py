import pytest

from riskcbf import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT-compile everything up front so timed tests measure algorithm
    # cost, not compilation.
    _kernels.warmup()
