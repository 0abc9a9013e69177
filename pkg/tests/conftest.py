import numpy as np
import pytest

from popeig.model import make_model

# Frozen reference values, computed once by the routines under test and
# cross-checked by the independent routes in test_variance / test_spectrum.
BASE_SUPPORT = (
    (0.6015620431870401, 1.287821319976866),
    (1.9533269735991048, 4.057536575963697),
    (6.877873296553936, 14.15521312405269),
)
BASE_MARGINS = (7.087338710933945, 7.087338710933945, 7.914905721633799)
BASE_ALPHAS = (1.6425527674085205, 5.1739895618072325)
BASE_THETA = np.array(
    [
        [33.979802515597846, -2.7507502242079855, -1.2290522913898556],
        [-2.7507502242079855, 292.71063668835632, -19.959886464148127],
        [-1.2290522913898556, -19.959886464148127, 3021.1889387555375],
    ]
)


@pytest.fixture(scope="session")
def base():
    return make_model([1, 3, 10], [20, 20, 20], 600)


@pytest.fixture(scope="session")
def shifted():
    return make_model([1.01, 3.01, 10.01], [20, 20, 20], 600)


@pytest.fixture
def tiny_spec():
    from popeig.sampling import SampleSpectrum

    return SampleSpectrum(np.array([1.0, 2.0]), 2, 4)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
