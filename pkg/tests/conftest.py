import numpy as np
import pytest
from hypothesis import strategies as st

from mixot.measures import MixingMeasure


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_measure(rng, k, q=1, scale=2.0, equal=False):
    atoms = rng.uniform(-scale, scale, size=(k, q))
    w = np.full(k, 1.0 / k) if equal else rng.dirichlet(np.ones(k))
    return MixingMeasure(atoms, w)


@st.composite
def measures(draw, max_k=4, q=1, scale=3.0):
    k = draw(st.integers(1, max_k))
    coords = st.floats(-scale, scale, allow_nan=False, allow_infinity=False)
    atoms = np.array(draw(st.lists(st.lists(coords, min_size=q, max_size=q),
                                   min_size=k, max_size=k)))
    raw = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k)))
    return MixingMeasure(atoms, raw / raw.sum())


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def record(request):
    """Store one acceptance line; lines are printed at the end of the run."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def put(number, ok, detail):
        store[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"

    return put


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
