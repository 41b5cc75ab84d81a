import os

# allow thread-count invariance checks on small machines; set before numba loads
os.environ.setdefault("NUMBA_NUM_THREADS", "8")
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from fraudfusion import gbdt  # noqa: E402
from fraudfusion.dataset import Column, FeatureGroup, FeatureSchema, encode, from_arrays  # noqa: E402
from fraudfusion.synthgen import SynthSpec, generate  # noqa: E402

gbdt.set_threads(1)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def numeric_schema():
    return FeatureSchema((
        Column("a", FeatureGroup.SUPER_APP),
        Column("b", FeatureGroup.MOBILE),
        Column("c", FeatureGroup.BUREAU),
    ))


@pytest.fixture
def numeric_dataset(numeric_schema):
    r = np.random.default_rng(3)
    n = 2000
    y = (r.random(n) < 0.3).astype(int)
    X = r.standard_normal((n, 3)) + 0.8 * y[:, None] * np.array([1.0, 0.5, 0.0])
    return from_arrays(numeric_schema, X, y)


@pytest.fixture(scope="session")
def small_synth():
    spec = SynthSpec(
        n_rows=4000,
        train_size=2400,
        train_fraud_rate=0.1,
        test_fraud_rate=0.08,
        group_signal={"SuperApp": 0.5, "Mobile": 0.4, "Bureau": 0.4},
        noise_seed=5,
    )
    return spec, encode(generate(spec))
