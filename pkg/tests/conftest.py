import numpy as np
import pytest

from albama.series import TimeSeries
from albama.simulation import ScenarioSpec, generate


@pytest.fixture(scope="session")
def combined():
    return generate(ScenarioSpec("combined"))


@pytest.fixture(scope="session")
def abrupt():
    return generate(ScenarioSpec("abrupt"))


@pytest.fixture
def noisy120():
    rng = np.random.default_rng(7)
    return TimeSeries.from_values(rng.normal(size=120).cumsum() * 0.3 + rng.normal(size=120), name="rw")


def write_rows(path, rows, header="date,value"):
    path.write_text(header + "\n" + "".join(f"{d},{v}\n" for d, v in rows), encoding="utf-8")
    return path
