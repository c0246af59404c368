import numpy as np
import pytest

from mfmmc.model import AffineInZ, AffineMeanField, AssetSpec, Kou, LinearMeanField, ModelSpec, PureAmplitude, UniformSymmetric


def ex51_asset(x0=1.0, a=1.0, b=0.5, c=1.0, rate=10.0):
    return AssetSpec(AffineMeanField(a, a, 0.0), AffineMeanField(b), LinearMeanField(c), UniformSymmetric(0.5, rate), x0)


def ex52_asset(x0=10.0, a=1.0, b=0.5, rate=10.0):
    return AssetSpec(AffineMeanField(0.0, a, 0.0), AffineMeanField(b), PureAmplitude(), Kou(rate=rate), x0)


def ex34_asset(x0=1.0, lambda0=1.0):
    """Pure-jump state X_t = x0 + lambda0 * (compensated sum of Kou marks)."""
    return AssetSpec(AffineMeanField(), AffineMeanField(), AffineInZ(AffineMeanField(coef_const=lambda0)), Kou(), x0)


@pytest.fixture
def ex51_model():
    return ModelSpec((ex51_asset(),))


@pytest.fixture
def ex52_model():
    return ModelSpec((ex52_asset(),))


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Collects one summary line per acceptance criterion; printed at the end of the run."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
