from pathlib import Path

import numpy as np
import pytest

from ebitflow.tensor import SubsystemLayout

PROJECT_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def qubits4() -> SubsystemLayout:
    return SubsystemLayout.qubits("A", "B", "C", "D")


@pytest.fixture
def project_root(monkeypatch: pytest.MonkeyPatch) -> Path:
    monkeypatch.chdir(PROJECT_ROOT)
    return PROJECT_ROOT
